//! Monthly feature sets and direction labels.
//!
//! Every feature row is dated by the month it is used to forecast and holds
//! information from the month before it.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::calendar::YearMonth;
use crate::error::{Error, Result};
use crate::frontier;
use crate::market_data::{FactorData, PriceSeries, ReturnPanel, MIN_TRADING_DAYS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    EfCoefs,
    Technical,
    FamaFrench,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 3] = [
        FeatureSet::EfCoefs,
        FeatureSet::Technical,
        FeatureSet::FamaFrench,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::EfCoefs => "ef_coefs",
            FeatureSet::Technical => "technical",
            FeatureSet::FamaFrench => "fama_french",
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ef_coefs" => Ok(FeatureSet::EfCoefs),
            "technical" => Ok(FeatureSet::Technical),
            "fama_french" => Ok(FeatureSet::FamaFrench),
            other => Err(Error::Config(format!(
                "unknown feature set {other:?} (expected ef_coefs, technical or fama_french)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub dates: Vec<YearMonth>,
    pub feature_names: Vec<String>,
    /// One row per date.
    pub values: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    fn empty(names: &[&str]) -> Self {
        FeatureMatrix {
            dates: Vec::new(),
            feature_names: names.iter().map(|s| s.to_string()).collect(),
            values: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn row_for(&self, month: YearMonth) -> Option<&[f64]> {
        self.dates
            .binary_search(&month)
            .ok()
            .map(|i| self.values[i].as_slice())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let err = |e: csv::Error| Error::parse(path.display().to_string(), e.to_string());
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        let mut header = vec!["date".to_string()];
        header.extend(self.feature_names.iter().cloned());
        w.write_record(&header).map_err(err)?;
        for (d, row) in self.dates.iter().zip(&self.values) {
            let mut rec = vec![d.to_string()];
            rec.extend(row.iter().map(|v| format!("{v:.12e}")));
            w.write_record(&rec).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Market direction per month: up iff the monthly market log return is
/// strictly positive. `magnitude` is the absolute return, used as the
/// sample weight.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelSeries {
    pub dates: Vec<YearMonth>,
    pub up: Vec<bool>,
    pub magnitude: Vec<f64>,
}

impl LabelSeries {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

/// Labels for every panel month that has at least [`MIN_TRADING_DAYS`] sessions.
pub fn build_labels(panel: &ReturnPanel) -> LabelSeries {
    let monthly = panel.monthly_market_returns();
    let mut labels = LabelSeries {
        dates: Vec::new(),
        up: Vec::new(),
        magnitude: Vec::new(),
    };
    for (block, r) in panel.months().iter().zip(monthly) {
        if block.trading_days() < MIN_TRADING_DAYS {
            continue;
        }
        labels.dates.push(block.month);
        labels.up.push(r > 0.0);
        labels.magnitude.push(r.abs());
    }
    labels
}

pub const EF_FEATURES: [&str; 3] = ["r_mvp", "sigma_mvp", "u"];

/// One-month-lagged interpretable frontier coefficients, with labels.
pub fn build_ef_features(panel: &ReturnPanel) -> Result<(FeatureMatrix, LabelSeries)> {
    let months = panel.months();
    if months.len() < 2 {
        return Err(Error::InsufficientData("need at least 2 months".into()));
    }
    let mut features = FeatureMatrix::empty(&EF_FEATURES);
    for t in 1..months.len() {
        let (prev, cur) = (&months[t - 1], &months[t]);
        if prev.trading_days() < MIN_TRADING_DAYS || cur.trading_days() < MIN_TRADING_DAYS {
            warn!("skipping feature row for {}: short month", cur.month);
            continue;
        }
        let coefs = frontier::month_coefficients(panel, t - 1)?;
        features.dates.push(cur.month);
        features
            .values
            .push(coefs.interpretable.as_array().to_vec());
    }
    let labels = build_labels(panel);
    Ok(align(&features, &labels))
}

pub const TECHNICAL_FEATURES: [&str; 5] = ["stoch_k", "momentum", "rsi", "ad_oscillator", "cci"];
pub const STOCH_K_PERIOD: usize = 14;
pub const MOMENTUM_PERIOD: usize = 10;
pub const RSI_PERIOD: usize = 14;
pub const CCI_PERIOD: usize = 20;

/// Monthly bar built from daily closes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonthlyBar {
    pub month: YearMonth,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

pub fn monthly_bars(prices: &PriceSeries) -> Vec<MonthlyBar> {
    let mut bars: Vec<MonthlyBar> = Vec::new();
    for &(date, p) in prices.observations() {
        let m = YearMonth::of(date);
        match bars.last_mut() {
            Some(b) if b.month == m => {
                b.high = b.high.max(p);
                b.low = b.low.min(p);
                b.close = p;
            }
            _ => bars.push(MonthlyBar {
                month: m,
                high: p,
                low: p,
                close: p,
            }),
        }
    }
    bars
}

/// Stochastic %K over the last `period` bars ending at `i`.
pub fn stochastic_k(bars: &[MonthlyBar], i: usize, period: usize) -> f64 {
    let window = &bars[i + 1 - period..=i];
    let hh = window
        .iter()
        .map(|b| b.high)
        .fold(f64::NEG_INFINITY, f64::max);
    let ll = window.iter().map(|b| b.low).fold(f64::INFINITY, f64::min);
    if hh == ll {
        return 50.0;
    }
    100.0 * (bars[i].close - ll) / (hh - ll)
}

pub fn momentum(bars: &[MonthlyBar], i: usize, period: usize) -> f64 {
    bars[i].close - bars[i - period].close
}

/// RSI from simple averages of the last `period` close-to-close changes.
pub fn rsi(bars: &[MonthlyBar], i: usize, period: usize) -> f64 {
    let (mut gain, mut loss) = (0.0, 0.0);
    for k in i + 1 - period..=i {
        let change = bars[k].close - bars[k - 1].close;
        if change > 0.0 {
            gain += change;
        } else {
            loss -= change;
        }
    }
    if loss == 0.0 {
        return if gain == 0.0 { 50.0 } else { 100.0 };
    }
    100.0 - 100.0 / (1.0 + gain / loss)
}

/// `(H_t - C_{t-1}) / (H_t - L_t)`.
pub fn ad_oscillator(bars: &[MonthlyBar], i: usize) -> f64 {
    let b = bars[i];
    if b.high == b.low {
        return 0.5;
    }
    (b.high - bars[i - 1].close) / (b.high - b.low)
}

pub fn cci(bars: &[MonthlyBar], i: usize, period: usize) -> f64 {
    let typical = |b: &MonthlyBar| (b.high + b.low + b.close) / 3.0;
    let window = &bars[i + 1 - period..=i];
    let sma = window.iter().map(typical).sum::<f64>() / period as f64;
    let mad = window.iter().map(|b| (typical(b) - sma).abs()).sum::<f64>() / period as f64;
    if mad == 0.0 {
        return 0.0;
    }
    (typical(&bars[i]) - sma) / (0.015 * mad)
}

/// Index of the first bar with full lookback for every indicator.
pub fn technical_warmup() -> usize {
    (STOCH_K_PERIOD - 1)
        .max(MOMENTUM_PERIOD)
        .max(RSI_PERIOD)
        .max(CCI_PERIOD - 1)
        .max(1)
}

/// Indicator values on monthly index bars, each lagged one month. Rows
/// without enough lookback are dropped from the front.
pub fn build_technical_features(
    panel: &ReturnPanel,
    market_prices: &PriceSeries,
) -> Result<FeatureMatrix> {
    let last = panel
        .months()
        .last()
        .ok_or_else(|| Error::InsufficientData("empty panel".into()))?
        .month;
    let bars: Vec<MonthlyBar> = monthly_bars(market_prices)
        .into_iter()
        .filter(|b| b.month <= last)
        .collect();
    let mut features = FeatureMatrix::empty(&TECHNICAL_FEATURES);
    let warmup = technical_warmup();
    for i in warmup..bars.len() {
        let target = bars[i].month.next();
        if panel.month_index(target).is_none() {
            continue;
        }
        features.dates.push(target);
        features.values.push(vec![
            stochastic_k(&bars, i, STOCH_K_PERIOD),
            momentum(&bars, i, MOMENTUM_PERIOD),
            rsi(&bars, i, RSI_PERIOD),
            ad_oscillator(&bars, i),
            cci(&bars, i, CCI_PERIOD),
        ]);
    }
    if features.is_empty() {
        return Err(Error::InsufficientData(format!(
            "technical indicators need more than {warmup} months of index history"
        )));
    }
    Ok(features)
}

pub const FF_FEATURES: [&str; 3] = ["mkt_minus_rf", "smb", "hml"];

/// Previous month's (Mkt-RF, SMB, HML) for every factor month after the first.
pub fn build_ff_features(factors: &FactorData) -> Result<FeatureMatrix> {
    let rows = factors.rows();
    let mut features = FeatureMatrix::empty(&FF_FEATURES);
    for w in rows.windows(2) {
        let expected = w[0].month().next();
        if w[1].month() != expected {
            return Err(Error::InvalidData(format!(
                "factor data gap: missing {expected}"
            )));
        }
        features.dates.push(w[1].month());
        features
            .values
            .push(vec![w[0].mkt_minus_rf, w[0].smb, w[0].hml]);
    }
    Ok(features)
}

/// Restricts features and labels to their common months.
pub fn align(features: &FeatureMatrix, labels: &LabelSeries) -> (FeatureMatrix, LabelSeries) {
    let mut x = FeatureMatrix {
        dates: Vec::new(),
        feature_names: features.feature_names.clone(),
        values: Vec::new(),
    };
    let mut y = LabelSeries {
        dates: Vec::new(),
        up: Vec::new(),
        magnitude: Vec::new(),
    };
    for (i, month) in labels.dates.iter().enumerate() {
        if let Some(row) = features.row_for(*month) {
            x.dates.push(*month);
            x.values.push(row.to_vec());
            y.dates.push(*month);
            y.up.push(labels.up[i]);
            y.magnitude.push(labels.magnitude[i]);
        }
    }
    (x, y)
}

/// Builds the selected feature set aligned with the panel's labels.
pub fn build_feature_set(
    set: FeatureSet,
    panel: &ReturnPanel,
    market_prices: &PriceSeries,
    factors: &FactorData,
) -> Result<(FeatureMatrix, LabelSeries)> {
    match set {
        FeatureSet::EfCoefs => build_ef_features(panel),
        FeatureSet::Technical => {
            let x = build_technical_features(panel, market_prices)?;
            Ok(align(&x, &build_labels(panel)))
        }
        FeatureSet::FamaFrench => {
            let x = build_ff_features(factors)?;
            let labels = build_labels(panel);
            if let Some(missing) = labels.dates[1..].iter().find(|m| x.row_for(**m).is_none()) {
                return Err(Error::InsufficientData(format!(
                    "no factor features for {missing}"
                )));
            }
            Ok(align(&x, &labels))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::FactorRow;

    fn bars_from_closes(closes: &[f64]) -> Vec<MonthlyBar> {
        let mut m = YearMonth::new(2000, 1).unwrap();
        closes
            .iter()
            .map(|&c| {
                let b = MonthlyBar {
                    month: m,
                    high: c,
                    low: c,
                    close: c,
                };
                m = m.next();
                b
            })
            .collect()
    }

    #[test]
    fn rising_prices_saturate_rsi_and_k() {
        let closes: Vec<f64> = (0..20).map(|i| 100.0 + i as f64).collect();
        let bars = bars_from_closes(&closes);
        assert_eq!(rsi(&bars, 19, RSI_PERIOD), 100.0);
        assert_eq!(stochastic_k(&bars, 19, STOCH_K_PERIOD), 100.0);
        assert_eq!(momentum(&bars, 19, MOMENTUM_PERIOD), 10.0);
    }

    #[test]
    fn flat_prices_have_neutral_values() {
        let bars = bars_from_closes(&[5.0; 25]);
        assert_eq!(rsi(&bars, 24, RSI_PERIOD), 50.0);
        assert_eq!(stochastic_k(&bars, 24, STOCH_K_PERIOD), 50.0);
        assert_eq!(cci(&bars, 24, CCI_PERIOD), 0.0);
    }

    fn factor_rows(months: &[(i32, u32)]) -> FactorData {
        FactorData::new(
            months
                .iter()
                .enumerate()
                .map(|(i, &(y, m))| FactorRow {
                    date: YearMonth::new(y, m).unwrap().last_day(),
                    mkt_minus_rf: i as f64 * 0.01,
                    smb: 0.002,
                    hml: -0.003,
                    rf: 0.001,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn ff_features_are_lagged() {
        let f = factor_rows(&[(2008, 1), (2008, 2), (2008, 3)]);
        let x = build_ff_features(&f).unwrap();
        assert_eq!(x.n_features(), 3);
        assert_eq!(x.dates[0], YearMonth::new(2008, 2).unwrap());
        assert_eq!(x.values[0], vec![0.0, 0.002, -0.003]);
        assert_eq!(x.values[1][0], 0.01);
    }

    #[test]
    fn ff_gap_names_month() {
        let f = factor_rows(&[(2008, 1), (2008, 2), (2008, 4)]);
        let err = build_ff_features(&f).unwrap_err();
        assert!(err.to_string().contains("2008-03"), "{err}");
    }

    #[test]
    fn feature_set_names_round_trip() {
        for s in FeatureSet::ALL {
            assert_eq!(s.as_str().parse::<FeatureSet>().unwrap(), s);
        }
        assert!("macro".parse::<FeatureSet>().is_err());
    }
}
