//! Price and factor ingestion, and the monthly return panel consumed by
//! every downstream stage.
//!
//! Daily log returns are computed on the dates common to every series. A
//! month's return is the sum of the daily log returns dated inside that
//! calendar month.

use std::collections::BTreeSet;
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::calendar::YearMonth;
use crate::error::{Error, Result};

/// Months with fewer trading days than this are flagged as short.
pub const MIN_TRADING_DAYS: usize = 5;
/// Minimum number of calendar months shared by all input series.
pub const MIN_OVERLAP_MONTHS: usize = 24;
/// Factor values above this magnitude are more likely a unit mix-up than a
/// monthly percent return.
const FACTOR_UNIT_LIMIT: f64 = 50.0;
const MIN_RISK_FREE: f64 = -0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct PriceSeries {
    ticker: String,
    observations: Vec<(NaiveDate, f64)>,
}

impl PriceSeries {
    /// Builds a series, checking that dates strictly increase and prices are positive.
    pub fn new(ticker: impl Into<String>, observations: Vec<(NaiveDate, f64)>) -> Result<Self> {
        let ticker = ticker.into();
        for (i, &(date, price)) in observations.iter().enumerate() {
            if !(price.is_finite() && price > 0.0) {
                return Err(Error::InvalidData(format!(
                    "{ticker}: non-positive price at row {}",
                    i + 1
                )));
            }
            if i > 0 {
                let prev = observations[i - 1].0;
                if date == prev {
                    return Err(Error::InvalidData(format!(
                        "{ticker}: duplicate date {date}"
                    )));
                }
                if date < prev {
                    return Err(Error::InvalidData(format!(
                        "{ticker}: dates not increasing at {date}"
                    )));
                }
            }
        }
        Ok(PriceSeries {
            ticker,
            observations,
        })
    }

    pub fn ticker(&self) -> &str {
        &self.ticker
    }

    pub fn observations(&self) -> &[(NaiveDate, f64)] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.observations.first().map(|o| o.0)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.observations.last().map(|o| o.0)
    }

    pub fn price_on(&self, date: NaiveDate) -> Option<f64> {
        self.observations
            .binary_search_by_key(&date, |o| o.0)
            .ok()
            .map(|i| self.observations[i].1)
    }

    /// Keeps observations dated on or before `date`.
    pub fn truncated_after(&self, date: NaiveDate) -> PriceSeries {
        PriceSeries {
            ticker: self.ticker.clone(),
            observations: self
                .observations
                .iter()
                .copied()
                .filter(|o| o.0 <= date)
                .collect(),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["date", "adj_close"])
            .map_err(|e| csv_error(path, e))?;
        for (d, p) in &self.observations {
            w.write_record([d.format("%Y-%m-%d").to_string(), format!("{p:.6}")])
                .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Column mapping for price files.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceSchema {
    pub date_column: String,
    pub price_column: String,
}

impl Default for PriceSchema {
    fn default() -> Self {
        PriceSchema {
            date_column: "date".into(),
            price_column: "adj_close".into(),
        }
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::parse(path.display().to_string(), e.to_string())
}

/// Parses `YYYY-MM-DD`, optionally followed by a time component.
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    let head = match s.as_bytes().get(10) {
        Some(b'T') | Some(b' ') => &s[..10],
        _ => s,
    };
    NaiveDate::parse_from_str(head, "%Y-%m-%d").ok()
}

/// Loads one ticker's price file. The ticker is the file stem.
///
/// Row numbers in errors count data rows from 1, excluding the header.
pub fn load_price_csv(path: &Path, schema: &PriceSchema) -> Result<PriceSeries> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let ticker = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| {
            Error::parse(
                path.display().to_string(),
                "cannot derive ticker from file name",
            )
        })?
        .to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| {
                Error::parse(
                    path.display().to_string(),
                    format!("missing column {name:?}"),
                )
            })
    };
    let date_idx = column(&schema.date_column)?;
    let price_idx = column(&schema.price_column)?;

    let ctx = path.display().to_string();
    let mut observations = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| csv_error(path, e))?;
        let raw_date = record.get(date_idx).unwrap_or("");
        let date = parse_date(raw_date).ok_or_else(|| {
            Error::parse(&ctx, format!("malformed date {raw_date:?} at row {row}"))
        })?;
        let raw_price = record.get(price_idx).unwrap_or("");
        let price: f64 = raw_price.parse().map_err(|_| {
            Error::parse(
                &ctx,
                format!("unparseable price {raw_price:?} at row {row}"),
            )
        })?;
        if !(price.is_finite() && price > 0.0) {
            return Err(Error::InvalidData(format!(
                "{ticker}: non-positive price at row {row}"
            )));
        }
        observations.push((date, price));
    }
    observations.sort_by_key(|o| o.0);
    if let Some(w) = observations.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidData(format!(
            "{ticker}: duplicate date {}",
            w[0].0
        )));
    }
    PriceSeries::new(ticker, observations)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorRow {
    /// Month-end date.
    pub date: NaiveDate,
    pub mkt_minus_rf: f64,
    pub smb: f64,
    pub hml: f64,
    pub rf: f64,
}

impl FactorRow {
    pub fn month(&self) -> YearMonth {
        YearMonth::of(self.date)
    }
}

/// Monthly Fama-French three-factor rows in decimal units.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorData {
    rows: Vec<FactorRow>,
}

impl FactorData {
    pub fn new(rows: Vec<FactorRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InsufficientData("no factor rows".into()));
        }
        for w in rows.windows(2) {
            if w[1].date <= w[0].date {
                return Err(Error::InvalidData(format!(
                    "factor dates not unique and increasing at {}",
                    w[1].month()
                )));
            }
        }
        if let Some(r) = rows.iter().find(|r| r.rf < MIN_RISK_FREE) {
            return Err(Error::InvalidData(format!(
                "risk-free rate {} in {} is below the sanity bound",
                r.rf,
                r.month()
            )));
        }
        Ok(FactorData { rows })
    }

    pub fn rows(&self) -> &[FactorRow] {
        &self.rows
    }

    pub fn get(&self, month: YearMonth) -> Option<&FactorRow> {
        self.rows
            .binary_search_by_key(&month, |r| r.month())
            .ok()
            .map(|i| &self.rows[i])
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut text = String::from(
            "Synthetic factor file, monthly values in percent\n\n,Mkt-RF,SMB,HML,RF\n",
        );
        for r in &self.rows {
            let m = r.month();
            text.push_str(&format!(
                "{:04}{:02},{:.4},{:.4},{:.4},{:.4}\n",
                m.year(),
                m.month(),
                r.mkt_minus_rf * 100.0,
                r.smb * 100.0,
                r.hml * 100.0,
                r.rf * 100.0
            ));
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Loads a factor file in the public factor-library layout: free-text
/// preamble, a `,Mkt-RF,SMB,HML,RF` header, then `YYYYMM` rows in percent.
/// Reading stops at the first row that is not a monthly row (the annual
/// section in the published files).
pub fn load_factor_file(path: &Path) -> Result<FactorData> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_factor_text(&text)
}

pub fn parse_factor_text(text: &str) -> Result<FactorData> {
    let mut lines = text.lines().enumerate();
    let header_found = lines.by_ref().any(|(_, line)| is_factor_header(line));
    if !header_found {
        return Err(Error::parse(
            "factor file",
            "unrecognized header (expected Mkt-RF,SMB,HML,RF)",
        ));
    }

    let mut rows = Vec::new();
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let first = fields[0];
        if first.is_empty() && fields.len() == 1 {
            if rows.is_empty() {
                continue;
            }
            break;
        }
        if first.len() != 6 || !first.bytes().all(|b| b.is_ascii_digit()) {
            break;
        }
        let ctx = format!("factor file line {}", lineno + 1);
        if fields.len() < 5 {
            return Err(Error::parse(ctx, "expected 5 columns"));
        }
        let month = YearMonth::from_compact(first)?;
        let mut values = [0.0; 4];
        for (slot, raw) in values.iter_mut().zip(&fields[1..5]) {
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::parse(&ctx, format!("bad number {raw:?}")))?;
            if v.abs() > FACTOR_UNIT_LIMIT {
                return Err(Error::parse(
                    &ctx,
                    format!(
                        "value {v} exceeds {FACTOR_UNIT_LIMIT}: ambiguous units (expected percent)"
                    ),
                ));
            }
            *slot = v / 100.0;
        }
        rows.push(FactorRow {
            date: month.last_day(),
            mkt_minus_rf: values[0],
            smb: values[1],
            hml: values[2],
            rf: values[3],
        });
    }
    FactorData::new(rows)
}

fn is_factor_header(line: &str) -> bool {
    let cols: Vec<String> = line
        .split(',')
        .map(|c| c.trim().to_ascii_uppercase())
        .filter(|c| !c.is_empty())
        .collect();
    cols.len() >= 4 && cols[cols.len() - 4..] == ["MKT-RF", "SMB", "HML", "RF"]
}

/// One calendar month of the panel.
#[derive(Clone, Debug, PartialEq)]
pub struct MonthBlock {
    pub month: YearMonth,
    /// Row range into the daily matrix.
    pub rows: Range<usize>,
    pub risk_free: f64,
}

impl MonthBlock {
    pub fn trading_days(&self) -> usize {
        self.rows.len()
    }
}

/// Date-aligned daily log returns for the assets and the market index, with
/// the monthly risk-free rate joined by calendar month.
#[derive(Clone, Debug)]
pub struct ReturnPanel {
    dates: Vec<NaiveDate>,
    assets: Vec<String>,
    daily_log_returns: DMatrix<f64>,
    market_log_returns: Vec<f64>,
    months: Vec<MonthBlock>,
}

impl ReturnPanel {
    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    /// Dates × assets.
    pub fn daily_log_returns(&self) -> &DMatrix<f64> {
        &self.daily_log_returns
    }

    pub fn market_log_returns(&self) -> &[f64] {
        &self.market_log_returns
    }

    pub fn months(&self) -> &[MonthBlock] {
        &self.months
    }

    pub fn month_index(&self, month: YearMonth) -> Option<usize> {
        self.months.binary_search_by_key(&month, |b| b.month).ok()
    }

    pub fn short_months(&self) -> Vec<YearMonth> {
        self.months
            .iter()
            .filter(|b| b.trading_days() < MIN_TRADING_DAYS)
            .map(|b| b.month)
            .collect()
    }

    /// Daily returns (rows) of month `idx`.
    pub fn month_daily_returns(&self, idx: usize) -> DMatrix<f64> {
        let rows = &self.months[idx].rows;
        self.daily_log_returns
            .rows(rows.start, rows.len())
            .into_owned()
    }

    /// Daily returns for the months in `range`, stacked.
    pub fn daily_returns_for_months(&self, range: Range<usize>) -> DMatrix<f64> {
        if range.is_empty() {
            return DMatrix::zeros(0, self.n_assets());
        }
        let start = self.months[range.start].rows.start;
        let end = self.months[range.end - 1].rows.end;
        self.daily_log_returns.rows(start, end - start).into_owned()
    }

    pub fn monthly_market_returns(&self) -> Vec<f64> {
        self.months
            .iter()
            .map(|b| self.market_log_returns[b.rows.clone()].iter().sum())
            .collect()
    }

    /// Months × assets.
    pub fn monthly_asset_returns(&self) -> DMatrix<f64> {
        let n = self.n_assets();
        DMatrix::from_fn(self.months.len(), n, |m, j| {
            self.daily_log_returns
                .view(
                    (self.months[m].rows.start, j),
                    (self.months[m].rows.len(), 1),
                )
                .sum()
        })
    }

    pub fn monthly_risk_free(&self) -> Vec<f64> {
        self.months.iter().map(|b| b.risk_free).collect()
    }
}

/// Aligns the asset and market series on their common dates and builds the
/// panel. Within the span covered by every series, a date present in one
/// series must be present in all of them.
pub fn to_monthly_panel(
    series: &[PriceSeries],
    market: &PriceSeries,
    factors: &FactorData,
) -> Result<ReturnPanel> {
    if series.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 assets, got {}",
            series.len()
        )));
    }
    let all: Vec<&PriceSeries> = series.iter().chain(std::iter::once(market)).collect();
    if let Some(empty) = all.iter().find(|s| s.is_empty()) {
        return Err(Error::InsufficientData(format!(
            "{} has no observations",
            empty.ticker()
        )));
    }
    let start = all
        .iter()
        .filter_map(|s| s.first_date())
        .max()
        .expect("nonempty");
    let end = all
        .iter()
        .filter_map(|s| s.last_date())
        .min()
        .expect("nonempty");
    if start >= end {
        return Err(Error::InsufficientData("series do not overlap".into()));
    }

    let common: BTreeSet<NaiveDate> = all
        .iter()
        .flat_map(|s| s.observations().iter().map(|o| o.0))
        .filter(|d| *d >= start && *d <= end)
        .collect();
    let common: Vec<NaiveDate> = common.into_iter().collect();

    let mut aligned: Vec<Vec<f64>> = Vec::with_capacity(all.len());
    for s in &all {
        let mut prices = Vec::with_capacity(common.len());
        for &d in &common {
            match s.price_on(d) {
                Some(p) => prices.push(p),
                None => {
                    return Err(Error::Alignment(format!(
                        "{} is missing date {d}",
                        s.ticker()
                    )));
                }
            }
        }
        aligned.push(prices);
    }

    let n_days = common.len() - 1;
    let n_assets = series.len();
    let dates: Vec<NaiveDate> = common[1..].to_vec();
    let log_ret = |prices: &[f64], t: usize| (prices[t + 1] / prices[t]).ln();
    let daily = DMatrix::from_fn(n_days, n_assets, |t, j| log_ret(&aligned[j], t));
    let market_returns: Vec<f64> = (0..n_days)
        .map(|t| log_ret(&aligned[n_assets], t))
        .collect();

    let mut months: Vec<MonthBlock> = Vec::new();
    for (i, &d) in dates.iter().enumerate() {
        let m = YearMonth::of(d);
        match months.last_mut() {
            Some(b) if b.month == m => b.rows.end = i + 1,
            _ => months.push(MonthBlock {
                month: m,
                rows: i..i + 1,
                risk_free: 0.0,
            }),
        }
    }
    if months.len() < MIN_OVERLAP_MONTHS {
        return Err(Error::InsufficientData(format!(
            "overlapping coverage is {} months, need at least {MIN_OVERLAP_MONTHS}",
            months.len()
        )));
    }
    for b in &mut months {
        b.risk_free = factors
            .get(b.month)
            .ok_or_else(|| Error::Alignment(format!("no risk-free rate for {}", b.month)))?
            .rf;
        if b.trading_days() < MIN_TRADING_DAYS {
            warn!("{} has only {} trading days", b.month, b.trading_days());
        }
    }

    Ok(ReturnPanel {
        dates,
        assets: series.iter().map(|s| s.ticker().to_string()).collect(),
        daily_log_returns: daily,
        market_log_returns: market_returns,
        months,
    })
}
