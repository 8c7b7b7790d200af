//! Monthly walk-forward simulation.
//!
//! For each out-of-sample month `t` the strategy forecasts market direction
//! from the feature row of `t` with a tree trained on months before `t`,
//! turns the forecast into conditional expected returns, and holds the
//! capped tangency portfolio through `t`. Every estimate uses data dated
//! before `t` only.

use std::ops::Range;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::calendar::YearMonth;
use crate::cart::{Forecast, OnlineCart, OnlineSettings};
use crate::error::{Error, Result};
use crate::features::{build_feature_set, FeatureMatrix, FeatureSet, LabelSeries};
use crate::market_data::{
    to_monthly_panel, FactorData, PriceSeries, ReturnPanel, MIN_OVERLAP_MONTHS, MIN_TRADING_DAYS,
};
use crate::metrics::{self, AlphaRegression, ClassificationReport, PortfolioMetrics};
use crate::optimizer::{tangency, OptimizationProblem, DEFAULT_GROSS_CAP};
use crate::returns_model::{conditional_estimate, ConditionalReturnEstimate, EstimateInputs};
use crate::stats;

/// Window for the benchmark tangency portfolio's expected returns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanWindow {
    /// Mean monthly return over every month before the rebalance, the same
    /// window the strategy's CAPM fits use.
    Expanding,
    /// Mean daily return over the covariance window, scaled to a month.
    Trailing,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BacktestConfig {
    /// Last month of the initial training period.
    pub in_sample_end: YearMonth,
    /// Last out-of-sample month; `None` runs to the end of the data.
    pub end: Option<YearMonth>,
    pub fee_rate: f64,
    pub gross_cap: Option<f64>,
    /// Apply the gross cap to the benchmark tangency portfolio as well.
    pub cap_benchmarks: bool,
    pub feature_set: FeatureSet,
    /// Trailing months of daily returns for the covariance matrix.
    pub covariance_months: usize,
    /// Scale from daily to monthly covariance.
    pub trading_days_per_month: f64,
    /// Feed the 0/1 direction instead of the tree's probability.
    pub discretize: bool,
    pub benchmark_means: MeanWindow,
    pub online: OnlineSettings,
    /// Replaces the tree forecast with a constant probability.
    pub fixed_probability: Option<f64>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            in_sample_end: YearMonth::new(2007, 12).expect("valid month"),
            end: None,
            fee_rate: 0.01,
            gross_cap: Some(DEFAULT_GROSS_CAP),
            cap_benchmarks: true,
            feature_set: FeatureSet::EfCoefs,
            covariance_months: 12,
            trading_days_per_month: 21.0,
            discretize: true,
            benchmark_means: MeanWindow::Expanding,
            online: OnlineSettings::default(),
            fixed_probability: None,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.fee_rate) {
            return Err(Error::Config(format!(
                "fee_rate must be in [0, 1), got {}",
                self.fee_rate
            )));
        }
        if let Some(cap) = self.gross_cap {
            if !(cap >= 1.0) {
                return Err(Error::Config(format!("gross_cap must be >= 1, got {cap}")));
            }
        }
        if self.covariance_months < 2 {
            return Err(Error::Config("covariance_months must be at least 2".into()));
        }
        if !(self.trading_days_per_month > 0.0) {
            return Err(Error::Config(
                "trading_days_per_month must be positive".into(),
            ));
        }
        if let Some(p) = self.fixed_probability {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!(
                    "fixed_probability must be in [0, 1], got {p}"
                )));
            }
        }
        if self.end.is_some_and(|e| e <= self.in_sample_end) {
            return Err(Error::Config("end must come after in_sample_end".into()));
        }
        Ok(())
    }
}

/// Loaded inputs for a run.
#[derive(Clone, Debug)]
pub struct MarketData {
    pub assets: Vec<PriceSeries>,
    pub market: PriceSeries,
    pub factors: FactorData,
}

impl MarketData {
    pub fn panel(&self) -> Result<ReturnPanel> {
        to_monthly_panel(&self.assets, &self.market, &self.factors)
    }

    pub fn features(
        &self,
        panel: &ReturnPanel,
        set: FeatureSet,
    ) -> Result<(FeatureMatrix, LabelSeries)> {
        build_feature_set(set, panel, &self.market, &self.factors)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ForecastRecord {
    pub month: YearMonth,
    pub p_up: f64,
    pub up: bool,
    /// Depth of the tree that produced the forecast.
    pub depth: Option<usize>,
    pub realized_up: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PortfolioMonth {
    pub month: YearMonth,
    /// Target weights held through the month.
    pub weights: Vec<f64>,
    pub fee: f64,
    /// Simple return before fees.
    pub gross_return: f64,
    /// Monthly log return net of fees.
    pub log_return: f64,
    pub equity: f64,
    /// The optimizer failed and the previous weights were kept.
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PortfolioPath {
    pub name: String,
    pub months: Vec<PortfolioMonth>,
}

impl PortfolioPath {
    fn new(name: &str) -> Self {
        PortfolioPath {
            name: name.to_string(),
            months: Vec::new(),
        }
    }

    pub fn log_returns(&self) -> Vec<f64> {
        self.months.iter().map(|m| m.log_return).collect()
    }

    pub fn equity(&self) -> Vec<f64> {
        self.months.iter().map(|m| m.equity).collect()
    }

    pub fn fallbacks(&self) -> usize {
        self.months.iter().filter(|m| m.fallback).count()
    }

    fn last_weights(&self) -> Option<&[f64]> {
        self.months.last().map(|m| m.weights.as_slice())
    }

    /// Holds `weights` through `month`, paying the turnover fee against the
    /// previous target (zero before the first month).
    fn step(
        &mut self,
        month: YearMonth,
        weights: Vec<f64>,
        asset_simple: &[f64],
        fee_rate: f64,
        fallback: bool,
    ) -> Result<()> {
        let prev = self
            .last_weights()
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; weights.len()]);
        let fee = metrics::apply_fees(&prev, &weights, fee_rate)?;
        let gross: f64 = weights.iter().zip(asset_simple).map(|(w, r)| w * r).sum();
        self.record(month, weights, fee, gross, fallback)
    }

    fn record(
        &mut self,
        month: YearMonth,
        weights: Vec<f64>,
        fee: f64,
        gross: f64,
        fallback: bool,
    ) -> Result<()> {
        let growth = (1.0 + gross) * (1.0 - fee);
        if !(growth > 0.0) {
            return Err(Error::InvalidData(format!(
                "{} equity is wiped out in {month} (gross return {gross:.4})",
                self.name
            )));
        }
        let equity = self.months.last().map_or(1.0, |m| m.equity) * growth;
        self.months.push(PortfolioMonth {
            month,
            weights,
            fee,
            gross_return: gross,
            log_return: growth.ln(),
            equity,
            fallback,
        });
        Ok(())
    }
}

pub const STRATEGY: &str = "cart_tangency";
pub const BENCH_TANGENCY: &str = "monthly_tangency";
pub const BENCH_EQUAL: &str = "equal_weight";
pub const BENCH_MARKET: &str = "market";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BacktestResult {
    pub assets: Vec<String>,
    pub months: Vec<YearMonth>,
    /// Realized monthly risk-free rate of each out-of-sample month.
    pub risk_free: Vec<f64>,
    pub forecasts: Vec<ForecastRecord>,
    pub estimates: Vec<ConditionalReturnEstimate>,
    pub strategy: PortfolioPath,
    /// Monthly tangency, equal weight and market buy-and-hold.
    pub benchmarks: Vec<PortfolioPath>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NamedMetrics {
    pub portfolio: String,
    #[serde(flatten)]
    pub metrics: PortfolioMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NamedAlpha {
    pub benchmark: String,
    #[serde(flatten)]
    pub regression: AlphaRegression,
}

impl BacktestResult {
    pub fn paths(&self) -> impl Iterator<Item = &PortfolioPath> {
        std::iter::once(&self.strategy).chain(&self.benchmarks)
    }

    pub fn path(&self, name: &str) -> Option<&PortfolioPath> {
        self.paths().find(|p| p.name == name)
    }

    pub fn classification(&self) -> Result<ClassificationReport> {
        let f: Vec<bool> = self.forecasts.iter().map(|r| r.up).collect();
        let o: Vec<bool> = self.forecasts.iter().map(|r| r.realized_up).collect();
        metrics::classification_report(&f, &o)
    }

    pub fn portfolio_metrics(&self) -> Result<Vec<NamedMetrics>> {
        self.paths()
            .map(|p| {
                Ok(NamedMetrics {
                    portfolio: p.name.clone(),
                    metrics: metrics::portfolio_metrics(&p.log_returns(), &self.risk_free)?,
                })
            })
            .collect()
    }

    /// Strategy alpha against each benchmark.
    pub fn alphas(&self) -> Result<Vec<NamedAlpha>> {
        let s = self.strategy.log_returns();
        self.benchmarks
            .iter()
            .map(|b| {
                Ok(NamedAlpha {
                    benchmark: b.name.clone(),
                    regression: metrics::alpha_regression(&s, &b.log_returns(), &self.risk_free)?,
                })
            })
            .collect()
    }
}

/// First panel month with enough sessions to count as a full month.
fn first_full_month(panel: &ReturnPanel) -> usize {
    panel
        .months()
        .iter()
        .position(|b| b.trading_days() >= MIN_TRADING_DAYS)
        .unwrap_or(0)
}

/// Out-of-sample months: feature rows after `in_sample_end` up to `end`,
/// which must be consecutive.
fn oos_months(x: &FeatureMatrix, config: &BacktestConfig) -> Result<Vec<YearMonth>> {
    let months: Vec<YearMonth> = x
        .dates
        .iter()
        .copied()
        .filter(|m| *m > config.in_sample_end && config.end.is_none_or(|e| *m <= e))
        .collect();
    let Some(&first) = months.first() else {
        return Err(Error::InsufficientData(format!(
            "no out-of-sample months after {}",
            config.in_sample_end
        )));
    };
    if first != config.in_sample_end.next() {
        return Err(Error::Alignment(format!(
            "no features for {}, the first out-of-sample month",
            config.in_sample_end.next()
        )));
    }
    for w in months.windows(2) {
        if w[1] != w[0].next() {
            return Err(Error::Alignment(format!("no features for {}", w[0].next())));
        }
    }
    Ok(months)
}

/// Online forecasts for consecutive `months`: before each month the tree is
/// retrained from scratch on every labelled row dated earlier.
pub fn forecast_path(
    x: &FeatureMatrix,
    y: &LabelSeries,
    settings: &OnlineSettings,
    months: &[YearMonth],
) -> Result<Vec<ForecastRecord>> {
    if x.dates != y.dates {
        return Err(Error::Alignment(
            "features and labels cover different months".into(),
        ));
    }
    let Some(&first) = months.first() else {
        return Ok(Vec::new());
    };
    let mut cart = OnlineCart::new(x.feature_names.clone(), settings.clone());
    let n_warm = x.dates.partition_point(|m| *m < first);
    for i in 0..n_warm {
        cart.push(x.dates[i], &x.values[i], y.up[i], y.magnitude[i])?;
    }
    cart.retrain()?;
    let mut out = Vec::with_capacity(months.len());
    for (k, &month) in months.iter().enumerate() {
        let i = x
            .dates
            .binary_search(&month)
            .map_err(|_| Error::Alignment(format!("no features for {month}")))?;
        if i != n_warm + k {
            return Err(Error::Alignment(format!(
                "out-of-sample months are not consecutive at {month}"
            )));
        }
        let f = cart.forecast(month, &x.values[i])?;
        out.push(ForecastRecord {
            month,
            p_up: f.p_up,
            up: f.up,
            depth: cart.model().map(|m| m.hyperparams.max_depth),
            realized_up: y.up[i],
        });
        if k + 1 < months.len() {
            cart.push(month, &x.values[i], y.up[i], y.magnitude[i])?;
            cart.retrain()?;
        }
    }
    Ok(out)
}

fn scaled_covariance(panel: &ReturnPanel, range: Range<usize>, scale: f64) -> DMatrix<f64> {
    stats::sample_covariance(&panel.daily_returns_for_months(range)) * scale
}

fn solve_or_carry(
    problem: &OptimizationProblem,
    path: &PortfolioPath,
    n: usize,
    month: YearMonth,
) -> (Vec<f64>, bool) {
    match tangency(problem) {
        Ok(w) => (w.weights, false),
        Err(e) => {
            warn!(
                "{}: optimizer failed in {month}, keeping previous weights: {e}",
                path.name
            );
            let w = path
                .last_weights()
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![1.0 / n as f64; n]);
            (w, true)
        }
    }
}

/// Runs the strategy and its benchmarks over the out-of-sample months.
pub fn run_walkforward(
    panel: &ReturnPanel,
    x: &FeatureMatrix,
    y: &LabelSeries,
    config: &BacktestConfig,
) -> Result<BacktestResult> {
    config.validate()?;
    let months = oos_months(x, config)?;
    let first_full = first_full_month(panel);
    let first_oos = panel
        .month_index(months[0])
        .ok_or_else(|| Error::Alignment(format!("{} is not in the return panel", months[0])))?;
    if first_oos - first_full < MIN_OVERLAP_MONTHS {
        return Err(Error::InsufficientData(format!(
            "in-sample period has {} months, need at least {MIN_OVERLAP_MONTHS}",
            first_oos - first_full
        )));
    }

    let records: Vec<ForecastRecord> = match config.fixed_probability {
        Some(p) => months
            .iter()
            .map(|m| {
                let f = Forecast::from_probability(Some(*m), p);
                ForecastRecord {
                    month: *m,
                    p_up: f.p_up,
                    up: f.up,
                    depth: None,
                    realized_up: y.dates.binary_search(m).is_ok_and(|i| y.up[i]),
                }
            })
            .collect(),
        None => forecast_path(x, y, &config.online, &months)?,
    };
    let forecasts: Vec<Forecast> = records
        .iter()
        .map(|r| Forecast::from_probability(Some(r.month), r.p_up))
        .collect();

    let assets = panel.assets().to_vec();
    let n = assets.len();
    let monthly_assets = panel.monthly_asset_returns();
    let monthly_market = panel.monthly_market_returns();
    let monthly_rf = panel.monthly_risk_free();
    let asset_cols: Vec<Vec<f64>> = (0..n)
        .map(|j| monthly_assets.column(j).iter().copied().collect())
        .collect();
    let bench_cap = if config.cap_benchmarks {
        config.gross_cap
    } else {
        None
    };

    let mut strategy = PortfolioPath::new(STRATEGY);
    let mut bench_tan = PortfolioPath::new(BENCH_TANGENCY);
    let mut bench_eq = PortfolioPath::new(BENCH_EQUAL);
    let mut bench_mkt = PortfolioPath::new(BENCH_MARKET);
    let mut estimates = Vec::with_capacity(months.len());
    let mut risk_free = Vec::with_capacity(months.len());

    for (k, (&month, forecast)) in months.iter().zip(&forecasts).enumerate() {
        let t = first_oos + k;
        if panel.months().get(t).map(|b| b.month) != Some(month) {
            return Err(Error::Alignment(format!(
                "{month} is not in the return panel"
            )));
        }
        let fit = first_full..t;
        let windows: Vec<Vec<f64>> = asset_cols.iter().map(|c| c[fit.clone()].to_vec()).collect();
        let estimate = conditional_estimate(&EstimateInputs {
            month,
            forecast: *forecast,
            assets: &assets,
            asset_returns: &windows,
            market_returns: &monthly_market[fit.clone()],
            risk_free: &monthly_rf[fit.clone()],
            current_risk_free: monthly_rf[t - 1],
            discretize: config.discretize,
        })?;

        let cov_window = t.saturating_sub(config.covariance_months).max(first_full)..t;
        let cov = scaled_covariance(panel, cov_window.clone(), config.trading_days_per_month);
        let rf_now = monthly_rf[t - 1];
        let simple: Vec<f64> = (0..n).map(|j| monthly_assets[(t, j)].exp() - 1.0).collect();

        let problem = OptimizationProblem::new(
            DVector::from_vec(estimate.expected_returns()),
            cov.clone(),
            rf_now,
        )
        .with_cap(config.gross_cap);
        let (w, fb) = solve_or_carry(&problem, &strategy, n, month);
        strategy.step(month, w, &simple, config.fee_rate, fb)?;

        let bench_means: Vec<f64> = match config.benchmark_means {
            MeanWindow::Expanding => windows.iter().map(|c| stats::mean(c)).collect(),
            MeanWindow::Trailing => {
                stats::column_means(&panel.daily_returns_for_months(cov_window))
                    .into_iter()
                    .map(|m| m * config.trading_days_per_month)
                    .collect()
            }
        };
        let problem = OptimizationProblem::new(DVector::from_vec(bench_means), cov, rf_now)
            .with_cap(bench_cap);
        let (w, fb) = solve_or_carry(&problem, &bench_tan, n, month);
        bench_tan.step(month, w, &simple, config.fee_rate, fb)?;

        bench_eq.step(
            month,
            vec![1.0 / n as f64; n],
            &simple,
            config.fee_rate,
            false,
        )?;
        bench_mkt.record(month, Vec::new(), 0.0, monthly_market[t].exp() - 1.0, false)?;

        estimates.push(estimate);
        risk_free.push(monthly_rf[t]);
    }

    Ok(BacktestResult {
        assets,
        months,
        risk_free,
        forecasts: records,
        estimates,
        strategy,
        benchmarks: vec![bench_tan, bench_eq, bench_mkt],
    })
}

/// Builds the panel and the configured feature set, then runs the backtest.
pub fn run_backtest(data: &MarketData, config: &BacktestConfig) -> Result<BacktestResult> {
    let panel = data.panel()?;
    let (x, y) = data.features(&panel, config.feature_set)?;
    run_walkforward(&panel, &x, &y, config)
}

/// Classification quality of the online tree for one feature set over the
/// configured out-of-sample months.
pub fn forecast_evaluation(
    data: &MarketData,
    panel: &ReturnPanel,
    set: FeatureSet,
    config: &BacktestConfig,
) -> Result<(Vec<ForecastRecord>, ClassificationReport)> {
    let (x, y) = data.features(panel, set)?;
    let months = oos_months(&x, config)?;
    let records = forecast_path(&x, &y, &config.online, &months)?;
    let f: Vec<bool> = records.iter().map(|r| r.up).collect();
    let o: Vec<bool> = records.iter().map(|r| r.realized_up).collect();
    let report = metrics::classification_report(&f, &o)?;
    Ok((records, report))
}
