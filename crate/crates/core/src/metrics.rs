//! Portfolio and forecast performance measures.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats;

pub const MONTHS_PER_YEAR: f64 = 12.0;

/// Turnover fee: `rate × Σ|new - prev|`.
pub fn apply_fees(prev_weights: &[f64], new_weights: &[f64], fee_rate: f64) -> Result<f64> {
    if prev_weights.len() != new_weights.len() {
        return Err(Error::DimensionMismatch {
            expected: prev_weights.len(),
            got: new_weights.len(),
        });
    }
    let turnover: f64 = prev_weights
        .iter()
        .zip(new_weights)
        .map(|(a, b)| (b - a).abs())
        .sum();
    Ok(fee_rate * turnover)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PortfolioMetrics {
    /// Annualized: mean monthly excess / sample std × √12.
    pub sharpe: f64,
    /// `exp(12 × mean monthly log return) - 1`.
    pub annual_return: f64,
    /// Most negative peak-to-trough change of the equity curve (≤ 0).
    pub max_drawdown: f64,
}

/// Equity curve starting at 1 from monthly log returns; the result has one
/// more entry than the input.
pub fn equity_curve(monthly_log_returns: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(monthly_log_returns.len() + 1);
    let mut cum = 0.0;
    out.push(1.0);
    for r in monthly_log_returns {
        cum += r;
        out.push(cum.exp());
    }
    out
}

pub fn max_drawdown(equity: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst: f64 = 0.0;
    for &e in equity {
        peak = peak.max(e);
        worst = worst.min((e - peak) / peak);
    }
    worst
}

pub fn portfolio_metrics(
    monthly_log_returns: &[f64],
    risk_free: &[f64],
) -> Result<PortfolioMetrics> {
    let n = monthly_log_returns.len();
    if risk_free.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: risk_free.len(),
        });
    }
    if n < 12 {
        return Err(Error::InsufficientData(format!(
            "metrics need at least 12 months, got {n}"
        )));
    }
    let excess: Vec<f64> = monthly_log_returns
        .iter()
        .zip(risk_free)
        .map(|(r, f)| r - f)
        .collect();
    let sd = stats::sample_std(&excess);
    let scale = excess.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if !(sd > 1e-12 * scale) {
        return Err(Error::Degenerate(
            "Sharpe ratio undefined: zero volatility".into(),
        ));
    }
    Ok(PortfolioMetrics {
        sharpe: stats::mean(&excess) / sd * MONTHS_PER_YEAR.sqrt(),
        annual_return: (MONTHS_PER_YEAR * stats::mean(monthly_log_returns)).exp() - 1.0,
        max_drawdown: max_drawdown(&equity_curve(monthly_log_returns)),
    })
}

/// Directional forecast quality with "up" as the positive class. A ratio
/// whose denominator is empty is `None`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub npv: Option<f64>,
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub true_negative: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn classification_report(
    forecasts: &[bool],
    outcomes: &[bool],
) -> Result<ClassificationReport> {
    if forecasts.len() != outcomes.len() {
        return Err(Error::DimensionMismatch {
            expected: forecasts.len(),
            got: outcomes.len(),
        });
    }
    if forecasts.is_empty() {
        return Err(Error::InsufficientData("no forecasts to score".into()));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&f, &o) in forecasts.iter().zip(outcomes) {
        match (f, o) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Ok(ClassificationReport {
        accuracy: (tp + tn) as f64 / forecasts.len() as f64,
        precision,
        recall,
        f1,
        npv: ratio(tn, tn + fn_),
        true_positive: tp,
        false_positive: fp,
        false_negative: fn_,
        true_negative: tn,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AlphaRegression {
    /// Monthly intercept × 12.
    pub alpha: f64,
    pub alpha_monthly: f64,
    pub alpha_se: f64,
    pub beta: f64,
    /// Two-sided p-value of the intercept t statistic.
    pub p_value: f64,
}

/// Regresses strategy excess returns on benchmark excess returns.
pub fn alpha_regression(
    strategy: &[f64],
    benchmark: &[f64],
    risk_free: &[f64],
) -> Result<AlphaRegression> {
    let n = strategy.len();
    if benchmark.len() != n || risk_free.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: benchmark.len().min(risk_free.len()),
        });
    }
    if n < 24 {
        return Err(Error::InsufficientData(format!(
            "alpha regression needs at least 24 months, got {n}"
        )));
    }
    let ys: Vec<f64> = strategy.iter().zip(risk_free).map(|(a, f)| a - f).collect();
    let xs: Vec<f64> = benchmark
        .iter()
        .zip(risk_free)
        .map(|(a, f)| a - f)
        .collect();
    let ols = stats::simple_ols(&xs, &ys).map_err(|e| match e {
        Error::Degenerate(_) => {
            Error::Degenerate("benchmark excess returns have zero variance".into())
        }
        other => other,
    })?;
    let scale = ys
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let p_value = if ols.intercept_se > 1e-14 * scale {
        stats::two_sided_t_pvalue(ols.intercept / ols.intercept_se, n as f64 - 2.0)
    } else if ols.intercept.abs() <= 1e-14 * scale {
        // exact fit with zero intercept: no evidence of alpha
        1.0
    } else {
        0.0
    };
    Ok(AlphaRegression {
        alpha: ols.intercept * MONTHS_PER_YEAR,
        alpha_monthly: ols.intercept,
        alpha_se: ols.intercept_se,
        beta: ols.slope,
        p_value,
    })
}
