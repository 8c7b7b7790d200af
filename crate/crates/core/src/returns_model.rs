//! Expected asset returns conditional on a market-direction forecast.
//!
//! The market log return is modelled as `N(μ, σ²)`. For a forecast
//! probability `p` that the market is up, the conditional market mean is
//!
//! ```text
//! μ + σ (2p - 1) φ(c) / (p - (2p - 1) Φ(c)),   c = -μ/σ
//! ```
//!
//! which is the mean of the normal density reweighted by `p` above zero and
//! `1 - p` below it. Asset views follow from CAPM and are shrunk toward the
//! unconditional mean by the regression R².

use serde::Serialize;

use crate::calendar::YearMonth;
use crate::cart::Forecast;
use crate::error::{Error, Result};
use crate::stats;

/// Least-squares CAPM fit of asset excess returns on market excess returns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CapmFit {
    pub beta: f64,
    pub r_squared: f64,
    /// Sample mean of the raw asset return over the fit window.
    pub unconditional_mean: f64,
}

pub const MIN_CAPM_MONTHS: usize = 12;

pub fn fit_capm(
    asset_returns: &[f64],
    market_returns: &[f64],
    risk_free: &[f64],
) -> Result<CapmFit> {
    let n = asset_returns.len();
    if market_returns.len() != n || risk_free.len() != n {
        return Err(Error::Alignment(format!(
            "CAPM inputs have lengths {n}, {}, {}",
            market_returns.len(),
            risk_free.len()
        )));
    }
    if n < MIN_CAPM_MONTHS {
        return Err(Error::InsufficientData(format!(
            "CAPM needs at least {MIN_CAPM_MONTHS} months, got {n}"
        )));
    }
    let excess = |r: &[f64]| -> Vec<f64> { r.iter().zip(risk_free).map(|(a, f)| a - f).collect() };
    let ya = excess(asset_returns);
    let xm = excess(market_returns);
    let ols = stats::simple_ols(&xm, &ya).map_err(|e| match e {
        Error::Degenerate(_) => {
            Error::Degenerate("market excess returns have zero variance".into())
        }
        other => other,
    })?;
    if !ols.slope.is_finite() {
        return Err(Error::Degenerate("non-finite beta".into()));
    }
    Ok(CapmFit {
        beta: ols.slope,
        r_squared: ols.r_squared,
        unconditional_mean: stats::mean(asset_returns),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MarketDistribution {
    pub mu: f64,
    pub sigma: f64,
}

impl MarketDistribution {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
            return Err(Error::InvalidData(format!(
                "market distribution needs sigma > 0, got {sigma}"
            )));
        }
        Ok(MarketDistribution { mu, sigma })
    }

    /// Sample mean and standard deviation of monthly market log returns.
    pub fn estimate(monthly_returns: &[f64]) -> Result<Self> {
        if monthly_returns.len() < 2 {
            return Err(Error::InsufficientData(
                "need at least 2 market months".into(),
            ));
        }
        MarketDistribution::new(
            stats::mean(monthly_returns),
            stats::sample_std(monthly_returns),
        )
    }

    fn standardized_zero(&self) -> f64 {
        -self.mu / self.sigma
    }

    /// Probability that the return is positive.
    pub fn prob_up(&self) -> f64 {
        1.0 - stats::normal_cdf(self.standardized_zero())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Side {
    AboveZero,
    BelowZero,
}

/// Truncated-normal mean via the inverse Mills ratio.
pub fn mills_conditional(dist: MarketDistribution, side: Side) -> f64 {
    let c = dist.standardized_zero();
    let pdf = stats::normal_pdf(c);
    match side {
        Side::AboveZero => dist.mu + dist.sigma * pdf / (1.0 - stats::normal_cdf(c)),
        Side::BelowZero => dist.mu - dist.sigma * pdf / stats::normal_cdf(c),
    }
}

/// Market mean conditional on an up-probability forecast `p_up`.
pub fn conditional_market(dist: MarketDistribution, p_up: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_up) {
        return Err(Error::OutOfRange(format!(
            "p_up = {p_up} is outside [0, 1]"
        )));
    }
    let c = dist.standardized_zero();
    let tilt = 2.0 * p_up - 1.0;
    let denom = p_up - tilt * stats::normal_cdf(c);
    if denom.abs() < 1e-300 {
        return Err(Error::Degenerate(format!(
            "conditional expectation denominator vanishes (mu = {}, sigma = {}, p = {p_up})",
            dist.mu, dist.sigma
        )));
    }
    Ok(dist.mu + dist.sigma * tilt * stats::normal_pdf(c) / denom)
}

/// CAPM translation of a conditional market return to one asset.
pub fn conditional_asset(fit: &CapmFit, market_conditional: f64, risk_free: f64) -> f64 {
    fit.beta * (market_conditional - risk_free) + risk_free
}

/// R²-weighted blend of the conditional and unconditional means.
pub fn blend(fit: &CapmFit, conditional: f64) -> f64 {
    fit.r_squared * conditional + (1.0 - fit.r_squared) * fit.unconditional_mean
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssetView {
    pub asset: String,
    pub fit: CapmFit,
    pub conditional: f64,
    pub blended: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionalReturnEstimate {
    pub month: YearMonth,
    pub forecast: Forecast,
    /// Probability actually fed to the conditional expectation.
    pub p_used: f64,
    pub market: MarketDistribution,
    pub market_conditional: f64,
    pub risk_free: f64,
    pub views: Vec<AssetView>,
}

impl ConditionalReturnEstimate {
    pub fn expected_returns(&self) -> Vec<f64> {
        self.views.iter().map(|v| v.blended).collect()
    }
}

/// Inputs for one rebalance, all restricted to months before it.
pub struct EstimateInputs<'a> {
    pub month: YearMonth,
    pub forecast: Forecast,
    pub assets: &'a [String],
    /// Per asset, monthly log returns over the fit window.
    pub asset_returns: &'a [Vec<f64>],
    pub market_returns: &'a [f64],
    pub risk_free: &'a [f64],
    /// Last known monthly risk-free rate.
    pub current_risk_free: f64,
    /// Feed the discretized direction (0 or 1) instead of the probability.
    pub discretize: bool,
}

pub fn conditional_estimate(inputs: &EstimateInputs<'_>) -> Result<ConditionalReturnEstimate> {
    let market = MarketDistribution::estimate(inputs.market_returns)?;
    let p_used = if inputs.discretize {
        if inputs.forecast.up {
            1.0
        } else {
            0.0
        }
    } else {
        inputs.forecast.p_up
    };
    let market_conditional = conditional_market(market, p_used)?;
    let mut views = Vec::with_capacity(inputs.assets.len());
    for (asset, returns) in inputs.assets.iter().zip(inputs.asset_returns) {
        let fit = fit_capm(returns, inputs.market_returns, inputs.risk_free)?;
        let conditional = conditional_asset(&fit, market_conditional, inputs.current_risk_free);
        let blended = blend(&fit, conditional);
        if !blended.is_finite() {
            return Err(Error::Degenerate(format!(
                "non-finite expected return for {asset}"
            )));
        }
        views.push(AssetView {
            asset: asset.clone(),
            fit,
            conditional,
            blended,
        });
    }
    Ok(ConditionalReturnEstimate {
        month: inputs.month,
        forecast: inputs.forecast,
        p_used,
        market,
        market_conditional,
        risk_free: inputs.current_risk_free,
        views,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const HALF_NORMAL_MEAN: f64 = 0.797_884_560_802_865_4;

    #[test]
    fn standard_normal_branches() {
        let d = MarketDistribution::new(0.0, 1.0).unwrap();
        assert!((mills_conditional(d, Side::AboveZero) - HALF_NORMAL_MEAN).abs() < 1e-12);
        assert!((mills_conditional(d, Side::BelowZero) + HALF_NORMAL_MEAN).abs() < 1e-12);
    }

    #[test]
    fn half_probability_returns_mean() {
        let d = MarketDistribution::new(0.013, 0.041).unwrap();
        assert_eq!(conditional_market(d, 0.5).unwrap(), 0.013);
        assert!(conditional_market(d, 1.2).is_err());
    }

    #[test]
    fn endpoints_match_truncated_means() {
        let d = MarketDistribution::new(0.007, 0.045).unwrap();
        let up = conditional_market(d, 1.0).unwrap();
        let down = conditional_market(d, 0.0).unwrap();
        assert!((up - mills_conditional(d, Side::AboveZero)).abs() < 1e-12);
        assert!((down - mills_conditional(d, Side::BelowZero)).abs() < 1e-12);
    }

    #[test]
    fn capm_perfect_and_flat() {
        let m: Vec<f64> = (0..24)
            .map(|i| ((i * 7) % 11) as f64 * 0.01 - 0.05)
            .collect();
        let a: Vec<f64> = m.iter().map(|x| 2.0 * x).collect();
        let rf = vec![0.0; 24];
        let fit = fit_capm(&a, &m, &rf).unwrap();
        assert!((fit.beta - 2.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);

        let flat = vec![0.004; 24];
        let fit = fit_capm(&flat, &m, &rf).unwrap();
        assert!(fit.beta.abs() < 1e-12);
        assert_eq!(fit.r_squared, 0.0);

        assert!(matches!(
            fit_capm(&a, &[0.01; 24], &rf),
            Err(Error::Degenerate(_))
        ));
        assert!(fit_capm(&a[..5], &m[..5], &rf[..5]).is_err());
    }

    #[test]
    fn asset_translation_and_blend() {
        let fit = |beta, r2, mean| CapmFit {
            beta,
            r_squared: r2,
            unconditional_mean: mean,
        };
        assert_eq!(conditional_asset(&fit(1.0, 0.5, 0.0), 0.031, 0.002), 0.031);
        assert_eq!(conditional_asset(&fit(0.0, 0.5, 0.0), 0.031, 0.002), 0.002);
        assert!((conditional_asset(&fit(1.5, 0.5, 0.0), 0.02, 0.002) - 0.029).abs() < 1e-15);
        assert_eq!(blend(&fit(1.0, 1.0, 0.01), 0.03), 0.03);
        assert_eq!(blend(&fit(1.0, 0.0, 0.01), 0.03), 0.01);
        assert!((blend(&fit(1.0, 0.4, 0.01), 0.03) - 0.018).abs() < 1e-15);
    }
}
