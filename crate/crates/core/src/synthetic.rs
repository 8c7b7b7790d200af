//! Seeded synthetic market data for demos and tests.
//!
//! The market alternates between a calm and a stressed regime following a
//! two-state Markov chain. Stressed months have higher market volatility,
//! which raises cross-asset correlation and the frontier's minimum
//! variance, and carry a negative drift. Because regimes persist, this
//! month's frontier shape carries information about next month's market
//! direction.

use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::backtest::MarketData;
use crate::calendar::YearMonth;
use crate::error::{Error, Result};
use crate::market_data::{FactorData, FactorRow, PriceSeries};

/// Monthly drift and volatility of the market log return.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub drift: f64,
    pub vol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_assets: usize,
    pub start: YearMonth,
    pub months: usize,
    /// Probability of staying calm from one month to the next.
    pub calm_persistence: f64,
    /// Probability of staying stressed from one month to the next.
    pub stressed_persistence: f64,
    pub calm: Regime,
    pub stressed: Regime,
    /// Monthly idiosyncratic volatility.
    pub idio_vol: f64,
    /// Monthly risk-free rate.
    pub risk_free: f64,
    pub market_ticker: String,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 7,
            n_assets: 6,
            start: YearMonth::new(2000, 1).expect("valid month"),
            months: 216,
            calm_persistence: 0.92,
            stressed_persistence: 0.75,
            calm: Regime {
                drift: 0.014,
                vol: 0.03,
            },
            stressed: Regime {
                drift: -0.02,
                vol: 0.07,
            },
            idio_vol: 0.04,
            risk_free: 0.002,
            market_ticker: "MKT".into(),
        }
    }
}

/// Weekdays of a month.
pub fn business_days(month: YearMonth) -> Vec<NaiveDate> {
    month
        .first_day()
        .iter_days()
        .take_while(|d| YearMonth::of(*d) == month)
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .collect()
}

pub fn asset_ticker(i: usize) -> String {
    format!("A{:02}", i + 1)
}

pub fn generate(config: &SyntheticConfig) -> Result<MarketData> {
    if config.n_assets < 2 || config.months < 2 {
        return Err(Error::Config(
            "synthetic data needs at least 2 assets and 2 months".into(),
        ));
    }
    let unit = 0.0..=1.0;
    if !unit.contains(&config.calm_persistence) || !unit.contains(&config.stressed_persistence) {
        return Err(Error::Config("persistence must be in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let n = config.n_assets;
    let betas: Vec<f64> = (0..n)
        .map(|i| 0.6 + 0.9 * i as f64 / (n - 1) as f64)
        .collect();
    let alphas: Vec<f64> = (0..n)
        .map(|_| 0.002 * std_normal.sample(&mut rng))
        .collect();

    let mut market_obs = Vec::new();
    let mut asset_obs: Vec<Vec<(NaiveDate, f64)>> = vec![Vec::new(); n];
    let mut market_price = 100.0;
    let mut asset_price = vec![100.0; n];
    let mut factor_rows = Vec::with_capacity(config.months);
    let mut stressed = false;
    let mut month = config.start;

    for _ in 0..config.months {
        let regime = if stressed {
            config.stressed
        } else {
            config.calm
        };
        let days = business_days(month);
        let nd = days.len() as f64;
        let mut month_market = 0.0;
        for (k, &d) in days.iter().enumerate() {
            let first_obs = market_obs.is_empty() && k == 0;
            if !first_obs {
                let m = regime.drift / nd + regime.vol / nd.sqrt() * std_normal.sample(&mut rng);
                month_market += m;
                market_price *= m.exp();
                for j in 0..n {
                    let e = config.idio_vol / nd.sqrt() * std_normal.sample(&mut rng);
                    let r = alphas[j] / nd
                        + betas[j] * m
                        + (1.0 - betas[j]) * config.risk_free / nd
                        + e;
                    asset_price[j] *= r.exp();
                }
            }
            market_obs.push((d, market_price));
            for j in 0..n {
                asset_obs[j].push((d, asset_price[j]));
            }
        }
        factor_rows.push(FactorRow {
            date: month.last_day(),
            mkt_minus_rf: month_market.exp() - 1.0 - config.risk_free,
            smb: 0.002 + 0.025 * std_normal.sample(&mut rng),
            hml: 0.001 + 0.025 * std_normal.sample(&mut rng),
            rf: config.risk_free,
        });
        let stay = if stressed {
            config.stressed_persistence
        } else {
            config.calm_persistence
        };
        if rng.random::<f64>() >= stay {
            stressed = !stressed;
        }
        month = month.next();
    }

    let assets = asset_obs
        .into_iter()
        .enumerate()
        .map(|(j, obs)| PriceSeries::new(asset_ticker(j), obs))
        .collect::<Result<Vec<_>>>()?;
    Ok(MarketData {
        assets,
        market: PriceSeries::new(config.market_ticker.clone(), market_obs)?,
        factors: FactorData::new(factor_rows)?,
    })
}

/// Writes one `<ticker>.csv` per series and `factors.csv` into `dir`.
pub fn write_dir(data: &MarketData, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for s in data.assets.iter().chain(std::iter::once(&data.market)) {
        s.write_csv(&dir.join(format!("{}.csv", s.ticker())))?;
    }
    data.factors.write_csv(&dir.join("factors.csv"))
}
