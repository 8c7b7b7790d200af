#![allow(dead_code)]

pub mod oracles;

use chrono::NaiveDate;
use efcart::backtest::MarketData;
use efcart::market_data::{FactorData, FactorRow, PriceSeries};
use efcart::synthetic::business_days;
use efcart::YearMonth;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Random SPD matrix with eigenvalues bounded away from zero.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| normal(rng));
    let scale = rng.random_range(0.01..1.0);
    (&a * a.transpose() / n as f64 + DMatrix::identity(n, n) * 0.05) * scale
}

pub fn random_mean(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| 0.01 + 0.05 * normal(rng))
}

/// Solves `V x = b` with LU, independent of the library's Cholesky path.
pub fn lu_solve(v: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    v.clone().lu().solve(b).expect("nonsingular")
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

/// Monthly factor rows with a constant risk-free rate.
pub fn flat_factors(start: YearMonth, months: usize, rf: f64) -> FactorData {
    let rows = (0..months)
        .map(|k| FactorRow {
            date: start.plus(k as i64).last_day(),
            mkt_minus_rf: 0.0,
            smb: 0.0,
            hml: 0.0,
            rf,
        })
        .collect();
    FactorData::new(rows).expect("valid factors")
}

/// Daily returns for one month: market return and one return per asset.
pub type DayGen<'a> = dyn FnMut(usize, usize, usize) -> (f64, Vec<f64>) + 'a;

/// Builds price series on weekdays from a generator called with
/// `(month index, day index, days in month)` for every day after the first.
pub fn market_from_returns(
    start: YearMonth,
    months: usize,
    n_assets: usize,
    rf: f64,
    generator: &mut DayGen<'_>,
) -> MarketData {
    let mut market = Vec::new();
    let mut assets: Vec<Vec<(NaiveDate, f64)>> = vec![Vec::new(); n_assets];
    let mut mp = 100.0;
    let mut ap = vec![100.0; n_assets];
    for k in 0..months {
        let days = business_days(start.plus(k as i64));
        for (d, &date) in days.iter().enumerate() {
            if !(k == 0 && d == 0) {
                let (m, a) = generator(k, d, days.len());
                mp *= m.exp();
                for j in 0..n_assets {
                    ap[j] *= a[j].exp();
                }
            }
            market.push((date, mp));
            for j in 0..n_assets {
                assets[j].push((date, ap[j]));
            }
        }
    }
    MarketData {
        assets: assets
            .into_iter()
            .enumerate()
            .map(|(j, o)| PriceSeries::new(format!("S{j}"), o).unwrap())
            .collect(),
        market: PriceSeries::new("MKT", market).unwrap(),
        factors: flat_factors(start, months, rf),
    }
}

/// Four assets with betas 0.6 to 1.5 over a noisy market, 0.2% monthly risk-free
/// rate, starting 2000-01. Days from month `mutate_from` on draw from a
/// different seed; `always_up` keeps every market day positive.
pub fn walkforward_market(
    seed: u64,
    months: usize,
    mutate_from: Option<usize>,
    always_up: bool,
) -> MarketData {
    let mut generator = |k: usize, d: usize, _: usize| {
        let s = match mutate_from {
            Some(cut) if k >= cut => seed ^ 0xdead_beef,
            _ => seed,
        };
        let mut r = rng(s.wrapping_mul(7919).wrapping_add((k * 64 + d) as u64));
        let m = if always_up {
            0.0008 + 0.0006 * normal(&mut r).abs()
        } else {
            0.0004 + 0.01 * normal(&mut r)
        };
        let a = (0..4)
            .map(|j| (0.6 + 0.3 * j as f64) * m + 0.006 * normal(&mut r))
            .collect();
        (m, a)
    };
    market_from_returns(
        YearMonth::new(2000, 1).unwrap(),
        months,
        4,
        0.002,
        &mut generator,
    )
}
