//! Efficient-frontier coefficients.
//!
//! For mean returns `r`, covariance `V` and the ones vector `e`:
//!
//! ```text
//! A = e'V⁻¹e    B = r'V⁻¹e    C = r'V⁻¹r
//! σ(r)² = (A r² - 2 B r + C) / (A C - B²)
//! ```
//!
//! and the interpretable triple `r_mvp = B/A`, `σ_mvp = 1/√A`,
//! `u = √((AC - B²)/A)`, with which `σ(r)² = ((r - r_mvp)/u)² + σ_mvp²`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use crate::calendar::YearMonth;
use crate::error::{Error, Result};
use crate::market_data::{ReturnPanel, MIN_TRADING_DAYS};
use crate::stats;

const SYMMETRY_TOL: f64 = 1e-12;
/// `AC - B²` values in `[-DEGENERACY_TOL, 0]` are treated as exactly zero.
pub const DEGENERACY_TOL: f64 = 1e-12;

/// Mean returns and covariance for one estimation window.
#[derive(Clone, Debug)]
pub struct FrontierInputs {
    mean_returns: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl FrontierInputs {
    pub fn new(mean_returns: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let n = mean_returns.len();
        if n == 0 {
            return Err(Error::InsufficientData("no assets".into()));
        }
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: covariance.nrows(),
            });
        }
        if mean_returns
            .iter()
            .chain(covariance.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidData("non-finite frontier input".into()));
        }
        let scale = covariance.amax().max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::InvalidData(format!(
                        "covariance not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(FrontierInputs {
            mean_returns,
            covariance,
        })
    }

    /// Within-window mean vector and sample covariance of daily returns
    /// (observations × assets).
    pub fn from_returns(returns: &DMatrix<f64>) -> Result<Self> {
        if returns.nrows() < 2 {
            return Err(Error::InsufficientData(format!(
                "need at least 2 observations, got {}",
                returns.nrows()
            )));
        }
        let means = DVector::from_vec(stats::column_means(returns));
        FrontierInputs::new(means, stats::sample_covariance(returns))
    }

    pub fn mean_returns(&self) -> &DVector<f64> {
        &self.mean_returns
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn n_assets(&self) -> usize {
        self.mean_returns.len()
    }

    pub(crate) fn cholesky(&self) -> Result<Cholesky<f64, Dyn>> {
        cholesky(&self.covariance)
    }
}

pub(crate) fn cholesky(v: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(v.clone()).ok_or_else(|| {
        Error::NotPositiveDefinite(format!(
            "Cholesky factorization of the {0}x{0} covariance failed",
            v.nrows()
        ))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FrontierCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl FrontierCoefficients {
    /// `AC - B²`.
    pub fn discriminant(&self) -> f64 {
        self.a * self.c - self.b * self.b
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InterpretableCoefficients {
    pub r_mvp: f64,
    pub sigma_mvp: f64,
    pub u: f64,
}

impl InterpretableCoefficients {
    /// Frontier standard deviation in the interpretable form
    /// `√(((r - r_mvp)/u)² + σ_mvp²)`.
    pub fn sigma_at(&self, r: f64) -> Result<f64> {
        if self.u == 0.0 {
            if r == self.r_mvp {
                return Ok(self.sigma_mvp);
            }
            return Err(Error::Degenerate(
                "u = 0: frontier is a single point".into(),
            ));
        }
        let z = (r - self.r_mvp) / self.u;
        Ok((z * z + self.sigma_mvp * self.sigma_mvp).sqrt())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.r_mvp, self.sigma_mvp, self.u]
    }
}

/// Computes (A, B, C) from one Cholesky factorization of the covariance.
pub fn compute_abc(inputs: &FrontierInputs) -> Result<FrontierCoefficients> {
    let chol = inputs.cholesky()?;
    let n = inputs.n_assets();
    let e = DVector::from_element(n, 1.0);
    let v_inv_e = chol.solve(&e);
    let v_inv_r = chol.solve(&inputs.mean_returns);
    Ok(FrontierCoefficients {
        a: e.dot(&v_inv_e),
        b: inputs.mean_returns.dot(&v_inv_e),
        c: inputs.mean_returns.dot(&v_inv_r),
    })
}

pub fn interpretable_coefficients(
    coefs: &FrontierCoefficients,
) -> Result<InterpretableCoefficients> {
    if !(coefs.a > 0.0) {
        return Err(Error::Degenerate(format!(
            "A = {} must be positive",
            coefs.a
        )));
    }
    let disc = coefs.discriminant();
    if disc < -DEGENERACY_TOL {
        return Err(Error::Degenerate(format!(
            "AC - B^2 = {disc:e} is negative"
        )));
    }
    Ok(InterpretableCoefficients {
        r_mvp: coefs.b / coefs.a,
        sigma_mvp: 1.0 / coefs.a.sqrt(),
        u: (disc.max(0.0) / coefs.a).sqrt(),
    })
}

/// Closed-form frontier standard deviation at target return `r`.
pub fn frontier_sigma(coefs: &FrontierCoefficients, r: f64) -> Result<f64> {
    let disc = coefs.discriminant();
    if disc <= DEGENERACY_TOL {
        return Err(Error::Degenerate(format!(
            "AC - B^2 = {disc:e}: frontier undefined"
        )));
    }
    let num = coefs.a * r * r - 2.0 * coefs.b * r + coefs.c;
    Ok((num / disc).max(0.0).sqrt())
}

/// `u` split into the Mahalanobis length of `r` and the cosine spread
/// between `r` and `e`, both measured in the `V⁻¹` inner product.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct UDecomposition {
    pub mahalanobis: f64,
    pub cosine_spread: f64,
}

impl UDecomposition {
    pub fn product(&self) -> f64 {
        self.mahalanobis * self.cosine_spread
    }
}

pub fn u_decomposition(inputs: &FrontierInputs) -> Result<UDecomposition> {
    let chol = inputs.cholesky()?;
    let l = chol.l();
    let n = inputs.n_assets();
    // with V = L L', <x, y>_{V⁻¹} = (L⁻¹x)·(L⁻¹y)
    let wr = l
        .solve_lower_triangular(&inputs.mean_returns)
        .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?;
    let we = l
        .solve_lower_triangular(&DVector::from_element(n, 1.0))
        .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?;
    let mahalanobis = wr.norm();
    if mahalanobis == 0.0 {
        return Ok(UDecomposition {
            mahalanobis,
            cosine_spread: 0.0,
        });
    }
    let cosine = wr.dot(&we) / (mahalanobis * we.norm());
    Ok(UDecomposition {
        mahalanobis,
        cosine_spread: (1.0 - cosine * cosine).max(0.0).sqrt(),
    })
}

/// Cosine spread against the ones vector in the plain Euclidean inner
/// product; equal to the `V⁻¹` version when `V` is a multiple of the identity.
pub fn plain_cosine_spread(r: &[f64]) -> f64 {
    let n = r.len() as f64;
    let sum: f64 = r.iter().sum();
    let sum_sq: f64 = r.iter().map(|x| x * x).sum();
    if sum_sq == 0.0 {
        return 0.0;
    }
    (1.0 - sum * sum / (n * sum_sq)).max(0.0).sqrt()
}

/// Frontier coefficients for one calendar month of daily data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MonthlyCoefficients {
    pub month: YearMonth,
    pub coefficients: FrontierCoefficients,
    pub interpretable: InterpretableCoefficients,
    pub decomposition: UDecomposition,
}

/// Coefficients of month `idx` of the panel, estimated from that month's
/// daily log returns.
pub fn month_coefficients(panel: &ReturnPanel, idx: usize) -> Result<MonthlyCoefficients> {
    let block = &panel.months()[idx];
    let inputs = FrontierInputs::from_returns(&panel.month_daily_returns(idx))
        .map_err(|e| Error::InvalidData(format!("{}: {e}", block.month)))?;
    let coefficients =
        compute_abc(&inputs).map_err(|e| Error::InvalidData(format!("{}: {e}", block.month)))?;
    Ok(MonthlyCoefficients {
        month: block.month,
        coefficients,
        interpretable: interpretable_coefficients(&coefficients)?,
        decomposition: u_decomposition(&inputs)?,
    })
}

/// Coefficients for every month with at least [`MIN_TRADING_DAYS`] sessions.
pub fn monthly_coefficients(panel: &ReturnPanel) -> Result<Vec<MonthlyCoefficients>> {
    (0..panel.months().len())
        .filter(|&i| panel.months()[i].trading_days() >= MIN_TRADING_DAYS)
        .map(|i| month_coefficients(panel, i))
        .collect()
}

pub fn write_coefficients_csv(rows: &[MonthlyCoefficients], path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    let err = |e: csv::Error| Error::parse(path.display().to_string(), e.to_string());
    w.write_record([
        "date",
        "A",
        "B",
        "C",
        "r_mvp",
        "sigma_mvp",
        "u",
        "mahalanobis",
        "cosine_spread",
    ])
    .map_err(err)?;
    for r in rows {
        let vals = [
            r.coefficients.a,
            r.coefficients.b,
            r.coefficients.c,
            r.interpretable.r_mvp,
            r.interpretable.sigma_mvp,
            r.interpretable.u,
            r.decomposition.mahalanobis,
            r.decomposition.cosine_spread,
        ];
        let mut rec = vec![r.month.to_string()];
        rec.extend(vals.iter().map(|v| format!("{v:.12e}")));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
