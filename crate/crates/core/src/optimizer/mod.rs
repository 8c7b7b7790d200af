//! Mean-variance and maximum-Sharpe portfolios with shorting allowed.
//!
//! The capped tangency problem
//!
//! ```text
//! max (wᵀr - r_f) / √(wᵀVw)   s.t.  Σw = 1,  Σ|w| ≤ cap
//! ```
//!
//! When some feasible portfolio beats the risk-free rate, the substitution
//! `y = w / (wᵀr - r_f)` turns it into the convex QP
//!
//! ```text
//! min yᵀVy   s.t.  (r - r_f e)ᵀy = 1,  Σ|y| ≤ cap·Σy
//! ```
//!
//! solved on the split `y = y⁺ - y⁻` (`y± ≥ 0`) so the feasible set stays
//! polyhedral. Otherwise the Sharpe ratio is quasi-convex on the feasible
//! set and the best vertex is optimal.

pub mod qp;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::frontier::cholesky;

pub const DEFAULT_GROSS_CAP: f64 = 1.5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PortfolioWeights {
    pub weights: Vec<f64>,
}

impl PortfolioWeights {
    pub fn new(weights: Vec<f64>) -> Self {
        PortfolioWeights { weights }
    }

    pub fn equal(n: usize) -> Self {
        PortfolioWeights {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn gross_exposure(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }

    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.weights)
    }
}

#[derive(Clone, Debug)]
pub struct OptimizationProblem {
    pub mean_returns: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub risk_free: f64,
    pub target_return: Option<f64>,
    /// Upper bound on Σ|w|; `None` leaves leverage unconstrained.
    pub gross_cap: Option<f64>,
}

impl OptimizationProblem {
    pub fn new(mean_returns: DVector<f64>, covariance: DMatrix<f64>, risk_free: f64) -> Self {
        OptimizationProblem {
            mean_returns,
            covariance,
            risk_free,
            target_return: None,
            gross_cap: Some(DEFAULT_GROSS_CAP),
        }
    }

    pub fn with_target(mut self, target: f64) -> Self {
        self.target_return = Some(target);
        self
    }

    pub fn with_cap(mut self, cap: Option<f64>) -> Self {
        self.gross_cap = cap;
        self
    }

    pub fn n_assets(&self) -> usize {
        self.mean_returns.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_assets();
        if n == 0 {
            return Err(Error::InsufficientData("no assets".into()));
        }
        if self.covariance.nrows() != n || self.covariance.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.covariance.nrows(),
            });
        }
        if let Some(cap) = self.gross_cap {
            if !(cap >= 1.0) {
                return Err(Error::Config(format!(
                    "gross exposure cap must be >= 1, got {cap}"
                )));
            }
        }
        if self.mean_returns.iter().any(|v| !v.is_finite()) || !self.risk_free.is_finite() {
            return Err(Error::InvalidData("non-finite expected returns".into()));
        }
        Ok(())
    }

    pub fn portfolio_return(&self, w: &DVector<f64>) -> f64 {
        w.dot(&self.mean_returns)
    }

    pub fn portfolio_sigma(&self, w: &DVector<f64>) -> f64 {
        w.dot(&(&self.covariance * w)).max(0.0).sqrt()
    }

    pub fn sharpe(&self, w: &DVector<f64>) -> f64 {
        (self.portfolio_return(w) - self.risk_free) / self.portfolio_sigma(w)
    }
}

/// Minimum-variance portfolio for the target return, from the Lagrangian
/// conditions `w = V⁻¹(λr + γe)`.
pub fn min_variance(problem: &OptimizationProblem) -> Result<PortfolioWeights> {
    problem.validate()?;
    let target = problem
        .target_return
        .ok_or_else(|| Error::Config("min_variance needs a target return".into()))?;
    let chol = cholesky(&problem.covariance)?;
    let n = problem.n_assets();
    let e = DVector::from_element(n, 1.0);
    let v_inv_e = chol.solve(&e);
    let v_inv_r = chol.solve(&problem.mean_returns);
    let a = e.dot(&v_inv_e);
    let b = problem.mean_returns.dot(&v_inv_e);
    let c = problem.mean_returns.dot(&v_inv_r);
    let d = a * c - b * b;
    let r_mvp = b / a;
    if d <= 1e-12 * (a * c).abs().max(f64::MIN_POSITIVE) {
        if (target - r_mvp).abs() <= 1e-12 * (1.0 + r_mvp.abs()) {
            return Ok(PortfolioWeights::new(
                (v_inv_e / a).iter().copied().collect(),
            ));
        }
        return Err(Error::Infeasible(format!(
            "all assets share the expected return {r_mvp}; target {target} is unattainable"
        )));
    }
    let lambda = (a * target - b) / d;
    let gamma = (c - b * target) / d;
    let w = v_inv_r * lambda + v_inv_e * gamma;
    Ok(PortfolioWeights::new(w.iter().copied().collect()))
}

/// Unconstrained tangency portfolio `w ∝ V⁻¹(r - r_f e)`.
pub fn tangency_closed_form(problem: &OptimizationProblem) -> Result<PortfolioWeights> {
    problem.validate()?;
    let chol = cholesky(&problem.covariance)?;
    let excess = problem.mean_returns.map(|r| r - problem.risk_free);
    let z = chol.solve(&excess);
    let denom: f64 = z.sum();
    let scale: f64 = z.iter().map(|v| v.abs()).sum();
    if scale == 0.0 || denom.abs() <= 1e-10 * scale {
        return Err(Error::Degenerate(
            "tangency undefined: risk-free rate equals the minimum-variance return".into(),
        ));
    }
    Ok(PortfolioWeights::new((z / denom).iter().copied().collect()))
}

fn merge(x: &DVector<f64>) -> DVector<f64> {
    let n = x.len() / 2;
    DVector::from_fn(n, |i, _| x[i] - x[i + n])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TangencyMethod {
    /// Uncapped, `w ∝ V⁻¹(r - r_f e)`.
    ClosedForm,
    /// Homogenised convex QP, used when a positive excess return is feasible.
    ConvexQp,
    /// Best vertex of the feasible set otherwise.
    Vertex,
}

/// Diagnostics from the tangency solve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TangencySolution {
    pub weights: PortfolioWeights,
    pub sharpe: f64,
    pub method: TangencyMethod,
    /// Active-set iterations for the QP, vertices visited otherwise.
    pub iterations: usize,
}

/// Maximum-Sharpe portfolio under the gross-exposure cap. Without a cap the
/// closed form is returned.
pub fn tangency(problem: &OptimizationProblem) -> Result<PortfolioWeights> {
    Ok(tangency_detailed(problem)?.weights)
}

/// Largest excess return over the feasible set, attained at a vertex
/// `(1 + cap)/2·e_i - (cap - 1)/2·e_j`, as `(excess, i, j)`.
fn best_vertex(excess: &DVector<f64>, cap: f64) -> (f64, usize, usize) {
    let (hi, lo) = (excess.imax(), excess.imin());
    let value = (1.0 + cap) / 2.0 * excess[hi] - (cap - 1.0) / 2.0 * excess[lo];
    (value, hi, lo)
}

/// Global capped tangency through the homogenised convex QP. Requires a
/// feasible portfolio with positive excess return.
fn tangency_convex(problem: &OptimizationProblem, cap: f64) -> Result<TangencySolution> {
    let n = problem.n_assets();
    let m = 2 * n;
    let excess = problem.mean_returns.map(|r| r - problem.risk_free);
    let (value, hi, lo) = best_vertex(&excess, cap);
    let v = &problem.covariance;
    let reg = 1e-10 * v.diagonal().amax().max(1e-300);
    let hessian = DMatrix::from_fn(m, m, |i, j| {
        let sign = if (i < n) == (j < n) { 1.0 } else { -1.0 };
        sign * v[(i % n, j % n)] + if i == j { reg } else { 0.0 }
    });
    let eq_matrix = DMatrix::from_fn(1, m, |_, j| if j < n { excess[j] } else { -excess[j - n] });
    let mut ineq_matrix = DMatrix::zeros(m + 1, m);
    for j in 0..m {
        ineq_matrix[(j, j)] = 1.0;
        ineq_matrix[(m, j)] = if j < n { cap - 1.0 } else { -(cap + 1.0) };
    }
    let mut start = DVector::zeros(m);
    start[hi] += (1.0 + cap) / (2.0 * value);
    start[n + lo] += (cap - 1.0) / (2.0 * value);
    let sub = qp::QpProblem {
        hessian,
        gradient: DVector::zeros(m),
        eq_matrix,
        eq_rhs: DVector::from_element(1, 1.0),
        ineq_matrix,
        ineq_rhs: DVector::zeros(m + 1),
    };
    let sol = qp::solve(&sub, start, 20 * m + 50)?;
    let y = merge(&sol.x);
    let total = y.sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate(
            "homogenised tangency has non-positive budget".into(),
        ));
    }
    let weights = PortfolioWeights::new((y / total).iter().copied().collect());
    let sharpe = problem.sharpe(&weights.as_vector());
    Ok(TangencySolution {
        weights,
        sharpe,
        method: TangencyMethod::ConvexQp,
        iterations: sol.iterations,
    })
}

pub fn tangency_detailed(problem: &OptimizationProblem) -> Result<TangencySolution> {
    problem.validate()?;
    let Some(cap) = problem.gross_cap else {
        let weights = tangency_closed_form(problem)?;
        let sharpe = problem.sharpe(&weights.as_vector());
        return Ok(TangencySolution {
            weights,
            sharpe,
            method: TangencyMethod::ClosedForm,
            iterations: 0,
        });
    };
    // fails early on a non-SPD covariance
    cholesky(&problem.covariance)?;
    let excess = problem.mean_returns.map(|r| r - problem.risk_free);
    if best_vertex(&excess, cap).0 > 1e-12 * excess.amax() {
        return tangency_convex(problem, cap);
    }
    tangency_vertices(problem, cap)
}

/// Best vertex of the feasible polytope. When no feasible portfolio earns a
/// positive excess return the Sharpe ratio is quasi-convex there, so its
/// maximum sits at a vertex.
fn tangency_vertices(problem: &OptimizationProblem, cap: f64) -> Result<TangencySolution> {
    let n = problem.n_assets();
    let (long, short) = ((1.0 + cap) / 2.0, (cap - 1.0) / 2.0);
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut visited = 0;
    for i in 0..n {
        for j in 0..n {
            if i == j && n > 1 {
                continue;
            }
            let mut w = DVector::zeros(n);
            w[i] += long;
            w[j] -= short;
            visited += 1;
            let s = problem.sharpe(&w);
            if s.is_finite() && best.as_ref().is_none_or(|(b, _)| s > *b) {
                best = Some((s, w));
            }
        }
    }
    let (sharpe, w) =
        best.ok_or_else(|| Error::Degenerate("no vertex has a finite Sharpe ratio".into()))?;
    Ok(TangencySolution {
        weights: PortfolioWeights::new(w.iter().copied().collect()),
        sharpe,
        method: TangencyMethod::Vertex,
        iterations: visited,
    })
}
