//! Small statistics helpers shared by the modelling stages.

use nalgebra::DMatrix;
use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with denominator n - 1.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn sample_std(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

/// Column means of an observations × variables matrix.
pub fn column_means(data: &DMatrix<f64>) -> Vec<f64> {
    let n = data.nrows() as f64;
    data.column_iter().map(|c| c.sum() / n).collect()
}

/// Sample covariance (denominator n - 1) of an observations × variables matrix.
pub fn sample_covariance(data: &DMatrix<f64>) -> DMatrix<f64> {
    let n = data.nrows();
    let means = column_means(data);
    let centered = DMatrix::from_fn(n, data.ncols(), |i, j| data[(i, j)] - means[j]);
    let mut cov = centered.transpose() * &centered / (n as f64 - 1.0);
    // exact symmetry
    for i in 0..cov.nrows() {
        for j in 0..i {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    cov
}

pub fn normal_pdf(x: f64) -> f64 {
    Normal::standard().pdf(x)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
pub fn two_sided_t_pvalue(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

/// Simple least squares `y = intercept + slope * x + e`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimpleOls {
    pub intercept: f64,
    pub slope: f64,
    /// Explained over total sum of squares; 0 when `y` is constant.
    pub r_squared: f64,
    pub residual_ss: f64,
    pub intercept_se: f64,
    pub n: usize,
}

pub fn simple_ols(x: &[f64], y: &[f64]) -> Result<SimpleOls> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "regression needs at least 3 points, got {n}"
        )));
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= f64::EPSILON * f64::EPSILON * n as f64 {
        return Err(Error::Degenerate("regressor has zero variance".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sst: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let residual_ss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - intercept - slope * a;
            e * e
        })
        .sum();
    let r_squared = if sst > 0.0 {
        (1.0 - residual_ss / sst).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let s2 = residual_ss / (n as f64 - 2.0);
    let intercept_se = (s2 * (1.0 / n as f64 + mx * mx / sxx)).sqrt();
    Ok(SimpleOls {
        intercept,
        slope,
        r_squared,
        residual_ss,
        intercept_se,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_matches_hand_computation() {
        let data = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 7.0]);
        let cov = sample_covariance(&data);
        assert!((cov[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((cov[(0, 1)] - 2.5).abs() < 1e-15);
        assert!((cov[(1, 1)] - 6.333333333333333).abs() < 1e-12);
    }

    #[test]
    fn ols_perfect_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 0.5 + 2.0 * v).collect();
        let fit = simple_ols(&x, &y).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 0.5).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(simple_ols(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn t_pvalue_reference_points() {
        assert!((two_sided_t_pvalue(0.0, 10.0) - 1.0).abs() < 1e-12);
        // t_{0.975, 10} = 2.228138851986
        assert!((two_sided_t_pvalue(2.228138851986, 10.0) - 0.05).abs() < 1e-9);
    }
}
