//! Definitional reference implementations, independent of the library code
//! they check.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use efcart::cart::{fit_samples, Node, Samples, TreeHyperparams, TreeModel};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{lu_solve, normal, rng};

/// `(A, B, C) = (eᵀV⁻¹e, rᵀV⁻¹e, rᵀV⁻¹r)` via LU.
pub fn abc(mean: &DVector<f64>, cov: &DMatrix<f64>) -> (f64, f64, f64) {
    let e = DVector::from_element(mean.len(), 1.0);
    let vi_e = lu_solve(cov, &e);
    let vi_r = lu_solve(cov, mean);
    (e.dot(&vi_e), mean.dot(&vi_e), mean.dot(&vi_r))
}

/// Simpson integrals of `φ((x - μ)/σ)` and `x φ((x - μ)/σ)` over `[lo, hi]`.
fn simpson(mu: f64, sigma: f64, lo: f64, hi: f64) -> (f64, f64) {
    let n = 20_000;
    let h = (hi - lo) / n as f64;
    let (mut mass, mut first) = (0.0, 0.0);
    for i in 0..=n {
        let x = lo + i as f64 * h;
        let coef = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let z = (x - mu) / sigma;
        let f = coef * (-0.5 * z * z).exp();
        mass += f;
        first += f * x;
    }
    (mass * h / 3.0, first * h / 3.0)
}

/// Mean of the normal density reweighted by `p` above zero and `1 - p`
/// below, integrating each side separately.
pub fn quadrature_mean(mu: f64, sigma: f64, p: f64) -> f64 {
    let (lo, hi) = (mu - 12.0 * sigma, mu + 12.0 * sigma);
    let (m_dn, f_dn) = if lo < 0.0 {
        simpson(mu, sigma, lo, 0.0_f64.min(hi))
    } else {
        (0.0, 0.0)
    };
    let (m_up, f_up) = if hi > 0.0 {
        simpson(mu, sigma, 0.0_f64.max(lo), hi)
    } else {
        (0.0, 0.0)
    };
    (p * f_up + (1.0 - p) * f_dn) / (p * m_up + (1.0 - p) * m_dn)
}

/// Simulated mean and standard error of the reweighted normal, by
/// rejection sampling from `draws` normal draws.
pub fn monte_carlo_mean(mu: f64, sigma: f64, p: f64, draws: usize, seed: u64) -> (f64, f64) {
    let mut rng = rng(seed);
    let cap = p.max(1.0 - p);
    let mut accepted = Vec::new();
    for _ in 0..draws {
        let x = mu + sigma * normal(&mut rng);
        let w = if x > 0.0 { p } else { 1.0 - p };
        if rng.random::<f64>() < w / cap {
            accepted.push(x);
        }
    }
    let n = accepted.len() as f64;
    let m = accepted.iter().sum::<f64>() / n;
    let sd = (accepted.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    (m, sd / n.sqrt())
}

pub fn sharpe(mean: &DVector<f64>, cov: &DMatrix<f64>, rf: f64, w: &DVector<f64>) -> f64 {
    (w.dot(mean) - rf) / w.dot(&(cov * w)).sqrt()
}

/// Best Sharpe ratio of `t·asset0 + (1 - t)·asset1` on a fine grid over
/// `t ∈ [-0.25, 1.25]`, the feasible segment for a gross cap of 1.5.
pub fn two_asset_grid_sharpe(mean: &DVector<f64>, cov: &DMatrix<f64>, rf: f64) -> f64 {
    let steps = 150_000;
    (0..=steps)
        .map(|i| {
            let t = -0.25 + 1.5 * i as f64 / steps as f64;
            let u = 1.0 - t;
            let var = t * t * cov[(0, 0)] + 2.0 * t * u * cov[(0, 1)] + u * u * cov[(1, 1)];
            (t * mean[0] + u * mean[1] - rf) / var.sqrt()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug)]
pub enum Tree {
    Leaf(f64),
    Split(usize, f64, Box<Tree>, Box<Tree>),
}

pub struct TreeData {
    pub rows: Vec<Vec<f64>>,
    pub up: Vec<bool>,
    pub w: Vec<f64>,
}

fn impurity(data: &TreeData, idx: &[usize]) -> (f64, f64, f64) {
    let total: f64 = idx.iter().map(|&i| data.w[i]).sum();
    let up: f64 = idx
        .iter()
        .filter(|&&i| data.up[i])
        .map(|&i| data.w[i])
        .sum();
    let g = if total > 0.0 {
        2.0 * up * (total - up) / total
    } else {
        0.0
    };
    (g, up, total)
}

/// Brute force: every feature and every midpoint between distinct sorted
/// values, costs summed directly over each child.
pub fn grow_tree(data: &TreeData, idx: &[usize], depth: usize) -> Tree {
    let (parent, up, total) = impurity(data, idx);
    if depth == 0 || idx.len() < 2 || parent == 0.0 {
        return Tree::Leaf(up / total);
    }
    let d = data.rows[0].len();
    let mut candidates = Vec::new();
    for f in 0..d {
        let mut vals: Vec<f64> = idx.iter().map(|&i| data.rows[i][f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for pair in vals.windows(2) {
            let t = pair[0] + (pair[1] - pair[0]) / 2.0;
            let (r, l): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| data.rows[i][f] >= t);
            candidates.push((f, t, impurity(data, &l).0 + impurity(data, &r).0, l, r));
        }
    }
    let tol = 1e-12 * total;
    let best = candidates.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
    if !(best < parent - tol) {
        return Tree::Leaf(up / total);
    }
    // candidates are in (feature, threshold) order, so the first near-minimum wins
    let (f, t, _, l, r) = candidates.into_iter().find(|c| c.2 <= best + tol).unwrap();
    Tree::Split(
        f,
        t,
        Box::new(grow_tree(data, &l, depth - 1)),
        Box::new(grow_tree(data, &r, depth - 1)),
    )
}

pub fn compare_tree(node: &Node, oracle: &Tree) -> Result<(), String> {
    match (node, oracle) {
        (
            Node::Leaf {
                up_weight, weight, ..
            },
            Tree::Leaf(p),
        ) => {
            let got = up_weight / weight;
            if (got - p).abs() <= 1e-12 {
                Ok(())
            } else {
                Err(format!("leaf {got} vs {p}"))
            }
        }
        (
            Node::Split {
                feature,
                threshold,
                left,
                right,
                ..
            },
            Tree::Split(f, t, l, r),
        ) => {
            if feature != f || !((threshold - t).abs() <= 1e-12 * t.abs().max(1e-300)) {
                return Err(format!("split ({feature}, {threshold}) vs ({f}, {t})"));
            }
            compare_tree(left, l)?;
            compare_tree(right, r)
        }
        _ => Err(format!("shape differs: {node:?} vs {oracle:?}")),
    }
}

/// Up to 50 rows and 2 features, continuous or discrete, unit or random weights.
pub fn random_tree_data(rng: &mut ChaCha8Rng) -> TreeData {
    let n = rng.random_range(1..=50);
    let d = rng.random_range(1..=2);
    let discrete = rng.random_bool(0.5);
    let unit_weights = rng.random_bool(0.5);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..d)
                .map(|_| {
                    if discrete {
                        rng.random_range(0..5) as f64
                    } else {
                        normal(rng)
                    }
                })
                .collect()
        })
        .collect();
    let up = rows
        .iter()
        .map(|r| rng.random_bool(if r[0] > 0.0 { 0.7 } else { 0.35 }))
        .collect();
    let w = (0..n)
        .map(|_| {
            if unit_weights {
                1.0
            } else {
                rng.random_range(0.01..2.0)
            }
        })
        .collect();
    TreeData { rows, up, w }
}

pub fn fit_tree(data: &TreeData, depth: usize) -> TreeModel {
    let names: Vec<String> = (0..data.rows[0].len()).map(|i| format!("x{i}")).collect();
    let samples = Samples {
        rows: &data.rows,
        up: &data.up,
        weights: &data.w,
    };
    fit_samples(
        &samples,
        None,
        &names,
        TreeHyperparams::new(depth, true, 5).unwrap(),
    )
    .unwrap()
}

/// Fits at depths 1 and 2 and compares each against the exhaustive search.
pub fn check_tree_against_oracle(data: &TreeData) -> Result<(), String> {
    let idx: Vec<usize> = (0..data.rows.len()).collect();
    for depth in [1, 2] {
        let model = fit_tree(data, depth);
        compare_tree(&model.root, &grow_tree(data, &idx, depth))
            .map_err(|e| format!("depth {depth}: {e}"))?;
    }
    Ok(())
}

/// Leaf index and probability for every training row.
pub fn training_routing(model: &TreeModel, data: &TreeData) -> Vec<(usize, f64)> {
    data.rows
        .iter()
        .map(|r| (model.leaf_index(r), model.predict_proba(r).unwrap()))
        .collect()
}

/// Annualized Sharpe of monthly log excess returns.
pub fn annual_sharpe(logr: &[f64], rf: &[f64]) -> f64 {
    let ex: Vec<f64> = logr.iter().zip(rf).map(|(r, f)| r - f).collect();
    let n = ex.len() as f64;
    let m = ex.iter().sum::<f64>() / n;
    let var = ex.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    m / var.sqrt() * 12f64.sqrt()
}

/// Worst ratio over all (peak, later trough) pairs, quadratic time.
pub fn drawdown(logr: &[f64]) -> f64 {
    let mut equity = vec![1.0];
    for r in logr {
        equity.push(equity.last().unwrap() * r.exp());
    }
    let mut worst: f64 = 0.0;
    for i in 0..equity.len() {
        for j in i..equity.len() {
            worst = worst.min(equity[j] / equity[i] - 1.0);
        }
    }
    worst
}

/// Textbook OLS with an intercept via the normal equations:
/// `(intercept, slope, intercept standard error)`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len();
    let design = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
    let yv = DVector::from_column_slice(y);
    let xtx_inv = (design.transpose() * &design).try_inverse().unwrap();
    let coef = &xtx_inv * design.transpose() * &yv;
    let resid = &yv - &design * &coef;
    let s2 = resid.dot(&resid) / (n as f64 - 2.0);
    (coef[0], coef[1], (s2 * xtx_inv[(0, 0)]).sqrt())
}

/// Strategy, benchmark and risk-free series with a planted monthly alpha.
pub fn planted_alpha(seed: u64, months: usize, alpha: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = rng(seed);
    let rf: Vec<f64> = (0..months)
        .map(|k| 0.001 + 0.0005 * (k as f64 / 20.0).sin())
        .collect();
    let bench: Vec<f64> = rf
        .iter()
        .map(|f| f + 0.006 + 0.045 * normal(&mut rng))
        .collect();
    let strat = bench
        .iter()
        .zip(&rf)
        .map(|(b, f)| f + alpha + 0.8 * (b - f) + 0.02 * normal(&mut rng))
        .collect();
    (strat, bench, rf)
}
