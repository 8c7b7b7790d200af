mod common;

use common::*;
use efcart::optimizer::{tangency, tangency_closed_form, OptimizationProblem};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

const CAP: f64 = 1.5;

/// Maps an arbitrary vector to a portfolio with Σw = 1 and Σ|w| ≤ cap.
fn feasible(raw: &DVector<f64>, cap: f64) -> Option<DVector<f64>> {
    let s = raw.sum();
    if s.abs() < 1e-3 {
        return None;
    }
    let w = raw / s;
    let gross = w.abs().sum();
    if gross <= cap {
        return Some(w);
    }
    let n = w.len();
    let lambda = (cap - 1.0) / (gross - 1.0);
    Some(w * lambda + DVector::from_element(n, (1.0 - lambda) / n as f64))
}

#[test]
fn inactive_cap_reproduces_closed_form() {
    let mut rng = rng(31);
    let mut checked = 0;
    while checked < 100 {
        let n = rng.random_range(2..8);
        let mean = DVector::from_fn(n, |_, _| 0.01 + 0.004 * normal(&mut rng));
        let cov = random_spd(&mut rng, n) * 0.01;
        let rf = 0.002;
        let problem = OptimizationProblem::new(mean.clone(), cov.clone(), rf);
        let Ok(closed) = tangency_closed_form(&problem) else {
            continue;
        };
        let cw = closed.as_vector();
        if closed.gross_exposure() > CAP - 1e-3 || oracles::sharpe(&mean, &cov, rf, &cw) <= 0.0 {
            continue;
        }
        let w = tangency(&problem).unwrap().as_vector();
        assert!((&w - &cw).amax() < 1e-6, "{w} vs {cw}");
        checked += 1;
    }
}

#[test]
fn two_asset_grid_search() {
    let mut rng = rng(32);
    for _ in 0..50 {
        let mean = DVector::from_fn(2, |_, _| 0.01 + 0.01 * normal(&mut rng));
        let cov = random_spd(&mut rng, 2) * 0.01;
        let rf = 0.001;
        let best = oracles::two_asset_grid_sharpe(&mean, &cov, rf);
        let w = tangency(&OptimizationProblem::new(mean.clone(), cov.clone(), rf)).unwrap();
        let got = oracles::sharpe(&mean, &cov, rf, &w.as_vector());
        assert!(got >= best - 1e-9, "solver {got} below grid {best}");
        assert!((got - best).abs() < 1e-3);
        assert!(w.gross_exposure() <= CAP + 1e-6);
    }
}

#[test]
fn binding_cap_example() {
    // unconstrained optimum is long 2 / short 1
    let mean = DVector::from_vec(vec![0.02, 0.005]);
    let cov = DMatrix::from_row_slice(2, 2, &[0.0016, 0.0014, 0.0014, 0.0016]);
    let p = OptimizationProblem::new(mean.clone(), cov.clone(), 0.0);
    let closed = tangency_closed_form(&p).unwrap();
    assert!(closed.gross_exposure() > CAP);
    let w = tangency(&p).unwrap();
    assert!((w.gross_exposure() - CAP).abs() < 1e-6);
    assert!((w.weights[0] - 1.25).abs() < 1e-6 && (w.weights[1] + 0.25).abs() < 1e-6);
}

#[test]
fn closed_form_without_cap() {
    let mut rng = rng(33);
    for _ in 0..50 {
        let n = rng.random_range(2..8);
        let mean = random_mean(&mut rng, n);
        let cov = random_spd(&mut rng, n);
        let p = OptimizationProblem::new(mean.clone(), cov.clone(), 0.001).with_cap(None);
        let Ok(w) = tangency(&p) else { continue };
        // w ∝ V⁻¹(r - r_f e)
        let excess = mean.map(|m| m - 0.001);
        let z = lu_solve(&cov, &excess);
        let z = &z / z.sum();
        assert!((w.as_vector() - z).amax() < 1e-8 * (1.0 + w.as_vector().amax()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn capped_solution_is_feasible_and_dominates_random_portfolios(
        seed in any::<u64>(),
        n in 2usize..10,
    ) {
        let mut rng = rng(seed);
        let mean = DVector::from_fn(n, |_, _| 0.008 + 0.01 * normal(&mut rng));
        let cov = random_spd(&mut rng, n) * 0.01;
        let rf = 0.002;
        let w = tangency(&OptimizationProblem::new(mean.clone(), cov.clone(), rf)).unwrap();
        prop_assert!((w.sum() - 1.0).abs() < 1e-8);
        prop_assert!(w.gross_exposure() <= CAP + 1e-6);
        let best = oracles::sharpe(&mean, &cov, rf, &w.as_vector());
        for _ in 0..200 {
            let raw = DVector::from_fn(n, |_, _| normal(&mut rng) + 0.3);
            if let Some(other) = feasible(&raw, CAP) {
                prop_assert!(oracles::sharpe(&mean, &cov, rf, &other) <= best + 1e-9);
            }
        }
        for j in 0..n {
            let mut single = DVector::zeros(n);
            single[j] = 1.0;
            prop_assert!(oracles::sharpe(&mean, &cov, rf, &single) <= best + 1e-9);
        }
    }
}
