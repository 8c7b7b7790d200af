//! Dense primal active-set solver for small strictly convex QPs:
//!
//! ```text
//! min ½ xᵀHx + gᵀx   s.t.  A_eq x = b_eq,  A_in x ≥ b_in
//! ```
//!
//! started from a feasible point.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const FEAS_TOL: f64 = 1e-12;
const STEP_TOL: f64 = 1e-12;
const MULT_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// Indices of the inequality rows active at the solution.
    pub active: Vec<usize>,
}

fn rank(rows: &[DVector<f64>]) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let m = DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
    m.rank(1e-10)
}

/// Solves the equality-constrained subproblem on the working set, returning
/// the step and the multipliers of the working rows.
fn solve_eqp(
    h: &DMatrix<f64>,
    grad: &DVector<f64>,
    rows: &[DVector<f64>],
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = h.nrows();
    let m = rows.len();
    let mut kkt = DMatrix::zeros(n + m, n + m);
    kkt.view_mut((0, 0), (n, n)).copy_from(h);
    for (k, a) in rows.iter().enumerate() {
        for j in 0..n {
            kkt[(j, n + k)] = -a[j];
            kkt[(n + k, j)] = a[j];
        }
    }
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-grad));
    let sol = kkt
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Degenerate("singular KKT system in QP subproblem".into()))?;
    Ok((sol.rows(0, n).into_owned(), sol.rows(n, m).into_owned()))
}

/// Primal active-set iterations from the feasible point `x0`.
pub fn solve(problem: &QpProblem, x0: DVector<f64>, max_iter: usize) -> Result<QpSolution> {
    let h = &problem.hessian;
    let n_eq = problem.eq_matrix.nrows();
    let n_in = problem.ineq_matrix.nrows();
    let eq_rows: Vec<DVector<f64>> = (0..n_eq)
        .map(|i| problem.eq_matrix.row(i).transpose())
        .collect();
    let in_rows: Vec<DVector<f64>> = (0..n_in)
        .map(|i| problem.ineq_matrix.row(i).transpose())
        .collect();

    let mut x = x0;
    for (i, a) in eq_rows.iter().enumerate() {
        let r = a.dot(&x) - problem.eq_rhs[i];
        if r.abs() > 1e-9 {
            return Err(Error::Infeasible(format!(
                "QP start violates equality {i} by {r:e}"
            )));
        }
    }

    let mut working: Vec<usize> = Vec::new();
    let mut basis = eq_rows.clone();
    for (i, a) in in_rows.iter().enumerate() {
        let slack = a.dot(&x) - problem.ineq_rhs[i];
        if slack < -1e-9 {
            return Err(Error::Infeasible(format!(
                "QP start violates inequality {i} by {slack:e}"
            )));
        }
        if slack <= FEAS_TOL {
            basis.push(a.clone());
            if rank(&basis) == basis.len() {
                working.push(i);
            } else {
                basis.pop();
            }
        }
    }

    // set after a full unblocked step, which lands on the working-set minimizer
    let mut at_minimizer = false;
    for iter in 0..max_iter {
        let grad = h * &x + &problem.gradient;
        let mut rows = eq_rows.clone();
        rows.extend(working.iter().map(|&i| in_rows[i].clone()));
        let (p, lambda) = solve_eqp(h, &grad, &rows)?;

        let model_change = grad.dot(&p) + 0.5 * p.dot(&(h * &p));
        if at_minimizer
            || p.amax() <= STEP_TOL * (1.0 + x.amax())
            || model_change.abs() <= 1e-18 * (1.0 + grad.amax())
        {
            at_minimizer = false;
            // multipliers of working inequalities sit after the equalities
            let mut most_negative: Option<(usize, f64)> = None;
            for (k, _) in working.iter().enumerate() {
                let l = lambda[n_eq + k];
                if l < -MULT_TOL && most_negative.is_none_or(|(_, best)| l < best) {
                    most_negative = Some((k, l));
                }
            }
            match most_negative {
                None => {
                    return Ok(QpSolution {
                        x,
                        iterations: iter,
                        active: working,
                    });
                }
                Some((k, _)) => {
                    working.remove(k);
                    continue;
                }
            }
        }

        let mut alpha = 1.0;
        let mut blocking = None;
        for (i, a) in in_rows.iter().enumerate() {
            if working.contains(&i) {
                continue;
            }
            let ap = a.dot(&p);
            if ap < -1e-15 {
                let slack = (a.dot(&x) - problem.ineq_rhs[i]).max(0.0);
                let step = slack / -ap;
                if step < alpha {
                    alpha = step;
                    blocking = Some(i);
                }
            }
        }
        x += alpha * &p;
        match blocking {
            Some(i) => working.push(i),
            None => at_minimizer = true,
        }
    }
    Err(Error::Degenerate(format!(
        "QP active-set iteration limit {max_iter} reached"
    )))
}
