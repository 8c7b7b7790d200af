//! Python bindings for the frontier, forecast, return-model, optimizer and
//! backtest APIs.

use std::path::PathBuf;

use ::efcart::backtest::run_walkforward;
use ::efcart::cart::{self, OnlineSettings, Samples, TreeHyperparams, TreeModel};
use ::efcart::config::RunConfig;
use ::efcart::frontier::{self, FrontierInputs};
use ::efcart::metrics;
use ::efcart::optimizer::{self, OptimizationProblem};
use ::efcart::returns_model::{self, MarketDistribution, Side};
use ::efcart::synthetic::{self, SyntheticConfig};
use ::efcart::Error;
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyFileNotFoundError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::MissingFile(_) => PyFileNotFoundError::new_err(err.to_string()),
        Error::NonConvergence { .. } | Error::Io { .. } => PyRuntimeError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn problem(
    mean: Vec<f64>,
    cov: &[Vec<f64>],
    risk_free: f64,
    cap: Option<f64>,
) -> PyResult<OptimizationProblem> {
    Ok(OptimizationProblem::new(DVector::from_vec(mean), matrix(cov)?, risk_free).with_cap(cap))
}

/// A, B, C and the interpretable coefficients (r_mvp, sigma_mvp, u).
#[pyfunction]
fn frontier_coefficients<'py>(
    py: Python<'py>,
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let inputs = FrontierInputs::new(DVector::from_vec(mean), matrix(&cov)?).map_err(to_py)?;
    let abc = frontier::compute_abc(&inputs).map_err(to_py)?;
    let ic = frontier::interpretable_coefficients(&abc).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("a", abc.a)?;
    d.set_item("b", abc.b)?;
    d.set_item("c", abc.c)?;
    d.set_item("r_mvp", ic.r_mvp)?;
    d.set_item("sigma_mvp", ic.sigma_mvp)?;
    d.set_item("u", ic.u)?;
    Ok(d)
}

/// Frontier standard deviation at target return `r`.
#[pyfunction]
fn frontier_sigma(mean: Vec<f64>, cov: Vec<Vec<f64>>, r: f64) -> PyResult<f64> {
    let inputs = FrontierInputs::new(DVector::from_vec(mean), matrix(&cov)?).map_err(to_py)?;
    let abc = frontier::compute_abc(&inputs).map_err(to_py)?;
    frontier::frontier_sigma(&abc, r).map_err(to_py)
}

/// Market mean conditional on up-probability `p_up`.
#[pyfunction]
fn conditional_market(mu: f64, sigma: f64, p_up: f64) -> PyResult<f64> {
    let dist = MarketDistribution::new(mu, sigma).map_err(to_py)?;
    returns_model::conditional_market(dist, p_up).map_err(to_py)
}

/// Truncated-normal mean above (`up=True`) or below zero.
#[pyfunction]
fn mills_conditional(mu: f64, sigma: f64, up: bool) -> PyResult<f64> {
    let dist = MarketDistribution::new(mu, sigma).map_err(to_py)?;
    Ok(returns_model::mills_conditional(
        dist,
        if up { Side::AboveZero } else { Side::BelowZero },
    ))
}

#[pyfunction]
#[pyo3(signature = (mean, cov, risk_free, cap=None))]
fn tangency(
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
    risk_free: f64,
    cap: Option<f64>,
) -> PyResult<Vec<f64>> {
    let p = problem(mean, &cov, risk_free, cap)?;
    Ok(optimizer::tangency(&p).map_err(to_py)?.weights)
}

#[pyfunction]
fn min_variance(mean: Vec<f64>, cov: Vec<Vec<f64>>, target: f64) -> PyResult<Vec<f64>> {
    let p = problem(mean, &cov, 0.0, None)?.with_target(target);
    Ok(optimizer::min_variance(&p).map_err(to_py)?.weights)
}

#[pyfunction]
fn apply_fees(prev: Vec<f64>, new: Vec<f64>, fee_rate: f64) -> PyResult<f64> {
    metrics::apply_fees(&prev, &new, fee_rate).map_err(to_py)
}

#[pyfunction]
fn portfolio_metrics<'py>(
    py: Python<'py>,
    log_returns: Vec<f64>,
    risk_free: Vec<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let m = metrics::portfolio_metrics(&log_returns, &risk_free).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("sharpe", m.sharpe)?;
    d.set_item("annual_return", m.annual_return)?;
    d.set_item("max_drawdown", m.max_drawdown)?;
    Ok(d)
}

#[pyfunction]
fn classification_report<'py>(
    py: Python<'py>,
    forecasts: Vec<bool>,
    outcomes: Vec<bool>,
) -> PyResult<Bound<'py, PyDict>> {
    let r = metrics::classification_report(&forecasts, &outcomes).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("accuracy", r.accuracy)?;
    d.set_item("precision", r.precision)?;
    d.set_item("recall", r.recall)?;
    d.set_item("f1", r.f1)?;
    d.set_item("npv", r.npv)?;
    Ok(d)
}

/// A fitted classification tree.
#[pyclass(name = "Tree")]
struct PyTree {
    model: TreeModel,
}

#[pymethods]
impl PyTree {
    fn predict_proba(&self, row: Vec<f64>) -> PyResult<f64> {
        self.model.predict_proba(&row).map_err(to_py)
    }

    fn depth(&self) -> usize {
        self.model.root.depth()
    }

    fn export_text(&self) -> String {
        cart::export_tree_text(&self.model)
    }
}

/// Fits a depth-limited weighted Gini tree on `rows`.
#[pyfunction]
#[pyo3(signature = (rows, up, weights=None, max_depth=2))]
fn fit_tree(
    rows: Vec<Vec<f64>>,
    up: Vec<bool>,
    weights: Option<Vec<f64>>,
    max_depth: usize,
) -> PyResult<PyTree> {
    let n_features = rows.first().map_or(0, Vec::len);
    let weights = weights.unwrap_or_else(|| vec![1.0; rows.len()]);
    if weights.len() != rows.len() || up.len() != rows.len() {
        return Err(PyValueError::new_err(
            "rows, up and weights must have equal length",
        ));
    }
    let params = TreeHyperparams::new(max_depth, true, 5).map_err(to_py)?;
    let names: Vec<String> = (0..n_features).map(|i| format!("x{i}")).collect();
    let samples = Samples {
        rows: &rows,
        up: &up,
        weights: &weights,
    };
    let model = cart::fit_samples(&samples, None, &names, params).map_err(to_py)?;
    Ok(PyTree { model })
}

/// Writes a seeded synthetic dataset into `out_dir`.
#[pyfunction]
#[pyo3(signature = (out_dir, seed=7, months=216, assets=6))]
fn generate_synthetic(out_dir: PathBuf, seed: u64, months: usize, assets: usize) -> PyResult<()> {
    let cfg = SyntheticConfig {
        seed,
        months,
        n_assets: assets,
        ..SyntheticConfig::default()
    };
    let data = synthetic::generate(&cfg).map_err(to_py)?;
    synthetic::write_dir(&data, &out_dir).map_err(to_py)
}

/// Runs the backtest described by a TOML config and returns the metrics
/// report as a JSON string.
#[pyfunction]
#[pyo3(signature = (config_path, out_dir=None))]
fn run_backtest(config_path: PathBuf, out_dir: Option<PathBuf>) -> PyResult<String> {
    let cfg = RunConfig::load(&config_path).map_err(to_py)?;
    let bt = cfg.backtest_config();
    let data = cfg.load_market_data().map_err(to_py)?;
    let panel = data.panel().map_err(to_py)?;
    let (x, y) = data.features(&panel, bt.feature_set).map_err(to_py)?;
    let result = run_walkforward(&panel, &x, &y, &bt).map_err(to_py)?;
    let report =
        ::efcart::report::MetricsReport::new(&result, &bt, cfg.seed, Vec::new()).map_err(to_py)?;
    if let Some(dir) = out_dir {
        ::efcart::report::write_all(&result, &report, &dir).map_err(to_py)?;
    }
    serde_json::to_string(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Default online-learning settings as a dict.
#[pyfunction]
fn default_online_settings<'py>(py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
    let s = OnlineSettings::default();
    let d = PyDict::new(py);
    d.set_item("candidate_depths", s.candidate_depths)?;
    d.set_item("use_sample_weights", s.use_sample_weights)?;
    d.set_item("cv_folds", s.cv_folds)?;
    Ok(d)
}

#[pymodule(name = "efcart")]
fn efcart_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTree>()?;
    m.add_function(wrap_pyfunction!(frontier_coefficients, m)?)?;
    m.add_function(wrap_pyfunction!(frontier_sigma, m)?)?;
    m.add_function(wrap_pyfunction!(conditional_market, m)?)?;
    m.add_function(wrap_pyfunction!(mills_conditional, m)?)?;
    m.add_function(wrap_pyfunction!(tangency, m)?)?;
    m.add_function(wrap_pyfunction!(min_variance, m)?)?;
    m.add_function(wrap_pyfunction!(apply_fees, m)?)?;
    m.add_function(wrap_pyfunction!(portfolio_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(classification_report, m)?)?;
    m.add_function(wrap_pyfunction!(fit_tree, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(run_backtest, m)?)?;
    m.add_function(wrap_pyfunction!(default_online_settings, m)?)?;
    Ok(())
}
