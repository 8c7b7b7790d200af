//! Depth-limited weighted CART classifier for market direction, with
//! time-series cross-validated depth selection and the month-by-month
//! online retraining loop.
//!
//! Splits minimise the weighted Gini impurity `Σ_child 2·W_up·W_down / W`
//! over every (feature, midpoint threshold) pair. A sample goes right when
//! its value is `>= threshold`. Ties between equally good splits keep the
//! lower feature index, then the lower threshold.

use std::fmt::Write as _;
use std::ops::Range;

use serde::Serialize;

use crate::calendar::YearMonth;
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, LabelSeries};

/// Relative tolerance for comparing split costs.
pub const COST_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TreeHyperparams {
    pub max_depth: usize,
    pub use_sample_weights: bool,
    pub cv_folds: usize,
}

impl TreeHyperparams {
    pub fn new(max_depth: usize, use_sample_weights: bool, cv_folds: usize) -> Result<Self> {
        if !(1..=2).contains(&max_depth) {
            return Err(Error::Config(format!(
                "max_depth must be 1 or 2, got {max_depth}"
            )));
        }
        if cv_folds < 2 {
            return Err(Error::Config(format!(
                "cv_folds must be at least 2, got {cv_folds}"
            )));
        }
        Ok(TreeHyperparams {
            max_depth,
            use_sample_weights,
            cv_folds,
        })
    }
}

impl Default for TreeHyperparams {
    fn default() -> Self {
        TreeHyperparams {
            max_depth: 1,
            use_sample_weights: true,
            cv_folds: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Node {
    Leaf {
        up_weight: f64,
        weight: f64,
        n_samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        up_weight: f64,
        weight: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_nodes(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { left, right, .. } => 1 + left.n_nodes() + right.n_nodes(),
        }
    }

    fn weights(&self) -> (f64, f64) {
        match self {
            Node::Leaf {
                up_weight, weight, ..
            }
            | Node::Split {
                up_weight, weight, ..
            } => (*up_weight, *weight),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TreeModel {
    pub root: Node,
    pub hyperparams: TreeHyperparams,
    pub feature_names: Vec<String>,
    pub trained_through: Option<YearMonth>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Forecast {
    pub month: Option<YearMonth>,
    pub p_up: f64,
    pub up: bool,
}

impl Forecast {
    pub fn from_probability(month: Option<YearMonth>, p_up: f64) -> Self {
        Forecast {
            month,
            p_up,
            up: p_up >= 0.5,
        }
    }
}

/// Training samples in row form.
#[derive(Clone, Copy, Debug)]
pub struct Samples<'a> {
    pub rows: &'a [Vec<f64>],
    pub up: &'a [bool],
    pub weights: &'a [f64],
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct SplitChoice {
    feature: usize,
    threshold: f64,
    cost: f64,
}

fn gini_cost(up: f64, total: f64) -> f64 {
    if total > 0.0 {
        2.0 * up * (total - up) / total
    } else {
        0.0
    }
}

fn best_split(
    samples: &Samples<'_>,
    idx: &[usize],
    n_features: usize,
    total: f64,
    up_total: f64,
) -> Option<SplitChoice> {
    let parent = gini_cost(up_total, total);
    let tol = COST_TOL * total;
    let mut best: Option<SplitChoice> = None;
    let mut order = idx.to_vec();
    for f in 0..n_features {
        order.sort_by(|&a, &b| {
            samples.rows[a][f]
                .total_cmp(&samples.rows[b][f])
                .then(a.cmp(&b))
        });
        let (mut w_left, mut u_left) = (0.0, 0.0);
        for k in 0..order.len() - 1 {
            let i = order[k];
            w_left += samples.weights[i];
            if samples.up[i] {
                u_left += samples.weights[i];
            }
            let lo = samples.rows[i][f];
            let hi = samples.rows[order[k + 1]][f];
            if lo == hi {
                continue;
            }
            let mut threshold = lo + (hi - lo) / 2.0;
            if threshold <= lo {
                threshold = hi;
            }
            let cost = gini_cost(u_left, w_left) + gini_cost(up_total - u_left, total - w_left);
            if best.is_none_or(|b| cost < b.cost - tol) {
                best = Some(SplitChoice {
                    feature: f,
                    threshold,
                    cost,
                });
            }
        }
    }
    best.filter(|b| b.cost < parent - tol)
}

fn grow(samples: &Samples<'_>, idx: Vec<usize>, depth_left: usize, n_features: usize) -> Node {
    let weight: f64 = idx.iter().map(|&i| samples.weights[i]).sum();
    let up_weight: f64 = idx
        .iter()
        .filter(|&&i| samples.up[i])
        .map(|&i| samples.weights[i])
        .sum();
    let leaf = |idx: &[usize]| Node::Leaf {
        up_weight,
        weight,
        n_samples: idx.len(),
    };
    if depth_left == 0 || idx.len() < 2 || gini_cost(up_weight, weight) == 0.0 {
        return leaf(&idx);
    }
    match best_split(samples, &idx, n_features, weight, up_weight) {
        None => leaf(&idx),
        Some(choice) => {
            let (right, left): (Vec<usize>, Vec<usize>) = idx
                .iter()
                .partition(|&&i| samples.rows[i][choice.feature] >= choice.threshold);
            Node::Split {
                feature: choice.feature,
                threshold: choice.threshold,
                up_weight,
                weight,
                left: Box::new(grow(samples, left, depth_left - 1, n_features)),
                right: Box::new(grow(samples, right, depth_left - 1, n_features)),
            }
        }
    }
}

/// Fits a tree on the samples at `idx` (all rows when `None`).
pub fn fit_samples(
    samples: &Samples<'_>,
    idx: Option<&[usize]>,
    feature_names: &[String],
    params: TreeHyperparams,
) -> Result<TreeModel> {
    let idx: Vec<usize> = match idx {
        Some(idx) => idx.to_vec(),
        None => (0..samples.rows.len()).collect(),
    };
    if idx.is_empty() {
        return Err(Error::InsufficientData("no training samples".into()));
    }
    let n_features = feature_names.len();
    if let Some(&bad) = idx.iter().find(|&&i| samples.rows[i].len() != n_features) {
        return Err(Error::DimensionMismatch {
            expected: n_features,
            got: samples.rows[bad].len(),
        });
    }
    if let Some(&bad) = idx
        .iter()
        .find(|&&i| !(samples.weights[i] >= 0.0 && samples.weights[i].is_finite()))
    {
        return Err(Error::InvalidData(format!(
            "sample weight {} is not a finite non-negative number",
            samples.weights[bad]
        )));
    }
    let total: f64 = idx.iter().map(|&i| samples.weights[i]).sum();
    if total <= 0.0 {
        return Err(Error::InsufficientData(
            "total sample weight is zero".into(),
        ));
    }
    Ok(TreeModel {
        root: grow(samples, idx, params.max_depth, n_features),
        hyperparams: params,
        feature_names: feature_names.to_vec(),
        trained_through: None,
    })
}

/// Per-sample weights: absolute returns when enabled, otherwise ones.
pub fn sample_weights(y: &LabelSeries, params: TreeHyperparams) -> Vec<f64> {
    if params.use_sample_weights {
        y.magnitude.clone()
    } else {
        vec![1.0; y.len()]
    }
}

pub fn fit_tree(x: &FeatureMatrix, y: &LabelSeries, params: TreeHyperparams) -> Result<TreeModel> {
    if x.dates != y.dates {
        return Err(Error::Alignment("feature and label months differ".into()));
    }
    let weights = sample_weights(y, params);
    let samples = Samples {
        rows: &x.values,
        up: &y.up,
        weights: &weights,
    };
    let mut model = fit_samples(&samples, None, &x.feature_names, params)?;
    model.trained_through = x.dates.last().copied();
    Ok(model)
}

impl TreeModel {
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_names.len(),
                got: x.len(),
            });
        }
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf {
                    up_weight, weight, ..
                } => return Ok(up_weight / weight),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if x[*feature] >= *threshold {
                        right
                    } else {
                        left
                    };
                }
            }
        }
    }

    /// Leaf index (in depth-first, left-first order) reached by `x`.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        fn walk(node: &Node, x: &[f64], offset: usize) -> usize {
            match node {
                Node::Leaf { .. } => offset,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    if x[*feature] >= *threshold {
                        walk(right, x, offset + count_leaves(left))
                    } else {
                        walk(left, x, offset)
                    }
                }
            }
        }
        walk(&self.root, x, 0)
    }
}

fn count_leaves(node: &Node) -> usize {
    match node {
        Node::Leaf { .. } => 1,
        Node::Split { left, right, .. } => count_leaves(left) + count_leaves(right),
    }
}

pub fn predict(model: &TreeModel, x: &[f64]) -> Result<Forecast> {
    Ok(Forecast::from_probability(None, model.predict_proba(x)?))
}

/// Contiguous train/validation ranges where split `i` trains on the first
/// `i` of `k + 1` blocks and validates on block `i + 1`. The first block
/// absorbs the remainder.
pub fn time_series_split(n: usize, k: usize) -> Result<Vec<(Range<usize>, Range<usize>)>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if n < 2 * (k + 1) {
        return Err(Error::InsufficientData(format!(
            "{n} samples are too few for {k} time-series folds (need {})",
            2 * (k + 1)
        )));
    }
    let block = n / (k + 1);
    let first = block + n % (k + 1);
    Ok((0..k)
        .map(|i| {
            let end = first + i * block;
            (0..end, end..end + block)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DepthSelection {
    pub hyperparams: TreeHyperparams,
    /// Mean validation accuracy per candidate depth.
    pub scores: Vec<(usize, f64)>,
}

/// Mean unweighted validation accuracy of each candidate depth over the
/// time-series splits; the best wins and ties go to the shallower tree.
pub fn select_depth(
    x: &FeatureMatrix,
    y: &LabelSeries,
    candidate_depths: &[usize],
    base: TreeHyperparams,
) -> Result<DepthSelection> {
    let weights = sample_weights(y, base);
    let samples = Samples {
        rows: &x.values,
        up: &y.up,
        weights: &weights,
    };
    select_depth_samples(&samples, &x.feature_names, candidate_depths, base)
}

pub fn select_depth_samples(
    samples: &Samples<'_>,
    feature_names: &[String],
    candidate_depths: &[usize],
    base: TreeHyperparams,
) -> Result<DepthSelection> {
    if candidate_depths.is_empty() {
        return Err(Error::Config("no candidate depths".into()));
    }
    let splits = time_series_split(samples.rows.len(), base.cv_folds)?;
    let mut depths = candidate_depths.to_vec();
    depths.sort_unstable();
    depths.dedup();
    let mut scores = Vec::with_capacity(depths.len());
    for &depth in &depths {
        let params = TreeHyperparams::new(depth, base.use_sample_weights, base.cv_folds)?;
        let mut acc_sum = 0.0;
        for (train, val) in &splits {
            let idx: Vec<usize> = train.clone().collect();
            let model = fit_samples(samples, Some(&idx), feature_names, params)?;
            let mut correct = 0usize;
            for i in val.clone() {
                if (model.predict_proba(&samples.rows[i])? >= 0.5) == samples.up[i] {
                    correct += 1;
                }
            }
            acc_sum += correct as f64 / val.len() as f64;
        }
        scores.push((depth, acc_sum / splits.len() as f64));
    }
    let mut best = scores[0];
    for &s in &scores[1..] {
        if s.1 > best.1 + 1e-12 {
            best = s;
        }
    }
    Ok(DepthSelection {
        hyperparams: TreeHyperparams::new(best.0, base.use_sample_weights, base.cv_folds)?,
        scores,
    })
}

/// Settings for the online loop.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OnlineSettings {
    pub candidate_depths: Vec<usize>,
    pub use_sample_weights: bool,
    pub cv_folds: usize,
}

impl Default for OnlineSettings {
    fn default() -> Self {
        OnlineSettings {
            candidate_depths: vec![1, 2],
            use_sample_weights: true,
            cv_folds: 5,
        }
    }
}

impl OnlineSettings {
    fn base(&self) -> Result<TreeHyperparams> {
        TreeHyperparams::new(1, self.use_sample_weights, self.cv_folds)
    }
}

/// A forecast together with the model that produced it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OnlineForecast {
    pub forecast: Forecast,
    pub model: TreeModel,
    pub selection: DepthSelection,
}

/// Refits from scratch on every row dated before `target` and forecasts
/// `target` from its (lagged) feature row.
pub fn forecast_month(
    x: &FeatureMatrix,
    y: &LabelSeries,
    settings: &OnlineSettings,
    target: YearMonth,
) -> Result<OnlineForecast> {
    let n_train = x.dates.partition_point(|m| *m < target);
    let row = x
        .row_for(target)
        .ok_or_else(|| Error::OutOfRange(format!("no feature row for {target}")))?;
    let base = settings.base()?;
    let weights = sample_weights(y, base);
    let samples = Samples {
        rows: &x.values[..n_train],
        up: &y.up[..n_train],
        weights: &weights[..n_train],
    };
    let selection =
        select_depth_samples(&samples, &x.feature_names, &settings.candidate_depths, base)?;
    let mut model = fit_samples(&samples, None, &x.feature_names, selection.hyperparams)?;
    model.trained_through = n_train.checked_sub(1).map(|i| x.dates[i]);
    let forecast = Forecast::from_probability(Some(target), model.predict_proba(row)?);
    Ok(OnlineForecast {
        forecast,
        model,
        selection,
    })
}

/// Incremental online learner: observes one month at a time, retrains from
/// scratch on everything seen so far and forecasts the following month.
#[derive(Clone, Debug)]
pub struct OnlineCart {
    settings: OnlineSettings,
    feature_names: Vec<String>,
    rows: Vec<Vec<f64>>,
    up: Vec<bool>,
    magnitude: Vec<f64>,
    trained_through: Option<YearMonth>,
    model: Option<TreeModel>,
    selection: Option<DepthSelection>,
}

impl OnlineCart {
    pub fn new(feature_names: Vec<String>, settings: OnlineSettings) -> Self {
        OnlineCart {
            settings,
            feature_names,
            rows: Vec::new(),
            up: Vec::new(),
            magnitude: Vec::new(),
            trained_through: None,
            model: None,
            selection: None,
        }
    }

    pub fn trained_through(&self) -> Option<YearMonth> {
        self.trained_through
    }

    pub fn model(&self) -> Option<&TreeModel> {
        self.model.as_ref()
    }

    pub fn selection(&self) -> Option<&DepthSelection> {
        self.selection.as_ref()
    }

    /// Adds an observed (features, outcome) pair without retraining.
    pub fn push(&mut self, month: YearMonth, row: &[f64], up: bool, magnitude: f64) -> Result<()> {
        if row.len() != self.feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_names.len(),
                got: row.len(),
            });
        }
        if self.trained_through.is_some_and(|m| month <= m) {
            return Err(Error::InvalidData(format!(
                "month {month} already observed"
            )));
        }
        self.rows.push(row.to_vec());
        self.up.push(up);
        self.magnitude.push(magnitude);
        self.trained_through = Some(month);
        Ok(())
    }

    pub fn retrain(&mut self) -> Result<&TreeModel> {
        let base = self.settings.base()?;
        let weights = if base.use_sample_weights {
            self.magnitude.clone()
        } else {
            vec![1.0; self.rows.len()]
        };
        let samples = Samples {
            rows: &self.rows,
            up: &self.up,
            weights: &weights,
        };
        let selection = select_depth_samples(
            &samples,
            &self.feature_names,
            &self.settings.candidate_depths,
            base,
        )?;
        let mut model = fit_samples(&samples, None, &self.feature_names, selection.hyperparams)?;
        model.trained_through = self.trained_through;
        self.selection = Some(selection);
        Ok(self.model.insert(model))
    }

    pub fn forecast(&self, month: YearMonth, row: &[f64]) -> Result<Forecast> {
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| Error::InsufficientData("online model has not been trained".into()))?;
        Ok(Forecast::from_probability(
            Some(month),
            model.predict_proba(row)?,
        ))
    }

    /// Observes month `t`, retrains, and forecasts `next` from its feature row.
    pub fn online_step(
        &mut self,
        observed: YearMonth,
        row: &[f64],
        up: bool,
        magnitude: f64,
        next: YearMonth,
        next_row: &[f64],
    ) -> Result<Forecast> {
        self.push(observed, row, up, magnitude)?;
        self.retrain()?;
        self.forecast(next, next_row)
    }
}

/// Indented one-line-per-node rendering. For a split, the first child is
/// the `< threshold` branch and the second the `>= threshold` branch.
pub fn export_tree_text(model: &TreeModel) -> String {
    fn render(node: &Node, names: &[String], indent: usize, prefix: &str, out: &mut String) {
        let pad = "  ".repeat(indent);
        let (up, w) = node.weights();
        match node {
            Node::Leaf { n_samples, .. } => {
                let p = up / w;
                writeln!(
                    out,
                    "{pad}{prefix}leaf p_up={p:.4} [up={up:.6} down={:.6} n={n_samples}]",
                    w - up
                )
                .expect("write to string");
            }
            Node::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                let name = names.get(*feature).map(String::as_str).unwrap_or("?");
                writeln!(
                    out,
                    "{pad}{prefix}{name} < {threshold:.6e} [up={up:.6} down={:.6}]",
                    w - up
                )
                .expect("write to string");
                render(left, names, indent + 1, "yes: ", out);
                render(right, names, indent + 1, "no:  ", out);
            }
        }
    }
    let mut out = String::new();
    render(&model.root, &model.feature_names, 0, "", &mut out);
    out
}
