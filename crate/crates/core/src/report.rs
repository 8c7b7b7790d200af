//! Output files of a backtest run.

use std::path::Path;

use serde::Serialize;

use crate::backtest::{BacktestConfig, BacktestResult, NamedAlpha, NamedMetrics, BENCH_TANGENCY};
use crate::calendar::YearMonth;
use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::metrics::ClassificationReport;

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

fn write_rows(path: &Path, header: Vec<String>, rows: Vec<Vec<String>>) -> Result<()> {
    let err = |e: csv::Error| Error::parse(path.display().to_string(), e.to_string());
    let mut w = csv_writer(path)?;
    w.write_record(&header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn num(v: f64) -> String {
    format!("{v:.10}")
}

/// Month-end equity of every portfolio, starting from 1.
pub fn write_equity_csv(result: &BacktestResult, path: &Path) -> Result<()> {
    let paths: Vec<_> = result.paths().collect();
    let mut header = vec!["month".to_string()];
    header.extend(paths.iter().map(|p| p.name.clone()));
    let rows = result
        .months
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let mut row = vec![m.to_string()];
            row.extend(paths.iter().map(|p| num(p.months[i].equity)));
            row
        })
        .collect();
    write_rows(path, header, rows)
}

/// Target weights of the strategy and the tangency benchmark.
pub fn write_weights_csv(result: &BacktestResult, path: &Path) -> Result<()> {
    let mut header = vec!["month".to_string(), "portfolio".to_string()];
    header.extend(result.assets.iter().cloned());
    header.extend(["gross_exposure", "fee", "fallback"].map(String::from));
    let mut rows = Vec::new();
    for p in result
        .paths()
        .filter(|p| p.name == result.strategy.name || p.name == BENCH_TANGENCY)
    {
        for m in &p.months {
            let mut row = vec![m.month.to_string(), p.name.clone()];
            row.extend(m.weights.iter().map(|w| num(*w)));
            row.push(num(m.weights.iter().map(|w| w.abs()).sum()));
            row.push(num(m.fee));
            row.push(m.fallback.to_string());
            rows.push(row);
        }
    }
    write_rows(path, header, rows)
}

pub fn write_forecasts_csv(result: &BacktestResult, path: &Path) -> Result<()> {
    let header = [
        "month",
        "p_up",
        "forecast_up",
        "depth",
        "realized_up",
        "p_used",
        "market_mu",
        "market_sigma",
        "market_conditional",
    ]
    .map(String::from)
    .to_vec();
    let rows = result
        .forecasts
        .iter()
        .zip(&result.estimates)
        .map(|(f, e)| {
            vec![
                f.month.to_string(),
                num(f.p_up),
                f.up.to_string(),
                f.depth.map(|d| d.to_string()).unwrap_or_default(),
                f.realized_up.to_string(),
                num(e.p_used),
                num(e.market.mu),
                num(e.market.sigma),
                num(e.market_conditional),
            ]
        })
        .collect();
    write_rows(path, header, rows)
}

/// Forecast quality of one feature set, or why it could not be evaluated.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeatureSetEvaluation {
    pub feature_set: FeatureSet,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<ClassificationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub out_of_sample_start: YearMonth,
    pub out_of_sample_end: YearMonth,
    pub months: usize,
    pub config: BacktestConfig,
    pub classification: ClassificationReport,
    pub feature_sets: Vec<FeatureSetEvaluation>,
    pub portfolios: Vec<NamedMetrics>,
    pub alphas: Vec<NamedAlpha>,
    pub optimizer_fallbacks: Vec<(String, usize)>,
}

impl MetricsReport {
    pub fn new(
        result: &BacktestResult,
        config: &BacktestConfig,
        seed: u64,
        feature_sets: Vec<FeatureSetEvaluation>,
    ) -> Result<Self> {
        let (Some(&start), Some(&end)) = (result.months.first(), result.months.last()) else {
            return Err(Error::InsufficientData("empty backtest".into()));
        };
        Ok(MetricsReport {
            seed,
            out_of_sample_start: start,
            out_of_sample_end: end,
            months: result.months.len(),
            config: config.clone(),
            classification: result.classification()?,
            feature_sets,
            portfolios: result.portfolio_metrics()?,
            alphas: result.alphas()?,
            optimizer_fallbacks: result
                .paths()
                .map(|p| (p.name.clone(), p.fallbacks()))
                .collect(),
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Writes `equity.csv`, `weights.csv`, `forecasts.csv` and `metrics.json`.
pub fn write_all(result: &BacktestResult, metrics: &MetricsReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_equity_csv(result, &dir.join("equity.csv"))?;
    write_weights_csv(result, &dir.join("weights.csv"))?;
    write_forecasts_csv(result, &dir.join("forecasts.csv"))?;
    metrics.write_json(&dir.join("metrics.json"))
}
