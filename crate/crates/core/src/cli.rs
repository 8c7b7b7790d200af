//! Command-line interface.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::info;

use crate::backtest::{forecast_evaluation, run_walkforward, MarketData};
use crate::calendar::YearMonth;
use crate::cart::{export_tree_text, forecast_month};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::frontier::{monthly_coefficients, write_coefficients_csv};
use crate::report::{self, FeatureSetEvaluation, MetricsReport};
use crate::synthetic::{self, SyntheticConfig};

#[derive(Debug, Parser)]
#[command(
    name = "efcart",
    version,
    about = "Frontier-coefficient market forecasts and capped tangency backtests"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Feature set: ef_coefs, technical or fama_french.
    #[arg(long, global = true)]
    pub features: Option<FeatureSet>,
    /// First out-of-sample month (YYYY-MM).
    #[arg(long, global = true)]
    pub start: Option<YearMonth>,
    /// Last out-of-sample month (YYYY-MM).
    #[arg(long, global = true)]
    pub end: Option<YearMonth>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Walk-forward backtest; writes equity, weights, forecasts and metrics.
    Backtest,
    /// Monthly frontier coefficients; prints one month or writes all to CSV.
    Frontier {
        #[arg(long)]
        month: Option<YearMonth>,
    },
    /// Prints the tree that forecasts the given month.
    Tree {
        #[arg(long)]
        month: Option<YearMonth>,
    },
    /// Writes the aligned feature matrix and labels to CSV.
    FeaturesExport,
    /// Generates a seeded synthetic dataset and a matching config.
    Synth {
        #[arg(long, default_value_t = 216)]
        months: usize,
        #[arg(long, default_value_t = 6)]
        assets: usize,
    },
}

/// Exit status for an error: 2 for missing inputs and bad configuration,
/// 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::MissingFile(_) | Error::Config(_) => 2,
        _ => 1,
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(set) = cli.features {
        cfg.features = set;
    }
    if let Some(start) = cli.start {
        cfg.in_sample_end = start.prev();
    }
    if let Some(end) = cli.end {
        cfg.end = Some(end);
    }
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli)?;
    match cli.command {
        Command::Backtest => cmd_backtest(&cfg),
        Command::Frontier { month } => cmd_frontier(&cfg, month),
        Command::Tree { month } => cmd_tree(&cfg, month),
        Command::FeaturesExport => cmd_features_export(&cfg),
        Command::Synth { months, assets } => cmd_synth(&cfg, months, assets),
    }
}

fn cmd_backtest(cfg: &RunConfig) -> Result<()> {
    let data = cfg.load_market_data()?;
    let bt = cfg.backtest_config();
    bt.validate()?;
    let panel = data.panel()?;
    let (x, y) = data.features(&panel, bt.feature_set)?;
    let result = run_walkforward(&panel, &x, &y, &bt)?;
    let feature_sets = FeatureSet::ALL
        .into_iter()
        .map(|set| match forecast_evaluation(&data, &panel, set, &bt) {
            Ok((_, r)) => FeatureSetEvaluation {
                feature_set: set,
                report: Some(r),
                error: None,
            },
            Err(e) => FeatureSetEvaluation {
                feature_set: set,
                report: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let metrics = MetricsReport::new(&result, &bt, cfg.seed, feature_sets)?;
    report::write_all(&result, &metrics, &cfg.out_dir)?;
    for m in &metrics.portfolios {
        println!(
            "{:<18} sharpe {:>7.3}  annual {:>8.2}%  max drawdown {:>8.2}%",
            m.portfolio,
            m.metrics.sharpe,
            100.0 * m.metrics.annual_return,
            100.0 * m.metrics.max_drawdown
        );
    }
    println!(
        "forecast accuracy {:.3} over {} months ({} to {})",
        metrics.classification.accuracy,
        metrics.months,
        metrics.out_of_sample_start,
        metrics.out_of_sample_end
    );
    info!("wrote results to {}", cfg.out_dir.display());
    Ok(())
}

fn cmd_frontier(cfg: &RunConfig, month: Option<YearMonth>) -> Result<()> {
    let panel = cfg.load_market_data()?.panel()?;
    let rows = monthly_coefficients(&panel)?;
    match month {
        Some(m) => {
            let row = rows
                .iter()
                .find(|r| r.month == m)
                .ok_or_else(|| Error::OutOfRange(format!("no coefficients for {m}")))?;
            let (c, ic, d) = (row.coefficients, row.interpretable, row.decomposition);
            println!("month        {m}");
            println!("A            {:.10e}", c.a);
            println!("B            {:.10e}", c.b);
            println!("C            {:.10e}", c.c);
            println!("r_mvp        {:.10e}", ic.r_mvp);
            println!("sigma_mvp    {:.10e}", ic.sigma_mvp);
            println!("u            {:.10e}", ic.u);
            println!("mahalanobis  {:.10e}", d.mahalanobis);
            println!("cos_spread   {:.10e}", d.cosine_spread);
            println!("product      {:.10e}", d.product());
        }
        None => {
            create_dir(&cfg.out_dir)?;
            let path = cfg.out_dir.join("frontier.csv");
            write_coefficients_csv(&rows, &path)?;
            println!("wrote {} months to {}", rows.len(), path.display());
        }
    }
    Ok(())
}

fn cmd_tree(cfg: &RunConfig, month: Option<YearMonth>) -> Result<()> {
    let data: MarketData = cfg.load_market_data()?;
    let panel = data.panel()?;
    let (x, y) = data.features(&panel, cfg.features)?;
    let target = month.unwrap_or(cfg.in_sample_end.next());
    let bt = cfg.backtest_config();
    let last = x.dates.last().copied();
    if target <= bt.in_sample_end || bt.end.or(last).is_none_or(|e| target > e) {
        return Err(Error::OutOfRange(format!(
            "no model for month {target}: outside the out-of-sample horizon"
        )));
    }
    let f = forecast_month(&x, &y, &bt.online, target)?;
    print!("{}", export_tree_text(&f.model));
    println!(
        "forecast {target}: p_up {:.4} ({})",
        f.forecast.p_up,
        if f.forecast.up { "up" } else { "down" }
    );
    Ok(())
}

fn cmd_features_export(cfg: &RunConfig) -> Result<()> {
    let data = cfg.load_market_data()?;
    let panel = data.panel()?;
    let (x, y) = data.features(&panel, cfg.features)?;
    create_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join(format!("features_{}.csv", cfg.features));
    let mut labelled = x.clone();
    labelled.feature_names.push("label_up".into());
    labelled.feature_names.push("label_magnitude".into());
    for (row, (up, mag)) in labelled
        .values
        .iter_mut()
        .zip(y.up.iter().zip(&y.magnitude))
    {
        row.push(if *up { 1.0 } else { 0.0 });
        row.push(*mag);
    }
    labelled.write_csv(&path)?;
    println!("wrote {} rows to {}", x.len(), path.display());
    Ok(())
}

fn cmd_synth(cfg: &RunConfig, months: usize, assets: usize) -> Result<()> {
    let synth = SyntheticConfig {
        seed: cfg.seed,
        months,
        n_assets: assets,
        ..SyntheticConfig::default()
    };
    let data = synthetic::generate(&synth)?;
    let dir = cfg.out_dir.join("data");
    synthetic::write_dir(&data, &dir)?;
    let in_sample_end = synth.start.plus(months as i64 / 2 - 1);
    let run = RunConfig {
        data_dir: PathBuf::from("data"),
        market: synth.market_ticker.clone(),
        in_sample_end,
        seed: cfg.seed,
        out_dir: PathBuf::from("out"),
        ..RunConfig::default()
    };
    let text = toml::to_string(&run).map_err(|e| Error::Config(e.to_string()))?;
    let path = cfg.out_dir.join("config.toml");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    println!(
        "wrote synthetic data to {} and config to {}",
        dir.display(),
        path.display()
    );
    Ok(())
}
