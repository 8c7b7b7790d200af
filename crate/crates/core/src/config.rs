//! Run configuration: a flat TOML file, overridable from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backtest::{BacktestConfig, MarketData, MeanWindow};
use crate::calendar::YearMonth;
use crate::cart::OnlineSettings;
use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::market_data::{load_factor_file, load_price_csv, PriceSchema};
use crate::optimizer::DEFAULT_GROSS_CAP;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Directory holding one `<ticker>.csv` per series.
    pub data_dir: PathBuf,
    /// Asset tickers; empty means every CSV in `data_dir` except the market
    /// and factor files.
    pub tickers: Vec<String>,
    pub market: String,
    /// Factor file, relative to `data_dir` unless absolute.
    pub factor_file: PathBuf,
    pub date_column: String,
    pub price_column: String,
    pub features: FeatureSet,
    pub in_sample_end: YearMonth,
    pub end: Option<YearMonth>,
    pub fee_rate: f64,
    pub gross_cap: f64,
    pub uncapped: bool,
    pub cap_benchmarks: bool,
    pub covariance_months: usize,
    pub trading_days_per_month: f64,
    pub discretize: bool,
    pub benchmark_means: MeanWindow,
    pub candidate_depths: Vec<usize>,
    pub use_sample_weights: bool,
    pub cv_folds: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let bt = BacktestConfig::default();
        RunConfig {
            data_dir: PathBuf::from("."),
            tickers: Vec::new(),
            market: "MKT".into(),
            factor_file: PathBuf::from("factors.csv"),
            date_column: PriceSchema::default().date_column,
            price_column: PriceSchema::default().price_column,
            features: bt.feature_set,
            in_sample_end: bt.in_sample_end,
            end: None,
            fee_rate: bt.fee_rate,
            gross_cap: DEFAULT_GROSS_CAP,
            uncapped: false,
            cap_benchmarks: bt.cap_benchmarks,
            covariance_months: bt.covariance_months,
            trading_days_per_month: bt.trading_days_per_month,
            discretize: bt.discretize,
            benchmark_means: bt.benchmark_means,
            candidate_depths: bt.online.candidate_depths,
            use_sample_weights: bt.online.use_sample_weights,
            cv_folds: bt.online.cv_folds,
            seed: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.data_dir = base.join(&cfg.data_dir);
        cfg.out_dir = base.join(&cfg.out_dir);
        Ok(cfg)
    }

    pub fn factor_path(&self) -> PathBuf {
        self.data_dir.join(&self.factor_file)
    }

    pub fn schema(&self) -> PriceSchema {
        PriceSchema {
            date_column: self.date_column.clone(),
            price_column: self.price_column.clone(),
        }
    }

    pub fn backtest_config(&self) -> BacktestConfig {
        BacktestConfig {
            in_sample_end: self.in_sample_end,
            end: self.end,
            fee_rate: self.fee_rate,
            gross_cap: (!self.uncapped).then_some(self.gross_cap),
            cap_benchmarks: self.cap_benchmarks,
            feature_set: self.features,
            covariance_months: self.covariance_months,
            trading_days_per_month: self.trading_days_per_month,
            discretize: self.discretize,
            benchmark_means: self.benchmark_means,
            online: OnlineSettings {
                candidate_depths: self.candidate_depths.clone(),
                use_sample_weights: self.use_sample_weights,
                cv_folds: self.cv_folds,
            },
            fixed_probability: None,
        }
    }

    fn asset_tickers(&self) -> Result<Vec<String>> {
        if !self.tickers.is_empty() {
            return Ok(self.tickers.clone());
        }
        if !self.data_dir.is_dir() {
            return Err(Error::MissingFile(self.data_dir.clone()));
        }
        let factor = self.factor_path();
        let entries =
            std::fs::read_dir(&self.data_dir).map_err(|e| Error::io(&self.data_dir, e))?;
        let mut tickers = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&self.data_dir, e))?.path();
            if path.extension().is_some_and(|e| e == "csv") && path != factor {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    if stem != self.market {
                        tickers.push(stem.to_string());
                    }
                }
            }
        }
        tickers.sort();
        Ok(tickers)
    }

    pub fn load_market_data(&self) -> Result<MarketData> {
        let schema = self.schema();
        let load = |t: &str| load_price_csv(&self.data_dir.join(format!("{t}.csv")), &schema);
        let assets = self
            .asset_tickers()?
            .iter()
            .map(|t| load(t))
            .collect::<Result<Vec<_>>>()?;
        Ok(MarketData {
            assets,
            market: load(&self.market)?,
            factors: load_factor_file(&self.factor_path())?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_keys_and_defaults() {
        let cfg: RunConfig = toml::from_str(
            "data_dir = \"d\"\nfeatures = \"technical\"\nin_sample_end = \"2005-06\"\nfee_rate = 0.002\n",
        )
        .unwrap();
        assert_eq!(cfg.features, FeatureSet::Technical);
        assert_eq!(cfg.in_sample_end, YearMonth::new(2005, 6).unwrap());
        let bt = cfg.backtest_config();
        assert_eq!(bt.fee_rate, 0.002);
        assert_eq!(bt.gross_cap, Some(1.5));
        assert_eq!(bt.online.candidate_depths, vec![1, 2]);
    }

    #[test]
    fn rejects_unknown_keys_and_missing_file() {
        assert!(toml::from_str::<RunConfig>("fees = 1").is_err());
        let missing = Path::new("/nonexistent/run.toml");
        assert!(matches!(RunConfig::load(missing), Err(Error::MissingFile(p)) if p == missing));
    }
}
