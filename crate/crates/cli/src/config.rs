use std::path::Path;

use anyhow::Context;
use serde::Deserialize;
use strokescreen::cohort::CleanseConfig;
use strokescreen::cspp::CsppConfig;
use strokescreen::evaluation::{Metric, SweepConfig};
use strokescreen::logit::{LogitConfig, SelectionConfig};
use strokescreen::schema::FeatureSchema;
use strokescreen::tree::TrainConfig;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PermutationConfig {
    pub metric: Metric,
    pub repetitions: usize,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        PermutationConfig {
            metric: Metric::default(),
            repetitions: 10,
        }
    }
}

/// Settings read from `--config`. Every table is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Feature schema; the resident survey schema when absent.
    pub schema: Option<FeatureSchema>,
    pub cleanse: CleanseConfig,
    pub cspp: CsppConfig,
    pub train: TrainConfig,
    pub logit: LogitConfig,
    pub selection: SelectionConfig,
    pub permutation: PermutationConfig,
    pub sweep: SweepConfig,
    /// Held-out fraction for `train --holdout`.
    pub test_fraction: Option<f64>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Config> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Config = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(s) = &cfg.schema {
            s.validate()?;
        }
        Ok(cfg)
    }

    pub fn schema(&self) -> FeatureSchema {
        self.schema.clone().unwrap_or_else(FeatureSchema::resident_survey)
    }
}
