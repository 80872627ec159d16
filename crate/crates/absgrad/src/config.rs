//! TOML run configuration.
//!
//! ```toml
//! seed = 0
//! dataset = "data/manifest.json"   # relative to this file
//! cache_dir = "cache"              # overridden by ABSGRAD_CACHE_DIR
//!
//! [adapter]
//! id = "tiny-cnn"                  # or "constant" with probs = [..]
//! # weights = "weights.bin"        # default: the bundled fixture weights
//!
//! [metrics]
//! ids = ["rcap", "dauc", "iauc", "mae", "lcdice", "sratio"]
//! lower_bound = 60.0
//! interval = 10.0
//! steps = 100
//! baseline = "black"               # or { constant = 0.5 }
//!
//! [[methods]]
//! id = "gag"                       # method[variant][.rev], e.g. "sg_ga", "ig+.rev"
//! p = 85.0
//! n = 20
//! # name, channel_mode, sigma_fraction, baseline, max_blur, seed, reversal = { l = 20.0, m = 30.0 }
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use absgrad_core::attribution::MethodConfig;
use absgrad_core::metrics::{MetricId, MetricParams, DEFAULT_INTERVAL, DEFAULT_LOWER_BOUND, DEFAULT_STEPS};
use absgrad_core::modify::Baseline;
use absgrad_core::saliency::PartitionScheme;
use serde::{Deserialize, Serialize};

use crate::adapters::ADAPTER_IDS;
use crate::error::{io_error, Error, Result};

pub const CACHE_DIR_ENV: &str = "ABSGRAD_CACHE_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterConfig {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
}

impl AdapterConfig {
    pub fn tiny_cnn() -> Self {
        Self {
            id: "tiny-cnn".into(),
            weights: None,
            probs: None,
        }
    }
}

fn all_metrics() -> Vec<MetricId> {
    MetricId::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub ids: Vec<MetricId>,
    pub lower_bound: f64,
    pub interval: f64,
    pub steps: usize,
    pub baseline: Baseline,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            ids: all_metrics(),
            lower_bound: DEFAULT_LOWER_BOUND,
            interval: DEFAULT_INTERVAL,
            steps: DEFAULT_STEPS,
            baseline: Baseline::Black,
        }
    }
}

impl MetricsConfig {
    pub fn params(&self) -> MetricParams {
        MetricParams {
            lower_bound: self.lower_bound,
            interval: self.interval,
            steps: self.steps,
            baseline: self.baseline,
        }
    }
}

fn default_cache_dir() -> PathBuf {
    PathBuf::from("cache")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub dataset: PathBuf,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
    pub adapter: AdapterConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    pub methods: Vec<MethodConfig>,
    /// Directory relative paths resolve against; the config file's directory.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn new(dataset: PathBuf, adapter: AdapterConfig, methods: Vec<MethodConfig>) -> Self {
        Self {
            seed: 0,
            dataset,
            cache_dir: default_cache_dir(),
            adapter,
            metrics: MetricsConfig::default(),
            methods,
            base_dir: PathBuf::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_error(path))?;
        let mut config = Self::from_toml(&text)?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::format::write_atomic(path, self.to_toml()?.as_bytes())
    }

    /// Rejects unknown adapters, empty or duplicate method names, duplicate
    /// metrics and invalid metric parameters before any work starts.
    pub fn validate(&self) -> Result<()> {
        if !ADAPTER_IDS.contains(&self.adapter.id.as_str()) {
            return Err(Error::Config(format!(
                "unknown adapter `{}` (known: {})",
                self.adapter.id,
                ADAPTER_IDS.join(", ")
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods configured".into()));
        }
        let mut names = BTreeSet::new();
        for m in &self.methods {
            m.validate()?;
            if !names.insert(m.display_name()) {
                return Err(Error::Config(format!(
                    "duplicate method name `{}`; set `name` to tell them apart",
                    m.display_name()
                )));
            }
        }
        let ids: BTreeSet<_> = self.metrics.ids.iter().collect();
        if ids.len() != self.metrics.ids.len() {
            return Err(Error::Config("duplicate metric ids".into()));
        }
        PartitionScheme::partition_count(self.metrics.lower_bound, self.metrics.interval)?;
        if self.metrics.steps < 2 {
            return Err(Error::Config("metrics.steps must be >= 2".into()));
        }
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.resolve(&self.dataset)
    }

    /// The cache directory, honouring the environment override.
    pub fn cache_path(&self) -> PathBuf {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.resolve(&self.cache_dir),
        }
    }

    pub fn weights_path(&self) -> Option<PathBuf> {
        self.adapter.weights.as_deref().map(|p| self.resolve(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seed = 7
dataset = "data/manifest.json"

[adapter]
id = "tiny-cnn"

[metrics]
ids = ["rcap", "dauc"]
baseline = { constant = 0.5 }

[[methods]]
id = "gag"
p = 45.0

[[methods]]
id = "sg_ga.rev"
n = 8

[[methods]]
id = "gag"
name = "gag-85"
"#;

    #[test]
    fn parses_and_round_trips() {
        let c = RunConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.cache_dir, PathBuf::from("cache"));
        assert_eq!(c.metrics.ids, vec![MetricId::Rcap, MetricId::Dauc]);
        assert_eq!(c.metrics.baseline, Baseline::Constant(0.5));
        assert_eq!(c.metrics.lower_bound, 60.0);
        assert_eq!(c.methods[0].p, 45.0);
        assert_eq!(c.methods[1].label(), "sg_ga.rev");
        assert_eq!(c.methods[1].n(), 8);
        assert_eq!(c.methods[2].display_name(), "gag-85");
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad_method = SAMPLE.replace("id = \"gag\"\np = 45.0", "id = \"gradx\"");
        assert!(RunConfig::from_toml(&bad_method).is_err());
        let dup = SAMPLE.replace("name = \"gag-85\"", "");
        assert!(matches!(RunConfig::from_toml(&dup), Err(Error::Config(_))));
        let adapter = SAMPLE.replace("tiny-cnn", "resnet");
        assert!(RunConfig::from_toml(&adapter).is_err());
        let grid = SAMPLE.replace("[metrics]", "[metrics]\ninterval = 7.0");
        assert!(RunConfig::from_toml(&grid).is_err());
        let unknown = SAMPLE.replace("seed = 7", "seed = 7\ncolour = 1");
        assert!(RunConfig::from_toml(&unknown).is_err());
    }
}
