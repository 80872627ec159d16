//! Explain and evaluate runs over a dataset.
//!
//! `run_explain` fills the cache with one map per (image, method); each map is
//! stored at `f32` precision and everything downstream reads it back from the
//! cache, so a cached map and a fresh one are the same bytes. Images are
//! processed in parallel unless the adapter asks for single-threaded access.

use std::path::{Path, PathBuf};

use absgrad_core::attribution::{reversed_variant, run_method, MethodConfig, ReversalParams};
use absgrad_core::metrics::{dauc, iauc, log_cosh_dice, mae, rcap, saliency_ratio, MetricId};
use absgrad_core::model::{Classifier, Threading};
use absgrad_core::saliency::focus_noise_split;
use absgrad_core::SaliencyMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapters::{adapter_fingerprint, build_adapter};
use crate::cache::{cache_key, effective_seed, image_digest, Cache};
use crate::config::RunConfig;
use crate::dataset::{Dataset, Sample};
use crate::error::Result;
use crate::render::{default_scale, render_heatmap, write_png, Colormap, Overlay};
use crate::report::{Issue, MetricReport, ReportRow};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExplainSummary {
    pub computed: usize,
    pub reused: usize,
    pub failed: usize,
    pub failures: Vec<Issue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Computed,
    Reused,
}

/// Loaded run state shared by every stage.
pub struct Context {
    pub config: RunConfig,
    pub dataset: Dataset,
    pub model: Box<dyn Classifier>,
    pub cache: Cache,
    adapter: String,
}

impl Context {
    pub fn open(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let dataset = Dataset::open(&config.dataset_path())?;
        let model = build_adapter(config, dataset.input_shape()?)?;
        Ok(Self {
            adapter: adapter_fingerprint(config)?,
            cache: Cache::new(config.cache_path()),
            config: config.clone(),
            dataset,
            model,
        })
    }

    fn key(&self, sample: &Sample, digest: &str, method: &MethodConfig) -> String {
        cache_key(&sample.id, digest, method, &self.adapter, self.config.seed)
    }

    /// Cached map or a fresh computation written to the cache. Reversed
    /// configurations are derived from the cached base map.
    fn obtain(&self, sample: &Sample, digest: &str, method: &MethodConfig) -> Result<(SaliencyMap, Outcome)> {
        let key = self.key(sample, digest, method);
        if let Some(map) = self.cache.get(&key)? {
            return Ok((map, Outcome::Reused));
        }
        let map = match method.reversal {
            Some(params) => {
                let mut base = method.clone();
                base.reversal = None;
                let (base_map, _) = self.obtain(sample, digest, &base)?;
                reversed_variant(&base_map, params)?
            }
            None => {
                let seeded = method
                    .clone()
                    .with_seed(effective_seed(self.config.seed, &sample.id, method.modifier.seed));
                let fresh = run_method(self.model.as_ref(), &sample.image, sample.class, &seeded)?;
                crate::format::round_trip(&fresh)
            }
        };
        self.cache.put(&key, &map)?;
        Ok((map, Outcome::Computed))
    }

    /// Cached map for a pair, without computing.
    pub fn cached(&self, sample: &Sample, method: &MethodConfig) -> Result<Option<SaliencyMap>> {
        self.cache.get(&self.key(sample, &image_digest(&sample.image), method))
    }

    fn for_each_image<T: Send>(&self, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
        match self.model.threading() {
            Threading::Concurrent => (0..self.dataset.len()).into_par_iter().map(f).collect(),
            Threading::SingleThreaded => (0..self.dataset.len()).map(f).collect(),
        }
    }

    pub fn explain(&self, methods: &[MethodConfig]) -> ExplainSummary {
        let per_image = self.for_each_image(|i| {
            let mut outcomes = Vec::new();
            match self.dataset.load(i) {
                Ok(sample) => {
                    let digest = image_digest(&sample.image);
                    for m in methods {
                        outcomes.push(self.obtain(&sample, &digest, m).map(|(_, o)| o).map_err(|e| Issue {
                            image: sample.id.clone(),
                            method: m.display_name(),
                            metric: None,
                            message: e.to_string(),
                        }));
                    }
                }
                Err(e) => {
                    for m in methods {
                        outcomes.push(Err(Issue {
                            image: self.dataset.ids()[i].clone(),
                            method: m.display_name(),
                            metric: None,
                            message: e.to_string(),
                        }));
                    }
                }
            }
            outcomes
        });
        let mut summary = ExplainSummary::default();
        for outcome in per_image.into_iter().flatten() {
            match outcome {
                Ok(Outcome::Computed) => summary.computed += 1,
                Ok(Outcome::Reused) => summary.reused += 1,
                Err(issue) => {
                    summary.failed += 1;
                    summary.failures.push(issue);
                }
            }
        }
        summary
    }

    fn metrics_for(&self, sample: &Sample, method: &str, map: &SaliencyMap) -> (ReportRow, Vec<Issue>) {
        let cfg = &self.config.metrics;
        let x = &sample.image;
        let baseline = cfg.baseline.image_like(x);
        let model = self.model.as_ref();
        let mut row = ReportRow {
            image: sample.id.clone(),
            method: method.to_string(),
            values: Default::default(),
        };
        let mut issues = Vec::new();
        for &m in &cfg.ids {
            let value = match m {
                MetricId::Rcap => rcap(model, x, sample.class, map, &baseline, cfg.lower_bound, cfg.interval).map(|r| r.score),
                MetricId::Dauc => dauc(model, x, sample.class, map, cfg.steps, &baseline),
                MetricId::Iauc => iauc(model, x, sample.class, map, cfg.steps, &baseline),
                MetricId::Sratio => saliency_ratio(map, cfg.lower_bound),
                MetricId::Mae | MetricId::Lcdice => match &sample.mask {
                    None => continue,
                    Some(t) if m == MetricId::Mae => mae(map, t),
                    Some(t) => log_cosh_dice(map, t),
                },
            };
            match value {
                Ok(v) => {
                    row.values.insert(m, v);
                }
                Err(e) => issues.push(Issue {
                    image: sample.id.clone(),
                    method: method.to_string(),
                    metric: Some(m),
                    message: e.to_string(),
                }),
            }
        }
        (row, issues)
    }

    pub fn evaluate(&self) -> MetricReport {
        let methods = &self.config.methods;
        let per_image = self.for_each_image(|i| {
            let mut rows = Vec::new();
            let mut missing = Vec::new();
            let mut failures = Vec::new();
            let sample = match self.dataset.load(i) {
                Ok(s) => s,
                Err(e) => {
                    failures.push(Issue {
                        image: self.dataset.ids()[i].clone(),
                        method: String::new(),
                        metric: None,
                        message: e.to_string(),
                    });
                    return (rows, missing, failures);
                }
            };
            for m in methods {
                let name = m.display_name();
                match self.cached(&sample, m) {
                    Ok(Some(map)) => {
                        let (row, issues) = self.metrics_for(&sample, &name, &map);
                        rows.push(row);
                        failures.extend(issues);
                    }
                    Ok(None) => missing.push(Issue {
                        image: sample.id.clone(),
                        method: name,
                        metric: None,
                        message: "no cached saliency map; run explain first".into(),
                    }),
                    Err(e) => failures.push(Issue {
                        image: sample.id.clone(),
                        method: name,
                        metric: None,
                        message: e.to_string(),
                    }),
                }
            }
            (rows, missing, failures)
        });
        let (mut rows, mut missing, mut failures) = (Vec::new(), Vec::new(), Vec::new());
        for (r, m, f) in per_image {
            rows.extend(r);
            missing.extend(m);
            failures.extend(f);
        }
        let names: Vec<(String, String)> = methods.iter().map(|m| (m.display_name(), m.label())).collect();
        MetricReport::build(&self.config.metrics.ids, &names, rows, missing, failures)
    }

    /// One PNG per cached (image, method) with Focus and Ground-truth outlines,
    /// at `<out>/<image>/<method>.png`.
    pub fn heatmaps(&self, out_dir: &Path, colormap: Colormap) -> Result<Vec<PathBuf>> {
        let lower_bound = self.config.metrics.lower_bound;
        let mut written = Vec::new();
        for sample in self.dataset.iter() {
            let sample = sample?;
            for m in &self.config.methods {
                let Some(map) = self.cached(&sample, m)? else {
                    continue;
                };
                let focus = focus_noise_split(&map, lower_bound)?.focus;
                let overlay = Overlay {
                    focus: Some(&focus),
                    ground_truth: sample.mask.as_ref(),
                };
                let img = render_heatmap(&map, colormap, &overlay, default_scale(map.height(), map.width()));
                let path = out_dir.join(file_safe(&sample.id)).join(format!("{}.png", file_safe(&m.display_name())));
                write_png(&path, &img)?;
                written.push(path);
            }
        }
        Ok(written)
    }
}

/// Replaces characters outside `[A-Za-z0-9_.+-]` with `_`.
pub fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "_.+-".contains(c) { c } else { '_' })
        .collect()
}

pub fn run_explain(config: &RunConfig) -> Result<ExplainSummary> {
    let ctx = Context::open(config)?;
    Ok(ctx.explain(&config.methods))
}

pub fn run_evaluate(config: &RunConfig) -> Result<MetricReport> {
    Ok(Context::open(config)?.evaluate())
}

/// Builds `.rev` variants of every non-reversed configured method.
pub fn run_reverse(config: &RunConfig, params: ReversalParams) -> Result<(ExplainSummary, Vec<MethodConfig>)> {
    params.validate()?;
    let ctx = Context::open(config)?;
    let reversed: Vec<MethodConfig> = config
        .methods
        .iter()
        .filter(|m| m.reversal.is_none())
        .map(|m| {
            let mut r = m.clone().with_reversal(params);
            r.name = m.name.as_ref().map(|n| format!("{n}.rev"));
            r
        })
        .collect();
    Ok((ctx.explain(&reversed), reversed))
}
