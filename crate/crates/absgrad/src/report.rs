//! Metric reports, improvement ratios and their CSV/JSON forms.
//!
//! Every collection is ordered (config order for methods, manifest order for
//! images, `BTreeMap` elsewhere) and floats print in shortest round-trip
//! form, so identical reports serialize to identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use absgrad_core::metrics::MetricId;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::write_atomic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricInfo {
    pub id: MetricId,
    pub higher_is_better: bool,
}

impl From<MetricId> for MetricInfo {
    fn from(id: MetricId) -> Self {
        Self {
            id,
            higher_is_better: id.higher_is_better(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub image: String,
    pub method: String,
    pub values: BTreeMap<MetricId, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub label: String,
    pub means: BTreeMap<MetricId, f64>,
    pub counts: BTreeMap<MetricId, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Issue {
    pub image: String,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<MetricId>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: Vec<MetricInfo>,
    pub methods: Vec<MethodSummary>,
    /// Best method per metric by mean, following the metric's direction.
    pub best: BTreeMap<MetricId, String>,
    pub rows: Vec<ReportRow>,
    /// Requested (image, method) pairs without a cached map.
    pub missing: Vec<Issue>,
    pub failures: Vec<Issue>,
}

impl MetricReport {
    /// `methods` holds `(report name, label)` in output order.
    pub fn build(
        metrics: &[MetricId],
        methods: &[(String, String)],
        rows: Vec<ReportRow>,
        missing: Vec<Issue>,
        failures: Vec<Issue>,
    ) -> Self {
        let summaries: Vec<MethodSummary> = methods
            .iter()
            .map(|(name, label)| {
                let mut sums: BTreeMap<MetricId, (f64, usize)> = BTreeMap::new();
                for row in rows.iter().filter(|r| &r.method == name) {
                    for (&m, &v) in &row.values {
                        let e = sums.entry(m).or_default();
                        e.0 += v;
                        e.1 += 1;
                    }
                }
                MethodSummary {
                    method: name.clone(),
                    label: label.clone(),
                    means: sums.iter().map(|(&m, &(s, n))| (m, s / n as f64)).collect(),
                    counts: sums.iter().map(|(&m, &(_, n))| (m, n)).collect(),
                }
            })
            .collect();
        let mut best = BTreeMap::new();
        for &m in metrics {
            let mut winner: Option<(&str, f64)> = None;
            for s in &summaries {
                if let Some(&v) = s.means.get(&m) {
                    let better = match winner {
                        None => true,
                        Some((_, w)) => {
                            if m.higher_is_better() {
                                v > w
                            } else {
                                v < w
                            }
                        }
                    };
                    if better {
                        winner = Some((&s.method, v));
                    }
                }
            }
            if let Some((name, _)) = winner {
                best.insert(m, name.to_string());
            }
        }
        Self {
            metrics: metrics.iter().map(|&m| m.into()).collect(),
            methods: summaries,
            best,
            rows,
            missing,
            failures,
        }
    }

    pub fn metric_ids(&self) -> Vec<MetricId> {
        self.metrics.iter().map(|m| m.id).collect()
    }

    pub fn summary(&self, method: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == method)
    }

    pub fn value(&self, image: &str, method: &str, metric: MetricId) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.image == image && r.method == method)
            .and_then(|r| r.values.get(&metric).copied())
    }

    /// One row per (image, method); empty cells for metrics not computed.
    pub fn to_csv(&self) -> Result<String> {
        let ids = self.metric_ids();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["image".to_string(), "method".to_string()];
        header.extend(ids.iter().map(|m| m.as_str().to_string()));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.image.clone(), row.method.clone()];
            rec.extend(ids.iter().map(|m| row.values.get(m).map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        csv_string(w)
    }

    /// Per-method means; `best` marks the winning method per metric.
    pub fn means_csv(&self) -> Result<String> {
        let ids = self.metric_ids();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["method".to_string()];
        header.extend(ids.iter().map(|m| m.as_str().to_string()));
        w.write_record(&header)?;
        for s in &self.methods {
            let mut rec = vec![s.method.clone()];
            rec.extend(ids.iter().map(|m| s.means.get(m).map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        let mut rec = vec!["best".to_string()];
        rec.extend(ids.iter().map(|m| self.best.get(m).cloned().unwrap_or_default()));
        w.write_record(&rec)?;
        csv_string(w)
    }

    /// Markdown mean table with the best value per column in bold.
    pub fn means_markdown(&self) -> String {
        let ids = self.metric_ids();
        let mut out = String::from("| method |");
        for m in &ids {
            let arrow = if m.higher_is_better() { "↑" } else { "↓" };
            let _ = write!(out, " {} {} |", m.as_str(), arrow);
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(ids.len()));
        out.push('\n');
        for s in &self.methods {
            let _ = write!(out, "| {} |", s.method);
            for m in &ids {
                match s.means.get(m) {
                    Some(v) if self.best.get(m) == Some(&s.method) => {
                        let _ = write!(out, " **{v:.6}** |");
                    }
                    Some(v) => {
                        let _ = write!(out, " {v:.6} |");
                    }
                    None => out.push_str(" |"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

/// Files written by [`emit_report`].
pub fn emit_report(report: &MetricReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let files = [
        ("metrics.csv", report.to_csv()?),
        ("metrics.json", report.to_json()?),
        ("means.csv", report.means_csv()?),
        ("means.md", report.means_markdown()),
    ];
    let mut written = Vec::new();
    for (name, text) in files {
        let path = out_dir.join(name);
        write_atomic(&path, text.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub variant: String,
    /// `None` where the base mean is zero or a mean is missing.
    pub ratios: BTreeMap<MetricId, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioTable {
    /// Base method(s) the rows are divided by.
    pub bases: Vec<String>,
    pub metrics: Vec<MetricId>,
    pub rows: Vec<RatioRow>,
}

fn ratio(base: &MethodSummary, variant: &MethodSummary, m: MetricId) -> Option<f64> {
    let b = *base.means.get(&m)?;
    let v = *variant.means.get(&m)?;
    (b != 0.0).then(|| v / b)
}

fn lookup<'a>(report: &'a MetricReport, name: &str) -> Result<&'a MethodSummary> {
    report
        .summary(name)
        .ok_or_else(|| Error::Config(format!("method `{name}` is not in the report")))
}

/// `variant mean / base mean` per metric; 1.0 means unchanged.
pub fn improvement_ratios(report: &MetricReport, base: &str, variants: &[String]) -> Result<RatioTable> {
    let b = lookup(report, base)?;
    let metrics = report.metric_ids();
    let rows = variants
        .iter()
        .map(|v| {
            let s = lookup(report, v)?;
            Ok(RatioRow {
                variant: v.clone(),
                ratios: metrics.iter().map(|&m| (m, ratio(b, s, m))).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RatioTable {
        bases: vec![base.to_string()],
        metrics,
        rows,
    })
}

/// Variant suffixes of the standard ablation table.
pub const VARIANT_SUFFIXES: [&str; 5] = ["+", "-", "_a", "_g", "_ga"];

/// One row per variant suffix: the ratio `method{suffix} / method` averaged
/// over `bases`. A metric whose ratio is undefined for any base is undefined.
pub fn average_ratios(report: &MetricReport, bases: &[String], suffixes: &[String]) -> Result<RatioTable> {
    let metrics = report.metric_ids();
    let mut rows = Vec::new();
    for suffix in suffixes {
        let mut ratios = BTreeMap::new();
        for &m in &metrics {
            let mut acc = Some(0.0);
            for base in bases {
                let b = lookup(report, base)?;
                let v = lookup(report, &format!("{base}{suffix}"))?;
                acc = match (acc, ratio(b, v, m)) {
                    (Some(a), Some(r)) => Some(a + r),
                    _ => None,
                };
            }
            ratios.insert(m, acc.map(|a| a / bases.len() as f64));
        }
        rows.push(RatioRow {
            variant: suffix.clone(),
            ratios,
        });
    }
    Ok(RatioTable {
        bases: bases.to_vec(),
        metrics,
        rows,
    })
}

impl RatioTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["variant".to_string()];
        header.extend(self.metrics.iter().map(|m| m.as_str().to_string()));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.variant.clone()];
            rec.extend(self.metrics.iter().map(|m| match row.ratios.get(m).copied().flatten() {
                Some(v) => v.to_string(),
                None => "undefined".to_string(),
            }));
            w.write_record(&rec)?;
        }
        csv_string(w)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}
