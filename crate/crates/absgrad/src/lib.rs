//! File formats, dataset ingestion, caching, reports and the experiment
//! harness around [`absgrad_core`].

pub mod adapters;
pub mod cache;
pub mod config;
pub mod dataset;
pub mod error;
pub mod fixture;
pub mod format;
pub mod harness;
pub mod render;
pub mod report;
pub mod synthval;

pub use absgrad_core as core;
pub use config::RunConfig;
pub use error::{Error, Result};
pub use harness::{run_evaluate, run_explain, run_reverse, Context, ExplainSummary};
pub use report::{emit_report, improvement_ratios, MetricReport};
