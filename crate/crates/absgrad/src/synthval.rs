//! Synthetic four-Gaussian validation: ordering checks over a grid of
//! partition settings and std ratios, plus map renders.

use std::path::{Path, PathBuf};

use absgrad_core::attribution::ReversalParams;
use absgrad_core::saliency::focus_noise_split;
use absgrad_core::synth::{build_suite, check_propositions, suite_reversal, PropositionReport, ReversalReport, SyntheticSuite, DEFAULT_SIDE, S1_FRACTION};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::render::{default_scale, render_heatmap, write_png, Colormap, Overlay};

pub const GRIDS: [(f64, f64); 3] = [(60.0, 20.0), (60.0, 10.0), (50.0, 25.0)];
pub const STD_RATIOS: [f64; 3] = [1.5, 2.5, 4.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCase {
    pub s1: f64,
    pub s2: f64,
    pub report: PropositionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthvalReport {
    pub side: usize,
    pub cases: Vec<SweepCase>,
    /// Reversal of each default-suite map at the default grid.
    pub reversal: Vec<ReversalReport>,
    pub all_hold: bool,
}

pub fn run_sweep(side: usize, grids: &[(f64, f64)], ratios: &[f64]) -> Result<SynthvalReport> {
    let s1 = S1_FRACTION * side as f64;
    let mut cases = Vec::new();
    for &ratio in ratios {
        let suite = build_suite(side, side, s1, ratio * s1)?;
        for &(lb, interval) in grids {
            cases.push(SweepCase {
                s1,
                s2: ratio * s1,
                report: check_propositions(&suite, lb, interval)?,
            });
        }
    }
    let (lb, interval) = grids.first().copied().unwrap_or((60.0, 10.0));
    let reversal = suite_reversal(&build_suite_default(side)?, ReversalParams::default(), lb, interval)?;
    let all_hold = cases.iter().all(|c| c.report.all_hold()) && reversal.iter().all(|r| r.delta > 0.0);
    Ok(SynthvalReport {
        side,
        cases,
        reversal,
        all_hold,
    })
}

fn build_suite_default(side: usize) -> Result<SyntheticSuite> {
    if side == DEFAULT_SIDE {
        return Ok(SyntheticSuite::standard());
    }
    let s1 = S1_FRACTION * side as f64;
    Ok(build_suite(side, side, s1, 2.5 * s1)?)
}

/// Writes `synthval.json` and `M1.png`..`M4.png` into `out_dir`.
pub fn emit_synthval(report: &SynthvalReport, out_dir: &Path, lower_bound: f64) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let json = out_dir.join("synthval.json");
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    crate::format::write_atomic(&json, text.as_bytes())?;
    written.push(json);
    let suite = build_suite_default(report.side)?;
    for (i, map) in suite.maps.iter().enumerate() {
        let focus = focus_noise_split(map, lower_bound)?.focus;
        let overlay = Overlay {
            focus: Some(&focus),
            ground_truth: Some(&suite.gt),
        };
        let img = render_heatmap(map, Colormap::Heat, &overlay, default_scale(map.height(), map.width()));
        let path = out_dir.join(format!("{}.png", SyntheticSuite::name(i)));
        write_png(&path, &img)?;
        written.push(path);
    }
    Ok(written)
}
