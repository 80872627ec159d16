//! Synthetic Gaussian saliency maps over a centered ground-truth square, and
//! the ordering checks that motivate RCAP.
//!
//! M¹ and M² share the image center and differ only in spread; M³ and M⁴ are
//! the same pair shifted toward the lower right. The coverage oracle stands in
//! for the classifier, so every check is deterministic and model-free.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::attribution::{reversed_variant, ReversalParams};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::{dauc, iauc, rcap, saliency_ratio, RcapResult, DEFAULT_STEPS};
use crate::model::{Classifier, CoverageOracle};
use crate::saliency::{normalize_map, BinaryMask, SaliencyMap};

pub const DEFAULT_SIDE: usize = 100;
pub const GT_FRACTION: f64 = 0.20;
pub const SHIFT_FRACTION: f64 = 0.30;
pub const S1_FRACTION: f64 = 0.12;
pub const S2_FRACTION: f64 = 0.30;
/// Smallest gap that counts as a strict ordering.
pub const ORDER_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    /// `(cx, cy)` in pixel units; pixel `(y, x)` has its center at `(x + 0.5, y + 0.5)`.
    pub center: (f64, f64),
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSuite {
    pub width: usize,
    pub height: usize,
    pub gt: BinaryMask,
    /// M¹..M⁴ in order.
    pub maps: Vec<SaliencyMap>,
    pub params: Vec<GaussianParams>,
}

impl SyntheticSuite {
    /// 100×100 with s1 = 0.12·W and s2 = 0.30·W.
    pub fn standard() -> Self {
        let w = DEFAULT_SIDE as f64;
        build_suite(DEFAULT_SIDE, DEFAULT_SIDE, S1_FRACTION * w, S2_FRACTION * w).expect("default suite is valid")
    }

    pub fn oracle(&self) -> CoverageOracle {
        CoverageOracle::new(self.gt.clone()).expect("suite ground truth is non-empty")
    }

    pub fn name(index: usize) -> String {
        format!("M{}", index + 1)
    }
}

/// `exp(−((x − cx)² + (y − cy)²) / (2σ²))` at pixel centers, normalized.
pub fn gaussian_saliency(width: usize, height: usize, center: (f64, f64), std: f64) -> Result<SaliencyMap> {
    if !(std > 0.0) || !std.is_finite() {
        return Err(Error::InvalidParameter(format!("std must be positive, got {std}")));
    }
    let (cx, cy) = center;
    let denom = 2.0 * std * std;
    let values = (0..height)
        .flat_map(|y| (0..width).map(move |x| (x, y)))
        .map(|(x, y)| {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            libm::exp(-(dx * dx + dy * dy) / denom)
        })
        .collect();
    normalize_map(&SaliencyMap::new(height, width, values)?)
}

/// The `round(fraction · W · H)` pixels closest to the image center in the
/// Chebyshev sense (ties by Euclidean distance, then index): a centered
/// square, with the last partial ring filled from the edge midpoints out.
pub fn centered_square(width: usize, height: usize, fraction: f64) -> BinaryMask {
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    let key = |i: usize| {
        let dx = libm::fabs((i % width) as f64 + 0.5 - cx);
        let dy = libm::fabs((i / width) as f64 + 0.5 - cy);
        (dx.max(dy), dx * dx + dy * dy)
    };
    let n = width * height;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (ka, kb) = (key(a), key(b));
        ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(a.cmp(&b))
    });
    let take = (libm::round(fraction * n as f64) as usize).min(n);
    let mut bits = alloc::vec![false; n];
    for &i in &order[..take] {
        bits[i] = true;
    }
    BinaryMask::new(height, width, bits).expect("grid matches")
}

pub fn build_suite(width: usize, height: usize, s1: f64, s2: f64) -> Result<SyntheticSuite> {
    if !(s1 > 0.0 && s2 > s1 && s2.is_finite()) {
        return Err(Error::InvalidParameter(format!("stds need s2 > s1 > 0, got s1 = {s1}, s2 = {s2}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::InvalidParameter("suite needs a non-empty grid".into()));
    }
    let (w, h) = (width as f64, height as f64);
    let center = (w / 2.0, h / 2.0);
    let shifted = (w / 2.0 + SHIFT_FRACTION * w, h / 2.0 + SHIFT_FRACTION * h);
    let params = alloc::vec![
        GaussianParams { center, std: s1 },
        GaussianParams { center, std: s2 },
        GaussianParams { center: shifted, std: s1 },
        GaussianParams { center: shifted, std: s2 },
    ];
    let maps = params
        .iter()
        .map(|p| gaussian_saliency(width, height, p.center, p.std))
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticSuite {
        width,
        height,
        gt: centered_square(width, height, GT_FRACTION),
        maps,
        params,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub metric: String,
    /// Map expected to score better, e.g. `M1`.
    pub better: String,
    pub worse: String,
    pub better_value: f64,
    pub worse_value: f64,
    /// Signed gap in the metric's preferred direction.
    pub margin: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropositionReport {
    pub lower_bound: f64,
    pub interval: f64,
    pub steps: usize,
    pub rcap: Vec<f64>,
    pub dauc: Vec<f64>,
    pub iauc: Vec<f64>,
    pub sratio: Vec<f64>,
    /// The required strict RCAP orderings.
    pub orderings: Vec<OrderingCheck>,
    /// `rcap[a] − rcap[b]` for every pair a < b.
    pub pairwise_rcap: Vec<(String, String, f64)>,
    /// |DAUC(M¹) − DAUC(M²)|, zero for rank-identical maps.
    pub dauc_gap_12: f64,
    pub iauc_gap_12: f64,
}

impl PropositionReport {
    pub fn all_hold(&self) -> bool {
        self.orderings.iter().all(|o| o.holds) && self.dauc_gap_12 < 1e-9 && self.iauc_gap_12 < 1e-9
    }
}

/// Index pairs `(better, worse)` RCAP must order strictly.
pub const RCAP_ORDERINGS: [(usize, usize); 4] = [(0, 1), (1, 3), (0, 2), (2, 3)];

fn ordering(metric: &str, values: &[f64], better: usize, worse: usize) -> OrderingCheck {
    let margin = values[better] - values[worse];
    OrderingCheck {
        metric: metric.into(),
        better: SyntheticSuite::name(better),
        worse: SyntheticSuite::name(worse),
        better_value: values[better],
        worse_value: values[worse],
        margin,
        holds: margin >= ORDER_MARGIN,
    }
}

/// RCAP, DAUC, IAUC and saliency ratio for M¹..M⁴ under the coverage oracle.
pub fn check_propositions(suite: &SyntheticSuite, lower_bound: f64, interval: f64) -> Result<PropositionReport> {
    let oracle = suite.oracle();
    let x = oracle.full_input();
    let base = oracle.baseline();
    let mut rcaps = Vec::new();
    let mut daucs = Vec::new();
    let mut iaucs = Vec::new();
    let mut sratios = Vec::new();
    for m in &suite.maps {
        rcaps.push(rcap(&oracle, &x, 0, m, &base, lower_bound, interval)?.score);
        daucs.push(dauc(&oracle, &x, 0, m, DEFAULT_STEPS, &base)?);
        iaucs.push(iauc(&oracle, &x, 0, m, DEFAULT_STEPS, &base)?);
        sratios.push(saliency_ratio(m, lower_bound)?);
    }
    let orderings = RCAP_ORDERINGS.iter().map(|&(a, b)| ordering("rcap", &rcaps, a, b)).collect();
    let mut pairwise = Vec::new();
    for a in 0..rcaps.len() {
        for b in a + 1..rcaps.len() {
            pairwise.push((SyntheticSuite::name(a), SyntheticSuite::name(b), rcaps[a] - rcaps[b]));
        }
    }
    Ok(PropositionReport {
        lower_bound,
        interval,
        steps: DEFAULT_STEPS,
        dauc_gap_12: libm::fabs(daucs[0] - daucs[1]),
        iauc_gap_12: libm::fabs(iaucs[0] - iaucs[1]),
        rcap: rcaps,
        dauc: daucs,
        iauc: iaucs,
        sratio: sratios,
        orderings,
        pairwise_rcap: pairwise,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversalReport {
    pub params: ReversalParams,
    pub original: RcapResult,
    pub reversed: RcapResult,
    /// `RCAP(M) − RCAP(M.rev)`; positive when the reversal hurts.
    pub delta: f64,
    /// Per-partition confidence drop, original minus reversed.
    pub confidence_drops: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn reversed_validation(
    map: &SaliencyMap,
    model: &dyn Classifier,
    x: &Image,
    class: usize,
    baseline: &Image,
    params: ReversalParams,
    lower_bound: f64,
    interval: f64,
) -> Result<ReversalReport> {
    let reversed_map = reversed_variant(map, params)?;
    let original = rcap(model, x, class, map, baseline, lower_bound, interval)?;
    let reversed = rcap(model, x, class, &reversed_map, baseline, lower_bound, interval)?;
    let confidence_drops = original
        .confidences
        .iter()
        .zip(&reversed.confidences)
        .map(|(a, b)| a - b)
        .collect();
    Ok(ReversalReport {
        params,
        delta: original.score - reversed.score,
        original,
        reversed,
        confidence_drops,
    })
}

/// Reversal check for every suite map under the coverage oracle.
pub fn suite_reversal(suite: &SyntheticSuite, params: ReversalParams, lower_bound: f64, interval: f64) -> Result<Vec<ReversalReport>> {
    let oracle = suite.oracle();
    let (x, base) = (oracle.full_input(), oracle.baseline());
    suite
        .maps
        .iter()
        .map(|m| reversed_validation(m, &oracle, &x, 0, &base, params, lower_bound, interval))
        .collect()
}
