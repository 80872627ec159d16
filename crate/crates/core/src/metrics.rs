//! Saliency evaluation metrics.
//!
//! RCAP rewards maps that keep their mass in a compact focus area *and* whose
//! recovered focus areas convince the model. DAUC/IAUC only look at the pixel
//! ranking. MAE and log-cosh Dice compare against a ground-truth mask, and the
//! saliency ratio is a model-free noise level.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{predict_confidence, Classifier};
use crate::modify::Baseline;
use crate::saliency::{
    build_partitions, focus_noise_split, threshold_mask, BinaryMask, PartitionScheme, SaliencyMap,
};

pub const DEFAULT_LOWER_BOUND: f64 = 60.0;
pub const DEFAULT_INTERVAL: f64 = 10.0;
pub const DEFAULT_STEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricId {
    Rcap,
    Dauc,
    Iauc,
    Mae,
    Lcdice,
    Sratio,
}

impl MetricId {
    pub const ALL: [MetricId; 6] = [
        MetricId::Rcap,
        MetricId::Dauc,
        MetricId::Iauc,
        MetricId::Mae,
        MetricId::Lcdice,
        MetricId::Sratio,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::Rcap => "rcap",
            MetricId::Dauc => "dauc",
            MetricId::Iauc => "iauc",
            MetricId::Mae => "mae",
            MetricId::Lcdice => "lcdice",
            MetricId::Sratio => "sratio",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown metric id `{s}`")))
    }

    pub fn higher_is_better(self) -> bool {
        matches!(self, MetricId::Rcap | MetricId::Iauc | MetricId::Sratio)
    }

    /// Needs a ground-truth mask.
    pub fn needs_ground_truth(self) -> bool {
        matches!(self, MetricId::Mae | MetricId::Lcdice)
    }

    /// Needs model queries.
    pub fn needs_model(self) -> bool {
        matches!(self, MetricId::Rcap | MetricId::Dauc | MetricId::Iauc)
    }
}

impl core::fmt::Display for MetricId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Shared metric settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricParams {
    pub lower_bound: f64,
    pub interval: f64,
    pub steps: usize,
    pub baseline: Baseline,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            lower_bound: DEFAULT_LOWER_BOUND,
            interval: DEFAULT_INTERVAL,
            steps: DEFAULT_STEPS,
            baseline: Baseline::Black,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredImage {
    pub pixels: Image,
    pub recovered_mask: BinaryMask,
    pub threshold: f64,
}

/// `x` where the mask is set, `baseline` elsewhere, across all channels.
pub fn recover_with_mask(x: &Image, baseline: &Image, mask: &BinaryMask) -> Result<Image> {
    x.check_same_shape(baseline)?;
    if (mask.height(), mask.width()) != (x.height(), x.width()) {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", x.height(), x.width()),
            actual: format!("{}x{}", mask.height(), mask.width()),
        });
    }
    let n = x.pixels();
    let bits = mask.bits();
    let data = x
        .data()
        .iter()
        .zip(baseline.data())
        .enumerate()
        .map(|(i, (&v, &b))| if bits[i % n] { v } else { b })
        .collect();
    let (c, h, w) = x.shape();
    Image::new(c, h, w, data)
}

/// Keeps the pixels whose saliency reaches `threshold`.
pub fn recover_image(x: &Image, baseline: &Image, map: &SaliencyMap, threshold: f64) -> Result<RecoveredImage> {
    map.check_image(x)?;
    let recovered_mask = threshold_mask(map, threshold);
    let pixels = recover_with_mask(x, baseline, &recovered_mask)?;
    Ok(RecoveredImage {
        pixels,
        recovered_mask,
        threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcapResult {
    pub scheme: PartitionScheme,
    /// Σ M over the k-th recovered set divided by Σ M.
    pub ratios: Vec<f64>,
    /// Class confidence on the k-th recovered image.
    pub confidences: Vec<f64>,
    pub score: f64,
}

fn check_mass(map: &SaliencyMap) -> Result<f64> {
    if map.values().iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidParameter("saliency values must be non-negative".into()));
    }
    let total = map.sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateMap);
    }
    Ok(total)
}

/// `(1/j) Σ_k (Σ M_{p_k} / Σ M) · σ(f_c(I_{p_k}))` over cumulative partitions.
pub fn rcap(
    model: &dyn Classifier,
    x: &Image,
    class: usize,
    map: &SaliencyMap,
    baseline: &Image,
    lower_bound: f64,
    interval: f64,
) -> Result<RcapResult> {
    let total = check_mass(map)?;
    map.check_image(x)?;
    let scheme = build_partitions(map, lower_bound, interval)?;
    let mut ratios = Vec::with_capacity(scheme.count);
    let mut confidences = Vec::with_capacity(scheme.count);
    for mask in scheme.masks(map) {
        ratios.push(map.masked_sum(&mask)? / total);
        let recovered = recover_with_mask(x, baseline, &mask)?;
        confidences.push(predict_confidence(model, &recovered, class)?);
    }
    let score = ratios.iter().zip(&confidences).map(|(r, c)| r * c).sum::<f64>() / scheme.count as f64;
    Ok(RcapResult {
        scheme,
        ratios,
        confidences,
        score,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    /// Pixel fraction s/steps at each step.
    pub fractions: Vec<f64>,
    pub confidences: Vec<f64>,
    /// Trapezoid area under confidence vs fraction.
    pub area: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Deletion,
    Insertion,
}

fn curve(
    model: &dyn Classifier,
    x: &Image,
    class: usize,
    map: &SaliencyMap,
    steps: usize,
    baseline: &Image,
    direction: Direction,
) -> Result<Curve> {
    if steps < 2 {
        return Err(Error::InvalidParameter(format!("steps must be >= 2, got {steps}")));
    }
    map.check_image(x)?;
    x.check_same_shape(baseline)?;
    let order = map.rank_descending();
    let n = order.len();
    let (mut current, target) = match direction {
        Direction::Deletion => (x.clone(), baseline),
        Direction::Insertion => (baseline.clone(), x),
    };
    let channels = x.channels();
    let mut fractions = Vec::with_capacity(steps + 1);
    let mut confidences = Vec::with_capacity(steps + 1);
    let mut done = 0;
    for s in 0..=steps {
        let count = s * n / steps;
        for &idx in &order[done..count] {
            for c in 0..channels {
                current.data_mut()[c * n + idx] = target.data()[c * n + idx];
            }
        }
        done = count;
        fractions.push(s as f64 / steps as f64);
        confidences.push(predict_confidence(model, &current, class)?);
    }
    let width = 1.0 / steps as f64;
    let area = confidences.windows(2).map(|w| (w[0] + w[1]) * 0.5 * width).sum();
    Ok(Curve {
        fractions,
        confidences,
        area,
    })
}

/// Deletion curve: most salient pixels first replaced by the baseline.
pub fn deletion_curve(
    model: &dyn Classifier,
    x: &Image,
    class: usize,
    map: &SaliencyMap,
    steps: usize,
    baseline: &Image,
) -> Result<Curve> {
    curve(model, x, class, map, steps, baseline, Direction::Deletion)
}

/// Insertion curve: most salient pixels first restored onto the baseline.
pub fn insertion_curve(
    model: &dyn Classifier,
    x: &Image,
    class: usize,
    map: &SaliencyMap,
    steps: usize,
    baseline: &Image,
) -> Result<Curve> {
    curve(model, x, class, map, steps, baseline, Direction::Insertion)
}

/// Area under the deletion curve; lower is better.
pub fn dauc(model: &dyn Classifier, x: &Image, class: usize, map: &SaliencyMap, steps: usize, baseline: &Image) -> Result<f64> {
    Ok(deletion_curve(model, x, class, map, steps, baseline)?.area)
}

/// Area under the insertion curve; higher is better.
pub fn iauc(model: &dyn Classifier, x: &Image, class: usize, map: &SaliencyMap, steps: usize, baseline: &Image) -> Result<f64> {
    Ok(insertion_curve(model, x, class, map, steps, baseline)?.area)
}

/// Mean absolute difference between the map and a binary mask.
pub fn mae(map: &SaliencyMap, truth: &BinaryMask) -> Result<f64> {
    map.check_mask(truth)?;
    let n = map.len() as f64;
    Ok(map
        .values()
        .iter()
        .zip(truth.bits())
        .map(|(&m, &t)| libm::fabs(m - if t { 1.0 } else { 0.0 }))
        .sum::<f64>()
        / n)
}

/// Soft Dice coefficient `2 Σ(M·T) / (Σ M + Σ T)`.
pub fn soft_dice(map: &SaliencyMap, truth: &BinaryMask) -> Result<f64> {
    map.check_mask(truth)?;
    let inter: f64 = map.values().iter().zip(truth.bits()).filter(|(_, &t)| t).map(|(m, _)| m).sum();
    let denom = map.sum() + truth.count() as f64;
    if !(denom > 0.0) {
        return Err(Error::EmptyInputs);
    }
    Ok(2.0 * inter / denom)
}

/// `ln(cosh(1 − Dice))`.
pub fn log_cosh_dice(map: &SaliencyMap, truth: &BinaryMask) -> Result<f64> {
    let dice = soft_dice(map, truth)?;
    Ok(libm::log(libm::cosh(1.0 - dice)))
}

/// Share of saliency mass inside the focus area.
pub fn saliency_ratio(map: &SaliencyMap, lower_bound: f64) -> Result<f64> {
    let total = check_mass(map)?;
    let areas = focus_noise_split(map, lower_bound)?;
    Ok(map.masked_sum(&areas.focus)? / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConstantModel, InputShape, LinearModel};
    use alloc::vec;
    use proptest::prelude::*;

    fn grid(h: usize, w: usize, v: &[f64]) -> SaliencyMap {
        SaliencyMap::new(h, w, v.to_vec()).unwrap()
    }

    fn bits(h: usize, w: usize, b: &[u8]) -> BinaryMask {
        BinaryMask::new(h, w, b.iter().map(|&x| x == 1).collect()).unwrap()
    }

    #[test]
    fn recover_examples() {
        let x = Image::new(2, 2, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let black = Image::zeros(2, 2, 2);
        let m = grid(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let r = recover_image(&x, &black, &m, 0.5).unwrap();
        assert_eq!(r.pixels.data(), &[1.0, 0.0, 0.0, 4.0, 5.0, 0.0, 0.0, 8.0]);
        assert_eq!(recover_image(&x, &black, &m, 0.0).unwrap().pixels, x);
        assert_eq!(recover_image(&x, &black, &m, 1.5).unwrap().pixels, black);
        assert!(recover_image(&x, &Image::zeros(1, 2, 2), &m, 0.5).is_err());
        assert!(recover_image(&x, &black, &grid(1, 4, &[0.0; 4]), 0.5).is_err());
    }

    #[test]
    fn rcap_hand_example() {
        let model = ConstantModel::binary(1.0, InputShape::new(1, 2, 2)).unwrap();
        let x = Image::filled(1, 2, 2, 0.5);
        let m = grid(2, 2, &[1.0, 0.8, 0.2, 0.0]);
        let r = rcap(&model, &x, 0, &m, &Image::zeros(1, 2, 2), 50.0, 25.0).unwrap();
        assert_eq!(r.scheme.thresholds, vec![0.8, 0.2]);
        assert!((r.ratios[0] - 0.9).abs() < 1e-12 && (r.ratios[1] - 1.0).abs() < 1e-12);
        assert!((r.score - 0.95).abs() < 1e-12);
    }

    #[test]
    fn rcap_with_constant_confidence_and_concentrated_mass() {
        let model = ConstantModel::binary(0.37, InputShape::new(1, 2, 5)).unwrap();
        let x = Image::filled(1, 2, 5, 1.0);
        let mut v = vec![0.0; 10];
        v[3] = 1.0;
        let r = rcap(&model, &x, 0, &grid(2, 5, &v), &Image::zeros(1, 2, 5), 60.0, 10.0).unwrap();
        assert!(r.ratios.iter().all(|&q| q == 1.0));
        assert!((r.score - 0.37).abs() < 1e-12);
    }

    #[test]
    fn rcap_rejects_bad_input() {
        let model = ConstantModel::binary(1.0, InputShape::new(1, 1, 3)).unwrap();
        let x = Image::zeros(1, 1, 3);
        let b = Image::zeros(1, 1, 3);
        assert_eq!(rcap(&model, &x, 0, &grid(1, 3, &[0.0; 3]), &b, 60.0, 10.0).unwrap_err(), Error::DegenerateMap);
        assert!(rcap(&model, &x, 0, &grid(1, 3, &[1.0, 0.5, 0.0]), &b, 60.0, 7.0).is_err());
        assert!(rcap(&model, &x, 5, &grid(1, 3, &[1.0, 0.5, 0.0]), &b, 60.0, 10.0).is_err());
    }

    #[test]
    fn auc_of_constant_model() {
        let model = ConstantModel::binary(0.3, InputShape::new(1, 3, 3)).unwrap();
        let x = Image::filled(1, 3, 3, 1.0);
        let b = Image::zeros(1, 3, 3);
        let m = grid(3, 3, &[0.1, 0.9, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.2]);
        assert!((dauc(&model, &x, 0, &m, 10, &b).unwrap() - 0.3).abs() < 1e-12);
        assert!((iauc(&model, &x, 0, &m, 10, &b).unwrap() - 0.3).abs() < 1e-12);
        assert!(dauc(&model, &x, 0, &m, 1, &b).is_err());
    }

    #[test]
    fn curve_endpoints_and_hand_area() {
        // Linear model f_0 = Σ x over 4 pixels; class 1 scores zero.
        let w0 = Image::filled(1, 1, 4, 1.0);
        let w1 = Image::zeros(1, 1, 4);
        let model = LinearModel::new(vec![w0, w1]).unwrap();
        let x = Image::filled(1, 1, 4, 1.0);
        let b = Image::zeros(1, 1, 4);
        let m = grid(1, 4, &[0.4, 0.3, 0.2, 0.1]);
        let sigma = |k: f64| 1.0 / (1.0 + libm::exp(-k));
        let del = deletion_curve(&model, &x, 0, &m, 4, &b).unwrap();
        let expect: Vec<f64> = [4.0, 3.0, 2.0, 1.0, 0.0].iter().map(|&k| sigma(k)).collect();
        for (c, e) in del.confidences.iter().zip(&expect) {
            assert!((c - e).abs() < 1e-12);
        }
        let area: f64 = expect.windows(2).map(|w| (w[0] + w[1]) / 8.0).sum();
        assert!((del.area - area).abs() < 1e-12);
        let ins = insertion_curve(&model, &x, 0, &m, 4, &b).unwrap();
        assert!((ins.confidences[4] - predict_confidence(&model, &x, 0).unwrap()).abs() < 1e-15);
        assert!((ins.confidences[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mae_examples() {
        let t = bits(2, 2, &[1, 0, 0, 1]);
        assert_eq!(mae(&grid(2, 2, &[1.0, 0.0, 0.0, 1.0]), &t).unwrap(), 0.0);
        assert_eq!(mae(&grid(2, 2, &[0.0, 1.0, 1.0, 0.0]), &t).unwrap(), 1.0);
        assert_eq!(mae(&grid(2, 2, &[0.5; 4]), &t).unwrap(), 0.5);
        assert!(mae(&grid(1, 4, &[0.5; 4]), &t).is_err());
    }

    #[test]
    fn log_cosh_dice_examples() {
        let t = bits(2, 2, &[1, 1, 0, 0]);
        assert_eq!(log_cosh_dice(&grid(2, 2, &[1.0, 1.0, 0.0, 0.0]), &t).unwrap(), 0.0);
        let disjoint = log_cosh_dice(&grid(2, 2, &[0.0, 0.0, 1.0, 1.0]), &t).unwrap();
        let closed = libm::log((core::f64::consts::E + 1.0 / core::f64::consts::E) / 2.0);
        assert!((disjoint - closed).abs() < 1e-12);
        assert!((disjoint - 0.433781).abs() < 1e-6);
        assert_eq!(
            log_cosh_dice(&grid(2, 2, &[0.0; 4]), &bits(2, 2, &[0, 0, 0, 0])),
            Err(Error::EmptyInputs)
        );
    }

    #[test]
    fn saliency_ratio_examples() {
        let mut v = vec![0.0; 10];
        v[9] = 1.0;
        assert_eq!(saliency_ratio(&grid(1, 10, &v), 60.0).unwrap(), 1.0);
        assert_eq!(saliency_ratio(&grid(1, 10, &[0.4; 10]), 60.0).unwrap(), 1.0);
        assert_eq!(saliency_ratio(&grid(1, 2, &[0.0; 2]), 60.0), Err(Error::DegenerateMap));
    }

    #[test]
    fn metric_ids() {
        for m in MetricId::ALL {
            assert_eq!(MetricId::parse(m.as_str()).unwrap(), m);
        }
        assert!(MetricId::Rcap.higher_is_better());
        assert!(!MetricId::Dauc.higher_is_better());
        assert!(MetricId::parse("auc").is_err());
    }

    /// Independent RCAP: sort once, walk thresholds by hand.
    fn rcap_oracle(values: &[f64], conf: f64, lb: f64, interval: f64) -> f64 {
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = values.len();
        let total: f64 = values.iter().sum();
        let j = ((100.0 - lb) / interval).round() as usize;
        let mut acc = 0.0;
        for k in 1..=j {
            let q = 100.0 - k as f64 * interval;
            let rank = ((q / 100.0 * n as f64) - 1e-9).ceil().max(1.0) as usize;
            let t = sorted[rank - 1];
            let mass: f64 = values.iter().filter(|&&v| v >= t).sum();
            acc += mass / total * conf;
        }
        acc / j as f64
    }

    proptest! {
        #[test]
        fn rcap_matches_oracle_and_invariants(
            values in prop::collection::vec(0.0f64..1.0, 64),
            conf in 0.0f64..1.0,
        ) {
            prop_assume!(values.iter().sum::<f64>() > 0.0);
            let m = grid(8, 8, &values);
            let model = ConstantModel::binary(conf, InputShape::new(1, 8, 8)).unwrap();
            let x = Image::filled(1, 8, 8, 1.0);
            let b = Image::zeros(1, 8, 8);
            for (lb, iv) in [(60.0, 10.0), (60.0, 20.0), (50.0, 25.0)] {
                let r = rcap(&model, &x, 0, &m, &b, lb, iv).unwrap();
                prop_assert!((r.score - rcap_oracle(&values, conf, lb, iv)).abs() < 1e-9);
                prop_assert!(r.ratios.windows(2).all(|w| w[0] <= w[1]));
                prop_assert!(r.ratios.iter().all(|&q| q > 0.0 && q <= 1.0 + 1e-12));
                prop_assert!((0.0..=1.0).contains(&r.score));
                let last = *r.ratios.last().unwrap();
                prop_assert!((last - saliency_ratio(&m, lb).unwrap()).abs() < 1e-12);
            }
        }

        #[test]
        fn auc_depends_only_on_rank(values in prop::collection::vec(0.01f64..1.0, 16)) {
            let w0 = Image::new(1, 4, 4, (0..16).map(|i| (i as f64 - 7.5) / 8.0).collect()).unwrap();
            let model = LinearModel::new(vec![w0, Image::zeros(1, 4, 4)]).unwrap();
            let x = Image::new(1, 4, 4, (0..16).map(|i| ((i * 5) % 7) as f64 / 7.0).collect()).unwrap();
            let b = Image::zeros(1, 4, 4);
            let m = grid(4, 4, &values);
            let cubed = grid(4, 4, &values.iter().map(|v| v * v * v).collect::<Vec<_>>());
            prop_assert_eq!(dauc(&model, &x, 0, &m, 8, &b).unwrap(), dauc(&model, &x, 0, &cubed, 8, &b).unwrap());
            prop_assert_eq!(iauc(&model, &x, 0, &m, 8, &b).unwrap(), iauc(&model, &x, 0, &cubed, 8, &b).unwrap());
        }

        #[test]
        fn recovered_masks_are_nested(values in prop::collection::vec(0.0f64..1.0, 30)) {
            prop_assume!(values.iter().sum::<f64>() > 0.0);
            let m = grid(5, 6, &values);
            let scheme = build_partitions(&m, 60.0, 10.0).unwrap();
            let masks: Vec<BinaryMask> = scheme.masks(&m).collect();
            for w in masks.windows(2) {
                prop_assert!(w[0].is_subset_of(&w[1]));
            }
        }
    }
}
