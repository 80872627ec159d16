//! Saliency maps, binary masks, percentile partitions and area separation.
//!
//! Percentiles use the nearest-rank estimator and every membership test is
//! `value >= threshold`, so tied values always travel together.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// A 2-D field of finite attribution scores, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
    normalized: bool,
}

impl SaliencyMap {
    /// An unnormalized map. Fails on a size mismatch or any non-finite value.
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        check_grid(height, width, values.len())?;
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            height,
            width,
            values,
            normalized: false,
        })
    }

    /// A map already in `[0, 1]` with at least one positive value.
    pub fn from_normalized(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        let mut map = Self::new(height, width, values)?;
        if map.values.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidParameter(
                "normalized map values must lie in [0, 1]".into(),
            ));
        }
        if !map.values.iter().any(|&v| v > 0.0) {
            return Err(Error::DegenerateMap);
        }
        map.normalized = true;
        Ok(map)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Saliency mass inside `mask`.
    pub fn masked_sum(&self, mask: &BinaryMask) -> Result<f64> {
        self.check_mask(mask)?;
        Ok(self
            .values
            .iter()
            .zip(&mask.bits)
            .filter(|(_, &b)| b)
            .map(|(v, _)| v)
            .sum())
    }

    /// Pixel indices ordered by descending saliency; ties keep index order.
    pub fn rank_descending(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.values.len()).collect();
        order.sort_by(|&a, &b| self.values[b].total_cmp(&self.values[a]).then(a.cmp(&b)));
        order
    }

    /// Pixel indices ordered by ascending saliency; ties keep index order.
    pub fn rank_ascending(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.values.len()).collect();
        order.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]).then(a.cmp(&b)));
        order
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            height: self.height,
            width: self.width,
            values,
            normalized: self.normalized,
        }
    }

    pub fn check_mask(&self, mask: &BinaryMask) -> Result<()> {
        if (self.height, self.width) != (mask.height, mask.width) {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", self.height, self.width),
                actual: format!("{}x{}", mask.height, mask.width),
            });
        }
        Ok(())
    }

    pub fn check_image(&self, image: &Image) -> Result<()> {
        if (self.height, self.width) != (image.height(), image.width()) {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", self.height, self.width),
                actual: format!("{}x{}", image.height(), image.width()),
            });
        }
        Ok(())
    }
}

fn check_grid(height: usize, width: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidParameter(format!(
            "grid dimensions must be positive, got {height}x{width}"
        )));
    }
    if len != height * width {
        return Err(Error::ShapeMismatch {
            expected: format!("{} values", height * width),
            actual: format!("{len} values"),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        check_grid(height, width, bits.len())?;
        Ok(Self { height, width, bits })
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Self {
        Self {
            height,
            width,
            bits: alloc::vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> Result<usize> {
        self.check_same_shape(other)?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a && b)
            .count())
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.bits.len() == other.bits.len()
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn check_same_shape(&self, other: &BinaryMask) -> Result<()> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", self.height, self.width),
                actual: format!("{}x{}", other.height, other.width),
            });
        }
        Ok(())
    }
}

/// Nearest-rank percentile: the element at 1-based index `max(1, ceil(q/100 · N))`
/// of the ascending sort. `q = 0` yields the minimum.
pub fn percentile_value(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyValues);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_of_sorted(&sorted, q)
}

pub(crate) fn percentile_of_sorted(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::EmptyValues);
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::InvalidParameter(format!(
            "percentile must lie in [0, 100], got {q}"
        )));
    }
    Ok(sorted[nearest_rank(q, sorted.len()) - 1])
}

/// 1-based nearest rank for percentile `q` over `n` items.
pub(crate) fn nearest_rank(q: f64, n: usize) -> usize {
    let exact = q * n as f64 / 100.0;
    // q·N/100 lands on an integer for the usual grids; snap so rounding noise
    // never bumps the rank by one.
    let snapped = libm::round(exact);
    let pos = if libm::fabs(exact - snapped) < 1e-9 {
        snapped
    } else {
        libm::ceil(exact)
    };
    (pos as usize).clamp(1, n)
}

/// Affine rescale to `[0, 1]` (min → 0, max → 1). Constant maps are rejected.
pub fn normalize_map(map: &SaliencyMap) -> Result<SaliencyMap> {
    let (lo, hi) = map
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return Err(Error::DegenerateMap);
    }
    let values = map
        .values
        .iter()
        .map(|&v| ((v - lo) / span).clamp(0.0, 1.0))
        .collect();
    Ok(SaliencyMap {
        height: map.height,
        width: map.width,
        values,
        normalized: true,
    })
}

/// Bits set exactly where `map >= threshold`.
pub fn threshold_mask(map: &SaliencyMap, threshold: f64) -> BinaryMask {
    BinaryMask {
        height: map.height,
        width: map.width,
        bits: map.values.iter().map(|&v| v >= threshold).collect(),
    }
}

/// Percentile thresholds `p_1 .. p_j` with `p_k` at the `(100 − k·interval)`-th percentile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionScheme {
    pub lower_bound: f64,
    pub interval: f64,
    pub count: usize,
    /// Percentile rank used for each partition, k = 1..j.
    pub percentiles: Vec<f64>,
    /// Saliency threshold for each partition; non-increasing in k.
    pub thresholds: Vec<f64>,
}

impl PartitionScheme {
    /// Validates the grid and returns `j = (100 − lower_bound) / interval`.
    pub fn partition_count(lower_bound: f64, interval: f64) -> Result<usize> {
        let invalid = || Error::InvalidPartitionGrid {
            lower_bound,
            interval,
        };
        if !(0.0..100.0).contains(&lower_bound) || !(interval > 0.0) || !interval.is_finite() {
            return Err(invalid());
        }
        let ratio = (100.0 - lower_bound) / interval;
        let j = libm::round(ratio);
        if j < 1.0 || libm::fabs(ratio - j) > 1e-9 {
            return Err(invalid());
        }
        Ok(j as usize)
    }

    pub fn masks<'a>(&'a self, map: &'a SaliencyMap) -> impl Iterator<Item = BinaryMask> + 'a {
        self.thresholds.iter().map(move |&t| threshold_mask(map, t))
    }
}

pub fn build_partitions(
    map: &SaliencyMap,
    lower_bound: f64,
    interval: f64,
) -> Result<PartitionScheme> {
    let count = PartitionScheme::partition_count(lower_bound, interval)?;
    let mut sorted = map.values.clone();
    sorted.sort_by(f64::total_cmp);
    let percentiles: Vec<f64> = (1..=count)
        .map(|k| (100.0 - k as f64 * interval).max(0.0))
        .collect();
    let thresholds = percentiles
        .iter()
        .map(|&q| percentile_of_sorted(&sorted, q))
        .collect::<Result<Vec<_>>>()?;
    Ok(PartitionScheme {
        lower_bound,
        interval,
        count,
        percentiles,
        thresholds,
    })
}

/// Focus/Noise split, optionally paired with Ground-truth/Background.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaMasks {
    pub focus: BinaryMask,
    pub noise: BinaryMask,
    pub ground_truth: Option<BinaryMask>,
    pub background: Option<BinaryMask>,
}

impl AreaMasks {
    pub fn with_ground_truth(mut self, gt: BinaryMask) -> Result<Self> {
        self.focus.check_same_shape(&gt)?;
        self.background = Some(gt.complement());
        self.ground_truth = Some(gt);
        Ok(self)
    }
}

/// Focus = pixels at or above the `lower_bound` percentile; Noise = the rest.
pub fn focus_noise_split(map: &SaliencyMap, lower_bound: f64) -> Result<AreaMasks> {
    let threshold = percentile_value(&map.values, lower_bound)?;
    let focus = threshold_mask(map, threshold);
    let noise = focus.complement();
    Ok(AreaMasks {
        focus,
        noise,
        ground_truth: None,
        background: None,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelMode {
    #[default]
    Mean,
    Max,
}

/// Per-pixel reduction across channels of an (already interpreted) gradient.
pub fn channel_reduce(grad: &Image, mode: ChannelMode) -> SaliencyMap {
    let (c, h, w) = grad.shape();
    let n = h * w;
    let values = (0..n)
        .map(|i| {
            let across = (0..c).map(|ch| grad.data()[ch * n + i]);
            match mode {
                ChannelMode::Mean => across.sum::<f64>() / c as f64,
                ChannelMode::Max => across.fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    SaliencyMap {
        height: h,
        width: w,
        values,
        normalized: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn sort_and_index(values: &[f64], q: f64) -> f64 {
        // Independent oracle: count how many items are needed to cover q percent.
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = v.len();
        let mut k = 1;
        while (k as f64) * 100.0 < q * n as f64 {
            k += 1;
        }
        v[k.min(n) - 1]
    }

    fn map(h: usize, w: usize, v: &[f64]) -> SaliencyMap {
        SaliencyMap::from_normalized(h, w, v.to_vec()).unwrap()
    }

    #[test]
    fn percentile_examples() {
        assert_eq!(percentile_value(&[1.0, 2.0, 3.0, 4.0], 50.0).unwrap(), 2.0);
        assert_eq!(sort_and_index(&[1.0, 2.0, 3.0, 4.0], 50.0), 2.0);
        assert_eq!(percentile_value(&[1.0, 2.0, 3.0, 4.0], 100.0).unwrap(), 4.0);
        assert_eq!(percentile_value(&[7.0], 0.0).unwrap(), 7.0);
        assert_eq!(percentile_value(&[], 10.0), Err(Error::EmptyValues));
        assert!(percentile_value(&[1.0], 101.0).is_err());
    }

    #[test]
    fn percentile_rank_is_not_bumped_by_rounding() {
        // 0.6 * 10 is 6.000000000000001 in binary floating point.
        let v: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        assert_eq!(percentile_value(&v, 60.0).unwrap(), 0.5);
        assert_eq!(sort_and_index(&v, 60.0), 0.5);
    }

    #[test]
    fn normalize_examples() {
        let m = SaliencyMap::new(1, 3, vec![0.0, 5.0, 10.0]).unwrap();
        assert_eq!(normalize_map(&m).unwrap().values(), &[0.0, 0.5, 1.0]);
        let m = SaliencyMap::new(1, 3, vec![-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(normalize_map(&m).unwrap().values(), &[0.0, 0.5, 1.0]);
        let m = SaliencyMap::new(1, 3, vec![3.0, 3.0, 3.0]).unwrap();
        assert_eq!(normalize_map(&m), Err(Error::DegenerateMap));
    }

    #[test]
    fn rejects_non_finite() {
        assert_eq!(
            SaliencyMap::new(1, 2, vec![0.0, f64::NAN]),
            Err(Error::NonFinite { index: 1 })
        );
        assert!(SaliencyMap::from_normalized(1, 2, vec![0.0, 0.0]).is_err());
        assert!(SaliencyMap::from_normalized(1, 2, vec![0.0, 1.5]).is_err());
    }

    #[test]
    fn threshold_examples() {
        let m = map(2, 2, &[0.1, 0.9, 0.5, 0.5]);
        assert_eq!(threshold_mask(&m, 0.5).bits(), &[false, true, true, true]);
        assert_eq!(threshold_mask(&m, 0.0).count(), 4);
        assert_eq!(threshold_mask(&m, 1.0 + f64::EPSILON).count(), 0);
    }

    #[test]
    fn partition_examples() {
        let m = map(1, 5, &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let p = build_partitions(&m, 60.0, 20.0).unwrap();
        assert_eq!(p.count, 2);
        assert_eq!(p.percentiles, vec![80.0, 60.0]);
        assert_eq!(build_partitions(&m, 0.0, 20.0).unwrap().count, 5);
        assert!(matches!(
            build_partitions(&m, 60.0, 7.0),
            Err(Error::InvalidPartitionGrid { .. })
        ));
        assert!(build_partitions(&m, 100.0, 10.0).is_err());
        assert!(build_partitions(&m, 50.0, 0.0).is_err());
    }

    #[test]
    fn focus_split_distinct_values() {
        // Sort-and-count: the 60th nearest-rank percentile of 0.0..0.9 is the
        // 6th smallest value, 0.5, and membership is >=.
        let v: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let m = map(2, 5, &v);
        let areas = focus_noise_split(&m, 60.0).unwrap();
        let focus: Vec<f64> = (0..10).filter(|&i| areas.focus.bits()[i]).map(|i| v[i]).collect();
        assert_eq!(focus, vec![0.5, 0.6, 0.7, 0.8, 0.9]);
        assert_eq!(areas.noise.count(), 5);
    }

    #[test]
    fn focus_split_lower_bound_zero_is_everything() {
        let m = map(1, 4, &[0.0, 0.2, 0.4, 1.0]);
        let areas = focus_noise_split(&m, 0.0).unwrap();
        assert_eq!(areas.focus.count(), 4);
        assert_eq!(areas.noise.count(), 0);
    }

    #[test]
    fn focus_split_binary_map() {
        // 40% ones: nearest-rank 60th percentile is the last zero, so every
        // pixel satisfies >= and lands in focus.
        let v = [1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0];
        let m = map(1, 10, &v);
        assert_eq!(sort_and_index(&v, 60.0), 0.0);
        let areas = focus_noise_split(&m, 60.0).unwrap();
        assert_eq!(areas.focus.count(), 10);
        // One step above the zero block isolates the ones exactly.
        let areas = focus_noise_split(&m, 61.0).unwrap();
        let ones: Vec<bool> = v.iter().map(|&x| x == 1.0).collect();
        assert_eq!(areas.focus.bits(), ones.as_slice());
    }

    #[test]
    fn area_masks_with_ground_truth() {
        let m = map(1, 4, &[0.0, 0.2, 0.4, 1.0]);
        let gt = BinaryMask::new(1, 4, vec![false, false, true, true]).unwrap();
        let areas = focus_noise_split(&m, 50.0).unwrap().with_ground_truth(gt).unwrap();
        let bg = areas.background.as_ref().unwrap();
        assert_eq!(bg.bits(), &[true, true, false, false]);
        let bad = BinaryMask::filled(2, 2, true);
        assert!(focus_noise_split(&m, 50.0).unwrap().with_ground_truth(bad).is_err());
    }

    #[test]
    fn channel_reduce_examples() {
        let g = Image::new(3, 1, 1, vec![2.0, 4.0, 6.0]).unwrap();
        assert_eq!(channel_reduce(&g, ChannelMode::Mean).values(), &[4.0]);
        assert_eq!(channel_reduce(&g, ChannelMode::Max).values(), &[6.0]);
        let g = Image::new(1, 1, 2, vec![-3.0, 2.0]).unwrap();
        assert_eq!(channel_reduce(&g, ChannelMode::Mean).values(), &[-3.0, 2.0]);
        let g = Image::new(2, 1, 1, vec![-1.0, 5.0]).unwrap();
        let abs = g.map(f64::abs);
        assert_eq!(channel_reduce(&abs, ChannelMode::Mean).values(), &[3.0]);
    }

    fn unit_values() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..=1.0, 1..80)
    }

    proptest! {
        #[test]
        fn percentile_is_monotone(v in unit_values(), a in 0.0f64..=100.0, b in 0.0f64..=100.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(percentile_value(&v, lo).unwrap() <= percentile_value(&v, hi).unwrap());
        }

        #[test]
        fn percentile_matches_oracle(v in unit_values(), q in 0u32..=100) {
            prop_assert_eq!(percentile_value(&v, q as f64).unwrap(), sort_and_index(&v, q as f64));
        }

        #[test]
        fn partitions_are_nested(mut v in unit_values(), grid in prop::sample::select(vec![(60.0, 20.0), (60.0, 10.0), (50.0, 25.0), (0.0, 20.0)])) {
            v.push(1.0);
            let m = SaliencyMap::from_normalized(1, v.len(), v).unwrap();
            let p = build_partitions(&m, grid.0, grid.1).unwrap();
            for w in p.thresholds.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
            let masks: Vec<_> = p.masks(&m).collect();
            for w in masks.windows(2) {
                prop_assert!(w[0].is_subset_of(&w[1]));
            }
        }

        #[test]
        fn focus_and_noise_partition_the_map(mut v in unit_values(), lb in 0u32..100) {
            v.push(1.0);
            let m = SaliencyMap::from_normalized(1, v.len(), v).unwrap();
            let a = focus_noise_split(&m, lb as f64).unwrap();
            prop_assert_eq!(a.focus.count() + a.noise.count(), m.len());
            prop_assert_eq!(a.focus.intersection_count(&a.noise).unwrap(), 0);
            let total = m.masked_sum(&a.focus).unwrap() + m.masked_sum(&a.noise).unwrap();
            prop_assert!((total - m.sum()).abs() <= 1e-12 * m.len() as f64);
        }

        #[test]
        fn focus_fraction_for_distinct_values(n in 5usize..200, seed in any::<u64>()) {
            // Distinct values via a permutation of 0..n.
            let mut v: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                v.swap(i, (s >> 33) as usize % (i + 1));
            }
            let m = SaliencyMap::from_normalized(1, n, v).unwrap();
            let frac = focus_noise_split(&m, 60.0).unwrap().focus.count() as f64 / n as f64;
            let tol = 1.0 / n as f64 + 1e-12;
            prop_assert!(frac >= 0.40 - tol && frac <= 0.40 + tol, "frac {}", frac);
        }

        #[test]
        fn normalize_is_idempotent(v in prop::collection::vec(-50.0f64..50.0, 2..60)) {
            let m = SaliencyMap::new(1, v.len(), v).unwrap();
            if let Ok(n1) = normalize_map(&m) {
                let n2 = normalize_map(&n1).unwrap();
                prop_assert_eq!(n1.values(), n2.values());
                prop_assert!(n1.values().iter().all(|&x| (0.0..=1.0).contains(&x)));
            }
        }
    }
}
