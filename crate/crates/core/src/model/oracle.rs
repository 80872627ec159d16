//! Ground-truth coverage oracle.
//!
//! A model-free stand-in for `σ(f_c(·))`: the confidence of a recovered image
//! is the fraction of the ground-truth region it recovers. Inputs are
//! indicator images (1 = recovered, 0 = baseline); a pixel counts as recovered
//! when its channel mean is at least 0.5.

use alloc::vec::Vec;

use super::{Capabilities, Classifier, InputShape, Prediction};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::saliency::BinaryMask;

/// `|recovered ∩ gt| / |gt|`.
pub fn coverage_oracle_confidence(recovered: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    recovered.check_same_shape(gt)?;
    let total = gt.count();
    if total == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    Ok(recovered.intersection_count(gt)? as f64 / total as f64)
}

#[derive(Debug, Clone)]
pub struct CoverageOracle {
    gt: BinaryMask,
    channels: usize,
}

impl CoverageOracle {
    pub fn new(gt: BinaryMask) -> Result<Self> {
        if gt.count() == 0 {
            return Err(Error::EmptyGroundTruth);
        }
        Ok(Self { gt, channels: 1 })
    }

    pub fn ground_truth(&self) -> &BinaryMask {
        &self.gt
    }

    /// The fully recovered input (all ones).
    pub fn full_input(&self) -> Image {
        Image::filled(self.channels, self.gt.height(), self.gt.width(), 1.0)
    }

    /// The baseline input (all zeros).
    pub fn baseline(&self) -> Image {
        Image::zeros(self.channels, self.gt.height(), self.gt.width())
    }

    pub fn recovered_mask(&self, image: &Image) -> BinaryMask {
        let n = image.pixels();
        let c = image.channels() as f64;
        let bits = (0..n)
            .map(|i| (0..image.channels()).map(|ch| image.data()[ch * n + i]).sum::<f64>() / c >= 0.5)
            .collect();
        BinaryMask::new(image.height(), image.width(), bits).expect("image grid is valid")
    }

    fn coverage(&self, image: &Image) -> f64 {
        coverage_oracle_confidence(&self.recovered_mask(image), &self.gt)
            .expect("shape checked and gt non-empty")
    }
}

impl Classifier for CoverageOracle {
    fn num_classes(&self) -> usize {
        2
    }

    fn input_shape(&self) -> InputShape {
        InputShape::new(self.channels, self.gt.height(), self.gt.width())
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::NONE
    }

    fn scores(&self, image: &Image) -> Result<Vec<f64>> {
        let c = self.coverage(image);
        Ok(alloc::vec![libm::log(c), libm::log(1.0 - c)])
    }

    fn predict(&self, image: &Image) -> Result<Prediction> {
        let c = self.coverage(image);
        Ok(Prediction {
            scores: alloc::vec![libm::log(c), libm::log(1.0 - c)],
            probs: alloc::vec![c, 1.0 - c],
        })
    }
}
