//! Classifier abstraction and the bundled test-grade models.

mod blobs;
mod cnn;
mod oracle;
mod toy;

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

pub use blobs::{blob_dataset, BlobSample, BLOB_SIZE};
pub use cnn::{NamedTensor, TinyCnn, TrainConfig};
pub use oracle::{coverage_oracle_confidence, CoverageOracle};
pub use toy::{ConstantModel, LinearModel, QuadraticModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl InputShape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn check(&self, image: &Image) -> Result<()> {
        if image.shape() != (self.channels, self.height, self.width) {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", (self.channels, self.height, self.width)),
                actual: format!("{:?}", image.shape()),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub input_gradient: bool,
    /// Reserved for CAM-style methods.
    pub feature_map_access: bool,
    /// Reserved for guided backpropagation.
    pub rectified_backprop: bool,
}

impl Capabilities {
    pub const GRADIENTS: Self = Self {
        input_gradient: true,
        feature_map_access: false,
        rectified_backprop: false,
    };
    pub const NONE: Self = Self {
        input_gradient: false,
        feature_map_access: false,
        rectified_backprop: false,
    };
}

/// Whether an adapter tolerates concurrent read-only inference.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Threading {
    #[default]
    Concurrent,
    SingleThreaded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Pre-softmax class scores.
    pub scores: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Prediction {
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let probs = softmax(&scores);
        Self { scores, probs }
    }
}

/// A classifier that exposes class scores and, optionally, input gradients.
///
/// Implementations must be deterministic: the same input yields the same
/// scores and gradients.
pub trait Classifier: Send + Sync {
    fn num_classes(&self) -> usize;

    fn input_shape(&self) -> InputShape;

    fn capabilities(&self) -> Capabilities {
        Capabilities::GRADIENTS
    }

    fn threading(&self) -> Threading {
        Threading::Concurrent
    }

    /// Pre-softmax scores. Callers have already validated the shape.
    fn scores(&self, image: &Image) -> Result<Vec<f64>>;

    fn predict(&self, image: &Image) -> Result<Prediction> {
        Ok(Prediction::from_scores(self.scores(image)?))
    }

    /// Gradient of the pre-softmax score of `class` with respect to every
    /// input element.
    fn score_gradient(&self, _image: &Image, _class: usize) -> Result<Image> {
        Err(Error::GradientsUnsupported)
    }
}

/// Numerically stable softmax. Entries of `-inf` map to probability 0.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| libm::exp(s - max)).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

fn check_class(model: &dyn Classifier, class: usize) -> Result<()> {
    if class >= model.num_classes() {
        return Err(Error::ClassOutOfRange {
            class,
            num_classes: model.num_classes(),
        });
    }
    Ok(())
}

/// Full prediction after shape validation.
pub fn predict(model: &dyn Classifier, image: &Image) -> Result<Prediction> {
    model.input_shape().check(image)?;
    model.predict(image)
}

/// Softmax confidence `σ(f_c(image))`.
pub fn predict_confidence(model: &dyn Classifier, image: &Image, class: usize) -> Result<f64> {
    check_class(model, class)?;
    Ok(predict(model, image)?.probs[class])
}

/// Gradient of the pre-softmax score `f_c` at `image`.
pub fn input_gradient(model: &dyn Classifier, image: &Image, class: usize) -> Result<Image> {
    if !model.capabilities().input_gradient {
        return Err(Error::GradientsUnsupported);
    }
    check_class(model, class)?;
    model.input_shape().check(image)?;
    model.score_gradient(image, class)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn softmax_symmetry_and_saturation() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = softmax(&[1000.0, -1000.0]);
        assert!((p[0] - 1.0).abs() < 1e-12);
        let p = softmax(&[0.0, f64::NEG_INFINITY]);
        assert_eq!(p, vec![1.0, 0.0]);
    }

    #[test]
    fn shape_and_class_checks() {
        let m = ConstantModel::uniform(2, InputShape::new(1, 2, 2));
        let bad = Image::zeros(1, 3, 3);
        assert!(matches!(
            predict_confidence(&m, &bad, 0),
            Err(Error::ShapeMismatch { .. })
        ));
        let ok = Image::zeros(1, 2, 2);
        assert!(matches!(
            predict_confidence(&m, &ok, 2),
            Err(Error::ClassOutOfRange { .. })
        ));
        assert_eq!(predict_confidence(&m, &ok, 1).unwrap(), 0.5);
    }
}
