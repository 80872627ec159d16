//! Analytic toy models with closed-form scores and gradients.

use alloc::vec::Vec;

use super::{Classifier, InputShape, Prediction};
use crate::error::{Error, Result};
use crate::image::Image;

/// Fixed class probabilities regardless of input; zero gradient.
#[derive(Debug, Clone)]
pub struct ConstantModel {
    shape: InputShape,
    probs: Vec<f64>,
}

impl ConstantModel {
    pub fn new(shape: InputShape, probs: Vec<f64>) -> Result<Self> {
        let total: f64 = probs.iter().sum();
        if probs.is_empty() || probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(
                "constant model needs a probability vector".into(),
            ));
        }
        Ok(Self { shape, probs })
    }

    pub fn uniform(num_classes: usize, shape: InputShape) -> Self {
        Self {
            shape,
            probs: alloc::vec![1.0 / num_classes as f64; num_classes],
        }
    }

    /// Two classes where class 0 always has confidence `c`.
    pub fn binary(c: f64, shape: InputShape) -> Result<Self> {
        Self::new(shape, alloc::vec![c, 1.0 - c])
    }
}

impl Classifier for ConstantModel {
    fn num_classes(&self) -> usize {
        self.probs.len()
    }

    fn input_shape(&self) -> InputShape {
        self.shape
    }

    fn scores(&self, _image: &Image) -> Result<Vec<f64>> {
        Ok(self.probs.iter().map(|&p| libm::log(p)).collect())
    }

    fn predict(&self, _image: &Image) -> Result<Prediction> {
        Ok(Prediction {
            scores: self.probs.iter().map(|&p| libm::log(p)).collect(),
            probs: self.probs.clone(),
        })
    }

    fn score_gradient(&self, image: &Image, _class: usize) -> Result<Image> {
        let (c, h, w) = image.shape();
        Ok(Image::zeros(c, h, w))
    }
}

/// `f_c(x) = w_c · x`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    weights: Vec<Image>,
}

impl LinearModel {
    pub fn new(weights: Vec<Image>) -> Result<Self> {
        let first = weights
            .first()
            .ok_or_else(|| Error::InvalidParameter("linear model needs a class".into()))?;
        for w in &weights {
            first.check_same_shape(w)?;
        }
        Ok(Self { weights })
    }

    pub fn weights(&self, class: usize) -> &Image {
        &self.weights[class]
    }
}

impl Classifier for LinearModel {
    fn num_classes(&self) -> usize {
        self.weights.len()
    }

    fn input_shape(&self) -> InputShape {
        let (c, h, w) = self.weights[0].shape();
        InputShape::new(c, h, w)
    }

    fn scores(&self, image: &Image) -> Result<Vec<f64>> {
        self.weights.iter().map(|w| w.dot(image)).collect()
    }

    fn score_gradient(&self, _image: &Image, class: usize) -> Result<Image> {
        Ok(self.weights[class].clone())
    }
}

/// `f_c(x) = −Σ (x − t_c)²` over class templates `t_c`.
#[derive(Debug, Clone)]
pub struct QuadraticModel {
    templates: Vec<Image>,
}

impl QuadraticModel {
    pub fn new(templates: Vec<Image>) -> Result<Self> {
        let first = templates
            .first()
            .ok_or_else(|| Error::InvalidParameter("quadratic model needs a class".into()))?;
        for t in &templates {
            first.check_same_shape(t)?;
        }
        Ok(Self { templates })
    }

    pub fn template(&self, class: usize) -> &Image {
        &self.templates[class]
    }
}

impl Classifier for QuadraticModel {
    fn num_classes(&self) -> usize {
        self.templates.len()
    }

    fn input_shape(&self) -> InputShape {
        let (c, h, w) = self.templates[0].shape();
        InputShape::new(c, h, w)
    }

    fn scores(&self, image: &Image) -> Result<Vec<f64>> {
        Ok(self
            .templates
            .iter()
            .map(|t| {
                -image
                    .data()
                    .iter()
                    .zip(t.data())
                    .map(|(x, t)| (x - t) * (x - t))
                    .sum::<f64>()
            })
            .collect())
    }

    fn score_gradient(&self, image: &Image, class: usize) -> Result<Image> {
        image.zip_map(&self.templates[class], |x, t| -2.0 * (x - t))
    }
}
