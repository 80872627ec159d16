//! A tiny convolutional classifier with hand-written backpropagation.
//!
//! Architecture: conv3×3(C→4) → ReLU → conv3×3(4→8) → ReLU → avgpool 4×4 →
//! linear → class scores. Convolutions use zero "same" padding.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{softmax, Classifier, InputShape};
use crate::error::{Error, Result};
use crate::image::Image;

const CONV1: usize = 4;
const CONV2: usize = 8;
const POOL: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 32,
            learning_rate: 0.05,
            momentum: 0.9,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyCnn {
    shape: InputShape,
    classes: usize,
    params: Params,
}

#[derive(Debug, Clone, PartialEq)]
struct Params {
    conv1_w: Vec<f64>,
    conv1_b: Vec<f64>,
    conv2_w: Vec<f64>,
    conv2_b: Vec<f64>,
    fc_w: Vec<f64>,
    fc_b: Vec<f64>,
}

impl Params {
    fn zeros_like(other: &Params) -> Params {
        Params {
            conv1_w: vec![0.0; other.conv1_w.len()],
            conv1_b: vec![0.0; other.conv1_b.len()],
            conv2_w: vec![0.0; other.conv2_w.len()],
            conv2_b: vec![0.0; other.conv2_b.len()],
            fc_w: vec![0.0; other.fc_w.len()],
            fc_b: vec![0.0; other.fc_b.len()],
        }
    }

    fn slots_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.fc_w,
            &mut self.fc_b,
        ]
    }
}

struct Activations {
    a1: Vec<f64>,
    a2: Vec<f64>,
    pooled: Vec<f64>,
    scores: Vec<f64>,
}

impl TinyCnn {
    /// He-uniform initialisation from `seed`.
    pub fn init(shape: InputShape, classes: usize, seed: u64) -> Result<Self> {
        Self::check_shape(shape, classes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fc_in = CONV2 * (shape.height / POOL) * (shape.width / POOL);
        let mut uniform = |len: usize, fan_in: usize| -> Vec<f64> {
            let bound = libm::sqrt(6.0 / fan_in as f64);
            (0..len).map(|_| rng.random_range(-bound..bound)).collect()
        };
        let params = Params {
            conv1_w: uniform(CONV1 * shape.channels * 9, shape.channels * 9),
            conv1_b: vec![0.0; CONV1],
            conv2_w: uniform(CONV2 * CONV1 * 9, CONV1 * 9),
            conv2_b: vec![0.0; CONV2],
            fc_w: uniform(classes * fc_in, fc_in),
            fc_b: vec![0.0; classes],
        };
        Ok(Self {
            shape,
            classes,
            params,
        })
    }

    fn check_shape(shape: InputShape, classes: usize) -> Result<()> {
        if shape.channels == 0
            || shape.height < POOL
            || shape.width < POOL
            || !shape.height.is_multiple_of(POOL)
            || !shape.width.is_multiple_of(POOL)
            || classes < 2
        {
            return Err(Error::InvalidParameter(format!(
                "tiny CNN needs H, W divisible by {POOL} and >= 2 classes, got {shape:?} / {classes}"
            )));
        }
        Ok(())
    }

    fn expected_shapes(shape: InputShape, classes: usize) -> [(&'static str, Vec<usize>); 6] {
        let fc_in = CONV2 * (shape.height / POOL) * (shape.width / POOL);
        [
            ("conv1.weight", vec![CONV1, shape.channels, 3, 3]),
            ("conv1.bias", vec![CONV1]),
            ("conv2.weight", vec![CONV2, CONV1, 3, 3]),
            ("conv2.bias", vec![CONV2]),
            ("fc.weight", vec![classes, fc_in]),
            ("fc.bias", vec![classes]),
        ]
    }

    pub fn to_tensors(&self) -> Vec<NamedTensor> {
        let p = &self.params;
        let data = [&p.conv1_w, &p.conv1_b, &p.conv2_w, &p.conv2_b, &p.fc_w, &p.fc_b];
        Self::expected_shapes(self.shape, self.classes)
            .into_iter()
            .zip(data)
            .map(|((name, shape), d)| NamedTensor {
                name: name.into(),
                shape,
                data: d.clone(),
            })
            .collect()
    }

    pub fn from_tensors(shape: InputShape, classes: usize, tensors: &[NamedTensor]) -> Result<Self> {
        Self::check_shape(shape, classes)?;
        let mut params = Params {
            conv1_w: Vec::new(),
            conv1_b: Vec::new(),
            conv2_w: Vec::new(),
            conv2_b: Vec::new(),
            fc_w: Vec::new(),
            fc_b: Vec::new(),
        };
        for ((name, expected), slot) in Self::expected_shapes(shape, classes)
            .into_iter()
            .zip(params.slots_mut())
        {
            let t = tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::InvalidParameter(format!("missing tensor {name}")))?;
            if t.shape != expected || t.data.len() != expected.iter().product::<usize>() {
                return Err(Error::ShapeMismatch {
                    expected: format!("{name} {expected:?}"),
                    actual: format!("{:?} ({} values)", t.shape, t.data.len()),
                });
            }
            if let Some(index) = t.data.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { index });
            }
            *slot = t.data.clone();
        }
        Ok(Self {
            shape,
            classes,
            params,
        })
    }

    /// Rounds every parameter to the nearest `f32`, matching the on-disk format.
    pub fn round_to_f32(&mut self) {
        for slot in self.params.slots_mut() {
            for v in slot.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    fn forward(&self, x: &[f64]) -> Activations {
        let (c, h, w) = (self.shape.channels, self.shape.height, self.shape.width);
        let p = &self.params;
        let mut a1 = conv_same(x, c, h, w, &p.conv1_w, &p.conv1_b, CONV1);
        relu(&mut a1);
        let mut a2 = conv_same(&a1, CONV1, h, w, &p.conv2_w, &p.conv2_b, CONV2);
        relu(&mut a2);
        let pooled = avg_pool(&a2, CONV2, h, w);
        let fc_in = pooled.len();
        let scores = (0..self.classes)
            .map(|k| {
                p.fc_b[k]
                    + p.fc_w[k * fc_in..(k + 1) * fc_in]
                        .iter()
                        .zip(&pooled)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect();
        Activations {
            a1,
            a2,
            pooled,
            scores,
        }
    }

    /// Backpropagates `d_scores`; returns the input gradient and, when
    /// `grads` is given, accumulates parameter gradients into it.
    fn backward(&self, x: &[f64], acts: &Activations, d_scores: &[f64], mut grads: Option<&mut Params>) -> Vec<f64> {
        let (c, h, w) = (self.shape.channels, self.shape.height, self.shape.width);
        let p = &self.params;
        let fc_in = acts.pooled.len();

        let mut d_pooled = vec![0.0; fc_in];
        for (k, &ds) in d_scores.iter().enumerate() {
            if ds == 0.0 {
                continue;
            }
            let row = &p.fc_w[k * fc_in..(k + 1) * fc_in];
            for (d, &wt) in d_pooled.iter_mut().zip(row) {
                *d += ds * wt;
            }
            if let Some(g) = grads.as_deref_mut() {
                g.fc_b[k] += ds;
                for (gw, &a) in g.fc_w[k * fc_in..(k + 1) * fc_in].iter_mut().zip(&acts.pooled) {
                    *gw += ds * a;
                }
            }
        }

        let mut d_a2 = avg_pool_backward(&d_pooled, CONV2, h, w);
        relu_backward(&mut d_a2, &acts.a2);
        if let Some(g) = grads.as_deref_mut() {
            conv_params_backward(&acts.a1, CONV1, h, w, &d_a2, CONV2, &mut g.conv2_w, &mut g.conv2_b);
        }
        let mut d_a1 = conv_input_backward(&d_a2, CONV2, h, w, &p.conv2_w, CONV1);
        relu_backward(&mut d_a1, &acts.a1);
        if let Some(g) = grads {
            conv_params_backward(x, c, h, w, &d_a1, CONV1, &mut g.conv1_w, &mut g.conv1_b);
        }
        conv_input_backward(&d_a1, CONV1, h, w, &p.conv1_w, c)
    }

    /// Mini-batch SGD with momentum on softmax cross-entropy.
    pub fn train(samples: &[(Image, usize)], shape: InputShape, classes: usize, config: &TrainConfig) -> Result<Self> {
        if samples.is_empty() || config.batch_size == 0 {
            return Err(Error::EmptyInputs);
        }
        for (img, label) in samples {
            shape.check(img)?;
            if *label >= classes {
                return Err(Error::ClassOutOfRange {
                    class: *label,
                    num_classes: classes,
                });
            }
        }
        let mut model = Self::init(shape, classes, config.seed)?;
        let mut velocity = Params::zeros_like(&model.params);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x005e_ed0f_5eed);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(config.batch_size) {
                let mut grads = Params::zeros_like(&model.params);
                for &i in batch {
                    let (img, label) = &samples[i];
                    let acts = model.forward(img.data());
                    let mut d = softmax(&acts.scores);
                    d[*label] -= 1.0;
                    model.backward(img.data(), &acts, &d, Some(&mut grads));
                }
                let scale = config.learning_rate / batch.len() as f64;
                for ((param, vel), grad) in model
                    .params
                    .slots_mut()
                    .into_iter()
                    .zip(velocity.slots_mut())
                    .zip(grads.slots_mut())
                {
                    for ((p, v), g) in param.iter_mut().zip(vel.iter_mut()).zip(grad.iter()) {
                        *v = config.momentum * *v - scale * g;
                        *p += *v;
                    }
                }
            }
        }
        Ok(model)
    }

    pub fn accuracy(&self, samples: &[(Image, usize)]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        let correct = samples
            .iter()
            .filter(|(img, label)| argmax(&self.forward(img.data()).scores) == *label)
            .count();
        correct as f64 / samples.len() as f64
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

impl Classifier for TinyCnn {
    fn num_classes(&self) -> usize {
        self.classes
    }

    fn input_shape(&self) -> InputShape {
        self.shape
    }

    fn scores(&self, image: &Image) -> Result<Vec<f64>> {
        Ok(self.forward(image.data()).scores)
    }

    fn score_gradient(&self, image: &Image, class: usize) -> Result<Image> {
        let acts = self.forward(image.data());
        let mut d = vec![0.0; self.classes];
        d[class] = 1.0;
        let g = self.backward(image.data(), &acts, &d, None);
        Image::new(self.shape.channels, self.shape.height, self.shape.width, g)
    }
}

fn relu(v: &mut [f64]) {
    for x in v {
        *x = x.max(0.0);
    }
}

fn relu_backward(d: &mut [f64], activated: &[f64]) {
    for (g, &a) in d.iter_mut().zip(activated) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Taps of a 3×3 kernel that stay inside the image for output row/col `o`.
#[inline]
fn tap_range(o: usize, len: usize) -> core::ops::Range<usize> {
    let lo = if o == 0 { 1 } else { 0 };
    let hi = if o + 1 == len { 2 } else { 3 };
    lo..hi
}

fn conv_same(input: &[f64], cin: usize, h: usize, w: usize, weight: &[f64], bias: &[f64], cout: usize) -> Vec<f64> {
    let plane = h * w;
    let mut out = vec![0.0; cout * plane];
    for co in 0..cout {
        let dst = &mut out[co * plane..(co + 1) * plane];
        dst.iter_mut().for_each(|v| *v = bias[co]);
        for ci in 0..cin {
            let src = &input[ci * plane..(ci + 1) * plane];
            let k = &weight[(co * cin + ci) * 9..(co * cin + ci + 1) * 9];
            for y in 0..h {
                for ky in tap_range(y, h) {
                    let sy = y + ky - 1;
                    for x in 0..w {
                        let mut acc = 0.0;
                        for kx in tap_range(x, w) {
                            acc += k[ky * 3 + kx] * src[sy * w + x + kx - 1];
                        }
                        dst[y * w + x] += acc;
                    }
                }
            }
        }
    }
    out
}

fn conv_input_backward(d_out: &[f64], cout: usize, h: usize, w: usize, weight: &[f64], cin: usize) -> Vec<f64> {
    let plane = h * w;
    let mut d_in = vec![0.0; cin * plane];
    for co in 0..cout {
        let g = &d_out[co * plane..(co + 1) * plane];
        for ci in 0..cin {
            let k = &weight[(co * cin + ci) * 9..(co * cin + ci + 1) * 9];
            let dst = &mut d_in[ci * plane..(ci + 1) * plane];
            for y in 0..h {
                for ky in tap_range(y, h) {
                    let sy = y + ky - 1;
                    for x in 0..w {
                        let gv = g[y * w + x];
                        for kx in tap_range(x, w) {
                            dst[sy * w + x + kx - 1] += k[ky * 3 + kx] * gv;
                        }
                    }
                }
            }
        }
    }
    d_in
}

#[allow(clippy::too_many_arguments)]
fn conv_params_backward(
    input: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    d_out: &[f64],
    cout: usize,
    d_weight: &mut [f64],
    d_bias: &mut [f64],
) {
    let plane = h * w;
    for co in 0..cout {
        let g = &d_out[co * plane..(co + 1) * plane];
        d_bias[co] += g.iter().sum::<f64>();
        for ci in 0..cin {
            let src = &input[ci * plane..(ci + 1) * plane];
            let dk = &mut d_weight[(co * cin + ci) * 9..(co * cin + ci + 1) * 9];
            for y in 0..h {
                for ky in tap_range(y, h) {
                    let sy = y + ky - 1;
                    for x in 0..w {
                        let gv = g[y * w + x];
                        for kx in tap_range(x, w) {
                            dk[ky * 3 + kx] += gv * src[sy * w + x + kx - 1];
                        }
                    }
                }
            }
        }
    }
}

fn avg_pool(input: &[f64], channels: usize, h: usize, w: usize) -> Vec<f64> {
    let (ph, pw) = (h / POOL, w / POOL);
    let norm = (POOL * POOL) as f64;
    let mut out = vec![0.0; channels * ph * pw];
    for c in 0..channels {
        for y in 0..h {
            for x in 0..w {
                out[(c * ph + y / POOL) * pw + x / POOL] += input[(c * h + y) * w + x];
            }
        }
    }
    out.iter_mut().for_each(|v| *v /= norm);
    out
}

fn avg_pool_backward(d_out: &[f64], channels: usize, h: usize, w: usize) -> Vec<f64> {
    let (ph, pw) = (h / POOL, w / POOL);
    let norm = (POOL * POOL) as f64;
    let mut d_in = vec![0.0; channels * h * w];
    for c in 0..channels {
        for y in 0..h {
            for x in 0..w {
                d_in[(c * h + y) * w + x] = d_out[(c * ph + y / POOL) * pw + x / POOL] / norm;
            }
        }
    }
    d_in
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::input_gradient;

    fn random_image(shape: InputShape, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..shape.channels * shape.height * shape.width)
            .map(|_| rng.random_range(0.0..1.0))
            .collect();
        Image::new(shape.channels, shape.height, shape.width, data).unwrap()
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let shape = InputShape::new(2, 8, 8);
        let model = TinyCnn::init(shape, 3, 11).unwrap();
        let x = random_image(shape, 3);
        for class in 0..3 {
            let g = input_gradient(&model, &x, class).unwrap();
            let h = 1e-5;
            for i in (0..x.data().len()).step_by(7) {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp.data_mut()[i] += h;
                xm.data_mut()[i] -= h;
                let fd = (model.scores(&xp).unwrap()[class] - model.scores(&xm).unwrap()[class]) / (2.0 * h);
                assert!(
                    (fd - g.data()[i]).abs() <= 1e-6 + 1e-4 * fd.abs(),
                    "i={i}: fd={fd} analytic={}",
                    g.data()[i]
                );
            }
        }
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let shape = InputShape::new(1, 4, 4);
        let model = TinyCnn::init(shape, 2, 5).unwrap();
        let x = random_image(shape, 9);
        let label = 1;
        let loss = |m: &TinyCnn| -libm::log(softmax(&m.forward(x.data()).scores)[label]);
        let acts = model.forward(x.data());
        let mut d = softmax(&acts.scores);
        d[label] -= 1.0;
        let mut grads = Params::zeros_like(&model.params);
        model.backward(x.data(), &acts, &d, Some(&mut grads));
        let analytic: Vec<Vec<f64>> = grads.slots_mut().into_iter().map(|s| s.clone()).collect();
        for (slot, expected) in analytic.iter().enumerate() {
            for i in (0..expected.len()).step_by(3) {
                let h = 1e-6;
                let mut mp = model.clone();
                let mut mm = model.clone();
                mp.params.slots_mut()[slot][i] += h;
                mm.params.slots_mut()[slot][i] -= h;
                let fd = (loss(&mp) - loss(&mm)) / (2.0 * h);
                assert!((fd - expected[i]).abs() <= 1e-6 + 1e-4 * fd.abs(), "slot {slot} i {i}");
            }
        }
    }

    #[test]
    fn tensor_round_trip_and_validation() {
        let shape = InputShape::new(1, 8, 8);
        let model = TinyCnn::init(shape, 2, 1).unwrap();
        let tensors = model.to_tensors();
        assert_eq!(TinyCnn::from_tensors(shape, 2, &tensors).unwrap(), model);
        assert!(TinyCnn::from_tensors(shape, 2, &tensors[1..]).is_err());
        assert!(TinyCnn::from_tensors(InputShape::new(1, 12, 12), 2, &tensors).is_err());
        assert!(TinyCnn::init(InputShape::new(1, 6, 6), 2, 0).is_err());
    }

    #[test]
    fn deterministic_scores() {
        let shape = InputShape::new(1, 8, 8);
        let model = TinyCnn::init(shape, 2, 1).unwrap();
        let x = random_image(shape, 2);
        assert_eq!(model.scores(&x).unwrap(), model.scores(&x).unwrap());
        assert_eq!(
            input_gradient(&model, &x, 0).unwrap(),
            input_gradient(&model, &x, 0).unwrap()
        );
    }
}
