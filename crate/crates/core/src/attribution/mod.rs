//! Gradient-based attribution.
//!
//! Every method follows the same three steps: collect gradients of the class
//! score over `n` modified inputs, interpret each gradient per channel
//! (signed / positive / negative / absolute), then reduce channels and
//! aggregate over the stack. Guided AbsoluteGrad multiplies the mean absolute
//! gradient by a variance guide computed from the signed stack.

mod method;
mod reverse;

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{input_gradient, Classifier};
use crate::modify::{blur_path_point, modify, Baseline, ModifierKind, ModifierSpec};
use crate::saliency::{channel_reduce, normalize_map, percentile_value, ChannelMode, SaliencyMap};

pub use method::{MethodConfig, MethodId, Variant, DEFAULT_GUIDE_PERCENTILE};
pub use reverse::{reversed_variant, ReversalParams};

/// Signed per-channel gradients for modifications γ_1..γ_n.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientStack {
    maps: Vec<Image>,
}

impl GradientStack {
    pub fn new(maps: Vec<Image>) -> Result<Self> {
        let first = maps
            .first()
            .ok_or_else(|| Error::InvalidParameter("gradient stack needs n >= 1".into()))?;
        for m in &maps {
            first.check_same_shape(m)?;
        }
        Ok(Self { maps })
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn maps(&self) -> &[Image] {
        &self.maps
    }

    /// Channel-reduce every entry.
    pub fn reduce(&self, mode: ChannelMode) -> Vec<SaliencyMap> {
        self.maps.iter().map(|g| channel_reduce(g, mode)).collect()
    }

    /// Multiply every entry by a uniform factor.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            maps: self.maps.iter().map(|g| g.map(|v| v * factor)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpretation {
    Signed,
    Positive,
    /// Magnitude of the negative part, `max(−g, 0)`.
    Negative,
    Absolute,
}

impl Interpretation {
    pub fn apply(self, g: f64) -> f64 {
        match self {
            Interpretation::Signed => g,
            Interpretation::Positive => g.max(0.0),
            Interpretation::Negative => (-g).max(0.0),
            Interpretation::Absolute => libm::fabs(g),
        }
    }
}

pub fn interpret(stack: &GradientStack, mode: Interpretation) -> GradientStack {
    if mode == Interpretation::Signed {
        return stack.clone();
    }
    GradientStack {
        maps: stack.maps.iter().map(|g| g.map(|v| mode.apply(v))).collect(),
    }
}

fn check_stack(maps: &[SaliencyMap]) -> Result<&SaliencyMap> {
    let first = maps
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty gradient stack".into()))?;
    for m in maps {
        if (m.height(), m.width()) != (first.height(), first.width()) {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", first.height(), first.width()),
                actual: format!("{}x{}", m.height(), m.width()),
            });
        }
    }
    Ok(first)
}

fn aggregate_sum(maps: &[SaliencyMap]) -> Result<SaliencyMap> {
    let first = check_stack(maps)?;
    let mut acc = alloc::vec![0.0; first.len()];
    for m in maps {
        for (a, v) in acc.iter_mut().zip(m.values()) {
            *a += v;
        }
    }
    SaliencyMap::new(first.height(), first.width(), acc)
}

/// Element-wise mean over a channel-reduced stack.
pub fn aggregate_mean(maps: &[SaliencyMap]) -> Result<SaliencyMap> {
    let sum = aggregate_sum(maps)?;
    let n = maps.len() as f64;
    let (h, w) = (sum.height(), sum.width());
    SaliencyMap::new(h, w, sum.into_values().into_iter().map(|v| v / n).collect())
}

/// Element-wise sample variance (denominator n − 1).
pub fn aggregate_variance(maps: &[SaliencyMap]) -> Result<SaliencyMap> {
    if maps.len() < 2 {
        return Err(Error::VarianceNeedsTwo(maps.len()));
    }
    let mean = aggregate_mean(maps)?;
    let mut acc = alloc::vec![0.0; mean.len()];
    for m in maps {
        for ((a, v), mu) in acc.iter_mut().zip(m.values()).zip(mean.values()) {
            let d = v - mu;
            *a += d * d;
        }
    }
    let denom = (maps.len() - 1) as f64;
    SaliencyMap::new(mean.height(), mean.width(), acc.into_iter().map(|v| v / denom).collect())
}

/// Per-pixel gate: exactly 1 where the signed-gradient variance reaches its
/// `p`-th percentile, the raw variance elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Guide {
    height: usize,
    width: usize,
    values: Vec<f64>,
    threshold: f64,
}

impl Guide {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Variance percentile value at which entries switch to 1.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn ones(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1.0).count()
    }

    pub fn apply(&self, map: &SaliencyMap) -> Result<SaliencyMap> {
        if (map.height(), map.width()) != (self.height, self.width) {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", self.height, self.width),
                actual: format!("{}x{}", map.height(), map.width()),
            });
        }
        SaliencyMap::new(
            self.height,
            self.width,
            map.values().iter().zip(&self.values).map(|(m, g)| m * g).collect(),
        )
    }
}

/// Variance guide from a channel-reduced signed stack.
pub fn variance_guide(signed: &[SaliencyMap], p: f64) -> Result<Guide> {
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("guide percentile must lie in [0, 100], got {p}")));
    }
    let variance = aggregate_variance(signed)?;
    let threshold = percentile_value(variance.values(), p)?;
    Ok(Guide {
        height: variance.height(),
        width: variance.width(),
        values: variance
            .values()
            .iter()
            .map(|&v| if v >= threshold { 1.0 } else { v })
            .collect(),
        threshold,
    })
}

/// `∇f_c(γ_i(x))` for i = 1..n.
pub fn collect_gradients(model: &dyn Classifier, x: &Image, class: usize, modifier: &ModifierSpec) -> Result<GradientStack> {
    modifier.validate()?;
    let maps = (1..=modifier.n)
        .map(|i| input_gradient(model, &modify(x, modifier, i)?, class))
        .collect::<Result<Vec<_>>>()?;
    GradientStack::new(maps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Aggregation {
    Mean,
    Sum,
    Variance,
}

/// interpret → channel-reduce → aggregate → optional guide → normalize.
pub(crate) fn stack_saliency(
    contributions: &GradientStack,
    signed_gradients: &GradientStack,
    interpretation: Interpretation,
    aggregation: Aggregation,
    guide_percentile: Option<f64>,
    mode: ChannelMode,
) -> Result<SaliencyMap> {
    let reduced = interpret(contributions, interpretation).reduce(mode);
    let aggregated = match aggregation {
        Aggregation::Mean => aggregate_mean(&reduced)?,
        Aggregation::Sum => aggregate_sum(&reduced)?,
        Aggregation::Variance => aggregate_variance(&reduced)?,
    };
    // p = 0 puts every pixel at or above the threshold: the guide is all ones,
    // which also covers a single-gradient stack.
    let guided = match guide_percentile {
        Some(p) if p > 0.0 => variance_guide(&signed_gradients.reduce(mode), p)?.apply(&aggregated)?,
        _ => aggregated,
    };
    normalize_map(&guided)
}

/// AbsoluteGrad: normalized mean of absolute gradients.
pub fn absolute_grad(stack: &GradientStack, mode: ChannelMode) -> Result<SaliencyMap> {
    stack_saliency(stack, stack, Interpretation::Absolute, Aggregation::Mean, None, mode)
}

/// Guided AbsoluteGrad over an already collected signed stack.
pub fn guided_absolute_grad_from_stack(stack: &GradientStack, p: f64, mode: ChannelMode) -> Result<SaliencyMap> {
    stack_saliency(stack, stack, Interpretation::Absolute, Aggregation::Mean, Some(p), mode)
}

/// Guided AbsoluteGrad: `normalize(mean |∇f_c(γ_i(x))| × guide)`.
pub fn guided_absolute_grad(model: &dyn Classifier, x: &Image, class: usize, config: &MethodConfig) -> Result<SaliencyMap> {
    if config.method != MethodId::Gag {
        return Err(Error::Unsupported(format!(
            "guided_absolute_grad called with method {}",
            config.method.as_str()
        )));
    }
    config.validate()?;
    let stack = collect_gradients(model, x, class, &config.modifier)?;
    guided_absolute_grad_from_stack(&stack, config.p, config.channel_mode)
}

/// Per-step integrated-gradient contributions `(x − b) ⊙ ∇f_c(b + (i/n)(x − b))`
/// plus the raw gradients behind them.
fn linear_path_stacks(
    model: &dyn Classifier,
    x: &Image,
    class: usize,
    modifier: &ModifierSpec,
) -> Result<(GradientStack, GradientStack)> {
    let grads = collect_gradients(model, x, class, modifier)?;
    let delta = modifier.baseline.image_like(x).zip_map(x, |b, v| v - b)?;
    let contributions = grads
        .maps
        .iter()
        .map(|g| g.zip_map(&delta, |g, d| g * d))
        .collect::<Result<Vec<_>>>()?;
    Ok((GradientStack::new(contributions)?, grads))
}

/// Blur-path contributions `∇f_c(γ_i) ⊙ (γ_i − γ_{i−1})`, `γ_0` the strongest blur.
fn blur_path_stacks(
    model: &dyn Classifier,
    x: &Image,
    class: usize,
    modifier: &ModifierSpec,
) -> Result<(GradientStack, GradientStack)> {
    modifier.validate()?;
    let points: Vec<Image> = (0..=modifier.n).map(|i| blur_path_point(x, modifier, i)).collect();
    let mut grads = Vec::with_capacity(modifier.n);
    let mut contributions = Vec::with_capacity(modifier.n);
    for i in 1..=modifier.n {
        let g = input_gradient(model, &points[i], class)?;
        let step = points[i - 1].zip_map(&points[i], |prev, cur| cur - prev)?;
        contributions.push(g.zip_map(&step, |g, d| g * d)?);
        grads.push(g);
    }
    Ok((GradientStack::new(contributions)?, GradientStack::new(grads)?))
}

/// Integrated gradients with a right-endpoint Riemann sum over `n` steps.
/// Returns the raw (unnormalized) channel-reduced attribution.
pub fn integrated_gradients(
    model: &dyn Classifier,
    x: &Image,
    class: usize,
    baseline: Baseline,
    n: usize,
    mode: ChannelMode,
) -> Result<SaliencyMap> {
    let spec = ModifierSpec::linear_path(n, baseline);
    let (contributions, _) = linear_path_stacks(model, x, class, &spec)?;
    aggregate_mean(&contributions.reduce(mode))
}

/// Runs any configured method and returns a normalized map.
pub fn run_method(model: &dyn Classifier, x: &Image, class: usize, config: &MethodConfig) -> Result<SaliencyMap> {
    config.validate()?;
    let interpretation = config.interpretation();
    let guide = config.guide_percentile();
    let mode = config.channel_mode;
    let map = match config.method {
        MethodId::Vg => {
            let stack = GradientStack::new(alloc::vec![input_gradient(model, x, class)?])?;
            stack_saliency(&stack, &stack, interpretation, Aggregation::Mean, guide, mode)?
        }
        MethodId::Sg | MethodId::Ag | MethodId::Gag => {
            let stack = collect_gradients(model, x, class, &config.modifier)?;
            stack_saliency(&stack, &stack, interpretation, Aggregation::Mean, guide, mode)?
        }
        MethodId::VarGrad => {
            let stack = collect_gradients(model, x, class, &config.modifier)?;
            stack_saliency(&stack, &stack, interpretation, Aggregation::Variance, guide, mode)?
        }
        MethodId::Ig => {
            let (contrib, grads) = linear_path_stacks(model, x, class, &config.modifier)?;
            stack_saliency(&contrib, &grads, interpretation, Aggregation::Mean, guide, mode)?
        }
        MethodId::BlurIg => {
            let (contrib, grads) = blur_path_stacks(model, x, class, &config.modifier)?;
            stack_saliency(&contrib, &grads, interpretation, Aggregation::Sum, guide, mode)?
        }
        reserved => {
            return Err(Error::Unsupported(format!(
                "method {} is reserved and not implemented",
                reserved.as_str()
            )))
        }
    };
    match config.reversal {
        Some(params) => reversed_variant(&map, params),
        None => Ok(map),
    }
}

/// Which modifier family a method differentiates through.
pub(crate) fn modifier_kind_for(method: MethodId) -> Option<ModifierKind> {
    match method {
        MethodId::Sg | MethodId::Ag | MethodId::Gag | MethodId::VarGrad => Some(ModifierKind::GaussianNoise),
        MethodId::Ig => Some(ModifierKind::LinearPath),
        MethodId::BlurIg => Some(ModifierKind::BlurPath),
        _ => None,
    }
}
