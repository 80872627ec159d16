//! Input modifications γ_i applied before each gradient pass.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

pub const DEFAULT_MODIFICATIONS: usize = 20;
pub const DEFAULT_SIGMA_FRACTION: f64 = 0.15;
pub const DEFAULT_MAX_BLUR: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModifierKind {
    GaussianNoise,
    LinearPath,
    BlurPath,
}

/// Reference image for path methods and metric recovery.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// All zeros in model input space.
    #[default]
    Black,
    Constant(f64),
}

impl Baseline {
    pub fn image_like(&self, x: &Image) -> Image {
        let (c, h, w) = x.shape();
        match *self {
            Baseline::Black => Image::zeros(c, h, w),
            Baseline::Constant(v) => Image::filled(c, h, w, v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModifierSpec {
    pub kind: ModifierKind,
    pub n: usize,
    /// Noise standard deviation as a fraction of the input's value range.
    pub sigma_fraction: f64,
    pub baseline: Baseline,
    /// Blur standard deviation (pixels) at the far end of the blur path.
    pub max_blur: f64,
    pub seed: u64,
}

impl Default for ModifierSpec {
    fn default() -> Self {
        Self::gaussian(DEFAULT_MODIFICATIONS, DEFAULT_SIGMA_FRACTION, 0)
    }
}

impl ModifierSpec {
    pub fn gaussian(n: usize, sigma_fraction: f64, seed: u64) -> Self {
        Self {
            kind: ModifierKind::GaussianNoise,
            n,
            sigma_fraction,
            baseline: Baseline::Black,
            max_blur: DEFAULT_MAX_BLUR,
            seed,
        }
    }

    pub fn linear_path(n: usize, baseline: Baseline) -> Self {
        Self {
            kind: ModifierKind::LinearPath,
            baseline,
            ..Self::gaussian(n, DEFAULT_SIGMA_FRACTION, 0)
        }
    }

    pub fn blur_path(n: usize, max_blur: f64) -> Self {
        Self {
            kind: ModifierKind::BlurPath,
            max_blur,
            ..Self::gaussian(n, DEFAULT_SIGMA_FRACTION, 0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("modification count n must be >= 1".into()));
        }
        if !(self.sigma_fraction >= 0.0) || !self.sigma_fraction.is_finite() {
            return Err(Error::InvalidParameter("sigma_fraction must be >= 0".into()));
        }
        if !(self.max_blur >= 0.0) || !self.max_blur.is_finite() {
            return Err(Error::InvalidParameter("max_blur must be >= 0".into()));
        }
        Ok(())
    }

    fn check_index(&self, i: usize) -> Result<()> {
        self.validate()?;
        if i == 0 || i > self.n {
            return Err(Error::InvalidParameter(format!(
                "modification index {i} outside 1..={}",
                self.n
            )));
        }
        Ok(())
    }
}

/// γ_i(x) for the spec's kind.
pub fn modify(x: &Image, spec: &ModifierSpec, i: usize) -> Result<Image> {
    match spec.kind {
        ModifierKind::GaussianNoise => gaussian_modifier(x, spec, i),
        ModifierKind::LinearPath => linear_path_modifier(x, spec, i),
        ModifierKind::BlurPath => blur_path_modifier(x, spec, i),
    }
}

/// `x + ε_i`, `ε_i ~ N(0, (sigma_fraction · range(x))²)`, seeded by `(seed, i)`.
pub fn gaussian_modifier(x: &Image, spec: &ModifierSpec, i: usize) -> Result<Image> {
    spec.check_index(i)?;
    let sigma = spec.sigma_fraction * x.value_range();
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(i as u64);
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(format!("{e}")))?;
    Ok(x.map(|v| v + noise.sample(&mut rng)))
}

/// `baseline + (i/n)·(x − baseline)`.
pub fn linear_path_modifier(x: &Image, spec: &ModifierSpec, i: usize) -> Result<Image> {
    spec.check_index(i)?;
    if i == spec.n {
        return Ok(x.clone());
    }
    let base = spec.baseline.image_like(x);
    let alpha = i as f64 / spec.n as f64;
    base.zip_map(x, |b, v| b + alpha * (v - b))
}

/// Gaussian blur of `x` with standard deviation `max_blur · (n − i)/n`.
pub fn blur_path_modifier(x: &Image, spec: &ModifierSpec, i: usize) -> Result<Image> {
    spec.check_index(i)?;
    Ok(blur_path_point(x, spec, i))
}

/// Blur path point for `i ∈ 0..=n`; `i = 0` is the strongest blur.
pub(crate) fn blur_path_point(x: &Image, spec: &ModifierSpec, i: usize) -> Image {
    let sigma = spec.max_blur * (spec.n - i) as f64 / spec.n as f64;
    gaussian_blur(x, sigma)
}

/// Separable Gaussian blur, kernel truncated at 3σ, half-sample symmetric
/// reflection at the borders. The blur matrix is symmetric with unit row
/// sums, so it preserves both constants and total mass.
pub fn gaussian_blur(x: &Image, sigma: f64) -> Image {
    if !(sigma > 0.0) {
        return x.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let (c, h, w) = x.shape();
    let radius = (kernel.len() / 2) as isize;
    let mut out = x.clone();
    let mut tmp = vec![0.0; h * w];
    for ch in 0..c {
        let src = x.plane(ch);
        for y in 0..h {
            for xx in 0..w {
                tmp[y * w + xx] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, wt)| wt * src[y * w + reflect(xx as isize + k as isize - radius, w)])
                    .sum();
            }
        }
        let dst = &mut out.data_mut()[ch * h * w..(ch + 1) * h * w];
        for y in 0..h {
            for xx in 0..w {
                dst[y * w + xx] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, wt)| wt * tmp[reflect(y as isize + k as isize - radius, h) * w + xx])
                    .sum();
            }
        }
    }
    out
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = libm::ceil(3.0 * sigma) as isize;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|d| libm::exp(-((d * d) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Half-sample symmetric reflection (`… 1 0 | 0 1 … n−1 | n−1 n−2 …`), periodic in 2n.
fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period) as usize;
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}
