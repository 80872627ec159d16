//! PNG heatmaps with optional area outlines.
//!
//! Colormaps, for a value `v` in `[0, 1]`:
//! - `grayscale`: `(255v, 255v, 255v)`.
//! - `heat`: black → red → yellow → white, `r = 3v`, `g = 3v − 1`, `b = 3v − 2`,
//!   each clamped to `[0, 1]` and scaled by 255.
//!
//! Outlines are drawn on the mask boundary (set pixels with an unset or
//! out-of-frame 4-neighbour): Focus Area in cyan, Ground-truth Area in green.

use std::path::Path;

use absgrad_core::saliency::normalize_map;
use absgrad_core::{BinaryMask, SaliencyMap};
use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{io_error, Error, Result};

pub const FOCUS_COLOR: [u8; 3] = [0, 255, 255];
pub const GROUND_TRUTH_COLOR: [u8; 3] = [0, 255, 0];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Colormap {
    #[default]
    Grayscale,
    Heat,
}

impl Colormap {
    pub fn rgb(self, v: f64) -> [u8; 3] {
        let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        let byte = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
        match self {
            Colormap::Grayscale => [byte(v); 3],
            Colormap::Heat => [byte(3.0 * v), byte(3.0 * v - 1.0), byte(3.0 * v - 2.0)],
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Overlay<'a> {
    pub focus: Option<&'a BinaryMask>,
    pub ground_truth: Option<&'a BinaryMask>,
}

/// Nearest-neighbour upscale factor that brings the longer side to at least 128 px.
pub fn default_scale(height: usize, width: usize) -> usize {
    let side = height.max(width).max(1);
    128usize.div_ceil(side).max(1)
}

fn boundary(mask: &BinaryMask, y: usize, x: usize) -> bool {
    if !mask.get(y, x) {
        return false;
    }
    let (h, w) = (mask.height(), mask.width());
    y == 0 || x == 0 || y + 1 == h || x + 1 == w || !mask.get(y - 1, x) || !mask.get(y + 1, x) || !mask.get(y, x - 1) || !mask.get(y, x + 1)
}

pub fn render_heatmap(map: &SaliencyMap, colormap: Colormap, overlay: &Overlay<'_>, scale: usize) -> RgbImage {
    let values = if map.is_normalized() {
        map.values().to_vec()
    } else {
        normalize_map(map)
            .map(|m| m.values().to_vec())
            .unwrap_or_else(|_| vec![0.0; map.len()])
    };
    let (h, w) = (map.height(), map.width());
    let scale = scale.max(1);
    let mut img = RgbImage::new((w * scale) as u32, (h * scale) as u32);
    for y in 0..h {
        for x in 0..w {
            let mut color = colormap.rgb(values[y * w + x]);
            if overlay.ground_truth.is_some_and(|m| boundary(m, y, x)) {
                color = GROUND_TRUTH_COLOR;
            }
            if overlay.focus.is_some_and(|m| boundary(m, y, x)) {
                color = FOCUS_COLOR;
            }
            for dy in 0..scale {
                for dx in 0..scale {
                    img.put_pixel((x * scale + dx) as u32, (y * scale + dy) as u32, Rgb(color));
                }
            }
        }
    }
    img
}

pub fn write_png(path: &Path, img: &RgbImage) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_error(dir))?;
    }
    img.save_with_format(path, image::ImageFormat::Png).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}
