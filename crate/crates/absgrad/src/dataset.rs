//! JSON dataset manifests and PNG ingestion.
//!
//! ```json
//! {
//!   "preprocess": { "resize": [16, 16], "value_range": [0.0, 1.0], "channels": 1 },
//!   "entries": [
//!     { "id": "blob000", "image": "images/blob000.png", "mask": "masks/blob000.png", "class": 0 }
//!   ]
//! }
//! ```
//!
//! Paths are relative to the manifest's directory. `id` defaults to the image
//! file stem. `resize` is `[height, width]`; omit it to keep native sizes.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use absgrad_core::model::InputShape;
use absgrad_core::{BinaryMask, Image};
use image::imageops::FilterType;
use image::{DynamicImage, GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{io_error, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Preprocess {
    pub resize: Option<[usize; 2]>,
    /// 8-bit 0 maps to the first value, 255 to the second.
    pub value_range: [f64; 2],
    /// 1 (luma) or 3 (RGB).
    pub channels: usize,
}

impl Default for Preprocess {
    fn default() -> Self {
        Self {
            resize: None,
            value_range: [0.0, 1.0],
            channels: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub image: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    pub class: usize,
}

impl ManifestEntry {
    pub fn entry_id(&self) -> String {
        self.id.clone().unwrap_or_else(|| {
            self.image
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    #[serde(default)]
    pub preprocess: Preprocess,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        crate::format::write_atomic(path, text.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Image,
    pub mask: Option<BinaryMask>,
    pub class: usize,
}

/// A validated manifest; images load lazily, in listed order.
#[derive(Debug, Clone)]
pub struct Dataset {
    base_dir: PathBuf,
    manifest: DatasetManifest,
    ids: Vec<String>,
}

pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    Dataset::open(manifest_path)
}

impl Dataset {
    pub fn open(manifest_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(manifest_path).map_err(io_error(manifest_path))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        let base_dir = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(base_dir, manifest)
    }

    pub fn new(base_dir: PathBuf, manifest: DatasetManifest) -> Result<Self> {
        let p = &manifest.preprocess;
        if p.channels != 1 && p.channels != 3 {
            return Err(Error::Config(format!("preprocess.channels must be 1 or 3, got {}", p.channels)));
        }
        if p.resize.is_some_and(|[h, w]| h == 0 || w == 0) {
            return Err(Error::Config("preprocess.resize must be positive".into()));
        }
        if !(p.value_range[0].is_finite() && p.value_range[1].is_finite()) {
            return Err(Error::Config("preprocess.value_range must be finite".into()));
        }
        let ids: Vec<String> = manifest.entries.iter().map(ManifestEntry::entry_id).collect();
        let mut seen = BTreeSet::new();
        for id in &ids {
            if id.is_empty() || !seen.insert(id.as_str()) {
                return Err(Error::Config(format!("dataset ids must be unique and non-empty (`{id}`)")));
            }
        }
        Ok(Self { base_dir, manifest, ids })
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// The model input shape: the resize target, or the first readable image's size.
    pub fn input_shape(&self) -> Result<Option<InputShape>> {
        let c = self.manifest.preprocess.channels;
        if let Some([h, w]) = self.manifest.preprocess.resize {
            return Ok(Some(InputShape::new(c, h, w)));
        }
        // The first entry that loads; a broken file stays a per-entry error.
        let mut first_err = None;
        for s in self.iter() {
            match s {
                Ok(s) => return Ok(Some(InputShape::new(c, s.image.height(), s.image.width()))),
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        first_err.map_or(Ok(None), Err)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn load(&self, index: usize) -> Result<Sample> {
        let entry = &self.manifest.entries[index];
        let id = self.ids[index].clone();
        let wrap = |e: Error| Error::Entry {
            entry: id.clone(),
            message: e.to_string(),
        };
        let image = load_image(&self.resolve(&entry.image), &self.manifest.preprocess).map_err(wrap)?;
        let mask = match &entry.mask {
            Some(p) => Some(load_mask(&self.resolve(p), image.height(), image.width(), self.manifest.preprocess.resize.is_some()).map_err(wrap)?),
            None => None,
        };
        Ok(Sample {
            id,
            image,
            mask,
            class: entry.class,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<Sample>> + '_ {
        (0..self.len()).map(move |i| self.load(i))
    }
}

fn open_png(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|source| match source {
        image::ImageError::IoError(e) => Error::Io {
            path: path.to_path_buf(),
            source: e,
        },
        source => Error::Image {
            path: path.to_path_buf(),
            source,
        },
    })
}

pub fn load_image(path: &Path, pre: &Preprocess) -> Result<Image> {
    let img = open_png(path)?;
    let [lo, hi] = pre.value_range;
    let scale = |v: u8| lo + (hi - lo) * v as f64 / 255.0;
    let (planes, h, w): (Vec<Vec<u8>>, usize, usize) = if pre.channels == 1 {
        let mut g = img.to_luma8();
        if let Some([rh, rw]) = pre.resize {
            if g.dimensions() != (rw as u32, rh as u32) {
                g = image::imageops::resize(&g, rw as u32, rh as u32, FilterType::Triangle);
            }
        }
        let (w, h) = g.dimensions();
        (vec![g.into_raw()], h as usize, w as usize)
    } else {
        let mut rgb = img.to_rgb8();
        if let Some([rh, rw]) = pre.resize {
            if rgb.dimensions() != (rw as u32, rh as u32) {
                rgb = image::imageops::resize(&rgb, rw as u32, rh as u32, FilterType::Triangle);
            }
        }
        let (w, h) = rgb.dimensions();
        let raw = rgb.into_raw();
        let planes = (0..3).map(|c| raw.iter().skip(c).step_by(3).copied().collect()).collect();
        (planes, h as usize, w as usize)
    };
    let data = planes.into_iter().flatten().map(scale).collect();
    Ok(Image::new(pre.channels, h, w, data)?)
}

/// Loads a mask, binarized at 0.5 of full scale. Without a resize in the
/// preprocessing its size must already match the image.
pub fn load_mask(path: &Path, height: usize, width: usize, resize: bool) -> Result<BinaryMask> {
    let mut g = open_png(path)?.to_luma8();
    if g.dimensions() != (width as u32, height as u32) {
        if !resize {
            return Err(Error::Format(format!(
                "mask is {}x{}, image is {}x{}",
                g.height(),
                g.width(),
                height,
                width
            )));
        }
        g = image::imageops::resize(&g, width as u32, height as u32, FilterType::Nearest);
    }
    Ok(BinaryMask::new(height, width, g.pixels().map(|p| p.0[0] as f64 / 255.0 >= 0.5).collect())?)
}

/// Writes `image` (values in `[0, 1]`) as an 8-bit grayscale or RGB PNG.
pub fn save_image_png(path: &Path, image: &Image) -> Result<()> {
    let (c, h, w) = image.shape();
    let byte = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let n = h * w;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_error(dir))?;
    }
    let result = match c {
        1 => GrayImage::from_raw(w as u32, h as u32, image.data().iter().map(|&v| byte(v)).collect())
            .expect("buffer size matches")
            .save_with_format(path, image::ImageFormat::Png),
        3 => {
            let d = image.data();
            let raw = (0..n).flat_map(|i| (0..3).map(move |ch| byte(d[ch * n + i]))).collect();
            RgbImage::from_raw(w as u32, h as u32, raw)
                .expect("buffer size matches")
                .save_with_format(path, image::ImageFormat::Png)
        }
        _ => return Err(Error::Format(format!("cannot write a {c}-channel PNG"))),
    };
    result.map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_mask_png(path: &Path, mask: &BinaryMask) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_error(dir))?;
    }
    GrayImage::from_raw(
        mask.width() as u32,
        mask.height() as u32,
        mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect(),
    )
    .expect("buffer size matches")
    .save_with_format(path, image::ImageFormat::Png)
    .map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}
