//! Blob fixture: a small two-class PNG dataset, a run config over it and the
//! training routine behind the bundled tiny-CNN weights.

use std::path::{Path, PathBuf};

use absgrad_core::attribution::{MethodConfig, MethodId, Variant};
use absgrad_core::model::{blob_dataset, InputShape, TinyCnn, TrainConfig, BLOB_SIZE};
use absgrad_core::modify::Baseline;
use absgrad_core::Image;

use crate::config::{AdapterConfig, RunConfig};
use crate::dataset::{save_image_png, save_mask_png, DatasetManifest, ManifestEntry, Preprocess};
use crate::error::Result;

pub const TRAIN_COUNT: usize = 400;
pub const TRAIN_SEED: u64 = 0;
/// Held-out fixture images use a different generator seed than training.
pub const FIXTURE_SEED: u64 = 1;
pub const FIXTURE_COUNT: usize = 40;
/// Metric baseline for the fixture: a flat grey below the background level,
/// closer to the training images than black.
pub const FIXTURE_BASELINE: f64 = 0.2;

pub fn blob_shape() -> InputShape {
    InputShape {
        channels: 1,
        height: BLOB_SIZE,
        width: BLOB_SIZE,
    }
}

/// Trains the blob classifier and rounds it to `f32` precision.
pub fn train_blob_model(config: &TrainConfig) -> Result<TinyCnn> {
    let samples: Vec<(Image, usize)> = blob_dataset(TRAIN_COUNT, TRAIN_SEED)
        .into_iter()
        .map(|s| (s.image, s.class))
        .collect();
    let mut model = TinyCnn::train(&samples, blob_shape(), 2, config)?;
    model.round_to_f32();
    Ok(model)
}

/// Accuracy on the training set and on the held-out fixture images.
pub fn blob_accuracy(model: &TinyCnn) -> (f64, f64) {
    let pairs = |count, seed| -> Vec<(Image, usize)> { blob_dataset(count, seed).into_iter().map(|s| (s.image, s.class)).collect() };
    (
        model.accuracy(&pairs(TRAIN_COUNT, TRAIN_SEED)),
        model.accuracy(&pairs(FIXTURE_COUNT, FIXTURE_SEED)),
    )
}

/// Writes `images/`, `masks/` and `manifest.json` under `dir`; returns the
/// manifest path.
pub fn write_blob_dataset(dir: &Path, count: usize, seed: u64) -> Result<PathBuf> {
    let mut entries = Vec::with_capacity(count);
    for (i, sample) in blob_dataset(count, seed).into_iter().enumerate() {
        let id = format!("blob{i:03}");
        let image = PathBuf::from("images").join(format!("{id}.png"));
        let mask = PathBuf::from("masks").join(format!("{id}.png"));
        save_image_png(&dir.join(&image), &sample.image)?;
        save_mask_png(&dir.join(&mask), &sample.mask)?;
        entries.push(ManifestEntry {
            id: Some(id),
            image,
            mask: Some(mask),
            class: sample.class,
        });
    }
    let manifest = DatasetManifest {
        preprocess: Preprocess::default(),
        entries,
    };
    let path = dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}

/// The method set used by the fixture config: every implemented family, the
/// GAG p sweep and the SG/IG/BlurIG variant rows.
pub fn fixture_methods() -> Vec<MethodConfig> {
    let mut methods = vec![
        MethodConfig::new(MethodId::Vg),
        MethodConfig::new(MethodId::VarGrad),
        MethodConfig::new(MethodId::Ag),
        MethodConfig::new(MethodId::Gag).with_p(0.0).with_name("gag-0"),
        MethodConfig::new(MethodId::Gag).with_p(45.0).with_name("gag-45"),
        MethodConfig::new(MethodId::Gag).with_name("gag-85"),
    ];
    for id in [MethodId::Sg, MethodId::Ig, MethodId::BlurIg] {
        for v in [
            Variant::Base,
            Variant::Positive,
            Variant::Negative,
            Variant::Absolute,
            Variant::Guide,
            Variant::GuideAbsolute,
        ] {
            methods.push(MethodConfig::new(id).with_variant(v));
        }
    }
    methods
}

/// Dataset plus `config.toml` in `dir`; returns the config path.
pub fn write_fixture(dir: &Path, count: usize, seed: u64) -> Result<PathBuf> {
    write_blob_dataset(dir, count, seed)?;
    let mut config = RunConfig::new(PathBuf::from("manifest.json"), AdapterConfig::tiny_cnn(), fixture_methods());
    config.metrics.baseline = Baseline::Constant(FIXTURE_BASELINE);
    let path = dir.join("config.toml");
    config.save(&path)?;
    Ok(path)
}
