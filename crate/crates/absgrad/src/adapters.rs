//! Classifier registry keyed by the run config's `adapter.id`.
//!
//! - `tiny-cnn`: the bundled two-class blob CNN, or weights from `adapter.weights`.
//! - `constant`: fixed probabilities `adapter.probs`; no gradients worth having,
//!   useful for metric plumbing.

use std::path::Path;

use absgrad_core::model::{Classifier, ConstantModel, InputShape, TinyCnn};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{io_error, Error, Result};
use crate::format::decode_weights;

pub const ADAPTER_IDS: [&str; 2] = ["tiny-cnn", "constant"];

/// Trained weights for the blob fixture, in the weights file format.
pub static FIXTURE_WEIGHTS: &[u8] = include_bytes!("../fixtures/tiny_cnn.weights");

pub fn fixture_model() -> Result<TinyCnn> {
    decode_weights(FIXTURE_WEIGHTS)
}

fn weights_bytes(config: &RunConfig) -> Result<Vec<u8>> {
    match config.weights_path() {
        Some(p) => std::fs::read(&p).map_err(io_error(&p)),
        None => Ok(FIXTURE_WEIGHTS.to_vec()),
    }
}

/// Builds the configured classifier. `shape` is the dataset input shape,
/// needed by adapters that do not carry their own.
pub fn build_adapter(config: &RunConfig, shape: Option<InputShape>) -> Result<Box<dyn Classifier>> {
    match config.adapter.id.as_str() {
        "tiny-cnn" => Ok(Box::new(decode_weights(&weights_bytes(config)?)?)),
        "constant" => {
            let probs = config
                .adapter
                .probs
                .clone()
                .ok_or_else(|| Error::Config("adapter `constant` needs `probs`".into()))?;
            let shape = shape.ok_or_else(|| Error::Config("adapter `constant` needs a non-empty dataset".into()))?;
            Ok(Box::new(ConstantModel::new(shape, probs)?))
        }
        other => Err(Error::Config(format!("unknown adapter `{other}`"))),
    }
}

/// Identity of the adapter for cache keys: id plus a digest of what
/// determines its outputs.
pub fn adapter_fingerprint(config: &RunConfig) -> Result<String> {
    let mut h = Sha256::new();
    h.update(config.adapter.id.as_bytes());
    match config.adapter.id.as_str() {
        "tiny-cnn" => h.update(weights_bytes(config)?),
        _ => h.update(serde_json::to_vec(&config.adapter.probs)?),
    }
    Ok(format!("{}:{}", config.adapter.id, hex::encode(h.finalize())))
}

pub fn load_weights_file(path: &Path) -> Result<TinyCnn> {
    crate::format::read_weights(path)
}
