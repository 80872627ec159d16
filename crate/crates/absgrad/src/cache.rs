//! Per-image saliency cache: one `<key>.sal` file per computed map.

use std::path::{Path, PathBuf};

use absgrad_core::attribution::MethodConfig;
use absgrad_core::{Image, SaliencyMap};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::format::{read_saliency, write_saliency};

const KEY_VERSION: u32 = 1;

#[derive(Serialize)]
struct KeyMaterial<'a> {
    version: u32,
    image_id: &'a str,
    image_digest: &'a str,
    method: &'a MethodConfig,
    adapter: &'a str,
    seed: u64,
}

/// SHA-256 over the pixel data and shape.
pub fn image_digest(image: &Image) -> String {
    let mut h = Sha256::new();
    let (c, y, x) = image.shape();
    for d in [c, y, x] {
        h.update((d as u64).to_le_bytes());
    }
    for v in image.data() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Hex SHA-256 of the canonical JSON of everything that determines a map.
/// The method's report name is not part of it.
pub fn cache_key(image_id: &str, image_digest: &str, method: &MethodConfig, adapter: &str, seed: u64) -> String {
    let mut method = method.clone();
    method.name = None;
    let material = KeyMaterial {
        version: KEY_VERSION,
        image_id,
        image_digest,
        method: &method,
        adapter,
        seed,
    };
    let bytes = serde_json::to_vec(&material).expect("key material serializes");
    hex::encode(Sha256::digest(bytes))
}

/// Modifier seed for one image: mixes the run seed, the image id and the
/// method's own seed, so images draw independent noise.
pub fn effective_seed(run_seed: u64, image_id: &str, method_seed: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(b"absgrad-seed");
    h.update(run_seed.to_le_bytes());
    h.update((image_id.len() as u64).to_le_bytes());
    h.update(image_id.as_bytes());
    h.update(method_seed.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone)]
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.sal"))
    }

    pub fn get(&self, key: &str) -> Result<Option<SaliencyMap>> {
        let path = self.path(key);
        if !path.exists() {
            return Ok(None);
        }
        read_saliency(&path).map(Some)
    }

    pub fn put(&self, key: &str, map: &SaliencyMap) -> Result<()> {
        write_saliency(&self.path(key), map)
    }
}
