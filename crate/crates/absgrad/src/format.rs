//! On-disk array formats.
//!
//! Both formats are a single-line compact JSON header terminated by `\n`,
//! followed by a raw little-endian `f32` payload in row-major order.
//!
//! Saliency maps: `{"height":H,"width":W,"dtype":"f32le","normalized":true}`
//! then `H·W` floats.
//!
//! Weights: `{"dtype":"f32le","input_shape":[C,H,W],"num_classes":K,"tensors":[{"name":..,"shape":[..]},..]}`
//! then every tensor's floats back to back, in header order.

use std::fs;
use std::io::Write;
use std::path::Path;

use absgrad_core::model::{Classifier, InputShape, NamedTensor, TinyCnn};
use absgrad_core::SaliencyMap;
use serde::{Deserialize, Serialize};

use crate::error::{io_error, Error, Result};

pub const DTYPE: &str = "f32le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaliencyHeader {
    pub height: usize,
    pub width: usize,
    pub dtype: String,
    pub normalized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsHeader {
    pub dtype: String,
    pub input_shape: [usize; 3],
    pub num_classes: usize,
    pub tensors: Vec<TensorEntry>,
}

fn split_header(bytes: &[u8]) -> Result<(&[u8], &[u8])> {
    let end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("missing header terminator".into()))?;
    Ok((&bytes[..end], &bytes[end + 1..]))
}

fn check_dtype(dtype: &str) -> Result<()> {
    if dtype != DTYPE {
        return Err(Error::Format(format!("unsupported dtype `{dtype}`, expected `{DTYPE}`")));
    }
    Ok(())
}

fn read_f32s(payload: &[u8], expected: usize) -> Result<Vec<f64>> {
    if payload.len() != expected * 4 {
        return Err(Error::Format(format!(
            "payload has {} bytes, expected {}",
            payload.len(),
            expected * 4
        )));
    }
    Ok(payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn push_f32s(out: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn with_header<H: Serialize>(header: &H, payload_len: usize) -> Vec<u8> {
    let mut out = serde_json::to_vec(header).expect("header serializes");
    out.push(b'\n');
    out.reserve(payload_len);
    out
}

pub fn encode_saliency(map: &SaliencyMap) -> Vec<u8> {
    let header = SaliencyHeader {
        height: map.height(),
        width: map.width(),
        dtype: DTYPE.into(),
        normalized: map.is_normalized(),
    };
    let mut out = with_header(&header, map.len() * 4);
    push_f32s(&mut out, map.values());
    out
}

pub fn decode_saliency(bytes: &[u8]) -> Result<SaliencyMap> {
    let (head, payload) = split_header(bytes)?;
    let header: SaliencyHeader = serde_json::from_slice(head)?;
    check_dtype(&header.dtype)?;
    let values = read_f32s(payload, header.height * header.width)?;
    let map = if header.normalized {
        SaliencyMap::from_normalized(header.height, header.width, values)?
    } else {
        SaliencyMap::new(header.height, header.width, values)?
    };
    Ok(map)
}

/// The map as it reads back from disk: every value rounded to `f32`.
pub fn round_trip(map: &SaliencyMap) -> SaliencyMap {
    decode_saliency(&encode_saliency(map)).expect("encoded map decodes")
}

/// Writes through a sibling temp file and a rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_error(dir))?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(io_error(&tmp))?;
    f.write_all(bytes).map_err(io_error(&tmp))?;
    f.sync_all().map_err(io_error(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(io_error(path))
}

pub fn write_saliency(path: &Path, map: &SaliencyMap) -> Result<()> {
    write_atomic(path, &encode_saliency(map))
}

pub fn read_saliency(path: &Path) -> Result<SaliencyMap> {
    let bytes = fs::read(path).map_err(io_error(path))?;
    decode_saliency(&bytes)
}

pub fn encode_weights(model: &TinyCnn) -> Vec<u8> {
    let shape = model.input_shape();
    let tensors = model.to_tensors();
    let header = WeightsHeader {
        dtype: DTYPE.into(),
        input_shape: [shape.channels, shape.height, shape.width],
        num_classes: model.num_classes(),
        tensors: tensors
            .iter()
            .map(|t| TensorEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
    };
    let total: usize = tensors.iter().map(|t| t.data.len()).sum();
    let mut out = with_header(&header, total * 4);
    for t in &tensors {
        push_f32s(&mut out, &t.data);
    }
    out
}

pub fn decode_weights(bytes: &[u8]) -> Result<TinyCnn> {
    let (head, payload) = split_header(bytes)?;
    let header: WeightsHeader = serde_json::from_slice(head)?;
    check_dtype(&header.dtype)?;
    let sizes: Vec<usize> = header.tensors.iter().map(|t| t.shape.iter().product()).collect();
    let values = read_f32s(payload, sizes.iter().sum())?;
    let mut offset = 0;
    let tensors: Vec<NamedTensor> = header
        .tensors
        .into_iter()
        .zip(sizes)
        .map(|(t, n)| {
            let data = values[offset..offset + n].to_vec();
            offset += n;
            NamedTensor {
                name: t.name,
                shape: t.shape,
                data,
            }
        })
        .collect();
    let [c, h, w] = header.input_shape;
    Ok(TinyCnn::from_tensors(InputShape::new(c, h, w), header.num_classes, &tensors)?)
}

pub fn write_weights(path: &Path, model: &TinyCnn) -> Result<()> {
    write_atomic(path, &encode_weights(model))
}

pub fn read_weights(path: &Path) -> Result<TinyCnn> {
    let bytes = fs::read(path).map_err(io_error(path))?;
    decode_weights(&bytes)
}
