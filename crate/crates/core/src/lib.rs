//! Gradient-magnitude saliency attribution and recover-and-predict evaluation.
//!
//! This crate is `no_std` + `alloc`. It holds every numerical piece of the
//! toolkit:
//!
//! - [`saliency`] – saliency maps, masks, nearest-rank percentiles, partition
//!   schemes and Focus/Noise area separation.
//! - [`model`] – the [`Classifier`](model::Classifier) abstraction plus
//!   analytic toy models, the ground-truth coverage oracle and a tiny CNN.
//! - [`modify`] – input modifications (Gaussian noise, linear path, blur path).
//! - [`attribution`] – gradient collection, interpretation, aggregation,
//!   Guided AbsoluteGrad, integrated gradients, method variants and the
//!   reversed-variant transform.
//! - [`metrics`] – RCAP, deletion/insertion AUC, MAE, log-cosh Dice and the
//!   Focus-Area saliency ratio.
//! - [`synth`] – the four-Gaussian synthetic suite and proposition checks.
//!
//! File formats, dataset loading, caching and the CLI live in the `absgrad`
//! companion crate.

#![no_std]
// `!(x > 0.0)` guards are meant to catch NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod attribution;
pub mod error;
pub mod image;
pub mod metrics;
pub mod model;
pub mod modify;
pub mod saliency;
pub mod synth;

pub use error::{Error, Result};
pub use image::Image;
pub use saliency::{AreaMasks, BinaryMask, ChannelMode, PartitionScheme, SaliencyMap};
