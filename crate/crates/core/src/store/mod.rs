//! On-disk formats: the binary model container and JSONL datasets.
//!
//! # Model container
//!
//! All integers and floats are little-endian.
//!
//! | offset | size | field |
//! |-------:|-----:|-------|
//! | 0  | 8 | magic `IOTFPMDL` |
//! | 8  | 2 | format version (`u16`, currently 1) |
//! | 10 | 1 | kind: 1 tree, 2 forest, 3 neural net, 4 per-class ensemble |
//! | 11 | 1 | reserved, 0 |
//! | 12 | 4 | provenance length `P` (`u32`) |
//! | 16 | 8 | payload length `L` (`u64`) |
//! | 24 | P | provenance |
//! | 24 + P | L | payload |
//!
//! Provenance: `u32` window start day, `u32` window length, `u64` seed,
//! `u32` epochs, `u8` model type, `u8` group, `u32` mask length followed by
//! one byte per freeze flag.
//!
//! Tree payload: `u32` features, `u32` classes, `u32` node count, then per
//! node a tag byte; splits (tag 1) carry `u32` feature, `f64` threshold,
//! `u32` left and `u32` right, leaves (tag 0) carry one `u32` count per class.
//! Forest payload: `u32` member count, then per member a `u64` seed and a
//! tree payload. Ensemble payload: `u32` member count, then per member a
//! kind byte, a `u64` length and that member's payload.
//!
//! Neural payload: `u8` architecture, `u8` head (0 multiclass, 1 binary),
//! `u32` class count, `u32` input width, `u64` seed, `u32` layer count, then
//! per layer its spec, a frozen byte and its tensors (`u8` rank, `u32` per
//! dimension, `f64` values in row-major order); finally a scaler flag byte
//! and, when set, the per-feature means and standard deviations as `f64`.
//!
//! The reported model size is `L`, the payload alone.

mod container;
mod dataset;

pub use container::{decode_model, encode_model, load_model, model_size, save_model, ModelKind, Provenance};
pub use dataset::{parse_rows, read_dataset, read_rows, write_dataset, write_rows};

use thiserror::Error;

use crate::harness::DatasetError;
use crate::jsonl::JsonlError;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("not a model container (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),
    #[error("container truncated: needed {needed} bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("corrupt container: {0}")]
    Corrupt(String),
    #[error("row {row}: non-finite value")]
    NonFinite { row: usize },
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
