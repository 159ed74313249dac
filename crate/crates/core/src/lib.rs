//! IoT device and category identification from network-flow features.
//!
//! The crate covers the whole pipeline: packet streams are cut into flow
//! records and reduced to 19 statistical features ([`flowcore`]); decision
//! trees, random forests ([`trees`]) and small neural networks ([`neural`])
//! classify them; [`harness`] runs the sliding-window drift experiments,
//! layer-frozen retraining and inference benchmarks; [`synthgen`] produces
//! labeled traffic with controllable drift; [`store`] holds the on-disk
//! formats.

pub mod flowcore;
pub mod harness;
pub mod jsonl;
pub mod model;
pub mod neural;
pub mod seed;
pub mod store;
pub mod synthgen;
pub mod trees;

pub use flowcore::{FeatureVector, N_FEATURES};
pub use model::{Group, ModelType, TrainedModel};

