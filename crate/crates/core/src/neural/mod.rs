//! Small feed-forward, recurrent and convolutional classifiers with layer
//! freezing.
//!
//! Three fixed architectures are provided:
//!
//! * FC: dense 32, 64, 128, 256, output
//! * LSTM: lstm 200, 100, 50, 25, dropout 0.2, output
//! * Conv1D: conv(64, 3), conv(64, 3), dropout 0.2, maxpool 2, flatten,
//!   dense 100, output
//!
//! Hidden layers use ReLU. The output is either a softmax over `n` classes
//! trained with categorical cross-entropy, or a single sigmoid unit trained
//! with binary cross-entropy. LSTM and Conv1D read the 19 features as a
//! length-19 sequence with one channel.

mod layers;
mod net;
mod scaler;
mod train;

pub use layers::{Activation, LayerSpec};
pub use net::{Gradients, Layer, NeuralNet};
pub use scaler::Scaler;
pub use train::{TrainConfig, TrainReport};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NeuralError {
    #[error("expected input width {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("{rows} rows but {labels} labels")]
    LabelCount { rows: usize, labels: usize },
    #[error("label {label} invalid for {head:?} head")]
    BadLabel { label: usize, head: Head },
    #[error("training set is empty")]
    EmptyData,
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("cannot freeze {k} layers: allowed range is 0..={max}")]
    FreezeOutOfRange { k: usize, max: usize },
    #[error("invalid model: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Fc,
    Lstm,
    Conv1d,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Fc, Arch::Lstm, Arch::Conv1d];

    /// Layer stack without the output layer.
    pub fn hidden_layers(self) -> Vec<LayerSpec> {
        use Activation::Relu;
        match self {
            Arch::Fc => [32, 64, 128, 256]
                .into_iter()
                .map(|units| LayerSpec::Dense { units, activation: Relu })
                .collect(),
            Arch::Lstm => {
                let mut v: Vec<LayerSpec> = [200, 100, 50, 25]
                    .into_iter()
                    .enumerate()
                    .map(|(i, units)| LayerSpec::Lstm {
                        units,
                        activation: Relu,
                        return_sequences: i < 3,
                    })
                    .collect();
                v.push(LayerSpec::Dropout { rate: 0.2 });
                v
            }
            Arch::Conv1d => vec![
                LayerSpec::Conv1d { filters: 64, kernel: 3, activation: Relu },
                LayerSpec::Conv1d { filters: 64, kernel: 3, activation: Relu },
                LayerSpec::Dropout { rate: 0.2 },
                LayerSpec::Maxpool1d { pool: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 100, activation: Relu },
            ],
        }
    }

    /// Whether the flat feature vector is read as a one-channel sequence.
    pub fn sequence_input(self) -> bool {
        !matches!(self, Arch::Fc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// Softmax over this many classes; labels are class indices.
    Multiclass(usize),
    /// One sigmoid unit; labels are 0 or 1.
    Binary,
}

impl Head {
    pub fn output_units(self) -> usize {
        match self {
            Head::Multiclass(n) => n,
            Head::Binary => 1,
        }
    }

    pub fn activation(self) -> Activation {
        match self {
            Head::Multiclass(_) => Activation::Softmax,
            Head::Binary => Activation::Sigmoid,
        }
    }

    fn check_label(self, label: usize) -> Result<(), NeuralError> {
        let ok = match self {
            Head::Multiclass(n) => label < n,
            Head::Binary => label <= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(NeuralError::BadLabel { label, head: self })
        }
    }
}

/// Builds a freshly initialized network for 19 input features.
pub fn init_model(arch: Arch, head: Head, seed: u64) -> NeuralNet {
    NeuralNet::new(arch, head, crate::N_FEATURES, seed)
}
