//! CART decision trees and random forests.
//!
//! Trees cannot be updated incrementally; new data means refitting from
//! scratch on the merged training set.

mod forest;
mod tree;

pub use forest::Forest;
pub use tree::{DecisionTree, Node};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("{rows} rows but {labels} labels")]
    LabelCount { rows: usize, labels: usize },
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(&'static str),
}

/// How many features a forest member considers at each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxFeatures {
    /// `ceil(sqrt(n_features))`, i.e. 5 of 19.
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (n_features as f64).sqrt().ceil() as usize,
            MaxFeatures::All => n_features,
            MaxFeatures::Count(k) => k,
        };
        k.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    /// Forest only.
    pub n_estimators: usize,
    /// Forest only.
    pub max_features: MaxFeatures,
    /// Forest only: draw each member's training set with replacement.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 100,
            min_samples_leaf: 1,
            min_samples_split: 10,
            n_estimators: 3,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<(), TreeError> {
        if self.max_depth < 1 {
            return Err(TreeError::InvalidParams("max_depth must be at least 1"));
        }
        if self.min_samples_leaf < 1 {
            return Err(TreeError::InvalidParams("min_samples_leaf must be at least 1"));
        }
        if self.min_samples_split < 2 {
            return Err(TreeError::InvalidParams("min_samples_split must be at least 2"));
        }
        if self.n_estimators < 1 {
            return Err(TreeError::InvalidParams("n_estimators must be at least 1"));
        }
        if matches!(self.max_features, MaxFeatures::Count(0)) {
            return Err(TreeError::InvalidParams("max_features must be at least 1"));
        }
        Ok(())
    }
}

fn check_inputs(
    x: ndarray::ArrayView2<f64>,
    labels: &[usize],
    n_classes: usize,
) -> Result<(), TreeError> {
    if x.nrows() == 0 {
        return Err(TreeError::EmptyDataset);
    }
    if labels.len() != x.nrows() {
        return Err(TreeError::LabelCount {
            rows: x.nrows(),
            labels: labels.len(),
        });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(TreeError::LabelOutOfRange { label, n_classes });
    }
    Ok(())
}
