//! Experiment protocols: sliding-window F1 grids, per-class ensembles,
//! layer-frozen retraining, leave-one-device-out categorization and
//! inference timing.

mod dataset;
mod experiments;
mod grid;
mod heatmap;
mod metrics;

pub use dataset::{feature_matrix, labels, DatasetError, LabeledDataset};
pub use experiments::{
    bench_inference, leave_one_out_category, leave_one_out_table, retrain_eval, sample_rows, BenchReport, EvalSet,
    LooRow, RetrainReport,
};
pub use grid::{
    cell_seed, ensemble_predict, eval_grid, evaluate, predict, run_cell, split_days, test_day, train_rows, train_window,
    valid_triples, CellKey, CellSamples, EvalGrid, ExperimentSpec, GridConfig, P_MAX, W_MAX,
};
pub use heatmap::{render_heatmap, write_heatmaps};
pub use metrics::f1_macro;

use thiserror::Error;

use crate::model::ModelError;
use crate::neural::NeuralError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid split x={x} w={w} p={p} for {d_max} days")]
    InvalidSplit { x: u32, w: u32, p: u32, d_max: u32 },
    #[error("{predictions} predictions but {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("{0}")]
    EmptyInput(&'static str),
    #[error("grid needs at least 3 days, dataset has {0}")]
    TooFewDays(u32),
    #[error("unknown device {0}")]
    UnknownDevice(u32),
    #[error("device {device} is the only member of category {category}")]
    SingletonCategory { device: u32, category: u32 },
    #[error("retraining needs a neural model or an ensemble of them")]
    NotNeural,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

impl From<NeuralError> for HarnessError {
    fn from(e: NeuralError) -> Self {
        HarnessError::Model(ModelError::Neural(e))
    }
}
