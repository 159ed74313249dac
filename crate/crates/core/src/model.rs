//! Model families, label groupings and the trained-model union shared by the
//! harness, the store and the CLI.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

use crate::neural::{Arch, Head, NeuralError, NeuralNet, TrainConfig};
use crate::seed;
use crate::trees::{DecisionTree, Forest, TreeError, TreeParams};
use crate::FeatureVector;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("ensemble has no members")]
    EmptyEnsemble,
    #[error("ensemble members must be binary models")]
    NonBinaryMember,
    #[error("unknown {what} '{value}'")]
    Unknown { what: &'static str, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelType {
    Rfc,
    Dtc,
    Fc,
    Lstm,
    Conv1d,
}

impl ModelType {
    pub const ALL: [ModelType; 5] = [ModelType::Rfc, ModelType::Dtc, ModelType::Fc, ModelType::Lstm, ModelType::Conv1d];

    pub fn name(self) -> &'static str {
        match self {
            ModelType::Rfc => "RFC",
            ModelType::Dtc => "DTC",
            ModelType::Fc => "FC",
            ModelType::Lstm => "LSTM",
            ModelType::Conv1d => "Conv1D",
        }
    }

    /// Network architecture, or `None` for tree models.
    pub fn arch(self) -> Option<Arch> {
        match self {
            ModelType::Fc => Some(Arch::Fc),
            ModelType::Lstm => Some(Arch::Lstm),
            ModelType::Conv1d => Some(Arch::Conv1d),
            ModelType::Rfc | ModelType::Dtc => None,
        }
    }
}

impl fmt::Display for ModelType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelType {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelType::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ModelError::Unknown { what: "model type", value: s.to_string() })
    }
}

/// What is predicted (device or category) and how: one multiclass model, or
/// one binary model per class combined by argmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    AllDevice,
    AllCategory,
    PerDevice,
    PerCategory,
}

impl Group {
    pub const ALL: [Group; 4] = [Group::AllDevice, Group::AllCategory, Group::PerDevice, Group::PerCategory];

    pub fn name(self) -> &'static str {
        match self {
            Group::AllDevice => "all-device",
            Group::AllCategory => "all-category",
            Group::PerDevice => "per-device",
            Group::PerCategory => "per-category",
        }
    }

    pub fn is_per_class(self) -> bool {
        matches!(self, Group::PerDevice | Group::PerCategory)
    }

    pub fn by_category(self) -> bool {
        matches!(self, Group::AllCategory | Group::PerCategory)
    }

    pub fn label(self, row: &FeatureVector) -> usize {
        if self.by_category() {
            row.category_id as usize
        } else {
            row.device_id as usize
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Group {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Group::ALL
            .into_iter()
            .find(|g| g.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ModelError::Unknown { what: "group", value: s.to_string() })
    }
}

/// Hyperparameters for every model family.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitSettings {
    pub tree: TreeParams,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Tree(DecisionTree),
    Forest(Forest),
    Neural(NeuralNet),
    /// One binary model per class; column `i` of the prediction is member
    /// `i`'s positive-class probability.
    Ensemble(Vec<TrainedModel>),
}

impl TrainedModel {
    /// Fits one model. With a binary head, labels are 0/1 and tree models
    /// get two classes.
    pub fn fit(
        model_type: ModelType,
        head: Head,
        x: ArrayView2<f64>,
        labels: &[usize],
        seed: u64,
        settings: &FitSettings,
    ) -> Result<Self, ModelError> {
        let n_classes = match head {
            Head::Multiclass(n) => n,
            Head::Binary => 2,
        };
        let tree = TreeParams { seed, ..settings.tree.clone() };
        Ok(match model_type.arch() {
            None if model_type == ModelType::Dtc => TrainedModel::Tree(DecisionTree::fit(x, labels, n_classes, &tree)?),
            None => TrainedModel::Forest(Forest::fit(x, labels, n_classes, &tree)?),
            Some(arch) => {
                let mut net = NeuralNet::new(arch, head, x.ncols(), seed);
                net.fit_scaler(x);
                net.train(x, labels, &TrainConfig { seed, ..settings.train.clone() })?;
                TrainedModel::Neural(net)
            }
        })
    }

    /// Fits a single multiclass model, or for per-class groups one binary
    /// model per class (`1` for that class, `0` for every other row).
    pub fn fit_group(
        model_type: ModelType,
        per_class: bool,
        x: ArrayView2<f64>,
        labels: &[usize],
        n_classes: usize,
        seed: u64,
        settings: &FitSettings,
    ) -> Result<Self, ModelError> {
        if !per_class {
            return Self::fit(model_type, Head::Multiclass(n_classes), x, labels, seed, settings);
        }
        let members = (0..n_classes)
            .map(|c| {
                let binary: Vec<usize> = labels.iter().map(|&l| usize::from(l == c)).collect();
                Self::fit(model_type, Head::Binary, x, &binary, seed::derive(seed, &[c as u64]), settings)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TrainedModel::Ensemble(members))
    }

    /// Number of output columns of [`predict_proba`](Self::predict_proba).
    pub fn n_outputs(&self) -> usize {
        match self {
            TrainedModel::Tree(t) => t.n_classes(),
            TrainedModel::Forest(f) => f.n_classes(),
            TrainedModel::Neural(n) => n.head().output_units(),
            TrainedModel::Ensemble(m) => m.len(),
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            TrainedModel::Tree(t) => t.n_features(),
            TrainedModel::Forest(f) => f.n_features(),
            TrainedModel::Neural(n) => n.input_dim(),
            TrainedModel::Ensemble(m) => m.first().map_or(0, TrainedModel::n_features),
        }
    }

    /// Number of separately stored models (1 unless an ensemble).
    pub fn model_count(&self) -> usize {
        match self {
            TrainedModel::Ensemble(m) => m.len(),
            _ => 1,
        }
    }

    /// Class probabilities, or per-member positive probabilities for an
    /// ensemble.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, ModelError> {
        Ok(match self {
            TrainedModel::Tree(t) => t.predict_proba(x)?,
            TrainedModel::Forest(f) => f.predict_proba(x)?,
            TrainedModel::Neural(n) => n.predict_proba(x)?,
            TrainedModel::Ensemble(members) => {
                if members.is_empty() {
                    return Err(ModelError::EmptyEnsemble);
                }
                let mut out = Array2::zeros((x.nrows(), members.len()));
                for (i, m) in members.iter().enumerate() {
                    out.column_mut(i).assign(&m.positive_proba(x)?);
                }
                out
            }
        })
    }

    /// Probability of the positive class for a binary model.
    pub fn positive_proba(&self, x: ArrayView2<f64>) -> Result<ndarray::Array1<f64>, ModelError> {
        let p = self.predict_proba(x)?;
        match (self, p.ncols()) {
            (TrainedModel::Neural(_), 1) => Ok(p.column(0).to_owned()),
            (TrainedModel::Tree(_) | TrainedModel::Forest(_), 2) => Ok(p.column(1).to_owned()),
            _ => Err(ModelError::NonBinaryMember),
        }
    }

    /// Row-wise argmax of [`predict_proba`](Self::predict_proba); ties go to
    /// the lowest index.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>, ModelError> {
        Ok(self.predict_proba(x)?.rows().into_iter().map(|r| argmax(r.iter().copied())).collect())
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}
