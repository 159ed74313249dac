use std::collections::BTreeMap;
use std::io::Write;

use ndarray::ArrayView2;
use rayon::prelude::*;

use super::{f1_macro, feature_matrix, labels, HarnessError, LabeledDataset};
use crate::model::{argmax, FitSettings, Group, ModelType, TrainedModel};
use crate::{seed, FeatureVector};

pub const W_MAX: u32 = 7;
pub const P_MAX: u32 = 14;

/// One training run: model family, grouping, window length `w` starting at
/// day `x`, and its seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExperimentSpec {
    pub model_type: ModelType,
    pub group: Group,
    pub w: u32,
    pub x: u32,
    pub seed: u64,
}

/// Day of the test set: the `p`-th day after the window, so `w = 1, p = 1`
/// tests on day `x + 1`.
pub fn test_day(x: u32, w: u32, p: u32) -> u32 {
    x + w + p - 1
}

/// Training rows from days `x..=x+w-1` and test rows from
/// [`test_day`]`(x, w, p)`.
pub fn split_days(
    data: &LabeledDataset,
    x: u32,
    w: u32,
    p: u32,
) -> Result<(Vec<&FeatureVector>, Vec<&FeatureVector>), HarnessError> {
    let d_max = data.d_max();
    if x < 1 || w < 1 || p < 1 || test_day(x, w, p) > d_max {
        return Err(HarnessError::InvalidSplit { x, w, p, d_max });
    }
    let t = test_day(x, w, p);
    Ok((data.days(x..=x + w - 1), data.days(t..=t)))
}

/// Every `(x, w, p)` with `w <= w_max`, `p <= p_max` and a test day inside
/// the dataset.
pub fn valid_triples(d_max: u32, w_max: u32, p_max: u32) -> Vec<(u32, u32, u32)> {
    let mut out = Vec::new();
    for w in 1..=w_max {
        for p in 1..=p_max {
            let mut x = 1;
            while test_day(x, w, p) <= d_max {
                out.push((x, w, p));
                x += 1;
            }
        }
    }
    out
}

/// Predicted class of each row for a list of binary models: the index of
/// the model with the highest positive probability, lowest index on ties.
pub fn ensemble_predict(models: &[TrainedModel], x: ArrayView2<f64>) -> Result<Vec<usize>, HarnessError> {
    if models.is_empty() {
        return Err(HarnessError::EmptyInput("ensemble needs at least one model"));
    }
    let probs = models.iter().map(|m| m.positive_proba(x)).collect::<Result<Vec<_>, _>>()?;
    Ok((0..x.nrows()).map(|r| argmax(probs.iter().map(|p| p[r]))).collect())
}

/// Class predictions of any model; per-class ensembles go through
/// [`ensemble_predict`].
pub fn predict(model: &TrainedModel, x: ArrayView2<f64>) -> Result<Vec<usize>, HarnessError> {
    match model {
        TrainedModel::Ensemble(members) => ensemble_predict(members, x),
        m => Ok(m.predict(x)?),
    }
}

/// Macro F1 of `model` on `rows`, labeled according to `group`.
pub fn evaluate(model: &TrainedModel, rows: &[&FeatureVector], group: Group) -> Result<f64, HarnessError> {
    let x = feature_matrix(rows.iter().copied());
    f1_macro(&predict(model, x.view())?, &labels(rows.iter().copied(), group))
}

/// Fits the model of `spec` on its training window.
pub fn train_window(
    spec: &ExperimentSpec,
    data: &LabeledDataset,
    settings: &FitSettings,
) -> Result<TrainedModel, HarnessError> {
    let (train, _) = split_days(data, spec.x, spec.w, 1)?;
    train_rows(spec.model_type, spec.group, &train, data.n_classes(spec.group), spec.seed, settings)
}

pub fn train_rows(
    model_type: ModelType,
    group: Group,
    rows: &[&FeatureVector],
    n_classes: usize,
    seed: u64,
    settings: &FitSettings,
) -> Result<TrainedModel, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::EmptyInput("training window has no rows"));
    }
    let x = feature_matrix(rows.iter().copied());
    let y = labels(rows.iter().copied(), group);
    Ok(TrainedModel::fit_group(model_type, group.is_per_class(), x.view(), &y, n_classes, seed, settings)?)
}

/// Trains on the window of `spec` and returns the F1 on prediction day `p`.
pub fn run_cell(spec: &ExperimentSpec, p: u32, data: &LabeledDataset, settings: &FitSettings) -> Result<f64, HarnessError> {
    let (_, test) = split_days(data, spec.x, spec.w, p)?;
    if test.is_empty() {
        return Err(HarnessError::EmptyInput("test day has no rows"));
    }
    evaluate(&train_window(spec, data, settings)?, &test, spec.group)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub model_type: ModelType,
    pub group: Group,
    pub w: u32,
    pub p: u32,
}

/// Per-start-day F1 samples of one grid cell.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CellSamples {
    pub f1: Vec<f64>,
}

impl CellSamples {
    /// Mean F1, or `None` with fewer than two start days.
    pub fn mean(&self) -> Option<f64> {
        (self.f1.len() >= 2).then(|| self.f1.iter().sum::<f64>() / self.f1.len() as f64)
    }
}

/// F1 per (model type, group, w, p), averaged over start days.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalGrid {
    pub w_max: u32,
    pub p_max: u32,
    pub cells: BTreeMap<CellKey, CellSamples>,
}

impl EvalGrid {
    pub fn get(&self, model_type: ModelType, group: Group, w: u32, p: u32) -> Option<f64> {
        self.cells.get(&CellKey { model_type, group, w, p }).and_then(CellSamples::mean)
    }

    /// Keys of cells with a mean.
    pub fn present(&self) -> Vec<CellKey> {
        self.cells.iter().filter(|(_, s)| s.mean().is_some()).map(|(k, _)| *k).collect()
    }

    pub fn combos(&self) -> Vec<(ModelType, Group)> {
        let mut v: Vec<_> = self.cells.keys().map(|k| (k.model_type, k.group)).collect();
        v.dedup();
        v
    }

    /// CSV with header `model_type,group,w,p,f1`, one line per `(w, p)` of
    /// every evaluated combination; absent cells leave `f1` empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "model_type,group,w,p,f1")?;
        for (m, g) in self.combos() {
            for w in 1..=self.w_max {
                for p in 1..=self.p_max {
                    match self.get(m, g, w, p) {
                        Some(f) => writeln!(out, "{m},{g},{w},{p},{f:.6}")?,
                        None => writeln!(out, "{m},{g},{w},{p},")?,
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub w_max: u32,
    pub p_max: u32,
    pub base_seed: u64,
    pub settings: FitSettings,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { w_max: W_MAX, p_max: P_MAX, base_seed: 0, settings: FitSettings::default() }
    }
}

/// Seed for the window `(w, x)` of one (model type, group) pair.
pub fn cell_seed(base: u64, model_type: ModelType, group: Group, w: u32, x: u32) -> u64 {
    seed::derive(base, &[model_type as u64, group as u64, w as u64, x as u64])
}

/// Trains one model per (type, group, w, x) in parallel and scores it on
/// every prediction day it can reach. Windows or test days without rows
/// contribute no sample.
pub fn eval_grid(
    data: &LabeledDataset,
    model_types: &[ModelType],
    groups: &[Group],
    cfg: &GridConfig,
) -> Result<EvalGrid, HarnessError> {
    if data.d_max() < 3 {
        return Err(HarnessError::TooFewDays(data.d_max()));
    }
    let mut jobs = Vec::new();
    for &m in model_types {
        for &g in groups {
            for w in 1..=cfg.w_max {
                for x in 1..=data.d_max() {
                    if test_day(x, w, 1) <= data.d_max() {
                        jobs.push(ExperimentSpec { model_type: m, group: g, w, x, seed: cell_seed(cfg.base_seed, m, g, w, x) });
                    }
                }
            }
        }
    }
    let results = jobs
        .par_iter()
        .map(|spec| -> Result<Vec<(CellKey, f64)>, HarnessError> {
            let (train, _) = split_days(data, spec.x, spec.w, 1)?;
            if train.is_empty() {
                return Ok(Vec::new());
            }
            let model = train_window(spec, data, &cfg.settings)?;
            let mut out = Vec::new();
            for p in 1..=cfg.p_max {
                if test_day(spec.x, spec.w, p) > data.d_max() {
                    break;
                }
                let (_, test) = split_days(data, spec.x, spec.w, p)?;
                if test.is_empty() {
                    continue;
                }
                let key = CellKey { model_type: spec.model_type, group: spec.group, w: spec.w, p };
                out.push((key, evaluate(&model, &test, spec.group)?));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut cells: BTreeMap<CellKey, CellSamples> = BTreeMap::new();
    for &m in model_types {
        for &g in groups {
            for w in 1..=cfg.w_max {
                for p in 1..=cfg.p_max {
                    cells.insert(CellKey { model_type: m, group: g, w, p }, CellSamples::default());
                }
            }
        }
    }
    for (key, f1) in results.into_iter().flatten() {
        cells.get_mut(&key).expect("pre-seeded").f1.push(f1);
    }
    Ok(EvalGrid { w_max: cfg.w_max, p_max: cfg.p_max, cells })
}
