use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::{evaluate, feature_matrix, labels, train_rows, HarnessError, LabeledDataset};
use crate::model::{FitSettings, Group, ModelType, TrainedModel};
use crate::neural::{NeuralNet, TrainConfig};
use crate::{seed, FeatureVector};

/// Named evaluation rows, e.g. the held-out active days of one environment.
pub struct EvalSet<'a> {
    pub name: String,
    pub rows: Vec<&'a FeatureVector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrainReport {
    /// `(environment, F1 before, F1 after)`.
    pub scores: Vec<(String, f64, f64)>,
    pub model: TrainedModel,
}

fn neural_members(model: &mut TrainedModel) -> Result<Vec<&mut NeuralNet>, HarnessError> {
    match model {
        TrainedModel::Neural(n) => Ok(vec![n]),
        TrainedModel::Ensemble(members) => members
            .iter_mut()
            .map(|m| match m {
                TrainedModel::Neural(n) => Ok(n),
                _ => Err(HarnessError::NotNeural),
            })
            .collect(),
        _ => Err(HarnessError::NotNeural),
    }
}

/// Clones `base`, freezes its first `freeze_k` weighted layers, trains on
/// `update` and scores both models on every evaluation set. The scaler
/// fitted for the base model is kept. An empty update leaves the model
/// unchanged.
pub fn retrain_eval(
    base: &TrainedModel,
    group: Group,
    update: &[&FeatureVector],
    eval_sets: &[EvalSet],
    freeze_k: usize,
    cfg: &TrainConfig,
) -> Result<RetrainReport, HarnessError> {
    let mut model = base.clone();
    let members = neural_members(&mut model)?;
    if !update.is_empty() {
        let x = feature_matrix(update.iter().copied());
        let y = labels(update.iter().copied(), group);
        let per_class = members.len() > 1 || group.is_per_class();
        for (c, net) in members.into_iter().enumerate() {
            net.freeze(freeze_k)?;
            let target: Vec<usize> = if per_class { y.iter().map(|&l| usize::from(l == c)).collect() } else { y.clone() };
            net.train(x.view(), &target, &TrainConfig { seed: seed::derive(cfg.seed, &[c as u64]), ..cfg.clone() })?;
        }
    } else {
        for net in members {
            net.freeze(freeze_k)?;
        }
    }
    let scores = eval_sets
        .iter()
        .map(|s| Ok((s.name.clone(), evaluate(base, &s.rows, group)?, evaluate(&model, &s.rows, group)?)))
        .collect::<Result<_, HarnessError>>()?;
    Ok(RetrainReport { scores, model })
}

/// Trains an all-category model on every row except those of `device` and
/// returns the category F1 on that device's rows.
pub fn leave_one_out_category(
    data: &LabeledDataset,
    device: u32,
    model_type: ModelType,
    seed: u64,
    settings: &FitSettings,
) -> Result<f64, HarnessError> {
    let cats = data.device_categories();
    let category = *cats.get(&device).ok_or(HarnessError::UnknownDevice(device))?;
    if !cats.iter().any(|(&d, &c)| d != device && c == category) {
        return Err(HarnessError::SingletonCategory { device, category });
    }
    let (held, train): (Vec<&FeatureVector>, Vec<&FeatureVector>) =
        data.rows().iter().partition(|r| r.device_id == device);
    if held.is_empty() {
        return Err(HarnessError::EmptyInput("held-out device has no rows"));
    }
    let n_classes = data.n_classes(Group::AllCategory);
    let model = train_rows(model_type, Group::AllCategory, &train, n_classes, seed, settings)?;
    evaluate(&model, &held, Group::AllCategory)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LooRow {
    pub device: u32,
    pub category: u32,
    pub model_type: ModelType,
    pub f1: f64,
}

/// Runs [`leave_one_out_category`] for every device whose category has a
/// sibling, for each model type.
pub fn leave_one_out_table(
    data: &LabeledDataset,
    model_types: &[ModelType],
    base_seed: u64,
    settings: &FitSettings,
) -> Result<Vec<LooRow>, HarnessError> {
    let mut out = Vec::new();
    for (&device, &category) in data.device_categories() {
        for &m in model_types {
            let s = seed::derive(base_seed, &[device as u64, m as u64]);
            match leave_one_out_category(data, device, m, s, settings) {
                Ok(f1) => out.push(LooRow { device, category, model_type: m, f1 }),
                Err(HarnessError::SingletonCategory { .. }) => break,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub model_type: ModelType,
    pub group: Group,
    pub n: usize,
    pub seconds: f64,
    /// Separately stored models that ran (one per class for per-class
    /// groups).
    pub models: usize,
}

impl BenchReport {
    pub fn per_sample(&self) -> f64 {
        self.seconds / self.n as f64
    }
}

/// Draws `n` rows from `pool` with replacement.
pub fn sample_rows(pool: ArrayView2<f64>, n: usize, seed: u64) -> Array2<f64> {
    let mut rng = seed::rng(seed);
    let mut out = Array2::zeros((n, pool.ncols()));
    if pool.nrows() == 0 {
        return out;
    }
    for mut row in out.rows_mut() {
        row.assign(&pool.row(rng.random_range(0..pool.nrows())));
    }
    out
}

/// Times batched inference over `n` rows sampled from `pool`. A per-class
/// ensemble runs all its members, so the time covers every model.
pub fn bench_inference(
    model: &TrainedModel,
    model_type: ModelType,
    group: Group,
    pool: ArrayView2<f64>,
    n: usize,
    seed: u64,
) -> Result<BenchReport, HarnessError> {
    if pool.nrows() == 0 || n == 0 {
        return Err(HarnessError::EmptyInput("benchmark needs a feature pool and n > 0"));
    }
    let x = sample_rows(pool, n, seed);
    let start = Instant::now();
    let out = model.predict_proba(x.view())?;
    let seconds = start.elapsed().as_secs_f64();
    std::hint::black_box(out);
    Ok(BenchReport { model_type, group, n, seconds, models: model.model_count() })
}
