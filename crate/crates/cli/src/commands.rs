use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use iotfp::flowcore::io::{assemble, build_vocab, featurize_all, read_packets, ExtractError};
use iotfp::flowcore::{DeviceLabels, FlowConfig};
use iotfp::harness::{
    bench_inference, eval_grid, feature_matrix, retrain_eval, train_rows, write_heatmaps, DatasetError, EvalSet,
    GridConfig, HarnessError, LabeledDataset,
};
use iotfp::jsonl::{self, JsonlError};
use iotfp::model::{FitSettings, ModelError, TrainedModel};
use iotfp::neural::{LayerSpec, NeuralError, NeuralNet, TrainConfig};
use iotfp::store::{load_model, model_size, read_dataset, save_model, write_dataset, ModelKind, Provenance, StoreError};
use iotfp::synthgen::{device_labels, gen_environment, gen_environment_packets, gen_packets, ConfigError, EnvConfig};
use iotfp::trees::TreeParams;
use iotfp::FeatureVector;

use crate::{BenchArgs, ExtractArgs, GenArgs, GridArgs, HyperArgs, InfoArgs, RetrainArgs, TrainArgs};

/// Short machine-readable class of the innermost recognized error.
pub fn error_kind(e: &anyhow::Error) -> &'static str {
    let mut kind = "invalid";
    for cause in e.chain() {
        let k = if cause.is::<ConfigError>() {
            "config"
        } else if cause.is::<JsonlError>() || cause.is::<serde_json::Error>() {
            "parse"
        } else if cause.is::<ExtractError>() {
            "extract"
        } else if let Some(e) = cause.downcast_ref::<StoreError>() {
            // Transparent variants hide their inner error from the chain.
            match e {
                StoreError::Io(_) => "io",
                StoreError::Jsonl(_) => "parse",
                StoreError::Dataset(_) => "dataset",
                _ => "store",
            }
        } else if cause.is::<DatasetError>() {
            "dataset"
        } else if cause.is::<HarnessError>() {
            "harness"
        } else if cause.is::<ModelError>() {
            "model"
        } else if cause.is::<NeuralError>() {
            "neural"
        } else if cause.is::<std::io::Error>() {
            "io"
        } else {
            continue;
        };
        kind = k;
    }
    kind
}

fn settings(h: &HyperArgs, seed: u64) -> FitSettings {
    FitSettings {
        tree: TreeParams { n_estimators: h.n_estimators, max_depth: h.max_depth, seed, ..TreeParams::default() },
        train: TrainConfig { epochs: h.epochs, batch_size: h.batch, learning_rate: h.lr, clip_norm: h.clip_norm, seed, ..TrainConfig::default() },
    }
}

fn load_rows(path: &Path) -> Result<LabeledDataset> {
    read_dataset(path).with_context(|| format!("reading {}", path.display()))
}

/// Rows of days `start..=start+window-1`, the window defaulting to the rest
/// of the dataset.
fn window_rows(data: &LabeledDataset, start: u32, window: Option<u32>) -> Result<(Vec<&FeatureVector>, u32)> {
    if start < 1 {
        bail!(HarnessError::EmptyInput("days start at 1"));
    }
    let window = window.unwrap_or_else(|| data.d_max().saturating_sub(start) + 1);
    if window < 1 {
        bail!(HarnessError::EmptyInput("window must cover at least one day"));
    }
    let rows = data.days(start..=start + window - 1);
    if rows.is_empty() {
        bail!(HarnessError::EmptyInput("no rows in the selected days"));
    }
    Ok((rows, window))
}

fn neural_nets(model: &TrainedModel) -> Vec<&NeuralNet> {
    match model {
        TrainedModel::Neural(n) => vec![n],
        TrainedModel::Ensemble(m) => m.iter().flat_map(neural_nets).collect(),
        _ => Vec::new(),
    }
}

fn freeze_mask(model: &TrainedModel) -> Vec<bool> {
    neural_nets(model).first().map(|n| n.freeze_mask()).unwrap_or_default()
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

pub fn extract(a: ExtractArgs) -> Result<()> {
    let registry = match &a.labels {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(serde_json::from_str::<DeviceLabels>(&text).with_context(|| format!("parsing {}", p.display()))?)
        }
        None => None,
    };
    let cfg = FlowConfig {
        inactive_timeout: a.inactive_timeout,
        active_timeout: a.active_timeout,
        day_origin: a.day_origin,
        ..FlowConfig::default()
    };
    let file = File::open(&a.packets).with_context(|| format!("opening {}", a.packets.display()))?;
    let flows = assemble(read_packets(BufReader::new(file)), cfg, registry)?;
    if let Some(p) = &a.flows_out {
        let mut w = BufWriter::new(File::create(p)?);
        for f in &flows {
            jsonl::write_line(&mut w, f)?;
        }
        w.flush()?;
    }
    let rows = featurize_all(&flows, &build_vocab(&flows));
    write_dataset(&rows, &a.out)?;
    println!("flows={} rows={}", flows.len(), rows.len());
    Ok(())
}

pub fn gen(a: GenArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let cfg = EnvConfig::parse(&text)?;
    let spec = cfg.to_spec();
    let data = if cfg.packet_level { gen_environment_packets(&spec)? } else { gen_environment(&spec) };
    write_dataset(data.rows(), &a.out)?;
    if let Some(p) = &a.packets_out {
        let mut w = BufWriter::new(File::create(p)?);
        for packet in gen_packets(&spec) {
            jsonl::write_line(&mut w, &packet)?;
        }
        w.flush()?;
    }
    if let Some(p) = &a.labels_out {
        // Round-trip through a Value so map keys come out sorted.
        let value = serde_json::to_value(device_labels(&spec))?;
        std::fs::write(p, serde_json::to_string_pretty(&value)? + "\n")?;
    }
    println!("devices={} days={} rows={}", spec.devices.len(), spec.n_days, data.len());
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let data = load_rows(&a.data)?;
    let (rows, window) = window_rows(&data, a.start, a.window)?;
    let fit = settings(&a.hyper, a.seed);
    let model = train_rows(a.model_type, a.group, &rows, data.n_classes(a.group), a.seed, &fit)?;
    let prov = Provenance {
        window_start: a.start,
        window_len: window,
        seed: a.seed,
        epochs: if a.model_type.arch().is_some() { a.hyper.epochs as u32 } else { 0 },
        model_type: Some(a.model_type),
        group: Some(a.group),
        freeze_mask: freeze_mask(&model),
    };
    let size = save_model(&model, &prov, &a.out)?;
    println!("model_type={} group={} rows={} models={} payload_bytes={size}", a.model_type, a.group, rows.len(), model.model_count());
    Ok(())
}

pub fn grid(a: GridArgs) -> Result<()> {
    let data = load_rows(&a.data)?;
    let cfg = GridConfig { w_max: a.w_max, p_max: a.p_max, base_seed: a.seed, settings: settings(&a.hyper, a.seed) };
    let grid = eval_grid(&data, &a.types, &a.groups, &cfg)?;
    let mut csv = Vec::new();
    grid.write_csv(&mut csv)?;
    write_output(a.out.as_deref(), std::str::from_utf8(&csv)?)?;
    if let Some(dir) = &a.heatmaps {
        write_heatmaps(&grid, dir).map_err(|e| anyhow!("writing heatmaps: {e}"))?;
    }
    Ok(())
}

fn layer_kind(spec: &LayerSpec) -> &'static str {
    match spec {
        LayerSpec::Dense { .. } => "dense",
        LayerSpec::Lstm { .. } => "lstm",
        LayerSpec::Conv1d { .. } => "conv1d",
        LayerSpec::Output { .. } => "output",
        LayerSpec::Dropout { .. } => "dropout",
        LayerSpec::Maxpool1d { .. } => "maxpool1d",
        LayerSpec::Flatten => "flatten",
    }
}

pub fn retrain(a: RetrainArgs) -> Result<()> {
    let (base, prov) = load_model(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let group = prov.group.ok_or_else(|| anyhow!(StoreError::Corrupt("model records no group".into())))?;
    let data = load_rows(&a.data)?;
    let start = a.start.unwrap_or(1);
    let (update, window) = window_rows(&data, start, a.window)?;
    let mut named = Vec::new();
    for spec in &a.eval {
        let (name, path) = spec.split_once('=').ok_or_else(|| anyhow!("--eval expects NAME=PATH, got {spec:?}"))?;
        named.push((name.to_string(), load_rows(Path::new(path))?));
    }
    let eval_sets: Vec<EvalSet> = if named.is_empty() {
        vec![EvalSet { name: "update".into(), rows: update.clone() }]
    } else {
        named.iter().map(|(n, d)| EvalSet { name: n.clone(), rows: d.rows().iter().collect() }).collect()
    };
    let cfg = settings(&a.hyper, a.seed).train;
    let result = retrain_eval(&base, group, &update, &eval_sets, a.freeze_k, &cfg)?;

    let mut report = String::from("layer,kind,frozen,unchanged\n");
    let (old_nets, new_nets) = (neural_nets(&base), neural_nets(&result.model));
    for li in new_nets[0].weighted_layers() {
        let frozen = new_nets.iter().all(|n| n.layers()[li].frozen);
        let unchanged = old_nets.iter().zip(&new_nets).all(|(o, n)| o.layers()[li].params == n.layers()[li].params);
        writeln!(report, "{li},{},{frozen},{unchanged}", layer_kind(&new_nets[0].layers()[li].spec))?;
    }
    report.push_str("set,f1_before,f1_after\n");
    for (name, before, after) in &result.scores {
        writeln!(report, "{name},{before:.6},{after:.6}")?;
    }
    let new_prov = Provenance {
        window_start: start,
        window_len: window,
        seed: a.seed,
        epochs: a.hyper.epochs as u32,
        model_type: prov.model_type,
        group: Some(group),
        freeze_mask: freeze_mask(&result.model),
    };
    save_model(&result.model, &new_prov, &a.out)?;
    if let Some(p) = &a.report {
        std::fs::write(p, &report)?;
    }
    print!("{report}");
    Ok(())
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let (model, prov) = load_model(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let (Some(model_type), Some(group)) = (prov.model_type, prov.group) else {
        bail!(StoreError::Corrupt("model records no type or group".into()));
    };
    let data = load_rows(&a.data)?;
    let pool = feature_matrix(data.rows());
    let mut out = String::from("model_type,group,n,models,seconds,per_sample_us\n");
    for &n in &a.n {
        let r = bench_inference(&model, model_type, group, pool.view(), n, a.seed)?;
        writeln!(out, "{},{},{},{},{:.6},{:.6}", r.model_type, r.group, r.n, r.models, r.seconds, r.per_sample() * 1e6)?;
    }
    write_output(a.out.as_deref(), &out)
}

pub fn info(a: InfoArgs) -> Result<()> {
    let (model, prov) = load_model(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
    let mask: String = prov.freeze_mask.iter().map(|&f| if f { '1' } else { '0' }).collect();
    println!("kind={:?}", ModelKind::of(&model));
    println!("model_type={}", opt(prov.model_type.map(|m| m.to_string())));
    println!("group={}", opt(prov.group.map(|g| g.to_string())));
    println!("window_start={} window_len={}", prov.window_start, prov.window_len);
    println!("seed={} epochs={}", prov.seed, prov.epochs);
    println!("freeze_mask={}", if mask.is_empty() { "-".into() } else { mask });
    println!("models={} outputs={} features={}", model.model_count(), model.n_outputs(), model.n_features());
    println!("payload_bytes={}", model_size(&model));
    Ok(())
}
