//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use iotfp::neural::NeuralNet;
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.5..1.5))
}

/// Outcome of a finite-difference comparison.
#[derive(Debug, Default)]
pub struct GradCheck {
    pub checked: usize,
    pub failures: Vec<String>,
    pub worst_rel: f64,
}

/// Which entries of each tensor to probe.
pub enum Coverage {
    Every,
    Sample(usize),
}

/// Compares analytic gradients with central differences (step 1e-5). An
/// entry passes when the absolute error is at most `abs_tol` or the relative
/// error at most `rel_tol`. Entries that miss are re-probed with step 1e-7,
/// since a ReLU kink inside the wider stencil skews the difference quotient.
pub fn finite_difference_check(
    net: &NeuralNet,
    x: ArrayView2<f64>,
    labels: &[usize],
    dropout_seed: Option<u64>,
    coverage: Coverage,
    rel_tol: f64,
    abs_tol: f64,
) -> GradCheck {
    let loss = |n: &NeuralNet| match dropout_seed {
        None => n.loss(x, labels).unwrap(),
        Some(s) => n.loss_and_grads_with_dropout(x, labels, s).unwrap().0,
    };
    let (_, grads) = match dropout_seed {
        None => net.loss_and_grads(x, labels).unwrap(),
        Some(s) => net.loss_and_grads_with_dropout(x, labels, s).unwrap(),
    };
    let mut out = GradCheck::default();
    let mut pick = rng(0xfd);
    let h = 1e-5;
    let mut probe = net.clone();
    // A fully frozen copy runs the dropout forward pass without backprop.
    let n_weighted = probe.freeze_mask().len();
    probe.set_freeze_mask(&vec![true; n_weighted]).unwrap();
    for (li, layer_grads) in grads.per_layer.iter().enumerate() {
        let Some(layer_grads) = layer_grads else {
            continue;
        };
        for (ti, g) in layer_grads.iter().enumerate() {
            let len = g.len();
            let entries: Vec<usize> = match coverage {
                Coverage::Every => (0..len).collect(),
                Coverage::Sample(k) => (0..k.min(len)).map(|_| pick.random_range(0..len)).collect(),
            };
            let flat_g: Vec<f64> = g.iter().copied().collect();
            for e in entries {
                let an = flat_g[e];
                let mut central = |step: f64| {
                    let orig = probe.param_mut(li, ti).unwrap().as_slice_mut().unwrap()[e];
                    probe.param_mut(li, ti).unwrap().as_slice_mut().unwrap()[e] = orig + step;
                    let up = loss(&probe);
                    probe.param_mut(li, ti).unwrap().as_slice_mut().unwrap()[e] = orig - step;
                    let down = loss(&probe);
                    probe.param_mut(li, ti).unwrap().as_slice_mut().unwrap()[e] = orig;
                    let fd = (up - down) / (2.0 * step);
                    let abs = (fd - an).abs();
                    (fd, abs, abs / fd.abs().max(an.abs()).max(1e-300))
                };
                let (mut fd, mut abs, mut rel) = central(h);
                if abs > abs_tol && rel > rel_tol {
                    (fd, abs, rel) = central(1e-7);
                }
                out.checked += 1;
                if abs > abs_tol {
                    out.worst_rel = out.worst_rel.max(rel);
                }
                if abs > abs_tol && rel > rel_tol {
                    out.failures.push(format!("layer {li} tensor {ti} entry {e}: analytic {an:e} fd {fd:e}"));
                }
            }
        }
    }
    out
}

/// Macro F1 by explicit confusion-matrix counting: per-class F1 averaged over
/// classes that occur in `truth`.
pub fn confusion_matrix_f1(pred: &[usize], truth: &[usize]) -> f64 {
    let k = pred.iter().chain(truth).copied().max().unwrap_or(0) + 1;
    let mut cm = vec![vec![0u64; k]; k];
    for (&p, &t) in pred.iter().zip(truth) {
        cm[t][p] += 1;
    }
    let mut sum = 0.0;
    let mut classes = 0;
    for c in 0..k {
        let support: u64 = cm[c].iter().sum();
        if support == 0 {
            continue;
        }
        classes += 1;
        let tp = cm[c][c] as f64;
        let predicted: u64 = (0..k).map(|r| cm[r][c]).sum();
        let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let recall = tp / support as f64;
        sum += if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
    }
    sum / classes as f64
}

/// Best root split by trying every (feature, midpoint) pair and scoring the
/// explicit partition with Gini impurity. Ties within 1e-12 go to the lower
/// feature, then the lower threshold.
pub fn exhaustive_root_split(
    x: ArrayView2<f64>,
    y: &[usize],
    n_classes: usize,
    min_leaf: usize,
) -> Option<(usize, f64, f64)> {
    let gini = |rows: &[usize]| {
        let n = rows.len() as f64;
        let mut counts = vec![0.0; n_classes];
        for &r in rows {
            counts[y[r]] += 1.0;
        }
        1.0 - counts.iter().map(|c| (c / n) * (c / n)).sum::<f64>()
    };
    let n = x.nrows();
    let mut all: Vec<(usize, f64, f64)> = Vec::new();
    for f in 0..x.ncols() {
        let mut vals: Vec<f64> = x.column(f).to_vec();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let thr = (w[0] + w[1]) / 2.0;
            let (l, r): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| x[[i, f]] <= thr);
            if l.len() < min_leaf || r.len() < min_leaf {
                continue;
            }
            let score = (l.len() as f64 * gini(&l) + r.len() as f64 * gini(&r)) / n as f64;
            all.push((f, thr, score));
        }
    }
    let best = all.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
    all.into_iter().find(|c| c.2 <= best + 1e-12)
}
