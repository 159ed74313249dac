mod common;

use common::{finite_difference_check, random_matrix, rng, Coverage};
use iotfp::neural::{init_model, Activation, Arch, Head, LayerSpec, NeuralError, NeuralNet, TrainConfig};
use ndarray::{Array2, Axis};
use rand::Rng;

fn fc_params(n_out: usize) -> usize {
    let dims = [19, 32, 64, 128, 256, n_out];
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn lstm_params(n_out: usize) -> usize {
    let dims = [1, 200, 100, 50, 25];
    let rec: usize = dims.windows(2).map(|w| 4 * w[1] * (w[0] + w[1] + 1)).sum();
    rec + 25 * n_out + n_out
}

fn conv_params(n_out: usize) -> usize {
    // 19 -> conv3 -> 17 -> conv3 -> 15 -> pool2 -> 7; flatten 7 * 64.
    (3 * 64 + 64) + (3 * 64 * 64 + 64) + (7 * 64 * 100 + 100) + (100 * n_out + n_out)
}

#[test]
fn parameter_counts_match_closed_forms() {
    for n in [1, 6, 43] {
        let head = if n == 1 { Head::Binary } else { Head::Multiclass(n) };
        assert_eq!(init_model(Arch::Fc, head, 0).parameter_count(), fc_params(n));
        assert_eq!(init_model(Arch::Lstm, head, 0).parameter_count(), lstm_params(n));
        assert_eq!(init_model(Arch::Conv1d, head, 0).parameter_count(), conv_params(n));
    }
}

#[test]
fn fc_output_kernel_shape_for_43_devices() {
    let net = init_model(Arch::Fc, Head::Multiclass(43), 1);
    let out = net.layers().last().unwrap();
    assert_eq!(out.params[0].shape(), &[256, 43]);
    assert_eq!(out.params[1].shape(), &[43]);
}

#[test]
fn initialization_is_seeded() {
    for arch in Arch::ALL {
        let a = init_model(arch, Head::Multiclass(6), 11);
        let b = init_model(arch, Head::Multiclass(6), 11);
        let c = init_model(arch, Head::Multiclass(6), 12);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.freeze_mask().iter().all(|f| !f));
    }
}

#[test]
fn zero_weights_give_uniform_softmax_and_half_sigmoid() {
    let x = random_matrix(&mut rng(3), 5, 19);
    for arch in Arch::ALL {
        let mut net = init_model(arch, Head::Multiclass(6), 0);
        for li in 0..net.layers().len() {
            for ti in 0..net.layers()[li].params.len() {
                net.param_mut(li, ti).unwrap().fill(0.0);
            }
        }
        let p = net.forward(x.view()).unwrap();
        assert!(p.iter().all(|v| (v - 1.0 / 6.0).abs() < 1e-15));
        let (loss, _) = net.loss_and_grads(x.view(), &[0, 1, 2, 3, 5]).unwrap();
        assert!((loss - 6f64.ln()).abs() < 1e-12, "{loss}");

        let mut bin = init_model(arch, Head::Binary, 0);
        let last = bin.layers().len() - 1;
        bin.param_mut(last, 0).unwrap().fill(0.0);
        let p = bin.forward(x.view()).unwrap();
        assert_eq!(p.dim(), (5, 1));
        assert!(p.iter().all(|&v| v == 0.5));
    }
}

#[test]
fn confident_correct_prediction_has_near_zero_loss() {
    let mut net = init_model(Arch::Fc, Head::Multiclass(3), 0);
    let last = net.layers().len() - 1;
    net.param_mut(last, 0).unwrap().fill(0.0);
    let mut b = net.param_mut(last, 1).unwrap();
    b[[0]] = 0.0;
    b[[1]] = 800.0;
    b[[2]] = 0.0;
    let x = random_matrix(&mut rng(1), 2, 19);
    let (loss, _) = net.loss_and_grads(x.view(), &[1, 1]).unwrap();
    assert_eq!(loss, 0.0);
}

#[test]
fn softmax_rows_sum_to_one_and_sigmoid_in_open_interval() {
    let x = random_matrix(&mut rng(5), 40, 19) * 50.0;
    for arch in Arch::ALL {
        let p = init_model(arch, Head::Multiclass(7), 2).forward(x.view()).unwrap();
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
        let b = init_model(arch, Head::Binary, 2).forward(x.view()).unwrap();
        assert!(b.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}

#[test]
fn fc_forward_matches_straight_line_recomputation() {
    let net = init_model(Arch::Fc, Head::Multiclass(4), 8);
    let x = random_matrix(&mut rng(8), 3, 19);
    let got = net.forward(x.view()).unwrap();
    for r in 0..3 {
        let mut a: Vec<f64> = x.row(r).to_vec();
        for (li, layer) in net.layers().iter().enumerate() {
            let w = &layer.params[0];
            let b = &layer.params[1];
            let (n_in, n_out) = (w.shape()[0], w.shape()[1]);
            let mut z = vec![0.0; n_out];
            for o in 0..n_out {
                let mut s = b[[o]];
                for i in 0..n_in {
                    s += a[i] * w[[i, o]];
                }
                z[o] = if li + 1 < net.layers().len() { s.max(0.0) } else { s };
            }
            a = z;
        }
        let m = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = a.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        for c in 0..4 {
            assert!((got[[r, c]] - e[c] / s).abs() < 1e-12);
        }
    }
}

#[test]
fn shape_and_label_errors() {
    let net = init_model(Arch::Fc, Head::Multiclass(3), 0);
    let bad = Array2::<f64>::zeros((2, 18));
    assert_eq!(net.forward(bad.view()), Err(NeuralError::ShapeMismatch { expected: 19, got: 18 }));
    let x = Array2::<f64>::zeros((2, 19));
    assert!(matches!(net.loss_and_grads(x.view(), &[0, 3]), Err(NeuralError::BadLabel { .. })));
    let bin = init_model(Arch::Fc, Head::Binary, 0);
    assert!(bin.loss_and_grads(x.view(), &[0, 2]).is_err());
    let mut net = net;
    assert!(matches!(
        net.train(Array2::zeros((0, 19)).view(), &[], &TrainConfig::default()),
        Err(NeuralError::EmptyData)
    ));
}

fn narrow_lstm(head: Head, seed: u64) -> NeuralNet {
    let hidden = [6, 5, 4, 3]
        .into_iter()
        .enumerate()
        .map(|(i, units)| LayerSpec::Lstm { units, activation: Activation::Relu, return_sequences: i < 3 })
        .chain([LayerSpec::Dropout { rate: 0.2 }])
        .collect();
    NeuralNet::with_hidden_layers(Arch::Lstm, head, 19, seed, hidden).unwrap()
}

fn assert_grads(net: &NeuralNet, labels: &[usize], dropout: Option<u64>, coverage: Coverage) {
    let x = random_matrix(&mut rng(net.seed() ^ 0x77), labels.len(), 19);
    let res = finite_difference_check(net, x.view(), labels, dropout, coverage, 1e-4, 1e-6);
    assert!(res.checked > 0);
    assert!(res.failures.is_empty(), "{:?} of {} failed: {:?}", res.failures.len(), res.checked, &res.failures[..res.failures.len().min(5)]);
}

#[test]
fn fc_gradients_match_finite_differences() {
    assert_grads(&init_model(Arch::Fc, Head::Multiclass(5), 21), &[0, 4, 2, 2], None, Coverage::Every);
    assert_grads(&init_model(Arch::Fc, Head::Binary, 22), &[0, 1, 1, 0], None, Coverage::Every);
}

#[test]
fn conv_gradients_match_finite_differences() {
    assert_grads(&init_model(Arch::Conv1d, Head::Multiclass(4), 31), &[3, 0, 1, 2], None, Coverage::Every);
    assert_grads(&init_model(Arch::Conv1d, Head::Binary, 32), &[1, 0, 0, 1], Some(5), Coverage::Sample(300));
}

#[test]
fn lstm_gradients_match_finite_differences() {
    assert_grads(&narrow_lstm(Head::Multiclass(4), 41), &[1, 3, 0, 2], None, Coverage::Every);
    assert_grads(&narrow_lstm(Head::Binary, 42), &[0, 1, 1, 0], Some(9), Coverage::Every);
    assert_grads(&init_model(Arch::Lstm, Head::Multiclass(6), 43), &[5, 0, 3, 1], None, Coverage::Sample(20));
}

fn separable(n: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut r = rng(seed);
    let mut x = Array2::zeros((n, 19));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        for j in 0..19 {
            x[[i, j]] = r.random_range(-1.0..1.0);
        }
        x[[i, 3]] = if label == 1 { r.random_range(0.5..2.0) } else { r.random_range(-2.0..-0.5) };
        y.push(label);
    }
    (x, y)
}

fn accuracy_binary(net: &NeuralNet, x: &Array2<f64>, y: &[usize]) -> f64 {
    let p = net.forward(x.view()).unwrap();
    let hits = p.column(0).iter().zip(y).filter(|(p, &y)| (**p >= 0.5) == (y == 1)).count();
    hits as f64 / y.len() as f64
}

#[test]
fn fc_learns_a_separable_problem() {
    let (x, y) = separable(2000, 4);
    let mut net = init_model(Arch::Fc, Head::Binary, 4);
    net.fit_scaler(x.view());
    net.train(x.view(), &y, &TrainConfig::default()).unwrap();
    assert!(accuracy_binary(&net, &x, &y) >= 0.99);
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let (x, y) = separable(300, 6);
    for arch in Arch::ALL {
        let mut a = init_model(arch, Head::Binary, 6);
        a.fit_scaler(x.view());
        let mut b = a.clone();
        let before = a.loss(x.view(), &y).unwrap();
        let cfg = TrainConfig { batch_size: 32, seed: 3, ..TrainConfig::default() };
        let ra = a.train(x.view(), &y, &cfg).unwrap();
        let rb = b.train(x.view(), &y, &cfg).unwrap();
        assert_eq!(a, b, "{arch:?}");
        assert_eq!(ra, rb);
        let after = a.loss(x.view(), &y).unwrap();
        assert!(after <= before, "{arch:?}: {before} -> {after}");
    }
}

#[test]
fn gradient_clipping_acts_only_above_the_threshold() {
    let (x, y) = separable(128, 12);
    let run = |clip_norm| {
        let mut net = init_model(Arch::Fc, Head::Binary, 12);
        net.fit_scaler(x.view());
        net.train(x.view(), &y, &TrainConfig { epochs: 2, batch_size: 32, clip_norm, ..TrainConfig::default() }).unwrap();
        net
    };
    let plain = run(None);
    assert_eq!(run(Some(1e12)), plain);
    let clipped = run(Some(1e-3));
    assert_ne!(clipped, plain);
    assert!(clipped.loss(x.view(), &y).unwrap().is_finite());
}

#[test]
fn fully_frozen_model_is_untouched() {
    let (x, y) = separable(100, 7);
    let mut net = init_model(Arch::Conv1d, Head::Binary, 7);
    let n = net.freeze_mask().len();
    net.set_freeze_mask(&vec![true; n]).unwrap();
    let before = net.clone();
    let report = net.train(x.view(), &y, &TrainConfig::default()).unwrap();
    assert_eq!(report.steps, 0);
    assert_eq!(net, before);
}

#[test]
fn freezing_selects_leading_weighted_layers() {
    let mut fc = init_model(Arch::Fc, Head::Multiclass(6), 0);
    fc.freeze(3).unwrap();
    assert_eq!(fc.freeze_mask(), vec![true, true, true, false, false]);
    let frozen: usize = [19 * 32 + 32, 32 * 64 + 64, 64 * 128 + 128].iter().sum();
    assert_eq!(fc.trainable_parameter_count(), fc_params(6) - frozen);
    fc.freeze(0).unwrap();
    assert_eq!(fc.trainable_parameter_count(), fc_params(6));

    let mut conv = init_model(Arch::Conv1d, Head::Binary, 0);
    conv.freeze(2).unwrap();
    assert_eq!(conv.trainable_parameter_count(), conv_params(1) - (3 * 64 + 64) - (3 * 64 * 64 + 64));
    assert_eq!(conv.freeze(4), Err(NeuralError::FreezeOutOfRange { k: 4, max: 3 }));

    let mut lstm = init_model(Arch::Lstm, Head::Multiclass(6), 0);
    lstm.freeze(1).unwrap();
    assert_eq!(lstm.trainable_parameter_count(), lstm_params(6) - 4 * 200 * 202);
}

#[test]
fn frozen_tensors_survive_training_and_the_rest_move() {
    let (x, y) = separable(256, 8);
    for arch in Arch::ALL {
        for k in 0..=3 {
            let mut net = init_model(arch, Head::Binary, 8);
            net.fit_scaler(x.view());
            net.freeze(k).unwrap();
            let before = net.clone();
            let cfg = TrainConfig { epochs: 1, batch_size: 64, ..TrainConfig::default() };
            net.train(x.view(), &y, &cfg).unwrap();
            for (a, b) in before.layers().iter().zip(net.layers()) {
                if a.frozen {
                    assert_eq!(a.params, b.params, "{arch:?} k={k}");
                } else if a.spec.has_weights() {
                    assert_ne!(a.params, b.params, "{arch:?} k={k}");
                }
            }
        }
    }
}

#[test]
fn frozen_layers_get_no_gradient_entries() {
    let mut net = init_model(Arch::Lstm, Head::Binary, 1);
    net.freeze(3).unwrap();
    let x = random_matrix(&mut rng(1), 4, 19);
    let (_, g) = net.loss_and_grads(x.view(), &[0, 1, 0, 1]).unwrap();
    let present: Vec<bool> = g.per_layer.iter().map(Option::is_some).collect();
    assert_eq!(present, vec![false, false, false, true, false, true]);
}

#[test]
fn inference_is_chunk_independent() {
    let net = init_model(Arch::Conv1d, Head::Multiclass(3), 2);
    let x = random_matrix(&mut rng(2), 2500, 19);
    let all = net.forward(x.view()).unwrap();
    let part = net.forward(x.slice(ndarray::s![1024..1030, ..])).unwrap();
    assert_eq!(part, all.slice(ndarray::s![1024..1030, ..]));
    assert_eq!(all.len_of(Axis(0)), 2500);
}
