//! Forward and backward kernels for each layer kind.
//!
//! Activations travel either flat `(batch, features)` or as sequences
//! `(batch, time, channels)`. Every kernel keeps whatever its backward pass
//! needs in a [`Cache`].

use ndarray::{s, Array1, Array2, Array3, ArrayD, ArrayView1, ArrayView2, Axis, Ix1, Ix2, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Softmax,
    None,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::None | Activation::Softmax => z,
        }
    }

    /// Derivative expressed through the activation's output `a`.
    #[inline]
    fn grad_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::None | Activation::Softmax => 1.0,
        }
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Architecture of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Dense {
        units: usize,
        activation: Activation,
    },
    Lstm {
        units: usize,
        /// Cell and candidate activation; gates are always sigmoid.
        activation: Activation,
        return_sequences: bool,
    },
    Conv1d {
        filters: usize,
        kernel: usize,
        activation: Activation,
    },
    Dropout {
        rate: f64,
    },
    Maxpool1d {
        pool: usize,
    },
    Flatten,
    /// Final linear layer; the head's softmax or sigmoid is applied by the
    /// network.
    Output {
        units: usize,
        activation: Activation,
    },
}

impl LayerSpec {
    pub fn has_weights(&self) -> bool {
        matches!(
            self,
            LayerSpec::Dense { .. } | LayerSpec::Lstm { .. } | LayerSpec::Conv1d { .. } | LayerSpec::Output { .. }
        )
    }

    /// Parameter tensor shapes given the shape of the incoming activation.
    pub(crate) fn param_shapes(&self, input: Shape) -> Vec<Vec<usize>> {
        match (*self, input) {
            (LayerSpec::Dense { units, .. } | LayerSpec::Output { units, .. }, Shape::Flat(d)) => {
                vec![vec![d, units], vec![units]]
            }
            (LayerSpec::Lstm { units, .. }, Shape::Seq(_, d)) => {
                vec![vec![d, 4 * units], vec![units, 4 * units], vec![4 * units]]
            }
            (LayerSpec::Conv1d { filters, kernel, .. }, Shape::Seq(_, c)) => {
                vec![vec![kernel * c, filters], vec![filters]]
            }
            _ => Vec::new(),
        }
    }

    /// Shape of the outgoing activation, or `None` if `input` cannot feed
    /// this layer.
    pub(crate) fn output_shape(&self, input: Shape) -> Option<Shape> {
        match (*self, input) {
            (LayerSpec::Dense { units, .. } | LayerSpec::Output { units, .. }, Shape::Flat(_)) => {
                Some(Shape::Flat(units))
            }
            (LayerSpec::Lstm { units, return_sequences, .. }, Shape::Seq(t, _)) => Some(if return_sequences {
                Shape::Seq(t, units)
            } else {
                Shape::Flat(units)
            }),
            (LayerSpec::Conv1d { filters, kernel, .. }, Shape::Seq(t, _)) if t >= kernel && kernel > 0 => {
                Some(Shape::Seq(t - kernel + 1, filters))
            }
            (LayerSpec::Dropout { .. }, s) => Some(s),
            (LayerSpec::Maxpool1d { pool }, Shape::Seq(t, c)) if pool > 0 && t >= pool => {
                Some(Shape::Seq(t / pool, c))
            }
            (LayerSpec::Flatten, Shape::Seq(t, c)) => Some(Shape::Flat(t * c)),
            _ => None,
        }
    }
}

/// Per-sample activation shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Shape {
    Flat(usize),
    Seq(usize, usize),
}

#[derive(Debug, Clone)]
pub(crate) enum Act {
    Flat(Array2<f64>),
    Seq(Array3<f64>),
}

impl Act {
    fn flat(self) -> Array2<f64> {
        match self {
            Act::Flat(a) => a,
            Act::Seq(_) => unreachable!("shape checked at construction"),
        }
    }

    fn seq(self) -> Array3<f64> {
        match self {
            Act::Seq(a) => a,
            Act::Flat(_) => unreachable!("shape checked at construction"),
        }
    }
}

pub(crate) enum Cache {
    Dense {
        x: Array2<f64>,
        a: Array2<f64>,
    },
    Lstm {
        x: Array3<f64>,
        /// Post-activation gates `[i, f, g, o]`, laid out `(time, batch, 4h)`.
        gates: Array3<f64>,
        /// Cell states, `(time + 1, batch, h)`; index 0 is the zero state.
        cells: Array3<f64>,
        /// `act(c_t)`, `(time, batch, h)`.
        cell_act: Array3<f64>,
        /// Hidden states, `(time + 1, batch, h)`; index 0 is the zero state.
        hidden: Array3<f64>,
    },
    Conv {
        cols: Array2<f64>,
        a: Array2<f64>,
        in_shape: (usize, usize, usize),
    },
    Dropout {
        mask: Option<ArrayD<f64>>,
    },
    Pool {
        argmax: Array3<usize>,
        in_len: usize,
    },
    Flatten {
        t: usize,
        c: usize,
    },
}

fn view2(t: &ArrayD<f64>) -> ArrayView2<'_, f64> {
    t.view().into_dimensionality::<Ix2>().expect("rank-2 tensor")
}

fn view1(t: &ArrayD<f64>) -> ArrayView1<'_, f64> {
    t.view().into_dimensionality::<Ix1>().expect("rank-1 tensor")
}

/// Runs one layer. `dropout_rng` is `Some` only in training mode.
pub(crate) fn forward(
    spec: &LayerSpec,
    params: &[ArrayD<f64>],
    input: Act,
    dropout_rng: Option<&mut ChaCha8Rng>,
    keep_cache: bool,
) -> (Act, Option<Cache>) {
    match *spec {
        LayerSpec::Dense { activation, .. } | LayerSpec::Output { activation, .. } => {
            let x = input.flat();
            let mut a = x.dot(&view2(&params[0]));
            a += &view1(&params[1]);
            if !matches!(spec, LayerSpec::Output { .. }) {
                a.mapv_inplace(|z| activation.apply(z));
            }
            let cache = keep_cache.then(|| Cache::Dense { x, a: a.clone() });
            (Act::Flat(a), cache)
        }
        LayerSpec::Lstm { units, activation, return_sequences } => {
            lstm_forward(units, activation, return_sequences, params, input.seq(), keep_cache)
        }
        LayerSpec::Conv1d { filters, kernel, activation } => {
            let x = input.seq();
            let (n, t, c) = x.dim();
            let t_out = t - kernel + 1;
            let x = x.as_standard_layout().into_owned();
            let flat = x.as_slice().expect("standard layout");
            let width = kernel * c;
            let mut cols = Array2::<f64>::zeros((n * t_out, width));
            for b in 0..n {
                for s in 0..t_out {
                    let start = (b * t + s) * c;
                    cols.row_mut(b * t_out + s)
                        .as_slice_mut()
                        .expect("row-major")
                        .copy_from_slice(&flat[start..start + width]);
                }
            }
            let mut a = cols.dot(&view2(&params[0]));
            a += &view1(&params[1]);
            a.mapv_inplace(|z| activation.apply(z));
            let out = a.clone().into_shape_with_order((n, t_out, filters)).expect("conv output shape");
            let cache = keep_cache.then(|| Cache::Conv { cols, a, in_shape: (n, t, c) });
            (Act::Seq(out), cache)
        }
        LayerSpec::Dropout { rate } => match dropout_rng {
            Some(rng) if rate > 0.0 => {
                let keep = 1.0 - rate;
                let (out, mask) = match input {
                    Act::Flat(x) => {
                        let mask = x.mapv(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 });
                        (Act::Flat(&x * &mask), mask.into_dyn())
                    }
                    Act::Seq(x) => {
                        let mask = x.mapv(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 });
                        (Act::Seq(&x * &mask), mask.into_dyn())
                    }
                };
                (out, keep_cache.then_some(Cache::Dropout { mask: Some(mask) }))
            }
            _ => (input, keep_cache.then_some(Cache::Dropout { mask: None })),
        },
        LayerSpec::Maxpool1d { pool } => {
            let x = input.seq();
            let (n, t, c) = x.dim();
            let t_out = t / pool;
            let mut out = Array3::<f64>::zeros((n, t_out, c));
            let mut argmax = Array3::<usize>::zeros((n, t_out, c));
            for b in 0..n {
                for s in 0..t_out {
                    for ch in 0..c {
                        let mut best = s * pool;
                        for j in s * pool + 1..(s + 1) * pool {
                            if x[[b, j, ch]] > x[[b, best, ch]] {
                                best = j;
                            }
                        }
                        out[[b, s, ch]] = x[[b, best, ch]];
                        argmax[[b, s, ch]] = best;
                    }
                }
            }
            (Act::Seq(out), keep_cache.then_some(Cache::Pool { argmax, in_len: t }))
        }
        LayerSpec::Flatten => {
            let x = input.seq();
            let (n, t, c) = x.dim();
            let flat = x
                .as_standard_layout()
                .into_owned()
                .into_shape_with_order((n, t * c))
                .expect("flatten");
            (Act::Flat(flat), keep_cache.then_some(Cache::Flatten { t, c }))
        }
    }
}

/// Backpropagates `grad` (w.r.t. this layer's output) through one layer.
///
/// Returns the gradient w.r.t. the layer input when `need_input_grad`, and
/// parameter gradients when `need_param_grads`.
pub(crate) fn backward(
    spec: &LayerSpec,
    params: &[ArrayD<f64>],
    cache: &Cache,
    grad: Act,
    need_input_grad: bool,
    need_param_grads: bool,
) -> (Option<Act>, Vec<ArrayD<f64>>) {
    match (*spec, cache) {
        (LayerSpec::Dense { activation, .. }, Cache::Dense { x, a })
        | (LayerSpec::Output { activation, .. }, Cache::Dense { x, a }) => {
            let mut dz = grad.flat();
            if matches!(spec, LayerSpec::Dense { .. }) {
                Zip::from(&mut dz).and(a).for_each(|d, &a| *d *= activation.grad_from_output(a));
            }
            let pg = if need_param_grads {
                vec![x.t().dot(&dz).into_dyn(), dz.sum_axis(Axis(0)).into_dyn()]
            } else {
                Vec::new()
            };
            let dx = need_input_grad.then(|| Act::Flat(dz.dot(&view2(&params[0]).t())));
            (dx, pg)
        }
        (LayerSpec::Lstm { units, activation, return_sequences }, Cache::Lstm { x, gates, cells, cell_act, hidden }) => {
            lstm_backward(
                units,
                activation,
                return_sequences,
                params,
                (x, gates, cells, cell_act, hidden),
                grad,
                need_input_grad,
                need_param_grads,
            )
        }
        (LayerSpec::Conv1d { filters, kernel, activation }, Cache::Conv { cols, a, in_shape }) => {
            let (n, t, c) = *in_shape;
            let t_out = t - kernel + 1;
            let mut dz = grad
                .seq()
                .as_standard_layout()
                .into_owned()
                .into_shape_with_order((n * t_out, filters))
                .expect("conv grad shape");
            Zip::from(&mut dz).and(a).for_each(|d, &a| *d *= activation.grad_from_output(a));
            let pg = if need_param_grads {
                vec![cols.t().dot(&dz).into_dyn(), dz.sum_axis(Axis(0)).into_dyn()]
            } else {
                Vec::new()
            };
            let dx = need_input_grad.then(|| {
                let dcols = dz.dot(&view2(&params[0]).t());
                let width = kernel * c;
                let mut dx = Array3::<f64>::zeros((n, t, c));
                let out = dx.as_slice_mut().expect("standard layout");
                for b in 0..n {
                    for s in 0..t_out {
                        let start = (b * t + s) * c;
                        let row = dcols.row(b * t_out + s);
                        for (o, g) in out[start..start + width].iter_mut().zip(row.iter()) {
                            *o += g;
                        }
                    }
                }
                Act::Seq(dx)
            });
            (dx, pg)
        }
        (LayerSpec::Dropout { .. }, Cache::Dropout { mask }) => {
            let dx = need_input_grad.then(|| match (grad, mask) {
                (g, None) => g,
                (Act::Flat(g), Some(m)) => Act::Flat(&g * &m.view().into_dimensionality::<Ix2>().expect("mask")),
                (Act::Seq(g), Some(m)) => Act::Seq(&g * &m.view().into_dimensionality::<ndarray::Ix3>().expect("mask")),
            });
            (dx, Vec::new())
        }
        (LayerSpec::Maxpool1d { .. }, Cache::Pool { argmax, in_len }) => {
            let dx = need_input_grad.then(|| {
                let g = grad.seq();
                let (n, t_out, c) = g.dim();
                let mut dx = Array3::<f64>::zeros((n, *in_len, c));
                for b in 0..n {
                    for s in 0..t_out {
                        for ch in 0..c {
                            dx[[b, argmax[[b, s, ch]], ch]] += g[[b, s, ch]];
                        }
                    }
                }
                Act::Seq(dx)
            });
            (dx, Vec::new())
        }
        (LayerSpec::Flatten, Cache::Flatten { t, c }) => {
            let dx = need_input_grad.then(|| {
                let g = grad.flat();
                let n = g.nrows();
                Act::Seq(g.as_standard_layout().into_owned().into_shape_with_order((n, *t, *c)).expect("unflatten"))
            });
            (dx, Vec::new())
        }
        _ => unreachable!("cache kind always matches its layer"),
    }
}

fn lstm_forward(
    h: usize,
    activation: Activation,
    return_sequences: bool,
    params: &[ArrayD<f64>],
    x: Array3<f64>,
    keep_cache: bool,
) -> (Act, Option<Cache>) {
    let (n, t_len, d) = x.dim();
    let x = x.as_standard_layout().into_owned();
    let wx = view2(&params[0]);
    let wh = view2(&params[1]);
    let bias = view1(&params[2]);
    let x2 = x.view().into_shape_with_order((n * t_len, d)).expect("lstm input");
    let mut xz = x2.dot(&wx).into_shape_with_order((n, t_len, 4 * h)).expect("lstm preact");
    xz += &bias;

    let mut gates = Array3::<f64>::zeros((if keep_cache { t_len } else { 0 }, n, 4 * h));
    let mut cells = Array3::<f64>::zeros((t_len + 1, n, h));
    let mut cell_act = Array3::<f64>::zeros((if keep_cache { t_len } else { 0 }, n, h));
    let mut hidden = Array3::<f64>::zeros((t_len + 1, n, h));

    let mut z = Array2::<f64>::zeros((n, 4 * h));
    for t in 0..t_len {
        z.assign(&xz.slice(s![.., t, ..]));
        if t > 0 {
            ndarray::linalg::general_mat_mul(1.0, &hidden.index_axis(Axis(0), t), &wh, 1.0, &mut z);
        }
        let (c_prev, mut c_next) = {
            let (a, b) = cells.view_mut().split_at(Axis(0), t + 1);
            (a.index_axis_move(Axis(0), t), b.index_axis_move(Axis(0), 0))
        };
        let mut h_next = hidden.index_axis_mut(Axis(0), t + 1);
        for b in 0..n {
            let zr = z.row_mut(b).into_slice().expect("row-major");
            for j in 0..h {
                let i_g = sigmoid(zr[j]);
                let f_g = sigmoid(zr[h + j]);
                let g_g = activation.apply(zr[2 * h + j]);
                let o_g = sigmoid(zr[3 * h + j]);
                let c = f_g * c_prev[[b, j]] + i_g * g_g;
                let ac = activation.apply(c);
                c_next[[b, j]] = c;
                h_next[[b, j]] = o_g * ac;
                zr[j] = i_g;
                zr[h + j] = f_g;
                zr[2 * h + j] = g_g;
                zr[3 * h + j] = o_g;
                if keep_cache {
                    cell_act[[t, b, j]] = ac;
                }
            }
        }
        if keep_cache {
            gates.index_axis_mut(Axis(0), t).assign(&z);
        }
    }

    let out = if return_sequences {
        let mut seq = Array3::<f64>::zeros((n, t_len, h));
        for t in 0..t_len {
            seq.slice_mut(s![.., t, ..]).assign(&hidden.index_axis(Axis(0), t + 1));
        }
        Act::Seq(seq)
    } else {
        Act::Flat(hidden.index_axis(Axis(0), t_len).to_owned())
    };
    let cache = keep_cache.then(|| Cache::Lstm { x, gates, cells, cell_act, hidden });
    (out, cache)
}

#[allow(clippy::too_many_arguments)]
fn lstm_backward(
    h: usize,
    activation: Activation,
    return_sequences: bool,
    params: &[ArrayD<f64>],
    (x, gates, cells, cell_act, hidden): (&Array3<f64>, &Array3<f64>, &Array3<f64>, &Array3<f64>, &Array3<f64>),
    grad: Act,
    need_input_grad: bool,
    need_param_grads: bool,
) -> (Option<Act>, Vec<ArrayD<f64>>) {
    let (n, t_len, d) = x.dim();
    let wx = view2(&params[0]);
    let wh = view2(&params[1]);
    let (grad_seq, grad_last) = match grad {
        Act::Seq(g) if return_sequences => (Some(g), None),
        Act::Flat(g) if !return_sequences => (None, Some(g)),
        _ => unreachable!("shape checked at construction"),
    };

    let mut dh_next = Array2::<f64>::zeros((n, h));
    let mut dc_next = Array2::<f64>::zeros((n, h));
    let mut dwh = Array2::<f64>::zeros((h, 4 * h));
    let mut dxz = Array3::<f64>::zeros((n, t_len, 4 * h));
    let mut dz = Array2::<f64>::zeros((n, 4 * h));
    for t in (0..t_len).rev() {
        let mut dh = dh_next;
        if let Some(g) = &grad_seq {
            dh += &g.slice(s![.., t, ..]);
        } else if t + 1 == t_len {
            dh += grad_last.as_ref().expect("final-step gradient");
        }
        let gt = gates.index_axis(Axis(0), t);
        let c_prev = cells.index_axis(Axis(0), t);
        let c_now = cells.index_axis(Axis(0), t + 1);
        let act_c = cell_act.index_axis(Axis(0), t);
        for b in 0..n {
            let gr = gt.row(b);
            let dzr = dz.row_mut(b).into_slice().expect("row-major");
            for j in 0..h {
                let (i_g, f_g, g_g, o_g) = (gr[j], gr[h + j], gr[2 * h + j], gr[3 * h + j]);
                let dhj = dh[[b, j]];
                let ac = act_c[[b, j]];
                let d_o = dhj * ac;
                let dact = match activation {
                    Activation::Relu => {
                        if c_now[[b, j]] > 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    other => other.grad_from_output(ac),
                };
                let dc = dhj * o_g * dact + dc_next[[b, j]];
                dzr[j] = dc * g_g * i_g * (1.0 - i_g);
                dzr[h + j] = dc * c_prev[[b, j]] * f_g * (1.0 - f_g);
                dzr[2 * h + j] = dc * i_g * activation.grad_from_output(g_g);
                dzr[3 * h + j] = d_o * o_g * (1.0 - o_g);
                dc_next[[b, j]] = dc * f_g;
            }
        }
        if t > 0 {
            if need_param_grads {
                ndarray::linalg::general_mat_mul(1.0, &hidden.index_axis(Axis(0), t).t(), &dz, 1.0, &mut dwh);
            }
            dh_next = dz.dot(&wh.t());
        } else {
            dh_next = Array2::zeros((0, 0));
        }
        dxz.slice_mut(s![.., t, ..]).assign(&dz);
    }

    let dxz2 = dxz.into_shape_with_order((n * t_len, 4 * h)).expect("lstm grad");
    let pg = if need_param_grads {
        let x2 = x.view().into_shape_with_order((n * t_len, d)).expect("lstm input");
        let db: Array1<f64> = dxz2.sum_axis(Axis(0));
        vec![x2.t().dot(&dxz2).into_dyn(), dwh.into_dyn(), db.into_dyn()]
    } else {
        Vec::new()
    };
    let dx = need_input_grad.then(|| {
        Act::Seq(
            dxz2.dot(&wx.t())
                .into_shape_with_order((n, t_len, d))
                .expect("lstm input grad"),
        )
    });
    (dx, pg)
}
