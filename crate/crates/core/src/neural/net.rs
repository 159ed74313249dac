use ndarray::{Array2, ArrayD, ArrayView2, ArrayViewMutD, Axis, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::layers::{self, Act, Cache, Shape};
use super::{Arch, Head, LayerSpec, NeuralError, Scaler};
use crate::seed;

// Rows per inference chunk; bounds the activation memory of the LSTM.
const INFER_CHUNK: usize = 1024;

/// One layer: its architecture, parameter tensors and freeze flag.
///
/// Weighted layers hold `[kernel, bias]` (dense, conv, output) or
/// `[input kernel, recurrent kernel, bias]` (LSTM). LSTM gate blocks are
/// ordered input, forget, candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub params: Vec<ArrayD<f64>>,
    pub frozen: bool,
}

impl Layer {
    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }
}

/// Parameter gradients per layer; `None` for weightless or frozen layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub per_layer: Vec<Option<Vec<ArrayD<f64>>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralNet {
    arch: Arch,
    head: Head,
    input_dim: usize,
    seed: u64,
    layers: Vec<Layer>,
    scaler: Option<Scaler>,
}

fn glorot(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> ArrayD<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    ArrayD::from_shape_simple_fn(IxDyn(shape), || rng.random_range(-limit..limit))
}

fn input_shape(arch: Arch, input_dim: usize) -> Shape {
    if arch.sequence_input() {
        Shape::Seq(input_dim, 1)
    } else {
        Shape::Flat(input_dim)
    }
}

impl NeuralNet {
    /// Glorot-uniform kernels (including recurrent kernels), zero biases,
    /// and LSTM forget-gate biases of 1. Fully determined by `seed`.
    pub fn new(arch: Arch, head: Head, input_dim: usize, seed: u64) -> Self {
        Self::with_hidden_layers(arch, head, input_dim, seed, arch.hidden_layers())
            .expect("built-in architectures are well formed")
    }

    /// Builds a network from a custom hidden stack; the output layer is
    /// appended from `head`.
    pub fn with_hidden_layers(
        arch: Arch,
        head: Head,
        input_dim: usize,
        seed: u64,
        hidden: Vec<LayerSpec>,
    ) -> Result<Self, NeuralError> {
        let mut specs = hidden;
        specs.push(LayerSpec::Output {
            units: head.output_units(),
            activation: head.activation(),
        });
        let shapes = Self::layer_shapes(arch, input_dim, &specs)?;
        let mut rng = seed::rng(seed);
        let layers = specs
            .into_iter()
            .zip(shapes)
            .map(|(spec, shape)| {
                let params = spec
                    .param_shapes(shape)
                    .into_iter()
                    .enumerate()
                    .map(|(i, dims)| match (spec, i) {
                        (LayerSpec::Conv1d { kernel, filters, .. }, 0) => {
                            let c = dims[0] / kernel;
                            glorot(&mut rng, &dims, kernel * c, kernel * filters)
                        }
                        (LayerSpec::Lstm { units, .. }, 2) => {
                            let mut b = ArrayD::zeros(IxDyn(&dims));
                            for j in units..2 * units {
                                b[[j]] = 1.0;
                            }
                            b
                        }
                        (_, _) if dims.len() == 2 => glorot(&mut rng, &dims, dims[0], dims[1]),
                        _ => ArrayD::zeros(IxDyn(&dims)),
                    })
                    .collect();
                Layer { spec, params, frozen: false }
            })
            .collect();
        Ok(NeuralNet { arch, head, input_dim, seed, layers, scaler: None })
    }

    /// Reassembles a network from stored parts, validating every tensor
    /// shape against the layer stack.
    pub fn from_parts(
        arch: Arch,
        head: Head,
        input_dim: usize,
        seed: u64,
        layers: Vec<Layer>,
        scaler: Option<Scaler>,
    ) -> Result<Self, NeuralError> {
        let specs: Vec<LayerSpec> = layers.iter().map(|l| l.spec).collect();
        match specs.last() {
            Some(LayerSpec::Output { units, .. }) if *units == head.output_units() => {}
            _ => return Err(NeuralError::Invalid("last layer must be the head's output".into())),
        }
        if specs[..specs.len() - 1].iter().any(|s| matches!(s, LayerSpec::Output { .. })) {
            return Err(NeuralError::Invalid("output layer must be last".into()));
        }
        let shapes = Self::layer_shapes(arch, input_dim, &specs)?;
        for (layer, shape) in layers.iter().zip(shapes) {
            let want = layer.spec.param_shapes(shape);
            let got: Vec<&[usize]> = layer.params.iter().map(|p| p.shape()).collect();
            if want.len() != got.len() || want.iter().zip(&got).any(|(w, g)| w.as_slice() != *g) {
                return Err(NeuralError::Invalid(format!("tensor shapes {got:?} do not fit {:?}", layer.spec)));
            }
            if layer.frozen && !layer.spec.has_weights() {
                return Err(NeuralError::Invalid("only weighted layers can be frozen".into()));
            }
            if layer.params.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
                return Err(NeuralError::Invalid("non-finite weight".into()));
            }
        }
        if let Some(s) = &scaler {
            if s.mean.len() != input_dim || s.std.len() != input_dim {
                return Err(NeuralError::Invalid("scaler width differs from input".into()));
            }
        }
        Ok(NeuralNet { arch, head, input_dim, seed, layers, scaler })
    }

    /// Input shape of every layer, checking the stack is consistent.
    fn layer_shapes(arch: Arch, input_dim: usize, specs: &[LayerSpec]) -> Result<Vec<Shape>, NeuralError> {
        let mut shape = input_shape(arch, input_dim);
        let mut out = Vec::with_capacity(specs.len());
        for spec in specs {
            out.push(shape);
            shape = spec
                .output_shape(shape)
                .ok_or_else(|| NeuralError::Invalid(format!("{spec:?} cannot follow {shape:?}")))?;
        }
        match shape {
            Shape::Flat(_) => Ok(out),
            Shape::Seq(..) => Err(NeuralError::Invalid("network must end flat".into())),
        }
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable view of one parameter tensor. Shapes cannot change through it.
    pub fn param_mut(&mut self, layer: usize, tensor: usize) -> Option<ArrayViewMutD<'_, f64>> {
        self.layers.get_mut(layer)?.params.get_mut(tensor).map(|t| t.view_mut())
    }

    pub fn scaler(&self) -> Option<&Scaler> {
        self.scaler.as_ref()
    }

    /// Fits input standardization on `x`. Call once, on the window the model
    /// is first trained on; retraining keeps it.
    pub fn fit_scaler(&mut self, x: ArrayView2<f64>) {
        self.scaler = Some(Scaler::fit(x));
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Layer::parameter_count).sum()
    }

    pub fn trainable_parameter_count(&self) -> usize {
        self.layers.iter().filter(|l| !l.frozen).map(Layer::parameter_count).sum()
    }

    /// Indices of layers that carry weights, in forward order.
    pub fn weighted_layers(&self) -> Vec<usize> {
        (0..self.layers.len()).filter(|&i| self.layers[i].spec.has_weights()).collect()
    }

    /// Freeze flag of each weighted layer, in forward order.
    pub fn freeze_mask(&self) -> Vec<bool> {
        self.weighted_layers().into_iter().map(|i| self.layers[i].frozen).collect()
    }

    pub fn set_freeze_mask(&mut self, mask: &[bool]) -> Result<(), NeuralError> {
        let weighted = self.weighted_layers();
        if mask.len() != weighted.len() {
            return Err(NeuralError::Invalid(format!(
                "freeze mask has {} entries for {} weighted layers",
                mask.len(),
                weighted.len()
            )));
        }
        for (i, &f) in weighted.into_iter().zip(mask) {
            self.layers[i].frozen = f;
        }
        Ok(())
    }

    /// Freezes the first `k` weighted layers and unfreezes the rest.
    /// `k` ranges over `0..=3`, bounded by the number of weighted hidden
    /// layers.
    pub fn freeze(&mut self, k: usize) -> Result<(), NeuralError> {
        let hidden = self.weighted_layers().len() - 1;
        let max = hidden.min(3);
        if k > max {
            return Err(NeuralError::FreezeOutOfRange { k, max });
        }
        let mask: Vec<bool> = (0..=hidden).map(|i| i < k).collect();
        self.set_freeze_mask(&mask)
    }

    pub(crate) fn prepare(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NeuralError> {
        if x.ncols() != self.input_dim {
            return Err(NeuralError::ShapeMismatch {
                expected: self.input_dim,
                got: x.ncols(),
            });
        }
        Ok(match &self.scaler {
            Some(s) => s.transform(x),
            None => x.to_owned(),
        })
    }

    fn to_act(&self, x: Array2<f64>) -> Act {
        if self.arch.sequence_input() {
            let (n, d) = x.dim();
            Act::Seq(x.into_shape_with_order((n, d, 1)).expect("sequence view"))
        } else {
            Act::Flat(x)
        }
    }

    fn logits(&self, x: Array2<f64>) -> Array2<f64> {
        let mut act = self.to_act(x);
        for layer in &self.layers {
            act = layers::forward(&layer.spec, &layer.params, act, None, false).0;
        }
        match act {
            Act::Flat(a) => a,
            Act::Seq(_) => unreachable!("networks end flat"),
        }
    }

    fn activate_head(&self, mut logits: Array2<f64>) -> Array2<f64> {
        match self.head {
            Head::Multiclass(_) => {
                for mut row in logits.rows_mut() {
                    let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    row.mapv_inplace(|z| (z - m).exp());
                    let s = row.sum();
                    row /= s;
                }
            }
            Head::Binary => logits.mapv_inplace(layers::sigmoid),
        }
        logits
    }

    /// Inference: class probabilities `(n, classes)` for a multiclass head,
    /// positive-class probabilities `(n, 1)` for a binary head. Dropout is
    /// inactive.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NeuralError> {
        let x = self.prepare(x)?;
        let mut out = Array2::zeros((x.nrows(), self.head.output_units()));
        for (i, chunk) in x.axis_chunks_iter(Axis(0), INFER_CHUNK).enumerate() {
            let probs = self.activate_head(self.logits(chunk.to_owned()));
            out.slice_mut(ndarray::s![i * INFER_CHUNK..i * INFER_CHUNK + chunk.nrows(), ..])
                .assign(&probs);
        }
        Ok(out)
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NeuralError> {
        self.forward(x)
    }

    fn check_labels(&self, rows: usize, labels: &[usize]) -> Result<(), NeuralError> {
        if rows != labels.len() {
            return Err(NeuralError::LabelCount { rows, labels: labels.len() });
        }
        labels.iter().try_for_each(|&l| self.head.check_label(l))
    }

    /// Mean loss over the batch and gradients of every trainable tensor,
    /// with dropout inactive.
    pub fn loss_and_grads(&self, x: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Gradients), NeuralError> {
        self.check_labels(x.nrows(), labels)?;
        let x = self.prepare(x)?;
        Ok(self.loss_and_grads_prepared(x, labels, None))
    }

    /// As [`NeuralNet::loss_and_grads`] but with dropout masks drawn from
    /// `mask_seed`; the same seed yields the same masks.
    pub fn loss_and_grads_with_dropout(
        &self,
        x: ArrayView2<f64>,
        labels: &[usize],
        mask_seed: u64,
    ) -> Result<(f64, Gradients), NeuralError> {
        self.check_labels(x.nrows(), labels)?;
        let x = self.prepare(x)?;
        let mut rng = seed::rng(mask_seed);
        Ok(self.loss_and_grads_prepared(x, labels, Some(&mut rng)))
    }

    pub fn loss(&self, x: ArrayView2<f64>, labels: &[usize]) -> Result<f64, NeuralError> {
        self.check_labels(x.nrows(), labels)?;
        let x = self.prepare(x)?;
        let mut total = 0.0;
        for (i, chunk) in x.axis_chunks_iter(Axis(0), INFER_CHUNK).enumerate() {
            let lab = &labels[i * INFER_CHUNK..i * INFER_CHUNK + chunk.nrows()];
            let (l, _) = self.head_loss(&self.logits(chunk.to_owned()), lab);
            total += l * chunk.nrows() as f64;
        }
        Ok(total / x.nrows().max(1) as f64)
    }

    /// Mean loss and its gradient w.r.t. the logits.
    fn head_loss(&self, logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
        let n = logits.nrows() as f64;
        let mut grad = logits.clone();
        let mut loss = 0.0;
        match self.head {
            Head::Multiclass(_) => {
                for (mut row, &y) in grad.rows_mut().into_iter().zip(labels) {
                    let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    let lse = m + row.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
                    loss += lse - row[y];
                    row.mapv_inplace(|z| (z - lse).exp() / n);
                    row[y] -= 1.0 / n;
                }
            }
            Head::Binary => {
                for (g, &y) in grad.iter_mut().zip(labels) {
                    let z = *g;
                    let y = y as f64;
                    loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
                    *g = (layers::sigmoid(z) - y) / n;
                }
            }
        }
        (loss / n, grad)
    }

    pub(crate) fn loss_and_grads_prepared(
        &self,
        x: Array2<f64>,
        labels: &[usize],
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> (f64, Gradients) {
        let lowest = self
            .layers
            .iter()
            .position(|l| l.spec.has_weights() && !l.frozen);
        let keep_from = lowest.unwrap_or(self.layers.len());

        let mut act = self.to_act(x);
        let mut caches: Vec<Option<Cache>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let (next, cache) = layers::forward(&layer.spec, &layer.params, act, dropout.as_deref_mut(), i >= keep_from);
            act = next;
            caches.push(cache);
        }
        let logits = match act {
            Act::Flat(a) => a,
            Act::Seq(_) => unreachable!("networks end flat"),
        };
        let (loss, dlogits) = self.head_loss(&logits, labels);

        let mut per_layer: Vec<Option<Vec<ArrayD<f64>>>> = vec![None; self.layers.len()];
        if let Some(lowest) = lowest {
            let mut grad = Act::Flat(dlogits);
            for i in (lowest..self.layers.len()).rev() {
                let layer = &self.layers[i];
                let trainable = layer.spec.has_weights() && !layer.frozen;
                let cache = caches[i].as_ref().expect("cached above the lowest trainable layer");
                let (dx, pg) = layers::backward(&layer.spec, &layer.params, cache, grad, i > lowest, trainable);
                if trainable {
                    per_layer[i] = Some(pg);
                }
                match dx {
                    Some(g) => grad = g,
                    None => break,
                }
            }
        }
        (loss, Gradients { per_layer })
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }
}
