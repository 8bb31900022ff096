//! A small deterministic feed-forward network engine in `f64`: dense layers
//! with optional ReLU and inverted dropout, MSE and softmax cross-entropy
//! losses, SGD with momentum, cosine annealing and a mini-batch trainer.

mod checkpoint;
mod optim;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SplitMix64;

pub use checkpoint::Checkpoint;
pub use optim::{cosine_lr, Sgd};
pub use train::{train, History, TrainConfig, TrainData};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("layer {layer} expects input {expected}, previous layer gives {got}")]
    DimMismatch { layer: usize, expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite loss at epoch {epoch}")]
    NaNLoss { epoch: usize },
    #[error("epoch {t} outside 0..={total}")]
    BadEpoch { t: usize, total: usize },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    /// Dropout probability applied to this layer's output in train mode.
    #[serde(default)]
    pub dropout_after: f64,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self { in_dim, out_dim, activation, dropout_after: 0.0 }
    }

    pub fn with_dropout(mut self, p: f64) -> Self {
        self.dropout_after = p;
        self
    }

    pub fn param_count(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }
}

/// Total number of weights and biases.
pub fn param_count(specs: &[LayerSpec]) -> usize {
    specs.iter().map(LayerSpec::param_count).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Optimizes mean squared error; reports its square root.
    Rmse,
    CrossEntropy,
}

/// Regression targets (row-major, `dim` per row) or class indices.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Values { data: Vec<f64>, dim: usize },
    Classes(Vec<usize>),
}

impl Targets {
    pub fn values(data: Vec<f64>) -> Self {
        Targets::Values { data, dim: 1 }
    }

    pub fn len(&self) -> usize {
        match self {
            Targets::Values { data, dim } => data.len() / dim.max(&1),
            Targets::Classes(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn empty_like(&self) -> Self {
        match self {
            Targets::Values { dim, .. } => Targets::Values { data: Vec::new(), dim: *dim },
            Targets::Classes(_) => Targets::Classes(Vec::new()),
        }
    }

    fn gather_into(&self, idx: &[usize], out: &mut Targets) {
        match (self, out) {
            (Targets::Values { data, dim }, Targets::Values { data: o, dim: od }) => {
                *od = *dim;
                o.clear();
                for &i in idx {
                    o.extend_from_slice(&data[i * dim..(i + 1) * dim]);
                }
            }
            (Targets::Classes(c), Targets::Classes(o)) => {
                o.clear();
                o.extend(idx.iter().map(|&i| c[i]));
            }
            _ => unreachable!("gather into a target of the same kind"),
        }
    }

    pub fn gather(&self, idx: &[usize]) -> Targets {
        let mut out = self.empty_like();
        self.gather_into(idx, &mut out);
        out
    }
}

/// Layers plus one flat parameter vector. Layer `l` stores its weights
/// row-major as `in_dim × out_dim` followed by `out_dim` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    specs: Vec<LayerSpec>,
    params: Vec<f64>,
    offsets: Vec<usize>,
    mode: Mode,
}

fn validate_specs(specs: &[LayerSpec]) -> Result<(), NeuralError> {
    if specs.is_empty() {
        return Err(NeuralError::BadConfig("network has no layers".into()));
    }
    for (l, s) in specs.iter().enumerate() {
        if s.in_dim == 0 || s.out_dim == 0 {
            return Err(NeuralError::BadConfig(format!("layer {l} has a zero dimension")));
        }
        if !(0.0..1.0).contains(&s.dropout_after) {
            return Err(NeuralError::BadConfig(format!("layer {l} dropout must be in [0, 1)")));
        }
        if l > 0 && specs[l - 1].out_dim != s.in_dim {
            return Err(NeuralError::DimMismatch { layer: l, expected: s.in_dim, got: specs[l - 1].out_dim });
        }
    }
    Ok(())
}

impl Network {
    /// Weights uniform in `±sqrt(6 / fan_in)`, biases zero.
    pub fn init(specs: Vec<LayerSpec>, seed: u64) -> Result<Self, NeuralError> {
        let mut net = Self::zeros(specs)?;
        let mut rng = SplitMix64::new(seed);
        for l in 0..net.specs.len() {
            let s = net.specs[l];
            let bound = (6.0 / s.in_dim as f64).sqrt();
            let off = net.offsets[l];
            for w in &mut net.params[off..off + s.in_dim * s.out_dim] {
                *w = rng.uniform(-bound, bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(specs: Vec<LayerSpec>) -> Result<Self, NeuralError> {
        validate_specs(&specs)?;
        let mut offsets = Vec::with_capacity(specs.len());
        let mut at = 0;
        for s in &specs {
            offsets.push(at);
            at += s.param_count();
        }
        Ok(Self { specs, params: vec![0.0; at], offsets, mode: Mode::Eval })
    }

    pub fn from_params(specs: Vec<LayerSpec>, params: Vec<f64>) -> Result<Self, NeuralError> {
        let mut net = Self::zeros(specs)?;
        if params.len() != net.params.len() {
            return Err(NeuralError::Shape(format!(
                "{} parameters for a network of {}",
                params.len(),
                net.params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(NeuralError::Shape("non-finite parameter".into()));
        }
        net.params = params;
        Ok(net)
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn in_dim(&self) -> usize {
        self.specs[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.specs.last().unwrap().out_dim
    }

    /// Layer dimensions from input to output.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.in_dim()).chain(self.specs.iter().map(|s| s.out_dim)).collect()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        let s = self.specs[layer];
        &self.params[self.offsets[layer]..self.offsets[layer] + s.in_dim * s.out_dim]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let s = self.specs[layer];
        let b = self.offsets[layer] + s.in_dim * s.out_dim;
        &self.params[b..b + s.out_dim]
    }

    fn check_input(&self, x: &[f64], n: usize) -> Result<(), NeuralError> {
        if x.len() != n * self.in_dim() {
            return Err(NeuralError::Shape(format!("{} inputs for {n} rows of width {}", x.len(), self.in_dim())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NeuralError::Shape("non-finite input".into()));
        }
        Ok(())
    }

    /// Outputs for `n` row-major inputs. Dropout is applied only in train
    /// mode and only when an RNG is supplied.
    pub fn forward(&self, x: &[f64], n: usize, rng: Option<&mut SplitMix64>) -> Result<Vec<f64>, NeuralError> {
        self.check_input(x, n)?;
        let mut ws = Workspace::default();
        ws.forward(self, x, n, self.dropout_rng(rng));
        Ok(ws.acts.pop().unwrap())
    }

    /// Eval-mode post-activation outputs of `layer` for `n` inputs.
    pub fn layer_output(&self, x: &[f64], n: usize, layer: usize) -> Result<Vec<f64>, NeuralError> {
        self.check_input(x, n)?;
        if layer >= self.specs.len() {
            return Err(NeuralError::Shape(format!("no layer {layer}")));
        }
        let mut ws = Workspace::default();
        ws.forward_until(self, x, n, None, layer + 1);
        Ok(ws.acts.swap_remove(layer + 1))
    }

    /// Eval-mode class probabilities.
    pub fn predict_proba(&self, x: &[f64], n: usize) -> Result<Vec<f64>, NeuralError> {
        let mut out = self.forward(x, n, None)?;
        for row in out.chunks_mut(self.out_dim()) {
            softmax_in_place(row);
        }
        Ok(out)
    }

    /// Eval-mode argmax class per row; ties go to the lower index.
    pub fn predict_class(&self, x: &[f64], n: usize) -> Result<Vec<usize>, NeuralError> {
        let out = self.forward(x, n, None)?;
        Ok(out.chunks(self.out_dim()).map(argmax).collect())
    }

    fn dropout_rng<'a>(&self, rng: Option<&'a mut SplitMix64>) -> Option<&'a mut SplitMix64> {
        if self.mode == Mode::Train {
            rng
        } else {
            None
        }
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

pub fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}

/// Row-major `C = op(A)·op(B) + beta·C` where `op(A)` is `m×k` and `op(B)`
/// is `k×n`. A transposed operand is stored in its untransposed shape.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, beta: f64, c: &mut [f64]) {
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the asserted lengths cover every index reached with these strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Reusable forward/backward buffers.
#[derive(Debug, Default)]
pub(crate) struct Workspace {
    /// `acts[0]` is the input; `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    /// Per-layer dropout scale (0 or `1/(1-p)`), empty when not applied.
    masks: Vec<Vec<f64>>,
    delta: Vec<f64>,
    back: Vec<f64>,
    pub(crate) grads: Vec<f64>,
}

impl Workspace {
    fn forward(&mut self, net: &Network, x: &[f64], n: usize, rng: Option<&mut SplitMix64>) {
        self.forward_until(net, x, n, rng, net.specs.len());
    }

    fn forward_until(&mut self, net: &Network, x: &[f64], n: usize, mut rng: Option<&mut SplitMix64>, layers: usize) {
        self.acts.resize_with(layers + 1, Vec::new);
        self.masks.resize_with(layers, Vec::new);
        self.acts[0].clear();
        self.acts[0].extend_from_slice(x);
        for l in 0..layers {
            let s = net.specs[l];
            let (prev, rest) = self.acts.split_at_mut(l + 1);
            let out = &mut rest[0];
            out.clear();
            out.resize(n * s.out_dim, 0.0);
            let bias = net.bias(l);
            for row in out.chunks_mut(s.out_dim) {
                row.copy_from_slice(bias);
            }
            gemm(n, s.in_dim, s.out_dim, &prev[l], false, net.weights(l), false, 1.0, out);
            if s.activation == Activation::Relu {
                for v in out.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            let mask = &mut self.masks[l];
            mask.clear();
            if let (Some(r), true) = (rng.as_deref_mut(), s.dropout_after > 0.0) {
                let keep = 1.0 / (1.0 - s.dropout_after);
                mask.extend((0..out.len()).map(|_| if r.next_f64() < s.dropout_after { 0.0 } else { keep }));
                for (v, m) in out.iter_mut().zip(mask.iter()) {
                    *v *= m;
                }
            }
        }
    }

    /// Loss of the last forward pass and, if requested, gradients of the
    /// optimized objective into `self.grads`. Returns `(value, objective)`.
    fn loss(
        &mut self,
        net: &Network,
        targets: &Targets,
        loss: Loss,
        n: usize,
        grads: bool,
    ) -> Result<(f64, f64), NeuralError> {
        let out = self.acts.last().unwrap();
        let d = net.out_dim();
        self.delta.clear();
        self.delta.resize(out.len(), 0.0);
        let (value, objective) = match (loss, targets) {
            (Loss::Rmse, Targets::Values { data, dim }) => {
                if *dim != d || data.len() != out.len() {
                    return Err(NeuralError::Shape(format!(
                        "{} targets of width {dim} for {n}×{d} outputs",
                        data.len()
                    )));
                }
                let scale = 1.0 / out.len() as f64;
                let mut mse = 0.0;
                for ((g, y), t) in self.delta.iter_mut().zip(out).zip(data) {
                    let e = y - t;
                    mse += e * e;
                    *g = 2.0 * e * scale;
                }
                mse *= scale;
                (mse.sqrt(), mse)
            }
            (Loss::CrossEntropy, Targets::Classes(labels)) => {
                if labels.len() != n {
                    return Err(NeuralError::Shape(format!("{} labels for {n} rows", labels.len())));
                }
                let scale = 1.0 / n as f64;
                let mut ce = 0.0;
                for ((row, g), &y) in out.chunks(d).zip(self.delta.chunks_mut(d)).zip(labels) {
                    if y >= d {
                        return Err(NeuralError::Shape(format!("class {y} for {d} outputs")));
                    }
                    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                    ce += lse - row[y];
                    for (gi, v) in g.iter_mut().zip(row) {
                        *gi = (v - lse).exp() * scale;
                    }
                    g[y] -= scale;
                }
                ce *= scale;
                (ce, ce)
            }
            _ => return Err(NeuralError::Shape("targets do not match the loss".into())),
        };
        if !objective.is_finite() {
            return Err(NeuralError::NaNLoss { epoch: 0 });
        }
        if grads {
            self.backward(net, n);
        }
        Ok((value, objective))
    }

    /// Backpropagates `self.delta` (gradient w.r.t. the network output).
    fn backward(&mut self, net: &Network, n: usize) {
        self.grads.clear();
        self.grads.resize(net.params.len(), 0.0);
        for l in (0..net.specs.len()).rev() {
            let s = net.specs[l];
            let out = &self.acts[l + 1];
            let mask = &self.masks[l];
            for (i, g) in self.delta.iter_mut().enumerate() {
                if !mask.is_empty() {
                    *g *= mask[i];
                }
                if s.activation == Activation::Relu && out[i] <= 0.0 {
                    *g = 0.0;
                }
            }
            let off = net.offsets[l];
            let (gw, gb) = self.grads[off..off + s.param_count()].split_at_mut(s.in_dim * s.out_dim);
            gemm(s.in_dim, n, s.out_dim, &self.acts[l], true, &self.delta, false, 0.0, gw);
            for row in self.delta.chunks(s.out_dim) {
                for (b, g) in gb.iter_mut().zip(row) {
                    *b += g;
                }
            }
            if l > 0 {
                self.back.clear();
                self.back.resize(n * s.in_dim, 0.0);
                gemm(n, s.out_dim, s.in_dim, &self.delta, false, net.weights(l), true, 0.0, &mut self.back);
                std::mem::swap(&mut self.delta, &mut self.back);
            }
        }
    }
}

/// Loss and parameter gradients for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    /// Reported loss: RMSE or mean cross-entropy.
    pub value: f64,
    /// Optimized objective (MSE for the regression loss); `grads` are its
    /// derivatives.
    pub objective: f64,
    pub grads: Vec<f64>,
}

/// Forward and backward pass over `n` rows. Dropout is applied when the
/// network is in train mode and an RNG is supplied.
pub fn loss_and_grads(
    net: &Network,
    x: &[f64],
    n: usize,
    targets: &Targets,
    loss: Loss,
    rng: Option<&mut SplitMix64>,
) -> Result<LossEval, NeuralError> {
    net.check_input(x, n)?;
    let mut ws = Workspace::default();
    ws.forward(net, x, n, net.dropout_rng(rng));
    let (value, objective) = ws.loss(net, targets, loss, n, true)?;
    if ws.grads.iter().any(|g| !g.is_finite()) {
        return Err(NeuralError::NaNLoss { epoch: 0 });
    }
    Ok(LossEval { value, objective, grads: ws.grads })
}

/// Eval-mode `(value, objective)` without gradients.
pub fn evaluate_loss(
    net: &Network,
    x: &[f64],
    n: usize,
    targets: &Targets,
    loss: Loss,
) -> Result<(f64, f64), NeuralError> {
    net.check_input(x, n)?;
    let mut ws = Workspace::default();
    ws.forward(net, x, n, None);
    ws.loss(net, targets, loss, n, false)
}
