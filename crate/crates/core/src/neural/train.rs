use serde::{Deserialize, Serialize};

use super::optim::{cosine_lr, Sgd};
use super::{Loss, Mode, Network, NeuralError, Targets, Workspace};
use crate::rng::SplitMix64;

fn default_momentum() -> f64 {
    0.9
}

fn default_batch() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_max: f64,
    #[serde(default)]
    pub lr_min: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub seed: u64,
    pub loss: Loss,
}

impl TrainConfig {
    pub fn new(epochs: usize, lr_max: f64, seed: u64, loss: Loss) -> Self {
        Self { epochs, lr_max, lr_min: 0.0, momentum: 0.9, batch_size: 64, seed, loss }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |m: &str| Err(NeuralError::BadConfig(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.lr_max.is_finite() && self.lr_max >= 0.0 && self.lr_min >= 0.0 && self.lr_min <= self.lr_max) {
            return bad("need 0 <= lr_min <= lr_max");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        Ok(())
    }
}

/// Row-major inputs with their targets; the test part may be empty.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData {
    pub x_train: Vec<f64>,
    pub y_train: Targets,
    pub x_test: Vec<f64>,
    pub y_test: Targets,
}

/// Per-epoch reported loss (RMSE or cross-entropy). Train loss averages the
/// epoch's mini-batches in train mode; test loss is an eval-mode pass after
/// the epoch.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub train: Vec<f64>,
    pub test: Vec<f64>,
}

impl History {
    pub fn final_train(&self) -> Option<f64> {
        self.train.last().copied()
    }

    pub fn final_test(&self) -> Option<f64> {
        self.test.last().copied()
    }
}

fn reported(loss: Loss, objective: f64) -> f64 {
    match loss {
        Loss::Rmse => objective.sqrt(),
        Loss::CrossEntropy => objective,
    }
}

/// Mini-batch SGD over shuffled train rows with a per-epoch cosine learning
/// rate. The run is a pure function of the network, data and config.
pub fn train(net: &mut Network, data: &TrainData, cfg: &TrainConfig) -> Result<History, NeuralError> {
    cfg.validate()?;
    let d = net.in_dim();
    let n = data.y_train.len();
    if n == 0 || data.x_train.len() != n * d {
        return Err(NeuralError::Shape(format!("{} train inputs for {n} targets of width {d}", data.x_train.len())));
    }
    let n_test = data.y_test.len();
    if data.x_test.len() != n_test * d {
        return Err(NeuralError::Shape(format!("{} test inputs for {n_test} targets", data.x_test.len())));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = SplitMix64::derive(cfg.seed, 1);
    let mut dropout_rng = SplitMix64::derive(cfg.seed, 2);
    let mut opt = Sgd::new(net.param_count(), cfg.momentum);
    let mut ws = Workspace::default();
    let mut eval_ws = Workspace::default();
    let mut xb = Vec::with_capacity(cfg.batch_size * d);
    let mut tb = data.y_train.empty_like();
    let mut history = History::default();

    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, cfg.epochs, cfg.lr_max, cfg.lr_min)?;
        shuffle_rng.shuffle(&mut order);
        net.set_mode(Mode::Train);
        let mut total = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            xb.clear();
            for &i in idx {
                xb.extend_from_slice(&data.x_train[i * d..(i + 1) * d]);
            }
            data.y_train.gather_into(idx, &mut tb);
            ws.forward(net, &xb, idx.len(), Some(&mut dropout_rng));
            let (_, obj) = ws.loss(net, &tb, cfg.loss, idx.len(), true).map_err(|e| {
                if let NeuralError::NaNLoss { .. } = e {
                    NeuralError::NaNLoss { epoch }
                } else {
                    e
                }
            })?;
            total += obj * idx.len() as f64;
            opt.step(net.params_mut(), &ws.grads, lr)?;
        }
        if net.params().iter().any(|p| !p.is_finite()) {
            return Err(NeuralError::NaNLoss { epoch });
        }
        history.train.push(reported(cfg.loss, total / n as f64));
        net.set_mode(Mode::Eval);
        if n_test > 0 {
            eval_ws.forward(net, &data.x_test, n_test, None);
            let (v, _) = eval_ws.loss(net, &data.y_test, cfg.loss, n_test, false).map_err(|e| {
                if let NeuralError::NaNLoss { .. } = e {
                    NeuralError::NaNLoss { epoch }
                } else {
                    e
                }
            })?;
            history.test.push(v);
        }
    }
    net.set_mode(Mode::Eval);
    Ok(history)
}
