use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{gather_rows, Classifier, ModelError, N_CLASSES};
use crate::dataset::FeatureMatrix;
use crate::features::MinMaxScaler;
use crate::neural::{
    train, Activation, Checkpoint, History, LayerSpec, Loss, Network, Targets, TrainConfig, TrainData,
};

/// Hidden widths of the prediction network.
pub const HIDDEN: [usize; 6] = [256, 512, 256, 128, 64, 32];
pub const DROPOUT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NnConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for NnConfig {
    fn default() -> Self {
        Self { epochs: 2000, lr: 0.001, momentum: 0.9, batch_size: 64, seed: 0 }
    }
}

impl NnConfig {
    pub fn train_config(&self) -> TrainConfig {
        let mut c = TrainConfig::new(self.epochs, self.lr, self.seed, Loss::CrossEntropy);
        c.momentum = self.momentum;
        c.batch_size = self.batch_size;
        c
    }
}

/// Layer chain `input → 256 → 512 → 256 → 128 → 64 → 32 → 3` with ReLU on
/// every hidden layer and 50% dropout after the 512-wide one.
pub fn prediction_layers(input_dim: usize) -> Vec<LayerSpec> {
    let mut specs = Vec::with_capacity(HIDDEN.len() + 1);
    let mut prev = input_dim;
    for &h in &HIDDEN {
        let mut s = LayerSpec::new(prev, h, Activation::Relu);
        if h == 512 {
            s = s.with_dropout(DROPOUT);
        }
        specs.push(s);
        prev = h;
    }
    specs.push(LayerSpec::new(prev, N_CLASSES, Activation::None));
    specs
}

pub fn build_prediction_nn(input_dim: usize, seed: u64) -> Result<Network, ModelError> {
    if input_dim == 0 {
        return Err(ModelError::InvalidConfig("input_dim must be at least 1".into()));
    }
    Ok(Network::init(prediction_layers(input_dim), seed)?)
}

/// Prediction network with the scaler fitted on its training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionNn {
    pub config: NnConfig,
    pub scaler: MinMaxScaler,
    #[serde(serialize_with = "ser_network", deserialize_with = "de_network")]
    pub network: Network,
    pub history: History,
}

fn ser_network<S: Serializer>(net: &Network, s: S) -> Result<S::Ok, S::Error> {
    Checkpoint::from_network(net, 0, None).serialize(s)
}

fn de_network<'de, D: Deserializer<'de>>(d: D) -> Result<Network, D::Error> {
    Checkpoint::deserialize(d)?.to_network().map_err(serde::de::Error::custom)
}

impl PredictionNn {
    /// Trains on the train rows of `m`; test rows feed the loss history.
    /// Parameters are rounded to checkpoint precision afterwards.
    pub fn fit_matrix(m: &FeatureMatrix, cfg: &NnConfig) -> Result<Self, ModelError> {
        if m.split().is_none() {
            return Err(ModelError::NoSplit);
        }
        let (train_rows, test_rows) = (m.train_rows(), m.test_rows());
        if train_rows.is_empty() {
            return Err(ModelError::EmptyTrainSet);
        }
        let scaler = MinMaxScaler::fit(train_rows.iter().map(|&i| m.row(i)))?;
        let part = |rows: &[usize]| -> Result<(Vec<f64>, Targets), ModelError> {
            let (x, y) = gather_rows(m, rows);
            let mut xs = Vec::with_capacity(x.len());
            for r in x.chunks_exact(m.n_cols().max(1)) {
                xs.extend(scaler.apply(r)?);
            }
            Ok((xs, Targets::Classes(y)))
        };
        let (x_train, y_train) = part(&train_rows)?;
        let (x_test, y_test) = part(&test_rows)?;
        let data = TrainData { x_train, y_train, x_test, y_test };
        let mut network = build_prediction_nn(m.n_cols(), cfg.seed)?;
        let history = train(&mut network, &data, &cfg.train_config())?;
        let network = Checkpoint::from_network(&network, cfg.seed, None).to_network()?;
        Ok(Self { config: cfg.clone(), scaler, network, history })
    }

    fn scaled(&self, x: &[f64], n: usize) -> Vec<f64> {
        let d = self.n_features();
        let mut out = Vec::with_capacity(x.len());
        for i in 0..n {
            out.extend(self.scaler.apply(&x[i * d..(i + 1) * d]).expect("row width matches the fitted scaler"));
        }
        out
    }
}

impl Classifier for PredictionNn {
    fn n_features(&self) -> usize {
        self.scaler.dims()
    }

    fn class_scores(&self, x: &[f64]) -> [f64; N_CLASSES] {
        let p = self.network.predict_proba(&self.scaled(x, 1), 1).expect("network width matches");
        [p[0], p[1], p[2]]
    }

    fn predict_batch(&self, x: &[f64], n: usize) -> Vec<usize> {
        if n == 0 {
            return Vec::new();
        }
        self.network.predict_class(&self.scaled(x, n), n).expect("network width matches")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{param_count, Mode};

    #[test]
    fn layer_dims_and_parameter_count() {
        let net = build_prediction_nn(45, 1).unwrap();
        assert_eq!(net.dims(), vec![45, 256, 512, 256, 128, 64, 32, 3]);
        // Σ(in·out + out) over the chain.
        let by_hand = 45 * 256
            + 256
            + 256 * 512
            + 512
            + 512 * 256
            + 256
            + 256 * 128
            + 128
            + 128 * 64
            + 64
            + 64 * 32
            + 32
            + 32 * 3
            + 3;
        assert_eq!(by_hand, 318_019);
        assert_eq!(param_count(net.specs()), 318_019);
        assert_eq!(net.specs()[1].dropout_after, 0.5);
        assert!(net.specs().iter().enumerate().all(|(i, s)| i == 1 || s.dropout_after == 0.0));
    }

    #[test]
    fn eval_forward_ignores_dropout() {
        let mut net = build_prediction_nn(4, 2).unwrap();
        net.set_mode(Mode::Eval);
        let x = [0.1, 0.5, 0.9, 0.3];
        let a = net.forward(&x, 1, None).unwrap();
        let mut rng = crate::rng::SplitMix64::new(5);
        let b = net.forward(&x, 1, Some(&mut rng)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_input_rejected() {
        assert!(build_prediction_nn(0, 1).is_err());
    }
}
