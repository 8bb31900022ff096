use serde::{Deserialize, Serialize};

use super::{LayerSpec, Network, NeuralError, TrainConfig};
use crate::numfmt::round9;

/// Serializable network: specs, flattened parameters at 9 significant digits,
/// and the run that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub specs: Vec<LayerSpec>,
    pub params: Vec<f64>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<TrainConfig>,
}

impl Checkpoint {
    pub fn from_network(net: &Network, seed: u64, config: Option<TrainConfig>) -> Self {
        Self { specs: net.specs().to_vec(), params: net.params().iter().map(|p| round9(*p)).collect(), seed, config }
    }

    pub fn to_network(&self) -> Result<Network, NeuralError> {
        Network::from_params(self.specs.clone(), self.params.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{Activation, Loss};

    #[test]
    fn save_load_save_is_identical() {
        let net = Network::init(
            vec![LayerSpec::new(5, 7, Activation::Relu).with_dropout(0.5), LayerSpec::new(7, 3, Activation::None)],
            42,
        )
        .unwrap();
        let ck = Checkpoint::from_network(&net, 42, Some(TrainConfig::new(10, 0.001, 42, Loss::CrossEntropy)));
        let text = ck.to_json();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back, ck);
        let again = Checkpoint::from_network(&back.to_network().unwrap(), 42, back.config.clone());
        assert_eq!(again.to_json(), text);
    }
}
