use super::NeuralError;

/// Cosine-annealed learning rate at epoch `t` of `total`.
pub fn cosine_lr(t: usize, total: usize, lr_max: f64, lr_min: f64) -> Result<f64, NeuralError> {
    if t > total || total == 0 {
        return Err(NeuralError::BadEpoch { t, total });
    }
    let c = (std::f64::consts::PI * t as f64 / total as f64).cos();
    Ok(lr_min + 0.5 * (lr_max - lr_min) * (1.0 + c))
}

/// SGD with classical momentum: `v ← μ·v + g`, `θ ← θ − lr·v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    pub momentum: f64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(n_params: usize, momentum: f64) -> Self {
        Self { momentum, velocity: vec![0.0; n_params] }
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<(), NeuralError> {
        if params.len() != self.velocity.len() || grads.len() != self.velocity.len() {
            return Err(NeuralError::Shape(format!(
                "{} params and {} grads for {} velocities",
                params.len(),
                grads.len(),
                self.velocity.len()
            )));
        }
        for ((p, v), g) in params.iter_mut().zip(&mut self.velocity).zip(grads) {
            *v = self.momentum * *v + g;
            *p -= lr * *v;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        assert_eq!(cosine_lr(0, 100, 0.1, 0.0).unwrap(), 0.1);
        assert!((cosine_lr(100, 100, 0.1, 0.01).unwrap() - 0.01).abs() < 1e-12);
        assert!((cosine_lr(50, 100, 0.1, 0.0).unwrap() - 0.05).abs() < 1e-12);
        assert!(cosine_lr(101, 100, 0.1, 0.0).is_err());
    }

    #[test]
    fn two_momentum_steps() {
        let mut opt = Sgd::new(1, 0.9);
        let mut p = [0.0];
        opt.step(&mut p, &[1.0], 1.0).unwrap();
        opt.step(&mut p, &[1.0], 1.0).unwrap();
        assert_eq!(p[0], -(1.0 + 1.9));
    }

    #[test]
    fn zero_momentum_is_gradient_descent() {
        let mut opt = Sgd::new(2, 0.0);
        let mut p = [1.0, 2.0];
        opt.step(&mut p, &[0.5, -1.0], 0.1).unwrap();
        assert_eq!(p, [1.0 - 0.05, 2.0 + 0.1]);
        let mut opt = Sgd::new(2, 0.9);
        opt.step(&mut p, &[0.0, 0.0], 0.1).unwrap();
        assert_eq!(p, [1.0 - 0.05, 2.0 + 0.1]);
    }
}
