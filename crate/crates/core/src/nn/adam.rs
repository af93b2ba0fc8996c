use serde::{Deserialize, Serialize};

use super::{GradientTape, Mlp, NnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment buffers for one network; blocks follow [`Mlp::params`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(net: &Mlp, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = net.params().iter().map(|b| vec![0.0; b.len()]).collect();
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.second
    }

    /// One descent step `theta -= lr * m_hat / (sqrt(v_hat) + eps)`.
    ///
    /// The gradient is validated before anything is mutated, so a rejected
    /// step leaves both the network and the moments untouched.
    pub fn step(&mut self, net: &mut Mlp, grad: &GradientTape) -> Result<()> {
        if !grad.matches(net) {
            return Err(NnError::GradientShape {
                expected: net.num_params(),
                actual: grad.blocks().iter().map(|b| b.len()).sum(),
            });
        }
        if let Some(index) = grad.blocks().into_iter().flatten().position(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient { index });
        }
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        let blocks = net.params_mut();
        for (((params, g), m), v) in blocks
            .into_iter()
            .zip(grad.blocks())
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            for k in 0..params.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let m_hat = m[k] / bias1;
                let v_hat = v[k] / bias2;
                params[k] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense, LayerActivation};

    fn scalar(w: f64) -> Mlp {
        Mlp::from_layers(vec![Dense::new(
            1,
            1,
            vec![w],
            vec![0.0],
            LayerActivation::Uniform(Activation::Identity),
        )
        .unwrap()])
        .unwrap()
    }

    fn tape(net: &Mlp, gw: f64) -> GradientTape {
        let mut t = GradientTape::zeros(net, 1);
        t.weights[0][0] = gw;
        t
    }

    #[test]
    fn zero_gradient_is_null_update() {
        let mut net = scalar(0.7);
        let mut adam = AdamState::new(&net, AdamConfig::default());
        for _ in 0..5 {
            {
                let g = tape(&net, 0.0);
                adam.step(&mut net, &g)
            }
            .unwrap();
        }
        assert_eq!(net.param(0), 0.7);
        assert_eq!(adam.step, 5);
    }

    #[test]
    fn constant_gradient_decreases_monotonically() {
        let mut net = scalar(0.0);
        let mut adam = AdamState::new(&net, AdamConfig::with_lr(1e-2));
        let mut last = net.param(0);
        for _ in 0..200 {
            {
                let g = tape(&net, 1.0);
                adam.step(&mut net, &g)
            }
            .unwrap();
            assert!(net.param(0) < last);
            last = net.param(0);
        }
    }

    #[test]
    fn first_step_matches_closed_form() {
        // m_hat = g, v_hat = g^2 after bias correction, so delta = lr * g / (|g| + eps).
        for &g in &[0.3, -2.0, 1e-3] {
            let lr = 1e-3;
            let mut net = scalar(1.0);
            let mut adam = AdamState::new(&net, AdamConfig::with_lr(lr));
            {
                let g = tape(&net, g);
                adam.step(&mut net, &g)
            }
            .unwrap();
            let expected = 1.0 - lr * g / (g.abs() + 1e-8);
            assert!((net.param(0) - expected).abs() < 1e-15, "g={g}");
            assert!(((1.0 - net.param(0)).abs() - lr).abs() < 1e-7);
        }
    }

    #[test]
    fn non_finite_gradient_reports_index() {
        let mut net = scalar(1.0);
        let mut adam = AdamState::new(&net, AdamConfig::default());
        let mut t = tape(&net, 0.0);
        t.biases[0][0] = f64::NAN;
        match adam.step(&mut net, &t) {
            Err(NnError::NonFiniteGradient { index: 1 }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(adam.step, 0);
        assert_eq!(net.param(0), 1.0);
    }
}
