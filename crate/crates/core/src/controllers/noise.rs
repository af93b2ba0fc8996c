use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Ornstein-Uhlenbeck exploration noise with unit time step:
/// `x <- x + theta * (mu - x) + sigma * N(0, 1)` per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuNoise {
    pub mu: f64,
    pub theta: f64,
    pub sigma: f64,
    state: Vec<f64>,
}

impl OuNoise {
    pub fn new(dim: usize, mu: f64, theta: f64, sigma: f64) -> Self {
        Self {
            mu,
            theta,
            sigma,
            state: vec![mu; dim],
        }
    }

    pub fn reset(&mut self) {
        let mu = self.mu;
        self.state.iter_mut().for_each(|x| *x = mu);
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> &[f64] {
        for x in self.state.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *x += self.theta * (self.mu - *x) + self.sigma * z;
        }
        &self.state
    }
}
