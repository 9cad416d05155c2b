use super::params::{ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    /// Step size 2e-4 with decays (0.5, 0.999).
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates, applied to a fixed set of
/// parameters of a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    ids: Vec<ParamId>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore, ids: Vec<ParamId>) -> Self {
        let ids: Vec<ParamId> = ids.into_iter().filter(|&id| params.param(id).trainable).collect();
        let m = ids.iter().map(|&id| vec![0.0; params.tensor(id).len()]).collect();
        let v = ids.iter().map(|&id| vec![0.0; params.tensor(id).len()]).collect();
        Self { config, ids, m, v, t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update from the gradients accumulated on the parameters
    /// and clears them. Parameters without a gradient are left untouched.
    pub fn step(&mut self, params: &mut ParamStore) {
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (k, &id) in self.ids.iter().enumerate() {
            let tensor = params.tensor_mut(id);
            let Some(g) = tensor.grad().map(|g| g.to_vec()) else { continue };
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, p) in tensor.data_mut().iter_mut().enumerate() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
            tensor.zero_grad();
        }
    }
}
