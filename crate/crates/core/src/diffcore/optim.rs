use serde::{Deserialize, Serialize};

use super::{DenseArray, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of `param` in place. `t` counts from 1.
pub fn adam_step(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    cfg: &AdamConfig,
    t: u64,
) {
    assert!(t >= 1, "adam step counter starts at 1");
    let c1 = 1.0 - cfg.beta1.powf(t as f64);
    let c2 = 1.0 - cfg.beta2.powf(t as f64);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let mhat = m[i] / c1;
        let vhat = v[i] / c2;
        param[i] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
    }
}

/// Adam state for every parameter in a store.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<DenseArray>,
    v: Vec<DenseArray>,
    t: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros = || store.ids().map(|id| store.value(id).map(|_| 0.0)).collect();
        Adam {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies the gradients currently held in `store`.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.t += 1;
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let grad = store.grad(id).data().to_vec();
            let i = id.index();
            adam_step(
                store.value_mut(id).data_mut(),
                &grad,
                self.m[i].data_mut(),
                self.v[i].data_mut(),
                &self.config,
                self.t,
            );
        }
    }

    pub fn moments(&self) -> (&[DenseArray], &[DenseArray]) {
        (&self.m, &self.v)
    }

    /// Restores saved moments and step count. Shapes must match the store.
    pub fn restore(&mut self, m: Vec<DenseArray>, v: Vec<DenseArray>, t: u64) -> bool {
        let ok = m.len() == self.m.len()
            && v.len() == self.v.len()
            && m.iter().zip(&self.m).all(|(a, b)| a.same_shape(b))
            && v.iter().zip(&self.v).all(|(a, b)| a.same_shape(b));
        if ok {
            self.m = m;
            self.v = v;
            self.t = t;
        }
        ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![0.3, -1.2];
        let (mut m, mut v) = (vec![0.0; 2], vec![0.0; 2]);
        adam_step(&mut p, &[0.0, 0.0], &mut m, &mut v, &AdamConfig::default(), 1);
        assert_eq!(p, vec![0.3, -1.2]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = AdamConfig::default();
        for g in [2.5, -0.01, 40.0] {
            let mut p = vec![1.0];
            let (mut m, mut v) = (vec![0.0], vec![0.0]);
            adam_step(&mut p, &[g], &mut m, &mut v, &cfg, 1);
            let delta = p[0] - 1.0;
            assert!((delta + cfg.lr * g.signum()).abs() < 1e-8, "{delta}");
        }
    }
}
