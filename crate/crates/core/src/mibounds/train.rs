use rand::Rng;

use super::bounds::Critic;
use super::joint::JointTable;
use super::{MiError, Result};

/// Gradient ascent on the exact NWJ objective from `h = 0`. The gradient
/// of cell `(z, y)` is `p(z,y) - p(z)p(y) e^{h-1}`.
pub fn train_nwj_critic(jt: &JointTable, steps: usize, lr: f64) -> Critic {
    let (pz, py) = (jt.pz(), jt.py());
    let ny = jt.ny();
    let mut critic = Critic::constant(jt.nz(), ny, 0.0);
    for _ in 0..steps {
        for (i, h) in critic.values_mut().iter_mut().enumerate() {
            let (z, y) = (i / ny, i % ny);
            let g = jt.p(z, y) - pz[z] * py[y] * (*h - 1.0).exp();
            *h = (*h + lr * g).clamp(-50.0, 50.0);
        }
    }
    critic
}

/// Stochastic gradient ascent on sampled InfoNCE with batch size `k`, from
/// `h = 0`. Each step averages `batch` independent K-sample batches.
pub fn train_nce_critic<R: Rng + ?Sized>(
    jt: &JointTable,
    k: usize,
    steps: usize,
    batch: usize,
    lr: f64,
    rng: &mut R,
) -> Result<Critic> {
    if k < 2 {
        return Err(MiError::BatchTooSmall(k));
    }
    let ny = jt.ny();
    let joint_cdf = JointTable::cdf(jt.probabilities());
    let y_cdf = JointTable::cdf(&jt.py());
    let mut critic = Critic::constant(jt.nz(), ny, 0.0);
    let mut grad = vec![0.0; jt.nz() * ny];
    let mut cells = Vec::with_capacity(k);
    let scale = lr / batch.max(1) as f64;
    for _ in 0..steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for _ in 0..batch {
            let c = JointTable::draw(&joint_cdf, rng.random());
            let z = c / ny;
            cells.clear();
            cells.push(c);
            for _ in 1..k {
                cells.push(z * ny + JointTable::draw(&y_cdf, rng.random()));
            }
            let vals = critic.values();
            let m = cells.iter().map(|&i| vals[i]).fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = cells.iter().map(|&i| (vals[i] - m).exp()).sum();
            grad[c] += 1.0;
            for &i in &cells {
                grad[i] -= (vals[i] - m).exp() / total;
            }
        }
        for (h, g) in critic.values_mut().iter_mut().zip(&grad) {
            *h = (*h + scale * g).clamp(-50.0, 50.0);
        }
    }
    Ok(critic)
}
