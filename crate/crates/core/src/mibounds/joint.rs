use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use super::{MiError, Result};

/// Joint distribution `p(z, y)` over `{0..nz} x {0..ny}`, row-major by `z`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointTable {
    nz: usize,
    ny: usize,
    p: Vec<f64>,
}

impl JointTable {
    pub fn new(nz: usize, ny: usize, p: Vec<f64>) -> Result<Self> {
        if nz == 0 || ny == 0 || p.len() != nz * ny {
            return Err(MiError::InvalidJoint(format!(
                "{} entries for a {nz}x{ny} table",
                p.len()
            )));
        }
        if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(MiError::InvalidJoint("entries must be finite and >= 0".into()));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(MiError::InvalidJoint(format!("entries sum to {total}, not 1")));
        }
        Ok(JointTable { nz, ny, p })
    }

    /// Normalizes non-negative weights into a joint.
    pub fn from_weights(nz: usize, ny: usize, w: Vec<f64>) -> Result<Self> {
        let total: f64 = w.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(MiError::InvalidJoint("weights must have a positive finite sum".into()));
        }
        Self::new(nz, ny, w.iter().map(|x| x / total).collect())
    }

    /// `p(z, y) = 1/n` when `z == y`; `true_mi = ln n`.
    pub fn diagonal_uniform(n: usize) -> Self {
        let mut p = vec![0.0; n * n];
        for i in 0..n {
            p[i * n + i] = 1.0 / n as f64;
        }
        JointTable { nz: n, ny: n, p }
    }

    /// Product of two marginals.
    pub fn independent(pz: &[f64], py: &[f64]) -> Result<Self> {
        let w = pz.iter().flat_map(|a| py.iter().map(move |b| a * b)).collect();
        Self::from_weights(pz.len(), py.len(), w)
    }

    /// Random joint with varied dependence: exponential weights raised to a
    /// random sharpness, with roughly one cell in five zeroed.
    pub fn random<R: Rng + ?Sized>(nz: usize, ny: usize, rng: &mut R) -> Self {
        loop {
            let sharp = rng.random_range(0.5..4.0);
            let w: Vec<f64> = (0..nz * ny)
                .map(|_| {
                    let e: f64 = Exp1.sample(rng);
                    if rng.random::<f64>() < 0.2 {
                        0.0
                    } else {
                        e.powf(sharp)
                    }
                })
                .collect();
            if let Ok(jt) = Self::from_weights(nz, ny, w) {
                return jt;
            }
        }
    }

    /// Bivariate standard Gaussian with correlation `rho`, discretized on a
    /// `bins x bins` grid over `[-half_width, half_width]^2`. Each cell mass
    /// is a 4x4 midpoint rule of the density; the table is renormalized.
    pub fn gaussian(rho: f64, bins: usize, half_width: f64) -> Result<Self> {
        if !(rho.abs() < 1.0) || bins == 0 || !(half_width > 0.0) {
            return Err(MiError::InvalidJoint("need |rho| < 1, bins > 0, half_width > 0".into()));
        }
        const SUB: usize = 4;
        let width = 2.0 * half_width / bins as f64;
        let step = width / SUB as f64;
        let det = 1.0 - rho * rho;
        let density = |x: f64, y: f64| (-(x * x - 2.0 * rho * x * y + y * y) / (2.0 * det)).exp();
        let mut w = vec![0.0; bins * bins];
        for i in 0..bins {
            for j in 0..bins {
                let (x0, y0) = (-half_width + i as f64 * width, -half_width + j as f64 * width);
                let mut acc = 0.0;
                for a in 0..SUB {
                    for b in 0..SUB {
                        acc += density(x0 + (a as f64 + 0.5) * step, y0 + (b as f64 + 0.5) * step);
                    }
                }
                w[i * bins + j] = acc;
            }
        }
        Self::from_weights(bins, bins, w)
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn p(&self, z: usize, y: usize) -> f64 {
        self.p[z * self.ny + y]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn pz(&self) -> Vec<f64> {
        (0..self.nz)
            .map(|z| self.p[z * self.ny..(z + 1) * self.ny].iter().sum())
            .collect()
    }

    pub fn py(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.ny];
        for z in 0..self.nz {
            for (y, o) in out.iter_mut().enumerate() {
                *o += self.p(z, y);
            }
        }
        out
    }

    /// Discrete entropy `H(Y)` in nats.
    pub fn entropy_y(&self) -> f64 {
        -self
            .py()
            .iter()
            .filter(|&&q| q > 0.0)
            .map(|q| q * q.ln())
            .sum::<f64>()
    }

    /// `p(y | z)`; uniform for a zero-mass `z`.
    pub fn conditional(&self, z: usize) -> Vec<f64> {
        let row = &self.p[z * self.ny..(z + 1) * self.ny];
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter().map(|x| x / total).collect()
        } else {
            vec![1.0 / self.ny as f64; self.ny]
        }
    }

    /// Cumulative table over flat cells, for inverse-CDF sampling.
    pub(crate) fn cdf(weights: &[f64]) -> Vec<f64> {
        let mut acc = 0.0;
        weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect()
    }

    pub(crate) fn draw(cdf: &[f64], u: f64) -> usize {
        let target = u * cdf.last().copied().unwrap_or(0.0);
        let i = cdf.partition_point(|&c| c <= target);
        // Skip zero-width cells at the tail caused by rounding.
        let mut i = i.min(cdf.len() - 1);
        while i > 0 && cdf[i] == cdf[i - 1] && cdf[i] <= target {
            i -= 1;
        }
        i
    }

    /// Draws `n` pairs `(z, y)` from the joint.
    pub fn sample_pairs<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<(usize, usize)> {
        let cdf = Self::cdf(&self.p);
        (0..n)
            .map(|_| {
                let c = Self::draw(&cdf, rng.random());
                (c / self.ny, c % self.ny)
            })
            .collect()
    }
}

/// `sum p(z,y) ln[p(z,y) / (p(z) p(y))]`, with `0 ln 0 = 0`.
pub fn true_mi(jt: &JointTable) -> f64 {
    let (pz, py) = (jt.pz(), jt.py());
    let mut mi = 0.0;
    for (z, &a) in pz.iter().enumerate() {
        for (y, &b) in py.iter().enumerate() {
            let p = jt.p(z, y);
            if p > 0.0 {
                mi += p * (p / (a * b)).ln();
            }
        }
    }
    mi
}

/// Mutual information of a bivariate Gaussian with correlation `rho`.
pub fn gaussian_mi(rho: f64) -> f64 {
    -0.5 * (1.0 - rho * rho).ln()
}
