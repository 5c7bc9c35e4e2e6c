use rand::Rng;
use serde::Serialize;

use super::joint::JointTable;
use super::{MiError, Result, LOG_FLOOR};
use crate::model::{kl_standard_normal, EncoderOutput};

/// Largest number of negative-count configurations the exact InfoNCE
/// enumeration will visit for a single `z`.
pub const MAX_EXACT_TERMS: u128 = 20_000_000;

/// Table-valued critic `h(z, y)`; every entry finite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Critic {
    nz: usize,
    ny: usize,
    h: Vec<f64>,
}

impl Critic {
    pub fn new(nz: usize, ny: usize, h: Vec<f64>) -> Result<Self> {
        if h.len() != nz * ny {
            return Err(MiError::InvalidTable(format!("{} entries for {nz}x{ny}", h.len())));
        }
        if h.iter().any(|x| !x.is_finite()) {
            return Err(MiError::InvalidTable("critic outputs must be finite".into()));
        }
        Ok(Critic { nz, ny, h })
    }

    pub fn constant(nz: usize, ny: usize, c: f64) -> Self {
        Critic {
            nz,
            ny,
            h: vec![c; nz * ny],
        }
    }

    /// `ln p(y|z) / p(y)`, the maximizer of InfoNCE. Unsupported cells get
    /// [`LOG_FLOOR`].
    pub fn nce_optimal(jt: &JointTable) -> Self {
        let (pz, py) = (jt.pz(), jt.py());
        let mut h = Vec::with_capacity(jt.nz() * jt.ny());
        for (z, &a) in pz.iter().enumerate() {
            for (y, &b) in py.iter().enumerate() {
                let p = jt.p(z, y);
                h.push(if p > 0.0 { (p / (a * b)).ln().max(LOG_FLOOR) } else { LOG_FLOOR });
            }
        }
        Critic {
            nz: jt.nz(),
            ny: jt.ny(),
            h,
        }
    }

    /// `1 + ln p(y|z) / p(y)`, the maximizer of the NWJ bound.
    pub fn nwj_optimal(jt: &JointTable) -> Self {
        let mut c = Self::nce_optimal(jt);
        for v in &mut c.h {
            *v += 1.0;
        }
        c
    }

    pub fn h(&self, z: usize, y: usize) -> f64 {
        self.h[z * self.ny + y]
    }

    pub fn values(&self) -> &[f64] {
        &self.h
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.h
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nz, self.ny)
    }
}

/// Variational decoder `q(y | z)`, each row normalized.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalTable {
    nz: usize,
    ny: usize,
    q: Vec<f64>,
}

impl ConditionalTable {
    pub fn new(nz: usize, ny: usize, q: Vec<f64>) -> Result<Self> {
        if q.len() != nz * ny {
            return Err(MiError::InvalidTable(format!("{} entries for {nz}x{ny}", q.len())));
        }
        if q.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(MiError::InvalidTable("probabilities must be finite and >= 0".into()));
        }
        for z in 0..nz {
            let s: f64 = q[z * ny..(z + 1) * ny].iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(MiError::InvalidTable(format!("row {z} sums to {s}")));
            }
        }
        Ok(ConditionalTable { nz, ny, q })
    }

    /// The true posterior `p(y | z)`.
    pub fn exact(jt: &JointTable) -> Self {
        let q = (0..jt.nz()).flat_map(|z| jt.conditional(z)).collect();
        ConditionalTable {
            nz: jt.nz(),
            ny: jt.ny(),
            q,
        }
    }

    /// `q(y | z) = p(y)`, ignoring `z`.
    pub fn marginal(jt: &JointTable) -> Self {
        let py = jt.py();
        let q = (0..jt.nz()).flat_map(|_| py.iter().copied()).collect();
        ConditionalTable {
            nz: jt.nz(),
            ny: jt.ny(),
            q,
        }
    }

    /// Rows drawn uniformly from the simplex interior.
    pub fn random<R: Rng + ?Sized>(nz: usize, ny: usize, rng: &mut R) -> Self {
        let mut q = Vec::with_capacity(nz * ny);
        for _ in 0..nz {
            let row: Vec<f64> = (0..ny).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let s: f64 = row.iter().sum();
            q.extend(row.iter().map(|x| x / s));
        }
        ConditionalTable { nz, ny, q }
    }

    /// Maximum-likelihood fit from samples with additive smoothing.
    pub fn fit(samples: &[(usize, usize)], nz: usize, ny: usize, smoothing: f64) -> Result<Self> {
        let mut counts = vec![smoothing.max(0.0); nz * ny];
        for &(z, y) in samples {
            if z >= nz || y >= ny {
                return Err(MiError::InvalidTable(format!("sample ({z}, {y}) out of range")));
            }
            counts[z * ny + y] += 1.0;
        }
        for z in 0..nz {
            let row = &mut counts[z * ny..(z + 1) * ny];
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|c| *c /= s);
            } else {
                row.iter_mut().for_each(|c| *c = 1.0 / ny as f64);
            }
        }
        Ok(ConditionalTable { nz, ny, q: counts })
    }

    pub fn q(&self, z: usize, y: usize) -> f64 {
        self.q[z * self.ny + y]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nz, self.ny)
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Estimate {
    fn from_terms(terms: &[f64]) -> Estimate {
        let n = terms.len();
        if n == 0 {
            return Estimate {
                value: 0.0,
                stderr: 0.0,
                samples: 0,
            };
        }
        let mean = terms.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Estimate {
            value: mean,
            stderr: (var / n as f64).sqrt(),
            samples: n,
        }
    }

    fn shift(mut self, by: f64) -> Estimate {
        self.value += by;
        self
    }
}

fn check_shape(jt: &JointTable, shape: (usize, usize)) -> Result<()> {
    if (jt.nz(), jt.ny()) != shape {
        return Err(MiError::ShapeMismatch {
            joint: (jt.nz(), jt.ny()),
            table: shape,
        });
    }
    Ok(())
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Decoder lower bound `E_p[ln q(y|z)] + H(Y)` by exhaustive summation.
pub fn i_dlb(jt: &JointTable, q: &ConditionalTable) -> Result<f64> {
    check_shape(jt, q.shape())?;
    let mut acc = 0.0;
    for z in 0..jt.nz() {
        for y in 0..jt.ny() {
            let p = jt.p(z, y);
            if p > 0.0 {
                acc += p * q.q(z, y).ln();
            }
        }
    }
    Ok(acc + jt.entropy_y())
}

/// Sampled decoder bound: mean of `ln q(y|z)` over pairs, plus `h_y`.
pub fn i_dlb_sampled(samples: &[(usize, usize)], q: &ConditionalTable, h_y: f64) -> Estimate {
    let terms: Vec<f64> = samples.iter().map(|&(z, y)| q.q(z, y).ln()).collect();
    Estimate::from_terms(&terms).shift(h_y)
}

/// Encoder upper bound: mean `KL(p(z|x) || N(0, I))` over posteriors.
pub fn i_eub(posteriors: &[EncoderOutput]) -> f64 {
    if posteriors.is_empty() {
        return 0.0;
    }
    posteriors.iter().map(kl_standard_normal).sum::<f64>() / posteriors.len() as f64
}

/// `E_p[h] - e^{-1} E_{p(z)p(y)}[e^h]` by exhaustive summation.
pub fn i_nwj(jt: &JointTable, critic: &Critic) -> Result<f64> {
    check_shape(jt, critic.shape())?;
    let (pz, py) = (jt.pz(), jt.py());
    let (mut pos, mut part) = (0.0, 0.0);
    for z in 0..jt.nz() {
        for y in 0..jt.ny() {
            let p = jt.p(z, y);
            if p > 0.0 {
                pos += p * critic.h(z, y);
            }
            let m = pz[z] * py[y];
            if m > 0.0 {
                part += m * (critic.h(z, y) - 1.0).exp();
            }
        }
    }
    Ok(pos - part)
}

/// NWJ over `batches` batches of one positive pair and `k - 1` independent
/// `y`s; the partition term averages the negatives.
pub fn i_nwj_sampled<R: Rng + ?Sized>(
    jt: &JointTable,
    critic: &Critic,
    k: usize,
    batches: usize,
    rng: &mut R,
) -> Result<Estimate> {
    check_shape(jt, critic.shape())?;
    if k < 2 {
        return Err(MiError::BatchTooSmall(k));
    }
    let joint_cdf = JointTable::cdf(jt.probabilities());
    let y_cdf = JointTable::cdf(&jt.py());
    let ny = jt.ny();
    let mut terms = Vec::with_capacity(batches);
    for _ in 0..batches {
        let c = JointTable::draw(&joint_cdf, rng.random());
        let (z, y) = (c / ny, c % ny);
        let neg = (1..k)
            .map(|_| (critic.h(z, JointTable::draw(&y_cdf, rng.random())) - 1.0).exp())
            .sum::<f64>()
            / (k - 1) as f64;
        terms.push(critic.h(z, y) - neg);
    }
    Ok(Estimate::from_terms(&terms))
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for i in 1..=n {
        out[i] = out[i - 1] + (i as f64).ln();
    }
    out
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Calls `f(counts)` for every composition of `total` into `counts.len()` parts.
fn compositions(counts: &mut [usize], pos: usize, remaining: usize, f: &mut impl FnMut(&[usize])) {
    if pos + 1 == counts.len() {
        counts[pos] = remaining;
        f(counts);
        return;
    }
    for c in 0..=remaining {
        counts[pos] = c;
        compositions(counts, pos + 1, remaining - c, f);
    }
}

/// Multi-sample InfoNCE,
/// `E[h(z,y1) - ln((1/K) sum_i e^{h(z,y_i)})]` with `(z, y1) ~ p(z,y)` and
/// `y2..yK ~ p(y)`, in closed form.
///
/// For each `z` the `y`s are pooled into classes of equal critic value, and
/// every multinomial count vector for the `K - 1` negatives over those
/// classes is visited once.
pub fn i_nce(jt: &JointTable, critic: &Critic, k: usize) -> Result<f64> {
    check_shape(jt, critic.shape())?;
    if k < 2 {
        return Err(MiError::BatchTooSmall(k));
    }
    let py = jt.py();
    let lnf = ln_factorials(k);
    let ln_k = (k as f64).ln();
    let negatives = k - 1;
    let mut total = 0.0;
    for z in 0..jt.nz() {
        let support: Vec<usize> = (0..jt.ny()).filter(|&y| jt.p(z, y) > 0.0).collect();
        if support.is_empty() {
            continue;
        }
        // Classes of negatives: (critic value, probability under p(y)).
        let mut classes: Vec<(f64, f64)> = Vec::new();
        for (y, &q) in py.iter().enumerate() {
            if q <= 0.0 {
                continue;
            }
            let h = critic.h(z, y);
            match classes.iter_mut().find(|c| c.0.to_bits() == h.to_bits()) {
                Some(c) => c.1 += q,
                None => classes.push((h, q)),
            }
        }
        let m = classes.len() as u128;
        let terms = binomial(negatives as u128 + m - 1, m - 1);
        if terms > MAX_EXACT_TERMS {
            return Err(MiError::ExactTooLarge {
                terms,
                limit: MAX_EXACT_TERMS,
            });
        }
        let ln_q: Vec<f64> = classes.iter().map(|c| c.1.ln()).collect();
        // E over negatives of ln(e^{h1} + S), accumulated per positive y.
        let mut expect = vec![0.0; support.len()];
        let mut counts = vec![0; classes.len()];
        compositions(&mut counts, 0, negatives, &mut |counts| {
            let mut ln_w = lnf[negatives];
            for (j, &c) in counts.iter().enumerate() {
                if c > 0 {
                    ln_w += c as f64 * ln_q[j] - lnf[c];
                }
            }
            let w = ln_w.exp();
            if w == 0.0 {
                return;
            }
            let ln_s = log_sum_exp(
                counts
                    .iter()
                    .zip(&classes)
                    .filter(|(c, _)| **c > 0)
                    .map(|(&c, cl)| (c as f64).ln() + cl.0),
            );
            for (e, &y) in expect.iter_mut().zip(&support) {
                let h1 = critic.h(z, y);
                let hi = h1.max(ln_s);
                *e += w * (hi + ((h1 - hi).exp() + (ln_s - hi).exp()).ln());
            }
        });
        for (e, &y) in expect.iter().zip(&support) {
            total += jt.p(z, y) * (critic.h(z, y) + ln_k - e);
        }
    }
    Ok(total)
}

/// Sampled InfoNCE over `batches` independent batches of size `k`.
pub fn i_nce_sampled<R: Rng + ?Sized>(
    jt: &JointTable,
    critic: &Critic,
    k: usize,
    batches: usize,
    rng: &mut R,
) -> Result<Estimate> {
    check_shape(jt, critic.shape())?;
    if k < 2 {
        return Err(MiError::BatchTooSmall(k));
    }
    let joint_cdf = JointTable::cdf(jt.probabilities());
    let y_cdf = JointTable::cdf(&jt.py());
    let ny = jt.ny();
    let ln_k = (k as f64).ln();
    let mut terms = Vec::with_capacity(batches);
    let mut hs = Vec::with_capacity(k);
    for _ in 0..batches {
        let c = JointTable::draw(&joint_cdf, rng.random());
        let (z, y) = (c / ny, c % ny);
        hs.clear();
        hs.push(critic.h(z, y));
        for _ in 1..k {
            hs.push(critic.h(z, JointTable::draw(&y_cdf, rng.random())));
        }
        terms.push(hs[0] - log_sum_exp(hs.iter().copied()) + ln_k);
    }
    Ok(Estimate::from_terms(&terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mibounds::true_mi;
    use crate::rng::stream_rng;

    #[test]
    fn exact_decoder_recovers_mi() {
        let mut rng = stream_rng(4, 0);
        for _ in 0..20 {
            let jt = JointTable::random(3, 4, &mut rng);
            let d = i_dlb(&jt, &ConditionalTable::exact(&jt)).unwrap();
            assert!((d - true_mi(&jt)).abs() < 1e-12);
            let m = i_dlb(&jt, &ConditionalTable::marginal(&jt)).unwrap();
            assert!(m.abs() < 1e-12);
        }
    }

    #[test]
    fn constant_critics_give_zero() {
        let jt = JointTable::random(3, 3, &mut stream_rng(5, 0));
        assert!(i_nwj(&jt, &Critic::constant(3, 3, 1.0)).unwrap().abs() < 1e-12);
        for k in [2, 5, 9] {
            assert!(i_nce(&jt, &Critic::constant(3, 3, -2.5), k).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn nce_rejects_small_batches() {
        let jt = JointTable::diagonal_uniform(2);
        let c = Critic::nce_optimal(&jt);
        assert_eq!(i_nce(&jt, &c, 1), Err(MiError::BatchTooSmall(1)));
        assert!(i_nce_sampled(&jt, &c, 0, 10, &mut stream_rng(0, 0)).is_err());
    }

    #[test]
    fn exact_enumeration_limit() {
        let jt = JointTable::random(2, 12, &mut stream_rng(6, 0));
        let c = Critic::new(2, 12, (0..24).map(|i| i as f64 * 0.01).collect()).unwrap();
        assert!(matches!(i_nce(&jt, &c, 64), Err(MiError::ExactTooLarge { .. })));
    }

    #[test]
    fn sampled_nce_tracks_exact() {
        let jt = JointTable::random(3, 3, &mut stream_rng(7, 0));
        let c = Critic::nce_optimal(&jt);
        let exact = i_nce(&jt, &c, 4).unwrap();
        let est = i_nce_sampled(&jt, &c, 4, 40_000, &mut stream_rng(8, 0)).unwrap();
        assert!((est.value - exact).abs() < 4.0 * est.stderr + 1e-9, "{est:?} vs {exact}");
    }

    #[test]
    fn sampled_nwj_tracks_exact() {
        let jt = JointTable::random(3, 3, &mut stream_rng(9, 0));
        let c = Critic::nwj_optimal(&jt);
        let exact = i_nwj(&jt, &c).unwrap();
        let est = i_nwj_sampled(&jt, &c, 8, 40_000, &mut stream_rng(10, 0)).unwrap();
        assert!((est.value - exact).abs() < 4.0 * est.stderr + 1e-9, "{est:?} vs {exact}");
    }
}
