//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;

/// Random feature rows around skewed centers, quantized so that exact
/// cosine ties occur.
pub fn clustered_rows<R: Rng>(n: usize, dim: usize, centers: usize, spread: f32, rng: &mut R) -> Vec<(String, Vec<f32>)> {
    let c: Vec<Vec<f32>> = (0..centers)
        .map(|_| (0..dim).map(|_| rng.random::<f32>().powi(4)).collect())
        .collect();
    (0..n)
        .map(|i| {
            let base = &c[rng.random_range(0..centers)];
            let v = base
                .iter()
                .map(|&x| {
                    let y = (x + spread * (rng.random::<f32>() - 0.5)).clamp(0.0, 1.0);
                    (y * 10.0).round() / 10.0
                })
                .collect();
            (format!("n{i:03}"), v)
        })
        .collect()
}

fn cos(u: &[f32], v: &[f32]) -> Option<f64> {
    let dot: f64 = u.iter().zip(v).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
    let nu: f64 = u.iter().map(|&a| f64::from(a) * f64::from(a)).sum();
    let nv: f64 = v.iter().map(|&b| f64::from(b) * f64::from(b)).sum();
    (nu > 0.0 && nv > 0.0).then(|| (dot / (nu * nv).sqrt()).clamp(-1.0, 1.0))
}

/// All-pairs similarity edges: threshold filter, then the top
/// `ceil(pairs * keep_per_mille / 1000)` by cosine, ties by id pair.
pub fn similarity_oracle(rows: &[(String, Vec<f32>)], threshold: f64, keep_per_mille: usize) -> BTreeMap<(String, String), f64> {
    let n = rows.len();
    let pairs = n * (n - 1) / 2;
    let keep = (pairs * keep_per_mille).div_ceil(1000);
    let mut cand = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if rows[i].0 < rows[j].0 {
                if let Some(c) = cos(&rows[i].1, &rows[j].1) {
                    if c >= threshold {
                        cand.push((c, rows[i].0.clone(), rows[j].0.clone()));
                    }
                }
            }
        }
    }
    cand.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| (&a.1, &a.2).cmp(&(&b.1, &b.2))));
    cand.into_iter().take(keep).map(|(c, a, b)| ((a, b), c)).collect()
}

/// Pairwise AUC: fraction of (positive, negative) pairs ranked correctly,
/// ties counting one half. Returned as (numerator x 2, pairs).
pub fn auc_pairs(scores: &[f64], labels: &[bool]) -> (u64, u64) {
    let mut twice = 0u64;
    let mut pairs = 0u64;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                twice += 2;
            } else if scores[i] == scores[j] {
                twice += 1;
            }
        }
    }
    (twice, pairs)
}

/// 1-based rank of `truth` after sorting candidates by score descending,
/// ties broken by ascending candidate id.
pub fn brute_rank(scores: &[f64], ids: &[String], truth: usize) -> usize {
    1 + (0..scores.len())
        .filter(|&j| {
            j != truth && (scores[j] > scores[truth] || (scores[j] == scores[truth] && ids[j] < ids[truth]))
        })
        .count()
}

/// Composite Simpson rule on `[a, b]` with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// `KL(N(mu, e^lv) || N(0, 1))` by quadrature of `p ln(p / q)`.
pub fn kl_quadrature(mu: f64, logvar: f64) -> f64 {
    let sd = (0.5 * logvar).exp();
    let ln_p = |x: f64| -0.5 * ((x - mu) / sd).powi(2) - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
    let ln_q = |x: f64| -0.5 * x * x - 0.5 * (2.0 * std::f64::consts::PI).ln();
    let (lo, hi) = (mu - 14.0 * sd, mu + 14.0 * sd);
    simpson(|x| ln_p(x).exp() * (ln_p(x) - ln_q(x)), lo, hi, 20_000)
}

/// Bivariate Gaussian mutual information by 2D Simpson quadrature.
pub fn gaussian_mi_quadrature(rho: f64) -> f64 {
    let det = 1.0 - rho * rho;
    let tau = 2.0 * std::f64::consts::PI;
    let ln_joint = |x: f64, y: f64| -(x * x - 2.0 * rho * x * y + y * y) / (2.0 * det) - (tau * det.sqrt()).ln();
    let ln_marg = |x: f64| -0.5 * x * x - 0.5 * tau.ln();
    simpson(
        |x| simpson(|y| { let l = ln_joint(x, y); l.exp() * (l - ln_marg(x) - ln_marg(y)) }, -9.0, 9.0, 600),
        -9.0,
        9.0,
        600,
    )
}

/// `I(X; Z)` for a uniform binary `X` and `Z | X = i ~ N(mu_i, sd_i^2)`, by
/// quadrature over the two-component mixture.
pub fn binary_mixture_mi(mu: [f64; 2], sd: [f64; 2]) -> f64 {
    let pdf = |z: f64, i: usize| {
        (-0.5 * ((z - mu[i]) / sd[i]).powi(2)).exp() / (sd[i] * (2.0 * std::f64::consts::PI).sqrt())
    };
    let lo = mu[0].min(mu[1]) - 14.0 * sd[0].max(sd[1]);
    let hi = mu[0].max(mu[1]) + 14.0 * sd[0].max(sd[1]);
    simpson(
        |z| {
            let (a, b) = (pdf(z, 0), pdf(z, 1));
            let m = 0.5 * (a + b);
            let t = |p: f64| if p > 0.0 { p * (p / m).ln() } else { 0.0 };
            0.5 * (t(a) + t(b))
        },
        lo,
        hi,
        40_000,
    )
}
