//! Ordering checks for the bound chain `true_mi >= i_dlb >= i_nce`, with
//! exact decoders and optimal critics, as a serializable report.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bounds::{
    i_dlb, i_dlb_sampled, i_nce, i_nce_sampled, i_nwj, i_nwj_sampled, ConditionalTable, Critic,
};
use super::joint::{gaussian_mi, true_mi, JointTable};
use super::{MiError, Result};
use crate::rng::{derive_seed, stream_rng, tag};

/// Tolerance of every ordering check in exact mode.
pub const EXACT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Expectations by exhaustive summation.
    Exact,
    /// Monte Carlo over `trials` pairs or batches per estimate.
    Sampled { trials: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigReport {
    pub label: String,
    pub mode: &'static str,
    pub entropy_regime: &'static str,
    pub nz: usize,
    pub ny: usize,
    pub k: usize,
    pub true_mi: f64,
    pub ln_k: f64,
    pub i_dlb: f64,
    pub i_nce: f64,
    pub i_nwj: f64,
    pub stderr_dlb: f64,
    pub stderr_nce: f64,
    pub stderr_nwj: f64,
    /// Tolerance used for the `i_dlb >= i_nce` check.
    pub eps: f64,
    pub violations: Vec<String>,
    pub pass: bool,
}

/// Evaluates the bounds on `jt` for each batch size in `ks`, using the exact
/// posterior as decoder and the optimal critics.
///
/// Checks, each with tolerance `3 x` the relevant standard error (or
/// [`EXACT_TOLERANCE`] in exact mode): `true_mi >= i_dlb`,
/// `i_dlb >= i_nce`, `i_nce <= ln K`, `true_mi >= i_nwj`.
pub fn prop1_report(
    label: &str,
    jt: &JointTable,
    ks: &[usize],
    mode: Mode,
    seed: u64,
) -> Result<Vec<ConfigReport>> {
    let mi = true_mi(jt);
    let q = ConditionalTable::exact(jt);
    let nce_critic = Critic::nce_optimal(jt);
    let nwj_critic = Critic::nwj_optimal(jt);
    let mut out = Vec::with_capacity(ks.len());
    for (idx, &k) in ks.iter().enumerate() {
        if k < 2 {
            return Err(MiError::BatchTooSmall(k));
        }
        let (dlb, nce, nwj) = match mode {
            Mode::Exact => (
                (i_dlb(jt, &q)?, 0.0),
                (i_nce(jt, &nce_critic, k)?, 0.0),
                (i_nwj(jt, &nwj_critic)?, 0.0),
            ),
            Mode::Sampled { trials } => {
                let mut rng = stream_rng(derive_seed(seed, tag::MI, idx as u64), 0);
                let pairs = jt.sample_pairs(trials, &mut rng);
                let d = i_dlb_sampled(&pairs, &q, jt.entropy_y());
                let n = i_nce_sampled(jt, &nce_critic, k, trials, &mut rng)?;
                let w = i_nwj_sampled(jt, &nwj_critic, k, trials, &mut rng)?;
                ((d.value, d.stderr), (n.value, n.stderr), (w.value, w.stderr))
            }
        };
        let tol = |se: f64| (3.0 * se).max(EXACT_TOLERANCE);
        let eps = tol(dlb.1.hypot(nce.1));
        let ln_k = (k as f64).ln();
        let mut violations = Vec::new();
        if dlb.0 > mi + tol(dlb.1) {
            violations.push(format!("i_dlb {} exceeds true_mi {mi}", dlb.0));
        }
        if nce.0 > dlb.0 + eps {
            violations.push(format!("i_nce {} exceeds i_dlb {}", nce.0, dlb.0));
        }
        if nce.0 > ln_k + EXACT_TOLERANCE {
            violations.push(format!("i_nce {} exceeds ln K {ln_k}", nce.0));
        }
        if nwj.0 > mi + tol(nwj.1) {
            violations.push(format!("i_nwj {} exceeds true_mi {mi}", nwj.0));
        }
        out.push(ConfigReport {
            label: label.to_string(),
            mode: match mode {
                Mode::Exact => "exact",
                Mode::Sampled { .. } => "sampled",
            },
            entropy_regime: "discrete",
            nz: jt.nz(),
            ny: jt.ny(),
            k,
            true_mi: mi,
            ln_k,
            i_dlb: dlb.0,
            i_nce: nce.0,
            i_nwj: nwj.0,
            stderr_dlb: dlb.1,
            stderr_nce: nce.1,
            stderr_nwj: nwj.1,
            eps,
            pass: violations.is_empty(),
            violations,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiBenchConfig {
    pub seed: u64,
    pub exact: bool,
    /// Monte Carlo size per estimate when not exact.
    pub trials: usize,
    pub joints: usize,
    pub min_alphabet: usize,
    pub max_alphabet: usize,
    pub ks: Vec<usize>,
    pub diagonal_n: usize,
    pub diagonal_ks: Vec<usize>,
    pub trend_ks: Vec<usize>,
    pub gaussian_rho: f64,
    pub gaussian_bins: usize,
    pub gaussian_half_width: f64,
}

impl Default for MiBenchConfig {
    fn default() -> Self {
        MiBenchConfig {
            seed: 0,
            exact: true,
            trials: 20_000,
            joints: 20,
            min_alphabet: 2,
            max_alphabet: 5,
            ks: vec![2, 8, 32],
            diagonal_n: 16,
            diagonal_ks: vec![2, 4],
            trend_ks: vec![2, 4, 8, 16],
            gaussian_rho: 0.6,
            gaussian_bins: 200,
            gaussian_half_width: 6.0,
        }
    }
}

impl MiBenchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MiError::InvalidJoint(m.to_string()));
        if self.min_alphabet < 1 || self.max_alphabet < self.min_alphabet {
            return bad("alphabet range must satisfy 1 <= min <= max");
        }
        if let Some(&k) = self.ks.iter().chain(&self.diagonal_ks).chain(&self.trend_ks).find(|&&k| k < 2) {
            return Err(MiError::BatchTooSmall(k));
        }
        if !self.exact && self.trials < 2 {
            return bad("sampled mode needs at least 2 trials");
        }
        if self.diagonal_n == 0 || self.gaussian_bins == 0 {
            return bad("diagonal size and Gaussian bins must be positive");
        }
        Ok(())
    }

    fn mode(&self) -> Mode {
        if self.exact {
            Mode::Exact
        } else {
            Mode::Sampled {
                trials: self.trials,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianReport {
    pub rho: f64,
    pub bins: usize,
    pub half_width: f64,
    pub entropy_regime: &'static str,
    pub analytic_mi: f64,
    pub discretized_mi: f64,
    pub relative_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendReport {
    pub label: String,
    pub ks: Vec<usize>,
    pub i_dlb: f64,
    pub i_nce: Vec<f64>,
    /// `i_dlb - i_nce` per batch size.
    pub gaps: Vec<f64>,
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub mode: &'static str,
    pub seed: u64,
    pub configs: Vec<ConfigReport>,
    pub gaussian: GaussianReport,
    pub trends: Vec<TrendReport>,
    pub violations: usize,
    pub pass: bool,
}

fn trend(label: &str, jt: &JointTable, ks: &[usize]) -> Result<TrendReport> {
    let dlb = i_dlb(jt, &ConditionalTable::exact(jt))?;
    let critic = Critic::nce_optimal(jt);
    let nce = ks
        .iter()
        .map(|&k| i_nce(jt, &critic, k))
        .collect::<Result<Vec<_>>>()?;
    let gaps: Vec<f64> = nce.iter().map(|n| dlb - n).collect();
    let monotone = gaps.iter().all(|&g| g >= -EXACT_TOLERANCE) && gaps.windows(2).all(|w| w[1] < w[0]);
    Ok(TrendReport {
        label: label.to_string(),
        ks: ks.to_vec(),
        i_dlb: dlb,
        i_nce: nce,
        gaps,
        monotone,
    })
}

/// Full benchmark: random joints, the diagonal uniform joint, an independent
/// joint, the gap trend across batch sizes, and the discretized Gaussian.
pub fn mi_bench(cfg: &MiBenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let mode = cfg.mode();
    let mut configs = Vec::new();
    let mut shape_rng = stream_rng(derive_seed(cfg.seed, tag::MI, u64::MAX), 0);
    let mut trend_joint = None;
    for j in 0..cfg.joints {
        let nz = shape_rng.random_range(cfg.min_alphabet..=cfg.max_alphabet);
        let ny = shape_rng.random_range(cfg.min_alphabet..=cfg.max_alphabet);
        let jt = JointTable::random(nz, ny, &mut shape_rng);
        let seed = derive_seed(cfg.seed, tag::MI, j as u64);
        configs.extend(prop1_report(&format!("random{j}"), &jt, &cfg.ks, mode, seed)?);
        if trend_joint.is_none() && nz >= 3 && ny >= 3 {
            trend_joint = Some((j, jt));
        }
    }
    let diag = JointTable::diagonal_uniform(cfg.diagonal_n);
    let diag_label = format!("diagonal{}", cfg.diagonal_n);
    let diag_seed = derive_seed(cfg.seed, tag::MI, 1 << 32);
    configs.extend(prop1_report(&diag_label, &diag, &cfg.diagonal_ks, mode, diag_seed)?);
    let ind = JointTable::independent(&[0.2, 0.3, 0.5], &[0.6, 0.4])?;
    let ind_seed = derive_seed(cfg.seed, tag::MI, (1 << 32) + 1);
    configs.extend(prop1_report("independent", &ind, &cfg.diagonal_ks, mode, ind_seed)?);

    let mut trends = vec![trend(&diag_label, &diag, &cfg.trend_ks)?];
    if let Some((j, jt)) = &trend_joint {
        trends.push(trend(&format!("random{j}"), jt, &cfg.trend_ks)?);
    }

    let g = JointTable::gaussian(cfg.gaussian_rho, cfg.gaussian_bins, cfg.gaussian_half_width)?;
    let analytic = gaussian_mi(cfg.gaussian_rho);
    let discretized = true_mi(&g);
    let relative_error = if analytic == 0.0 {
        discretized.abs()
    } else {
        ((discretized - analytic) / analytic).abs()
    };
    let gaussian = GaussianReport {
        rho: cfg.gaussian_rho,
        bins: cfg.gaussian_bins,
        half_width: cfg.gaussian_half_width,
        entropy_regime: "differential",
        analytic_mi: analytic,
        discretized_mi: discretized,
        relative_error,
        pass: relative_error < 0.02,
    };

    let violations = configs.iter().map(|c| c.violations.len()).sum::<usize>()
        + trends.iter().filter(|t| !t.monotone).count()
        + usize::from(!gaussian.pass);
    Ok(BenchReport {
        mode: if cfg.exact { "exact" } else { "sampled" },
        seed: cfg.seed,
        configs,
        gaussian,
        trends,
        violations,
        pass: violations == 0,
    })
}
