//! Bayesian estimation of the change-point model parameters.
//!
//! The posterior combines a Gaussian likelihood of daily residuals against
//! [`crate::model::predict`] with weakly informative priors: truncated
//! normals on baseload and slopes, uniform balance points on [32, 100] °F
//! with `t_heat <= t_cool` enforced by joint rejection, and a half-Cauchy
//! noise scale. Sampling is adaptive Metropolis-within-Gibbs: one random-walk
//! proposal per coordinate, with per-coordinate step sizes tuned toward a
//! 0.44 acceptance rate during burn-in and frozen afterwards.
//!
//! Every retained draw satisfies the hard parameter constraints. Runs are
//! reproducible: chain `c` draws from an independent, deterministic RNG
//! stream derived from `(seed, c)`, so results do not depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::AlignedSeries;
use crate::model::{self, ParamPoint, T_HIGH, T_LOW};

/// Coordinate names, in the storage order used throughout this module.
pub const PARAM_NAMES: [&str; 6] = ["base", "gamma_heat", "gamma_cool", "t_heat", "t_cool", "sigma"];

/// The three parameters whose posterior distributions are compared across
/// buildings. Balance points enter comparisons through their means only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareParam {
    Base,
    GammaHeat,
    GammaCool,
}

impl CompareParam {
    pub const ALL: [CompareParam; 3] = [CompareParam::GammaHeat, CompareParam::GammaCool, CompareParam::Base];

    pub fn as_str(self) -> &'static str {
        match self {
            CompareParam::Base => "base",
            CompareParam::GammaHeat => "gamma_heat",
            CompareParam::GammaCool => "gamma_cool",
        }
    }

    fn coord_index(self) -> usize {
        match self {
            CompareParam::Base => 0,
            CompareParam::GammaHeat => 1,
            CompareParam::GammaCool => 2,
        }
    }
}

/// Prior specification.
///
/// The baseload prior is Normal(20, 20) truncated to nonnegative values, the
/// slope priors Normal(0, 4) truncated likewise (second argument read as a
/// standard deviation), balance points Uniform(32, 100), and the noise scale
/// half-Cauchy(5). Truncation renormalization constants are omitted; they do
/// not depend on the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub base_mean: f64,
    pub base_sd: f64,
    pub gamma_heat_sd: f64,
    pub gamma_cool_sd: f64,
    pub t_low: f64,
    pub t_high: f64,
    pub sigma_scale: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            base_mean: 20.0,
            base_sd: 20.0,
            gamma_heat_sd: 4.0,
            gamma_cool_sd: 4.0,
            t_low: T_LOW,
            t_high: T_HIGH,
            sigma_scale: 5.0,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_sd > 0.0 && self.gamma_heat_sd > 0.0 && self.gamma_cool_sd > 0.0 && self.sigma_scale > 0.0)
        {
            return Err(Error::InvalidParams("prior scales must be positive".to_string()));
        }
        if !(self.t_low < self.t_high) {
            return Err(Error::InvalidParams("balance-point prior range is empty".to_string()));
        }
        Ok(())
    }
}

/// Sampler settings. The seed is mandatory; there is no entropy default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub chains: usize,
    pub burn_in: usize,
    /// Retained draws per chain.
    pub samples: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn new(seed: u64) -> Self {
        SamplerConfig { chains: 4, burn_in: 2000, samples: 2000, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains < 2 {
            return Err(Error::InvalidParams("need at least 2 chains".to_string()));
        }
        if self.samples < 4 {
            return Err(Error::InvalidParams("need at least 4 retained draws per chain".to_string()));
        }
        Ok(())
    }
}

/// Convergence diagnostics for one coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamDiag {
    pub r_hat: f64,
    pub ess: f64,
}

/// Per-parameter split-chain diagnostics plus the overall convergence flag
/// (`r_hat <= 1.1` for every coordinate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub base: ParamDiag,
    pub gamma_heat: ParamDiag,
    pub gamma_cool: ParamDiag,
    pub t_heat: ParamDiag,
    pub t_cool: ParamDiag,
    pub sigma: ParamDiag,
    pub converged: bool,
}

impl Diagnostics {
    pub fn param(&self, k: usize) -> ParamDiag {
        [self.base, self.gamma_heat, self.gamma_cool, self.t_heat, self.t_cool, self.sigma][k]
    }

    pub fn max_r_hat(&self) -> f64 {
        (0..6).map(|k| self.param(k).r_hat).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Posterior draws from all chains, burn-in already discarded.
///
/// Draws are stored chain-major: chain `c` occupies
/// `draws[c * chain_len .. (c + 1) * chain_len]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub draws: Vec<ParamPoint>,
    pub chains: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub diagnostics: Diagnostics,
}

impl PosteriorSamples {
    pub fn chain_len(&self) -> usize {
        self.draws.len() / self.chains
    }

    /// All draws of one coordinate, in storage order.
    pub fn coords(&self, k: usize) -> Vec<f64> {
        self.draws.iter().map(|p| coord(p, k)).collect()
    }

    pub fn mean(&self, k: usize) -> f64 {
        self.coords(k).iter().sum::<f64>() / self.draws.len() as f64
    }

    pub fn sd(&self, k: usize) -> f64 {
        let xs = self.coords(k);
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
    }

    /// Posterior-mean parameter point.
    pub fn mean_point(&self) -> ParamPoint {
        ParamPoint {
            base: self.mean(0),
            gamma_heat: self.mean(1),
            gamma_cool: self.mean(2),
            t_heat: self.mean(3),
            t_cool: self.mean(4),
            sigma: Some(self.mean(5)),
        }
    }
}

/// Read coordinate `k` of a parameter point, in [`PARAM_NAMES`] order.
pub fn coord(p: &ParamPoint, k: usize) -> f64 {
    match k {
        0 => p.base,
        1 => p.gamma_heat,
        2 => p.gamma_cool,
        3 => p.t_heat,
        4 => p.t_cool,
        5 => p.sigma.unwrap_or(f64::NAN),
        _ => panic!("coordinate index {k} out of range"),
    }
}

const LN_2PI: f64 = 1.8378770664093453;

fn log_prior(x: &[f64; 6], priors: &PriorSpec) -> f64 {
    let [base, gh, gc, th, tc, sigma] = *x;
    if base < 0.0 || gh < 0.0 || gc < 0.0 || sigma <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if th < priors.t_low || th > priors.t_high || tc < priors.t_low || tc > priors.t_high || th > tc {
        return f64::NEG_INFINITY;
    }
    let normal = |v: f64, mean: f64, sd: f64| -> f64 {
        let z = (v - mean) / sd;
        -sd.ln() - 0.5 * LN_2PI - 0.5 * z * z
    };
    let mut lp = 0.0;
    lp += normal(base, priors.base_mean, priors.base_sd);
    lp += normal(gh, 0.0, priors.gamma_heat_sd);
    lp += normal(gc, 0.0, priors.gamma_cool_sd);
    lp -= 2.0 * (priors.t_high - priors.t_low).ln();
    let s = priors.sigma_scale;
    lp += (2.0 / std::f64::consts::PI).ln() - s.ln() - (1.0 + (sigma / s).powi(2)).ln();
    lp
}

fn sum_sq_residuals(x: &[f64; 6], temps: &[f64], energy: &[f64]) -> f64 {
    let [base, gh, gc, th, tc, _] = *x;
    let mut sse = 0.0;
    for (&t, &e) in temps.iter().zip(energy) {
        let mu = base + gh * (th - t).max(0.0) + gc * (t - tc).max(0.0);
        let r = e - mu;
        sse += r * r;
    }
    sse
}

fn log_lik_from_sse(sigma: f64, sse: f64, n: usize) -> f64 {
    -(n as f64) * (sigma.ln() + 0.5 * LN_2PI) - sse / (2.0 * sigma * sigma)
}

fn log_post_vec(x: &[f64; 6], temps: &[f64], energy: &[f64], priors: &PriorSpec) -> (f64, f64) {
    let prior = log_prior(x, priors);
    if prior == f64::NEG_INFINITY {
        return (f64::NEG_INFINITY, f64::NAN);
    }
    let sse = sum_sq_residuals(x, temps, energy);
    (prior + log_lik_from_sse(x[5], sse, temps.len()), sse)
}

/// Log posterior density (up to truncation-renormalization constants).
///
/// Returns negative infinity outside the prior support, including
/// `t_heat > t_cool` and a missing or nonpositive sigma. With empty data this
/// is the log prior alone.
pub fn log_posterior(p: &ParamPoint, aligned: &AlignedSeries, priors: &PriorSpec) -> f64 {
    let x = [
        p.base,
        p.gamma_heat,
        p.gamma_cool,
        p.t_heat,
        p.t_cool,
        p.sigma.unwrap_or(-1.0),
    ];
    log_post_vec(&x, &aligned.temp, &aligned.energy, priors).0
}

/// Analytic gradient of [`log_posterior`] with respect to
/// `(base, gamma_heat, gamma_cool, t_heat, t_cool, sigma)`.
///
/// `None` outside the prior support. The hinge terms make the density only
/// piecewise smooth in the balance points; at a day where `T_d` equals a
/// balance point exactly the reported value is the one-sided derivative.
pub fn log_posterior_grad(
    p: &ParamPoint,
    aligned: &AlignedSeries,
    priors: &PriorSpec,
) -> Option<[f64; 6]> {
    let sigma = p.sigma.unwrap_or(-1.0);
    let x = [p.base, p.gamma_heat, p.gamma_cool, p.t_heat, p.t_cool, sigma];
    if log_prior(&x, priors) == f64::NEG_INFINITY {
        return None;
    }
    let inv_var = 1.0 / (sigma * sigma);
    let mut g = [0.0; 6];
    for (&t, &e) in aligned.temp.iter().zip(&aligned.energy) {
        let hh = (p.t_heat - t).max(0.0);
        let cc = (t - p.t_cool).max(0.0);
        let r = e - (p.base + p.gamma_heat * hh + p.gamma_cool * cc);
        g[0] += r * inv_var;
        g[1] += r * hh * inv_var;
        g[2] += r * cc * inv_var;
        if t < p.t_heat {
            g[3] += r * p.gamma_heat * inv_var;
        }
        if t > p.t_cool {
            g[4] -= r * p.gamma_cool * inv_var;
        }
        g[5] += -1.0 / sigma + r * r / (sigma * sigma * sigma);
    }
    g[0] -= (p.base - priors.base_mean) / (priors.base_sd * priors.base_sd);
    g[1] -= p.gamma_heat / (priors.gamma_heat_sd * priors.gamma_heat_sd);
    g[2] -= p.gamma_cool / (priors.gamma_cool_sd * priors.gamma_cool_sd);
    let s2 = priors.sigma_scale * priors.sigma_scale;
    g[5] -= 2.0 * sigma / (s2 + sigma * sigma);
    Some(g)
}

/// Dispersed starting point for one chain: the least-squares fit jittered by
/// about ±10% on base and slopes and ±3 °F on balance points, clipped back
/// into the prior support.
fn chain_init(ls: &[f64; 6], priors: &PriorSpec, rng: &mut ChaCha8Rng) -> [f64; 6] {
    let mut x = *ls;
    for k in [0usize, 1, 2] {
        x[k] *= 1.0 + rng.random_range(-0.1..0.1);
        if x[k] < 1e-3 {
            x[k] = rng.random_range(1e-3..0.1);
        }
    }
    x[3] = (x[3] + rng.random_range(-3.0..3.0)).clamp(priors.t_low, priors.t_high);
    x[4] = (x[4] + rng.random_range(-3.0..3.0)).clamp(priors.t_low, priors.t_high);
    if x[3] > x[4] {
        x.swap(3, 4);
    }
    x[5] = (x[5] * (1.0 + rng.random_range(-0.1..0.1))).max(1e-2);
    x
}

fn ls_init(aligned: &AlignedSeries) -> [f64; 6] {
    let from_point = |p: ParamPoint| {
        [
            p.base,
            p.gamma_heat,
            p.gamma_cool,
            p.t_heat.clamp(T_LOW, T_HIGH),
            p.t_cool.clamp(T_LOW, T_HIGH),
            p.sigma.unwrap_or(1.0).max(1e-2),
        ]
    };
    if let Ok(p) = model::fit_ls_range(aligned) {
        return from_point(p);
    }
    if let Ok(p) = model::fit_ls_65(aligned) {
        return from_point(p);
    }
    let mean_energy = if aligned.energy.is_empty() {
        20.0
    } else {
        aligned.energy.iter().sum::<f64>() / aligned.energy.len() as f64
    };
    [mean_energy.max(1.0), 1.0, 1.0, 55.0, 75.0, 5.0]
}

/// Batch size for step-size adaptation during burn-in.
const ADAPT_BATCH: usize = 50;
/// Target per-coordinate acceptance rate for the random-walk proposals.
const TARGET_ACCEPT: f64 = 0.44;
/// Target acceptance rate for the joint covariance-shaped proposals.
const TARGET_ACCEPT_JOINT: f64 = 0.23;
/// Burn-in draws accumulated before joint proposals switch on.
const COV_WINDOW: usize = 100;

/// Running mean and scatter of the burn-in draws, for shaping joint
/// proposals to the posterior's correlation structure.
struct RunningCov {
    count: usize,
    mean: [f64; 6],
    m2: [[f64; 6]; 6],
}

impl RunningCov {
    fn new() -> Self {
        RunningCov { count: 0, mean: [0.0; 6], m2: [[0.0; 6]; 6] }
    }

    fn update(&mut self, x: &[f64; 6]) {
        self.count += 1;
        let mut delta = [0.0; 6];
        for k in 0..6 {
            delta[k] = x[k] - self.mean[k];
            self.mean[k] += delta[k] / self.count as f64;
        }
        for i in 0..6 {
            for j in 0..6 {
                self.m2[i][j] += delta[i] * (x[j] - self.mean[j]);
            }
        }
    }

    /// Lower Cholesky factor of the sample covariance plus a small diagonal
    /// jitter; `None` until enough draws exist or if factorization fails.
    fn cholesky(&self) -> Option<[[f64; 6]; 6]> {
        if self.count < COV_WINDOW {
            return None;
        }
        let n = (self.count - 1) as f64;
        let mut a = [[0.0; 6]; 6];
        let mut diag_mean = 0.0;
        for i in 0..6 {
            diag_mean += self.m2[i][i] / n;
        }
        diag_mean /= 6.0;
        let jitter = 1e-6 * diag_mean.max(1e-12);
        for i in 0..6 {
            for j in 0..6 {
                a[i][j] = self.m2[i][j] / n;
            }
            a[i][i] += jitter;
        }
        let mut l = [[0.0; 6]; 6];
        for i in 0..6 {
            for j in 0..=i {
                let mut s = a[i][j];
                for k in 0..j {
                    s -= l[i][k] * l[j][k];
                }
                if i == j {
                    if s <= 0.0 {
                        return None;
                    }
                    l[i][j] = s.sqrt();
                } else {
                    l[i][j] = s / l[j][j];
                }
            }
        }
        Some(l)
    }
}

fn run_chain(
    chain_idx: usize,
    ls: &[f64; 6],
    temps: &[f64],
    energy: &[f64],
    priors: &PriorSpec,
    config: &SamplerConfig,
) -> Vec<[f64; 6]> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(chain_idx as u64);

    let mut x = chain_init(ls, priors, &mut rng);
    let (mut lp, mut sse) = log_post_vec(&x, temps, energy, priors);
    debug_assert!(lp.is_finite());

    let scale_guess = [
        (0.1 * x[0]).max(0.05),
        (0.1 * x[1]).max(0.02),
        (0.1 * x[2]).max(0.02),
        2.0,
        2.0,
        (0.1 * x[5]).max(0.02),
    ];
    let mut log_step: [f64; 6] = scale_guess.map(f64::ln);
    let mut accepted = [0usize; 6];
    let mut batch = 0usize;

    // Joint proposal machinery: covariance accumulated over burn-in draws,
    // frozen at the end of burn-in along with the global scale factor.
    let mut cov = RunningCov::new();
    let mut chol: Option<[[f64; 6]; 6]> = None;
    let mut log_joint_scale: f64 = (2.38f64 / 6.0f64.sqrt()).ln();
    let mut joint_accepted = 0usize;
    let mut joint_tried = 0usize;

    let total = config.burn_in + config.samples;
    let mut out = Vec::with_capacity(config.samples);
    for iter in 0..total {
        let adapting = iter < config.burn_in;
        for k in 0..6 {
            let step: f64 = log_step[k].exp();
            let mut prop = x;
            prop[k] += step * standard_normal(&mut rng);

            let (lp_new, sse_new) = if k == 5 {
                // Only the noise scale moved; the residuals are unchanged.
                let prior = log_prior(&prop, priors);
                if prior == f64::NEG_INFINITY {
                    (f64::NEG_INFINITY, sse)
                } else {
                    (prior + log_lik_from_sse(prop[5], sse, temps.len()), sse)
                }
            } else {
                log_post_vec(&prop, temps, energy, priors)
            };

            let accept = lp_new > f64::NEG_INFINITY
                && (lp_new - lp >= 0.0 || rng.random::<f64>() < (lp_new - lp).exp());
            if accept {
                x = prop;
                lp = lp_new;
                sse = sse_new;
                accepted[k] += 1;
            }
        }

        // One correlation-shaped joint move per sweep, once the burn-in
        // scatter supports a covariance estimate. Coordinate-wise walks mix
        // slowly through the strong base/slope/balance-point correlations;
        // this move follows them.
        if let Some(l) = &chol {
            let scale = log_joint_scale.exp();
            let mut z = [0.0; 6];
            for zk in &mut z {
                *zk = standard_normal(&mut rng);
            }
            let mut prop = x;
            for i in 0..6 {
                let mut d = 0.0;
                for j in 0..=i {
                    d += l[i][j] * z[j];
                }
                prop[i] += scale * d;
            }
            let (lp_new, sse_new) = log_post_vec(&prop, temps, energy, priors);
            let accept = lp_new > f64::NEG_INFINITY
                && (lp_new - lp >= 0.0 || rng.random::<f64>() < (lp_new - lp).exp());
            joint_tried += 1;
            if accept {
                x = prop;
                lp = lp_new;
                sse = sse_new;
                joint_accepted += 1;
            }
        }

        if adapting {
            cov.update(&x);
            if (iter + 1) % ADAPT_BATCH == 0 {
                batch += 1;
                let delta = 0.1f64.min(1.0 / (batch as f64).sqrt());
                for k in 0..6 {
                    let rate = accepted[k] as f64 / ADAPT_BATCH as f64;
                    log_step[k] += if rate > TARGET_ACCEPT { delta } else { -delta };
                    log_step[k] = log_step[k].clamp(-20.0, 20.0);
                }
                accepted = [0; 6];
                if joint_tried > 0 {
                    let rate = joint_accepted as f64 / joint_tried as f64;
                    log_joint_scale += if rate > TARGET_ACCEPT_JOINT { delta } else { -delta };
                    log_joint_scale = log_joint_scale.clamp(-20.0, 20.0);
                    joint_accepted = 0;
                    joint_tried = 0;
                }
                chol = cov.cholesky();
            }
        }

        if !adapting {
            out.push(x);
        }
    }
    out
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)
}

/// Maximum autocorrelation lag considered by the effective-sample-size
/// estimator.
const ESS_MAX_LAG: usize = 200;

/// Split each chain in half and compute split-chain r_hat and an
/// initial-positive-pair effective sample size for one coordinate.
fn split_diagnostics(chains: &[Vec<f64>]) -> ParamDiag {
    let n2 = chains.iter().map(Vec::len).min().unwrap_or(0) / 2;
    if n2 < 2 {
        return ParamDiag { r_hat: f64::NAN, ess: f64::NAN };
    }
    let mut seqs: Vec<&[f64]> = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        seqs.push(&c[..n2]);
        seqs.push(&c[c.len() - n2..]);
    }
    let m = seqs.len();

    let means: Vec<f64> = seqs.iter().map(|s| s.iter().sum::<f64>() / n2 as f64).collect();
    let vars: Vec<f64> = seqs
        .iter()
        .zip(&means)
        .map(|(s, &mu)| s.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n2 - 1) as f64)
        .collect();
    let w = vars.iter().sum::<f64>() / m as f64;
    let grand = means.iter().sum::<f64>() / m as f64;
    let b = n2 as f64 * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() / (m - 1) as f64;
    let var_plus = w * (n2 - 1) as f64 / n2 as f64 + b / n2 as f64;

    if var_plus < 1e-300 || w < 1e-300 {
        // The coordinate is effectively constant everywhere.
        return ParamDiag { r_hat: 1.0, ess: (m * n2) as f64 };
    }
    let r_hat = (var_plus / w).sqrt();

    // Autocorrelations via the multi-chain variogram.
    let max_lag = ESS_MAX_LAG.min(n2 - 1);
    let mut rho = Vec::with_capacity(max_lag + 1);
    rho.push(1.0);
    for t in 1..=max_lag {
        let mut v = 0.0;
        for s in &seqs {
            for i in 0..n2 - t {
                v += (s[i + t] - s[i]).powi(2);
            }
        }
        v /= (m * (n2 - t)) as f64;
        rho.push(1.0 - v / (2.0 * var_plus));
    }
    let mut tau = 1.0;
    let mut t = 1;
    while t + 1 < rho.len() {
        let pair = rho[t] + rho[t + 1];
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        t += 2;
    }
    let ess = ((m * n2) as f64 / tau).min((m * n2) as f64);
    ParamDiag { r_hat, ess }
}

fn diagnose(draws: &[[f64; 6]], chains: usize) -> Diagnostics {
    let chain_len = draws.len() / chains;
    let per_param: Vec<ParamDiag> = (0..6)
        .map(|k| {
            let seqs: Vec<Vec<f64>> = (0..chains)
                .map(|c| draws[c * chain_len..(c + 1) * chain_len].iter().map(|x| x[k]).collect())
                .collect();
            split_diagnostics(&seqs)
        })
        .collect();
    let converged = per_param.iter().all(|d| d.r_hat.is_finite() && d.r_hat <= 1.1);
    Diagnostics {
        base: per_param[0],
        gamma_heat: per_param[1],
        gamma_cool: per_param[2],
        t_heat: per_param[3],
        t_cool: per_param[4],
        sigma: per_param[5],
        converged,
    }
}

/// Draw posterior samples for one building.
///
/// Chains start from the least-squares fit, each jittered by its own RNG
/// stream; with empty data (prior-only sampling) a fixed fallback start is
/// used and the result reflects the priors. Non-convergence is not an error:
/// the draws are returned with `diagnostics.converged == false` and the
/// caller decides how strict to be. Enforcing a minimum day count is also the
/// caller's job; see the coverage floor in the command-line pipeline.
pub fn sample_posterior(
    aligned: &AlignedSeries,
    priors: &PriorSpec,
    config: &SamplerConfig,
) -> Result<PosteriorSamples> {
    priors.validate()?;
    config.validate()?;

    let ls = ls_init(aligned);
    let mut all: Vec<[f64; 6]> = Vec::with_capacity(config.chains * config.samples);
    for c in 0..config.chains {
        all.extend(run_chain(c, &ls, &aligned.temp, &aligned.energy, priors, config));
    }

    let diagnostics = diagnose(&all, config.chains);
    let draws: Vec<ParamPoint> = all
        .iter()
        .map(|x| ParamPoint {
            base: x[0],
            gamma_heat: x[1],
            gamma_cool: x[2],
            t_heat: x[3],
            t_cool: x[4],
            sigma: Some(x[5]),
        })
        .collect();
    Ok(PosteriorSamples { draws, chains: config.chains, burn_in: config.burn_in, seed: config.seed, diagnostics })
}

/// Empirical CDF of a posterior coordinate.
///
/// `support` holds the distinct draw values in increasing order and `cdf` the
/// cumulative fraction at each, ending at exactly 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamECDF {
    pub support: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl ParamECDF {
    /// Build an ECDF from raw values. At least one value is required, and all
    /// must be finite.
    pub fn from_values(values: &[f64]) -> Result<ParamECDF> {
        if values.is_empty() {
            return Err(Error::DegenerateData("cannot build an ECDF from no values".to_string()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateData("non-finite value in ECDF input".to_string()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mut support = Vec::new();
        let mut cdf = Vec::new();
        let mut i = 0;
        while i < sorted.len() {
            let v = sorted[i];
            let mut j = i;
            while j < sorted.len() && sorted[j] == v {
                j += 1;
            }
            support.push(v);
            cdf.push(j as f64 / n);
            i = j;
        }
        *cdf.last_mut().unwrap() = 1.0;
        Ok(ParamECDF { support, cdf })
    }

    /// Evaluate the CDF at `x` (right-continuous step function).
    pub fn eval(&self, x: f64) -> f64 {
        let idx = self.support.partition_point(|&s| s <= x);
        if idx == 0 {
            0.0
        } else {
            self.cdf[idx - 1]
        }
    }

    /// Check the structural invariants: strictly increasing support,
    /// nondecreasing CDF values in (0, 1] ending at 1.
    pub fn validate(&self) -> Result<()> {
        if self.support.is_empty() || self.support.len() != self.cdf.len() {
            return Err(Error::DegenerateData("ECDF support/cdf length mismatch".to_string()));
        }
        for w in self.support.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::DegenerateData("ECDF support not strictly increasing".to_string()));
            }
        }
        let mut prev = 0.0;
        for &c in &self.cdf {
            if !(c > 0.0 && c <= 1.0 && c >= prev) {
                return Err(Error::DegenerateData("ECDF values not nondecreasing in (0, 1]".to_string()));
            }
            prev = c;
        }
        if *self.cdf.last().unwrap() != 1.0 {
            return Err(Error::DegenerateData("ECDF must end at 1".to_string()));
        }
        Ok(())
    }

    /// Smallest and largest support values.
    pub fn range(&self) -> (f64, f64) {
        (self.support[0], *self.support.last().unwrap())
    }
}

/// Empirical CDF of one compared coordinate. Requires at least 1000 draws so
/// that downstream dominance comparisons rest on a stable distribution.
pub fn ecdf(samples: &PosteriorSamples, param: CompareParam) -> Result<ParamECDF> {
    if samples.draws.len() < 1000 {
        return Err(Error::DegenerateData(format!(
            "need at least 1000 draws for a usable ECDF, have {}",
            samples.draws.len()
        )));
    }
    ParamECDF::from_values(&samples.coords(param.coord_index()))
}

/// Posterior means of the two balance points.
pub fn balance_point_means(samples: &PosteriorSamples) -> (f64, f64) {
    (samples.mean(3), samples.mean(4))
}
