//! Monte Carlo engine: simulates regenerative cycles of the killed chain and
//! solves the empirical version of `E_z e^{θτ} I(T > τ) = 1`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::exact::largest_row_sum_state;
use crate::matrix::{augment, AugmentedChain, MatrixError, NonNegMatrix, Step};
use crate::root::{solve_increasing, Eval, RootError};

pub const DEFAULT_N_MAX: usize = 1_000_000;
pub const DEFAULT_CI_LEVEL: f64 = 0.95;
pub const DEFAULT_TOL: f64 = 1e-12;

/// Stream domain for the main cycle sample.
pub const DOMAIN_CYCLES: u64 = 0;
/// Stream domain for bootstrap resampling.
pub const DOMAIN_BOOTSTRAP: u64 = u64::MAX;
/// Stream domain for the cycles started at `x` when estimating `u(x)`.
pub fn domain_u(x: usize) -> u64 {
    1 + x as u64
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error("cycle transform unestimable: no surviving cycles among {n_samples}")]
    NoSurvivors { n_samples: usize },
    #[error("empirical transform has no root: {0}")]
    NoRoot(RootError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("state {z} out of range for n = {n}")]
    InvalidState { z: usize, n: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Independent random stream for cycle `index` in `domain`.
///
/// The stream depends only on `(seed, domain, index)`, so results do not
/// depend on how cycles are distributed across threads.
pub fn cycle_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// One regenerative cycle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegenCycleSample {
    /// Steps simulated; the cycle length when `survived`.
    pub tau: usize,
    pub survived: bool,
    pub truncated: bool,
    /// `(state, time)` for every visit at a time `j < τ ∧ T`, including the
    /// start at time 0.
    pub visits: Vec<(usize, usize)>,
}

/// Runs the chain from `start` until it hits `target`, dies, or `n_max`
/// steps have been taken.
pub fn sample_hitting<R: Rng + ?Sized>(
    chain: &AugmentedChain,
    start: usize,
    target: usize,
    rng: &mut R,
    n_max: usize,
    record: bool,
) -> RegenCycleSample {
    let mut visits = Vec::new();
    if record {
        visits.push((start, 0));
    }
    let mut x = start;
    let mut steps = 0;
    loop {
        steps += 1;
        match chain.step(x, rng) {
            Step::Killed => {
                return RegenCycleSample {
                    tau: steps,
                    survived: false,
                    truncated: false,
                    visits,
                }
            }
            Step::To(y) if y == target => {
                return RegenCycleSample {
                    tau: steps,
                    survived: true,
                    truncated: false,
                    visits,
                }
            }
            Step::To(y) => {
                if steps >= n_max {
                    return RegenCycleSample {
                        tau: steps,
                        survived: false,
                        truncated: true,
                        visits,
                    };
                }
                if record {
                    visits.push((y, steps));
                }
                x = y;
            }
        }
    }
}

/// A cycle from `z` back to `z`.
pub fn sample_cycle<R: Rng + ?Sized>(
    chain: &AugmentedChain,
    z: usize,
    rng: &mut R,
    n_max: usize,
) -> RegenCycleSample {
    sample_hitting(chain, z, z, rng, n_max, true)
}

/// Draws `n` samples in parallel, sample `i` using stream `(seed, domain, i)`.
pub fn collect_samples<F>(n: usize, seed: u64, domain: u64, sampler: F) -> Vec<RegenCycleSample>
where
    F: Fn(&mut ChaCha8Rng) -> RegenCycleSample + Sync,
{
    (0..n as u64)
        .into_par_iter()
        .map(|i| sampler(&mut cycle_rng(seed, domain, i)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub n_survived: usize,
}

impl McEstimate {
    fn from_terms(terms: impl Iterator<Item = f64>, n_survived: usize) -> McEstimate {
        let mut n = 0usize;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        let mut sum = 0.0;
        for t in terms {
            n += 1;
            sum += t;
            let d = t - mean;
            mean += d / n as f64;
            m2 += d * (t - mean);
        }
        let std_error = if n > 1 {
            (m2 / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        } else {
            0.0
        };
        McEstimate {
            value: if n > 0 { sum / n as f64 } else { 0.0 },
            std_error,
            n_samples: n,
            n_survived,
        }
    }
}

fn survived_count(samples: &[RegenCycleSample]) -> usize {
    samples.iter().filter(|s| s.survived).count()
}

/// Sample mean of `e^{θτ} I(survived)`.
pub fn empirical_h(samples: &[RegenCycleSample], theta: f64) -> McEstimate {
    McEstimate::from_terms(
        samples
            .iter()
            .map(|s| if s.survived { (theta * s.tau as f64).exp() } else { 0.0 }),
        survived_count(samples),
    )
}

/// Cycle-length histogram of the surviving cycles; enough to evaluate the
/// empirical transform and its derivative.
#[derive(Debug, Clone)]
pub struct TauHistogram {
    counts: Vec<(usize, usize)>,
    n: usize,
}

impl TauHistogram {
    pub fn new(samples: &[RegenCycleSample]) -> Self {
        Self::from_taus(
            samples.iter().filter(|s| s.survived).map(|s| s.tau),
            samples.len(),
        )
    }

    fn from_taus(taus: impl Iterator<Item = usize>, n: usize) -> Self {
        let mut taus: Vec<usize> = taus.collect();
        taus.sort_unstable();
        let mut counts: Vec<(usize, usize)> = Vec::new();
        for t in taus {
            match counts.last_mut() {
                Some((last, c)) if *last == t => *c += 1,
                _ => counts.push((t, 1)),
            }
        }
        TauHistogram { counts, n }
    }

    pub fn n_survived(&self) -> usize {
        self.counts.iter().map(|&(_, c)| c).sum()
    }

    pub fn h(&self, theta: f64) -> f64 {
        self.moment(theta, 0)
    }

    pub fn h_prime(&self, theta: f64) -> f64 {
        self.moment(theta, 1)
    }

    /// Standard error of the sample mean of `e^{θτ} I(survived)`.
    pub fn h_std_error(&self, theta: f64) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let mean = self.h(theta);
        let mut ss = (self.n - self.n_survived()) as f64 * mean * mean;
        for &(t, c) in &self.counts {
            let d = (theta * t as f64).exp() - mean;
            ss += c as f64 * d * d;
        }
        (ss / (self.n - 1) as f64).sqrt() / (self.n as f64).sqrt()
    }

    fn moment(&self, theta: f64, k: i32) -> f64 {
        self.counts
            .iter()
            .map(|&(t, c)| c as f64 * (t as f64).powi(k) * (theta * t as f64).exp())
            .sum::<f64>()
            / self.n as f64
    }

    fn solve(&self, tol: f64) -> Result<f64, McError> {
        if self.n_survived() == 0 {
            return Err(McError::NoSurvivors { n_samples: self.n });
        }
        // a single cycle length gives the root in closed form
        if let [(t, c)] = self.counts[..] {
            return Ok(-((c as f64) / self.n as f64).ln() / t as f64);
        }
        solve_increasing(|t| Eval::Finite(self.h(t)), 0.0, tol)
            .map(|r| r.theta)
            .map_err(McError::NoRoot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    #[default]
    Delta,
    /// Percentile bootstrap over resampled cycles.
    Bootstrap { resamples: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaEstimate {
    pub theta_hat: f64,
    /// Half-width of the confidence interval for `θ`.
    pub ci_halfwidth: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub h_std_error: f64,
    pub h_prime: f64,
}

/// Standard normal quantile for a two-sided interval at `level`.
pub fn normal_quantile(level: f64) -> f64 {
    Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 + 0.5 * level)
}

/// Root of the empirical transform with a delta-method confidence interval.
pub fn saa_solve_theta(
    samples: &[RegenCycleSample],
    tol: f64,
) -> Result<(f64, f64), McError> {
    let est = saa_estimate(samples, tol, DEFAULT_CI_LEVEL, CiMethod::Delta, 0)?;
    Ok((est.theta_hat, est.ci_halfwidth))
}

pub fn saa_estimate(
    samples: &[RegenCycleSample],
    tol: f64,
    ci_level: f64,
    method: CiMethod,
    seed: u64,
) -> Result<ThetaEstimate, McError> {
    let hist = TauHistogram::new(samples);
    let theta = hist.solve(tol)?;
    let se = hist.h_std_error(theta);
    let hp = hist.h_prime(theta);
    let zq = normal_quantile(ci_level);
    let halfwidth = if hp > 0.0 { zq * se / hp } else { f64::INFINITY };
    let (ci_low, ci_high) = match method {
        CiMethod::Delta => (theta - halfwidth, theta + halfwidth),
        CiMethod::Bootstrap { resamples } => {
            bootstrap_interval(samples, tol, ci_level, resamples, seed)?
        }
    };
    Ok(ThetaEstimate {
        theta_hat: theta,
        ci_halfwidth: match method {
            CiMethod::Delta => halfwidth,
            CiMethod::Bootstrap { .. } => 0.5 * (ci_high - ci_low),
        },
        ci_low,
        ci_high,
        h_std_error: se,
        h_prime: hp,
    })
}

fn bootstrap_interval(
    samples: &[RegenCycleSample],
    tol: f64,
    ci_level: f64,
    resamples: usize,
    seed: u64,
) -> Result<(f64, f64), McError> {
    if resamples < 2 {
        return Err(McError::Config("bootstrap needs at least 2 resamples".into()));
    }
    let n = samples.len();
    let mut thetas: Vec<f64> = (0..resamples as u64)
        .into_par_iter()
        .filter_map(|b| {
            let mut rng = cycle_rng(seed, DOMAIN_BOOTSTRAP, b);
            let taus: Vec<usize> = (0..n)
                .filter_map(|_| {
                    let s = &samples[rng.random_range(0..n)];
                    s.survived.then_some(s.tau)
                })
                .collect();
            TauHistogram::from_taus(taus.into_iter(), n).solve(tol).ok()
        })
        .collect();
    if thetas.is_empty() {
        return Err(McError::NoSurvivors { n_samples: n });
    }
    thetas.sort_by(f64::total_cmp);
    let alpha = 0.5 * (1.0 - ci_level);
    let pick = |q: f64| {
        let idx = (q * (thetas.len() - 1) as f64).round() as usize;
        thetas[idx.min(thetas.len() - 1)]
    };
    Ok((pick(alpha), pick(1.0 - alpha)))
}

/// `u(x) ≈ mean of e^{θτ} I(T > τ)` over `n` paths from `x` to `z`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_u(
    chain: &AugmentedChain,
    x: usize,
    z: usize,
    theta_hat: f64,
    n: usize,
    seed: u64,
    n_max: usize,
) -> McEstimate {
    let samples = collect_samples(n, seed, domain_u(x), |rng| {
        sample_hitting(chain, x, z, rng, n_max, false)
    });
    empirical_h(&samples, theta_hat)
}

/// Per-state mean of `Σ_j e^{θj} I(X_j = y, T > j)` over cycles.
pub fn estimate_eta(samples: &[RegenCycleSample], theta_hat: f64, n_states: usize) -> Vec<McEstimate> {
    let n = samples.len();
    let mut sum = vec![0.0; n_states];
    let mut sum_sq = vec![0.0; n_states];
    let mut touched = vec![0usize; n_states];
    let mut cycle = vec![0.0; n_states];
    let mut seen = Vec::new();
    for s in samples {
        for &(y, j) in &s.visits {
            if cycle[y] == 0.0 {
                seen.push(y);
            }
            cycle[y] += (theta_hat * j as f64).exp();
        }
        for &y in &seen {
            sum[y] += cycle[y];
            sum_sq[y] += cycle[y] * cycle[y];
            if s.survived {
                touched[y] += 1;
            }
            cycle[y] = 0.0;
        }
        seen.clear();
    }
    (0..n_states)
        .map(|y| {
            let mean = sum[y] / n as f64;
            let std_error = if n > 1 {
                let var = ((sum_sq[y] - n as f64 * mean * mean) / (n - 1) as f64).max(0.0);
                var.sqrt() / (n as f64).sqrt()
            } else {
                0.0
            };
            McEstimate {
                value: mean,
                std_error,
                n_samples: n,
                n_survived: touched[y],
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct McConfig {
    pub seed: u64,
    pub n_cycles: usize,
    pub n_max: usize,
    pub z_override: Option<usize>,
    pub ci_level: f64,
    pub threads: Option<usize>,
    pub ci_method: CiMethod,
    pub tol: f64,
    /// Paths per state for `u`; `None` skips the eigenvector estimates.
    pub u_paths: Option<usize>,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            seed: 0,
            n_cycles: 100_000,
            n_max: DEFAULT_N_MAX,
            z_override: None,
            ci_level: DEFAULT_CI_LEVEL,
            threads: None,
            ci_method: CiMethod::Delta,
            tol: DEFAULT_TOL,
            u_paths: None,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<(), McError> {
        if self.n_cycles == 0 {
            return Err(McError::Config("n_cycles must be positive".into()));
        }
        if self.n_max == 0 {
            return Err(McError::Config("n_max must be positive".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(McError::Config("ci_level must lie in (0, 1)".into()));
        }
        if self.threads == Some(0) {
            return Err(McError::Config("threads must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct McReport {
    pub z: usize,
    pub theta: ThetaEstimate,
    pub lambda_hat: f64,
    /// `λ̂ · halfwidth(θ)`.
    pub lambda_halfwidth: f64,
    /// `[e^{−θ_high}, e^{−θ_low}]`.
    pub lambda_ci: (f64, f64),
    pub n_cycles: usize,
    pub n_survived: usize,
    pub n_truncated: usize,
    pub truncated_fraction: f64,
    pub mean_cycle_steps: f64,
    pub u_hat: Option<Vec<McEstimate>>,
    pub eta_hat: Option<Vec<McEstimate>>,
}

/// Runs `f` on a pool with the configured number of threads.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        None => f(),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .expect("thread pool")
            .install(f),
    }
}

/// Summarizes a cycle sample into a report.
pub fn summarize(
    samples: &[RegenCycleSample],
    z: usize,
    cfg: &McConfig,
) -> Result<McReport, McError> {
    let theta = saa_estimate(samples, cfg.tol, cfg.ci_level, cfg.ci_method, cfg.seed)?;
    let lambda_hat = (-theta.theta_hat).exp();
    let n_truncated = samples.iter().filter(|s| s.truncated).count();
    Ok(McReport {
        z,
        lambda_hat,
        lambda_halfwidth: lambda_hat * theta.ci_halfwidth,
        lambda_ci: ((-theta.ci_high).exp(), (-theta.ci_low).exp()),
        theta,
        n_cycles: samples.len(),
        n_survived: survived_count(samples),
        n_truncated,
        truncated_fraction: n_truncated as f64 / samples.len() as f64,
        mean_cycle_steps: samples.iter().map(|s| s.tau as f64).sum::<f64>() / samples.len() as f64,
        u_hat: None,
        eta_hat: None,
    })
}

/// Full Monte Carlo solve of a sub-stochastic matrix.
pub fn run_mc(b: &NonNegMatrix, cfg: &McConfig) -> Result<McReport, McError> {
    cfg.validate()?;
    let chain = augment(b)?;
    let n = b.n();
    let z = cfg.z_override.unwrap_or_else(|| largest_row_sum_state(b));
    if z >= n {
        return Err(McError::InvalidState { z, n });
    }
    with_threads(cfg.threads, || {
        let samples = collect_samples(cfg.n_cycles, cfg.seed, DOMAIN_CYCLES, |rng| {
            sample_cycle(&chain, z, rng, cfg.n_max)
        });
        let mut report = summarize(&samples, z, cfg)?;
        if let Some(paths) = cfg.u_paths {
            let theta = report.theta.theta_hat;
            report.eta_hat = Some(estimate_eta(&samples, theta, n));
            report.u_hat = Some(
                (0..n)
                    .map(|x| estimate_u(&chain, x, z, theta, paths, cfg.seed, cfg.n_max))
                    .collect(),
            );
        }
        Ok(report)
    })
}
