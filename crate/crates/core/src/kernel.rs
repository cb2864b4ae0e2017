//! Killed Markov kernels on general state spaces whose `m`-step kernel has
//! a density `b_m(x,y)` with `c1 ≤ b_m(x,y)/b_m(v,y) ≤ c2`.
//!
//! Regeneration uses the split `B^m(x,dy) = δψ(dy) + B̃(x,dy)`, realized by
//! running `m` one-step moves from `x` to `y` and then regenerating with
//! probability `c1 b_m(v,y) / b_m(x,y)`.

use std::fmt::Debug;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore};
use rand_distr::Normal as NormalSampler;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use thiserror::Error;

use crate::exact::{solve_exact, ExactOptions, SolveError};
use crate::matrix::{augment, AugmentedChain, MatrixError, NonNegMatrix, Step};
use crate::mc::{cycle_rng, saa_estimate, with_threads, CiMethod, McError, McEstimate, RegenCycleSample, ThetaEstimate, DOMAIN_CYCLES};
use crate::minorize::MinorizationCertificate;

/// Slack on the regeneration coin before it counts as out of range.
pub const COIN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("regeneration coin {coin} outside [0, 1] for block {x} -> {y}")]
    CoinOutOfRange { x: String, y: String, coin: f64 },
    #[error(transparent)]
    Mc(#[from] McError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("grid of {grid} cells too coarse: row {row} sums to {sum}")]
    GridTooCoarse { grid: usize, row: usize, sum: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// A killed kernel with a certified `m`-step density.
///
/// Implementations must be pure and callable from several threads at once;
/// all randomness comes through the `rng` argument.
pub trait KernelModel: Sync {
    type State: Clone + Debug + Send + Sync;

    /// Block length `m`.
    fn block_len(&self) -> usize;
    /// Reference point `v`.
    fn reference_point(&self) -> Self::State;
    /// `(c1, c2)`.
    fn constants(&self) -> (f64, f64);
    /// `δ = c1 ∫ b_m(v,y) ν(dy)`.
    fn delta(&self) -> f64;
    /// One transition; `None` when the path is killed.
    fn step(&self, x: &Self::State, rng: &mut dyn RngCore) -> Option<Self::State>;
    /// `m`-step density `b_m(x,y)`; only ratios at equal `y` are used.
    fn density_m(&self, x: &Self::State, y: &Self::State) -> f64;
    /// Draw from `ψ(dy) ∝ b_m(v,y) ν(dy)`.
    fn sample_psi(&self, rng: &mut dyn RngCore) -> Self::State;
}

/// A kernel on an interval with a one-step density, for grid oracles.
pub trait GridKernel: KernelModel<State = f64> {
    fn domain(&self) -> (f64, f64);
    /// One-step density with respect to Lebesgue measure.
    fn density_1(&self, x: f64, y: f64) -> f64;
}

/// A split cycle; states are recorded at block boundaries.
#[derive(Debug, Clone, Serialize)]
pub struct KernelCycle<S> {
    /// Blocks simulated; the regeneration block count when `survived`.
    pub tau: usize,
    pub survived: bool,
    pub truncated: bool,
    /// `(X_{jm}, j)` for every block boundary reached alive before `τ`.
    pub visits: Vec<(S, usize)>,
    pub min_coin: f64,
    pub max_coin: f64,
}

/// Runs split blocks from `start` until regeneration, killing, or `n_max`
/// blocks.
pub fn split_block_path<K: KernelModel + ?Sized>(
    model: &K,
    start: K::State,
    rng: &mut dyn RngCore,
    n_max: usize,
    record: bool,
) -> Result<KernelCycle<K::State>, KernelError> {
    let (c1, _) = model.constants();
    let v = model.reference_point();
    let mut cycle = KernelCycle {
        tau: 0,
        survived: false,
        truncated: false,
        visits: Vec::new(),
        min_coin: f64::INFINITY,
        max_coin: f64::NEG_INFINITY,
    };
    if record {
        cycle.visits.push((start.clone(), 0));
    }
    let mut x = start;
    loop {
        cycle.tau += 1;
        let mut y = x.clone();
        for _ in 0..model.block_len() {
            match model.step(&y, rng) {
                Some(next) => y = next,
                None => return Ok(cycle),
            }
        }
        let coin = c1 * model.density_m(&v, &y) / model.density_m(&x, &y);
        if !(0.0..=1.0 + COIN_TOL).contains(&coin) {
            return Err(KernelError::CoinOutOfRange {
                x: format!("{x:?}"),
                y: format!("{y:?}"),
                coin,
            });
        }
        cycle.min_coin = cycle.min_coin.min(coin);
        cycle.max_coin = cycle.max_coin.max(coin);
        if rng.random::<f64>() < coin {
            cycle.survived = true;
            return Ok(cycle);
        }
        if cycle.tau >= n_max {
            cycle.truncated = true;
            return Ok(cycle);
        }
        if record {
            cycle.visits.push((y.clone(), cycle.tau));
        }
        x = y;
    }
}

/// A cycle started from `ψ`.
pub fn split_block_cycle<K: KernelModel + ?Sized>(
    model: &K,
    rng: &mut dyn RngCore,
    n_max: usize,
) -> Result<KernelCycle<K::State>, KernelError> {
    let start = model.sample_psi(rng);
    split_block_path(model, start, rng, n_max, true)
}

/// Weighted atoms approximating a measure.
#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalMeasure<S> {
    pub atoms: Vec<(S, f64)>,
    pub total: f64,
}

impl<S> EmpiricalMeasure<S> {
    pub fn mass_where(&self, pred: impl Fn(&S) -> bool) -> f64 {
        self.atoms.iter().filter(|(s, _)| pred(s)).map(|(_, w)| w).sum()
    }
}

impl EmpiricalMeasure<f64> {
    /// Mass in `bins` equal cells of `[lo, hi]`.
    pub fn histogram(&self, lo: f64, hi: f64, bins: usize) -> Vec<f64> {
        let mut out = vec![0.0; bins];
        let width = (hi - lo) / bins as f64;
        for &(s, w) in &self.atoms {
            let k = (((s - lo) / width).floor() as isize).clamp(0, bins as isize - 1) as usize;
            out[k] += w;
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct KernelConfig<S> {
    pub seed: u64,
    pub n_cycles: usize,
    /// Cap on blocks per cycle.
    pub n_max: usize,
    pub ci_level: f64,
    pub tol: f64,
    pub threads: Option<usize>,
    pub query_points: Vec<S>,
    pub u_paths: usize,
    /// Keep the `η` atoms; otherwise only the total mass is kept.
    pub keep_atoms: bool,
}

impl<S> Default for KernelConfig<S> {
    fn default() -> Self {
        KernelConfig {
            seed: 0,
            n_cycles: 100_000,
            n_max: crate::mc::DEFAULT_N_MAX,
            ci_level: crate::mc::DEFAULT_CI_LEVEL,
            tol: crate::mc::DEFAULT_TOL,
            threads: None,
            query_points: Vec::new(),
            u_paths: 10_000,
            keep_atoms: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelPoint<S> {
    pub x: S,
    pub u: McEstimate,
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelEstimate<S> {
    pub m: usize,
    /// Decay parameter of the block kernel `B^m`.
    pub theta_block: ThetaEstimate,
    pub lambda_block: f64,
    /// `λ̂ = e^{−θ/m}`, the eigenvalue of the one-step kernel.
    pub lambda_b: f64,
    pub lambda_b_halfwidth: f64,
    pub lambda_b_ci: (f64, f64),
    pub n_cycles: usize,
    pub n_survived: usize,
    pub n_truncated: usize,
    pub mean_blocks: f64,
    /// Smallest and largest regeneration coin drawn.
    pub coin_range: (f64, f64),
    pub c1: f64,
    pub c2: f64,
    pub delta: f64,
    pub u: Vec<KernelPoint<S>>,
    pub eta: EmpiricalMeasure<S>,
}

fn as_sample<S>(c: &KernelCycle<S>) -> RegenCycleSample {
    RegenCycleSample {
        tau: c.tau,
        survived: c.survived,
        truncated: c.truncated,
        visits: Vec::new(),
    }
}

/// Split-cycle estimate of the eigenvalue, of `u` at the query points and
/// of `η` as weighted atoms.
pub fn estimate_kernel_pf<K: KernelModel>(
    model: &K,
    cfg: &KernelConfig<K::State>,
) -> Result<KernelEstimate<K::State>, KernelError> {
    if cfg.n_cycles == 0 || cfg.n_max == 0 {
        return Err(KernelError::Config("n_cycles and n_max must be positive".into()));
    }
    if !(cfg.ci_level > 0.0 && cfg.ci_level < 1.0) {
        return Err(KernelError::Config("ci_level must lie in (0, 1)".into()));
    }
    with_threads(cfg.threads, || {
        let cycles = (0..cfg.n_cycles as u64)
            .into_par_iter()
            .map(|i| split_block_cycle(model, &mut cycle_rng(cfg.seed, DOMAIN_CYCLES, i), cfg.n_max))
            .collect::<Result<Vec<_>, _>>()?;
        let samples: Vec<RegenCycleSample> = cycles.iter().map(as_sample).collect();
        let theta = saa_estimate(&samples, cfg.tol, cfg.ci_level, CiMethod::Delta, cfg.seed)?;
        let m = model.block_len() as f64;
        let lambda_b = (-theta.theta_hat / m).exp();

        let n = cycles.len() as f64;
        let mut atoms = Vec::new();
        let mut total = 0.0;
        for c in &cycles {
            for (s, j) in &c.visits {
                let w = (theta.theta_hat * *j as f64).exp() / n;
                total += w;
                if cfg.keep_atoms {
                    atoms.push((s.clone(), w));
                }
            }
        }

        let u = cfg
            .query_points
            .iter()
            .enumerate()
            .map(|(k, x)| {
                let paths = (0..cfg.u_paths as u64)
                    .into_par_iter()
                    .map(|i| {
                        let mut rng = cycle_rng(cfg.seed, crate::mc::domain_u(k), i);
                        split_block_path(model, x.clone(), &mut rng, cfg.n_max, false).map(|c| as_sample(&c))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(KernelPoint {
                    x: x.clone(),
                    u: crate::mc::empirical_h(&paths, theta.theta_hat),
                })
            })
            .collect::<Result<Vec<_>, KernelError>>()?;

        let (c1, c2) = model.constants();
        Ok(KernelEstimate {
            m: model.block_len(),
            lambda_block: (-theta.theta_hat).exp(),
            lambda_b,
            lambda_b_halfwidth: lambda_b * theta.ci_halfwidth / m,
            lambda_b_ci: ((-theta.ci_high / m).exp(), (-theta.ci_low / m).exp()),
            theta_block: theta,
            n_cycles: cycles.len(),
            n_survived: cycles.iter().filter(|c| c.survived).count(),
            n_truncated: cycles.iter().filter(|c| c.truncated).count(),
            mean_blocks: cycles.iter().map(|c| c.tau as f64).sum::<f64>() / n,
            coin_range: (
                cycles.iter().map(|c| c.min_coin).fold(f64::INFINITY, f64::min),
                cycles.iter().map(|c| c.max_coin).fold(f64::NEG_INFINITY, f64::max),
            ),
            c1,
            c2,
            delta: model.delta(),
            u,
            eta: EmpiricalMeasure { atoms, total },
        })
    })
}

/// Midpoint discretization of the one-step kernel on `grid` cells.
pub fn discretize_oracle<K: GridKernel>(model: &K, grid: usize) -> Result<NonNegMatrix, KernelError> {
    if grid == 0 {
        return Err(KernelError::Config("grid must have at least one cell".into()));
    }
    let (lo, hi) = model.domain();
    let h = (hi - lo) / grid as f64;
    let mid: Vec<f64> = (0..grid).map(|i| lo + (i as f64 + 0.5) * h).collect();
    let rows: Vec<Vec<f64>> = mid
        .par_iter()
        .map(|&x| mid.iter().map(|&y| model.density_1(x, y) * h).collect())
        .collect();
    for (row, r) in rows.iter().enumerate() {
        let sum: f64 = r.iter().sum();
        if sum > 1.0 + 1e-6 {
            return Err(KernelError::GridTooCoarse { grid, row, sum });
        }
    }
    // quadrature can push a row sum a hair above one
    let rows: Vec<Vec<f64>> = rows
        .into_iter()
        .map(|r| {
            let sum: f64 = r.iter().sum();
            if sum > 1.0 {
                r.into_iter().map(|v| v / sum).collect()
            } else {
                r
            }
        })
        .collect();
    Ok(NonNegMatrix::from_dense(&rows)?)
}

/// Eigenvalue of the grid discretization.
pub fn oracle_lambda<K: GridKernel>(model: &K, grid: usize) -> Result<f64, KernelError> {
    let b = discretize_oracle(model, grid)?;
    Ok(solve_exact(&b, ExactOptions::default())?.lambda_star)
}

/// Uniform jumps on `[0, 1]`, killed with probability `kill` at every step.
#[derive(Debug, Clone, Copy)]
pub struct UniformKillKernel {
    pub kill: f64,
    pub m: usize,
}

impl KernelModel for UniformKillKernel {
    type State = f64;

    fn block_len(&self) -> usize {
        self.m
    }
    fn reference_point(&self) -> f64 {
        0.5
    }
    fn constants(&self) -> (f64, f64) {
        (1.0, 1.0)
    }
    fn delta(&self) -> f64 {
        (1.0 - self.kill).powi(self.m as i32)
    }
    fn step(&self, _x: &f64, rng: &mut dyn RngCore) -> Option<f64> {
        if rng.random::<f64>() < self.kill {
            None
        } else {
            Some(rng.random::<f64>())
        }
    }
    fn density_m(&self, _x: &f64, _y: &f64) -> f64 {
        (1.0 - self.kill).powi(self.m as i32)
    }
    fn sample_psi(&self, rng: &mut dyn RngCore) -> f64 {
        rng.random::<f64>()
    }
}

impl GridKernel for UniformKillKernel {
    fn domain(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
    fn density_1(&self, _x: f64, _y: f64) -> f64 {
        1.0 - self.kill
    }
}

/// Gaussian component truncated to `[0, 1]`.
#[derive(Debug, Clone, Copy)]
struct Truncated {
    sd: f64,
}

impl Truncated {
    fn mass(&self, mean: f64) -> f64 {
        let n = Normal::new(mean, self.sd).expect("positive sd");
        n.cdf(1.0) - n.cdf(0.0)
    }

    fn pdf(&self, mean: f64, y: f64) -> f64 {
        Normal::new(mean, self.sd).expect("positive sd").pdf(y) / self.mass(mean)
    }

    fn sample(&self, mean: f64, rng: &mut dyn RngCore) -> f64 {
        let d = NormalSampler::new(mean, self.sd).expect("positive sd");
        loop {
            let y: f64 = d.sample(rng);
            if (0.0..=1.0).contains(&y) {
                return y;
            }
        }
    }
}

/// Flagship kernel on `[0, 1]`: survive with probability
/// `0.95 − 0.3x²`, then jump by a two-component truncated Gaussian mixture
/// whose first component drifts with `x`.
#[derive(Debug, Clone)]
pub struct GaussianMixtureKernel {
    weight: f64,
    drift: Truncated,
    anchor: Truncated,
    anchor_mean: f64,
    v: f64,
    c1: f64,
    c2: f64,
}

impl Default for GaussianMixtureKernel {
    fn default() -> Self {
        Self::new(0.75, 400, 0.02)
    }
}

impl GaussianMixtureKernel {
    /// Constants from a `(grid+1)²` search of `b(x,y)/b(v,y)`, widened by
    /// the relative `margin`.
    pub fn new(v: f64, grid: usize, margin: f64) -> Self {
        let mut k = GaussianMixtureKernel {
            weight: 0.7,
            drift: Truncated { sd: 0.25 },
            anchor: Truncated { sd: 0.3 },
            anchor_mean: 0.7,
            v,
            c1: 0.0,
            c2: 0.0,
        };
        let pts: Vec<f64> = (0..=grid).map(|i| i as f64 / grid as f64).collect();
        let (lo, hi) = pts
            .par_iter()
            .map(|&x| {
                pts.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &y| {
                    let r = k.density_1(x, y) / k.density_1(v, y);
                    (lo.min(r), hi.max(r))
                })
            })
            .reduce(|| (f64::INFINITY, 0.0), |a, b| (a.0.min(b.0), a.1.max(b.1)));
        k.c1 = lo * (1.0 - margin);
        k.c2 = hi * (1.0 + margin);
        k
    }

    pub fn survival(&self, x: f64) -> f64 {
        0.95 - 0.3 * x * x
    }

    fn drift_mean(x: f64) -> f64 {
        0.3 + 0.4 * x
    }

    /// Jump density given survival.
    fn mixture_pdf(&self, x: f64, y: f64) -> f64 {
        self.weight * self.drift.pdf(Self::drift_mean(x), y)
            + (1.0 - self.weight) * self.anchor.pdf(self.anchor_mean, y)
    }

    fn sample_jump(&self, x: f64, rng: &mut dyn RngCore) -> f64 {
        if rng.random::<f64>() < self.weight {
            self.drift.sample(Self::drift_mean(x), rng)
        } else {
            self.anchor.sample(self.anchor_mean, rng)
        }
    }
}

impl KernelModel for GaussianMixtureKernel {
    type State = f64;

    fn block_len(&self) -> usize {
        1
    }
    fn reference_point(&self) -> f64 {
        self.v
    }
    fn constants(&self) -> (f64, f64) {
        (self.c1, self.c2)
    }
    fn delta(&self) -> f64 {
        self.c1 * self.survival(self.v)
    }
    fn step(&self, x: &f64, rng: &mut dyn RngCore) -> Option<f64> {
        if rng.random::<f64>() >= self.survival(*x) {
            return None;
        }
        Some(self.sample_jump(*x, rng))
    }
    fn density_m(&self, x: &f64, y: &f64) -> f64 {
        self.density_1(*x, *y)
    }
    fn sample_psi(&self, rng: &mut dyn RngCore) -> f64 {
        self.sample_jump(self.v, rng)
    }
}

impl GridKernel for GaussianMixtureKernel {
    fn domain(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
    fn density_1(&self, x: f64, y: f64) -> f64 {
        self.survival(x) * self.mixture_pdf(x, y)
    }
}

/// A certified finite matrix seen as a kernel with counting measure.
#[derive(Debug, Clone)]
pub struct FiniteKernel {
    chain: AugmentedChain,
    cert: MinorizationCertificate,
    psi: WeightedIndex<f64>,
}

impl FiniteKernel {
    pub fn new(b: &NonNegMatrix, cert: MinorizationCertificate) -> Result<Self, KernelError> {
        let psi = WeightedIndex::new(&cert.psi).map_err(|e| KernelError::Config(e.to_string()))?;
        Ok(FiniteKernel {
            chain: augment(b)?,
            cert,
            psi,
        })
    }
}

impl KernelModel for FiniteKernel {
    type State = usize;

    fn block_len(&self) -> usize {
        self.cert.m
    }
    fn reference_point(&self) -> usize {
        self.cert.v
    }
    fn constants(&self) -> (f64, f64) {
        (self.cert.c1, self.cert.c2)
    }
    fn delta(&self) -> f64 {
        self.cert.delta
    }
    fn step(&self, x: &usize, rng: &mut dyn RngCore) -> Option<usize> {
        match self.chain.step(*x, rng) {
            Step::To(y) => Some(y),
            Step::Killed => None,
        }
    }
    fn density_m(&self, x: &usize, y: &usize) -> f64 {
        self.cert.power().get(*x, *y)
    }
    fn sample_psi(&self, rng: &mut dyn RngCore) -> usize {
        self.psi.sample(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minorize::{certify_minorization, solve_via_split, SplitEngine};
    use crate::mc::McConfig;

    #[test]
    fn rank_one_kernel_regenerates_every_block() {
        let k = UniformKillKernel { kill: 0.2, m: 2 };
        let mut rng = cycle_rng(1, 0, 0);
        let mut survived = 0;
        for _ in 0..20_000 {
            let c = split_block_cycle(&k, &mut rng, 1000).unwrap();
            assert_eq!(c.tau, 1);
            if c.survived {
                survived += 1;
                assert_eq!((c.min_coin, c.max_coin), (1.0, 1.0));
            }
        }
        assert!((survived as f64 / 20_000.0 - 0.64).abs() < 0.015);
    }

    #[test]
    fn uniform_kernel_eigenvalue() {
        let k = UniformKillKernel { kill: 0.2, m: 2 };
        let cfg = KernelConfig {
            seed: 2,
            n_cycles: 100_000,
            query_points: vec![0.1, 0.5, 0.9],
            u_paths: 5_000,
            ..KernelConfig::default()
        };
        let est = estimate_kernel_pf(&k, &cfg).unwrap();
        assert!((est.lambda_b - 0.8).abs() <= 3.0 * est.lambda_b_halfwidth);
        for p in &est.u {
            assert!((p.u.value - 1.0).abs() <= 4.0 * p.u.std_error + 1e-12);
        }
    }

    #[test]
    fn uniform_kernel_oracle() {
        let k = UniformKillKernel { kill: 0.2, m: 2 };
        assert!((oracle_lambda(&k, 100).unwrap() - 0.8).abs() < 1e-6);
        assert!((oracle_lambda(&k, 1).unwrap() - 0.8).abs() < 1e-12);
        let b = discretize_oracle(&k, 1).unwrap();
        assert!((b.get(0, 0) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn flagship_constants_bracket_ratios() {
        let k = GaussianMixtureKernel::default();
        let (c1, c2) = k.constants();
        assert!(c1 > 0.3 && c1 < c2);
        let mut rng = cycle_rng(3, 0, 0);
        for _ in 0..10_000 {
            let x: f64 = rng.random();
            let y: f64 = rng.random();
            let r = k.density_1(x, y) / k.density_1(k.v, y);
            assert!(c1 <= r && r <= c2);
        }
        // the jump density integrates to one on [0, 1]
        let n = 20_000;
        let integral: f64 = (0..n)
            .map(|i| k.mixture_pdf(0.3, (i as f64 + 0.5) / n as f64) / n as f64)
            .sum();
        assert!((integral - 1.0).abs() < 1e-6);
    }

    #[test]
    fn flagship_cycles_are_finite_with_valid_coins() {
        let k = GaussianMixtureKernel::default();
        let mut rng = cycle_rng(4, 0, 0);
        for _ in 0..2_000 {
            let c = split_block_cycle(&k, &mut rng, 100_000).unwrap();
            assert!(!c.truncated);
            if c.tau > 1 || c.survived {
                assert!(c.min_coin > 0.0 && c.max_coin <= 1.0);
            }
        }
    }

    #[test]
    fn oracle_grid_refinement_is_cauchy() {
        let k = GaussianMixtureKernel::default();
        let l50 = oracle_lambda(&k, 50).unwrap();
        let l100 = oracle_lambda(&k, 100).unwrap();
        let l200 = oracle_lambda(&k, 200).unwrap();
        assert!((l200 - l100).abs() < (l100 - l50).abs());
        assert!((l200 - l100).abs() < 1e-4);
    }

    #[test]
    fn violated_constants_are_hard_errors() {
        struct Bad;
        impl KernelModel for Bad {
            type State = f64;
            fn block_len(&self) -> usize {
                1
            }
            fn reference_point(&self) -> f64 {
                0.0
            }
            fn constants(&self) -> (f64, f64) {
                (5.0, 5.0)
            }
            fn delta(&self) -> f64 {
                1.0
            }
            fn step(&self, _x: &f64, rng: &mut dyn RngCore) -> Option<f64> {
                Some(rng.random())
            }
            fn density_m(&self, x: &f64, _y: &f64) -> f64 {
                1.0 + x
            }
            fn sample_psi(&self, rng: &mut dyn RngCore) -> f64 {
                rng.random()
            }
        }
        let mut rng = cycle_rng(5, 0, 0);
        assert!(matches!(
            split_block_cycle(&Bad, &mut rng, 10),
            Err(KernelError::CoinOutOfRange { .. })
        ));
    }

    #[test]
    fn finite_kernel_agrees_with_split_engine() {
        let b = NonNegMatrix::from_dense(&[vec![0.2, 0.4], vec![0.3, 0.1]]).unwrap();
        let cert = certify_minorization(&b, 0).unwrap();
        let k = FiniteKernel::new(&b, cert.clone()).unwrap();
        let cfg = KernelConfig {
            seed: 6,
            n_cycles: 100_000,
            query_points: vec![0, 1],
            u_paths: 20_000,
            ..KernelConfig::default()
        };
        let est = estimate_kernel_pf(&k, &cfg).unwrap();
        let split = solve_via_split(
            &b,
            &cert,
            &SplitEngine::MonteCarlo(McConfig { seed: 7, ..McConfig::default() }),
        )
        .unwrap();
        let hw = est.lambda_b_halfwidth.max(match &split {
            crate::minorize::SplitOutcome::MonteCarlo(r) => r.lambda_b_halfwidth,
            _ => unreachable!(),
        });
        assert!((est.lambda_b - split.lambda()).abs() <= 3.0 * 2f64.sqrt() * hw);
        assert!((est.lambda_b - 0.5).abs() <= 3.0 * est.lambda_b_halfwidth);
        // u(1)/u(0) = 0.75
        let ratio = est.u[1].u.value / est.u[0].u.value;
        assert!((ratio - 0.75).abs() < 0.03);
        // η from ψ has the direction (1, 1)
        let e0 = est.eta.mass_where(|&s| s == 0);
        let e1 = est.eta.mass_where(|&s| s == 1);
        assert!((e1 / e0 - 1.0).abs() < 0.03);
        assert!((est.eta.total - (e0 + e1)).abs() < 1e-9);
    }

    #[test]
    fn histogram_bins_atoms() {
        let m = EmpiricalMeasure {
            atoms: vec![(0.05, 1.0), (0.95, 2.0), (1.0, 0.5)],
            total: 3.5,
        };
        assert_eq!(m.histogram(0.0, 1.0, 2), vec![1.0, 2.5]);
    }
}
