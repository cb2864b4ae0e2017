//! Minorization certificates `B^m(x,·) ≥ δψ(·)`, the split decomposition
//! `B^m = δψ + B̃`, and regeneration at the randomized times where the chain
//! is drawn from `ψ`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::exact::{eigen_residuals, PFSolution};
use crate::linalg::{balance_log_scale, ScaledSystem};
use crate::matrix::{augment, AugmentedChain, MatrixError, NonNegMatrix, Step};
use crate::mc::{collect_samples, summarize, with_threads, McConfig, McError, McReport, RegenCycleSample, DOMAIN_CYCLES};
use crate::root::{solve_increasing, Eval};

/// Relative tolerance on the ratio bounds.
pub const RATIO_TOL: f64 = 1e-12;
/// Negative residual entries above this are rounding and clamped to zero.
pub const CLAMP_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MinorizationFailure {
    #[error("reference row {v} is empty")]
    EmptyReferenceRow { v: usize },
    #[error("B({x},{y}) > 0 but B({v},{y}) = 0: ratio unbounded")]
    SupportMismatch { v: usize, x: usize, y: usize },
    #[error("B({x},{y}) = 0 where B({v},{y}) > 0: lower constant is zero")]
    ZeroLowerBound { v: usize, x: usize, y: usize },
    #[error("no reference state and power m <= {m_max} gives a certificate")]
    Exhausted { m_max: usize, per_m: Vec<(usize, String)> },
}

#[derive(Debug, Clone, Serialize)]
pub struct MinorizationCertificate {
    pub v: usize,
    pub m: usize,
    pub c1: f64,
    pub c2: f64,
    /// `c1 Σ_w B^m(v,w)`.
    pub delta: f64,
    pub psi: Vec<f64>,
    /// `B^m = e^{log_scale} · power`.
    pub log_scale: f64,
    #[serde(skip)]
    power: NonNegMatrix,
    #[serde(skip)]
    residual: NonNegMatrix,
}

impl MinorizationCertificate {
    /// `B^m` up to the factor `e^{log_scale}`.
    pub fn power(&self) -> &NonNegMatrix {
        &self.power
    }

    /// `B̃ = B^m − δψ` up to the factor `e^{log_scale}`.
    pub fn residual(&self) -> &NonNegMatrix {
        &self.residual
    }

    /// `δ` in the units of [`Self::power`].
    fn scaled_delta(&self) -> f64 {
        self.c1 * self.power.row_sum(self.v)
    }

    /// `max |B^m − (δψ + B̃)|`, in the units of [`Self::power`].
    pub fn reconstruction_error(&self) -> f64 {
        let d = self.scaled_delta();
        let n = self.power.n();
        let mut err: f64 = 0.0;
        for x in 0..n {
            for y in 0..n {
                let rebuilt = d * self.psi[y] + self.residual.get(x, y);
                err = err.max((self.power.get(x, y) - rebuilt).abs());
            }
        }
        err
    }

    /// Largest violation of `B̃ ≤ (1 − c1/c2) B^m`, relative to `B^m`.
    pub fn dominance_violation(&self) -> f64 {
        let factor = 1.0 - self.c1 / self.c2;
        let mut worst: f64 = 0.0;
        for (x, y, w) in self.power.entries() {
            let excess = self.residual.get(x, y) - factor * w;
            worst = worst.max(excess / w);
        }
        worst
    }
}

/// Single-step minorization at reference state `v` for the matrix `power`, read as `B^m / e^{log_scale}`.
fn certify_power(
    power: &NonNegMatrix,
    v: usize,
    m: usize,
    log_scale: f64,
) -> Result<MinorizationCertificate, MinorizationFailure> {
    let reference = power.row(v);
    if reference.is_empty() {
        return Err(MinorizationFailure::EmptyReferenceRow { v });
    }
    let n = power.n();
    let mut c1 = f64::INFINITY;
    let mut c2: f64 = 0.0;
    for x in 0..n {
        for &(y, _) in power.row(x) {
            if power.get(v, y) == 0.0 {
                return Err(MinorizationFailure::SupportMismatch { v, x, y });
            }
        }
        for &(y, bv) in reference {
            let bx = power.get(x, y);
            if bx == 0.0 {
                return Err(MinorizationFailure::ZeroLowerBound { v, x, y });
            }
            let r = bx / bv;
            c1 = c1.min(r);
            c2 = c2.max(r);
        }
    }
    let total = power.row_sum(v);
    let psi_sparse: Vec<(usize, f64)> = reference.iter().map(|&(y, w)| (y, w / total)).collect();
    let mut psi = vec![0.0; n];
    for &(y, p) in &psi_sparse {
        psi[y] = p;
    }
    let rows = (0..n)
        .map(|x| {
            power
                .row(x)
                .iter()
                .filter_map(|&(y, w)| {
                    let r = w - c1 * power.get(v, y);
                    if r > CLAMP_TOL * w {
                        Some((y, r))
                    } else {
                        debug_assert!(r >= -CLAMP_TOL * w.max(1.0));
                        None
                    }
                })
                .collect()
        })
        .collect();
    Ok(MinorizationCertificate {
        v,
        m,
        c1,
        c2,
        delta: c1 * total * log_scale.exp(),
        psi,
        log_scale,
        power: power.clone(),
        residual: NonNegMatrix::from_sorted_rows(n, rows),
    })
}

/// Single-step minorization with reference state `v`.
pub fn certify_minorization(b: &NonNegMatrix, v: usize) -> Result<MinorizationCertificate, MinorizationFailure> {
    certify_power(b, v, 1, 0.0)
}

fn best_reference(power: &NonNegMatrix, m: usize, log_scale: f64) -> Result<MinorizationCertificate, String> {
    let mut best: Option<MinorizationCertificate> = None;
    let mut first_failure = None;
    for v in 0..power.n() {
        match certify_power(power, v, m, log_scale) {
            Ok(c) => {
                if best.as_ref().is_none_or(|b| c.c1 / c.c2 > b.c1 / b.c2) {
                    best = Some(c);
                }
            }
            Err(e) => {
                first_failure.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_failure.map(|e| e.to_string()).unwrap_or_default())
}

/// Smallest `m ≤ m_max` for which some reference state certifies `B^m`,
/// with the reference maximizing `c1/c2`.
pub fn certify_block_minorization(b: &NonNegMatrix, m_max: usize) -> Result<MinorizationCertificate, MinorizationFailure> {
    let mut per_m = Vec::new();
    let mut power = b.clone();
    let mut log_scale = 0.0;
    for m in 1..=m_max.max(1) {
        if m > 1 {
            power = power.matmul(b);
            let top = power.max_entry();
            if top > 0.0 {
                power = power.scaled(1.0 / top);
                log_scale += top.ln();
            }
        }
        match best_reference(&power, m, log_scale) {
            Ok(c) => return Ok(c),
            Err(reason) => per_m.push((m, reason)),
        }
    }
    Err(MinorizationFailure::Exhausted { m_max, per_m })
}

/// Lower bound `θ₁ − ln(1 − c1/c2)` on the taboo abscissa.
pub fn theta_gap_bound(cert: &MinorizationCertificate, theta1: f64) -> f64 {
    let ratio = cert.c1 / cert.c2;
    if ratio >= 1.0 {
        f64::INFINITY
    } else {
        theta1 - (-ratio).ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitStep {
    /// The next state is a fresh draw from `ψ`; the cycle ends.
    Regenerated,
    Moved(usize),
    Killed,
}

/// Sampler for split cycles.
#[derive(Debug, Clone)]
pub struct SplitChain {
    cert: MinorizationCertificate,
    psi: WeightedIndex<f64>,
    /// One-step split moves (`m = 1`): column `n` is the regeneration atom.
    split: Option<AugmentedChain>,
    /// One-step chain for block moves (`m > 1`).
    base: AugmentedChain,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplitError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("certificate is for a {cert} x {cert} matrix, got {n} x {n}")]
    Dimension { cert: usize, n: usize },
    #[error("regeneration coin {coin} outside [0, 1] at ({x}, {y})")]
    CoinOutOfRange { x: usize, y: usize, coin: f64 },
}

impl SplitChain {
    pub fn new(b: &NonNegMatrix, cert: &MinorizationCertificate) -> Result<Self, SplitError> {
        let n = b.n();
        if cert.psi.len() != n {
            return Err(SplitError::Dimension { cert: cert.psi.len(), n });
        }
        let psi = WeightedIndex::new(&cert.psi).expect("psi has positive mass");
        let split = if cert.m == 1 {
            let delta = cert.scaled_delta();
            let mut t: Vec<(usize, usize, f64)> = cert.residual.entries().collect();
            t.extend((0..n).map(|x| (x, n, delta)));
            Some(augment(&NonNegMatrix::from_triplets(n + 1, t)?)?)
        } else {
            None
        };
        Ok(SplitChain {
            cert: cert.clone(),
            psi,
            split,
            base: augment(b)?,
        })
    }

    pub fn certificate(&self) -> &MinorizationCertificate {
        &self.cert
    }

    pub fn sample_psi<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.psi.sample(rng)
    }

    /// `P(regenerate | block from x ends at y) = c1 B^m(v,y) / B^m(x,y)`.
    pub fn coin(&self, x: usize, y: usize) -> f64 {
        let p = &self.cert.power;
        self.cert.c1 * p.get(self.cert.v, y) / p.get(x, y)
    }

    /// One step of the split chain (`m = 1`) or one block (`m > 1`).
    pub fn step<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> Result<SplitStep, SplitError> {
        let n = self.base.n();
        if let Some(split) = &self.split {
            return Ok(match split.step(x, rng) {
                Step::To(y) if y == n => SplitStep::Regenerated,
                Step::To(y) => SplitStep::Moved(y),
                Step::Killed => SplitStep::Killed,
            });
        }
        let mut y = x;
        for _ in 0..self.cert.m {
            match self.base.step(y, rng) {
                Step::To(next) => y = next,
                Step::Killed => return Ok(SplitStep::Killed),
            }
        }
        let coin = self.coin(x, y);
        if !(0.0..=1.0 + RATIO_TOL).contains(&coin) {
            return Err(SplitError::CoinOutOfRange { x, y, coin });
        }
        Ok(if rng.random::<f64>() < coin {
            SplitStep::Regenerated
        } else {
            SplitStep::Moved(y)
        })
    }
}

/// A cycle from a `ψ` draw to the next regeneration, counted in blocks.
pub fn split_cycle<R: Rng + ?Sized>(
    chain: &SplitChain,
    rng: &mut R,
    n_max: usize,
) -> Result<RegenCycleSample, SplitError> {
    let mut x = chain.sample_psi(rng);
    let mut visits = vec![(x, 0)];
    let mut steps = 0;
    loop {
        steps += 1;
        let (survived, truncated) = match chain.step(x, rng)? {
            SplitStep::Regenerated => (true, false),
            SplitStep::Killed => (false, false),
            SplitStep::Moved(y) if steps >= n_max => {
                let _ = y;
                (false, true)
            }
            SplitStep::Moved(y) => {
                visits.push((y, steps));
                x = y;
                continue;
            }
        };
        return Ok(RegenCycleSample {
            tau: steps,
            survived,
            truncated,
            visits,
        });
    }
}

#[derive(Debug, Clone)]
pub enum SplitEngine {
    Exact { tol: f64 },
    MonteCarlo(McConfig),
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitMcReport {
    /// Block-level report: `θ` is the decay parameter of `B^m`.
    pub blocks: McReport,
    pub m: usize,
    pub lambda_b: f64,
    pub lambda_b_halfwidth: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitOutcome {
    Exact(PFSolution),
    MonteCarlo(SplitMcReport),
}

impl SplitOutcome {
    pub fn lambda(&self) -> f64 {
        match self {
            SplitOutcome::Exact(s) => s.lambda_star,
            SplitOutcome::MonteCarlo(r) => r.lambda_b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplitSolveError {
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Mc(#[from] McError),
    #[error("split transform never reaches one")]
    NoRoot,
    #[error("split resolvent is singular at θ = {theta}")]
    Divergent { theta: f64 },
}

struct SplitResolvent<'a> {
    cert: &'a MinorizationCertificate,
    system: ScaledSystem,
    phi: Vec<f64>,
    delta: f64,
}

impl SplitResolvent<'_> {
    /// `(w, y)` with `(I − sB̃)w = 1` and `y(I − sB̃) = ψ`.
    fn solve(&self, s: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let lu = self.system.factor(s)?;
        let ones: Vec<f64> = self.phi.iter().map(|p| (-p).exp()).collect();
        let psi: Vec<f64> = self.cert.psi.iter().zip(&self.phi).map(|(w, p)| w * p.exp()).collect();
        let w: Vec<f64> = lu.solve(&ones).iter().zip(&self.phi).map(|(w, p)| w * p.exp()).collect();
        let y: Vec<f64> = lu
            .solve_transpose(&psi)
            .iter()
            .zip(&self.phi)
            .map(|(y, p)| y * (-p).exp())
            .collect();
        Some((w, y))
    }

    /// `h(θ) = sδ ψ(I − sB̃)⁻¹1` and `dh/dθ`.
    fn transform(&self, theta: f64) -> Option<(f64, f64)> {
        let s = theta.exp();
        let (w, y) = self.solve(s)?;
        let psi_w: f64 = self.cert.psi.iter().zip(&w).map(|(a, b)| a * b).sum();
        let y_w1: f64 = y.iter().zip(&w).map(|(a, b)| a * (b - 1.0)).sum();
        let h = s * self.delta * psi_w;
        let dh_ds = self.delta * psi_w + self.delta * y_w1;
        (h.is_finite() && dh_ds.is_finite()).then_some((h, s * dh_ds))
    }
}

fn solve_split_exact(
    b: &NonNegMatrix,
    cert: &MinorizationCertificate,
    tol: f64,
) -> Result<PFSolution, SplitSolveError> {
    let phi = balance_log_scale(&cert.residual);
    let res = SplitResolvent {
        cert,
        system: ScaledSystem::new(&cert.residual, &phi),
        phi,
        delta: cert.scaled_delta(),
    };
    let root = solve_increasing(
        |t| match res.transform(t) {
            Some((h, _)) => Eval::Finite(h),
            None => Eval::Divergent,
        },
        0.0,
        tol,
    )
    .map_err(|_| SplitSolveError::NoRoot)?;
    let theta_scaled = root.theta;
    let s = theta_scaled.exp();
    let (w, y) = res
        .solve(s)
        .ok_or(SplitSolveError::Divergent { theta: theta_scaled })?;
    let (h, h_prime) = res
        .transform(theta_scaled)
        .ok_or(SplitSolveError::Divergent { theta: theta_scaled })?;
    let v = cert.v;
    let u: Vec<f64> = w.iter().map(|x| x / w[v]).collect();
    let eta: Vec<f64> = y.iter().map(|x| x / y[v]).collect();
    // B^m = e^{log_scale} · power, and the eigenvalue of B is the m-th root
    let theta = (theta_scaled - cert.log_scale) / cert.m as f64;
    let lambda_star = (-theta).exp();
    Ok(PFSolution {
        theta,
        lambda_star,
        z: v,
        eig_residuals: eigen_residuals(b, lambda_star, &u, &eta),
        u_star: u,
        eta_star: eta,
        h_residual: (h - 1.0).abs(),
        h_prime,
        bracket_collapsed: root.collapsed,
    })
}

pub fn solve_via_split(
    b: &NonNegMatrix,
    cert: &MinorizationCertificate,
    engine: &SplitEngine,
) -> Result<SplitOutcome, SplitSolveError> {
    match engine {
        SplitEngine::Exact { tol } => Ok(SplitOutcome::Exact(solve_split_exact(b, cert, *tol)?)),
        SplitEngine::MonteCarlo(cfg) => {
            cfg.validate()?;
            let chain = SplitChain::new(b, cert)?;
            let samples = with_threads(cfg.threads, || {
                let drawn: Vec<Result<RegenCycleSample, SplitError>> = {
                    use rayon::prelude::*;
                    (0..cfg.n_cycles as u64)
                        .into_par_iter()
                        .map(|i| split_cycle(&chain, &mut crate::mc::cycle_rng(cfg.seed, DOMAIN_CYCLES, i), cfg.n_max))
                        .collect()
                };
                drawn.into_iter().collect::<Result<Vec<_>, _>>()
            })?;
            let blocks = summarize(&samples, cert.v, cfg)?;
            let m = cert.m as f64;
            // block coins are scale-free, so θ here is the decay parameter of B^m itself
            let lambda_b = (-blocks.theta.theta_hat / m).exp();
            let lambda_b_halfwidth = lambda_b * blocks.theta.ci_halfwidth / m;
            Ok(SplitOutcome::MonteCarlo(SplitMcReport {
                blocks,
                m: cert.m,
                lambda_b,
                lambda_b_halfwidth,
            }))
        }
    }
}

/// Split cycles with infallible sampling, for finite certified matrices.
pub fn collect_split_cycles(chain: &SplitChain, n: usize, seed: u64, n_max: usize) -> Vec<RegenCycleSample> {
    collect_samples(n, seed, DOMAIN_CYCLES, |rng| {
        split_cycle(chain, rng, n_max).expect("certified coin lies in [0, 1]")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{solve_exact, ExactOptions};
    use crate::graph::analyze_graph;
    use crate::mc::{cycle_rng, saa_solve_theta};
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn dense(rows: &[Vec<f64>]) -> NonNegMatrix {
        NonNegMatrix::from_dense(rows).unwrap()
    }

    fn asym() -> NonNegMatrix {
        dense(&[vec![0.2, 0.4], vec![0.3, 0.1]])
    }

    #[test]
    fn asym_certificate() {
        let c = certify_minorization(&asym(), 0).unwrap();
        assert_eq!(c.c1, 0.25);
        assert!((c.c2 - 1.5).abs() < 1e-15);
        assert!((c.delta - 0.15).abs() < 1e-15);
        assert!((c.psi[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((c.psi[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!(c.reconstruction_error() <= 1e-14);
        assert!(c.dominance_violation() <= 4.0 * f64::EPSILON);
        assert_eq!(analyze_graph(&asym()).period, 1);
    }

    #[test]
    fn support_mismatch_fails() {
        let b = dense(&[vec![0.0, 0.5], vec![0.5, 0.0]]);
        assert_eq!(
            certify_minorization(&b, 0).unwrap_err(),
            MinorizationFailure::SupportMismatch { v: 0, x: 1, y: 0 }
        );
    }

    #[test]
    fn rank_one_matrix() {
        let b = dense(&[vec![0.3, 0.5], vec![0.3, 0.5]]);
        let c = certify_minorization(&b, 0).unwrap();
        assert_eq!((c.c1, c.c2), (1.0, 1.0));
        assert_eq!(c.delta, 0.8);
        assert_eq!(c.residual().nnz(), 0);
        assert_eq!(theta_gap_bound(&c, 0.3), f64::INFINITY);
    }

    #[test]
    fn block_minorization_examples() {
        let c = certify_block_minorization(&asym(), 4).unwrap();
        assert_eq!(c.m, 1);

        let periodic = dense(&[vec![0.0, 0.5], vec![0.5, 0.0]]);
        match certify_block_minorization(&periodic, 6).unwrap_err() {
            MinorizationFailure::Exhausted { per_m, .. } => assert_eq!(per_m.len(), 6),
            e => panic!("{e:?}"),
        }

        let b = dense(&[vec![0.1, 0.9], vec![0.5, 0.5]]);
        let c = certify_block_minorization(&b, 3).unwrap();
        assert_eq!(c.m, 1);
        // ratios relative to row 0 are (5, 5/9), relative to row 1 (1/5, 9/5)
        assert!((c.c1 / c.c2 - (1.0 / 9.0)).abs() < 1e-12);
    }

    #[test]
    fn block_minorization_needs_a_power() {
        // zero pattern in B, positive B^2
        let b = dense(&[vec![0.0, 0.6, 0.3], vec![0.4, 0.2, 0.3], vec![0.5, 0.4, 0.0]]);
        assert!(certify_block_minorization(&b, 1).is_err());
        let c = certify_block_minorization(&b, 3).unwrap();
        assert_eq!(c.m, 2);
        assert!(c.reconstruction_error() <= 1e-12);
        let exact = solve_exact(&b, ExactOptions::default()).unwrap();
        let split = solve_via_split(&b, &c, &SplitEngine::Exact { tol: 1e-13 }).unwrap();
        assert!((split.lambda() - exact.lambda_star).abs() < 1e-10);
    }

    #[test]
    fn gap_bound_formula() {
        let c = certify_minorization(&asym(), 0).unwrap();
        let theta1 = 2f64.ln();
        let bound = theta_gap_bound(&c, theta1);
        assert!((bound - (theta1 - (5.0f64 / 6.0).ln())).abs() < 1e-12);
        assert!((bound - 0.8755).abs() < 1e-4);
    }

    #[test]
    fn split_exact_matches_state_engine() {
        let b = asym();
        let c = certify_minorization(&b, 0).unwrap();
        let sol = match solve_via_split(&b, &c, &SplitEngine::Exact { tol: 1e-13 }).unwrap() {
            SplitOutcome::Exact(s) => s,
            _ => unreachable!(),
        };
        assert!((sol.lambda_star - 0.5).abs() < 1e-10);
        assert!((sol.u_star[1] / sol.u_star[0] - 0.75).abs() < 1e-10);
        assert!((sol.eta_star[1] / sol.eta_star[0] - 1.0).abs() < 1e-10);
        assert!(sol.eig_residuals.0 < 1e-10 && sol.eig_residuals.1 < 1e-10);
    }

    #[test]
    fn rank_one_split_closed_form() {
        let b = dense(&[vec![0.2, 0.6], vec![0.2, 0.6]]);
        let c = certify_minorization(&b, 0).unwrap();
        let sol = match solve_via_split(&b, &c, &SplitEngine::Exact { tol: 1e-14 }).unwrap() {
            SplitOutcome::Exact(s) => s,
            _ => unreachable!(),
        };
        assert!((sol.lambda_star - 0.8).abs() < 1e-13);
        assert!((sol.u_star[1] - 1.0).abs() < 1e-13);
        assert!((sol.eta_star[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rank_one_cycles_last_one_step() {
        let b = dense(&[vec![0.2, 0.6], vec![0.2, 0.6]]);
        let c = certify_minorization(&b, 0).unwrap();
        let chain = SplitChain::new(&b, &c).unwrap();
        let s = collect_split_cycles(&chain, 20_000, 1, 1000);
        assert!(s.iter().all(|c| c.tau == 1));
        let frac = s.iter().filter(|c| c.survived).count() as f64 / s.len() as f64;
        assert!((frac - 0.8).abs() < 0.015);
    }

    #[test]
    fn regeneration_rate_is_delta() {
        let b = asym();
        let chain = SplitChain::new(&b, &certify_minorization(&b, 0).unwrap()).unwrap();
        let mut rng = cycle_rng(5, 0, 0);
        let (mut regen, mut alive) = (0usize, 0usize);
        let mut x = chain.sample_psi(&mut rng);
        for _ in 0..200_000 {
            match chain.step(x, &mut rng).unwrap() {
                SplitStep::Regenerated => {
                    regen += 1;
                    alive += 1;
                    x = chain.sample_psi(&mut rng);
                }
                SplitStep::Moved(y) => {
                    alive += 1;
                    x = y;
                }
                SplitStep::Killed => x = chain.sample_psi(&mut rng),
            }
        }
        // every step regenerates w.p. δ regardless of the current state
        let rate = regen as f64 / 200_000.0;
        assert!((rate - 0.15).abs() < 0.005, "{rate}");
        assert!(alive > 0);
    }

    #[test]
    fn split_marginal_matches_b_rows() {
        let b = dense(&[vec![0.2, 0.3, 0.1], vec![0.25, 0.25, 0.2], vec![0.1, 0.4, 0.3]]);
        let c = certify_minorization(&b, 0).unwrap();
        let chain = SplitChain::new(&b, &c).unwrap();
        let mut rng = cycle_rng(6, 0, 0);
        let trials = 100_000;
        for x in 0..3 {
            let mut counts = [0usize; 4];
            for _ in 0..trials {
                let next = match chain.step(x, &mut rng).unwrap() {
                    SplitStep::Regenerated => chain.sample_psi(&mut rng),
                    SplitStep::Moved(y) => y,
                    SplitStep::Killed => 3,
                };
                counts[next] += 1;
            }
            let mut expected: Vec<f64> = (0..3).map(|y| b.get(x, y)).collect();
            expected.push(1.0 - b.row_sum(x));
            let chi2: f64 = counts
                .iter()
                .zip(&expected)
                .map(|(&o, &p)| {
                    let e = p * trials as f64;
                    (o as f64 - e).powi(2) / e
                })
                .sum();
            let p_value = 1.0 - ChiSquared::new(3.0).unwrap().cdf(chi2);
            assert!(p_value > 0.001, "row {x}: chi2 = {chi2}");
        }
    }

    #[test]
    fn split_mc_matches_exact() {
        let b = dense(&[vec![0.3, 0.2, 0.25], vec![0.1, 0.4, 0.2], vec![0.35, 0.15, 0.3]]);
        let exact = solve_exact(&b, ExactOptions::default()).unwrap();
        let c = certify_block_minorization(&b, 1).unwrap();
        let cfg = McConfig {
            seed: 9,
            n_cycles: 100_000,
            ..McConfig::default()
        };
        let r = match solve_via_split(&b, &c, &SplitEngine::MonteCarlo(cfg)).unwrap() {
            SplitOutcome::MonteCarlo(r) => r,
            _ => unreachable!(),
        };
        assert!((r.lambda_b - exact.lambda_star).abs() <= 3.0 * r.lambda_b_halfwidth);
    }

    #[test]
    fn block_split_mc_matches_exact() {
        let b = dense(&[vec![0.0, 0.6, 0.3], vec![0.4, 0.2, 0.3], vec![0.5, 0.4, 0.0]]);
        let exact = solve_exact(&b, ExactOptions::default()).unwrap();
        let c = certify_block_minorization(&b, 3).unwrap();
        assert_eq!(c.m, 2);
        let chain = SplitChain::new(&b, &c).unwrap();
        let s = collect_split_cycles(&chain, 50_000, 10, 1_000_000);
        let (theta, hw) = saa_solve_theta(&s, 1e-12).unwrap();
        let lambda_b = (-theta / 2.0).exp();
        let hw_b = lambda_b * hw / 2.0;
        assert!((lambda_b - exact.lambda_star).abs() <= 3.0 * hw_b);
    }
}
