//! Deterministic engine: evaluates the cycle transform
//! `h(θ) = E_z e^{θτ} I(T > τ)` through the taboo resolvent and solves
//! `h(θ) = 1`.
//!
//! Splitting the state space into `z` and the taboo set `S∖{z}`, a cycle is
//! either a self-loop at `z` or an excursion `z → S∖{z} → … → z`, so with
//! `s = e^θ`
//!
//! ```text
//! h(θ) = s·B(z,z) + s²·r (I − sQ)⁻¹ c
//! ```
//!
//! where `Q` is `B` restricted to `S∖{z}`, `r = B(z,·)` and `c = B(·,z)`.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::graph::analyze_graph;
use crate::linalg::{
    balance_log_scale, spectral_radius, ScaledSystem, SpectralRadius, RADIUS_MAX_ITER, RADIUS_TOL,
};
use crate::matrix::{max_abs, NonNegMatrix};
use crate::root::{solve_increasing, Eval, RootError};
use crate::serde_ext;

pub const DEFAULT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("matrix is reducible: state {} does not reach state {}", .witness.0, .witness.1)]
    Reducible { witness: (usize, usize) },
    #[error("state {z} out of range for n = {n}")]
    InvalidState { z: usize, n: usize },
    #[error("cycle transform never reaches one (sup h = {sup_h})")]
    NoCrossing { sup_h: f64 },
    #[error("cycle transform does not fall below one")]
    NoLowerBracket,
    #[error("{side} eigenvector component at state {state} is {value}")]
    NonPositiveEigenvector {
        side: &'static str,
        state: usize,
        value: f64,
    },
    #[error("cycle transform diverges at θ = {theta}")]
    Divergent { theta: f64 },
}

impl From<RootError> for SolveError {
    fn from(e: RootError) -> Self {
        match e {
            RootError::NoCrossing { sup_value } => SolveError::NoCrossing { sup_h: sup_value },
            RootError::NoLowerBracket => SolveError::NoLowerBracket,
        }
    }
}

/// `B` split around the regeneration state `z`.
#[derive(Debug, Clone)]
pub struct TabooDecomposition {
    pub z: usize,
    /// `states[k]` is the original index of taboo state `k`.
    pub states: Vec<usize>,
    pub q: NonNegMatrix,
    pub r: Vec<f64>,
    pub c: Vec<f64>,
    pub b_zz: f64,
    pub rho_q: f64,
    pub rho_q_info: SpectralRadius,
    log_scale: Vec<f64>,
    system: ScaledSystem,
}

pub fn taboo_decompose(b: &NonNegMatrix, z: usize) -> Result<TabooDecomposition, SolveError> {
    let n = b.n();
    if z >= n {
        return Err(SolveError::InvalidState { z, n });
    }
    let graph = analyze_graph(b);
    if let Some(witness) = graph.scc_witness {
        return Err(SolveError::Reducible { witness });
    }
    Ok(decompose_unchecked(b, z, &balance_log_scale(b)))
}

fn decompose_unchecked(b: &NonNegMatrix, z: usize, log_scale: &[f64]) -> TabooDecomposition {
    let n = b.n();
    let states: Vec<usize> = (0..n).filter(|&x| x != z).collect();
    let mut index = vec![usize::MAX; n];
    for (k, &x) in states.iter().enumerate() {
        index[x] = k;
    }
    let mut r = vec![0.0; n - 1];
    let mut c = vec![0.0; n - 1];
    let mut q_rows = vec![Vec::new(); n - 1];
    for (i, j, w) in b.entries() {
        match (i == z, j == z) {
            (true, true) => {}
            (true, false) => r[index[j]] = w,
            (false, true) => c[index[i]] = w,
            (false, false) => q_rows[index[i]].push((index[j], w)),
        }
    }
    let q = NonNegMatrix::from_sorted_rows(n - 1, q_rows);
    let q_scale: Vec<f64> = states.iter().map(|&x| log_scale[x]).collect();
    let rho_q_info = spectral_radius(&q, RADIUS_TOL, RADIUS_MAX_ITER);
    TabooDecomposition {
        z,
        system: ScaledSystem::new(&q, &q_scale),
        states,
        q,
        r,
        c,
        b_zz: b.get(z, z),
        rho_q: rho_q_info.value,
        rho_q_info,
        log_scale: log_scale.to_vec(),
    }
}

impl TabooDecomposition {
    fn balanced_r(&self) -> Vec<f64> {
        let pz = self.log_scale[self.z];
        self.r
            .iter()
            .zip(&self.states)
            .map(|(&w, &y)| if w == 0.0 { 0.0 } else { w * (self.log_scale[y] - pz).exp() })
            .collect()
    }

    fn balanced_c(&self) -> Vec<f64> {
        let pz = self.log_scale[self.z];
        self.c
            .iter()
            .zip(&self.states)
            .map(|(&w, &x)| if w == 0.0 { 0.0 } else { w * (pz - self.log_scale[x]).exp() })
            .collect()
    }

    /// `(h, dh/dθ)` at `θ`, or `None` when `e^θ ρ(Q) >= 1`.
    pub fn transform_with_slope(&self, theta: f64) -> Option<(f64, f64)> {
        let s = theta.exp();
        if self.states.is_empty() {
            let h = s * self.b_zz;
            return Some((h, h));
        }
        let lu = self.system.factor(s)?;
        let r = self.balanced_r();
        let c = self.balanced_c();
        let w = lu.solve(&c);
        let y = lu.solve_transpose(&r);
        let rw = dot(&r, &w);
        let h = s * self.b_zz + s * s * rw;
        // dh/ds = b_zz + 2s r·w + s y·(w - c), using sQ̂w = w - c
        let ywc: f64 = y.iter().zip(w.iter().zip(&c)).map(|(a, (b, c))| a * (b - c)).sum();
        let dh_ds = self.b_zz + 2.0 * s * rw + s * ywc;
        let (h, slope) = (h, s * dh_ds);
        (h.is_finite() && slope.is_finite()).then_some((h, slope))
    }

    /// Column and row eigenvectors in balanced coordinates at `s = e^θ`,
    /// normalized to one at `z`.
    fn balanced_vectors(&self, theta: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.states.len() + 1;
        let mut u = vec![1.0; n];
        let mut eta = vec![1.0; n];
        if !self.states.is_empty() {
            let s = theta.exp();
            let lu = self.system.factor(s)?;
            let w = lu.solve(&self.balanced_c());
            let y = lu.solve_transpose(&self.balanced_r());
            for (k, &x) in self.states.iter().enumerate() {
                u[x] = s * w[k];
                eta[x] = s * y[k];
            }
        }
        Some((u, eta))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Value of the cycle transform, with divergence as a distinct outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleTransform {
    Finite(f64),
    Divergent,
}

pub fn cycle_transform_h(td: &TabooDecomposition, theta: f64) -> CycleTransform {
    match td.transform_with_slope(theta) {
        Some((h, _)) => CycleTransform::Finite(h),
        None => CycleTransform::Divergent,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaSolution {
    pub theta: f64,
    pub lambda_star: f64,
    pub h_residual: f64,
    /// `h'(θ) = E_z τ e^{θτ} I(T > τ)`; finite means the derivative exists at θ.
    pub h_prime: f64,
    pub iterations: usize,
    /// Bisection stopped at floating-point resolution.
    pub bracket_collapsed: bool,
}

pub fn solve_theta(td: &TabooDecomposition, tol: f64) -> Result<ThetaSolution, SolveError> {
    let root = solve_increasing(
        |t| match td.transform_with_slope(t) {
            Some((h, _)) => Eval::Finite(h),
            None => Eval::Divergent,
        },
        0.0,
        tol,
    )?;
    let (mut theta, mut residual) = (root.theta, (root.value - 1.0).abs());
    let (h, slope) = td
        .transform_with_slope(theta)
        .ok_or(SolveError::Divergent { theta })?;
    debug_assert!((h - 1.0).abs() == residual);
    // one Newton step, kept only when it improves the residual
    if residual > 0.0 && slope > 0.0 {
        let candidate = theta - (h - 1.0) / slope;
        if let Some((hc, _)) = td.transform_with_slope(candidate) {
            if (hc - 1.0).abs() < residual {
                theta = candidate;
                residual = (hc - 1.0).abs();
            }
        }
    }
    let h_prime = td
        .transform_with_slope(theta)
        .map(|(_, d)| d)
        .ok_or(SolveError::Divergent { theta })?;
    Ok(ThetaSolution {
        theta,
        lambda_star: (-theta).exp(),
        h_residual: residual,
        h_prime,
        iterations: root.iterations,
        bracket_collapsed: root.collapsed,
    })
}

/// Perron-Frobenius eigentriple normalized at `z`.
#[derive(Debug, Clone, Serialize)]
pub struct PFSolution {
    pub theta: f64,
    pub lambda_star: f64,
    pub z: usize,
    pub u_star: Vec<f64>,
    pub eta_star: Vec<f64>,
    pub h_residual: f64,
    /// `(‖Bu − λu‖∞ / ‖u‖∞, ‖ηB − λη‖∞ / ‖η‖∞)`.
    pub eig_residuals: (f64, f64),
    #[serde(serialize_with = "serde_ext::extended_f64")]
    pub h_prime: f64,
    pub bracket_collapsed: bool,
}

impl PFSolution {
    pub fn normalizer(&self) -> f64 {
        dot(&self.u_star, &self.eta_star)
    }
}

/// Relative eigen-residuals of a candidate triple.
pub fn eigen_residuals(b: &NonNegMatrix, lambda: f64, u: &[f64], eta: &[f64]) -> (f64, f64) {
    let bu = b.mul_vec(u);
    let col = bu
        .iter()
        .zip(u)
        .map(|(a, x)| (a - lambda * x).abs())
        .fold(0.0, f64::max)
        / max_abs(u);
    let etab = b.vec_mul(eta);
    let row = etab
        .iter()
        .zip(eta)
        .map(|(a, x)| (a - lambda * x).abs())
        .fold(0.0, f64::max)
        / max_abs(eta);
    (col, row)
}

pub fn eigenvectors(
    b: &NonNegMatrix,
    td: &TabooDecomposition,
    theta: f64,
) -> Result<PFSolution, SolveError> {
    let (u_hat, eta_hat) = td
        .balanced_vectors(theta)
        .ok_or(SolveError::Divergent { theta })?;
    let pz = td.log_scale[td.z];
    let u: Vec<f64> = u_hat
        .iter()
        .enumerate()
        .map(|(x, &v)| v * (td.log_scale[x] - pz).exp())
        .collect();
    let eta: Vec<f64> = eta_hat
        .iter()
        .enumerate()
        .map(|(x, &v)| v * (pz - td.log_scale[x]).exp())
        .collect();
    for (side, vec) in [("column", &u), ("row", &eta)] {
        if let Some((state, &value)) = vec
            .iter()
            .enumerate()
            .find(|(_, v)| **v <= 0.0 || !v.is_finite())
        {
            return Err(SolveError::NonPositiveEigenvector { side, state, value });
        }
    }
    let lambda_star = (-theta).exp();
    let (h, h_prime) = td
        .transform_with_slope(theta)
        .ok_or(SolveError::Divergent { theta })?;
    Ok(PFSolution {
        theta,
        lambda_star,
        z: td.z,
        eig_residuals: eigen_residuals(b, lambda_star, &u, &eta),
        u_star: u,
        eta_star: eta,
        h_residual: (h - 1.0).abs(),
        h_prime,
        bracket_collapsed: false,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct ExactOptions {
    /// Regeneration state; `None` picks one automatically.
    pub z: Option<usize>,
    pub tol: f64,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions {
            z: None,
            tol: DEFAULT_TOL,
        }
    }
}

/// First state with the largest row sum.
pub fn largest_row_sum_state(b: &NonNegMatrix) -> usize {
    let sums = b.row_sums();
    let mut best = 0;
    for (x, &s) in sums.iter().enumerate() {
        if s > sums[best] {
            best = x;
        }
    }
    best
}

/// Solves for `θ`, `λ*`, `u*`, `η*`.
///
/// Without an explicit `z`, `θ` is solved at the largest-row-sum state and
/// the eigenvectors are then normalized at the state carrying the most
/// twisted stationary mass `π*(x) ∝ u*(x)η*(x)`. That state has the
/// shortest mean twisted return time, so its resolvent is the best
/// conditioned and the normalized vectors have the smallest dynamic range.
pub fn solve_exact(b: &NonNegMatrix, opts: ExactOptions) -> Result<PFSolution, SolveError> {
    let n = b.n();
    if let Some(z) = opts.z {
        if z >= n {
            return Err(SolveError::InvalidState { z, n });
        }
    }
    let graph = analyze_graph(b);
    if let Some(witness) = graph.scc_witness {
        return Err(SolveError::Reducible { witness });
    }
    let log_scale = balance_log_scale(b);
    let z0 = opts.z.unwrap_or_else(|| largest_row_sum_state(b));
    let td0 = decompose_unchecked(b, z0, &log_scale);
    let ts = solve_theta(&td0, opts.tol)?;

    let td = match opts.z {
        Some(_) => td0,
        None => {
            let (u, eta) = td0
                .balanced_vectors(ts.theta)
                .ok_or(SolveError::Divergent { theta: ts.theta })?;
            let mut best = z0;
            let mut best_mass = u[z0] * eta[z0];
            for x in 0..n {
                let mass = u[x] * eta[x];
                if mass > best_mass {
                    best = x;
                    best_mass = mass;
                }
            }
            if best == z0 {
                td0
            } else {
                decompose_unchecked(b, best, &log_scale)
            }
        }
    };
    let mut sol = eigenvectors(b, &td, ts.theta)?;
    sol.bracket_collapsed = ts.bracket_collapsed;
    Ok(sol)
}

/// Sufficient condition `θ₂ > θ₁` for a root with finite derivative.
#[derive(Debug, Clone, Serialize)]
pub struct AbscissaCheck {
    /// Abscissa of `E_z e^{γT}`: `−ln ρ(B)`.
    #[serde(serialize_with = "serde_ext::extended_f64")]
    pub theta1: f64,
    /// Abscissa of `E_z e^{γ(T∧τ)}`: `−ln ρ(Q)`, `+∞` for nilpotent `Q`.
    #[serde(serialize_with = "serde_ext::extended_f64")]
    pub theta2: f64,
    pub satisfied: bool,
}

pub const GAP_MARGIN: f64 = 1e-10;

pub fn check_abscissa_gap(b: &NonNegMatrix, td: &TabooDecomposition) -> AbscissaCheck {
    let rho_b = spectral_radius(b, RADIUS_TOL, RADIUS_MAX_ITER).value;
    let theta1 = clean_neg_log(rho_b);
    let theta2 = clean_neg_log(td.rho_q);
    AbscissaCheck {
        theta1,
        theta2,
        satisfied: theta2 > theta1 + GAP_MARGIN,
    }
}

/// `−ln ρ`, with `ρ = 0 ↦ +∞` and `ρ ≈ 1 ↦ 0` (never-killed chains).
fn clean_neg_log(rho: f64) -> f64 {
    if rho <= 0.0 {
        f64::INFINITY
    } else if (rho - 1.0).abs() <= RADIUS_TOL {
        0.0
    } else {
        -rho.ln()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolidarityReport {
    pub thetas: Vec<f64>,
    pub max_discrepancy: f64,
}

/// Solves `h_z(θ) = 1` at every `z`.
pub fn solidarity_scan(b: &NonNegMatrix, tol: f64) -> Result<SolidarityReport, SolveError> {
    let graph = analyze_graph(b);
    if let Some(witness) = graph.scc_witness {
        return Err(SolveError::Reducible { witness });
    }
    let log_scale = balance_log_scale(b);
    let thetas = (0..b.n())
        .into_par_iter()
        .map(|z| solve_theta(&decompose_unchecked(b, z, &log_scale), tol).map(|t| t.theta))
        .collect::<Result<Vec<_>, _>>()?;
    let max = thetas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = thetas.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SolidarityReport {
        max_discrepancy: max - min,
        thetas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(rows: &[Vec<f64>]) -> NonNegMatrix {
        NonNegMatrix::from_dense(rows).unwrap()
    }

    fn asym() -> NonNegMatrix {
        dense(&[vec![0.2, 0.4], vec![0.3, 0.1]])
    }

    fn periodic() -> NonNegMatrix {
        dense(&[vec![0.0, 0.5], vec![0.5, 0.0]])
    }

    fn one() -> NonNegMatrix {
        dense(&[vec![0.7]])
    }

    fn finite(h: CycleTransform) -> f64 {
        match h {
            CycleTransform::Finite(v) => v,
            CycleTransform::Divergent => panic!("divergent"),
        }
    }

    #[test]
    fn decomposition_examples() {
        let td = taboo_decompose(&asym(), 0).unwrap();
        assert_eq!(td.q.to_dense(), vec![vec![0.1]]);
        assert_eq!(td.r, vec![0.4]);
        assert_eq!(td.c, vec![0.3]);
        assert_eq!(td.b_zz, 0.2);
        assert!((td.rho_q - 0.1).abs() < 1e-12);

        let td = taboo_decompose(&periodic(), 0).unwrap();
        assert_eq!(td.q.nnz(), 0);
        assert_eq!((td.r.clone(), td.c.clone(), td.b_zz), (vec![0.5], vec![0.5], 0.0));
        assert_eq!(td.rho_q, 0.0);

        let td = taboo_decompose(&one(), 0).unwrap();
        assert_eq!(td.q.n(), 0);
        assert_eq!(td.b_zz, 0.7);
        assert_eq!(td.rho_q, 0.0);

        let reducible = dense(&[vec![0.5, 0.5], vec![0.0, 0.5]]);
        assert!(matches!(
            taboo_decompose(&reducible, 0),
            Err(SolveError::Reducible { .. })
        ));
    }

    #[test]
    fn transform_examples() {
        let td = taboo_decompose(&asym(), 0).unwrap();
        // 2·0.2 + 4·0.4·0.3/(1 − 2·0.1) = 1
        assert!((finite(cycle_transform_h(&td, 2f64.ln())) - 1.0).abs() < 1e-14);
        // 0.2 + 0.12/0.9
        let h0 = finite(cycle_transform_h(&td, 0.0));
        assert!((h0 - (0.2 + 0.12 / 0.9)).abs() < 1e-15);
        // beyond the taboo radius e^θ ≥ 10
        assert_eq!(cycle_transform_h(&td, 10f64.ln() + 1e-9), CycleTransform::Divergent);

        let td = taboo_decompose(&one(), 0).unwrap();
        assert!((finite(cycle_transform_h(&td, 0.0)) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn slope_matches_finite_difference() {
        let td = taboo_decompose(&asym(), 0).unwrap();
        for &t in &[-1.0, 0.0, 0.5, 1.5, 2.2] {
            let (_, d) = td.transform_with_slope(t).unwrap();
            let e = 1e-6;
            let hp = finite(cycle_transform_h(&td, t + e));
            let hm = finite(cycle_transform_h(&td, t - e));
            let fd = (hp - hm) / (2.0 * e);
            assert!((d - fd).abs() < 1e-6 * d.max(1.0), "t={t}: {d} vs {fd}");
        }
    }

    #[test]
    fn h_is_increasing_on_grid() {
        let td = taboo_decompose(&asym(), 1).unwrap();
        let mut prev = 0.0;
        let mut t = -5.0;
        while let CycleTransform::Finite(h) = cycle_transform_h(&td, t) {
            assert!(h > prev);
            prev = h;
            t += 0.01;
        }
        assert!(t > 0.69);
    }

    #[test]
    fn theta_examples() {
        let ts = solve_theta(&taboo_decompose(&one(), 0).unwrap(), DEFAULT_TOL).unwrap();
        assert!((ts.theta + 0.7f64.ln()).abs() < 1e-12);
        assert!((ts.lambda_star - 0.7).abs() < 1e-12);

        let ts = solve_theta(&taboo_decompose(&asym(), 0).unwrap(), DEFAULT_TOL).unwrap();
        assert!((ts.lambda_star - 0.5).abs() < 1e-12);
        assert!(ts.h_residual <= DEFAULT_TOL);

        let ts = solve_theta(&taboo_decompose(&periodic(), 0).unwrap(), DEFAULT_TOL).unwrap();
        assert!((ts.lambda_star - 0.5).abs() < 1e-12);

        let stochastic = dense(&[vec![0.5, 0.5, 0.0], vec![0.0, 0.2, 0.8], vec![1.0, 0.0, 0.0]]);
        let ts = solve_theta(&taboo_decompose(&stochastic, 2).unwrap(), DEFAULT_TOL).unwrap();
        assert!(ts.theta.abs() < 1e-12);
        assert!((ts.lambda_star - 1.0).abs() < 1e-12);
    }

    #[test]
    fn super_stochastic_input_gives_negative_theta() {
        let g = dense(&[vec![2.0, 2.0], vec![2.0, 2.0]]);
        let sol = solve_exact(&g, ExactOptions::default()).unwrap();
        assert!((sol.lambda_star - 4.0).abs() < 1e-11);
        assert!(sol.theta < 0.0);
    }

    #[test]
    fn eigenvector_examples() {
        let sol = solve_exact(&asym(), ExactOptions { z: Some(0), tol: DEFAULT_TOL }).unwrap();
        assert_eq!(sol.u_star[0], 1.0);
        assert!((sol.u_star[1] - 0.75).abs() < 1e-12);
        assert_eq!(sol.eta_star[0], 1.0);
        assert!((sol.eta_star[1] - 1.0).abs() < 1e-12);
        assert!(sol.eig_residuals.0 < 1e-12 && sol.eig_residuals.1 < 1e-12);

        let sol = solve_exact(&one(), ExactOptions::default()).unwrap();
        assert_eq!((sol.u_star.clone(), sol.eta_star.clone()), (vec![1.0], vec![1.0]));

        let sol = solve_exact(&periodic(), ExactOptions { z: Some(0), tol: DEFAULT_TOL }).unwrap();
        assert!((sol.u_star[1] - 1.0).abs() < 1e-12);
        assert!((sol.eta_star[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn default_state_normalizes_where_twisted_mass_is_largest() {
        let sol = solve_exact(&asym(), ExactOptions::default()).unwrap();
        // π* = (4/7, 3/7)
        assert_eq!(sol.z, 0);
    }

    #[test]
    fn wrong_theta_is_reported_not_clamped() {
        // beyond the taboo radius the resolvent is not an M-matrix inverse
        let td = taboo_decompose(&asym(), 0).unwrap();
        assert!(matches!(
            eigenvectors(&asym(), &td, 3.0),
            Err(SolveError::Divergent { .. })
        ));
    }

    #[test]
    fn abscissa_examples() {
        let td = taboo_decompose(&asym(), 0).unwrap();
        let g = check_abscissa_gap(&asym(), &td);
        assert!((g.theta1 - 2f64.ln()).abs() < 1e-9);
        assert!((g.theta2 - 10f64.ln()).abs() < 1e-9);
        assert!(g.satisfied);

        let td = taboo_decompose(&one(), 0).unwrap();
        let g = check_abscissa_gap(&one(), &td);
        assert!((g.theta1 + 0.7f64.ln()).abs() < 1e-9);
        assert_eq!(g.theta2, f64::INFINITY);
        assert!(g.satisfied);

        let swap = dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let td = taboo_decompose(&swap, 0).unwrap();
        let g = check_abscissa_gap(&swap, &td);
        assert_eq!(g.theta1, 0.0);
        assert_eq!(g.theta2, f64::INFINITY);
    }

    #[test]
    fn solidarity_examples() {
        let r = solidarity_scan(&asym(), DEFAULT_TOL).unwrap();
        assert!(r.max_discrepancy <= 1e-10);
        let r = solidarity_scan(&one(), DEFAULT_TOL).unwrap();
        assert_eq!(r.max_discrepancy, 0.0);
    }

    #[test]
    fn invalid_state() {
        assert!(matches!(
            solve_exact(&asym(), ExactOptions { z: Some(5), tol: DEFAULT_TOL }),
            Err(SolveError::InvalidState { z: 5, n: 2 })
        ));
    }
}
