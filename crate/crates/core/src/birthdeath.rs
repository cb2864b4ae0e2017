//! The slotted-queue birth-death chain killed on leaving `{1, 2, …}`:
//! closed forms for the infinite model and truncations to `{1, …, L}`.
//!
//! State `x` of the chain is stored at matrix index `x − 1`.

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::exact::{solve_exact, ExactOptions, SolveError};
use crate::graph::analyze_graph;
use crate::matrix::NonNegMatrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BdError {
    #[error("p = {0} must lie strictly between 0 and 1")]
    Probability(f64),
    #[error("truncation level {0} must be at least 2")]
    Level(usize),
    #[error("λ = {lambda} is below 2√(pq) = {threshold}: roots are complex")]
    ComplexRoots { lambda: f64, threshold: f64 },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// What happens to an up-step from the top level `L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UpperBoundary {
    /// The up-step leaves the truncation and the path is killed.
    #[default]
    Killed,
    /// The up-step is replaced by a hold at `L`.
    Reflecting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BirthDeathParams {
    pub p: f64,
    pub levels: usize,
    pub upper: UpperBoundary,
}

impl BirthDeathParams {
    pub fn new(p: f64, levels: usize) -> Result<Self, BdError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(BdError::Probability(p));
        }
        if levels < 2 {
            return Err(BdError::Level(levels));
        }
        Ok(BirthDeathParams {
            p,
            levels,
            upper: UpperBoundary::Killed,
        })
    }

    pub fn with_upper(self, upper: UpperBoundary) -> Self {
        BirthDeathParams { upper, ..self }
    }

    pub fn q(&self) -> f64 {
        1.0 - self.p
    }
}

pub fn bd_matrix(params: &BirthDeathParams) -> NonNegMatrix {
    let (p, q, l) = (params.p, params.q(), params.levels);
    let mut t = Vec::with_capacity(2 * l);
    for i in 0..l {
        if i + 1 < l {
            t.push((i, i + 1, p));
        }
        if i > 0 {
            t.push((i, i - 1, q));
        }
    }
    if params.upper == UpperBoundary::Reflecting {
        t.push((l - 1, l - 1, p));
    }
    NonNegMatrix::from_triplets(l, t).expect("valid tridiagonal weights")
}

/// `2√(pq)`.
pub fn closed_form_lambda(p: f64) -> f64 {
    2.0 * (p * (1.0 - p)).sqrt()
}

/// Perron-Frobenius eigenvalue of the killed truncation to `{1, …, L}`.
pub fn truncated_lambda(p: f64, levels: usize) -> f64 {
    closed_form_lambda(p) * (std::f64::consts::PI / (levels as f64 + 1.0)).cos()
}

/// `x (q/p)^{x/2}`.
pub fn closed_form_u(p: f64, x: usize) -> f64 {
    let q = 1.0 - p;
    x as f64 * (0.5 * x as f64 * (q / p).ln()).exp()
}

/// `x (p/q)^{x/2}`.
pub fn closed_form_eta(p: f64, x: usize) -> f64 {
    let q = 1.0 - p;
    x as f64 * (0.5 * x as f64 * (p / q).ln()).exp()
}

/// Roots `z1 ≤ z2` of `p z² − λ z + q = 0`.
pub fn quad_roots(p: f64, lambda: f64) -> Result<(f64, f64), BdError> {
    let q = 1.0 - p;
    let threshold = closed_form_lambda(p);
    let disc = lambda * lambda - 4.0 * p * q;
    if lambda < threshold && disc < 0.0 {
        return Err(BdError::ComplexRoots { lambda, threshold });
    }
    let z2 = (lambda + disc.max(0.0).sqrt()) / (2.0 * p);
    // product of the roots is q/p; avoids cancellation in the smaller root
    Ok((q / (p * z2), z2))
}

/// Positive column eigenvector `a z1^x + z2^x` of the infinite matrix for
/// `λ > 2√(pq)`.
pub fn supercritical_u(p: f64, lambda: f64, x: usize) -> Result<f64, BdError> {
    supercritical_log_u(p, lambda, x).map(f64::exp)
}

/// `ln u(x)` for [`supercritical_u`]; NaN where `u(x) ≤ 0`.
pub fn supercritical_log_u(p: f64, lambda: f64, x: usize) -> Result<f64, BdError> {
    let (z1, z2) = quad_roots(p, lambda)?;
    // λ − p z2 = p z1 and λ − p z1 = p z2 since z1 + z2 = λ/p
    let a = -(z2 / z1) * (p * z1) / (p * z2);
    let xf = x as f64;
    let inner = 1.0 + a * (xf * (z1 / z2).ln()).exp();
    Ok(xf * z2.ln() + inner.ln())
}

/// `P_1(T_0 = 2n+1) = C(2n+1, n+1) pⁿ q^{n+1} / (2n+1)`.
pub fn first_passage_pmf(p: f64, n: usize) -> f64 {
    let q = 1.0 - p;
    let nf = n as f64;
    let log = ln_gamma(2.0 * nf + 2.0) - ln_gamma(nf + 2.0) - ln_gamma(nf + 1.0) - (2.0 * nf + 1.0).ln()
        + nf * p.ln()
        + (nf + 1.0) * q.ln();
    log.exp()
}

/// `pmf(n) n^{3/2} (2√(pq))^{−(2n+1)}`, which tends to `√(q/p) / (2√π)`.
pub fn first_passage_scaled(p: f64, n: usize) -> f64 {
    let q = 1.0 - p;
    let nf = n as f64;
    let log = ln_gamma(2.0 * nf + 2.0) - ln_gamma(nf + 2.0) - ln_gamma(nf + 1.0) - (2.0 * nf + 1.0).ln()
        + nf * p.ln()
        + (nf + 1.0) * q.ln()
        + 1.5 * nf.ln()
        - (2.0 * nf + 1.0) * closed_form_lambda(p).ln();
    log.exp()
}

pub fn first_passage_constant(p: f64) -> f64 {
    ((1.0 - p) / p).sqrt() / (2.0 * std::f64::consts::PI.sqrt())
}

/// `P_x(T_1 < ∞)` for the chain twisted at `λ = 2√(pq)`: `1/x`.
pub fn twisted_hitting_probability(x: usize) -> f64 {
    1.0 / x as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeResult {
    /// `S_n = Σ_{k≤n} λ^{−k} B^k(x,x)` for `n = 0..=N`.
    pub partial_sums: Vec<f64>,
    /// `(a_N / a_{N−2})^{1/2}` with `a_k = λ^{−k} B^k(x,x)`.
    pub tail_ratio: f64,
}

/// Partial sums of `Σ λ^{−n} Bⁿ(x,x)` on a truncation; a numerical
/// illustration of divergence below the convergence parameter.
pub fn convergence_param_probe(b: &NonNegMatrix, x: usize, lambda: f64, n_steps: usize) -> ProbeResult {
    let n = b.n();
    let mut row = vec![0.0; n];
    row[x] = 1.0;
    let mut terms = vec![1.0];
    // row holds e_x B^k / (λ^k e^{scale})
    let mut log_scale = 0.0_f64;
    for _ in 0..n_steps {
        row = b.vec_mul(&row).into_iter().map(|v| v / lambda).collect();
        let top = row.iter().fold(0.0_f64, |a, &v| a.max(v));
        if top > 1e100 || (top > 0.0 && top < 1e-100) {
            row.iter_mut().for_each(|v| *v /= top);
            log_scale += top.ln();
        }
        terms.push(row[x] * log_scale.exp());
    }
    let mut partial_sums = Vec::with_capacity(terms.len());
    let mut acc = 0.0;
    for t in &terms {
        acc += t;
        partial_sums.push(acc);
    }
    // last pair of nonzero terms two steps apart (odd terms vanish under period 2)
    let tail_ratio = (2..terms.len())
        .rev()
        .find(|&k| terms[k] > 0.0 && terms[k - 2] > 0.0)
        .map_or(f64::NAN, |k| (terms[k] / terms[k - 2]).sqrt());
    ProbeResult {
        partial_sums,
        tail_ratio,
    }
}

/// Truncated solve compared with the closed forms of the infinite model.
#[derive(Debug, Clone, Serialize)]
pub struct BdComparison {
    pub params: BirthDeathParams,
    pub lambda_solved: f64,
    pub lambda_truncated_closed_form: f64,
    pub lambda_infinite: f64,
    pub gap_to_infinite: f64,
    pub gap_to_truncated: f64,
    pub period: usize,
    pub shape_points: usize,
    /// `max_x |r(x)/r(1) − 1|`, `r(x) = u(x) / (x (q/p)^{x/2})`.
    pub u_shape_deviation: f64,
    /// `max_x |g(x)/g(1) − 1|`, `g(x) = u(x) η(x) / x²`.
    pub mass_shape_deviation: f64,
    pub eig_residuals: (f64, f64),
    pub u_ratio: Vec<f64>,
    pub mass_ratio: Vec<f64>,
}

pub fn compare_truncation(params: &BirthDeathParams, shape_points: usize) -> Result<BdComparison, BdError> {
    let b = bd_matrix(params);
    let sol = solve_exact(&b, ExactOptions::default())?;
    let k = shape_points.min(params.levels);
    let u_ratio: Vec<f64> = (1..=k)
        .map(|x| sol.u_star[x - 1] / closed_form_u(params.p, x))
        .collect();
    let mass_ratio: Vec<f64> = (1..=k)
        .map(|x| sol.u_star[x - 1] * sol.eta_star[x - 1] / (x * x) as f64)
        .collect();
    let dev = |r: &[f64]| r.iter().map(|v| (v / r[0] - 1.0).abs()).fold(0.0, f64::max);
    let lambda_infinite = closed_form_lambda(params.p);
    let lambda_truncated = truncated_lambda(params.p, params.levels);
    Ok(BdComparison {
        params: *params,
        lambda_solved: sol.lambda_star,
        lambda_truncated_closed_form: lambda_truncated,
        lambda_infinite,
        gap_to_infinite: (sol.lambda_star - lambda_infinite).abs(),
        gap_to_truncated: (sol.lambda_star - lambda_truncated).abs(),
        period: analyze_graph(&b).period,
        shape_points: k,
        u_shape_deviation: dev(&u_ratio),
        mass_shape_deviation: dev(&mass_ratio),
        eig_residuals: sol.eig_residuals,
        u_ratio,
        mass_ratio,
    })
}

/// Probes at several `λ` in parallel.
pub fn probe_grid(b: &NonNegMatrix, x: usize, lambdas: &[f64], n_steps: usize) -> Vec<ProbeResult> {
    lambdas
        .par_iter()
        .map(|&l| convergence_param_probe(b, x, l, n_steps))
        .collect()
}
