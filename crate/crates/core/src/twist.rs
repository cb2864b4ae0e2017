//! The twisted (Doob-transformed) chain `P*(x,y) = B(x,y)u(y)/(λ u(x))`,
//! its stationary law, and numerical checks of the power limit and of
//! uniqueness of the positive eigenvector.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::exact::PFSolution;
use crate::matrix::NonNegMatrix;
use crate::mc::cycle_rng;

pub const ROW_SUM_TOL: f64 = 1e-8;
pub const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TwistError {
    #[error("eigen-residuals {0:?} exceed {RESIDUAL_TOL}")]
    BadEigenpair((f64, f64)),
    #[error("twisted row {row} sums to {sum}")]
    RowSum { row: usize, sum: f64 },
    #[error("dimension mismatch: matrix has {n} states, solution has {m}")]
    Dimension { n: usize, m: usize },
    #[error("scaled power became non-finite at step {step}")]
    Overflow { step: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct TwistedChain {
    pub p_star: NonNegMatrix,
    pub pi_star: Vec<f64>,
    /// `Σ_w u(w) η(w)`.
    pub normalizer: f64,
}

fn check_dims(b: &NonNegMatrix, sol: &PFSolution) -> Result<(), TwistError> {
    if sol.u_star.len() != b.n() || sol.eta_star.len() != b.n() {
        return Err(TwistError::Dimension {
            n: b.n(),
            m: sol.u_star.len(),
        });
    }
    Ok(())
}

pub fn doob_transform(b: &NonNegMatrix, sol: &PFSolution) -> Result<TwistedChain, TwistError> {
    check_dims(b, sol)?;
    if sol.eig_residuals.0 > RESIDUAL_TOL || sol.eig_residuals.1 > RESIDUAL_TOL {
        return Err(TwistError::BadEigenpair(sol.eig_residuals));
    }
    let u = &sol.u_star;
    let lambda = sol.lambda_star;
    let rows: Vec<Vec<(usize, f64)>> = (0..b.n())
        .map(|x| {
            b.row(x)
                .iter()
                .map(|&(y, w)| (y, w * (u[y] / u[x]) / lambda))
                .collect()
        })
        .collect();
    let p_star = NonNegMatrix::from_sorted_rows(b.n(), rows);
    for (row, &sum) in p_star.row_sums().iter().enumerate() {
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(TwistError::RowSum { row, sum });
        }
    }
    let mass: Vec<f64> = u.iter().zip(&sol.eta_star).map(|(a, b)| a * b).collect();
    let normalizer: f64 = mass.iter().sum();
    Ok(TwistedChain {
        p_star,
        pi_star: mass.iter().map(|m| m / normalizer).collect(),
        normalizer,
    })
}

/// `‖π*P* − π*‖∞`.
pub fn verify_stationarity(tc: &TwistedChain) -> f64 {
    tc.p_star
        .vec_mul(&tc.pi_star)
        .iter()
        .zip(&tc.pi_star)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// `max_{x,y} |(1/p) Σ_{j<p} λ^{−pn−j} B^{pn+j}(x,y) − u(x)η(y)/⟨u,η⟩|` for
/// `n = 1..=n_terms`.
pub fn verify_power_limit(
    b: &NonNegMatrix,
    sol: &PFSolution,
    period: usize,
    n_terms: usize,
) -> Result<Vec<f64>, TwistError> {
    check_dims(b, sol)?;
    let n = b.n();
    let p = period.max(1);
    let norm = sol.normalizer();
    let limit: Vec<Vec<f64>> = sol
        .u_star
        .iter()
        .map(|&ux| sol.eta_star.iter().map(|&ey| ux * ey / norm).collect())
        .collect();
    let scaled = b.scaled(1.0 / sol.lambda_star);

    let mut power: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut average = vec![vec![0.0; n]; n];
    let mut errors = Vec::with_capacity(n_terms);
    for step in 1..=(n_terms + 1) * p - 1 {
        power = power
            .par_iter()
            .map(|row| scaled.vec_mul(row))
            .collect();
        if power.iter().flatten().any(|v| !v.is_finite()) {
            return Err(TwistError::Overflow { step });
        }
        if step >= p {
            let j = step % p;
            for (a, r) in average.iter_mut().zip(&power) {
                for (ai, ri) in a.iter_mut().zip(r) {
                    if j == 0 {
                        *ai = 0.0;
                    }
                    *ai += ri / p as f64;
                }
            }
            if j == p - 1 {
                let err = average
                    .iter()
                    .zip(&limit)
                    .flat_map(|(a, l)| a.iter().zip(l).map(|(x, y)| (x - y).abs()))
                    .fold(0.0, f64::max);
                errors.push(err);
            }
        }
    }
    Ok(errors)
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessReport {
    pub trials: usize,
    pub min_cosine: f64,
    pub all_converged: bool,
}

pub const COSINE_TOL: f64 = 1e-8;
const PROBE_MAX_ITER: usize = 100_000;

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn unit_max(v: &mut [f64]) {
    let m = v.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    if m > 0.0 {
        v.iter_mut().for_each(|x| *x /= m);
    }
}

/// Direction reached from `start` by Cesàro-averaged iteration of `B/λ`.
pub fn probe_direction(b: &NonNegMatrix, lambda: f64, period: usize, start: &[f64]) -> Vec<f64> {
    let p = period.max(1);
    let mut v = start.to_vec();
    unit_max(&mut v);
    let mut previous: Option<Vec<f64>> = None;
    for _ in 0..PROBE_MAX_ITER / p {
        let mut avg = vec![0.0; v.len()];
        for _ in 0..p {
            v = b.mul_vec(&v).into_iter().map(|x| x / lambda).collect();
            avg.iter_mut().zip(&v).for_each(|(a, x)| *a += x);
        }
        // rescale only the iterate so the average keeps its structure
        let scale = v.iter().fold(0.0_f64, |a, &b| a.max(b));
        v.iter_mut().for_each(|x| *x /= scale);
        unit_max(&mut avg);
        if let Some(prev) = &previous {
            let change = avg
                .iter()
                .zip(prev)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if change < 1e-15 {
                return avg;
            }
        }
        previous = Some(avg);
    }
    previous.unwrap_or(v)
}

/// Random positive starting vectors all converge to the direction of `u*`.
pub fn uniqueness_probe(
    b: &NonNegMatrix,
    sol: &PFSolution,
    period: usize,
    trials: usize,
    seed: u64,
) -> UniquenessReport {
    let cosines: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = cycle_rng(seed, 0, t);
            let start: Vec<f64> = (0..b.n()).map(|_| rng.random_range(0.01..1.0)).collect();
            cosine(&probe_direction(b, sol.lambda_star, period, &start), &sol.u_star)
        })
        .collect();
    let min_cosine = cosines.iter().copied().fold(1.0, f64::min);
    UniquenessReport {
        trials,
        min_cosine,
        all_converged: min_cosine >= 1.0 - COSINE_TOL,
    }
}
