//! Linear algebra for `I - sM` with `M` nonnegative.
//!
//! `I - sM` is a Z-matrix, and a Z-matrix is a nonsingular M-matrix exactly
//! when Gaussian elimination without pivoting produces only positive pivots.
//! The factorization below therefore doubles as the test `s ρ(M) < 1`.
//! Matrices are diagonally balanced (`D⁻¹ M D`, stored as `ln D`) before
//! factoring so that chains with strong drift do not overflow intermediate
//! solves, and reordered by reverse Cuthill-McKee to keep the band narrow.

use std::collections::VecDeque;

use serde::Serialize;

use crate::graph::is_acyclic;
use crate::matrix::NonNegMatrix;

const OSBORNE_SWEEPS: usize = 8;

/// Log-scale `φ` such that `M(i,j) e^{φ_j - φ_i}` is roughly balanced.
///
/// A BFS spanning tree of the symmetrized support fixes `φ` so that each
/// tree edge with both directions present becomes symmetric; a few Osborne
/// sweeps then balance row and column sums.
pub fn balance_log_scale(m: &NonNegMatrix) -> Vec<f64> {
    let n = m.n();
    let mut phi = vec![0.0; n];
    let mut seen = vec![false; n];
    let adj = symmetric_adjacency(m);
    for root in 0..n {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if seen[v] {
                    continue;
                }
                seen[v] = true;
                let forward = m.get(u, v);
                let backward = m.get(v, u);
                phi[v] = if forward > 0.0 && backward > 0.0 {
                    phi[u] + 0.5 * (backward.ln() - forward.ln())
                } else {
                    phi[u]
                };
                queue.push_back(v);
            }
        }
    }

    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, j, w) in m.entries() {
        cols[j].push((i, w));
    }
    for _ in 0..OSBORNE_SWEEPS {
        let mut moved = 0.0_f64;
        for i in 0..n {
            let row: f64 = m
                .row(i)
                .iter()
                .filter(|&&(j, _)| j != i)
                .map(|&(j, w)| w * (phi[j] - phi[i]).exp())
                .sum();
            let col: f64 = cols[i]
                .iter()
                .filter(|&&(j, _)| j != i)
                .map(|&(j, w)| w * (phi[i] - phi[j]).exp())
                .sum();
            if row > 0.0 && col > 0.0 && row.is_finite() && col.is_finite() {
                let t = 0.5 * (row / col).ln();
                phi[i] += t;
                moved = moved.max(t.abs());
            }
        }
        if moved < 1e-3 {
            break;
        }
    }
    phi
}

fn symmetric_adjacency(m: &NonNegMatrix) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); m.n()];
    for (i, j, _) in m.entries() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    adj
}

/// Reverse Cuthill-McKee ordering; returns `order[new] = old`.
fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| adj[v].len());
    for &start in &by_degree {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut next: Vec<usize> = adj[u].iter().copied().filter(|&v| !seen[v]).collect();
            next.sort_by_key(|&v| adj[v].len());
            for v in next {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    order.reverse();
    order
}

/// Sparsity structure of `I - sM̂` in a band ordering, reusable across `s`.
#[derive(Debug, Clone)]
pub struct ScaledSystem {
    n: usize,
    order: Vec<usize>,
    position: Vec<usize>,
    bandwidth: usize,
    /// Balanced off-identity entries `(new_i, new_j, M̂)`.
    entries: Vec<(usize, usize, f64)>,
}

impl ScaledSystem {
    /// `log_scale[i]` is the balancing exponent of state `i` of `m`.
    pub fn new(m: &NonNegMatrix, log_scale: &[f64]) -> Self {
        let n = m.n();
        assert_eq!(log_scale.len(), n);
        let order = reverse_cuthill_mckee(&symmetric_adjacency(m));
        let mut position = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            position[old] = new;
        }
        let mut bandwidth = 0;
        let entries = m
            .entries()
            .map(|(i, j, w)| {
                let (a, b) = (position[i], position[j]);
                bandwidth = bandwidth.max(a.abs_diff(b));
                (a, b, w * (log_scale[j] - log_scale[i]).exp())
            })
            .collect();
        ScaledSystem {
            n,
            order,
            position,
            bandwidth,
            entries,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// Factors `I - sM̂`. Returns `None` when it is not a nonsingular
    /// M-matrix, i.e. when `s ρ(M) >= 1`.
    pub fn factor(&self, s: f64) -> Option<BandLu<'_>> {
        let bw = self.bandwidth;
        let width = 2 * bw + 1;
        let n = self.n;
        let mut data = vec![0.0; n * width];
        for i in 0..n {
            data[i * width + bw] = 1.0;
        }
        for &(i, j, w) in &self.entries {
            data[i * width + (j + bw - i)] -= s * w;
        }
        for k in 0..n {
            let pivot = data[k * width + bw];
            if pivot <= 0.0 || !pivot.is_finite() {
                return None;
            }
            let last = (k + bw).min(n.saturating_sub(1));
            for i in k + 1..=last {
                let lik = data[i * width + (k + bw - i)];
                if lik == 0.0 {
                    continue;
                }
                let l = lik / pivot;
                data[i * width + (k + bw - i)] = l;
                for j in k + 1..=last {
                    let ukj = data[k * width + (j + bw - k)];
                    if ukj != 0.0 {
                        data[i * width + (j + bw - i)] -= l * ukj;
                    }
                }
            }
        }
        Some(BandLu { sys: self, data })
    }
}

/// LU factors of `I - sM̂` in band storage.
#[derive(Debug, Clone)]
pub struct BandLu<'a> {
    sys: &'a ScaledSystem,
    data: Vec<f64>,
}

#[allow(clippy::needless_range_loop)]
impl BandLu<'_> {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        let bw = self.sys.bandwidth;
        self.data[i * (2 * bw + 1) + (j + bw - i)]
    }

    /// Smallest pivot, a measure of distance to singularity.
    pub fn min_pivot(&self) -> f64 {
        (0..self.sys.n).map(|i| self.at(i, i)).fold(f64::INFINITY, f64::min)
    }

    /// Solves `(I - sM̂) x = rhs` (vectors indexed by original state).
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.sys.n, self.sys.bandwidth);
        let mut y: Vec<f64> = self.sys.order.iter().map(|&old| rhs[old]).collect();
        for i in 0..n {
            let mut acc = y[i];
            for k in i.saturating_sub(bw)..i {
                acc -= self.at(i, k) * y[k];
            }
            y[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = y[i];
            for j in i + 1..=(i + bw).min(n - 1) {
                acc -= self.at(i, j) * y[j];
            }
            y[i] = acc / self.at(i, i);
        }
        self.sys.position.iter().map(|&new| y[new]).collect()
    }

    /// Solves `x (I - sM̂) = rhs` for a row vector `x`.
    pub fn solve_transpose(&self, rhs: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.sys.n, self.sys.bandwidth);
        let mut z: Vec<f64> = self.sys.order.iter().map(|&old| rhs[old]).collect();
        for i in 0..n {
            let mut acc = z[i];
            for k in i.saturating_sub(bw)..i {
                acc -= self.at(k, i) * z[k];
            }
            z[i] = acc / self.at(i, i);
        }
        for i in (0..n).rev() {
            let mut acc = z[i];
            for k in i + 1..=(i + bw).min(n - 1) {
                acc -= self.at(k, i) * z[k];
            }
            z[i] = acc;
        }
        self.sys.position.iter().map(|&new| z[new]).collect()
    }
}

/// How a spectral radius estimate was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusMethod {
    /// Support digraph is acyclic, radius is exactly zero.
    Nilpotent,
    PowerIteration,
    /// Power iteration hit its cap; refined by bisecting on the M-matrix test.
    PivotBisection,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralRadius {
    pub value: f64,
    pub iterations: usize,
    pub method: RadiusMethod,
}

pub const RADIUS_TOL: f64 = 1e-10;
pub const RADIUS_MAX_ITER: usize = 2_000;

/// Spectral radius of a nonnegative matrix.
///
/// Shifted power iteration on `I + M̂` (the shift removes periodic
/// oscillation) with Collatz-Wielandt bounds for the stopping rule.
pub fn spectral_radius(m: &NonNegMatrix, tol: f64, max_iter: usize) -> SpectralRadius {
    if m.n() == 0 || is_acyclic(m) {
        return SpectralRadius {
            value: 0.0,
            iterations: 0,
            method: RadiusMethod::Nilpotent,
        };
    }
    let phi = balance_log_scale(m);
    let sys = ScaledSystem::new(m, &phi);
    let balanced = NonNegMatrix::from_triplets(
        m.n(),
        m.entries()
            .map(|(i, j, w)| (i, j, w * (phi[j] - phi[i]).exp())),
    )
    .expect("balanced matrix is valid");

    let mut v = vec![1.0; m.n()];
    for it in 1..=max_iter {
        let mv = balanced.mul_vec(&v);
        let mut lo = f64::INFINITY;
        let mut hi = 0.0_f64;
        for (a, b) in mv.iter().zip(&v) {
            if *b > 0.0 {
                let r = a / b;
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        let w: Vec<f64> = v.iter().zip(&mv).map(|(a, b)| a + b).collect();
        let norm = w.iter().fold(0.0_f64, |m, x| m.max(*x));
        if hi - lo <= tol * hi {
            return SpectralRadius {
                value: 0.5 * (hi + lo),
                iterations: it,
                method: RadiusMethod::PowerIteration,
            };
        }
        v = w.into_iter().map(|x| x / norm).collect();
    }

    SpectralRadius {
        value: radius_by_pivot_bisection(&sys),
        iterations: max_iter,
        method: RadiusMethod::PivotBisection,
    }
}

/// `ρ(M) = 1 / sup{s : I - sM is a nonsingular M-matrix}`.
fn radius_by_pivot_bisection(sys: &ScaledSystem) -> f64 {
    let mut lo = 0.0;
    let mut hi = 1.0;
    while sys.factor(hi).is_some() {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return 0.0;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sys.factor(mid).is_some() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    1.0 / hi
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(rows: &[Vec<f64>]) -> NonNegMatrix {
        NonNegMatrix::from_dense(rows).unwrap()
    }

    fn tridiagonal(n: usize, up: f64, down: f64) -> NonNegMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            if i + 1 < n {
                t.push((i, i + 1, up));
                t.push((i + 1, i, down));
            }
        }
        NonNegMatrix::from_triplets(n, t).unwrap()
    }

    #[test]
    fn solve_and_transpose_match_dense_inverse() {
        let m = dense(&[
            vec![0.1, 0.3, 0.0],
            vec![0.2, 0.0, 0.4],
            vec![0.0, 0.5, 0.1],
        ]);
        let phi = balance_log_scale(&m);
        let unit = vec![0.0; 3];
        let sys = ScaledSystem::new(&m, &unit);
        let lu = sys.factor(1.0).unwrap();
        let rhs = [1.0, 2.0, 3.0];
        let x = lu.solve(&rhs);
        // check (I - M) x = rhs
        let mx = m.mul_vec(&x);
        for i in 0..3 {
            assert!((x[i] - mx[i] - rhs[i]).abs() < 1e-13);
        }
        let y = lu.solve_transpose(&rhs);
        let ym = m.vec_mul(&y);
        for i in 0..3 {
            assert!((y[i] - ym[i] - rhs[i]).abs() < 1e-13);
        }
        // balancing changes coordinates but not the spectrum
        let sys_b = ScaledSystem::new(&m, &phi);
        assert!(sys_b.factor(1.0).is_some());
    }

    #[test]
    fn pivot_test_detects_radius() {
        let m = dense(&[vec![0.2, 0.4], vec![0.3, 0.1]]);
        let sys = ScaledSystem::new(&m, &[0.0, 0.0]);
        // ρ = 0.5
        assert!(sys.factor(1.999).is_some());
        assert!(sys.factor(2.001).is_none());
        assert!((radius_by_pivot_bisection(&sys) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn radius_examples() {
        let m = dense(&[vec![0.2, 0.4], vec![0.3, 0.1]]);
        let r = spectral_radius(&m, RADIUS_TOL, RADIUS_MAX_ITER);
        assert!((r.value - 0.5).abs() < 1e-10);

        let periodic = dense(&[vec![0.0, 0.5], vec![0.5, 0.0]]);
        let r = spectral_radius(&periodic, RADIUS_TOL, RADIUS_MAX_ITER);
        assert!((r.value - 0.5).abs() < 1e-10);

        let nil = dense(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        let r = spectral_radius(&nil, RADIUS_TOL, RADIUS_MAX_ITER);
        assert_eq!(r.method, RadiusMethod::Nilpotent);
        assert_eq!(r.value, 0.0);

        // reducible: blocks with radii 0.3 and 0.6
        let red = dense(&[vec![0.3, 0.1], vec![0.0, 0.6]]);
        let r = spectral_radius(&red, RADIUS_TOL, RADIUS_MAX_ITER);
        assert!((r.value - 0.6).abs() < 1e-9, "{r:?}");
    }

    #[test]
    fn tridiagonal_radius_closed_form() {
        let (p, q) = (0.3_f64, 0.7_f64);
        for n in [5usize, 40, 300] {
            let m = tridiagonal(n, p, q);
            let exact = 2.0 * (p * q).sqrt() * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
            let r = spectral_radius(&m, RADIUS_TOL, RADIUS_MAX_ITER);
            assert!((r.value - exact).abs() < 1e-9 * exact, "n={n} {r:?}");
        }
    }

    #[test]
    fn balancing_symmetrizes_birth_death() {
        let m = tridiagonal(50, 0.3, 0.7);
        let phi = balance_log_scale(&m);
        for i in 0..49 {
            let up = 0.3 * (phi[i + 1] - phi[i]).exp();
            let down = 0.7 * (phi[i] - phi[i + 1]).exp();
            assert!((up - down).abs() < 1e-12);
        }
    }

    #[test]
    fn strong_drift_solves_without_overflow() {
        // unbalanced growth factor sqrt(7/3) per state would overflow over 2000 states
        let n = 2000;
        let m = tridiagonal(n, 0.3, 0.7);
        let phi = balance_log_scale(&m);
        let sys = ScaledSystem::new(&m, &phi);
        assert_eq!(sys.bandwidth(), 1);
        let lu = sys.factor(1.0).unwrap();
        let mut rhs = vec![0.0; n];
        rhs[0] = 1.0;
        let x = lu.solve(&rhs);
        assert!(x.iter().all(|v| v.is_finite() && *v >= 0.0));
    }
}
