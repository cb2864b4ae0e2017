//! Sparse nonnegative matrices, the text loader, normalization to a
//! sub-stochastic matrix, and the killed (Δ-augmented) chain built on top.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

/// Tolerance used when checking that row sums do not exceed one.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: negative weight {weight} at ({row}, {col})")]
    NegativeWeight {
        line: usize,
        row: usize,
        col: usize,
        weight: f64,
    },
    #[error("line {line}: explicit zero weight at ({row}, {col})")]
    ZeroWeight { line: usize, row: usize, col: usize },
    #[error("line {line}: index ({row}, {col}) out of range for n = {n}")]
    IndexOutOfRange {
        line: usize,
        row: usize,
        col: usize,
        n: usize,
    },
    #[error("line {line}: duplicate entry ({row}, {col})")]
    Duplicate { line: usize, row: usize, col: usize },
    #[error("matrix has no positive entry")]
    AllZero,
    #[error("invalid entry ({row}, {col}) = {weight}")]
    InvalidEntry { row: usize, col: usize, weight: f64 },
    #[error("row {row} sums to {sum}, which exceeds one")]
    NotSubStochastic { row: usize, sum: f64 },
    #[error("matrix must have at least one state")]
    Empty,
}

/// Finite nonnegative matrix in compressed sparse row form.
///
/// Only strictly positive weights are stored; rows are sorted by column.
#[derive(Clone, PartialEq)]
pub struct NonNegMatrix {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
    row_sums: Vec<f64>,
}

impl fmt::Debug for NonNegMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonNegMatrix")
            .field("n", &self.n)
            .field("nnz", &self.nnz())
            .field("rows", &self.rows)
            .finish()
    }
}

impl NonNegMatrix {
    /// Builds a matrix from `(row, col, weight)` triplets. Zero weights are
    /// dropped; duplicates are summed.
    pub fn from_triplets<I>(n: usize, triplets: I) -> Result<Self, MatrixError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        if n == 0 {
            return Err(MatrixError::Empty);
        }
        let mut acc: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        for (row, col, weight) in triplets {
            if row >= n || col >= n || !weight.is_finite() || weight < 0.0 {
                return Err(MatrixError::InvalidEntry { row, col, weight });
            }
            if weight > 0.0 {
                *acc[row].entry(col).or_insert(0.0) += weight;
            }
        }
        let rows = acc.into_iter().map(|r| r.into_iter().collect()).collect();
        Ok(Self::from_sorted_rows(n, rows))
    }

    /// Builds a matrix from dense rows, skipping zeros.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self, MatrixError> {
        let n = rows.len();
        let triplets = rows.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(move |(j, &w)| (i, j, w))
        });
        if rows.iter().any(|r| r.len() != n) {
            return Err(MatrixError::Parse {
                line: 0,
                message: "dense rows must form a square matrix".into(),
            });
        }
        Self::from_triplets(n, triplets)
    }

    /// Rows must already be sorted by column with strictly positive weights.
    pub(crate) fn from_sorted_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        debug_assert_eq!(rows.len(), n);
        let row_sums = rows
            .iter()
            .map(|r| r.iter().map(|&(_, w)| w).sum())
            .collect();
        NonNegMatrix { n, rows, row_sums }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn row_sums(&self) -> &[f64] {
        &self.row_sums
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row_sums[i]
    }

    pub fn max_row_sum(&self) -> f64 {
        self.row_sums.iter().copied().fold(0.0, f64::max)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self.rows[i].binary_search_by_key(&j, |&(c, _)| c) {
            Ok(k) => self.rows[i][k].1,
            Err(_) => 0.0,
        }
    }

    /// Iterates over stored `(row, col, weight)` entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().map(move |&(j, w)| (i, j, w)))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for (i, j, w) in self.entries() {
            out[i][j] = w;
        }
        out
    }

    /// Column vector product `M v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(j, w)| w * v[j]).sum())
            .collect()
    }

    /// Row vector product `v M`.
    pub fn vec_mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, r) in self.rows.iter().enumerate() {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            for &(j, w) in r {
                out[j] += vi * w;
            }
        }
        out
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &NonNegMatrix) -> NonNegMatrix {
        assert_eq!(self.n, other.n, "dimension mismatch");
        let mut dense_row = vec![0.0; self.n];
        let mut touched = Vec::new();
        let rows = self
            .rows
            .iter()
            .map(|r| {
                for &(k, a) in r {
                    for &(j, b) in other.row(k) {
                        if dense_row[j] == 0.0 {
                            touched.push(j);
                        }
                        dense_row[j] += a * b;
                    }
                }
                touched.sort_unstable();
                let out: Vec<(usize, f64)> = touched
                    .drain(..)
                    .filter_map(|j| {
                        let w = std::mem::take(&mut dense_row[j]);
                        (w > 0.0).then_some((j, w))
                    })
                    .collect();
                out
            })
            .collect();
        NonNegMatrix::from_sorted_rows(self.n, rows)
    }

    /// Multiplies every entry by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> NonNegMatrix {
        assert!(factor > 0.0 && factor.is_finite());
        let rows = self
            .rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|&(j, w)| (j, w * factor))
                    .filter(|&(_, w)| w > 0.0)
                    .collect()
            })
            .collect();
        NonNegMatrix::from_sorted_rows(self.n, rows)
    }

    pub fn max_entry(&self) -> f64 {
        self.entries().map(|(_, _, w)| w).fold(0.0, f64::max)
    }

    pub fn has_positive_diagonal(&self) -> bool {
        (0..self.n).any(|i| self.get(i, i) > 0.0)
    }

    pub fn is_sub_stochastic(&self) -> bool {
        self.row_sums.iter().all(|&s| s <= 1.0 + STOCHASTIC_TOL)
    }

    /// Same matrix with rows and columns relabelled: state `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> NonNegMatrix {
        assert_eq!(perm.len(), self.n);
        NonNegMatrix::from_triplets(
            self.n,
            self.entries().map(|(i, j, w)| (perm[i], perm[j], w)),
        )
        .expect("permutation of a valid matrix is valid")
    }
}

/// Parses the coordinate text format: the first nonblank line holds `n`,
/// every following nonblank line holds `row col weight` (0-based). `#`
/// starts a comment. Duplicates and explicit zeros are rejected.
pub fn load_matrix(text: &str) -> Result<NonNegMatrix, MatrixError> {
    let mut n: Option<usize> = None;
    let mut rows: Vec<BTreeMap<usize, f64>> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some(size) = n else {
            let size: usize = content.parse().map_err(|_| MatrixError::Parse {
                line,
                message: format!("expected state count, found {content:?}"),
            })?;
            if size == 0 {
                return Err(MatrixError::Parse {
                    line,
                    message: "state count must be positive".into(),
                });
            }
            n = Some(size);
            rows = vec![BTreeMap::new(); size];
            continue;
        };

        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(MatrixError::Parse {
                line,
                message: format!("expected `row col weight`, found {} fields", fields.len()),
            });
        }
        let parse_index = |s: &str, what: &str| {
            s.parse::<usize>().map_err(|_| MatrixError::Parse {
                line,
                message: format!("invalid {what} index {s:?}"),
            })
        };
        let row = parse_index(fields[0], "row")?;
        let col = parse_index(fields[1], "column")?;
        let weight: f64 = fields[2].parse().map_err(|_| MatrixError::Parse {
            line,
            message: format!("invalid weight {:?}", fields[2]),
        })?;
        if !weight.is_finite() {
            return Err(MatrixError::Parse {
                line,
                message: format!("non-finite weight {:?}", fields[2]),
            });
        }
        if row >= size || col >= size {
            return Err(MatrixError::IndexOutOfRange { line, row, col, n: size });
        }
        if weight < 0.0 {
            return Err(MatrixError::NegativeWeight { line, row, col, weight });
        }
        if weight == 0.0 {
            return Err(MatrixError::ZeroWeight { line, row, col });
        }
        if rows[row].insert(col, weight).is_some() {
            return Err(MatrixError::Duplicate { line, row, col });
        }
    }

    let n = n.ok_or(MatrixError::Empty)?;
    let rows = rows.into_iter().map(|r| r.into_iter().collect()).collect();
    Ok(NonNegMatrix::from_sorted_rows(n, rows))
}

/// Writes a matrix in the format accepted by [`load_matrix`].
pub fn write_matrix(m: &NonNegMatrix) -> String {
    let mut out = format!("{}\n", m.n());
    for (i, j, w) in m.entries() {
        out.push_str(&format!("{i} {j} {w:e}\n"));
    }
    out
}

/// `B = G / s` together with the scale `s`.
#[derive(Debug, Clone)]
pub struct NormalizationResult {
    pub b: NonNegMatrix,
    pub s: f64,
}

/// Rescales `g` by its maximal row sum. Already sub-stochastic input is left
/// untouched (`s = 1`) so that natural killing rates are preserved.
pub fn normalize(g: &NonNegMatrix) -> Result<NormalizationResult, MatrixError> {
    let s = g.max_row_sum();
    if s <= 0.0 {
        return Err(MatrixError::AllZero);
    }
    if s <= 1.0 {
        return Ok(NormalizationResult { b: g.clone(), s: 1.0 });
    }
    Ok(NormalizationResult {
        b: g.scaled(1.0 / s),
        s,
    })
}

/// The chain on `S ∪ {Δ}`: moves by `B` and jumps to the absorbing
/// cemetery `Δ` with the row deficit.
#[derive(Debug, Clone)]
pub struct AugmentedChain {
    b: NonNegMatrix,
    kill_prob: Vec<f64>,
    cumulative: Vec<Vec<f64>>,
}

/// Outcome of one transition of the augmented chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    To(usize),
    Killed,
}

pub fn augment(b: &NonNegMatrix) -> Result<AugmentedChain, MatrixError> {
    let mut kill_prob = Vec::with_capacity(b.n());
    for (row, &sum) in b.row_sums().iter().enumerate() {
        if sum > 1.0 + STOCHASTIC_TOL {
            return Err(MatrixError::NotSubStochastic { row, sum });
        }
        kill_prob.push((1.0 - sum).clamp(0.0, 1.0));
    }
    let cumulative = (0..b.n())
        .map(|i| {
            let mut acc = 0.0;
            b.row(i)
                .iter()
                .map(|&(_, w)| {
                    acc += w;
                    acc
                })
                .collect()
        })
        .collect();
    Ok(AugmentedChain {
        b: b.clone(),
        kill_prob,
        cumulative,
    })
}

impl AugmentedChain {
    pub fn matrix(&self) -> &NonNegMatrix {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.b.n()
    }

    pub fn kill_prob(&self) -> &[f64] {
        &self.kill_prob
    }

    /// Extended row `x` over `S ∪ {Δ}`; the last entry is the Δ column.
    pub fn extended_row(&self, x: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.n() + 1];
        for &(j, w) in self.b.row(x) {
            row[j] = w;
        }
        row[self.n()] = self.kill_prob[x];
        row
    }

    /// One transition from `x` driven by a single uniform draw.
    pub fn step<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> Step {
        let u: f64 = rng.random();
        self.step_with_uniform(x, u)
    }

    pub fn step_with_uniform(&self, x: usize, u: f64) -> Step {
        let cum = &self.cumulative[x];
        match cum.last() {
            Some(&total) if u < total => {
                let k = cum.partition_point(|&c| c <= u);
                Step::To(self.b.row(x)[k.min(cum.len() - 1)].0)
            }
            _ => Step::Killed,
        }
    }
}

/// Nonnegative row vector helpers used across engines.
pub(crate) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Serialized as `{"n": .., "entries": [[row, col, weight], ..]}`.
impl Serialize for NonNegMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let entries: Vec<(usize, usize, f64)> = self.entries().collect();
        let mut st = s.serialize_struct("NonNegMatrix", 2)?;
        st.serialize_field("n", &self.n)?;
        st.serialize_field("entries", &entries)?;
        st.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn asym() -> NonNegMatrix {
        NonNegMatrix::from_dense(&[vec![0.2, 0.4], vec![0.3, 0.1]]).unwrap()
    }

    #[test]
    fn loads_small_matrices() {
        let m = load_matrix("2\n0 0 0.2\n0 1 0.4\n1 0 0.3\n1 1 0.1").unwrap();
        assert_eq!(m.to_dense(), vec![vec![0.2, 0.4], vec![0.3, 0.1]]);
        let one = load_matrix("1\n0 0 0.7").unwrap();
        assert_eq!(one.to_dense(), vec![vec![0.7]]);
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = "# header\n\n  2  # states\n0 1 1.5 # edge\n\n1 0 2e-1\n";
        let m = load_matrix(text).unwrap();
        assert_eq!(m.get(0, 1), 1.5);
        assert_eq!(m.get(1, 0), 0.2);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            load_matrix("2\n0 0 -1"),
            Err(MatrixError::NegativeWeight { line: 2, .. })
        ));
        assert!(matches!(
            load_matrix("2\n0 2 1"),
            Err(MatrixError::IndexOutOfRange { line: 2, .. })
        ));
        assert!(matches!(
            load_matrix("2\n0 1 1\n0 1 2"),
            Err(MatrixError::Duplicate { line: 3, .. })
        ));
        assert!(matches!(
            load_matrix("2\n0 1 0"),
            Err(MatrixError::ZeroWeight { line: 2, .. })
        ));
        assert!(matches!(
            load_matrix("2\n0 1"),
            Err(MatrixError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            load_matrix("x\n"),
            Err(MatrixError::Parse { line: 1, .. })
        ));
        assert!(matches!(load_matrix("# nothing\n"), Err(MatrixError::Empty)));
        assert!(matches!(
            load_matrix("2\n0 1 nan"),
            Err(MatrixError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn normalize_examples() {
        let r = normalize(&asym()).unwrap();
        assert_eq!(r.s, 1.0);
        assert_eq!(r.b, asym());

        let g = NonNegMatrix::from_dense(&[vec![2.0, 2.0], vec![2.0, 2.0]]).unwrap();
        let r = normalize(&g).unwrap();
        assert_eq!(r.s, 4.0);
        assert_eq!(r.b.to_dense(), vec![vec![0.5, 0.5], vec![0.5, 0.5]]);

        let g = NonNegMatrix::from_dense(&[vec![0.0, 3.0], vec![1.0, 0.0]]).unwrap();
        let r = normalize(&g).unwrap();
        assert_eq!(r.s, 3.0);
        assert_eq!(r.b.get(0, 1), 1.0);
        assert!((r.b.get(1, 0) - 1.0 / 3.0).abs() < 1e-16);

        let zero = NonNegMatrix::from_triplets(2, []).unwrap();
        assert_eq!(normalize(&zero).unwrap_err(), MatrixError::AllZero);
    }

    #[test]
    fn augment_examples() {
        let c = augment(&asym()).unwrap();
        assert!((c.kill_prob()[0] - 0.4).abs() < 1e-15);
        assert!((c.kill_prob()[1] - 0.6).abs() < 1e-15);

        let st = NonNegMatrix::from_dense(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_eq!(augment(&st).unwrap().kill_prob(), &[0.0, 0.0]);

        let one = NonNegMatrix::from_dense(&[vec![0.7]]).unwrap();
        assert!((augment(&one).unwrap().kill_prob()[0] - 0.3).abs() < 1e-15);

        let over = NonNegMatrix::from_dense(&[vec![0.7, 0.4], vec![0.1, 0.1]]).unwrap();
        assert!(matches!(
            augment(&over),
            Err(MatrixError::NotSubStochastic { row: 0, .. })
        ));
    }

    #[test]
    fn step_uses_cumulative_row() {
        let c = augment(&asym()).unwrap();
        assert_eq!(c.step_with_uniform(0, 0.0), Step::To(0));
        assert_eq!(c.step_with_uniform(0, 0.19), Step::To(0));
        assert_eq!(c.step_with_uniform(0, 0.21), Step::To(1));
        assert_eq!(c.step_with_uniform(0, 0.61), Step::Killed);
        assert_eq!(c.step_with_uniform(1, 0.35), Step::To(1));
    }

    #[test]
    fn matmul_matches_dense() {
        let a = asym();
        let p = a.matmul(&a).to_dense();
        assert!((p[0][0] - (0.04 + 0.12)).abs() < 1e-15);
        assert!((p[0][1] - (0.08 + 0.04)).abs() < 1e-15);
        assert!((p[1][0] - (0.06 + 0.03)).abs() < 1e-15);
        assert!((p[1][1] - (0.12 + 0.01)).abs() < 1e-15);
    }

    fn arb_matrix() -> impl Strategy<Value = NonNegMatrix> {
        (1usize..8).prop_flat_map(|n| {
            proptest::collection::vec(
                prop_oneof![Just(0.0), 0.001f64..5.0],
                n * n,
            )
            .prop_map(move |w| {
                NonNegMatrix::from_triplets(
                    n,
                    w.into_iter().enumerate().map(|(k, x)| (k / n, k % n, x)),
                )
                .unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn normalize_then_unscale_is_identity(g in arb_matrix()) {
            prop_assume!(g.nnz() > 0);
            let r = normalize(&g).unwrap();
            prop_assert!(r.b.max_row_sum() <= 1.0 + 1e-14);
            for (i, j, w) in g.entries() {
                let back = r.b.get(i, j) * r.s;
                prop_assert!((back - w).abs() <= 1e-12 * w);
            }
        }

        #[test]
        fn augmented_rows_are_stochastic(g in arb_matrix()) {
            prop_assume!(g.nnz() > 0);
            let r = normalize(&g).unwrap();
            let c = augment(&r.b).unwrap();
            for x in 0..c.n() {
                let total: f64 = c.extended_row(x).iter().sum();
                prop_assert!((total - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn text_format_round_trips(g in arb_matrix()) {
            let back = load_matrix(&write_matrix(&g)).unwrap();
            prop_assert_eq!(back, g);
        }
    }
}
