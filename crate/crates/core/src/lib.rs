//! Perron-Frobenius eigenvalues and eigenvectors of nonnegative matrices and
//! killed Markov kernels, computed from regenerative cycles.
//!
//! A nonnegative matrix `B` with row sums at most one is the transition
//! matrix of a Markov chain killed at rate `1 − Σ_y B(x,y)`. Fixing a
//! regeneration state `z` with first return time `τ` and killing time `T`,
//! the decay parameter solves `E_z e^{θτ} I(T > τ) = 1`, the eigenvalue is
//! `λ* = e^{−θ}` and both eigenvectors are cycle expectations.

pub mod birthdeath;
pub mod exact;
pub mod graph;
pub mod kernel;
pub mod linalg;
pub mod matrix;
pub mod mc;
pub mod minorize;
pub mod root;
pub mod twist;

pub mod serde_ext {
    //! JSON has no infinities; non-finite floats are written as strings.

    use serde::Serializer;

    pub fn extended_f64<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn extended_opt_f64<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => extended_f64(x, s),
            None => s.serialize_none(),
        }
    }
}

pub use exact::{solve_exact, ExactOptions, PFSolution, SolveError};
pub use matrix::{augment, load_matrix, normalize, AugmentedChain, MatrixError, NonNegMatrix};
