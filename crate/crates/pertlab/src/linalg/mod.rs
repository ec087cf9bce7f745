//! Dense Hermitian linear algebra: eigendecompositions, joint diagonalization
//! of commuting tuples, singular values, and ideal-norm functionals.

mod matrix;
mod spectrum;
mod tuple;

pub use matrix::{hermitian_eig, op_norm, CMatrix, HermitianMatrix, MatrixJson};
pub use spectrum::{
    averaging_check, boyd_ratio, default_probe_spectra, ideal_norm, replicate_spectrum, sigma_seq,
    singular_values, IdealSpec, SingularSpectrum,
};
pub use tuple::{joint_diagonalize, CommutingTuple};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not Hermitian: max |M - M*| entry {defect:.3e} exceeds {tol:.3e}")]
    NotHermitian { defect: f64, tol: f64 },
    #[error("matrices {i} and {j} do not commute: ||[A_i, A_j]|| = {norm:.3e} > {tol:.3e}")]
    NotCommuting { i: usize, j: usize, norm: f64, tol: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("ideal exponent must be positive, got {0}")]
    InvalidExponent(f64),
    #[error("empty matrix tuple")]
    EmptyTuple,
}
