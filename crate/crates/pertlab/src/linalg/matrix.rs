use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::LinalgError;

pub type CMatrix = DMatrix<Complex64>;

/// Operator (spectral) norm via singular values.
pub fn op_norm(m: &CMatrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// A validated self-adjoint complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    mat: CMatrix,
}

impl HermitianMatrix {
    /// Validates self-adjointness within `rel_tol * max |entry|` and
    /// symmetrizes the stored matrix so downstream algebra sees an exactly
    /// Hermitian operator.
    pub fn new(mat: CMatrix, rel_tol: f64) -> Result<Self, LinalgError> {
        assert_eq!(mat.nrows(), mat.ncols(), "square matrix required");
        let scale = mat.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
        let mut defect = 0.0_f64;
        for i in 0..mat.nrows() {
            for k in 0..=i {
                defect = defect.max((mat[(i, k)] - mat[(k, i)].conj()).norm());
            }
        }
        let tol = rel_tol * scale.max(1.0);
        if defect > tol {
            return Err(LinalgError::NotHermitian { defect, tol });
        }
        let sym = CMatrix::from_fn(mat.nrows(), mat.ncols(), |i, k| {
            (mat[(i, k)] + mat[(k, i)].conj()) * Complex64::new(0.5, 0.0)
        });
        Ok(HermitianMatrix { mat: sym })
    }

    /// Builds from a matrix already known to be Hermitian (e.g. U diag U*).
    pub fn from_exact(mat: CMatrix) -> Self {
        HermitianMatrix::new(mat, 1e-9).expect("matrix expected to be Hermitian")
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn op_norm(&self) -> f64 {
        op_norm(&self.mat)
    }
}

/// JSON wire format for complex matrices: `{"dim": N, "re": [[..]], "im": [[..]]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixJson {
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn from_matrix(m: &CMatrix) -> Self {
        let dim = m.nrows();
        let re = (0..dim)
            .map(|i| (0..m.ncols()).map(|k| m[(i, k)].re).collect())
            .collect();
        let im = (0..dim)
            .map(|i| (0..m.ncols()).map(|k| m[(i, k)].im).collect())
            .collect();
        MatrixJson { dim, re, im }
    }

    pub fn to_matrix(&self) -> CMatrix {
        CMatrix::from_fn(self.dim, self.dim, |i, k| {
            Complex64::new(self.re[i][k], self.im[i][k])
        })
    }
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues sorted descending
/// (ties broken by the stable sort), columns of the returned unitary matching
/// the eigenvalue order.
pub fn hermitian_eig(m: &HermitianMatrix) -> (CMatrix, Vec<f64>) {
    let eig = m.mat.clone().symmetric_eigen();
    let dim = m.dim();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut u = CMatrix::zeros(dim, dim);
    for (col, &i) in order.iter().enumerate() {
        u.set_column(col, &eig.eigenvectors.column(i));
    }
    (u, values)
}
