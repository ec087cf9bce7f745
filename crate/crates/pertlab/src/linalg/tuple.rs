use num_complex::Complex64;
use rand::Rng;

use super::matrix::{hermitian_eig, op_norm, CMatrix, HermitianMatrix};
use super::LinalgError;
use crate::config::Tolerances;
use crate::util::rng_from_seed;

/// An n-tuple of commuting Hermitian matrices together with a joint
/// eigendecomposition. Row `i` of the eigengrid is the joint eigenvalue
/// vector attached to column `i` of the eigenbasis; the atomic joint
/// spectral measure assigns the rank-one projection onto that column to
/// that point of R^n.
#[derive(Debug, Clone)]
pub struct CommutingTuple {
    matrices: Vec<HermitianMatrix>,
    eigenbasis: CMatrix,
    eigengrid: Vec<Vec<f64>>,
}

impl CommutingTuple {
    pub fn n(&self) -> usize {
        self.matrices.len()
    }

    pub fn dim(&self) -> usize {
        self.eigenbasis.nrows()
    }

    pub fn matrices(&self) -> &[HermitianMatrix] {
        &self.matrices
    }

    pub fn matrix(&self, j: usize) -> &HermitianMatrix {
        &self.matrices[j]
    }

    pub fn basis(&self) -> &CMatrix {
        &self.eigenbasis
    }

    /// Joint eigenvalue vector for eigenvector column `i`.
    pub fn grid_point(&self, i: usize) -> &[f64] {
        &self.eigengrid[i]
    }

    pub fn grid(&self) -> &[Vec<f64>] {
        &self.eigengrid
    }

    /// Checks unitarity of the basis and reconstruction of every matrix.
    pub fn validate(&self, cfg: &Tolerances) -> Result<(), String> {
        let dim = self.dim();
        let unitary_defect =
            op_norm(&(self.eigenbasis.adjoint() * &self.eigenbasis - CMatrix::identity(dim, dim)));
        if unitary_defect > cfg.unitary_abs {
            return Err(format!("eigenbasis not unitary: defect {unitary_defect:.3e}"));
        }
        for (j, a) in self.matrices.iter().enumerate() {
            let diag: Vec<f64> = (0..dim).map(|i| self.eigengrid[i][j]).collect();
            let recon = crate::util::hermitian_from_diag(&self.eigenbasis, &diag);
            let err = op_norm(&(recon - a.matrix()));
            let tol = cfg.eigen_recon_rel * a.op_norm().max(1e-300);
            if err > tol {
                return Err(format!(
                    "reconstruction of matrix {j} off by {err:.3e} > {tol:.3e}"
                ));
            }
        }
        Ok(())
    }

    /// Builds a tuple from a unitary and per-matrix real diagonals, without
    /// running any eigensolver. Used by the random-tuple generators.
    pub fn from_basis_and_diagonals(u: CMatrix, diags: &[Vec<f64>]) -> Self {
        let dim = u.nrows();
        let matrices = diags
            .iter()
            .map(|d| HermitianMatrix::from_exact(crate::util::hermitian_from_diag(&u, d)))
            .collect();
        let eigengrid = (0..dim)
            .map(|i| diags.iter().map(|d| d[i]).collect())
            .collect();
        CommutingTuple {
            matrices,
            eigenbasis: u,
            eigengrid,
        }
    }
}

fn commutator_norm(a: &CMatrix, b: &CMatrix) -> f64 {
    op_norm(&(a * b - b * a))
}

/// Simultaneous diagonalization of a commuting Hermitian family.
///
/// Diagonalizes a random generic linear combination first, then refines any
/// near-degenerate eigenvalue cluster by recursively diagonalizing the
/// restrictions of each matrix to the cluster subspace. The generic
/// combination alone mis-handles repeated joint eigenvalues; the recursive
/// pass is what makes those cases deterministic.
pub fn joint_diagonalize(
    matrices: &[HermitianMatrix],
    tol_commute: Option<f64>,
    seed: u64,
    cfg: &Tolerances,
) -> Result<CommutingTuple, LinalgError> {
    if matrices.is_empty() {
        return Err(LinalgError::EmptyTuple);
    }
    let dim = matrices[0].dim();
    for m in matrices {
        if m.dim() != dim {
            return Err(LinalgError::DimensionMismatch {
                expected: dim,
                got: m.dim(),
            });
        }
    }
    let max_norm = matrices.iter().map(|m| m.op_norm()).fold(0.0_f64, f64::max);
    let tol = tol_commute.unwrap_or(cfg.commute_rel * max_norm * max_norm).max(1e-300);
    for i in 0..matrices.len() {
        for j in (i + 1)..matrices.len() {
            let norm = commutator_norm(matrices[i].matrix(), matrices[j].matrix());
            if norm > tol {
                return Err(LinalgError::NotCommuting { i, j, norm, tol });
            }
        }
    }

    let mut rng = rng_from_seed(seed);
    let mut combo = CMatrix::zeros(dim, dim);
    for m in matrices {
        let t = 0.5 + rng.random::<f64>();
        combo += m.matrix() * Complex64::new(t, 0.0);
    }
    let combo = HermitianMatrix::from_exact(combo);
    let (u0, vals0) = hermitian_eig(&combo);

    let mut basis = CMatrix::zeros(dim, dim);
    let mut col = 0;
    for cluster in split_clusters(&vals0, cfg.cluster_gap_rel) {
        let block = u0.columns(cluster.start, cluster.len()).into_owned();
        let refined = refine_block(block, matrices, 0, cfg);
        for c in 0..refined.ncols() {
            basis.set_column(col, &refined.column(c));
            col += 1;
        }
    }

    let eigengrid: Vec<Vec<f64>> = (0..dim)
        .map(|i| {
            let v = basis.column(i);
            matrices
                .iter()
                .map(|a| (v.adjoint() * a.matrix() * v)[(0, 0)].re)
                .collect()
        })
        .collect();

    let tuple = CommutingTuple {
        matrices: matrices.to_vec(),
        eigenbasis: basis,
        eigengrid,
    };
    debug_assert!(tuple.validate(cfg).is_ok(), "joint diagonalization failed validation");
    Ok(tuple)
}

/// Splits a descending eigenvalue list into clusters separated by a relative gap.
fn split_clusters(vals: &[f64], gap_rel: f64) -> Vec<std::ops::Range<usize>> {
    let scale = vals.iter().map(|v| v.abs()).fold(1.0_f64, f64::max);
    let gap = gap_rel * scale;
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..vals.len() {
        if vals[i - 1] - vals[i] > gap {
            out.push(start..i);
            start = i;
        }
    }
    out.push(start..vals.len());
    out
}

fn refine_block(
    block: CMatrix,
    matrices: &[HermitianMatrix],
    mat_idx: usize,
    cfg: &Tolerances,
) -> CMatrix {
    if block.ncols() <= 1 || mat_idx >= matrices.len() {
        return block;
    }
    let restricted = block.adjoint() * matrices[mat_idx].matrix() * &block;
    let herm = HermitianMatrix::from_exact(restricted);
    let (v, vals) = hermitian_eig(&herm);
    let rotated = &block * v;
    let mut out = CMatrix::zeros(block.nrows(), block.ncols());
    let mut col = 0;
    for cluster in split_clusters(&vals, cfg.cluster_gap_rel) {
        let sub = rotated.columns(cluster.start, cluster.len()).into_owned();
        let refined = refine_block(sub, matrices, mat_idx + 1, cfg);
        for c in 0..refined.ncols() {
            out.set_column(col, &refined.column(c));
            col += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::{haar_unitary, rng_from_seed};
    use rand::Rng;

    fn diag_matrix(d: &[f64]) -> HermitianMatrix {
        let dim = d.len();
        HermitianMatrix::from_exact(CMatrix::from_fn(dim, dim, |i, k| {
            if i == k {
                Complex64::new(d[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
    }

    #[test]
    fn diagonal_tuple_stays_diagonal() {
        let cfg = Tolerances::default();
        let a = diag_matrix(&[3.0, 1.0, -2.0]);
        let b = diag_matrix(&[0.5, 4.0, 4.0]);
        let t = joint_diagonalize(&[a.clone(), b.clone()], None, 7, &cfg).unwrap();
        t.validate(&cfg).unwrap();
        // Eigengrid rows must be the paired diagonals, up to permutation.
        let mut rows: Vec<(i64, i64)> = t
            .grid()
            .iter()
            .map(|r| ((r[0] * 10.0).round() as i64, (r[1] * 10.0).round() as i64))
            .collect();
        rows.sort_unstable();
        assert_eq!(rows, vec![(-20, 40), (10, 40), (30, 5)]);
    }

    #[test]
    fn shared_basis_pair_recovered() {
        let cfg = Tolerances::default();
        let mut rng = rng_from_seed(42);
        let dim = 8;
        let u = haar_unitary(dim, &mut rng);
        let d1: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 3.0).collect();
        // Repeated joint eigenvalues on purpose.
        let mut d2: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 3.0).collect();
        d2[3] = d2[1];
        let a1 = HermitianMatrix::from_exact(crate::util::hermitian_from_diag(&u, &d1));
        let a2 = HermitianMatrix::from_exact(crate::util::hermitian_from_diag(&u, &d2));
        let t = joint_diagonalize(&[a1, a2], None, 5, &cfg).unwrap();
        t.validate(&cfg).unwrap();
        let mut expected: Vec<(i64, i64)> = (0..dim)
            .map(|i| ((d1[i] * 1e6).round() as i64, (d2[i] * 1e6).round() as i64))
            .collect();
        let mut got: Vec<(i64, i64)> = t
            .grid()
            .iter()
            .map(|r| ((r[0] * 1e6).round() as i64, (r[1] * 1e6).round() as i64))
            .collect();
        expected.sort_unstable();
        got.sort_unstable();
        assert_eq!(expected, got);
    }

    #[test]
    fn degenerate_joint_eigenvalues_refine() {
        let cfg = Tolerances::default();
        let mut rng = rng_from_seed(9);
        let dim = 6;
        let u = haar_unitary(dim, &mut rng);
        // First matrix has a 3-fold degenerate eigenvalue; the second splits it.
        let d1 = vec![2.0, 2.0, 2.0, -1.0, -1.0, 0.0];
        let d2 = vec![1.0, 5.0, -3.0, 4.0, 4.0, 2.0];
        let a1 = HermitianMatrix::from_exact(crate::util::hermitian_from_diag(&u, &d1));
        let a2 = HermitianMatrix::from_exact(crate::util::hermitian_from_diag(&u, &d2));
        let t = joint_diagonalize(&[a1, a2], None, 1, &cfg).unwrap();
        t.validate(&cfg).unwrap();
    }

    #[test]
    fn single_matrix_reduces_to_eig() {
        let cfg = Tolerances::default();
        let mut rng = rng_from_seed(13);
        let u = haar_unitary(5, &mut rng);
        let d: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
        let a = HermitianMatrix::from_exact(crate::util::hermitian_from_diag(&u, &d));
        let t = joint_diagonalize(std::slice::from_ref(&a), None, 0, &cfg).unwrap();
        let (_, vals) = hermitian_eig(&a);
        let mut grid: Vec<f64> = t.grid().iter().map(|r| r[0]).collect();
        grid.sort_by(|x, y| y.partial_cmp(x).unwrap());
        for (g, v) in grid.iter().zip(vals.iter()) {
            assert!((g - v).abs() < 1e-10);
        }
    }

    #[test]
    fn non_commuting_rejected() {
        let cfg = Tolerances::default();
        let a = HermitianMatrix::from_exact(CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(-1.0, 0.0),
            ],
        ));
        let b = HermitianMatrix::from_exact(CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(0.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 0.0),
            ],
        ));
        match joint_diagonalize(&[a, b], None, 0, &cfg) {
            Err(LinalgError::NotCommuting { i, j, norm, .. }) => {
                assert_eq!((i, j), (0, 1));
                assert!(norm > 1.0);
            }
            other => panic!("expected NotCommuting, got {other:?}"),
        }
    }
}
