//! Double operator integrals for finite commuting Hermitian tuples. In the
//! joint eigenbases the integral collapses to a Schur (entrywise) product:
//! with A = U diag(lambda) U* and B = V diag(mu) V*,
//!
//!   doi(Phi, A, B, T) = U [ Phi(lambda_i, mu_k) .* (U* T V) ] V*.
//!
//! This makes the sum formula f(A) - f(B) = sum_j doi(Psi_j, A, B, A_j - B_j)
//! an exact finite identity whenever the scalar identity
//! sum_j (x_j - y_j) Psi_j(x, y) = f(x) - f(y) holds on eigenvalue pairs.

use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use crate::config::Tolerances;
use crate::funcalc::ScalarField;
use crate::linalg::{CMatrix, CommutingTuple, HermitianMatrix};

#[derive(Debug, Error)]
pub enum DoiError {
    #[error("kernel not finite at eigengrid pair ({i}, {k}): {value}")]
    NonFiniteKernel { i: usize, k: usize, value: f64 },
    #[error("divided-difference variant needs dimension {expected}, field has {got}")]
    VariantDimensionMismatch { expected: String, got: usize },
    #[error(
        "scalar sum identity fails at eigengrid pair x={x:?}, y={y:?}: defect {defect:.3e} > {tol:.3e}"
    )]
    IdentityViolation {
        x: Vec<f64>,
        y: Vec<f64>,
        defect: f64,
        tol: f64,
    },
    #[error(transparent)]
    Funcalc(#[from] crate::funcalc::FuncalcError),
}

/// Kind tag for kernels; informational only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KernelTag {
    DividedDifference(String),
    Multiplier(String),
    Custom(String),
}

type KernelEval = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Scalar kernel Phi(x, y) on R^n x R^n.
#[derive(Clone)]
pub struct KernelFunction {
    pub tag: KernelTag,
    eval: KernelEval,
}

impl std::fmt::Debug for KernelFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "KernelFunction({:?})", self.tag)
    }
}

impl KernelFunction {
    pub fn new(tag: KernelTag, eval: KernelEval) -> Self {
        KernelFunction { tag, eval }
    }

    pub fn custom<F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static>(
        name: &str,
        f: F,
    ) -> Self {
        KernelFunction {
            tag: KernelTag::Custom(name.to_string()),
            eval: Arc::new(f),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        (self.eval)(x, y)
    }
}

/// Functional calculus through the joint spectral decomposition:
/// f(A_1, ..., A_n) = U diag(f(lambda_i)) U*.
pub fn apply_function(f: &ScalarField, a: &CommutingTuple) -> HermitianMatrix {
    let u = a.basis();
    let dim = a.dim();
    let mut d = CMatrix::zeros(dim, dim);
    for i in 0..dim {
        d[(i, i)] = Complex64::new(f.eval(a.grid_point(i)), 0.0);
    }
    HermitianMatrix::from_exact(u * d * u.adjoint())
}

/// The double operator integral as a Schur product in the joint eigenbases.
pub fn doi(
    phi: &KernelFunction,
    a: &CommutingTuple,
    b: &CommutingTuple,
    t: &CMatrix,
) -> Result<CMatrix, DoiError> {
    let u = a.basis();
    let v = b.basis();
    let mut m = u.adjoint() * t * v;
    for i in 0..m.nrows() {
        for k in 0..m.ncols() {
            let value = phi.eval(a.grid_point(i), b.grid_point(k));
            if !value.is_finite() {
                return Err(DoiError::NonFiniteKernel { i, k, value });
            }
            m[(i, k)] *= value;
        }
    }
    Ok(u * m * v.adjoint())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdVariant {
    /// n = 1: (f(x) - f(y)) / (x - y).
    OneDim,
    /// n = 2, difference in the first coordinate.
    X,
    /// n = 2, difference in the second coordinate.
    Y,
    /// General chain form, coordinate j (0-based): mixed point arguments
    /// y_1 .. y_{j-1} then x_j .. x_n in the numerator.
    Chain(usize),
}

/// Chain divided difference as a kernel. At the removable singularity
/// x_j = y_j the kernel takes the exact partial derivative of f at the
/// mixed point (trigonometric sums differentiate term-wise).
pub fn divided_differences(
    f: &ScalarField,
    variant: DdVariant,
    gap: f64,
) -> Result<KernelFunction, DoiError> {
    let n = f.n();
    let j = match variant {
        DdVariant::OneDim => {
            if n != 1 {
                return Err(DoiError::VariantDimensionMismatch {
                    expected: "1".into(),
                    got: n,
                });
            }
            0
        }
        DdVariant::X | DdVariant::Y => {
            if n != 2 {
                return Err(DoiError::VariantDimensionMismatch {
                    expected: "2".into(),
                    got: n,
                });
            }
            if variant == DdVariant::X {
                0
            } else {
                1
            }
        }
        DdVariant::Chain(j) => {
            if j >= n {
                return Err(DoiError::VariantDimensionMismatch {
                    expected: format!("> {j}"),
                    got: n,
                });
            }
            j
        }
    };
    let name = match variant {
        DdVariant::OneDim => "1d".to_string(),
        DdVariant::X => "x".to_string(),
        DdVariant::Y => "y".to_string(),
        DdVariant::Chain(j) => format!("chain_{}", j + 1),
    };
    let field = f.clone();
    // Exact term-wise derivative when available; samplers fall back to a
    // symmetric difference at the removable singularity.
    let partial = if f.is_trig() { Some(f.partial(j)?) } else { None };
    let eval = move |x: &[f64], y: &[f64]| -> f64 {
        // Upper point: y_1 .. y_{j-1}, x_j, .., x_n; lower: one more y.
        let mut hi: Vec<f64> = y[..j].to_vec();
        hi.extend_from_slice(&x[j..]);
        if (x[j] - y[j]).abs() < gap {
            let mut mid = hi.clone();
            mid[j] = 0.5 * (x[j] + y[j]);
            match &partial {
                Some(p) => p.eval(&mid),
                None => {
                    let h = gap.max(1e-6);
                    let mut up = mid.clone();
                    let mut dn = mid;
                    up[j] += h;
                    dn[j] -= h;
                    (field.eval(&up) - field.eval(&dn)) / (2.0 * h)
                }
            }
        } else {
            let mut lo = hi.clone();
            lo[j] = y[j];
            (field.eval(&hi) - field.eval(&lo)) / (x[j] - y[j])
        }
    };
    Ok(KernelFunction::new(
        KernelTag::DividedDifference(name),
        Arc::new(eval),
    ))
}

/// Worst defect of the scalar identity
/// sum_j (x_j - y_j) Psi_j(x, y) - (f(x) - f(y)) over eigengrid pairs.
fn identity_precheck(
    f: &ScalarField,
    a: &CommutingTuple,
    b: &CommutingTuple,
    kernels: &[KernelFunction],
    cfg: &Tolerances,
) -> Result<(), DoiError> {
    let scale = a
        .grid()
        .iter()
        .chain(b.grid().iter())
        .map(|p| f.eval(p).abs())
        .fold(1.0, f64::max);
    let tol = cfg.identity_rel * scale;
    for x in a.grid() {
        for y in b.grid() {
            let lhs: f64 = kernels
                .iter()
                .enumerate()
                .map(|(j, k)| (x[j] - y[j]) * k.eval(x, y))
                .sum();
            let defect = (lhs - (f.eval(x) - f.eval(y))).abs();
            if defect > tol {
                return Err(DoiError::IdentityViolation {
                    x: x.clone(),
                    y: y.clone(),
                    defect,
                    tol,
                });
            }
        }
    }
    Ok(())
}

/// Residual of f(A) - f(B) = sum_j doi(Psi_j, A, B, A_j - B_j) in operator
/// norm, after verifying the scalar identity on all eigengrid pairs.
pub fn verify_sum_formula(
    f: &ScalarField,
    a: &CommutingTuple,
    b: &CommutingTuple,
    kernels: &[KernelFunction],
    cfg: &Tolerances,
) -> Result<f64, DoiError> {
    assert_eq!(kernels.len(), f.n());
    identity_precheck(f, a, b, kernels, cfg)?;
    let mut lhs = apply_function(f, a).into_matrix() - apply_function(f, b).into_matrix();
    for (j, kern) in kernels.iter().enumerate() {
        let t = a.matrix(j).matrix() - b.matrix(j).matrix();
        lhs -= doi(kern, a, b, &t)?;
    }
    Ok(crate::linalg::op_norm(&lhs))
}

/// Residual of the quasicommutator formula
/// f(A) R - R f(B) = sum_j doi(Psi_j, A, B, A_j R - R B_j).
pub fn quasicommutator_check(
    f: &ScalarField,
    a: &CommutingTuple,
    b: &CommutingTuple,
    r: &CMatrix,
    kernels: &[KernelFunction],
    cfg: &Tolerances,
) -> Result<f64, DoiError> {
    assert_eq!(kernels.len(), f.n());
    identity_precheck(f, a, b, kernels, cfg)?;
    let mut lhs = apply_function(f, a).matrix() * r - r * apply_function(f, b).matrix();
    for (j, kern) in kernels.iter().enumerate() {
        let t = a.matrix(j).matrix() * r - r * b.matrix(j).matrix();
        lhs -= doi(kern, a, b, &t)?;
    }
    Ok(crate::linalg::op_norm(&lhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcalc::make_bandlimited;
    use crate::linalg::op_norm;
    use crate::util::{haar_unitary, rng_from_seed};
    use num_complex::Complex64;
    use rand::Rng;

    fn random_tuple(n: usize, dim: usize, seed: u64) -> CommutingTuple {
        let mut rng = rng_from_seed(seed);
        let u = haar_unitary(dim, &mut rng);
        let diags: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| 6.0 * rng.random::<f64>() - 3.0).collect())
            .collect();
        CommutingTuple::from_basis_and_diagonals(u, &diags)
    }

    fn random_matrix(dim: usize, seed: u64) -> CMatrix {
        let mut rng = rng_from_seed(seed);
        CMatrix::from_fn(dim, dim, |_, _| crate::util::complex_gaussian(&mut rng))
    }

    fn chain_kernels(f: &ScalarField, gap: f64) -> Vec<KernelFunction> {
        (0..f.n())
            .map(|j| divided_differences(f, DdVariant::Chain(j), gap).unwrap())
            .collect()
    }

    #[test]
    fn functional_calculus_basics() {
        let a = random_tuple(2, 5, 1);
        let c = ScalarField::real_from_half_terms(2, vec![(Complex64::new(2.5, 0.0), vec![0.0, 0.0])])
            .unwrap();
        let ca = apply_function(&c, &a);
        let id = CMatrix::identity(5, 5);
        assert!(op_norm(&(ca.matrix() - id * Complex64::new(2.5, 0.0))) < 1e-10);

        // Coordinate functions through a sampler field reproduce the matrices.
        for j in 0..2 {
            let coord = ScalarField::sampler(2, 1.0, std::sync::Arc::new(move |x: &[f64]| x[j]));
            let aj = apply_function(&coord, &a);
            assert!(op_norm(&(aj.matrix() - a.matrix(j).matrix())) < 1e-9);
        }

        let prod = ScalarField::sampler(2, 1.0, std::sync::Arc::new(|x: &[f64]| x[0] * x[1]));
        let fa = apply_function(&prod, &a);
        let oracle = a.matrix(0).matrix() * a.matrix(1).matrix();
        assert!(op_norm(&(fa.matrix() - oracle)) < 1e-8);
    }

    #[test]
    fn doi_constant_and_slice_kernels() {
        let a = random_tuple(1, 4, 2);
        let b = random_tuple(1, 4, 3);
        let t = random_matrix(4, 4);
        let one = KernelFunction::custom("one", |_, _| 1.0);
        assert!(op_norm(&(doi(&one, &a, &b, &t).unwrap() - &t)) < 1e-10);

        let phi = ScalarField::sampler(1, 1.0, std::sync::Arc::new(|x: &[f64]| x[0].sin()));
        let left = KernelFunction::custom("left-slice", |x, _| x[0].sin());
        let got = doi(&left, &a, &b, &t).unwrap();
        let want = apply_function(&phi, &a).matrix() * &t;
        assert!(op_norm(&(got - want)) < 1e-9);

        let bad = KernelFunction::custom("bad", |_, _| f64::NAN);
        assert!(matches!(
            doi(&bad, &a, &b, &t),
            Err(DoiError::NonFiniteKernel { .. })
        ));
    }

    #[test]
    fn one_dim_divided_difference_recovers_exact_difference() {
        let f = make_bandlimited(1, 3.0, 5, 7).unwrap();
        let a = random_tuple(1, 6, 8);
        let b = random_tuple(1, 6, 9);
        let dd = divided_differences(&f, DdVariant::OneDim, 1e-7).unwrap();
        let t = a.matrix(0).matrix() - b.matrix(0).matrix();
        let got = doi(&dd, &a, &b, &t).unwrap();
        let want = apply_function(&f, &a).into_matrix() - apply_function(&f, &b).into_matrix();
        assert!(op_norm(&(got - want)) < 1e-8);
    }

    #[test]
    fn quadratic_divided_difference_is_sum() {
        // For f(x) = x^2 the divided difference is x + y; compare against a
        // narrow-band trigonometric surrogate evaluated well inside its
        // quadratic regime instead: use the algebraic identity directly.
        let f = ScalarField::sampler(1, 1.0, std::sync::Arc::new(|x: &[f64]| x[0] * x[0]));
        let dd = divided_differences(&f, DdVariant::OneDim, 0.0);
        // Sampler fields have no exact derivative; the gap 0 path never
        // triggers it for distinct points.
        let dd = dd.unwrap();
        assert!((dd.eval(&[1.3], &[0.4]) - 1.7).abs() < 1e-12);
    }

    #[test]
    fn chain_telescoping_identity() {
        let f = make_bandlimited(3, 2.0, 6, 11).unwrap();
        let kernels = chain_kernels(&f, 1e-7);
        let mut rng = rng_from_seed(12);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| 8.0 * rng.random::<f64>() - 4.0).collect();
            let y: Vec<f64> = (0..3).map(|_| 8.0 * rng.random::<f64>() - 4.0).collect();
            let lhs: f64 = kernels
                .iter()
                .enumerate()
                .map(|(j, k)| (x[j] - y[j]) * k.eval(&x, &y))
                .sum();
            assert!((lhs - (f.eval(&x) - f.eval(&y))).abs() < 1e-10);
        }
    }

    #[test]
    fn coincident_coordinate_takes_derivative() {
        let f = make_bandlimited(2, 1.5, 4, 13).unwrap();
        let k = divided_differences(&f, DdVariant::X, 1e-7).unwrap();
        let df = f.partial(0).unwrap();
        let x = [0.7, -0.3];
        let y = [0.7, 1.1];
        // x_1 = y_1 exactly: kernel must equal the partial derivative at the
        // mixed point (x_1, x_2).
        assert!((k.eval(&x, &y) - df.eval(&[0.7, -0.3])).abs() < 1e-8);
    }

    #[test]
    fn sum_formula_exact_for_chain_kernels() {
        let cfg = Tolerances::default();
        let f = make_bandlimited(3, 2.0, 5, 21).unwrap();
        let a = random_tuple(3, 6, 22);
        let b = random_tuple(3, 6, 23);
        let kernels = chain_kernels(&f, 1e-9);
        let res = verify_sum_formula(&f, &a, &b, &kernels, &cfg).unwrap();
        assert!(res < 1e-8, "residual {res}");

        let res_same = verify_sum_formula(&f, &a, &a, &kernels, &cfg).unwrap();
        assert!(res_same < 1e-10);
    }

    #[test]
    fn two_dim_normal_pair_formula() {
        let cfg = Tolerances::default();
        let f = make_bandlimited(2, 1.8, 5, 31).unwrap();
        let a = random_tuple(2, 5, 32);
        let b = random_tuple(2, 5, 33);
        let kernels = vec![
            divided_differences(&f, DdVariant::X, 1e-9).unwrap(),
            divided_differences(&f, DdVariant::Y, 1e-9).unwrap(),
        ];
        let res = verify_sum_formula(&f, &a, &b, &kernels, &cfg).unwrap();
        assert!(res < 1e-8, "residual {res}");
    }

    #[test]
    fn identity_violation_reported() {
        let cfg = Tolerances::default();
        let f = make_bandlimited(2, 1.5, 4, 41).unwrap();
        let a = random_tuple(2, 4, 42);
        let b = random_tuple(2, 4, 43);
        let junk = vec![
            KernelFunction::custom("zero", |_, _| 0.0),
            KernelFunction::custom("zero", |_, _| 0.0),
        ];
        assert!(matches!(
            verify_sum_formula(&f, &a, &b, &junk, &cfg),
            Err(DoiError::IdentityViolation { .. })
        ));
    }

    #[test]
    fn quasicommutator_formula() {
        let cfg = Tolerances::default();
        let f = make_bandlimited(3, 2.0, 5, 51).unwrap();
        let a = random_tuple(3, 8, 52);
        let b = random_tuple(3, 8, 53);
        let kernels = chain_kernels(&f, 1e-9);

        // R = I reduces to the sum formula.
        let id = CMatrix::identity(8, 8);
        let with_id = quasicommutator_check(&f, &a, &b, &id, &kernels, &cfg).unwrap();
        let plain = verify_sum_formula(&f, &a, &b, &kernels, &cfg).unwrap();
        assert!((with_id - plain).abs() < 1e-9);

        // Commutator case A = B.
        let r = random_matrix(8, 54);
        let comm = quasicommutator_check(&f, &a, &a, &r, &kernels, &cfg).unwrap();
        assert!(comm < 1e-8, "commutator residual {comm}");

        let full = quasicommutator_check(&f, &a, &b, &r, &kernels, &cfg).unwrap();
        assert!(full < 1e-8, "residual {full}");
    }

    #[test]
    fn doi_is_bilinear() {
        let a = random_tuple(2, 5, 61);
        let b = random_tuple(2, 5, 62);
        let t1 = random_matrix(5, 63);
        let t2 = random_matrix(5, 64);
        let k1 = KernelFunction::custom("k1", |x, y| (x[0] - y[1]).sin());
        let k2 = KernelFunction::custom("k2", |x, y| (x[1] * y[0]).cos());
        let ksum = KernelFunction::custom("k1+2k2", |x, y| {
            (x[0] - y[1]).sin() + 2.0 * (x[1] * y[0]).cos()
        });

        let lin_t = doi(&k1, &a, &b, &(&t1 * Complex64::new(3.0, 0.0) + &t2)).unwrap()
            - (doi(&k1, &a, &b, &t1).unwrap() * Complex64::new(3.0, 0.0)
                + doi(&k1, &a, &b, &t2).unwrap());
        assert!(op_norm(&lin_t) < 1e-10);

        let lin_phi = doi(&ksum, &a, &b, &t1).unwrap()
            - (doi(&k1, &a, &b, &t1).unwrap()
                + doi(&k2, &a, &b, &t1).unwrap() * Complex64::new(2.0, 0.0));
        assert!(op_norm(&lin_phi) < 1e-10);
    }

    #[test]
    fn hilbert_schmidt_contractivity() {
        let a = random_tuple(2, 6, 71);
        let b = random_tuple(2, 6, 72);
        let k = KernelFunction::custom("osc", |x, y| (3.0 * x[0] - y[0]).sin() * (x[1] + y[1]).cos());
        for seed in 0..20 {
            let t = random_matrix(6, 100 + seed);
            let mut sup = 0.0f64;
            for x in a.grid() {
                for y in b.grid() {
                    sup = sup.max(k.eval(x, y).abs());
                }
            }
            let out = doi(&k, &a, &b, &t).unwrap();
            let hs = |m: &CMatrix| m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            assert!(hs(&out) <= sup * hs(&t) + 1e-10);
        }
    }

    #[test]
    fn projective_tensor_bound() {
        // Phi(x, y) = sum_j phi_j(x) psi_j(y): the transformer norm on any T
        // is at most sum_j sup|phi_j| sup|psi_j|.
        let a = random_tuple(1, 6, 81);
        let b = random_tuple(1, 6, 82);
        let phi = KernelFunction::custom("rank2", |x, y| {
            x[0].sin() * (2.0 * y[0]).cos() + 0.5 * (x[0] * 0.7).cos() * y[0].sin()
        });
        let bound = 1.0 * 1.0 + 0.5;
        for seed in 0..20 {
            let t = random_matrix(6, 200 + seed);
            let out = doi(&phi, &a, &b, &t).unwrap();
            assert!(op_norm(&out) <= bound * op_norm(&t) + 1e-10);
        }
    }
}
