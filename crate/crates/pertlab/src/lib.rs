//! Desk-scale numerical laboratory for functions of perturbed commuting
//! Hermitian tuples: double operator integrals as Schur products, the dyadic
//! cube multiplier construction, and the associated Lipschitz / Hölder /
//! Schatten perturbation inequalities, all exercised on finite matrices.

pub mod config;
pub mod cubes;
pub mod doi;
pub mod experiments;
pub mod funcalc;
pub mod linalg;
pub mod multipliers;
pub mod util;
