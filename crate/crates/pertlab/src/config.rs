//! Central numerical configuration.
//!
//! Every tolerance and discretization knob used across the crate lives here,
//! so experiments can override them from one place (CLI flag or JSON file)
//! instead of scattering magic numbers.

use serde::{Deserialize, Serialize};

/// Tolerances and discretization defaults shared by all modules.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative self-adjointness tolerance for Hermitian matrix validation.
    pub hermitian_rel: f64,
    /// Commutator tolerance factor; the absolute tolerance is
    /// `commute_rel * max_i ||A_i||^2`.
    pub commute_rel: f64,
    /// Relative reconstruction tolerance `||A - U diag U*|| <= eigen_recon_rel * ||A||`.
    pub eigen_recon_rel: f64,
    /// Unitarity tolerance `||U*U - I||`.
    pub unitary_abs: f64,
    /// Relative eigenvalue gap below which two eigenvalues are treated as a
    /// degenerate cluster during joint diagonalization.
    pub cluster_gap_rel: f64,
    /// Relative tolerance for the scalar sum identity checked before a
    /// double-operator-integral sum formula is evaluated (`tau_id`).
    pub identity_rel: f64,
    /// Relative tolerance for the multiplier representation identity (`tau_rep`).
    pub representation_rel: f64,
    /// Window gap below which a divided difference switches to the derivative.
    pub divided_difference_gap: f64,
    /// Number of coarse samples per axis for 1-d sup-norm estimation.
    pub sup_grid_1d: usize,
    /// Number of scattered samples for sup-norm estimation in dimension >= 2.
    pub sup_samples_nd: usize,
    /// Gradient-ascent polish iterations after coarse sup-norm sampling.
    pub sup_polish_iters: usize,
    /// Gauss-Legendre node count for the sampler path of the unit-cube kernels.
    pub quadrature_nodes: usize,
    /// Fourier grid points per axis for the Schur bound (dimension 2n = 2).
    pub schur_grid_2d: usize,
    /// Fourier grid points per axis for the Schur bound (dimension 2n = 4).
    pub schur_grid_4d: usize,
    /// Fourier grid points per axis for the Schur bound (dimension 2n = 6).
    pub schur_grid_6d: usize,
    /// Fourier grid points per axis for gap-only kernels (n-dimensional).
    pub schur_grid_gap: usize,
    /// l1-radius of the explicitly summed Fourier coefficients.
    pub schur_trunc_radius: usize,
    /// Maximal derivative order tabulated in the `C_alpha` metadata.
    pub schur_calpha_order: usize,
    /// Cubes sampled per dyadic scale when building the norm ledger.
    pub ledger_cubes_per_scale: usize,
    /// Relative accuracy target for the modulus-of-continuity integrals.
    pub modulus_rel: f64,
    /// Octave budget before the modulus integral is declared divergent.
    pub modulus_max_octaves: usize,
    /// Fraction of the running total below which octave increments must fall
    /// for the modulus integral to be considered convergent.
    pub modulus_divergence_fraction: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            hermitian_rel: 1e-12,
            commute_rel: 1e-10,
            eigen_recon_rel: 1e-8,
            unitary_abs: 1e-10,
            cluster_gap_rel: 1e-8,
            identity_rel: 1e-9,
            representation_rel: 1e-8,
            divided_difference_gap: 1e-7,
            sup_grid_1d: 4096,
            sup_samples_nd: 20_000,
            sup_polish_iters: 60,
            quadrature_nodes: 32,
            schur_grid_2d: 64,
            schur_grid_4d: 16,
            schur_grid_6d: 8,
            schur_grid_gap: 64,
            schur_trunc_radius: 24,
            schur_calpha_order: 2,
            ledger_cubes_per_scale: 3,
            modulus_rel: 1e-9,
            modulus_max_octaves: 900,
            modulus_divergence_fraction: 1e-4,
        }
    }
}
