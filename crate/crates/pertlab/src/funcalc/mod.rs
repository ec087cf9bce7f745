//! Scalar functions on R^n: band-limited trigonometric fields, exact
//! term-wise calculus, the Littlewood-Paley filter bank, Besov and
//! Hölder-type seminorms, and moduli of continuity.

mod besov;
mod field;
mod filter;
mod modulus;
pub mod quad;

pub use besov::{besov_seminorm, lambda_norm, lp_tail_check, random_pairs};
pub use field::{bernstein_check, make_bandlimited, FieldJson, ScalarField, TrigTerm, Window};
pub use filter::{lp_component_sampled, lp_component_trig, FilterBank};
pub(crate) use filter::smoothstep;
pub use modulus::{modulus_doublestar, modulus_star, ModulusKind, ModulusOfContinuity, StarValue};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FuncalcError {
    #[error("frequency bound sigma must be positive, got {0}")]
    InvalidSigma(f64),
    #[error("power-modulus exponent must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("operation requires a trigonometric-sum representation")]
    SamplerUnsupported,
    #[error("grid too coarse: Nyquist frequency {nyquist:.3} below required {required:.3}")]
    GridTooCoarse { nyquist: f64, required: f64 },
    #[error("empty level range or sample set")]
    EmptyRange,
    #[error("terms are not closed under conjugation; field would not be real-valued")]
    NotRealValued,
    #[error("term frequency dimension {got} does not match field dimension {expected}")]
    FrequencyDimension { expected: usize, got: usize },
}
