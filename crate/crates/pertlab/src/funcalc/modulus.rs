use std::sync::Arc;

use super::quad::integrate;
use super::FuncalcError;
use crate::config::Tolerances;

#[derive(Debug, Clone, PartialEq)]
pub enum ModulusKind {
    /// omega(t) = t^alpha, 0 < alpha < 1.
    Power(f64),
    /// omega(t) = min(t, d).
    TruncatedLinear(f64),
    /// omega(t) = t.
    Linear,
    Custom,
}

type OmegaFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Nondecreasing subadditive gauge with omega(0) = 0.
#[derive(Clone)]
pub struct ModulusOfContinuity {
    pub kind: ModulusKind,
    func: OmegaFn,
}

impl std::fmt::Debug for ModulusOfContinuity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ModulusOfContinuity({:?})", self.kind)
    }
}

impl ModulusOfContinuity {
    pub fn power(alpha: f64) -> Result<Self, FuncalcError> {
        if alpha <= 0.0 || alpha >= 1.0 {
            return Err(FuncalcError::InvalidAlpha(alpha));
        }
        Ok(ModulusOfContinuity {
            kind: ModulusKind::Power(alpha),
            func: Arc::new(move |t: f64| t.powf(alpha)),
        })
    }

    pub fn truncated_linear(d: f64) -> Self {
        assert!(d > 0.0);
        ModulusOfContinuity {
            kind: ModulusKind::TruncatedLinear(d),
            func: Arc::new(move |t: f64| t.min(d)),
        }
    }

    pub fn linear() -> Self {
        ModulusOfContinuity {
            kind: ModulusKind::Linear,
            func: Arc::new(|t| t),
        }
    }

    pub fn custom(f: OmegaFn) -> Self {
        ModulusOfContinuity {
            kind: ModulusKind::Custom,
            func: f,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            (self.func)(t)
        }
    }

    /// Checks the modulus axioms on a sampled grid; returns the worst
    /// subadditivity defect (negative values mean a violation).
    pub fn axiom_defect(&self, points: &[f64]) -> f64 {
        let mut worst = f64::INFINITY;
        for (i, &x) in points.iter().enumerate() {
            for &y in &points[i..] {
                worst = worst.min(self.eval(x) + self.eval(y) - self.eval(x + y));
            }
        }
        for w in points.windows(2) {
            if w[1] > w[0] {
                worst = worst.min(self.eval(w[1]) - self.eval(w[0]));
            }
        }
        worst
    }
}

/// Result of the improper integral defining omega*: either a finite value or
/// a divergence sentinel (the linear modulus makes the integral log-divergent).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StarValue {
    Finite(f64),
    Divergent,
}

impl StarValue {
    pub fn value(self) -> Option<f64> {
        match self {
            StarValue::Finite(v) => Some(v),
            StarValue::Divergent => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, StarValue::Finite(_))
    }
}

/// Bisection-adaptive Gauss-Legendre panel; handles integrands with kinks
/// (e.g. the truncated-linear modulus) to near machine precision.
fn integrate_adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, nodes: usize) -> f64 {
    fn go(f: &impl Fn(f64) -> f64, a: f64, b: f64, nodes: usize, tol: f64, depth: u32) -> f64 {
        let whole = integrate(f, a, b, nodes);
        let m = 0.5 * (a + b);
        let split = integrate(f, a, m, nodes) + integrate(f, m, b, nodes);
        if depth == 0 || (whole - split).abs() <= tol {
            split
        } else {
            go(f, a, m, nodes, 0.5 * tol, depth - 1) + go(f, m, b, nodes, 0.5 * tol, depth - 1)
        }
    }
    let rough = integrate(f, a, b, nodes).abs();
    go(f, a, b, nodes, 1e-13 * rough + 1e-300, 24)
}

/// omega*(delta) = delta * integral_delta^infinity omega(t) / t^2 dt,
/// integrated octave by octave with a ratio-based divergence probe and a
/// geometric tail extrapolation once the increments decay.
pub fn modulus_star(omega: &ModulusOfContinuity, delta: f64, cfg: &Tolerances) -> StarValue {
    assert!(delta > 0.0);
    let mut total = 0.0;
    let mut prev_inc = f64::NAN;
    let mut ratio = f64::NAN;
    for k in 0..cfg.modulus_max_octaves {
        let a = delta * (2.0f64).powi(k as i32);
        let b = 2.0 * a;
        let inc = integrate_adaptive(
            &|t| omega.eval(t) / (t * t),
            a,
            b,
            cfg.quadrature_nodes,
        );
        total += inc;
        if prev_inc.is_finite() && prev_inc > 0.0 {
            ratio = inc / prev_inc;
        }
        // Constant (or growing) octave increments mean log-divergence.
        if k >= 12 && ratio >= 1.0 - cfg.modulus_divergence_fraction {
            return StarValue::Divergent;
        }
        if inc <= cfg.modulus_rel * total {
            // Geometric tail: inc * r + inc * r^2 + ...
            if ratio.is_finite() && ratio < 1.0 {
                total += inc * ratio / (1.0 - ratio);
            }
            return StarValue::Finite(delta * total);
        }
        prev_inc = inc;
    }
    if ratio.is_finite() && ratio < 1.0 - cfg.modulus_divergence_fraction {
        // Converging but slowly; extrapolate the remaining geometric tail.
        let last = prev_inc * ratio;
        StarValue::Finite(delta * (total + last * ratio / (1.0 - ratio)))
    } else {
        StarValue::Divergent
    }
}

/// omega**(delta) = (omega*)*(delta); the inner star is evaluated numerically
/// at each quadrature node.
pub fn modulus_doublestar(
    omega: &ModulusOfContinuity,
    delta: f64,
    cfg: &Tolerances,
) -> StarValue {
    // Probe the inner integral first: if omega* is already divergent at
    // delta it is divergent everywhere relevant.
    if !modulus_star(omega, delta, cfg).is_finite() {
        return StarValue::Divergent;
    }
    let inner_omega = omega.clone();
    let inner_cfg = cfg.clone();
    let star = ModulusOfContinuity::custom(Arc::new(move |t: f64| {
        match modulus_star(&inner_omega, t, &inner_cfg) {
            StarValue::Finite(v) => v,
            StarValue::Divergent => f64::INFINITY,
        }
    }));
    modulus_star(&star, delta, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_closed_form() {
        let cfg = Tolerances::default();
        for i in 1..=9 {
            let alpha = i as f64 / 10.0;
            let omega = ModulusOfContinuity::power(alpha).unwrap();
            for &delta in &[0.03, 0.4, 1.7] {
                let got = modulus_star(&omega, delta, &cfg).value().unwrap();
                let want = delta.powf(alpha) / (1.0 - alpha);
                assert!(
                    (got - want).abs() <= 1e-6 * want,
                    "alpha={alpha} delta={delta}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn linear_is_divergent() {
        let cfg = Tolerances::default();
        assert_eq!(
            modulus_star(&ModulusOfContinuity::linear(), 0.5, &cfg),
            StarValue::Divergent
        );
    }

    #[test]
    fn truncated_linear_closed_form() {
        let cfg = Tolerances::default();
        let d = 2.0;
        let omega = ModulusOfContinuity::truncated_linear(d);
        for &delta in &[0.01, 0.3, 1.0, 2.0] {
            let got = modulus_star(&omega, delta, &cfg).value().unwrap();
            let want = delta * (1.0 + (d / delta).ln());
            assert!((got - want).abs() <= 1e-6 * want, "delta={delta}");
        }
    }

    #[test]
    fn doublestar_power() {
        let cfg = Tolerances::default();
        let alpha = 0.5;
        let omega = ModulusOfContinuity::power(alpha).unwrap();
        let delta = 0.2;
        let got = modulus_doublestar(&omega, delta, &cfg).value().unwrap();
        let want = delta.powf(alpha) / ((1.0 - alpha) * (1.0 - alpha));
        assert!((got - want).abs() <= 1e-5 * want, "{got} vs {want}");
        assert_eq!(
            modulus_doublestar(&ModulusOfContinuity::linear(), 0.5, &cfg),
            StarValue::Divergent
        );
    }

    #[test]
    fn axioms_hold_on_grid() {
        let pts: Vec<f64> = (1..60).map(|i| i as f64 * 0.07).collect();
        assert!(ModulusOfContinuity::power(0.3).unwrap().axiom_defect(&pts) >= -1e-12);
        assert!(ModulusOfContinuity::truncated_linear(1.5).axiom_defect(&pts) >= -1e-12);
    }
}
