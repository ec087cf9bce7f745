use rand::Rng;

use super::field::{ScalarField, TrigTerm, Window};
use super::filter::{lp_component_trig, FilterBank};
use super::modulus::ModulusOfContinuity;
use super::FuncalcError;
use crate::config::Tolerances;
use crate::util::rng_from_seed;

/// Besov-type seminorm with sup norms in space: the l^q norm of the sequence
/// 2^{l s} * sup |f_l| over the given inclusive level range. q = infinity
/// takes the max.
pub fn besov_seminorm(
    f: &ScalarField,
    s: f64,
    q: f64,
    l_range: (i32, i32),
    window: &Window,
    cfg: &Tolerances,
    seed: u64,
) -> Result<f64, FuncalcError> {
    if l_range.1 < l_range.0 {
        return Err(FuncalcError::EmptyRange);
    }
    let bank = FilterBank::new();
    let mut weights = Vec::new();
    for l in l_range.0..=l_range.1 {
        let fl = lp_component_trig(f, l, &bank)?;
        let sup = if fl.terms().map(|t| t.is_empty()).unwrap_or(false) {
            0.0
        } else {
            fl.sup_abs(window, cfg, seed ^ (l as u64).wrapping_mul(0x9e37))
        };
        weights.push((2.0f64).powi(l).powf(s) * sup);
    }
    if q.is_infinite() {
        Ok(weights.into_iter().fold(0.0, f64::max))
    } else {
        assert!(q >= 1.0);
        Ok(weights
            .into_iter()
            .map(|w| w.powf(q))
            .sum::<f64>()
            .powf(1.0 / q))
    }
}

/// Sampled Lambda_omega seminorm: max over pairs of |f(x)-f(y)| / omega(|x-y|).
pub fn lambda_norm(
    f: &ScalarField,
    omega: &ModulusOfContinuity,
    pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<f64, FuncalcError> {
    if pairs.is_empty() {
        return Err(FuncalcError::EmptyRange);
    }
    let mut best = 0.0f64;
    for (x, y) in pairs {
        let sep: f64 = x
            .iter()
            .zip(y.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if sep == 0.0 {
            continue;
        }
        let denom = omega.eval(sep);
        if denom > 0.0 {
            best = best.max((f.eval(x) - f.eval(y)).abs() / denom);
        }
    }
    Ok(best)
}

/// Random point pairs in a window with log-uniform separations, covering both
/// the short-distance regime (where Lambda_omega quotients peak) and order-one
/// separations.
pub fn random_pairs(window: &Window, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = rng_from_seed(seed);
    let n = window.n();
    let span: f64 = window
        .lo
        .iter()
        .zip(window.hi.iter())
        .map(|(&a, &b)| b - a)
        .fold(f64::INFINITY, f64::min);
    (0..count)
        .map(|_| {
            let x = window.sample_point(&mut rng);
            let sep = span * (2.0f64).powf(-14.0 * rng.random::<f64>());
            let dir: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            let norm: f64 = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            let y: Vec<f64> = x
                .iter()
                .enumerate()
                .map(|(j, &xj)| (xj + dir[j] / norm * sep).clamp(window.lo[j], window.hi[j]))
                .collect();
            (x, y)
        })
        .collect()
}

/// Low-pass remainder diagnostic: sampled sup of |f - sum_{l >= m} f_l|
/// divided by omega(2^{-m}) times the sampled Lambda_omega seminorm. The
/// underlying estimate only pins this down up to an absolute constant, so the
/// ratio is reported, not compared to a threshold.
pub fn lp_tail_check(
    f: &ScalarField,
    omega: &ModulusOfContinuity,
    m: i32,
    window: &Window,
    cfg: &Tolerances,
    seed: u64,
) -> Result<f64, FuncalcError> {
    let terms = f.terms().ok_or(FuncalcError::SamplerUnsupported)?;
    let bank = FilterBank::new();
    // Weight of each term in f - sum_{l>=m} f_l; the zero frequency keeps
    // weight 1 (every band kills it), terms far above 2^m keep weight 0.
    let low: Vec<TrigTerm> = terms
        .iter()
        .filter_map(|t| {
            let rho = t.freq.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut high = 0.0;
            if rho > 0.0 {
                let top = rho.log2().ceil() as i32 + 2;
                for l in m..=top.max(m) {
                    high += bank.symbol(rho, l);
                }
            }
            let w = 1.0 - high;
            if w.abs() < 1e-15 {
                None
            } else {
                Some(TrigTerm {
                    coeff: t.coeff * w,
                    freq: t.freq.clone(),
                })
            }
        })
        .collect();
    let lowpass = ScalarField::from_terms(f.n(), low)?;
    let num = lowpass.sup_abs(window, cfg, seed);
    let pairs = random_pairs(window, 4000, seed ^ 0xa5a5);
    let lam = lambda_norm(f, omega, &pairs)?;
    let den = omega.eval((2.0f64).powi(-m)) * lam;
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(num / den)
}
