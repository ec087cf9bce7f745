use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FuncalcError;
use crate::config::Tolerances;
use crate::util::{complex_gaussian, rng_from_seed};

/// One exponential term c * e^{i<xi, x>}.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigTerm {
    pub coeff: Complex64,
    pub freq: Vec<f64>,
}

type SamplerFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Repr {
    TrigSum(Vec<TrigTerm>),
    Sampler(SamplerFn),
}

/// Real-valued function on R^n, represented either as a finite trigonometric
/// sum (closed under conjugation, so evaluation is exactly real) or as a
/// black-box sampler.
#[derive(Clone)]
pub struct ScalarField {
    n: usize,
    repr: Repr,
    sigma: f64,
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.repr {
            Repr::TrigSum(t) => write!(
                f,
                "ScalarField(trig, n={}, terms={}, sigma={:.4})",
                self.n,
                t.len(),
                self.sigma
            ),
            Repr::Sampler(_) => write!(f, "ScalarField(sampler, n={})", self.n),
        }
    }
}

fn freq_key(freq: &[f64]) -> Vec<u64> {
    freq.iter().map(|x| x.to_bits()).collect()
}

impl ScalarField {
    /// Builds a real field from arbitrary terms by symmetrizing: each term
    /// (c, xi) contributes (c/2, xi) and (conj c / 2, -xi).
    pub fn real_from_half_terms(
        n: usize,
        terms: Vec<(Complex64, Vec<f64>)>,
    ) -> Result<Self, FuncalcError> {
        let mut sym: Vec<TrigTerm> = Vec::with_capacity(terms.len() * 2);
        for (c, xi) in terms {
            if xi.len() != n {
                return Err(FuncalcError::FrequencyDimension {
                    expected: n,
                    got: xi.len(),
                });
            }
            let neg: Vec<f64> = xi.iter().map(|&v| -v).collect();
            sym.push(TrigTerm {
                coeff: c * 0.5,
                freq: xi,
            });
            sym.push(TrigTerm {
                coeff: c.conj() * 0.5,
                freq: neg,
            });
        }
        Ok(Self::merge_and_build(n, sym))
    }

    /// Builds from a full term list, verifying conjugate closure.
    pub fn from_terms(n: usize, terms: Vec<TrigTerm>) -> Result<Self, FuncalcError> {
        for t in &terms {
            if t.freq.len() != n {
                return Err(FuncalcError::FrequencyDimension {
                    expected: n,
                    got: t.freq.len(),
                });
            }
        }
        let field = Self::merge_and_build(n, terms);
        let scale = field
            .terms()
            .unwrap()
            .iter()
            .map(|t| t.coeff.norm())
            .fold(1e-300, f64::max);
        // Every term must have its conjugate partner.
        let map: std::collections::HashMap<Vec<u64>, Complex64> = field
            .terms()
            .unwrap()
            .iter()
            .map(|t| (freq_key(&t.freq), t.coeff))
            .collect();
        for t in field.terms().unwrap() {
            let neg: Vec<f64> = t.freq.iter().map(|&v| -v).collect();
            match map.get(&freq_key(&neg)) {
                Some(&c) if (c - t.coeff.conj()).norm() <= 1e-12 * scale => {}
                _ => return Err(FuncalcError::NotRealValued),
            }
        }
        Ok(field)
    }

    fn merge_and_build(n: usize, terms: Vec<TrigTerm>) -> Self {
        let mut merged: std::collections::HashMap<Vec<u64>, TrigTerm> =
            std::collections::HashMap::new();
        for t in terms {
            merged
                .entry(freq_key(&t.freq))
                .and_modify(|e| e.coeff += t.coeff)
                .or_insert(t);
        }
        let mut list: Vec<TrigTerm> = merged
            .into_values()
            .filter(|t| t.coeff.norm() > 0.0)
            .collect();
        // Deterministic term order.
        list.sort_by(|a, b| freq_key(&a.freq).cmp(&freq_key(&b.freq)));
        let sigma = list
            .iter()
            .map(|t| t.freq.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        ScalarField {
            n,
            repr: Repr::TrigSum(list),
            sigma,
        }
    }

    /// Black-box field; `sigma_hint` is the declared smoothness metadata.
    pub fn sampler(n: usize, sigma_hint: f64, f: SamplerFn) -> Self {
        ScalarField {
            n,
            repr: Repr::Sampler(f),
            sigma: sigma_hint,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn is_trig(&self) -> bool {
        matches!(self.repr, Repr::TrigSum(_))
    }

    pub fn terms(&self) -> Option<&[TrigTerm]> {
        match &self.repr {
            Repr::TrigSum(t) => Some(t),
            Repr::Sampler(_) => None,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n);
        match &self.repr {
            Repr::TrigSum(terms) => terms
                .iter()
                .map(|t| {
                    let phase: f64 = t.freq.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
                    (t.coeff * Complex64::new(0.0, phase).exp()).re
                })
                .sum(),
            Repr::Sampler(f) => f(x),
        }
    }

    /// Gradient, exact for trigonometric sums.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, FuncalcError> {
        let terms = self.terms().ok_or(FuncalcError::SamplerUnsupported)?;
        let mut g = vec![0.0; self.n];
        for t in terms {
            let phase: f64 = t.freq.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
            let v = t.coeff * Complex64::new(0.0, phase).exp() * Complex64::new(0.0, 1.0);
            for j in 0..self.n {
                g[j] += (v * t.freq[j]).re;
            }
        }
        Ok(g)
    }

    /// Exact term-wise partial derivative D^alpha.
    pub fn derivative(&self, alpha: &[usize]) -> Result<ScalarField, FuncalcError> {
        assert_eq!(alpha.len(), self.n);
        let terms = self.terms().ok_or(FuncalcError::SamplerUnsupported)?;
        let new_terms: Vec<TrigTerm> = terms
            .iter()
            .filter_map(|t| {
                let mut c = t.coeff;
                for (j, &aj) in alpha.iter().enumerate() {
                    for _ in 0..aj {
                        c *= Complex64::new(0.0, t.freq[j]);
                    }
                }
                if c.norm() > 0.0 {
                    Some(TrigTerm {
                        coeff: c,
                        freq: t.freq.clone(),
                    })
                } else {
                    None
                }
            })
            .collect();
        Ok(Self::merge_and_build(self.n, new_terms))
    }

    pub fn partial(&self, j: usize) -> Result<ScalarField, FuncalcError> {
        let mut alpha = vec![0usize; self.n];
        alpha[j] = 1;
        self.derivative(&alpha)
    }

    /// Rescaled field f_s(x) = f(x / sigma), which has frequency bound 1
    /// when `self` has frequency bound sigma.
    pub fn rescaled_to_unit_sigma(&self) -> Result<(ScalarField, f64), FuncalcError> {
        let terms = self.terms().ok_or(FuncalcError::SamplerUnsupported)?;
        let sigma = self.sigma;
        if sigma <= 0.0 {
            return Err(FuncalcError::InvalidSigma(sigma));
        }
        let scaled: Vec<TrigTerm> = terms
            .iter()
            .map(|t| TrigTerm {
                coeff: t.coeff,
                freq: t.freq.iter().map(|&v| v / sigma).collect(),
            })
            .collect();
        Ok((Self::merge_and_build(self.n, scaled), sigma))
    }

    /// Sup of |f| over a window: coarse sampling plus gradient-ascent polish
    /// for trigonometric sums. Deterministic for a given seed.
    pub fn sup_abs(&self, window: &Window, cfg: &Tolerances, seed: u64) -> f64 {
        let mut best: Vec<(f64, Vec<f64>)> = Vec::new();
        let keep = 8usize;
        let consider = |val: f64, x: Vec<f64>, best: &mut Vec<(f64, Vec<f64>)>| {
            best.push((val, x));
            best.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            best.truncate(keep);
        };
        if self.n == 1 {
            let k = cfg.sup_grid_1d;
            for i in 0..k {
                let x = window.lo[0]
                    + (window.hi[0] - window.lo[0]) * (i as f64 + 0.5) / k as f64;
                consider(self.eval(&[x]).abs(), vec![x], &mut best);
            }
        } else {
            let mut rng = rng_from_seed(seed ^ 0x5f0f_beef);
            for _ in 0..cfg.sup_samples_nd {
                let x = window.sample_point(&mut rng);
                consider(self.eval(&x).abs(), x, &mut best);
            }
        }
        let mut sup = best.first().map(|b| b.0).unwrap_or(0.0);
        if self.is_trig() {
            for (_, start) in best {
                sup = sup.max(self.polish_max(window, start, cfg.sup_polish_iters));
            }
        }
        sup
    }

    fn polish_max(&self, window: &Window, mut x: Vec<f64>, iters: usize) -> f64 {
        let mut val = self.eval(&x);
        let mut step = 0.5 / self.sigma.max(1e-9);
        for _ in 0..iters {
            let grad = match self.gradient(&x) {
                Ok(g) => g,
                Err(_) => break,
            };
            let sgn = if val >= 0.0 { 1.0 } else { -1.0 };
            let norm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm < 1e-14 {
                break;
            }
            let mut improved = false;
            let mut t = step;
            for _ in 0..20 {
                let cand: Vec<f64> = x
                    .iter()
                    .zip(grad.iter())
                    .enumerate()
                    .map(|(j, (&xi, &gi))| {
                        (xi + sgn * t * gi / norm).clamp(window.lo[j], window.hi[j])
                    })
                    .collect();
                let cv = self.eval(&cand);
                if cv.abs() > val.abs() {
                    x = cand;
                    val = cv;
                    improved = true;
                    break;
                }
                t *= 0.5;
            }
            if !improved {
                break;
            }
            step = (t * 2.0).min(step);
        }
        val.abs()
    }
}

/// Axis-aligned box in R^n.
#[derive(Debug, Clone)]
pub struct Window {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Window {
    pub fn cube(n: usize, lo: f64, hi: f64) -> Self {
        Window {
            lo: vec![lo; n],
            hi: vec![hi; n],
        }
    }

    pub fn n(&self) -> usize {
        self.lo.len()
    }

    pub fn sample_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.lo
            .iter()
            .zip(self.hi.iter())
            .map(|(&a, &b)| a + (b - a) * rng.random::<f64>())
            .collect()
    }
}

/// Random band-limited real field: frequencies inside the ball of radius
/// sigma (the first one exactly on the sphere), complex Gaussian weights.
pub fn make_bandlimited(
    n: usize,
    sigma: f64,
    num_terms: usize,
    seed: u64,
) -> Result<ScalarField, FuncalcError> {
    if sigma <= 0.0 {
        return Err(FuncalcError::InvalidSigma(sigma));
    }
    assert!(num_terms >= 1);
    let mut rng = rng_from_seed(seed);
    let mut half = Vec::with_capacity(num_terms);
    for m in 0..num_terms {
        let mut dir: Vec<f64> = (0..n).map(|_| complex_gaussian(&mut rng).re).collect();
        let norm: f64 = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        let radius = if m == 0 {
            sigma
        } else {
            sigma * (0.35 + 0.65 * rng.random::<f64>())
        };
        for d in dir.iter_mut() {
            *d *= radius / norm;
        }
        let c = complex_gaussian(&mut rng) / (num_terms as f64).sqrt();
        half.push((c, dir));
    }
    ScalarField::real_from_half_terms(n, half)
}

/// Bernstein diagnostic: (sup |D^alpha f|) / (sigma^|alpha| sup |f|) over a
/// window. Mathematically at most 1 for band-limited fields; sampling slack
/// keeps the computed value within about 1e-3 of that.
pub fn bernstein_check(
    f: &ScalarField,
    alpha: &[usize],
    window: &Window,
    cfg: &Tolerances,
    seed: u64,
) -> Result<f64, FuncalcError> {
    if !f.is_trig() {
        return Err(FuncalcError::SamplerUnsupported);
    }
    let order: usize = alpha.iter().sum();
    let deriv = f.derivative(alpha)?;
    let num = deriv.sup_abs(window, cfg, seed);
    let den = f.sigma().powi(order as i32) * f.sup_abs(window, cfg, seed);
    Ok(num / den.max(1e-300))
}

/// JSON wire format: `{"n": .., "terms": [{"re": .., "im": .., "xi": [..]}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldJson {
    pub n: usize,
    pub terms: Vec<TermJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermJson {
    pub re: f64,
    pub im: f64,
    pub xi: Vec<f64>,
}

impl FieldJson {
    pub fn from_field(f: &ScalarField) -> Option<Self> {
        f.terms().map(|terms| FieldJson {
            n: f.n(),
            terms: terms
                .iter()
                .map(|t| TermJson {
                    re: t.coeff.re,
                    im: t.coeff.im,
                    xi: t.freq.clone(),
                })
                .collect(),
        })
    }

    pub fn to_field(&self) -> Result<ScalarField, FuncalcError> {
        ScalarField::from_terms(
            self.n,
            self.terms
                .iter()
                .map(|t| TrigTerm {
                    coeff: Complex64::new(t.re, t.im),
                    freq: t.xi.clone(),
                })
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_from_half_term() {
        let xi = vec![2.0, -1.0];
        let f =
            ScalarField::real_from_half_terms(2, vec![(Complex64::new(1.0, 0.0), xi.clone())])
                .unwrap();
        let x = [0.3, 0.7];
        let phase = xi[0] * x[0] + xi[1] * x[1];
        assert!((f.eval(&x) - phase.cos()).abs() < 1e-15);
        assert!((f.sigma() - 5.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn bandlimited_is_deterministic_and_bounded() {
        let f1 = make_bandlimited(3, 2.0, 6, 99).unwrap();
        let f2 = make_bandlimited(3, 2.0, 6, 99).unwrap();
        assert_eq!(f1.terms().unwrap(), f2.terms().unwrap());
        assert!(f1.sigma() <= 2.0 + 1e-12);
        assert!((f1.sigma() - 2.0).abs() < 1e-12, "first frequency pinned to sigma");
        assert!(matches!(
            make_bandlimited(2, -1.0, 3, 0),
            Err(FuncalcError::InvalidSigma(_))
        ));
    }

    #[test]
    fn derivative_is_termwise() {
        let f = ScalarField::real_from_half_terms(
            1,
            vec![(Complex64::new(0.0, -1.0), vec![3.0])],
        )
        .unwrap();
        // Symmetrization halves the input coefficient, so the field is
        // (-i/2)e^{3ix} + (i/2)e^{-3ix} = sin 3x.
        assert!((f.eval(&[0.2]) - (0.6_f64).sin()).abs() < 1e-15);
        let df = f.derivative(&[1]).unwrap();
        assert!((df.eval(&[0.2]) - 3.0 * (0.6_f64).cos()).abs() < 1e-14);
    }

    #[test]
    fn bernstein_equality_for_extremal_cosine() {
        let cfg = Tolerances::default();
        let sigma = 4.0;
        let f = ScalarField::real_from_half_terms(
            1,
            vec![(Complex64::new(1.0, 0.0), vec![sigma])],
        )
        .unwrap();
        let w = Window::cube(1, 0.0, 10.0);
        let r = bernstein_check(&f, &[1], &w, &cfg, 1).unwrap();
        assert!((r - 1.0).abs() < 1e-6, "extremal ratio {r}");
        let r0 = bernstein_check(&f, &[0], &w, &cfg, 1).unwrap();
        assert!((r0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bernstein_bounded_for_random_fields() {
        let cfg = Tolerances::default();
        for seed in 0..10 {
            let f = make_bandlimited(2, 1.5, 5, seed).unwrap();
            let w = Window::cube(2, 0.0, 30.0);
            let r = bernstein_check(&f, &[1, 1], &w, &cfg, seed).unwrap();
            assert!(r <= 1.0 + 1e-3, "seed {seed}: ratio {r}");
        }
    }

    #[test]
    fn json_round_trip_rejects_asymmetric() {
        let f = make_bandlimited(2, 1.0, 4, 5).unwrap();
        let j = FieldJson::from_field(&f).unwrap();
        let back = j.to_field().unwrap();
        assert_eq!(back.terms().unwrap(), f.terms().unwrap());

        let bad = FieldJson {
            n: 1,
            terms: vec![TermJson {
                re: 1.0,
                im: 0.0,
                xi: vec![1.0],
            }],
        };
        assert!(matches!(bad.to_field(), Err(FuncalcError::NotRealValued)));
    }
}
