use num_complex::Complex64;
use rustfft::FftPlanner;

use super::field::{ScalarField, TrigTerm};
use super::FuncalcError;

/// Smooth monotone step: 0 for x <= 0, 1 for x >= 1, C^infty throughout.
/// Built from the flat bump e^{-1/x}.
pub(crate) fn smoothstep(x: f64) -> f64 {
    fn e(x: f64) -> f64 {
        if x > 0.0 {
            (-1.0 / x).exp()
        } else {
            0.0
        }
    }
    let a = e(x);
    let b = e(1.0 - x);
    if a + b == 0.0 {
        if x >= 1.0 {
            1.0
        } else {
            0.0
        }
    } else {
        a / (a + b)
    }
}

/// Dyadic band-pass profile: w vanishes outside [1/2, 2], rises smoothly on
/// [1/2, 1], and satisfies w(s) = 1 - w(s/2) on [1, 2], so the dilates
/// w(t / 2^l) form a partition of unity on t > 0 with at most two nonzero
/// terms at any point.
#[derive(Debug, Clone, Default)]
pub struct FilterBank;

impl FilterBank {
    pub fn new() -> Self {
        FilterBank
    }

    /// Transition profile on [1/2, 1].
    pub fn h(&self, s: f64) -> f64 {
        smoothstep(2.0 * s - 1.0)
    }

    pub fn w(&self, s: f64) -> f64 {
        if s <= 0.5 || s >= 2.0 {
            0.0
        } else if s < 1.0 {
            self.h(s)
        } else {
            1.0 - self.h(s / 2.0)
        }
    }

    /// Fourier symbol of the level-l band: w(|xi| / 2^l).
    pub fn symbol(&self, xi_norm: f64, l: i32) -> f64 {
        self.w(xi_norm / (2.0f64).powi(l))
    }

    /// Sum over all levels of w(t / 2^l); equals 1 for t > 0.
    pub fn partition_sum(&self, t: f64) -> f64 {
        assert!(t > 0.0);
        let center = t.log2().floor() as i32;
        (center - 2..=center + 2).map(|l| self.symbol(t, l)).sum()
    }
}

/// Band component f_l of a trigonometric sum, computed exactly term-wise:
/// each term (c, xi) is scaled by w(|xi| / 2^l).
pub fn lp_component_trig(
    f: &ScalarField,
    l: i32,
    bank: &FilterBank,
) -> Result<ScalarField, FuncalcError> {
    let terms = f.terms().ok_or(FuncalcError::SamplerUnsupported)?;
    let scaled: Vec<TrigTerm> = terms
        .iter()
        .filter_map(|t| {
            let norm = t.freq.iter().map(|v| v * v).sum::<f64>().sqrt();
            let wgt = bank.symbol(norm, l);
            if wgt == 0.0 {
                None
            } else {
                Some(TrigTerm {
                    coeff: t.coeff * wgt,
                    freq: t.freq.clone(),
                })
            }
        })
        .collect();
    ScalarField::from_terms(f.n(), scaled)
}

/// Band component f_l from samples on a uniform periodic grid: discrete
/// Fourier transform, multiply each bin by w(|frequency| / 2^l), transform
/// back. `samples` has length grid^n in row-major order; sample i along an
/// axis sits at period * i / grid, and bin k carries physical frequency
/// 2*pi*k / period (k folded into [-grid/2, grid/2)).
pub fn lp_component_sampled(
    samples: &[f64],
    n: usize,
    grid: usize,
    period: f64,
    l: i32,
    bank: &FilterBank,
) -> Result<Vec<f64>, FuncalcError> {
    assert!(n >= 1 && grid >= 2 && period > 0.0);
    assert_eq!(samples.len(), grid.pow(n as u32));
    let nyquist = std::f64::consts::PI * grid as f64 / period;
    let required = (2.0f64).powi(l + 1);
    if nyquist < required {
        return Err(FuncalcError::GridTooCoarse { nyquist, required });
    }

    let mut data: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_all_axes(&mut data, n, grid, false);

    let base = 2.0 * std::f64::consts::PI / period;
    for (idx, v) in data.iter_mut().enumerate() {
        let mut rem = idx;
        let mut norm2 = 0.0;
        for _ in 0..n {
            let k = rem % grid;
            rem /= grid;
            let signed = if k <= grid / 2 {
                k as i64
            } else {
                k as i64 - grid as i64
            };
            let freq = base * signed as f64;
            norm2 += freq * freq;
        }
        *v *= bank.symbol(norm2.sqrt(), l);
    }

    fft_all_axes(&mut data, n, grid, true);
    let scale = 1.0 / grid.pow(n as u32) as f64;
    Ok(data.iter().map(|v| v.re * scale).collect())
}

/// In-place FFT along every axis of a row-major grid^n array.
fn fft_all_axes(data: &mut [Complex64], n: usize, grid: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(grid)
    } else {
        planner.plan_fft_forward(grid)
    };
    let total = data.len();
    let mut line = vec![Complex64::default(); grid];
    for axis in 0..n {
        let stride = grid.pow(axis as u32);
        let lines = total / grid;
        for li in 0..lines {
            // Decompose the line index into coordinates of the other axes.
            let inner = li % stride;
            let outer = li / stride;
            let start = outer * stride * grid + inner;
            for (t, slot) in line.iter_mut().enumerate() {
                *slot = data[start + t * stride];
            }
            fft.process(&mut line);
            for (t, slot) in line.iter().enumerate() {
                data[start + t * stride] = *slot;
            }
        }
    }
}
