use serde::{Deserialize, Serialize};

use super::matrix::CMatrix;
use super::LinalgError;

/// Nonincreasing sequence of nonnegative singular values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularSpectrum {
    values: Vec<f64>,
}

impl SingularSpectrum {
    /// Builds from values in any order; sorts descending and clamps tiny
    /// negative round-off to zero.
    pub fn from_unsorted(mut values: Vec<f64>) -> Self {
        for v in values.iter_mut() {
            if *v < 0.0 {
                assert!(*v > -1e-12, "negative singular value {v}");
                *v = 0.0;
            }
        }
        values.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
        SingularSpectrum { values }
    }

    pub fn new(values: Vec<f64>) -> Self {
        for w in values.windows(2) {
            assert!(w[0] >= w[1], "spectrum must be nonincreasing");
        }
        assert!(values.last().map_or(true, |&v| v >= 0.0));
        SingularSpectrum { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// s_j, zero past the end.
    pub fn get(&self, j: usize) -> f64 {
        self.values.get(j).copied().unwrap_or(0.0)
    }
}

/// Singular values of an arbitrary complex matrix, sorted descending.
pub fn singular_values(t: &CMatrix) -> SingularSpectrum {
    let sv = t.clone().singular_values();
    SingularSpectrum::from_unsorted(sv.iter().copied().collect())
}

/// Cesaro averages sigma_n = (n+1)^{-1} sum_{j<=n} s_j of a spectrum.
pub fn sigma_seq(s: &SingularSpectrum) -> SingularSpectrum {
    let mut out = Vec::with_capacity(s.len());
    let mut acc = 0.0;
    for (n, &v) in s.values().iter().enumerate() {
        acc += v;
        out.push(acc / (n + 1) as f64);
    }
    SingularSpectrum::new(out)
}

/// Spectrum of the d-fold block-diagonal replica: output_n = s_{floor(n/d)}.
pub fn replicate_spectrum(s: &SingularSpectrum, d: usize) -> SingularSpectrum {
    assert!(d >= 1, "replication factor must be >= 1");
    let mut out = Vec::with_capacity(s.len() * d);
    for &v in s.values() {
        for _ in 0..d {
            out.push(v);
        }
    }
    SingularSpectrum::new(out)
}

/// Ideal functional: operator norm, Schatten p, or weak Schatten p.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IdealSpec {
    OperatorNorm,
    Schatten(f64),
    WeakSchatten(f64),
}

impl IdealSpec {
    pub fn schatten(p: f64) -> Result<Self, LinalgError> {
        if p > 0.0 {
            Ok(IdealSpec::Schatten(p))
        } else {
            Err(LinalgError::InvalidExponent(p))
        }
    }

    pub fn weak_schatten(p: f64) -> Result<Self, LinalgError> {
        if p > 0.0 {
            Ok(IdealSpec::WeakSchatten(p))
        } else {
            Err(LinalgError::InvalidExponent(p))
        }
    }
}

/// Psi_J applied to a spectrum.
pub fn ideal_norm(spec: IdealSpec, s: &SingularSpectrum) -> Result<f64, LinalgError> {
    match spec {
        IdealSpec::OperatorNorm => Ok(s.get(0)),
        IdealSpec::Schatten(p) => {
            if p <= 0.0 {
                return Err(LinalgError::InvalidExponent(p));
            }
            Ok(s.values().iter().map(|v| v.powf(p)).sum::<f64>().powf(1.0 / p))
        }
        IdealSpec::WeakSchatten(p) => {
            if p <= 0.0 {
                return Err(LinalgError::InvalidExponent(p));
            }
            let sup = s
                .values()
                .iter()
                .enumerate()
                .map(|(j, v)| (1 + j) as f64 * v.powf(p))
                .fold(0.0_f64, f64::max);
            Ok(sup.powf(1.0 / p))
        }
    }
}

/// A small library of probe spectra used to estimate Boyd ratios.
pub fn default_probe_spectra() -> Vec<SingularSpectrum> {
    let mut probes = vec![
        SingularSpectrum::new(vec![1.0]),
        SingularSpectrum::new(vec![1.0; 8]),
        SingularSpectrum::new(vec![1.0, 0.5, 0.25, 0.125, 0.0625]),
    ];
    let harmonic: Vec<f64> = (0..32).map(|j| 1.0 / (1 + j) as f64).collect();
    probes.push(SingularSpectrum::new(harmonic));
    let slow: Vec<f64> = (0..32).map(|j| 1.0 / ((1 + j) as f64).sqrt()).collect();
    probes.push(SingularSpectrum::new(slow));
    probes
}

/// beta_{J,d}: sup over the probe library of ||[s]_d||_J / ||s||_J.
pub fn boyd_ratio(
    spec: IdealSpec,
    d: usize,
    probes: &[SingularSpectrum],
) -> Result<f64, LinalgError> {
    let mut best = 0.0_f64;
    for s in probes {
        let base = ideal_norm(spec, s)?;
        if base == 0.0 {
            continue;
        }
        let rep = ideal_norm(spec, &replicate_spectrum(s, d))?;
        best = best.max(rep / base);
    }
    Ok(best)
}

/// Averaging ratio Psi_J({sigma_n}) / Psi_J({s_n}) for one spectrum.
pub fn averaging_check(spec: IdealSpec, s: &SingularSpectrum) -> Result<f64, LinalgError> {
    let base = ideal_norm(spec, s)?;
    if base == 0.0 {
        return Ok(0.0);
    }
    Ok(ideal_norm(spec, &sigma_seq(s))? / base)
}
