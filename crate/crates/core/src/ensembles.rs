//! Sensing-matrix families and sparse test signals.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::model::{CMatrix, SensingMatrix, SparseSignal, C64};
use crate::rng;
use crate::{Error, Result};

/// i.i.d. standard complex Gaussian entries, columns scaled to unit norm.
pub fn gaussian_matrix(n: usize, p: usize, seed: u64) -> Result<SensingMatrix> {
    if n < 1 || p < 2 {
        return Err(Error::invalid(format!(
            "gaussian matrix needs n >= 1 and p >= 2, got {n} x {p}"
        )));
    }
    let mut rng = rng::seeded(seed);
    // Column-major fill, so the draw order is column by column.
    let mut data = CMatrix::zeros(n, p);
    for j in 0..p {
        for i in 0..n {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            data[(i, j)] = C64::new(re, im);
        }
    }
    SensingMatrix::normalized(data, format!("gaussian n={n} p={p} seed={seed}"))
}

fn is_prime(n: usize) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
}

/// The `n x n^2` Gabor frame of all time-frequency shifts of the Alltop
/// sequence `a_m = n^{-1/2} exp(2 pi i m^3 / n)`.
///
/// Column `l * n + k` holds `M_k T_l a`, i.e. entry
/// `m -> a_{(m - l) mod n} exp(2 pi i k m / n)`. For prime `n >= 5` the
/// worst-case coherence is exactly `1/sqrt(n)` and the frame is tight.
pub fn alltop_gabor(n: usize) -> Result<SensingMatrix> {
    if n < 5 || !is_prime(n) {
        return Err(Error::NotPrime(n));
    }
    let scale = 1.0 / (n as f64).sqrt();
    // Phases reduced mod n in integers to keep the angles small and exact.
    let phase = |num: usize| C64::from_polar(1.0, 2.0 * PI * (num % n) as f64 / n as f64);
    let alltop: Vec<C64> = (0..n)
        .map(|m| phase(m * m % n * m) * scale)
        .collect();
    let data = CMatrix::from_fn(n, n * n, |m, col| {
        let (shift, freq) = (col / n, col % n);
        alltop[(m + n - shift) % n] * phase(freq * m)
    });
    SensingMatrix::normalized(data, format!("alltop-gabor n={n}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AmplitudeProfile {
    /// All magnitudes equal `min`.
    Flat { min: f64 },
    /// Rank `t` (1-based) gets `min * (1 + step * (k - t))`.
    LinearDecay { min: f64, step: f64 },
    /// Rank `t` gets `min * ratio^{-(k - t)}`, `ratio` in `(0, 1]`.
    GeometricDecay { min: f64, ratio: f64 },
    /// Given magnitudes, any order; must all be positive.
    Explicit { amplitudes: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseRule {
    /// All phases zero.
    #[default]
    Unit,
    /// Random `+1` / `-1`.
    RandomSign,
    /// Phases uniform on `[0, 2 pi)`.
    RandomUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalProfile {
    pub amplitudes: AmplitudeProfile,
    #[serde(default)]
    pub phase: PhaseRule,
}

impl SignalProfile {
    pub fn flat(min: f64, phase: PhaseRule) -> Self {
        Self {
            amplitudes: AmplitudeProfile::Flat { min },
            phase,
        }
    }

    pub fn geometric(min: f64, ratio: f64, phase: PhaseRule) -> Self {
        Self {
            amplitudes: AmplitudeProfile::GeometricDecay { min, ratio },
            phase,
        }
    }

    pub fn explicit(amplitudes: Vec<f64>, phase: PhaseRule) -> Self {
        Self {
            amplitudes: AmplitudeProfile::Explicit { amplitudes },
            phase,
        }
    }

    /// Magnitudes in non-increasing order, `|beta|_(1), ..., |beta|_(k)`.
    pub fn magnitudes(&self, k: usize) -> Result<Vec<f64>> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{what} must be positive, got {v}")))
            }
        };
        let mags: Vec<f64> = match &self.amplitudes {
            AmplitudeProfile::Flat { min } => {
                positive(*min, "minimum amplitude")?;
                vec![*min; k]
            }
            AmplitudeProfile::LinearDecay { min, step } => {
                positive(*min, "minimum amplitude")?;
                if !(*step >= 0.0) {
                    return Err(Error::invalid(format!("linear step must be >= 0, got {step}")));
                }
                (1..=k)
                    .map(|t| min * (1.0 + step * (k - t) as f64))
                    .collect()
            }
            AmplitudeProfile::GeometricDecay { min, ratio } => {
                positive(*min, "minimum amplitude")?;
                if !(*ratio > 0.0 && *ratio <= 1.0) {
                    return Err(Error::invalid(format!(
                        "geometric ratio must lie in (0, 1], got {ratio}"
                    )));
                }
                (1..=k)
                    .map(|t| min * ratio.powi(-((k - t) as i32)))
                    .collect()
            }
            AmplitudeProfile::Explicit { amplitudes } => {
                if amplitudes.len() != k {
                    return Err(Error::DimensionMismatch {
                        what: "explicit amplitudes",
                        expected: k,
                        found: amplitudes.len(),
                    });
                }
                for &a in amplitudes {
                    positive(a, "amplitude")?;
                }
                let mut a = amplitudes.clone();
                a.sort_by(|x, y| y.total_cmp(x));
                a
            }
        };
        Ok(mags)
    }
}

/// Draws a `k`-sparse signal: support uniform without replacement, the
/// first drawn index receiving the largest magnitude.
pub fn generate_signal(
    p: usize,
    k: usize,
    profile: &SignalProfile,
    seed: u64,
) -> Result<SparseSignal> {
    if k == 0 || k > p {
        return Err(Error::invalid(format!("sparsity must satisfy 1 <= k <= p, got k = {k}, p = {p}")));
    }
    let mags = profile.magnitudes(k)?;
    let mut rng = rng::seeded(seed);
    let support = rng::random_prefix(&mut rng, p, k);
    let entries = support.into_iter().zip(mags).map(|(i, m)| {
        let v = match profile.phase {
            PhaseRule::Unit => C64::new(m, 0.0),
            PhaseRule::RandomSign => {
                if rng.random_bool(0.5) {
                    C64::new(m, 0.0)
                } else {
                    C64::new(-m, 0.0)
                }
            }
            PhaseRule::RandomUniform => C64::from_polar(m, rng.random_range(0.0..2.0 * PI)),
        };
        (i, v)
    });
    SparseSignal::new(p, entries.collect::<Vec<_>>())
}
