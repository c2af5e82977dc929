//! Worst-case and average coherence, the strong coherence property, the
//! Welch bound and column sign "wiggling".

use serde::{Deserialize, Serialize};

use crate::model::{CMatrix, SensingMatrix, C64};
use crate::{Error, Result};

/// Sweep cap for [`wiggle`].
pub const WIGGLE_MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceProfile {
    /// `max_{i != j} |<x_i, x_j>|`.
    pub mu: f64,
    /// `max_i |sum_{j != i} <x_i, x_j>| / (p - 1)`.
    pub nu: f64,
    /// Largest singular value of `X`.
    pub spectral_norm: f64,
    pub n: usize,
    pub p: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrongCoherenceReport {
    pub mu_threshold: f64,
    pub mu_margin: f64,
    pub nu_threshold: f64,
    pub nu_margin: f64,
    pub satisfied: bool,
}

/// `X^H X`, entry `(i, j)` being `<x_i, x_j> = x_i^H x_j`.
pub fn gram(matrix: &SensingMatrix) -> CMatrix {
    let x = matrix.as_matrix();
    x.ad_mul(x)
}

/// Off-diagonal row sums of the Gram matrix, accumulated in column order.
fn off_diagonal_row_sums(g: &CMatrix) -> Vec<C64> {
    let p = g.nrows();
    (0..p)
        .map(|i| {
            (0..p)
                .filter(|&j| j != i)
                .fold(C64::new(0.0, 0.0), |acc, j| acc + g[(i, j)])
        })
        .collect()
}

fn worst_case_from_gram(g: &CMatrix) -> f64 {
    let p = g.nrows();
    let mut mu: f64 = 0.0;
    for j in 0..p {
        for i in 0..p {
            if i != j {
                mu = mu.max(g[(i, j)].norm());
            }
        }
    }
    mu
}

fn average_from_row_sums(sums: &[C64]) -> f64 {
    let p = sums.len();
    sums.iter().map(|s| s.norm()).fold(0.0, f64::max) / (p - 1) as f64
}

pub fn spectral_norm(x: &CMatrix) -> f64 {
    x.singular_values().max()
}

pub fn coherence_profile(matrix: &SensingMatrix) -> Result<CoherenceProfile> {
    if matrix.p() < 2 {
        return Err(Error::invalid("coherence needs at least two columns"));
    }
    let g = gram(matrix);
    Ok(CoherenceProfile {
        mu: worst_case_from_gram(&g),
        nu: average_from_row_sums(&off_diagonal_row_sums(&g)),
        spectral_norm: spectral_norm(matrix.as_matrix()),
        n: matrix.n(),
        p: matrix.p(),
    })
}

/// Tests `mu <= 1/(240 ln p)` and `nu <= mu / sqrt(n)`.
pub fn check_strong_coherence(profile: &CoherenceProfile) -> StrongCoherenceReport {
    let mu_threshold = 1.0 / (240.0 * (profile.p as f64).ln());
    let nu_threshold = profile.mu / (profile.n as f64).sqrt();
    let mu_margin = mu_threshold - profile.mu;
    let nu_margin = nu_threshold - profile.nu;
    StrongCoherenceReport {
        mu_threshold,
        mu_margin,
        nu_threshold,
        nu_margin,
        satisfied: mu_margin >= 0.0 && nu_margin >= 0.0,
    }
}

/// Lower bound `sqrt((p - n) / (n (p - 1)))` on the worst-case coherence of
/// any `n x p` unit-norm frame; zero when `p <= n`.
pub fn welch_bound(n: usize, p: usize) -> f64 {
    if p <= n || n == 0 {
        return 0.0;
    }
    let (n, p) = (n as f64, p as f64);
    ((p - n) / (n * (p - 1.0))).sqrt()
}

#[derive(Debug, Clone)]
pub struct Wiggled {
    pub matrix: SensingMatrix,
    /// `+1` or `-1` per column.
    pub signs: Vec<i8>,
    pub sweeps: usize,
}

/// Flips column signs to lower the average coherence.
///
/// Greedy coordinate descent: columns are visited in index order and each
/// takes whichever sign gives the smaller `nu` with the others held fixed,
/// `+1` on ties. Sweeps repeat until one changes nothing or
/// [`WIGGLE_MAX_SWEEPS`] is reached. Sign flips leave `mu` and `||X||_2`
/// unchanged.
pub fn wiggle(matrix: &SensingMatrix) -> Wiggled {
    let p = matrix.p();
    let identity = |sweeps| Wiggled {
        matrix: matrix.clone(),
        signs: vec![1; p],
        sweeps,
    };
    if p < 2 {
        return identity(0);
    }
    let g = gram(matrix);
    let mut signs = vec![1i8; p];
    // c[i] = sum_{j != i} s_j G_ij; the signed row sum is s_i c[i] and has
    // the same magnitude.
    let mut c = off_diagonal_row_sums(&g);
    let mut sweeps = 0;
    let mut scratch = vec![C64::new(0.0, 0.0); p];

    let max_abs = |v: &[C64]| v.iter().map(|z| z.norm()).fold(0.0, f64::max);

    while sweeps < WIGGLE_MAX_SWEEPS {
        sweeps += 1;
        let mut changed = false;
        for m in 0..p {
            let current = max_abs(&c);
            // Candidate with s_m negated.
            let s = f64::from(signs[m]);
            for i in 0..p {
                scratch[i] = if i == m {
                    c[i]
                } else {
                    c[i] - g[(i, m)] * (2.0 * s)
                };
            }
            let flipped = max_abs(&scratch);
            let (nu_plus, nu_minus) = if signs[m] > 0 {
                (current, flipped)
            } else {
                (flipped, current)
            };
            let want: i8 = if nu_minus < nu_plus { -1 } else { 1 };
            if want != signs[m] {
                signs[m] = want;
                std::mem::swap(&mut c, &mut scratch);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    if signs.iter().all(|&s| s > 0) {
        return identity(sweeps);
    }
    let label = format!("{} (wiggled)", matrix.label());
    let candidate = matrix.with_column_signs(&signs, label);
    // Running sums drift by rounding; never hand back a worse matrix.
    let before = average_from_row_sums(&off_diagonal_row_sums(&g));
    let after = average_from_row_sums(&off_diagonal_row_sums(&crate::coherence::gram(
        &candidate,
    )));
    if after <= before {
        Wiggled {
            matrix: candidate,
            signs,
            sweeps,
        }
    } else {
        identity(sweeps)
    }
}
