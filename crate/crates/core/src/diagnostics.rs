//! Monte Carlo checks of the probabilistic ingredients behind the recovery
//! guarantees, and the per-iteration quantities of the induction argument.
//!
//! Every trial draws its randomness from `derive_seed(seed, [trial])`, so
//! results do not depend on how trials are scheduled across threads.

use std::f64::consts::{LN_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coherence::{check_strong_coherence, coherence_profile};
use crate::guarantees::C2;
use crate::linalg::{sup_norm, OrthoBasis};
use crate::model::{CVector, MeasurementInstance, NoiseModel, SensingMatrix, C64};
use crate::rng::{derive_seed, random_prefix, seeded};
use crate::solvers::{omp_fixed, RecoveryResult};
use crate::{Error, Result};

/// `10 mu sqrt(2 ln p)`.
pub fn stoc_epsilon(mu: f64, p: usize) -> f64 {
    10.0 * mu * (2.0 * (p as f64).ln()).sqrt()
}

/// The fixed vector `z` the StOC inequalities are tested against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StocVector {
    Ones,
    /// `e_1`.
    Spike,
    /// i.i.d. standard complex Gaussian entries.
    Gaussian { seed: u64 },
    Explicit(Vec<C64>),
}

impl StocVector {
    pub fn resolve(&self, k: usize) -> Result<CVector> {
        Ok(match self {
            StocVector::Ones => CVector::from_element(k, C64::new(1.0, 0.0)),
            StocVector::Spike => {
                let mut z = CVector::zeros(k);
                z[0] = C64::new(1.0, 0.0);
                z
            }
            StocVector::Gaussian { seed } => NoiseModel::new(1.0)?.sample(k, &mut seeded(*seed)),
            StocVector::Explicit(v) => {
                if v.len() != k {
                    return Err(Error::DimensionMismatch {
                        what: "StOC test vector",
                        expected: k,
                        found: v.len(),
                    });
                }
                CVector::from_column_slice(v)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StocMethod {
    /// One product `X^H (X_Pi z)` per trial.
    Fast,
    /// Explicit submatrix inner products, entry by entry.
    Direct,
}

/// Trial indices at which each inequality failed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StocViolations {
    pub stoc1: Vec<usize>,
    pub stoc2: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StocReport {
    pub k: usize,
    pub epsilon: f64,
    /// `epsilon >= 1`, outside `[0, 1)`.
    pub epsilon_vacuous: bool,
    pub trials: usize,
    pub stoc1_violations: usize,
    pub stoc2_violations: usize,
    /// Trials where either inequality failed.
    pub joint_violations: usize,
    pub stoc_delta: f64,
    /// `4 / p`.
    pub stoc_delta_bound: f64,
    /// Strong coherence holds and `k <= n / (2 ln p)`.
    pub applicable: bool,
}

fn check_subset_size(matrix: &SensingMatrix, k: usize) -> Result<()> {
    if k == 0 || k > matrix.p() {
        return Err(Error::invalid(format!(
            "subset size must satisfy 1 <= k <= p = {}, got {k}",
            matrix.p()
        )));
    }
    Ok(())
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    Ok(())
}

fn trial_subset(p: usize, k: usize, seed: u64, trial: usize) -> Vec<usize> {
    random_prefix(&mut seeded(derive_seed(seed, &[trial as u64])), p, k)
}

/// `(||(X_Pi^H X_Pi - I) z||_inf, ||X_{Pi^c}^H X_Pi z||_inf)`.
fn stoc_sups(matrix: &SensingMatrix, subset: &[usize], z: &CVector, method: StocMethod) -> (f64, f64) {
    let x = matrix.as_matrix();
    let p = matrix.p();
    let mut in_subset = vec![None; p];
    for (pos, &j) in subset.iter().enumerate() {
        in_subset[j] = Some(pos);
    }
    match method {
        StocMethod::Fast => {
            let v = matrix.columns(subset) * z;
            let f = x.ad_mul(&v);
            let (mut on, mut off) = (0.0f64, 0.0f64);
            for (j, fj) in f.iter().enumerate() {
                match in_subset[j] {
                    Some(pos) => on = on.max((fj - z[pos]).norm()),
                    None => off = off.max(fj.norm()),
                }
            }
            (on, off)
        }
        StocMethod::Direct => {
            let inner = |a: usize, b: usize| {
                (0..x.nrows()).fold(C64::new(0.0, 0.0), |acc, r| acc + x[(r, a)].conj() * x[(r, b)])
            };
            let mut on = 0.0f64;
            for (row, &a) in subset.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (col, &b) in subset.iter().enumerate() {
                    let g = inner(a, b) - if row == col { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
                    acc += g * z[col];
                }
                on = on.max(acc.norm());
            }
            let mut off = 0.0f64;
            for a in (0..p).filter(|&a| in_subset[a].is_none()) {
                let mut acc = C64::new(0.0, 0.0);
                for (col, &b) in subset.iter().enumerate() {
                    acc += inner(a, b) * z[col];
                }
                off = off.max(acc.norm());
            }
            (on, off)
        }
    }
}

/// Per-trial check of both StOC inequalities for the fixed vector `z` over
/// random permutations.
pub fn stoc_violations(
    matrix: &SensingMatrix,
    k: usize,
    z: &CVector,
    epsilon: f64,
    trials: usize,
    seed: u64,
    method: StocMethod,
) -> Result<StocViolations> {
    check_subset_size(matrix, k)?;
    check_trials(trials)?;
    if z.len() != k {
        return Err(Error::DimensionMismatch {
            what: "StOC test vector",
            expected: k,
            found: z.len(),
        });
    }
    let limit = epsilon * z.norm();
    let flags: Vec<(bool, bool)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let subset = trial_subset(matrix.p(), k, seed, trial);
            let (on, off) = stoc_sups(matrix, &subset, z, method);
            (on > limit, off > limit)
        })
        .collect();
    let mut out = StocViolations::default();
    for (trial, (a, b)) in flags.into_iter().enumerate() {
        if a {
            out.stoc1.push(trial);
        }
        if b {
            out.stoc2.push(trial);
        }
    }
    Ok(out)
}

pub fn verify_stoc(
    matrix: &SensingMatrix,
    k: usize,
    z: &StocVector,
    epsilon: f64,
    trials: usize,
    seed: u64,
) -> Result<StocReport> {
    let zv = z.resolve(k)?;
    let v = stoc_violations(matrix, k, &zv, epsilon, trials, seed, StocMethod::Fast)?;
    let joint = {
        let mut all: Vec<usize> = v.stoc1.iter().chain(&v.stoc2).copied().collect();
        all.sort_unstable();
        all.dedup();
        all.len()
    };
    let (n, p) = (matrix.n(), matrix.p());
    let strong = matrix.p() >= 2
        && check_strong_coherence(&coherence_profile(matrix)?).satisfied;
    Ok(StocReport {
        k,
        epsilon,
        epsilon_vacuous: epsilon >= 1.0,
        trials,
        stoc1_violations: v.stoc1.len(),
        stoc2_violations: v.stoc2.len(),
        joint_violations: joint,
        stoc_delta: joint as f64 / trials as f64,
        stoc_delta_bound: 4.0 / p as f64,
        applicable: strong && (k as f64) <= n as f64 / (2.0 * (p as f64).ln()),
    })
}

/// Extreme eigenvalues of `X_Pi^H X_Pi` for one subset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetSpectrum {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

impl SubsetSpectrum {
    /// `||X_Pi^H X_Pi - I||_2`.
    pub fn deviation(&self) -> f64 {
        (self.max_eigenvalue - 1.0).max(1.0 - self.min_eigenvalue)
    }
}

pub fn subset_spectrum(matrix: &SensingMatrix, subset: &[usize]) -> SubsetSpectrum {
    let xs = matrix.columns(subset);
    let g = xs.ad_mul(&xs);
    let eig = g.symmetric_eigenvalues();
    SubsetSpectrum {
        min_eigenvalue: eig.min(),
        max_eigenvalue: eig.max(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningReport {
    pub k: usize,
    pub trials: usize,
    /// Draws with `||X_Pi^H X_Pi - I||_2 >= 1/2`.
    pub exceed_count: usize,
    pub probability: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub mean_deviation: f64,
    /// `2 p^{-2 ln 2}`.
    pub bound: f64,
    /// `mu <= 1/(240 ln p)` and `k <= p / (c2^2 ||X||^2 ln p)`.
    pub applicable: bool,
}

pub fn subset_spectra(matrix: &SensingMatrix, k: usize, trials: usize, seed: u64) -> Result<Vec<SubsetSpectrum>> {
    check_subset_size(matrix, k)?;
    check_trials(trials)?;
    Ok((0..trials)
        .into_par_iter()
        .map(|trial| subset_spectrum(matrix, &trial_subset(matrix.p(), k, seed, trial)))
        .collect())
}

pub fn submatrix_conditioning(
    matrix: &SensingMatrix,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<ConditioningReport> {
    let spectra = subset_spectra(matrix, k, trials, seed)?;
    let exceed_count = spectra.iter().filter(|s| s.deviation() >= 0.5).count();
    let p = matrix.p() as f64;
    let applicable = if matrix.p() >= 2 {
        let prof = coherence_profile(matrix)?;
        prof.mu <= 1.0 / (240.0 * p.ln())
            && (k as f64) <= p / (C2 * C2 * prof.spectral_norm.powi(2) * p.ln())
    } else {
        false
    };
    Ok(ConditioningReport {
        k,
        trials,
        exceed_count,
        probability: exceed_count as f64 / trials as f64,
        min_eigenvalue: spectra.iter().map(|s| s.min_eigenvalue).fold(f64::INFINITY, f64::min),
        max_eigenvalue: spectra.iter().map(|s| s.max_eigenvalue).fold(f64::NEG_INFINITY, f64::max),
        mean_deviation: spectra.iter().map(SubsetSpectrum::deviation).sum::<f64>() / trials as f64,
        bound: 2.0 * (-2.0 * LN_2 * p.ln()).exp(),
        applicable,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSupReport {
    pub sigma: f64,
    pub tau: f64,
    pub trials: usize,
    /// Draws with `||X^H P eta||_inf <= tau`.
    pub within: usize,
    pub empirical: f64,
    /// Binomial standard error of `empirical`.
    pub standard_error: f64,
    /// `1 - (p / pi) exp(-tau^2 / sigma^2)`, reported as-is when negative.
    pub bound: f64,
    /// `(1 - exp(-tau^2 / sigma^2))^p`: the product lower bound with the
    /// exact circular-Gaussian tail `Pr(|x_i^H P eta| > tau) <=
    /// exp(-tau^2 / sigma^2)`.
    pub product_bound: f64,
}

/// `sigma sqrt((1 + alpha) ln p)`.
pub fn noise_tau(sigma: f64, alpha: f64, p: usize) -> f64 {
    sigma * ((1.0 + alpha) * (p as f64).ln()).sqrt()
}

/// Estimates `Pr(||X^H P eta||_inf <= tau)` for `eta ~ CN(0, sigma^2 I)`,
/// where `P` projects onto the orthogonal complement of the columns in
/// `projection` (identity when `None`).
pub fn noise_sup_check(
    matrix: &SensingMatrix,
    sigma: f64,
    tau: f64,
    trials: usize,
    seed: u64,
    projection: Option<&[usize]>,
) -> Result<NoiseSupReport> {
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be > 0, got {sigma}")));
    }
    if !(tau >= 0.0) {
        return Err(Error::invalid(format!("tau must be >= 0, got {tau}")));
    }
    check_trials(trials)?;
    let basis = match projection {
        Some(cols) => Some(
            OrthoBasis::from_columns(matrix, cols)
                .map_err(|condition| Error::RankDeficient { condition })?,
        ),
        None => None,
    };
    let noise = NoiseModel::from_sigma(sigma)?;
    let within = (0..trials)
        .into_par_iter()
        .filter(|&trial| {
            let mut rng = seeded(derive_seed(seed, &[trial as u64]));
            let eta = noise.sample(matrix.n(), &mut rng);
            let eta = match &basis {
                Some(b) => b.project_out(&eta),
                None => eta,
            };
            sup_norm(&matrix.correlate(&eta)) <= tau
        })
        .count();
    let empirical = within as f64 / trials as f64;
    let p = matrix.p() as f64;
    let tail = (-(tau * tau) / (sigma * sigma)).exp();
    Ok(NoiseSupReport {
        sigma,
        tau,
        trials,
        within,
        empirical,
        standard_error: (empirical * (1.0 - empirical) / trials as f64).sqrt(),
        bound: 1.0 - p / PI * tail,
        product_bound: (1.0 - tail).powf(p),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationStep {
    /// Number of columns selected before this step.
    pub t: usize,
    /// `||X_Pi^H s_t||_inf` over the true support.
    pub m_on: f64,
    /// `||X_{Pi^c}^H s_t||_inf` off the true support.
    pub m_off: f64,
    /// `||X^H n_t||_inf`.
    pub n_sup: f64,
    /// `m_on - m_off > 2 n_sup`.
    pub sufficient: bool,
    /// All `t` earlier selections lie in the true support.
    pub history_correct: bool,
    /// Selection `t + 1` lies in the true support.
    pub next_correct: bool,
}

#[derive(Debug, Clone)]
pub struct IterationTrace {
    pub steps: Vec<IterationStep>,
    pub result: RecoveryResult,
}

impl IterationTrace {
    /// Steps where the sufficient condition held with a correct history
    /// and the next selection was nevertheless wrong.
    pub fn counterexamples(&self) -> impl Iterator<Item = &IterationStep> {
        self.steps
            .iter()
            .filter(|s| s.sufficient && s.history_correct && !s.next_correct)
    }
}

/// Runs fixed-`k` OMP on `instance` and splits each residual into its
/// signal part `s_t = (I - P_t) X beta` and noise part `n_t = (I - P_t) eta`.
pub fn trace_iterations(instance: &MeasurementInstance, k: usize) -> Result<IterationTrace> {
    let matrix = instance.matrix.as_ref();
    let result = omp_fixed(matrix, &instance.observation, k)?;
    let truth = instance.signal.support();
    let mut on_support = vec![false; matrix.p()];
    for &j in truth {
        on_support[j] = true;
    }
    let clean = instance.clean_observation();
    let order = result.support.order();
    let mut basis = OrthoBasis::new();
    let mut steps = Vec::with_capacity(k);
    for t in 0..k {
        if t > 0 {
            let col = matrix.as_matrix().column(order[t - 1]).into_owned();
            basis
                .push(&col)
                .map_err(|condition| Error::SingularSelection { iteration: t, condition })?;
        }
        let s_t = basis.project_out(&clean);
        let n_t = basis.project_out(&instance.noise);
        let f = matrix.correlate(&s_t);
        let (mut m_on, mut m_off) = (0.0f64, 0.0f64);
        for (j, fj) in f.iter().enumerate() {
            if on_support[j] {
                m_on = m_on.max(fj.norm());
            } else {
                m_off = m_off.max(fj.norm());
            }
        }
        let n_sup = sup_norm(&matrix.correlate(&n_t));
        steps.push(IterationStep {
            t,
            m_on,
            m_off,
            n_sup,
            sufficient: m_on - m_off > 2.0 * n_sup,
            history_correct: order[..t].iter().all(|&j| on_support[j]),
            next_correct: on_support[order[t]],
        });
    }
    Ok(IterationTrace { steps, result })
}
