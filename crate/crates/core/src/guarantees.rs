//! Closed-form recovery guarantees: signal statistics, sparsity caps,
//! admissibility conditions and success-probability lower bounds.
//!
//! Every formula is evaluated as written even when it is vacuous (a cap
//! below one, a probability at or below zero, a denominator that is not
//! positive); the `vacuous` flags say so. Logarithms are natural.

use std::f64::consts::{LN_2, PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::coherence::{check_strong_coherence, CoherenceProfile, StrongCoherenceReport};
use crate::model::{NoiseModel, SparseSignal};
use crate::{Error, Result};

/// Coherence constant in the sparsity cap and signal conditions.
pub const C1: f64 = 50.0 * SQRT_2;
/// Spectral-norm constant in the sparsity cap.
pub const C2: f64 = 104.0 * SQRT_2;
/// Smallest `p` for which the probability statements are claimed.
pub const MIN_P: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalStats {
    pub k: usize,
    pub norm_sq: f64,
    pub min_magnitude: f64,
    /// `|beta|_min^2 / (||beta||^2 / k)`.
    pub mar: f64,
    /// `LAR_(t)` for `t = 1..=k`, non-increasing.
    pub lar: Vec<f64>,
    /// `||beta||^2 / (n sigma^2)`; infinite when noiseless.
    pub snr: f64,
    /// `|beta|_min^2 / (n sigma^2 / k)`; infinite when noiseless.
    pub snr_min: f64,
}

pub fn signal_stats(signal: &SparseSignal, noise: &NoiseModel, n: usize) -> Result<SignalStats> {
    let k = signal.k();
    if k == 0 {
        return Err(Error::invalid("empty signal"));
    }
    let norm_sq = signal.norm_sq();
    let avg = norm_sq / k as f64;
    let mags = signal.sorted_magnitudes();
    let min_magnitude = mags[k - 1];
    let noise_energy = n as f64 * noise.variance();
    let (snr, snr_min) = if noise_energy > 0.0 {
        (
            norm_sq / noise_energy,
            min_magnitude * min_magnitude / (noise_energy / k as f64),
        )
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    Ok(SignalStats {
        k,
        norm_sq,
        min_magnitude,
        mar: min_magnitude * min_magnitude / avg,
        lar: mags.iter().map(|m| m * m / avg).collect(),
        snr,
        snr_min,
    })
}

/// Matrix and noise quantities the signal conditions depend on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionParams {
    pub mu: f64,
    pub n: usize,
    pub p: usize,
    pub sigma: f64,
    pub alpha: f64,
}

impl ConditionParams {
    fn ln_p(&self) -> f64 {
        (self.p as f64).ln()
    }

    /// `1 - c1 mu sqrt(m ln p)`.
    fn denominator(&self, m: usize) -> f64 {
        1.0 - C1 * self.mu * (m as f64 * self.ln_p()).sqrt()
    }

    /// `2 sigma sqrt((1 + alpha) ln p)`.
    fn noise_floor(&self) -> f64 {
        2.0 * self.sigma * ((1.0 + self.alpha) * self.ln_p()).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub holds: bool,
    /// The coherence denominator is not positive; `holds` is then false.
    pub vacuous: bool,
    pub lhs: f64,
    pub rhs: f64,
}

impl ConditionCheck {
    fn strict(lhs: f64, rhs: f64, denominator: f64) -> Self {
        let vacuous = !(denominator > 0.0);
        Self {
            holds: !vacuous && lhs > rhs,
            vacuous,
            lhs,
            rhs,
        }
    }
}

fn check_rank(t: usize, k: usize) -> Result<()> {
    if t >= k {
        return Err(Error::invalid(format!("rank t = {t} must be < k = {k}")));
    }
    Ok(())
}

/// Ratio form: `LAR_(t+1) > 4(1+alpha) / D^2 * k ln p / (n SNR)` with
/// `D = 1 - c1 mu sqrt((k - t) ln p)`.
pub fn lar_condition(stats: &SignalStats, params: &ConditionParams, t: usize) -> Result<ConditionCheck> {
    check_rank(t, stats.k)?;
    let d = params.denominator(stats.k - t);
    let k = stats.k as f64;
    let rhs = 4.0 * (1.0 + params.alpha) / (d * d) * (k * params.ln_p())
        / (params.n as f64 * stats.snr);
    Ok(ConditionCheck::strict(stats.lar[t], rhs, d))
}

/// Amplitude form: `|beta|_(t+1) > 2 sigma sqrt((1+alpha) ln p) / D`.
pub fn amplitude_condition(
    signal: &SparseSignal,
    params: &ConditionParams,
    t: usize,
) -> Result<ConditionCheck> {
    check_rank(t, signal.k())?;
    let d = params.denominator(signal.k() - t);
    let mags = signal.sorted_magnitudes();
    Ok(ConditionCheck::strict(mags[t], params.noise_floor() / d, d))
}

/// `MAR > 4(1+alpha) / (1 - c1 mu sqrt(k ln p))^2 * k ln p / (n SNR)`.
pub fn mar_condition(stats: &SignalStats, params: &ConditionParams) -> ConditionCheck {
    let d = params.denominator(stats.k);
    let k = stats.k as f64;
    let rhs = 4.0 * (1.0 + params.alpha) / (d * d) * (k * params.ln_p())
        / (params.n as f64 * stats.snr);
    ConditionCheck::strict(stats.mar, rhs, d)
}

/// Largest-entry detection: `|beta|_(t+1) > (|beta|_(t+2) + 2 sigma
/// sqrt((1+alpha) ln p)) / D`, with `|beta|_(k+1) = 0`.
pub fn decay_condition(
    signal: &SparseSignal,
    params: &ConditionParams,
    t: usize,
) -> Result<ConditionCheck> {
    check_rank(t, signal.k())?;
    let d = params.denominator(signal.k() - t);
    let mags = signal.sorted_magnitudes();
    let next = mags.get(t + 1).copied().unwrap_or(0.0);
    Ok(ConditionCheck::strict(
        mags[t],
        (next + params.noise_floor()) / d,
        d,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapBound {
    pub value: f64,
    pub terms: Vec<f64>,
    /// `value < 1`: no sparsity level is certified.
    pub vacuous: bool,
}

/// `min{ p / (c2^2 ||X||^2 ln p), 1 / (c1^2 mu^2 ln p) }`.
pub fn sparsity_cap_coherence(profile: &CoherenceProfile) -> Result<CapBound> {
    if profile.p < 2 {
        return Err(Error::invalid("sparsity cap needs p >= 2"));
    }
    let ln_p = (profile.p as f64).ln();
    let spectral = profile.p as f64 / (C2 * C2 * profile.spectral_norm.powi(2) * ln_p);
    let coherence = if profile.mu > 0.0 {
        1.0 / (C1 * C1 * profile.mu * profile.mu * ln_p)
    } else {
        f64::INFINITY
    };
    let value = spectral.min(coherence);
    Ok(CapBound {
        value,
        terms: vec![spectral, coherence],
        vacuous: value < 1.0,
    })
}

/// Number of interior grid points for the `theta` maximisations.
pub const THETA_GRID: usize = 999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaBound {
    pub value: f64,
    /// Smallest maximiser on the grid `{0.001, ..., 0.999}`.
    pub theta: f64,
    /// Individual terms at `theta`.
    pub terms: Vec<f64>,
    pub vacuous: bool,
}

/// `max_theta min_i terms(theta)_i` over the uniform grid.
pub fn maximize_over_theta<const N: usize>(terms: impl Fn(f64) -> [f64; N]) -> ThetaBound {
    let mut best: Option<(f64, f64, [f64; N])> = None;
    for i in 1..=THETA_GRID {
        let theta = i as f64 / (THETA_GRID + 1) as f64;
        let t = terms(theta);
        let v = t.iter().copied().fold(f64::INFINITY, f64::min);
        if best.as_ref().is_none_or(|(b, _, _)| v > *b) {
            best = Some((v, theta, t));
        }
    }
    let (value, theta, terms) = best.expect("non-empty grid");
    ThetaBound {
        value,
        theta,
        terms: terms.to_vec(),
        vacuous: !(value >= 1.0),
    }
}

/// Combined cap: `max_theta min{ n(1-theta)^2 SNR_min / (4(1+alpha) ln p),
/// theta^2 / (c1^2 mu^2 ln p), p / (c2^2 ||X||^2 ln p) }`.
pub fn sparsity_cap_combined(
    n: usize,
    snr_min: f64,
    mu: f64,
    spectral_norm_sq: f64,
    p: usize,
    alpha: f64,
) -> ThetaBound {
    let ln_p = (p as f64).ln();
    let n = n as f64;
    let third = p as f64 / (C2 * C2 * spectral_norm_sq * ln_p);
    maximize_over_theta(|theta| {
        [
            n * (1.0 - theta).powi(2) * snr_min / (4.0 * (1.0 + alpha) * ln_p),
            theta * theta / (C1 * C1 * mu * mu * ln_p),
            third,
        ]
    })
}

/// One-step thresholding cap: `max_theta min{ n(1-theta)^2 SNR_min /
/// (16 ln p), theta^2 / (800 mu^2 ln p MAR), n / (2 ln p) }`.
pub fn sparsity_cap_sost(n: usize, snr_min: f64, mu: f64, mar: f64, p: usize) -> ThetaBound {
    let ln_p = (p as f64).ln();
    let n = n as f64;
    maximize_over_theta(|theta| {
        [
            n * (1.0 - theta).powi(2) * snr_min / (16.0 * ln_p),
            theta * theta / (800.0 * mu * mu * ln_p * mar),
            n / (2.0 * ln_p),
        ]
    })
}

/// Worst-case-coherence cap: `max_theta min{ n(1-theta)^2 SNR_min /
/// (4(1+alpha) ln p), 1/2 + theta / (2 mu) }`.
pub fn sparsity_cap_worstcase(n: usize, snr_min: f64, mu: f64, alpha: f64, p: usize) -> ThetaBound {
    let ln_p = (p as f64).ln();
    let n = n as f64;
    maximize_over_theta(|theta| {
        [
            n * (1.0 - theta).powi(2) * snr_min / (4.0 * (1.0 + alpha) * ln_p),
            0.5 + theta / (2.0 * mu),
        ]
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OmpVariant {
    /// Known sparsity; also the partial-recovery bound with `k'` for `k`.
    Fixed,
    /// Stopping rule; one extra noise event.
    Stopping,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityBound {
    pub value: f64,
    /// `value <= 0`.
    pub vacuous: bool,
    /// `p >= 128` and `alpha >= 1`.
    pub applicable: bool,
}

/// `1 - k/(p^alpha pi) - 2 p^{-2 ln 2} - 4/p`, with `k + 1` in place of `k`
/// for the stopping variant.
pub fn success_probability(k: usize, p: usize, alpha: f64, variant: OmpVariant) -> ProbabilityBound {
    let events = match variant {
        OmpVariant::Fixed => k,
        OmpVariant::Stopping => k + 1,
    } as f64;
    let pf = p as f64;
    let value = 1.0
        - events / (pf.powf(alpha) * PI)
        - 2.0 * (-2.0 * LN_2 * pf.ln()).exp()
        - 4.0 / pf;
    ProbabilityBound {
        value,
        vacuous: !(value > 0.0),
        applicable: p >= MIN_P && alpha >= 1.0,
    }
}

/// `4 (1 + alpha) k sigma^2 ln p`.
pub fn reconstruction_bound(k: usize, sigma: f64, alpha: f64, p: usize) -> f64 {
    4.0 * (1.0 + alpha) * k as f64 * sigma * sigma * (p as f64).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuaranteeReport {
    pub alpha: f64,
    pub sigma: f64,
    pub k: usize,
    pub stats: SignalStats,
    pub strong_coherence: StrongCoherenceReport,
    pub k_cap_coherence: CapBound,
    pub k_within_cap: bool,
    pub k_cap_combined: ThetaBound,
    pub k_cap_sost: ThetaBound,
    pub k_cap_worstcase: ThetaBound,
    /// Ratio-form condition for `t = 0..k`.
    pub per_t_lar_ok: Vec<bool>,
    pub per_t_lar_vacuous: Vec<bool>,
    pub mar_ok: bool,
    pub mar_vacuous: bool,
    /// Largest-entry detection condition for `t = 0..k`.
    pub decay_ok: Vec<bool>,
    pub success_prob_fixed: ProbabilityBound,
    pub success_prob_stopping: ProbabilityBound,
    pub reconstruction_bound: f64,
    /// `sigma sqrt((1 + alpha) ln p)`.
    pub stopping_threshold: f64,
}

/// Evaluates every guarantee for `signal` observed through a matrix with
/// `profile` under noise of standard deviation `sigma` per entry.
pub fn certify(
    profile: &CoherenceProfile,
    signal: &SparseSignal,
    sigma: f64,
    alpha: f64,
) -> Result<GuaranteeReport> {
    if signal.p() != profile.p {
        return Err(Error::DimensionMismatch {
            what: "signal length",
            expected: profile.p,
            found: signal.p(),
        });
    }
    let noise = NoiseModel::from_sigma(sigma)?;
    let stats = signal_stats(signal, &noise, profile.n)?;
    let params = ConditionParams {
        mu: profile.mu,
        n: profile.n,
        p: profile.p,
        sigma,
        alpha,
    };
    let k = signal.k();
    let lar: Vec<ConditionCheck> = (0..k)
        .map(|t| lar_condition(&stats, &params, t))
        .collect::<Result<_>>()?;
    let decay: Vec<bool> = (0..k)
        .map(|t| decay_condition(signal, &params, t).map(|c| c.holds))
        .collect::<Result<_>>()?;
    let mar = mar_condition(&stats, &params);
    let k_cap_coherence = sparsity_cap_coherence(profile)?;
    Ok(GuaranteeReport {
        alpha,
        sigma,
        k,
        k_within_cap: k as f64 <= k_cap_coherence.value,
        k_cap_coherence,
        k_cap_combined: sparsity_cap_combined(
            profile.n,
            stats.snr_min,
            profile.mu,
            profile.spectral_norm.powi(2),
            profile.p,
            alpha,
        ),
        k_cap_sost: sparsity_cap_sost(profile.n, stats.snr_min, profile.mu, stats.mar, profile.p),
        k_cap_worstcase: sparsity_cap_worstcase(profile.n, stats.snr_min, profile.mu, alpha, profile.p),
        per_t_lar_ok: lar.iter().map(|c| c.holds).collect(),
        per_t_lar_vacuous: lar.iter().map(|c| c.vacuous).collect(),
        mar_ok: mar.holds,
        mar_vacuous: mar.vacuous,
        decay_ok: decay,
        success_prob_fixed: success_probability(k, profile.p, alpha, OmpVariant::Fixed),
        success_prob_stopping: success_probability(k, profile.p, alpha, OmpVariant::Stopping),
        reconstruction_bound: reconstruction_bound(k, sigma, alpha, profile.p),
        stopping_threshold: sigma * ((1.0 + alpha) * (profile.p as f64).ln()).sqrt(),
        stats,
        strong_coherence: check_strong_coherence(profile),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherence::coherence_profile;
    use crate::ensembles::{alltop_gabor, generate_signal, AmplitudeProfile, PhaseRule, SignalProfile};
    use crate::model::C64;
    use proptest::prelude::*;

    fn signal(amps: &[f64]) -> SparseSignal {
        SparseSignal::new(
            amps.len() + 3,
            amps.iter().enumerate().map(|(i, &a)| (i, C64::new(a, 0.0))),
        )
        .unwrap()
    }

    fn params(mu: f64, n: usize, p: usize, sigma: f64, alpha: f64) -> ConditionParams {
        ConditionParams { mu, n, p, sigma, alpha }
    }

    #[test]
    fn stats_three_four() {
        let s = signal(&[3.0, 4.0]);
        let st = signal_stats(&s, &NoiseModel::new(0.5).unwrap(), 10).unwrap();
        assert_eq!(st.norm_sq, 25.0);
        assert!((st.snr - 5.0).abs() < 1e-15);
        assert!((st.mar - 0.72).abs() < 1e-15);
        assert!((st.snr_min - 3.6).abs() < 1e-14);
        assert!((st.snr_min - st.mar * st.snr).abs() < 1e-12 * st.snr_min);
        assert_eq!(st.lar.last(), Some(&st.mar));
    }

    #[test]
    fn stats_flat_and_single() {
        let st = signal_stats(&signal(&[2.0; 5]), &NoiseModel::new(1.0).unwrap(), 4).unwrap();
        assert!(st.lar.iter().all(|&l| (l - 1.0).abs() < 1e-15));
        assert!((st.mar - 1.0).abs() < 1e-15);
        let st = signal_stats(&signal(&[7.3]), &NoiseModel::noiseless(), 4).unwrap();
        assert_eq!((st.mar, st.lar[0]), (1.0, 1.0));
        assert!(st.snr.is_infinite() && st.snr_min.is_infinite());
    }

    #[test]
    fn coherence_caps() {
        let orth = CoherenceProfile { mu: 0.0, nu: 0.0, spectral_norm: 1.0, n: 64, p: 64 };
        let cap = sparsity_cap_coherence(&orth).unwrap();
        assert!((C2 * C2 - 21632.0).abs() < 1e-9);
        assert!((cap.value - 64.0 / (21632.0 * 64f64.ln())).abs() < 1e-15);

        let g = CoherenceProfile {
            mu: 1.0 / 31f64.sqrt(),
            nu: 0.0,
            spectral_norm: 31f64.sqrt(),
            n: 31,
            p: 961,
        };
        let cap = sparsity_cap_coherence(&g).unwrap();
        assert!((C1 * C1 - 5000.0).abs() < 1e-9);
        assert!((cap.terms[0] - 2.087e-4).abs() < 1e-6);
        assert!((cap.terms[1] - 9.027e-4).abs() < 1e-6);
        assert!((cap.value - 2.087e-4).abs() < 1e-6);
        assert!(cap.vacuous);

        let half = CoherenceProfile { mu: g.mu / 2.0, ..g };
        let cap_half = sparsity_cap_coherence(&half).unwrap();
        assert!((cap_half.terms[1] / cap.terms[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn amplitude_threshold_orthonormal() {
        let pr = params(0.0, 128, 128, 0.1, 1.0);
        let s = signal(&[0.7, 0.6]);
        let c = amplitude_condition(&s, &pr, 1).unwrap();
        assert!((c.rhs - 0.623_02).abs() < 1e-5);
        assert!(!c.holds);
        assert!(amplitude_condition(&s, &pr, 0).unwrap().holds);
        assert!(amplitude_condition(&s, &pr, 2).is_err());
    }

    #[test]
    fn noiseless_conditions_hold_when_denominator_positive() {
        let s = signal(&[1e-6, 3.0, 2.0]);
        let pr = params(1e-5, 100, 1000, 0.0, 1.0);
        let st = signal_stats(&s, &NoiseModel::noiseless(), 100).unwrap();
        for t in 0..3 {
            assert!(amplitude_condition(&s, &pr, t).unwrap().holds);
            assert!(lar_condition(&st, &pr, t).unwrap().holds);
        }
    }

    #[test]
    fn mar_vacuous_case() {
        let d = 1.0 - C1 * 0.18 * (5.0 * 961f64.ln()).sqrt();
        assert!((1.0 - d - 74.6).abs() < 0.1);
        let st = signal_stats(&signal(&[1.0; 5]), &NoiseModel::new(1e-4).unwrap(), 31).unwrap();
        let c = mar_condition(&st, &params(0.18, 31, 961, 0.01, 1.0));
        assert!(c.vacuous && !c.holds);
    }

    #[test]
    fn flat_mar_condition_reduces() {
        // MAR = 1, mu = 0: holds iff 4(1+alpha) k ln p / (n SNR) < 1.
        let s = signal(&[1.0; 4]);
        for variance in [1e-3, 1e-2, 0.05, 0.2] {
            let st = signal_stats(&s, &NoiseModel::new(variance).unwrap(), 50).unwrap();
            let c = mar_condition(&st, &params(0.0, 50, 200, variance.sqrt(), 1.0));
            let reduced = 4.0 * 2.0 * 4.0 * 200f64.ln() / (50.0 * st.snr);
            assert_eq!(c.holds, reduced < 1.0);
        }
    }

    #[test]
    fn decay_conditions() {
        let pr = params(0.0, 10, 100, 0.0, 1.0);
        let strict = signal(&[5.0, 3.0, 1.0]);
        assert!((0..3).all(|t| decay_condition(&strict, &pr, t).unwrap().holds));
        let flat = signal(&[1.0, 1.0, 1.0]);
        assert!(!decay_condition(&flat, &pr, 0).unwrap().holds);
        // The last rank compares against zero.
        assert!(decay_condition(&flat, &pr, 2).unwrap().holds);
        let geo = SignalProfile::geometric(1.0, 0.25, PhaseRule::Unit);
        let s = generate_signal(40, 4, &geo, 1).unwrap();
        assert!((0..4).all(|t| decay_condition(&s, &pr, t).unwrap().holds));
    }

    #[test]
    fn combined_cap_regression() {
        let b = sparsity_cap_combined(1_000_000, 10.0, 8e-4, 100.0, 100_000_000, 1.0);
        // Matches an independent grid evaluation; the spectral term binds.
        assert_eq!(b.theta, 0.385);
        assert!((b.value - COMBINED_PINNED).abs() <= 1e-12 * COMBINED_PINNED, "{:.17e}", b.value);
        assert_eq!(b.value, b.terms[2]);
    }

    pub(crate) const COMBINED_PINNED: f64 = 2.509_560_384_518_604_5;

    #[test]
    fn combined_constant_term_dominance() {
        // Third term tiny: bound equals it and the first grid point wins.
        let b = sparsity_cap_combined(1_000, 1e6, 1e-6, 1e6, 200, 1.0);
        assert_eq!(b.theta, 0.001);
        assert_eq!(b.value, b.terms[2]);
        // mu -> 0: only terms one and three remain in play.
        let b = sparsity_cap_combined(100, 50.0, 0.0, 1.0, 200, 1.0);
        assert!(b.terms[1].is_infinite());
    }

    #[test]
    fn sost_terms() {
        let b = sparsity_cap_sost(100, 1e9, 1e-9, 1.0, 128);
        assert!((b.terms[2] - 10.305).abs() < 1e-3);
        let a = sparsity_cap_sost(100, 10.0, 0.05, 1.0, 128);
        let c = sparsity_cap_sost(100, 10.0, 0.05, 0.01, 128);
        let ln_p = 128f64.ln();
        let mid = |mar: f64| 0.25 / (800.0 * 0.0025 * ln_p * mar);
        assert!((mid(0.01) / mid(1.0) - 100.0).abs() < 1e-9);
        for b in [a, c] {
            assert!(b.terms.iter().all(|&t| t >= b.value));
        }
    }

    #[test]
    fn worstcase_terms() {
        let b = maximize_over_theta(|theta| [f64::INFINITY, 0.5 + theta / (2.0 * 0.1)]);
        assert!((b.value - (0.5 + 0.999 / 0.2)).abs() < 1e-12);
        // O(1/mu) against O(1/mu^2) at theta = 0.5. With c1^2 = 5000 the
        // quadratic term is still the smaller one at mu = 1e-3 and only
        // overtakes below mu ~ 3e-5.
        let ln_p = 1000f64.ln();
        let worst = |mu: f64| 0.5 + 0.5 / (2.0 * mu);
        let quadratic = |mu: f64| 0.25 / (C1 * C1 * mu * mu * ln_p);
        let mu = 1e-3;
        assert!((quadratic(mu / 2.0) / quadratic(mu) - 4.0).abs() < 1e-12);
        assert!(((worst(mu / 2.0) - 0.5) / (worst(mu) - 0.5) - 2.0).abs() < 1e-12);
        assert!(quadratic(mu) < worst(mu));
        assert!(quadratic(1e-5) > worst(1e-5));
        let b = sparsity_cap_worstcase(100, f64::INFINITY, 0.1, 1.0, 128);
        assert!((b.value - b.terms[1]).abs() < 1e-15);
    }

    #[test]
    fn success_probability_values() {
        let f = success_probability(5, 128, 1.0, OmpVariant::Fixed);
        assert!((f.value - 0.953_92).abs() < 1e-4, "{}", f.value);
        assert!(f.applicable && !f.vacuous);
        let s = success_probability(5, 128, 1.0, OmpVariant::Stopping);
        assert!((s.value - f.value + 1.0 / (128.0 * PI)).abs() < 1e-15);
        let z = success_probability(0, 128, 1.0, OmpVariant::Fixed);
        let want = 1.0 - 2.0 * 128f64.powf(-2.0 * LN_2) - 4.0 / 128.0;
        assert!((z.value - want).abs() < 1e-15);
        assert!(!success_probability(1, 64, 1.0, OmpVariant::Fixed).applicable);
        assert!(success_probability(1, 4, 1.0, OmpVariant::Fixed).vacuous);
    }

    #[test]
    fn reconstruction_values() {
        assert!((reconstruction_bound(2, 0.1, 1.0, 128) - 0.776_32).abs() < 1e-5);
        assert_eq!(reconstruction_bound(2, 0.0, 1.0, 128), 0.0);
        let a = reconstruction_bound(3, 0.2, 2.0, 300);
        assert!((reconstruction_bound(6, 0.2, 2.0, 300) - 2.0 * a).abs() < 1e-14);
    }

    #[test]
    fn certify_gabor() {
        let prof = coherence_profile(&alltop_gabor(31).unwrap()).unwrap();
        let s = generate_signal(961, 2, &SignalProfile::flat(1.0, PhaseRule::Unit), 0).unwrap();
        let r = certify(&prof, &s, 0.01, 1.0).unwrap();
        assert!(!r.strong_coherence.satisfied);
        assert!(r.k_cap_coherence.vacuous && !r.k_within_cap);
        assert!((r.reconstruction_bound - 1.0989e-2).abs() < 1e-5);
        assert!(r.per_t_lar_vacuous.iter().all(|&v| v));
        assert_eq!(r.per_t_lar_ok.len(), 2);
        assert!(certify(&prof, &signal(&[1.0]), 0.01, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn mar_implies_lar(
            k in 1usize..6,
            ratio in 0.2f64..1.0,
            variance in 1e-5f64..1e-1,
            mu in 0.0f64..2e-3,
            seed in any::<u64>(),
        ) {
            let prof = SignalProfile { amplitudes: AmplitudeProfile::GeometricDecay { min: 0.5, ratio }, phase: PhaseRule::RandomUniform };
            let s = generate_signal(500, k, &prof, seed).unwrap();
            let st = signal_stats(&s, &NoiseModel::new(variance).unwrap(), 200).unwrap();
            let pr = params(mu, 200, 500, variance.sqrt(), 1.0);
            let mar = mar_condition(&st, &pr);
            for t in 0..k {
                let lar = lar_condition(&st, &pr, t).unwrap();
                if mar.holds {
                    prop_assert!(lar.holds);
                }
                // Ratio and amplitude forms agree away from the boundary.
                let amp = amplitude_condition(&s, &pr, t).unwrap();
                if (lar.lhs / lar.rhs - 1.0).abs() > 1e-9 {
                    prop_assert_eq!(lar.holds, amp.holds);
                }
            }
            prop_assert!((st.snr_min - st.mar * st.snr).abs() <= 1e-12 * st.snr_min);
            for w in st.lar.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
        }

        #[test]
        fn combined_below_coherence_term(
            n in 10usize..10_000,
            snr_min in 0.1f64..1e4,
            mu in 1e-5f64..0.5,
            p in 128usize..100_000,
        ) {
            let b = sparsity_cap_combined(n, snr_min, mu, p as f64 / n as f64, p, 1.0);
            let coherence_term = 1.0 / (C1 * C1 * mu * mu * (p as f64).ln());
            prop_assert!(b.value <= coherence_term);
            prop_assert!(b.terms.iter().all(|&t| t >= b.value));
        }

        #[test]
        fn success_probability_monotone(k in 0usize..50, p in 128usize..5000, alpha in 1.0f64..3.0) {
            for v in [OmpVariant::Fixed, OmpVariant::Stopping] {
                let a = success_probability(k, p, alpha, v).value;
                prop_assert!(success_probability(k + 1, p, alpha, v).value < a);
                prop_assert!(success_probability(k, p + 1, alpha, v).value > a);
                prop_assert!(a <= 1.0);
            }
        }
    }
}
