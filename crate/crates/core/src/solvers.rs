//! Greedy sparse recovery: OMP with a fixed iteration count, OMP with a
//! correlation stopping rule, sorted one-step thresholding (SOST) and
//! least-squares debiasing on a recovered support.

use serde::{Deserialize, Serialize};

use crate::linalg::{sup_norm, OrthoBasis, MAX_GRAM_CONDITION};
use crate::model::{CVector, SensingMatrix, SupportSet};
use crate::{Error, Result};

/// A correlation peak at or below `ZERO_CORRELATION_RTOL * ||y||_2` is
/// treated as an exactly zero residual by the stopping rule.
pub const ZERO_CORRELATION_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    ReachedK,
    Threshold,
    MaxIterations,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::ReachedK => "reached-k",
            Termination::Threshold => "threshold",
            Termination::MaxIterations => "max-iterations",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RecoveryResult {
    /// Selection order.
    pub support: SupportSet,
    pub iterations: usize,
    /// `||r_t||_2` for `t = 0..=iterations`.
    pub residual_norms: Vec<f64>,
    /// `||X^H r_{t-1}||_inf` for `t = 1..=iterations`.
    pub correlation_peaks: Vec<f64>,
    /// Final residual `r_T`.
    pub residual: CVector,
    pub debiased: Option<CVector>,
    pub termination: Termination,
}

impl RecoveryResult {
    /// Fills [`RecoveryResult::debiased`] by least squares on the support.
    pub fn debias(&mut self, matrix: &SensingMatrix, y: &CVector) -> Result<()> {
        self.debiased = Some(if self.support.is_empty() {
            CVector::zeros(matrix.p())
        } else {
            least_squares_debias(matrix, self.support.order(), y)?
        });
        Ok(())
    }
}

/// Index of the largest `|f_j|` over unselected `j`, smallest index on ties.
fn select(f: &CVector, support: &SupportSet) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, z) in f.iter().enumerate() {
        if support.contains(j) {
            continue;
        }
        let m = z.norm();
        if best.is_none_or(|(_, b)| m > b) {
            best = Some((j, m));
        }
    }
    best.map(|(j, _)| j)
}

fn check_observation(matrix: &SensingMatrix, y: &CVector) -> Result<()> {
    if y.len() != matrix.n() {
        return Err(Error::DimensionMismatch {
            what: "observation length",
            expected: matrix.n(),
            found: y.len(),
        });
    }
    Ok(())
}

fn run_omp(
    matrix: &SensingMatrix,
    y: &CVector,
    max_iterations: usize,
    threshold: Option<f64>,
) -> Result<RecoveryResult> {
    let y_norm = y.norm();
    let mut support = SupportSet::new();
    let mut basis = OrthoBasis::new();
    let mut residual = y.clone();
    let mut residual_norms = vec![y_norm];
    let mut correlation_peaks = Vec::new();

    let termination = loop {
        let f = matrix.correlate(&residual);
        let peak = sup_norm(&f);
        if let Some(delta) = threshold {
            if !(peak > delta && peak > ZERO_CORRELATION_RTOL * y_norm) {
                break Termination::Threshold;
            }
        }
        if support.len() == max_iterations {
            break match threshold {
                None => Termination::ReachedK,
                Some(_) => Termination::MaxIterations,
            };
        }
        let iteration = support.len() + 1;
        let j = select(&f, &support).expect("max_iterations <= p");
        let column = matrix.as_matrix().column(j).into_owned();
        basis
            .push(&column)
            .map_err(|condition| Error::SingularSelection {
                iteration,
                condition,
            })?;
        support.push(j)?;
        correlation_peaks.push(peak);
        // r_t = (I - P_t) y, recomputed from y with the current basis.
        residual = basis.project_out(y);
        residual_norms.push(residual.norm());
    };

    Ok(RecoveryResult {
        iterations: support.len(),
        support,
        residual_norms,
        correlation_peaks,
        residual,
        debiased: None,
        termination,
    })
}

/// OMP run for exactly `k` iterations.
pub fn omp_fixed(matrix: &SensingMatrix, y: &CVector, k: usize) -> Result<RecoveryResult> {
    check_observation(matrix, y)?;
    let cap = matrix.n().min(matrix.p());
    if k == 0 || k > cap {
        return Err(Error::invalid(format!(
            "k must satisfy 1 <= k <= min(n, p) = {cap}, got {k}"
        )));
    }
    run_omp(matrix, y, k, None)
}

/// OMP that keeps iterating while `||X^H r_{t-1}||_inf > delta`, capped at
/// `max_iterations` (default `min(n, p)`).
pub fn omp_stopping(
    matrix: &SensingMatrix,
    y: &CVector,
    delta: f64,
    max_iterations: Option<usize>,
) -> Result<RecoveryResult> {
    check_observation(matrix, y)?;
    if !(delta >= 0.0) {
        return Err(Error::invalid(format!("stopping threshold must be >= 0, got {delta}")));
    }
    let cap = matrix.n().min(matrix.p());
    let max_iterations = max_iterations.unwrap_or(cap);
    if max_iterations > cap {
        return Err(Error::invalid(format!(
            "max_iterations must be <= min(n, p) = {cap}, got {max_iterations}"
        )));
    }
    run_omp(matrix, y, max_iterations, Some(delta))
}

/// `sigma * sqrt((1 + alpha) ln p)`.
pub fn stopping_threshold(sigma: f64, p: usize, alpha: f64) -> Result<f64> {
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
    }
    if p < 2 {
        return Err(Error::invalid(format!("p must be >= 2, got {p}")));
    }
    if !(alpha >= 1.0) {
        return Err(Error::invalid(format!("alpha must be >= 1, got {alpha}")));
    }
    Ok(sigma * ((1.0 + alpha) * (p as f64).ln()).sqrt())
}

/// The `k` largest `|(X^H y)_j|`, ordered by magnitude, ties to the smaller
/// index.
pub fn sost(matrix: &SensingMatrix, y: &CVector, k: usize) -> Result<SupportSet> {
    check_observation(matrix, y)?;
    if k == 0 || k > matrix.p() {
        return Err(Error::invalid(format!(
            "k must satisfy 1 <= k <= p = {}, got {k}",
            matrix.p()
        )));
    }
    let f = matrix.correlate(y);
    let mut order: Vec<(usize, f64)> = f.iter().map(|z| z.norm()).enumerate().collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    SupportSet::from_order(order.into_iter().take(k).map(|(j, _)| j))
}

/// Least-squares coefficients on `support`, zero elsewhere.
pub fn least_squares_debias(
    matrix: &SensingMatrix,
    support: &[usize],
    y: &CVector,
) -> Result<CVector> {
    check_observation(matrix, y)?;
    if support.is_empty() || support.len() > matrix.n() {
        return Err(Error::invalid(format!(
            "support size must lie in 1..={}, got {}",
            matrix.n(),
            support.len()
        )));
    }
    if let Some(&j) = support.iter().find(|&&j| j >= matrix.p()) {
        return Err(Error::invalid(format!("support index {} out of range", j + 1)));
    }
    let xs = matrix.columns(support);
    let sv = xs.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let condition = if smin > 0.0 {
        (smax / smin).powi(2)
    } else {
        f64::INFINITY
    };
    if !(condition <= MAX_GRAM_CONDITION) {
        return Err(Error::RankDeficient { condition });
    }
    let qr = xs.qr();
    let qty = qr.q().ad_mul(y);
    let z = qr
        .r()
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficient { condition })?;
    let mut beta = CVector::zeros(matrix.p());
    for (&j, &v) in support.iter().zip(z.iter()) {
        beta[j] = v;
    }
    Ok(beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{alltop_gabor, gaussian_matrix, generate_signal, PhaseRule, SignalProfile};
    use crate::model::{synthesize_measurement, CMatrix, NoiseModel, C64};
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn real(n: usize, p: usize, vals: &[f64]) -> SensingMatrix {
        SensingMatrix::new(DMatrix::from_column_slice(n, p, vals).map(c), "t").unwrap()
    }

    fn identity(n: usize) -> SensingMatrix {
        SensingMatrix::new(CMatrix::identity(n, n), "I").unwrap()
    }

    fn vec_of(v: &[f64]) -> CVector {
        CVector::from_iterator(v.len(), v.iter().map(|&x| c(x)))
    }

    fn instance(x: &SensingMatrix, k: usize, sigma2: f64, seed: u64) -> (CVector, Vec<usize>) {
        let prof = SignalProfile::flat(1.0, PhaseRule::RandomUniform);
        let s = generate_signal(x.p(), k, &prof, seed).unwrap();
        let support = s.support().to_vec();
        let inst = synthesize_measurement(
            Arc::new(x.clone()),
            s,
            NoiseModel::new(sigma2).unwrap(),
            seed.wrapping_add(1),
        )
        .unwrap();
        (inst.observation, support)
    }

    #[test]
    fn identity_picks_largest_coordinate() {
        let r = omp_fixed(&identity(2), &vec_of(&[0.2, 0.9]), 1).unwrap();
        assert_eq!(r.support.order(), &[1]);
        assert!((r.residual - vec_of(&[0.2, 0.0])).norm() < 1e-15);
        assert_eq!(r.termination, Termination::ReachedK);
    }

    #[test]
    fn exact_atom_gives_zero_residual() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let x = real(2, 2, &[1.0, 0.0, h, h]);
        let r = omp_fixed(&x, &vec_of(&[h, h]), 1).unwrap();
        assert_eq!(r.support.order(), &[1]);
        assert!(r.residual_norms[1] < 1e-15);
    }

    #[test]
    fn fixed_rejects_bad_k() {
        let x = identity(3);
        let y = vec_of(&[1.0, 0.0, 0.0]);
        assert!(omp_fixed(&x, &y, 0).is_err());
        assert!(omp_fixed(&x, &y, 4).is_err());
        assert!(omp_fixed(&x, &vec_of(&[1.0]), 1).is_err());
    }

    #[test]
    fn stopping_terminates_after_exact_recovery() {
        // mu = 1/sqrt(11) < 1/(2k - 1) for k = 2.
        let x = alltop_gabor(11).unwrap();
        for seed in 0..20 {
            let (y, support) = instance(&x, 2, 0.0, seed);
            for delta in [0.0, 1e-6, 0.1] {
                let r = omp_stopping(&x, &y, delta, None).unwrap();
                assert_eq!(r.iterations, 2, "seed {seed} delta {delta}");
                assert!(r.support.same_set(&support));
                assert_eq!(r.termination, Termination::Threshold);
            }
        }
    }

    #[test]
    fn large_threshold_means_no_iterations() {
        let x = gaussian_matrix(6, 12, 2).unwrap();
        let (y, _) = instance(&x, 2, 0.01, 9);
        let peak = sup_norm(&x.correlate(&y));
        let r = omp_stopping(&x, &y, peak, None).unwrap();
        assert_eq!(r.iterations, 0);
        assert!(r.support.is_empty());
        assert_eq!(r.termination, Termination::Threshold);
    }

    #[test]
    fn zero_threshold_on_noise_hits_cap() {
        let x = gaussian_matrix(8, 16, 3).unwrap();
        let (y, _) = instance(&x, 2, 0.01, 4);
        // After n steps the residual vanishes, so the threshold fires at
        // the cap.
        let r = omp_stopping(&x, &y, 0.0, None).unwrap();
        assert_eq!(r.iterations, 8);
        assert_eq!(r.termination, Termination::Threshold);
        let r = omp_stopping(&x, &y, 0.0, Some(7)).unwrap();
        assert_eq!(r.iterations, 7);
        assert_eq!(r.termination, Termination::MaxIterations);
        let r = omp_stopping(&x, &y, 0.0, Some(5)).unwrap();
        assert_eq!(r.iterations, 5);
        assert_eq!(r.termination, Termination::MaxIterations);
        assert!(omp_stopping(&x, &y, 0.0, Some(9)).is_err());
        assert!(omp_stopping(&x, &y, -1.0, None).is_err());
    }

    #[test]
    fn threshold_formula() {
        assert!((stopping_threshold(0.1, 128, 1.0).unwrap() - 0.311_51).abs() < 1e-5);
        assert_eq!(stopping_threshold(0.0, 128, 1.0).unwrap(), 0.0);
        assert!(stopping_threshold(0.1, 128, 0.5).is_err());
    }

    #[test]
    fn sost_orders_by_magnitude() {
        // X = I so that X^H y = y.
        let x = identity(3);
        let s = sost(&x, &vec_of(&[0.9, 0.1, 0.5]), 2).unwrap();
        assert_eq!(s.order(), &[0, 2]);
        let s = sost(&x, &vec_of(&[0.4, 0.4, 0.1]), 1).unwrap();
        assert_eq!(s.order(), &[0]);
        assert!(sost(&x, &vec_of(&[1.0, 0.0, 0.0]), 4).is_err());
    }

    #[test]
    fn sost_on_orthonormal_recovers_support() {
        let x = identity(12);
        for seed in 0..10 {
            let (y, support) = instance(&x, 4, 0.0, seed);
            assert!(sost(&x, &y, 4).unwrap().same_set(&support));
        }
    }

    #[test]
    fn debias_noiseless_recovers_signal() {
        let x = gaussian_matrix(20, 40, 8).unwrap();
        let prof = SignalProfile::geometric(0.5, 0.7, PhaseRule::RandomUniform);
        let s = generate_signal(40, 5, &prof, 1).unwrap();
        let y = x.apply_sparse(&s);
        let est = least_squares_debias(&x, s.support(), &y).unwrap();
        let truth = s.to_dense();
        assert!((&est - &truth).norm() <= 1e-10 * truth.norm());
        for j in 0..40 {
            if !s.support().contains(&j) {
                assert_eq!(est[j], C64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn debias_single_column_is_inner_product() {
        let x = gaussian_matrix(6, 10, 5).unwrap();
        let (y, _) = instance(&x, 2, 0.1, 6);
        let est = least_squares_debias(&x, &[4], &y).unwrap();
        let ip = x.as_matrix().column(4).dotc(&y);
        assert!((est[4] - ip).norm() < 1e-13);
    }

    #[test]
    fn debias_error_matches_explicit_gram_solve() {
        // Oracle: (X_S^H X_S)^{-1} X_S^H eta via an explicit inverse.
        let x = gaussian_matrix(30, 60, 12).unwrap();
        let prof = SignalProfile::flat(1.0, PhaseRule::RandomSign);
        let s = generate_signal(60, 3, &prof, 2).unwrap();
        let inst = synthesize_measurement(Arc::new(x.clone()), s.clone(), NoiseModel::new(0.01).unwrap(), 3)
            .unwrap();
        let est = least_squares_debias(&x, s.support(), &inst.observation).unwrap();
        let err = (&est - s.to_dense()).norm_squared();
        let xs = x.columns(s.support());
        let g_inv = xs.ad_mul(&xs).try_inverse().unwrap();
        let oracle = (g_inv * xs.ad_mul(&inst.noise)).norm_squared();
        assert!((err - oracle).abs() <= 1e-10 * oracle.max(1e-300), "{err} {oracle}");
    }

    #[test]
    fn debias_rejects_rank_deficiency() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let x = real(2, 3, &[1.0, 0.0, 1.0, 0.0, h, h]);
        let y = vec_of(&[1.0, 1.0]);
        assert!(matches!(
            least_squares_debias(&x, &[0, 1], &y),
            Err(Error::RankDeficient { .. })
        ));
        assert!(least_squares_debias(&x, &[], &y).is_err());
    }

    #[test]
    fn duplicate_columns_fail_with_iteration_number() {
        // Columns 1 and 2 coincide. After column 1 the residual is zero and
        // the smallest unselected index, the duplicate, comes next.
        let x = real(2, 3, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        match omp_fixed(&x, &vec_of(&[1.0, 0.0]), 2) {
            Err(Error::SingularSelection { iteration, .. }) => assert_eq!(iteration, 2),
            other => panic!("{other:?}"),
        }
    }

    fn check_invariants(x: &SensingMatrix, y: &CVector, r: &RecoveryResult) -> Result<(), TestCaseError> {
        prop_assert_eq!(r.support.len(), r.iterations);
        prop_assert_eq!(r.residual_norms.len(), r.iterations + 1);
        for w in r.residual_norms.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * y.norm());
        }
        let xs = x.columns(r.support.order());
        if r.iterations > 0 {
            let orth = sup_norm(&xs.ad_mul(&r.residual));
            prop_assert!(orth <= 1e-8 * y.norm(), "orthogonality {}", orth);
        }
        Ok(())
    }

    fn permuted(x: &SensingMatrix, perm: &[usize]) -> SensingMatrix {
        SensingMatrix::new(x.columns(perm), "perm").unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn result_invariants(n in 3usize..12, extra in 0usize..12, k in 1usize..4, seed in any::<u64>()) {
            let x = gaussian_matrix(n, n + extra + 1, seed).unwrap();
            let (y, _) = instance(&x, k.min(n), 0.05, seed ^ 1);
            let r = omp_fixed(&x, &y, k.min(n)).unwrap();
            check_invariants(&x, &y, &r)?;
            let s = omp_stopping(&x, &y, 0.05, None).unwrap();
            check_invariants(&x, &y, &s)?;
        }

        #[test]
        fn fixed_and_stopping_share_selection_prefix(n in 4usize..12, extra in 1usize..12, seed in any::<u64>(), delta in 0.0f64..0.5) {
            let x = gaussian_matrix(n, n + extra, seed).unwrap();
            let (y, _) = instance(&x, 2, 0.02, seed ^ 7);
            let fixed = omp_fixed(&x, &y, n.min(x.p())).unwrap();
            let stop = omp_stopping(&x, &y, delta, None).unwrap();
            let m = stop.iterations.min(fixed.iterations);
            prop_assert_eq!(&fixed.support.order()[..m], &stop.support.order()[..m]);
        }

        #[test]
        fn permutation_equivariance(n in 4usize..10, extra in 1usize..10, seed in any::<u64>()) {
            let x = gaussian_matrix(n, n + extra, seed).unwrap();
            let p = x.p();
            let (y, _) = instance(&x, 2, 0.01, seed ^ 3);
            let mut rng = crate::rng::seeded(seed ^ 5);
            let perm = crate::rng::random_prefix(&mut rng, p, p);
            let xp = permuted(&x, &perm);
            let a = omp_fixed(&x, &y, 3.min(n)).unwrap();
            let b = omp_fixed(&xp, &y, 3.min(n)).unwrap();
            // Column perm[j] of X is column j of Xp.
            let mapped: Vec<usize> = b.support.order().iter().map(|&j| perm[j]).collect();
            prop_assert_eq!(a.support.order(), &mapped[..]);
        }
    }
}
