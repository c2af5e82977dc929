//! Shared domain types: sensing matrices, sparse signals, noise and
//! measurement instances.
//!
//! Real-valued problems are represented as complex with zero imaginary part.

use std::collections::BTreeSet;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::{Error, Result};

pub type C64 = nalgebra::Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Column norms must equal 1 within this tolerance.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// An `n x p` complex matrix with unit-norm columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix {
    data: CMatrix,
    label: String,
}

impl SensingMatrix {
    /// Wraps `data`, checking that every column has unit norm.
    pub fn new(data: CMatrix, label: impl Into<String>) -> Result<Self> {
        Self::with_tolerance(data, label, UNIT_NORM_TOL)
    }

    pub(crate) fn with_tolerance(
        data: CMatrix,
        label: impl Into<String>,
        tol: f64,
    ) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::invalid("matrix must have at least one row"));
        }
        if data.ncols() == 0 {
            return Err(Error::invalid("matrix must have at least one column"));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("matrix has non-finite entries"));
        }
        for (j, col) in data.column_iter().enumerate() {
            let norm = col.norm();
            if (norm - 1.0).abs() > tol {
                return Err(Error::ColumnNorm {
                    column: j + 1,
                    norm,
                });
            }
        }
        Ok(Self {
            data,
            label: label.into(),
        })
    }

    /// Scales every column of `data` to unit norm. Zero columns are rejected.
    pub fn normalized(mut data: CMatrix, label: impl Into<String>) -> Result<Self> {
        for (j, mut col) in data.column_iter_mut().enumerate() {
            let norm = col.norm();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::ColumnNorm {
                    column: j + 1,
                    norm,
                });
            }
            col.unscale_mut(norm);
        }
        Self::new(data, label)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn p(&self) -> usize {
        self.data.ncols()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_inner(self) -> CMatrix {
        self.data
    }

    /// `X^H v`.
    pub fn correlate(&self, v: &CVector) -> CVector {
        self.data.ad_mul(v)
    }

    /// `X beta` for a sparse `beta`, touching only the support columns.
    pub fn apply_sparse(&self, signal: &SparseSignal) -> CVector {
        let mut out = CVector::zeros(self.n());
        for (&j, &v) in signal.support().iter().zip(signal.values()) {
            out.axpy(v, &self.data.column(j), C64::new(1.0, 0.0));
        }
        out
    }

    /// Columns indexed by `indices`, in the given order.
    pub fn columns(&self, indices: &[usize]) -> CMatrix {
        self.data.select_columns(indices)
    }

    /// Copy with column `j` multiplied by `sign[j]`.
    pub fn with_column_signs(&self, signs: &[i8], label: impl Into<String>) -> Self {
        let mut data = self.data.clone();
        for (j, &s) in signs.iter().enumerate() {
            if s < 0 {
                data.column_mut(j).neg_mut();
            }
        }
        Self {
            data,
            label: label.into(),
        }
    }
}

/// A `k`-sparse vector of length `p` stored as (support, values).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseSignal {
    p: usize,
    support: Vec<usize>,
    values: Vec<C64>,
}

impl SparseSignal {
    /// `entries` may come in any order; they are sorted by index.
    pub fn new(p: usize, entries: impl IntoIterator<Item = (usize, C64)>) -> Result<Self> {
        let mut entries: Vec<(usize, C64)> = entries.into_iter().collect();
        entries.sort_by_key(|&(i, _)| i);
        if entries.is_empty() {
            return Err(Error::invalid("sparse signal needs at least one nonzero entry"));
        }
        if entries.len() > p {
            return Err(Error::invalid(format!(
                "sparsity {} exceeds dimension {p}",
                entries.len()
            )));
        }
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::invalid(format!("duplicate index {}", w[0].0 + 1)));
            }
        }
        for &(i, v) in &entries {
            if i >= p {
                return Err(Error::invalid(format!("index {} out of range 1..={p}", i + 1)));
            }
            if v.norm() == 0.0 || !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::invalid(format!(
                    "coefficient at index {} must be finite and nonzero",
                    i + 1
                )));
            }
        }
        let (support, values) = entries.into_iter().unzip();
        Ok(Self { p, support, values })
    }

    /// Keeps the exactly-nonzero entries of `dense`.
    pub fn from_dense(dense: &CVector) -> Result<Self> {
        Self::new(
            dense.len(),
            dense
                .iter()
                .enumerate()
                .filter(|(_, v)| v.norm() != 0.0)
                .map(|(i, &v)| (i, v)),
        )
    }

    pub fn to_dense(&self) -> CVector {
        let mut out = CVector::zeros(self.p);
        for (&i, &v) in self.support.iter().zip(&self.values) {
            out[i] = v;
        }
        out
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.support.len()
    }

    /// Strictly increasing, 0-based.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    /// `|beta|_(1) >= |beta|_(2) >= ... >= |beta|_(k)`.
    pub fn sorted_magnitudes(&self) -> Vec<f64> {
        let mut m: Vec<f64> = self.values.iter().map(|v| v.norm()).collect();
        m.sort_by(|a, b| b.total_cmp(a));
        m
    }

    pub fn min_magnitude(&self) -> f64 {
        self.values
            .iter()
            .map(|v| v.norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Support indices ordered by decreasing magnitude, ties by smaller index.
    pub fn indices_by_magnitude(&self) -> Vec<usize> {
        let mut order: Vec<(usize, f64)> = self
            .support
            .iter()
            .zip(&self.values)
            .map(|(&i, v)| (i, v.norm()))
            .collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        order.into_iter().map(|(i, _)| i).collect()
    }
}

/// Circular complex Gaussian noise `CN(0, variance I)`: each of the real and
/// imaginary parts has variance `variance / 2`, so `E|eta_i|^2 = variance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    variance: f64,
}

impl NoiseModel {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance >= 0.0) || !variance.is_finite() {
            return Err(Error::invalid(format!(
                "noise variance must be finite and >= 0, got {variance}"
            )));
        }
        Ok(Self { variance })
    }

    pub fn noiseless() -> Self {
        Self { variance: 0.0 }
    }

    pub fn from_sigma(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
        }
        Self::new(sigma * sigma)
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn sigma(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> CVector {
        if self.variance == 0.0 {
            return CVector::zeros(n);
        }
        let s = (self.variance / 2.0).sqrt();
        CVector::from_fn(n, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(s * re, s * im)
        })
    }
}

/// `y = X beta + eta` together with its ingredients.
#[derive(Debug, Clone)]
pub struct MeasurementInstance {
    pub matrix: Arc<SensingMatrix>,
    pub signal: SparseSignal,
    pub noise: CVector,
    pub observation: CVector,
    pub seed: u64,
}

impl MeasurementInstance {
    /// `X beta` without noise.
    pub fn clean_observation(&self) -> CVector {
        self.matrix.apply_sparse(&self.signal)
    }
}

/// Draws noise from `seed` and forms `y = X beta + eta`.
pub fn synthesize_measurement(
    matrix: Arc<SensingMatrix>,
    signal: SparseSignal,
    noise: NoiseModel,
    seed: u64,
) -> Result<MeasurementInstance> {
    if signal.p() != matrix.p() {
        return Err(Error::DimensionMismatch {
            what: "signal length",
            expected: matrix.p(),
            found: signal.p(),
        });
    }
    let eta = noise.sample(matrix.n(), &mut rng::seeded(seed));
    let observation = matrix.apply_sparse(&signal) + &eta;
    Ok(MeasurementInstance {
        matrix,
        signal,
        noise: eta,
        observation,
        seed,
    })
}

/// Selected indices in selection order, with a set view for membership.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SupportSet {
    order: Vec<usize>,
    set: BTreeSet<usize>,
}

impl SupportSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_order(order: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut s = Self::new();
        for i in order {
            s.push(i)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, index: usize) -> Result<()> {
        if !self.set.insert(index) {
            return Err(Error::invalid(format!("index {} selected twice", index + 1)));
        }
        self.order.push(index);
        Ok(())
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn set(&self) -> &BTreeSet<usize> {
        &self.set
    }

    pub fn contains(&self, index: usize) -> bool {
        self.set.contains(&index)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Set equality with `other`, ignoring order.
    pub fn same_set(&self, other: &[usize]) -> bool {
        other.len() == self.set.len() && other.iter().all(|i| self.set.contains(i))
    }

    /// 1-based indices in selection order.
    pub fn one_based(&self) -> Vec<usize> {
        self.order.iter().map(|i| i + 1).collect()
    }
}
