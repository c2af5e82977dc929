//! Small dense helpers shared by the solvers and diagnostics.

use crate::model::{CVector, SensingMatrix};

/// Gram condition estimates above this count as numerically singular.
pub(crate) const MAX_GRAM_CONDITION: f64 = 1e12;

/// Incrementally built orthonormal basis for the span of selected columns.
///
/// Each new column is orthogonalised twice (classical Gram-Schmidt with
/// reorthogonalisation), which keeps the basis orthonormal to working
/// precision.
#[derive(Debug, Clone, Default)]
pub(crate) struct OrthoBasis {
    q: Vec<CVector>,
    min_diag: f64,
}

impl OrthoBasis {
    pub(crate) fn new() -> Self {
        Self {
            q: Vec::new(),
            min_diag: f64::INFINITY,
        }
    }

    /// Removes the components of `v` along the basis, two passes.
    pub(crate) fn project_out(&self, v: &CVector) -> CVector {
        let mut out = v.clone();
        for _ in 0..2 {
            for q in &self.q {
                let c = q.dotc(&out);
                out.axpy(-c, q, nalgebra::Complex::new(1.0, 0.0));
            }
        }
        out
    }

    /// Appends `column` (assumed unit norm). Returns the Gram condition
    /// estimate `1 / min_t r_tt^2` after the update, or `Err` with that
    /// estimate if it exceeds [`MAX_GRAM_CONDITION`].
    pub(crate) fn push(&mut self, column: &CVector) -> Result<f64, f64> {
        let v = self.project_out(column);
        let r = v.norm();
        let min_diag = self.min_diag.min(r);
        let cond = if min_diag > 0.0 {
            1.0 / (min_diag * min_diag)
        } else {
            f64::INFINITY
        };
        if !(cond <= MAX_GRAM_CONDITION) {
            return Err(cond);
        }
        self.min_diag = min_diag;
        self.q.push(v.unscale(r));
        Ok(cond)
    }

    pub(crate) fn from_columns(matrix: &SensingMatrix, indices: &[usize]) -> Result<Self, f64> {
        let mut b = Self::new();
        for &j in indices {
            b.push(&matrix.as_matrix().column(j).into_owned())?;
        }
        Ok(b)
    }
}

/// `max_i |v_i|`, zero for an empty vector.
pub(crate) fn sup_norm(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
