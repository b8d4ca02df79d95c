//! Low-rank Mahalanobis distance `d_W(x, mu) = ||W (x - mu)||^2` with an
//! `m x d` projection `W`, and the leaky online update shared by all learners.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Default learning rate for the metric update.
pub const DEFAULT_GAMMA: f64 = 0.01;

/// Upper bound used for the projected dimension when none is configured.
pub const DEFAULT_MAX_RANK: usize = 256;

/// Projected dimension used when `m` is not configured.
pub fn default_rank(d: usize) -> usize {
    d.min(DEFAULT_MAX_RANK)
}

/// Dense row-major matrix. Used for `W` and for its gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(rows * cols, data.len())?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_dim(cols, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self += scale * a b^T` where `a` has `rows` entries and `b` has `cols`.
    pub fn add_outer(&mut self, scale: f64, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (i, &ai) in a.iter().enumerate() {
            let s = scale * ai;
            if s == 0.0 {
                continue;
            }
            for (w, &bj) in self.data[i * self.cols..(i + 1) * self.cols]
                .iter_mut()
                .zip(b)
            {
                *w += s * bj;
            }
        }
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Matrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// The projection `W` (`m` rows, `d` columns) that parameterizes the
/// squared distance.
///
/// A fresh metric is the truncated identity, so it starts out as the squared
/// Euclidean distance on the first `m` coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct LowRankMetric {
    w: Matrix,
}

impl LowRankMetric {
    pub fn truncated_identity(m: usize, d: usize) -> Result<Self> {
        validate_shape(m, d)?;
        let mut w = Matrix::zeros(m, d);
        for i in 0..m {
            w.set(i, i, 1.0);
        }
        Ok(LowRankMetric { w })
    }

    pub fn from_matrix(w: Matrix) -> Result<Self> {
        validate_shape(w.rows, w.cols)?;
        if !w.is_finite() {
            return Err(Error::Numerical("metric has non-finite entries".into()));
        }
        Ok(LowRankMetric { w })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::from_matrix(Matrix::from_rows(rows)?)
    }

    /// Projected dimension `m`.
    pub fn rank(&self) -> usize {
        self.w.rows
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.w.cols
    }

    pub fn matrix(&self) -> &Matrix {
        &self.w
    }

    /// `W v`.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), v.len())?;
        Ok(self.project_unchecked(v))
    }

    pub(crate) fn project_unchecked(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rank())
            .map(|i| self.w.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `(x - mu)^T W^T W (x - mu)`.
    pub fn distance(&self, x: &[f64], mu: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), mu.len())?;
        Ok(self.distance_unchecked(x, mu))
    }

    pub(crate) fn distance_unchecked(&self, x: &[f64], mu: &[f64]) -> f64 {
        let diff: Vec<f64> = x.iter().zip(mu).map(|(a, b)| a - b).collect();
        self.projected_diff(&diff).iter().map(|v| v * v).sum()
    }

    /// Returns `W (x - mu)` for an already-formed difference vector.
    pub(crate) fn projected_diff(&self, diff: &[f64]) -> Vec<f64> {
        self.project_unchecked(diff)
    }

    /// Leaky update `W <- (1 - gamma) W + gamma G`.
    ///
    /// Non-finite results are rejected and the current `W` is kept.
    pub fn sgd_step(&mut self, gradient: &Matrix, gamma: f64) -> Result<()> {
        if gradient.rows != self.w.rows || gradient.cols != self.w.cols {
            return Err(Error::InvalidInput(format!(
                "gradient shape {}x{} does not match metric {}x{}",
                gradient.rows, gradient.cols, self.w.rows, self.w.cols
            )));
        }
        validate_gamma(gamma)?;
        if !gradient.is_finite() {
            return Err(Error::Numerical("non-finite metric gradient".into()));
        }
        let updated: Vec<f64> = self
            .w
            .data
            .iter()
            .zip(&gradient.data)
            .map(|(w, g)| (1.0 - gamma) * w + gamma * g)
            .collect();
        if updated.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("metric update overflowed".into()));
        }
        self.w.data = updated;
        Ok(())
    }

    /// `sum_k coeff_k * W (c_k - x)(c_k - x)^T` over `(center, coeff)` terms.
    ///
    /// This is the common shape of the log-likelihood gradients of every
    /// softmax-over-distances model in this crate.
    pub(crate) fn scatter_gradient<'a>(
        &self,
        x: &[f64],
        terms: impl IntoIterator<Item = (&'a [f64], f64)>,
    ) -> Matrix {
        let mut g = Matrix::zeros(self.rank(), self.dim());
        for (center, coeff) in terms {
            if coeff == 0.0 {
                continue;
            }
            let diff: Vec<f64> = center.iter().zip(x).map(|(c, v)| c - v).collect();
            let proj = self.projected_diff(&diff);
            g.add_outer(coeff, &proj, &diff);
        }
        g
    }

    /// The metric with `W` replaced by `c W`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let data = self.w.data.iter().map(|v| v * c).collect();
        Self::from_matrix(Matrix::from_row_major(self.w.rows, self.w.cols, data)?)
    }
}

pub(crate) fn check_shape(current: &LowRankMetric, new: &LowRankMetric) -> Result<()> {
    if current.rank() != new.rank() || current.dim() != new.dim() {
        return Err(Error::InvalidInput(format!(
            "metric shape {}x{} does not match {}x{}",
            new.rank(),
            new.dim(),
            current.rank(),
            current.dim()
        )));
    }
    Ok(())
}

impl TryFrom<Matrix> for LowRankMetric {
    type Error = Error;

    fn try_from(w: Matrix) -> Result<Self> {
        LowRankMetric::from_matrix(w)
    }
}

impl From<LowRankMetric> for Matrix {
    fn from(m: LowRankMetric) -> Matrix {
        m.w
    }
}

fn validate_shape(m: usize, d: usize) -> Result<()> {
    if d == 0 || m == 0 {
        return Err(Error::InvalidInput(format!(
            "metric dimensions must be positive (m = {m}, d = {d})"
        )));
    }
    if m > d {
        return Err(Error::InvalidInput(format!(
            "projected dimension m = {m} exceeds feature dimension d = {d}"
        )));
    }
    Ok(())
}

/// The learners accept `gamma = 0` as "metric frozen".
pub(crate) fn validate_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && (0.0..1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "learning rate must lie in [0, 1), got {gamma}"
        )))
    }
}
