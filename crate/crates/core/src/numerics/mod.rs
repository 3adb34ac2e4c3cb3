//! Dense statistics and linear algebra used by the analysis modules.
//!
//! Every reduction runs in a fixed sequential order so results are bitwise
//! reproducible; parallelism is only ever across independent output columns.
//! Variances are population variances (divide by `T`).

mod decomposition;
mod ridge;

use nalgebra::DMatrix;
use rayon::prelude::*;

pub use decomposition::{cca, pca, thin_svd, CcaBasis, PcaBasis, Svd};
pub use ridge::{default_ridge_lambda, ridge_solve, RidgeFit, RidgeProblem};

use crate::dataset::ActivationMatrix;
use crate::error::{Error, Result};

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// True when every entry equals the first one exactly.
pub fn is_constant(x: &[f64]) -> bool {
    x.first().is_none_or(|&f| x.iter().all(|&v| v == f))
}

/// Population variance, two-pass. Exactly 0 for constant input.
pub fn variance(x: &[f64]) -> f64 {
    if is_constant(x) {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

/// Pearson correlation. Returns 0 when either input is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "pearson over vectors of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "pearson needs at least 2 observations, got {}",
            x.len()
        )));
    }
    if is_constant(x) || is_constant(y) {
        return Ok(0.0);
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Columns centred and scaled to unit Euclidean norm, so that the Pearson
/// correlation of two columns is their dot product. Constant columns become
/// all-zero vectors.
#[derive(Debug, Clone)]
pub struct StandardizedColumns {
    rows: usize,
    columns: Vec<Vec<f64>>,
}

impl StandardizedColumns {
    pub fn from_columns(columns: impl IntoIterator<Item = Vec<f64>>) -> Self {
        let columns: Vec<Vec<f64>> = columns
            .into_iter()
            .map(|mut col| {
                if is_constant(&col) {
                    col.iter_mut().for_each(|v| *v = 0.0);
                    return col;
                }
                let m = mean(&col);
                col.iter_mut().for_each(|v| *v -= m);
                let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
                col.iter_mut().for_each(|v| *v /= norm);
                col
            })
            .collect();
        let rows = columns.first().map_or(0, Vec::len);
        StandardizedColumns { rows, columns }
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self::from_columns(m.column_iter().map(|c| c.iter().copied().collect()))
    }

    pub fn from_activations(m: &ActivationMatrix) -> Self {
        Self::from_columns((0..m.cols()).map(|c| m.column(c)))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// `self.len() x other.len()` matrix of pairwise correlations.
    pub fn correlate(&self, other: &StandardizedColumns) -> Result<DMatrix<f64>> {
        if self.rows != other.rows {
            return Err(Error::Dimension(format!(
                "correlating {} rows against {} rows",
                self.rows, other.rows
            )));
        }
        if self.rows < 2 {
            return Err(Error::InvalidArgument("correlation needs at least 2 rows".into()));
        }
        let cols: Vec<Vec<f64>> = other
            .columns
            .par_iter()
            .map(|b| {
                self.columns
                    .iter()
                    .map(|a| dot(a, b).clamp(-1.0, 1.0))
                    .collect()
            })
            .collect();
        Ok(DMatrix::from_fn(self.len(), other.len(), |i, j| cols[j][i]))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Entry `(i, j)` is the Pearson correlation of column `i` of `a` with
/// column `j` of `b`.
pub fn correlation_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "row counts differ: {} vs {}",
            a.nrows(),
            b.nrows()
        )));
    }
    StandardizedColumns::from_matrix(a).correlate(&StandardizedColumns::from_matrix(b))
}

/// Subtracts column means in place and returns them.
pub fn center_columns(m: &mut DMatrix<f64>) -> Vec<f64> {
    let means: Vec<f64> = m
        .column_iter()
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    for (j, mu) in means.iter().enumerate() {
        m.column_mut(j).iter_mut().for_each(|v| *v -= mu);
    }
    means
}
