use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::center_columns;
use crate::error::{Error, Result};

/// Smallest squared Cholesky pivot, relative to the largest Gram diagonal,
/// accepted before the normal equations are reported singular.
const PIVOT_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// In-sample mean squared residual.
    pub mse: f64,
}

/// `1e-3 * trace(Xc' Xc) / D` for the centred design `Xc`.
pub fn default_ridge_lambda(x: &DMatrix<f64>) -> f64 {
    let mut xc = x.clone();
    center_columns(&mut xc);
    let trace: f64 = xc.iter().map(|v| v * v).sum();
    1e-3 * trace / x.ncols().max(1) as f64
}

/// Ridge regression against a fixed design matrix. The Gram matrix is
/// factored once so many targets can be fitted cheaply.
#[derive(Debug, Clone)]
pub struct RidgeProblem {
    xc: DMatrix<f64>,
    x_mean: Vec<f64>,
    lambda: f64,
    factor: Cholesky<f64, Dyn>,
}

impl RidgeProblem {
    /// Minimises `|Xw + b - y|^2 + lambda |w|^2`; `lambda = None` picks
    /// [`default_ridge_lambda`].
    pub fn new(x: &DMatrix<f64>, lambda: Option<f64>) -> Result<Self> {
        if x.nrows() < 2 {
            return Err(Error::InvalidArgument(format!(
                "ridge regression needs at least 2 rows, got {}",
                x.nrows()
            )));
        }
        let lambda = lambda.unwrap_or_else(|| default_ridge_lambda(x));
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("ridge lambda must be finite and >= 0, got {lambda}")));
        }
        let mut xc = x.clone();
        let x_mean = center_columns(&mut xc);
        let mut gram = xc.tr_mul(&xc);
        let max_diag = gram.diagonal().max();
        for i in 0..gram.nrows() {
            gram[(i, i)] += lambda;
        }
        let factor = Cholesky::new(gram).ok_or_else(|| {
            Error::Singular(format!("normal equations not positive definite at lambda={lambda}"))
        })?;
        let l = factor.l_dirty();
        let min_pivot = (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
        if max_diag + lambda <= 0.0 || min_pivot <= PIVOT_TOLERANCE * (max_diag + lambda) {
            return Err(Error::Singular(format!(
                "normal equations numerically singular at lambda={lambda}; retry with lambda > 0"
            )));
        }
        Ok(RidgeProblem {
            xc,
            x_mean,
            lambda,
            factor,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn fit(&self, y: &[f64]) -> Result<RidgeFit> {
        let ys = DMatrix::from_column_slice(y.len(), 1, y);
        Ok(self.fit_many(&ys)?.pop().expect("one target"))
    }

    /// Fits every column of `ys` as a separate target.
    pub fn fit_many(&self, ys: &DMatrix<f64>) -> Result<Vec<RidgeFit>> {
        let t = self.xc.nrows();
        if ys.nrows() != t {
            return Err(Error::Dimension(format!("design has {t} rows, targets have {}", ys.nrows())));
        }
        let mut yc = ys.clone();
        let y_mean = center_columns(&mut yc);
        let w = self.factor.solve(&self.xc.tr_mul(&yc));
        let residual = &yc - &self.xc * &w;
        let x_mean = DVector::from_column_slice(&self.x_mean);
        Ok((0..ys.ncols())
            .map(|j| {
                let wj = w.column(j);
                let mse = residual.column(j).iter().map(|r| r * r).sum::<f64>() / t as f64;
                RidgeFit {
                    weights: wj.iter().copied().collect(),
                    bias: y_mean[j] - x_mean.dot(&wj),
                    mse,
                }
            })
            .collect())
    }
}

pub fn ridge_solve(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<RidgeFit> {
    RidgeProblem::new(x, Some(lambda))?.fit(y)
}
