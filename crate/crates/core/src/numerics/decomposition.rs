//! SVD, PCA and regularised CCA.

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use serde::{Deserialize, Serialize};

use super::center_columns;
use crate::error::{Error, Result};

/// Slack applied when comparing a cumulative variance fraction with the
/// requested threshold, absorbing summation round-off.
const FRACTION_SLACK: f64 = 1e-12;

/// Thin SVD `A = U diag(s) V'` with singular values in descending order.
/// Each right singular vector has its largest-magnitude entry positive
/// (first such entry on ties); `U` is flipped to match.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Option<DMatrix<f64>>,
    pub singular_values: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub fn thin_svd(a: &DMatrix<f64>, compute_u: bool) -> Result<Svd> {
    let svd = SVD::try_new(a.clone(), compute_u, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Degenerate("SVD did not converge".into()))?;
    let v_t = svd.v_t.expect("requested V");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]).then(i.cmp(&j)));

    let n = a.ncols();
    let k = order.len();
    let mut v = DMatrix::zeros(n, k);
    let mut u = svd.u.as_ref().map(|u| DMatrix::zeros(u.nrows(), k));
    let mut singular_values = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v_t.row(src).transpose();
        let sign = sign_of_largest(col.as_slice());
        col *= sign;
        v.set_column(dst, &col);
        if let (Some(u), Some(src_u)) = (u.as_mut(), svd.u.as_ref()) {
            u.set_column(dst, &(src_u.column(src) * sign));
        }
        singular_values.push(svd.singular_values[src]);
    }
    Ok(Svd {
        u,
        singular_values,
        v,
    })
}

fn sign_of_largest(x: &[f64]) -> f64 {
    let mut best = 0usize;
    for (i, v) in x.iter().enumerate() {
        if v.abs() > x[best].abs() {
            best = i;
        }
    }
    if x.get(best).copied().unwrap_or(0.0) < 0.0 {
        -1.0
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// `D x r`, orthonormal columns.
    pub components: DMatrix<f64>,
    /// Singular values of the centred data, descending, length `r`.
    pub singular_values: Vec<f64>,
    pub retained_fraction: f64,
    /// Population total variance (sum of column variances).
    pub total_variance: f64,
}

impl PcaBasis {
    pub fn rank(&self) -> usize {
        self.components.ncols()
    }

    /// Centred coordinates `(X - mean) V`, `T x r`.
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::Dimension(format!(
                "PCA basis fitted on {} columns, got {}",
                self.mean.len(),
                x.ncols()
            )));
        }
        let mut xc = x.clone();
        for (j, mu) in self.mean.iter().enumerate() {
            xc.column_mut(j).iter_mut().for_each(|v| *v -= mu);
        }
        Ok(xc * &self.components)
    }

    /// Maps reduced coordinates back to the original space.
    pub fn inverse_transform(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if z.ncols() != self.rank() {
            return Err(Error::Dimension(format!(
                "expected {} reduced columns, got {}",
                self.rank(),
                z.ncols()
            )));
        }
        let mut x = z * self.components.transpose();
        for (j, mu) in self.mean.iter().enumerate() {
            x.column_mut(j).iter_mut().for_each(|v| *v += mu);
        }
        Ok(x)
    }
}

/// Keeps the fewest leading components whose squared singular values reach
/// `variance_fraction` of the total.
pub fn pca(x: &DMatrix<f64>, variance_fraction: f64) -> Result<PcaBasis> {
    if !(variance_fraction > 0.0 && variance_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "variance fraction must lie in (0, 1], got {variance_fraction}"
        )));
    }
    let (t, d) = x.shape();
    if t < 2 {
        return Err(Error::InvalidArgument(format!("PCA needs at least 2 rows, got {t}")));
    }
    let mut xc = x.clone();
    let mean = center_columns(&mut xc);
    let svd = thin_svd(&xc, false)?;
    let s = &svd.singular_values;
    let total: f64 = s.iter().map(|v| v * v).sum();
    let s_max = s.first().copied().unwrap_or(0.0);
    if total <= 0.0 || s_max <= 0.0 {
        return Err(Error::Degenerate("every column is constant".into()));
    }
    let tol = s_max * t.max(d) as f64 * f64::EPSILON;
    let numerical_rank = s.iter().take_while(|&&v| v > tol).count().max(1);

    let target = variance_fraction * total * (1.0 - FRACTION_SLACK);
    let mut cum = 0.0;
    let mut r = numerical_rank;
    for (i, v) in s.iter().take(numerical_rank).enumerate() {
        cum += v * v;
        if cum >= target {
            r = i + 1;
            break;
        }
    }
    let retained: f64 = s[..r].iter().map(|v| v * v).sum::<f64>() / total;
    Ok(PcaBasis {
        mean,
        components: svd.v.columns(0, r).into_owned(),
        singular_values: s[..r].to_vec(),
        retained_fraction: retained.min(1.0),
        total_variance: total / t as f64,
    })
}

/// Canonical correlation basis of two views.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CcaBasis {
    /// `r_a x c` canonical directions of the first view.
    pub proj_a: DMatrix<f64>,
    /// `r_b x c` canonical directions of the second view.
    pub proj_b: DMatrix<f64>,
    /// Canonical correlations, non-increasing, in `[0, 1]`.
    pub coefficients: Vec<f64>,
    pub epsilon_a: f64,
    pub epsilon_b: f64,
}

impl CcaBasis {
    pub fn num_directions(&self) -> usize {
        self.coefficients.len()
    }
}

/// CCA via the SVD of `Saa^-1/2 Sab Sbb^-1/2`, with `epsilon * I` added to
/// both auto-covariances. `epsilon = None` uses `1e-8` times the mean
/// diagonal of each covariance.
pub fn cca(xa: &DMatrix<f64>, xb: &DMatrix<f64>, epsilon: Option<f64>) -> Result<CcaBasis> {
    let t = xa.nrows();
    if xb.nrows() != t {
        return Err(Error::Dimension(format!("views have {t} and {} rows", xb.nrows())));
    }
    let (ra, rb) = (xa.ncols(), xb.ncols());
    if ra == 0 || rb == 0 {
        return Err(Error::InvalidArgument("CCA views need at least one column".into()));
    }
    if t <= ra.max(rb) {
        return Err(Error::InsufficientData(format!(
            "CCA needs more rows ({t}) than columns ({})",
            ra.max(rb)
        )));
    }
    if let Some(e) = epsilon {
        if !(e >= 0.0 && e.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {e}")));
        }
    }
    let mut a = xa.clone();
    let mut b = xb.clone();
    center_columns(&mut a);
    center_columns(&mut b);
    let n = t as f64;
    let mut saa = a.tr_mul(&a) / n;
    let mut sbb = b.tr_mul(&b) / n;
    let sab = a.tr_mul(&b) / n;

    let eps_a = epsilon.unwrap_or_else(|| 1e-8 * saa.diagonal().mean());
    let eps_b = epsilon.unwrap_or_else(|| 1e-8 * sbb.diagonal().mean());
    for i in 0..ra {
        saa[(i, i)] += eps_a;
    }
    for i in 0..rb {
        sbb[(i, i)] += eps_b;
    }
    let wa = inverse_sqrt(saa, "first view")?;
    let wb = inverse_sqrt(sbb, "second view")?;
    let k = &wa * sab * &wb;
    let svd = thin_svd(&k.transpose(), true)?;
    // SVD of K' gives V_K as `u` and U_K as `v`, so the sign convention is
    // anchored on the first view's directions.
    let c = ra.min(rb);
    let ua = svd.v.columns(0, c).into_owned();
    let ub = svd.u.expect("requested U").columns(0, c).into_owned();
    let coefficients = svd.singular_values[..c].iter().map(|s| s.clamp(0.0, 1.0)).collect();
    Ok(CcaBasis {
        proj_a: wa * ua,
        proj_b: wb * ub,
        coefficients,
        epsilon_a: eps_a,
        epsilon_b: eps_b,
    })
}

fn inverse_sqrt(s: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(s);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= max * 1e-13 {
        return Err(Error::IllConditioned(format!(
            "{what} covariance eigenvalues span [{min:e}, {max:e}]; use epsilon > 0"
        )));
    }
    let d = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose())
}
