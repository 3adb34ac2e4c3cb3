//! Erasure masks (zeroing ranked neurons or projecting out SVCCA
//! directions) and top/bottom degradation curves under a pluggable scorer.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ActivationDataset, ActivationMatrix};
use crate::error::{Error, Result};
use crate::numerics::{variance, CcaBasis, RidgeProblem};
use crate::ranking::{NeuronRanking, RankMethod, SvccaDirections};

/// Smallest `|R_ii| / max |R_jj|` of the retained directions' QR factor
/// before the projection falls back to a ridge-regularised inverse.
const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Top,
    Bottom,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Top => "top",
            Origin::Bottom => "bottom",
        })
    }
}

impl FromStr for Origin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "top" => Ok(Origin::Top),
            "bottom" => Ok(Origin::Bottom),
            other => Err(Error::InvalidArgument(format!("unknown origin `{other}`"))),
        }
    }
}

/// Erasure size as an absolute count or a percentage of the unit count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KSpec {
    Count(usize),
    Percent(f64),
}

impl KSpec {
    /// Percentages round half-up.
    pub fn resolve(self, units: usize) -> Result<usize> {
        let k = match self {
            KSpec::Count(k) => k,
            KSpec::Percent(p) => {
                if !(0.0..=100.0).contains(&p) {
                    return Err(Error::InvalidArgument(format!("percentage {p} outside [0, 100]")));
                }
                (p * units as f64 / 100.0 + 0.5).floor() as usize
            }
        };
        if k > units {
            return Err(Error::InvalidArgument(format!("k={k} exceeds {units} units")));
        }
        Ok(k)
    }
}

impl FromStr for KSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidArgument(format!("bad erasure size `{s}`"));
        match s.strip_suffix('%') {
            Some(p) => p.trim().parse().map(KSpec::Percent).map_err(|_| bad()),
            None => s.parse().map(KSpec::Count).map_err(|_| bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MaskKind {
    /// Units whose columns are set to zero.
    NeuronZero { units: Vec<usize> },
    /// Right-multiplication by the projection onto the retained directions.
    /// Defined in the PCA-reduced space of the model the CCA basis was
    /// computed on; lift back with `PcaBasis::inverse_transform`.
    DirectionProject {
        projection: DMatrix<f64>,
        retained: usize,
        /// Neuron count of the original space when `projection` lives in a
        /// PCA-reduced space (lift with the model's `PcaBasis`).
        original_dim: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErasureMask {
    pub kind: MaskKind,
    pub origin: Origin,
    pub k: usize,
    /// Width of the matrix the mask applies to.
    pub dim: usize,
    /// Set when the retained directions were numerically rank deficient and
    /// a ridge-regularised inverse was used.
    pub regularized: bool,
}

impl ErasureMask {
    pub fn units(&self) -> &[usize] {
        match &self.kind {
            MaskKind::NeuronZero { units } => units,
            MaskKind::DirectionProject { .. } => &[],
        }
    }

    pub fn projection(&self) -> Option<&DMatrix<f64>> {
        match &self.kind {
            MaskKind::DirectionProject { projection, .. } => Some(projection),
            MaskKind::NeuronZero { .. } => None,
        }
    }
}

/// The first (`Top`) or last (`Bottom`) `k` units of `ranking`.
pub fn mask_neurons(ranking: &NeuronRanking, k: usize, origin: Origin) -> Result<ErasureMask> {
    let d = ranking.len();
    if k > d {
        return Err(Error::InvalidArgument(format!("k={k} exceeds {d} ranked units")));
    }
    let units: Vec<usize> = match origin {
        Origin::Top => ranking.units().take(k).collect(),
        Origin::Bottom => ranking.units().skip(d - k).collect(),
    };
    Ok(ErasureMask {
        kind: MaskKind::NeuronZero { units },
        origin,
        k,
        dim: d,
        regularized: false,
    })
}

/// Copy of `x` with the masked columns set to exactly zero.
pub fn apply_neuron_mask(x: &ActivationMatrix, mask: &ErasureMask) -> Result<ActivationMatrix> {
    let MaskKind::NeuronZero { units } = &mask.kind else {
        return Err(Error::InvalidArgument("expected a neuron-zero mask".into()));
    };
    if mask.dim != x.cols() {
        return Err(Error::Dimension(format!(
            "mask built for {} neurons, matrix has {}",
            mask.dim,
            x.cols()
        )));
    }
    let mut out = x.clone();
    for &u in units {
        if u >= x.cols() {
            return Err(Error::Dimension(format!("mask unit {u} outside {} columns", x.cols())));
        }
        for r in 0..out.rows() {
            out.set(r, u, 0.0);
        }
    }
    Ok(out)
}

/// Projection `C~ (C~' C~)^-1 C~'` where `C~` is the first view's CCA
/// direction matrix with its first (`Top`) or last (`Bottom`) `k` columns
/// removed. `k = c` gives the zero map.
pub fn svcca_projection(basis: &CcaBasis, k: usize, origin: Origin) -> Result<ErasureMask> {
    projection_mask(&basis.proj_a, k, origin)
}

/// [`svcca_projection`] for an arbitrary direction matrix `C` (`r x c`).
pub fn projection_mask(c: &DMatrix<f64>, k: usize, origin: Origin) -> Result<ErasureMask> {
    let (r, n) = c.shape();
    if k > n {
        return Err(Error::InvalidArgument(format!("k={k} exceeds {n} directions")));
    }
    let keep = n - k;
    let mut regularized = false;
    let projection = if keep == 0 {
        DMatrix::zeros(r, r)
    } else {
        let start = if origin == Origin::Top { k } else { 0 };
        let kept = c.columns(start, keep).into_owned();
        let qr = kept.clone().qr();
        let diag: Vec<f64> = qr.r().diagonal().iter().map(|v| v.abs()).collect();
        let max = diag.iter().copied().fold(0.0, f64::max);
        let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
        if max > 0.0 && min > RANK_TOLERANCE * max {
            let q = qr.q();
            &q * q.transpose()
        } else {
            regularized = true;
            let mut gram = kept.tr_mul(&kept);
            let eps = 1e-8 * gram.diagonal().mean().max(f64::MIN_POSITIVE);
            for i in 0..keep {
                gram[(i, i)] += eps;
            }
            let inv = gram
                .try_inverse()
                .ok_or_else(|| Error::Singular("retained CCA directions are degenerate".into()))?;
            log::warn!("svcca projection: retained directions rank deficient, using ridge inverse");
            &kept * inv * kept.transpose()
        }
    };
    Ok(ErasureMask {
        kind: MaskKind::DirectionProject {
            projection,
            retained: keep,
            original_dim: None,
        },
        origin,
        k,
        dim: r,
        regularized,
    })
}

/// [`svcca_projection`] for a model's SVCCA directions, recording the
/// neuron count the reduced-space projection lifts back to.
pub fn svcca_mask(directions: &SvccaDirections, k: usize, origin: Origin) -> Result<ErasureMask> {
    let mut mask = svcca_projection(&directions.basis, k, origin)?;
    if let MaskKind::DirectionProject { original_dim, .. } = &mut mask.kind {
        *original_dim = Some(directions.pca_model.mean.len());
    }
    Ok(mask)
}

/// `E' = E P`.
pub fn apply_direction_mask(e: &DMatrix<f64>, mask: &ErasureMask) -> Result<DMatrix<f64>> {
    let p = mask
        .projection()
        .ok_or_else(|| Error::InvalidArgument("expected a direction-projection mask".into()))?;
    if e.ncols() != p.nrows() {
        return Err(Error::Dimension(format!(
            "embedding has {} columns, projection is {}x{}",
            e.ncols(),
            p.nrows(),
            p.ncols()
        )));
    }
    Ok(e * p)
}

/// Quality of a (masked) activation matrix. Must be deterministic.
pub trait Scorer: Sync {
    fn name(&self) -> String;
    fn score(&self, x: &ActivationMatrix) -> Result<f64>;
}

/// In-sample R^2 of a ridge probe recovering `target` from the activations.
#[derive(Debug, Clone)]
pub struct LinearProbeScorer {
    pub label: String,
    pub target: Vec<f64>,
    pub lambda: Option<f64>,
}

impl LinearProbeScorer {
    pub fn new(label: impl Into<String>, target: Vec<f64>) -> Self {
        LinearProbeScorer {
            label: label.into(),
            target,
            lambda: None,
        }
    }
}

impl Scorer for LinearProbeScorer {
    fn name(&self) -> String {
        format!("probe:{}", self.label)
    }

    fn score(&self, x: &ActivationMatrix) -> Result<f64> {
        if x.rows() != self.target.len() {
            return Err(Error::Dimension(format!(
                "probe target has {} rows, activations {}",
                self.target.len(),
                x.rows()
            )));
        }
        let var = variance(&self.target);
        if var == 0.0 {
            return Err(Error::Degenerate("probe target is constant".into()));
        }
        if x.constant_columns().len() == x.cols() {
            return Ok(0.0);
        }
        let fit = RidgeProblem::new(&x.to_dmatrix(), self.lambda)?.fit(&self.target)?;
        Ok((1.0 - fit.mse / var).clamp(0.0, 1.0))
    }
}

/// Mean squared reconstruction error of a ridge decoder fitted once on the
/// unmasked activations. Higher means worse.
#[derive(Debug, Clone)]
pub struct RidgeDecoderScorer {
    pub label: String,
    weights: DMatrix<f64>,
    bias: Vec<f64>,
    targets: DMatrix<f64>,
}

impl RidgeDecoderScorer {
    pub fn fit(label: impl Into<String>, x: &ActivationMatrix, targets: DMatrix<f64>, lambda: Option<f64>) -> Result<Self> {
        let problem = RidgeProblem::new(&x.to_dmatrix(), lambda)?;
        let fits = problem.fit_many(&targets)?;
        let weights = DMatrix::from_fn(x.cols(), targets.ncols(), |i, j| fits[j].weights[i]);
        Ok(RidgeDecoderScorer {
            label: label.into(),
            weights,
            bias: fits.iter().map(|f| f.bias).collect(),
            targets,
        })
    }
}

impl Scorer for RidgeDecoderScorer {
    fn name(&self) -> String {
        format!("decoder:{}", self.label)
    }

    fn score(&self, x: &ActivationMatrix) -> Result<f64> {
        if x.rows() != self.targets.nrows() || x.cols() != self.weights.nrows() {
            return Err(Error::Dimension("decoder input shape differs from its fit".into()));
        }
        let mut pred = x.to_dmatrix() * &self.weights;
        for (j, b) in self.bias.iter().enumerate() {
            pred.column_mut(j).iter_mut().for_each(|v| *v += b);
        }
        let err = (&pred - &self.targets).iter().map(|v| v * v).sum::<f64>();
        Ok(err / self.targets.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub origin: Origin,
    pub k: usize,
    pub fraction: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErasureCurve {
    pub model: String,
    pub method: RankMethod,
    pub scorer: String,
    /// Number of rankable units (neurons or directions).
    pub units: usize,
    /// Top-origin points then bottom-origin points, each by increasing `k`.
    pub points: Vec<CurvePoint>,
}

impl ErasureCurve {
    pub fn series(&self, origin: Origin) -> Vec<(usize, f64)> {
        self.points
            .iter()
            .filter(|p| p.origin == origin)
            .map(|p| (p.k, p.score))
            .collect()
    }

    pub fn score_at(&self, origin: Origin, k: usize) -> Option<f64> {
        self.points.iter().find(|p| p.origin == origin && p.k == k).map(|p| p.score)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("origin,k,fraction,score\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{}\n", p.origin, p.k, p.fraction, p.score));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Sorted, deduplicated `k` values with the `k = 0` baseline added.
fn normalize_ks(ks: &[usize], units: usize) -> Result<Vec<usize>> {
    let mut out: Vec<usize> = ks.to_vec();
    out.push(0);
    out.sort_unstable();
    out.dedup();
    if let Some(&k) = out.iter().find(|&&k| k > units) {
        return Err(Error::InvalidArgument(format!("k={k} exceeds {units} units")));
    }
    Ok(out)
}

fn build_curve(
    model: &str,
    method: RankMethod,
    scorer: &dyn Scorer,
    units: usize,
    ks: &[usize],
    eval: impl Fn(usize, Origin) -> Result<ActivationMatrix> + Sync,
) -> Result<ErasureCurve> {
    let ks = normalize_ks(ks, units)?;
    let name = scorer.name();
    let wrap = |k: usize, e: Error| Error::Scorer {
        scorer: name.clone(),
        k,
        message: e.to_string(),
    };
    let baseline = scorer.score(&eval(0, Origin::Top)?).map_err(|e| wrap(0, e))?;
    let jobs: Vec<(Origin, usize)> = [Origin::Top, Origin::Bottom]
        .into_iter()
        .flat_map(|o| ks.iter().map(move |&k| (o, k)))
        .collect();
    let points = jobs
        .par_iter()
        .map(|&(origin, k)| {
            let score = if k == 0 {
                baseline
            } else {
                scorer.score(&eval(k, origin)?).map_err(|e| wrap(k, e))?
            };
            Ok(CurvePoint {
                origin,
                k,
                fraction: if units == 0 { 0.0 } else { k as f64 / units as f64 },
                score,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ErasureCurve {
        model: model.to_owned(),
        method,
        scorer: name,
        units,
        points,
    })
}

/// Zeroes increasingly many top- and bottom-ranked neurons of model `m`
/// and scores each masked matrix.
pub fn erasure_curve(
    ds: &ActivationDataset,
    m: &str,
    ranking: &NeuronRanking,
    ks: &[usize],
    scorer: &dyn Scorer,
) -> Result<ErasureCurve> {
    if ranking.method == RankMethod::Svcca {
        return Err(Error::InvalidArgument(
            "SVCCA rankings order directions; use svcca_erasure_curve".into(),
        ));
    }
    let x = &ds.model(m)?.activations;
    if ranking.model != m || ranking.len() != x.cols() {
        return Err(Error::Dimension(format!(
            "ranking of `{}` ({} units) does not match model `{m}` ({} neurons)",
            ranking.model,
            ranking.len(),
            x.cols()
        )));
    }
    build_curve(m, ranking.method, scorer, x.cols(), ks, |k, origin| {
        apply_neuron_mask(x, &mask_neurons(ranking, k, origin)?)
    })
}

/// Projects out increasingly many top or bottom CCA directions in the
/// model's PCA-reduced space, lifts the result back to neuron space and
/// scores it.
pub fn svcca_erasure_curve(
    ds: &ActivationDataset,
    directions: &SvccaDirections,
    ks: &[usize],
    scorer: &dyn Scorer,
) -> Result<ErasureCurve> {
    let x = ds.model(&directions.model)?.activations.to_dmatrix();
    let e = directions.pca_model.transform(&x)?;
    let c = directions.basis.num_directions();
    build_curve(&directions.model, RankMethod::Svcca, scorer, c, ks, |k, origin| {
        let mask = svcca_mask(directions, k, origin)?;
        let erased = apply_direction_mask(&e, &mask)?;
        Ok(ActivationMatrix::from_dmatrix(&directions.pca_model.inverse_transform(&erased)?))
    })
}
