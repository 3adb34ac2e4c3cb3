//! Unsupervised cross-model neuron rankings: MaxCorr, MinCorr, LinReg and
//! SVCCA directions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dataset::ActivationDataset;
use crate::error::{Error, Result};
use crate::numerics::{cca, pca, variance, CcaBasis, PcaBasis, RidgeProblem, StandardizedColumns};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankMethod {
    MaxCorr,
    MinCorr,
    LinReg,
    Svcca,
}

impl RankMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            RankMethod::MaxCorr => "maxcorr",
            RankMethod::MinCorr => "mincorr",
            RankMethod::LinReg => "linreg",
            RankMethod::Svcca => "svcca",
        }
    }

    /// LinReg ranks by ascending error, the others by descending score.
    pub fn descending(self) -> bool {
        !matches!(self, RankMethod::LinReg)
    }
}

impl fmt::Display for RankMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RankMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "maxcorr" => Ok(RankMethod::MaxCorr),
            "mincorr" => Ok(RankMethod::MinCorr),
            "linreg" => Ok(RankMethod::LinReg),
            "svcca" => Ok(RankMethod::Svcca),
            other => Err(Error::InvalidArgument(format!("unknown ranking method `{other}`"))),
        }
    }
}

mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

mod finite_or_null_map {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &BTreeMap<String, Vec<f64>>, s: S) -> Result<S::Ok, S::Error> {
        let opt: BTreeMap<&String, Vec<Option<f64>>> = m
            .iter()
            .map(|(k, v)| (k, v.iter().map(|x| x.is_finite().then_some(*x)).collect()))
            .collect();
        opt.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, Vec<f64>>, D::Error> {
        let opt = BTreeMap::<String, Vec<Option<f64>>>::deserialize(d)?;
        Ok(opt
            .into_iter()
            .map(|(k, v)| (k, v.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect()))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedUnit {
    pub unit: usize,
    /// `null` in JSON when undefined (e.g. LinReg on a constant neuron).
    #[serde(with = "finite_or_null")]
    pub score: f64,
}

/// Ordered permutation of a model's units with per-unit scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronRanking {
    pub model: String,
    pub method: RankMethod,
    pub params: BTreeMap<String, Value>,
    pub corpus: String,
    pub others: Vec<String>,
    pub ranking: Vec<RankedUnit>,
    /// Units whose score is degenerate (constant activation).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flagged: Vec<usize>,
    /// Per-other-model scores indexed by unit id, kept for audit.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty", with = "finite_or_null_map")]
    pub per_model: BTreeMap<String, Vec<f64>>,
}

impl NeuronRanking {
    /// Orders `scores` (indexed by unit id) by the method's convention.
    /// Undefined scores go last; ties go to the lower unit id.
    pub fn from_scores(
        model: impl Into<String>,
        method: RankMethod,
        corpus: impl Into<String>,
        others: Vec<String>,
        scores: &[f64],
    ) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&i, &j| {
            let (a, b) = (scores[i], scores[j]);
            let by_score = match (a.is_nan(), b.is_nan()) {
                (true, true) => std::cmp::Ordering::Equal,
                (true, false) => std::cmp::Ordering::Greater,
                (false, true) => std::cmp::Ordering::Less,
                _ if method.descending() => b.total_cmp(&a),
                _ => a.total_cmp(&b),
            };
            by_score.then(i.cmp(&j))
        });
        NeuronRanking {
            model: model.into(),
            method,
            params: BTreeMap::new(),
            corpus: corpus.into(),
            others,
            ranking: order.into_iter().map(|unit| RankedUnit { unit, score: scores[unit] }).collect(),
            flagged: Vec::new(),
            per_model: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ranking.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranking.is_empty()
    }

    pub fn units(&self) -> impl Iterator<Item = usize> + '_ {
        self.ranking.iter().map(|r| r.unit)
    }

    /// 1-based rank of `unit`.
    pub fn rank_of(&self, unit: usize) -> Option<usize> {
        self.ranking.iter().position(|r| r.unit == unit).map(|p| p + 1)
    }

    pub fn score_of(&self, unit: usize) -> Option<f64> {
        self.ranking.iter().find(|r| r.unit == unit).map(|r| r.score)
    }

    /// Scores indexed by unit id.
    pub fn scores_by_unit(&self) -> Vec<f64> {
        let mut out = vec![f64::NAN; self.len()];
        for r in &self.ranking {
            if r.unit < out.len() {
                out[r.unit] = r.score;
            }
        }
        out
    }

    /// Checks the permutation and ordering invariants (useful after reading
    /// a ranking file).
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let mut seen = vec![false; n];
        for r in &self.ranking {
            if r.unit >= n || std::mem::replace(&mut seen[r.unit], true) {
                return Err(Error::InvalidArgument(format!(
                    "ranking for `{}` is not a permutation of 0..{n}",
                    self.model
                )));
            }
        }
        let defined: Vec<f64> = self.ranking.iter().map(|r| r.score).take_while(|s| !s.is_nan()).collect();
        if self.ranking[defined.len()..].iter().any(|r| !r.score.is_nan()) {
            return Err(Error::InvalidArgument("undefined scores must come last".into()));
        }
        let sorted = defined.windows(2).all(|w| {
            if self.method.descending() {
                w[0] >= w[1]
            } else {
                w[0] <= w[1]
            }
        });
        if !sorted {
            return Err(Error::InvalidArgument(format!(
                "{} ranking scores are out of order",
                self.method
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: NeuronRanking = serde_json::from_str(text)?;
        r.validate()?;
        Ok(r)
    }

    /// CSV mirror: `rank,unit,score` with an empty score when undefined.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,unit,score\n");
        for (i, r) in self.ranking.iter().enumerate() {
            let score = if r.score.is_finite() { r.score.to_string() } else { String::new() };
            out.push_str(&format!("{},{},{}\n", i + 1, r.unit, score));
        }
        out
    }
}

fn require_pair(ds: &ActivationDataset, m: &str) -> Result<()> {
    ds.model(m)?;
    if ds.num_models() < 2 {
        return Err(Error::TooFewModels {
            needed: 2,
            actual: ds.num_models(),
        });
    }
    Ok(())
}

/// For each other model, the best absolute correlation of every neuron of
/// `m` with any of that model's neurons.
pub fn cross_model_maxima(ds: &ActivationDataset, m: &str) -> Result<Vec<(String, Vec<f64>)>> {
    require_pair(ds, m)?;
    let own = StandardizedColumns::from_activations(&ds.model(m)?.activations);
    ds.others(m)
        .map(|other| {
            let theirs = StandardizedColumns::from_activations(&other.activations);
            let corr = own.correlate(&theirs)?;
            let best = corr
                .row_iter()
                .map(|row| row.iter().fold(0.0f64, |acc, v| acc.max(v.abs())))
                .collect();
            Ok((other.model_id.clone(), best))
        })
        .collect()
}

fn correlation_ranking(ds: &ActivationDataset, m: &str, method: RankMethod) -> Result<NeuronRanking> {
    let maxima = cross_model_maxima(ds, m)?;
    let d = ds.model(m)?.num_neurons();
    let fold: fn(f64, f64) -> f64 = match method {
        RankMethod::MaxCorr => f64::max,
        _ => f64::min,
    };
    let start = if method == RankMethod::MaxCorr { 0.0 } else { f64::INFINITY };
    let scores: Vec<f64> = (0..d)
        .map(|i| maxima.iter().map(|(_, v)| v[i]).fold(start, fold))
        .collect();
    let others = maxima.iter().map(|(id, _)| id.clone()).collect();
    let mut r = NeuronRanking::from_scores(m, method, ds.corpus_id(), others, &scores);
    r.flagged = ds.model(m)?.constant_columns.clone();
    r.per_model = maxima.into_iter().collect();
    Ok(r)
}

/// Score = max over other models and their neurons of |rho|.
pub fn rank_maxcorr(ds: &ActivationDataset, m: &str) -> Result<NeuronRanking> {
    correlation_ranking(ds, m, RankMethod::MaxCorr)
}

/// Score = min over other models of (max over that model's neurons of |rho|).
pub fn rank_mincorr(ds: &ActivationDataset, m: &str) -> Result<NeuronRanking> {
    correlation_ranking(ds, m, RankMethod::MinCorr)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinRegOptions {
    /// `None` uses the default ridge strength for each regressor model.
    pub lambda: Option<f64>,
    /// Divide each neuron's MSE by its variance.
    pub normalize: bool,
}

impl Default for LinRegOptions {
    fn default() -> Self {
        LinRegOptions {
            lambda: None,
            normalize: true,
        }
    }
}

/// Regresses every neuron of `m` on the full activations of each other
/// model and ranks by the smallest (optionally variance-normalised) MSE.
pub fn rank_linreg(ds: &ActivationDataset, m: &str, opts: LinRegOptions) -> Result<NeuronRanking> {
    require_pair(ds, m)?;
    let target = ds.model(m)?;
    let d = target.num_neurons();
    let t = ds.num_tokens();
    let ys = target.activations.to_dmatrix();
    let variances: Vec<f64> = (0..d).map(|i| variance(&target.activations.column(i))).collect();

    let mut per_model = BTreeMap::new();
    let mut lambdas = serde_json::Map::new();
    for other in ds.others(m) {
        if t < 10 * other.num_neurons() {
            log::warn!(
                "linreg: {t} tokens for {} regressors from `{}`; fits may overfit",
                other.num_neurons(),
                other.model_id
            );
        }
        let problem = RidgeProblem::new(&other.activations.to_dmatrix(), opts.lambda)?;
        lambdas.insert(other.model_id.clone(), json!(problem.lambda()));
        let fits = problem.fit_many(&ys)?;
        let mses: Vec<f64> = fits
            .iter()
            .zip(&variances)
            .map(|(f, &v)| match (opts.normalize, v > 0.0) {
                (_, false) => f64::NAN,
                (true, true) => f.mse / v,
                (false, true) => f.mse,
            })
            .collect();
        per_model.insert(other.model_id.clone(), mses);
    }
    let scores: Vec<f64> = (0..d)
        .map(|i| {
            if variances[i] > 0.0 {
                per_model.values().map(|v| v[i]).fold(f64::INFINITY, f64::min)
            } else {
                f64::NAN
            }
        })
        .collect();
    let others = per_model.keys().cloned().collect();
    let mut r = NeuronRanking::from_scores(m, RankMethod::LinReg, ds.corpus_id(), others, &scores);
    r.params.insert("lambda".into(), Value::Object(lambdas));
    r.params.insert("normalized".into(), json!(opts.normalize));
    r.flagged = (0..d).filter(|&i| variances[i] <= 0.0).collect();
    r.per_model = per_model;
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvccaOptions {
    pub variance_fraction: f64,
    /// CCA ridge; `None` uses the default relative regulariser.
    pub epsilon: Option<f64>,
}

impl Default for SvccaOptions {
    fn default() -> Self {
        SvccaOptions {
            variance_fraction: 0.99,
            epsilon: None,
        }
    }
}

/// CCA directions between the PCA-reduced activations of two models.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvccaDirections {
    pub model: String,
    pub other: String,
    pub pca_model: PcaBasis,
    pub pca_other: PcaBasis,
    pub basis: CcaBasis,
    pub variance_fraction: f64,
}

impl SvccaDirections {
    /// Direction scores (the CCA coefficients), descending.
    pub fn scores(&self) -> &[f64] {
        &self.basis.coefficients
    }

    pub fn to_ranking(&self, corpus: &str) -> NeuronRanking {
        let mut r = NeuronRanking::from_scores(
            &self.model,
            RankMethod::Svcca,
            corpus,
            vec![self.other.clone()],
            &self.basis.coefficients,
        );
        r.params.insert("variance_fraction".into(), json!(self.variance_fraction));
        r.params.insert("pca_rank_model".into(), json!(self.pca_model.rank()));
        r.params.insert("pca_rank_other".into(), json!(self.pca_other.rank()));
        r.params.insert("epsilon_model".into(), json!(self.basis.epsilon_a));
        r.params.insert("epsilon_other".into(), json!(self.basis.epsilon_b));
        r
    }
}

pub fn rank_svcca(ds: &ActivationDataset, m: &str, m_other: &str, opts: SvccaOptions) -> Result<SvccaDirections> {
    let a = ds.model(m)?.activations.to_dmatrix();
    let b = ds.model(m_other)?.activations.to_dmatrix();
    let pca_model = pca(&a, opts.variance_fraction)?;
    let pca_other = pca(&b, opts.variance_fraction)?;
    let basis = cca(&pca_model.transform(&a)?, &pca_other.transform(&b)?, opts.epsilon)?;
    Ok(SvccaDirections {
        model: m.to_owned(),
        other: m_other.to_owned(),
        pca_model,
        pca_other,
        basis,
        variance_fraction: opts.variance_fraction,
    })
}

/// Dispatches on `method`; `other` is required for SVCCA.
pub fn rank(
    ds: &ActivationDataset,
    m: &str,
    method: RankMethod,
    other: Option<&str>,
    linreg: LinRegOptions,
    svcca: SvccaOptions,
) -> Result<NeuronRanking> {
    match method {
        RankMethod::MaxCorr => rank_maxcorr(ds, m),
        RankMethod::MinCorr => rank_mincorr(ds, m),
        RankMethod::LinReg => rank_linreg(ds, m, linreg),
        RankMethod::Svcca => {
            let other = other
                .ok_or_else(|| Error::InvalidArgument("svcca needs the other model's id".into()))?;
            Ok(rank_svcca(ds, m, other, svcca)?.to_ranking(ds.corpus_id()))
        }
    }
}
