//! Supervised checks of individual neurons: variance explained by a token
//! grouping, class-conditional Gaussian label prediction and per-property
//! neuron leaderboards.

mod gaussian;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ActivationDataset, PropertyAnnotation};
use crate::error::{Error, Result};
use crate::numerics::variance;
use crate::ranking::{rank_linreg, rank_maxcorr, rank_mincorr, LinRegOptions, NeuronRanking};

pub use gaussian::{gmm_score, ClassGaussian, ClassMetrics, ClassificationReport, Component, GaussianClassModel, GmmOptions};

/// Groups smaller than this count towards `small_group_mass`.
pub const SMALL_GROUP: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub fraction: f64,
    pub groups: usize,
    pub rows: usize,
    /// Share of rows that fall in groups of fewer than [`SMALL_GROUP`] rows.
    pub small_group_mass: f64,
}

/// `1 - sum_g (n_g / T) Var_g / Var_total` with population variances,
/// clamped to `[0, 1]`.
pub fn explained_variance_by<K: Ord>(values: &[f64], keys: &[K]) -> Result<GroupStats> {
    if values.len() != keys.len() {
        return Err(Error::Dimension(format!("{} values but {} group keys", values.len(), keys.len())));
    }
    let total = variance(values);
    if total == 0.0 {
        return Err(Error::Degenerate("zero total variance (constant neuron)".into()));
    }
    let mut groups: BTreeMap<&K, Vec<f64>> = BTreeMap::new();
    for (v, k) in values.iter().zip(keys) {
        groups.entry(k).or_default().push(*v);
    }
    let n = values.len() as f64;
    let within: f64 = groups.values().map(|g| g.len() as f64 * variance(g)).sum::<f64>() / n;
    let small: usize = groups.values().filter(|g| g.len() < SMALL_GROUP).map(Vec::len).sum();
    Ok(GroupStats {
        fraction: (1.0 - within / total).clamp(0.0, 1.0),
        groups: groups.len(),
        rows: values.len(),
        small_group_mass: small as f64 / n,
    })
}

#[derive(Debug, Clone, Copy)]
pub enum Grouping<'a> {
    /// Within-sentence 0-based index.
    Position,
    /// Exact surface string.
    Token,
    /// Annotation label; unannotated rows are left out.
    Annotation(&'a PropertyAnnotation),
}

impl Grouping<'_> {
    pub fn name(&self) -> String {
        match self {
            Grouping::Position => "position".into(),
            Grouping::Token => "token".into(),
            Grouping::Annotation(a) => format!("annotation:{}", a.property),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub model: String,
    pub neuron: usize,
    pub grouping: String,
    pub percent: String,
    #[serde(flatten)]
    pub stats: GroupStats,
}

pub fn explained_variance(ds: &ActivationDataset, m: &str, neuron: usize, grouping: Grouping<'_>) -> Result<VarianceReport> {
    let x = &ds.model(m)?.activations;
    if neuron >= x.cols() {
        return Err(Error::InvalidArgument(format!("neuron {neuron} outside model `{m}` ({} neurons)", x.cols())));
    }
    let column = x.column(neuron);
    let corpus = ds.corpus();
    let stats = match grouping {
        Grouping::Position => explained_variance_by(&column, &corpus.positions())?,
        Grouping::Token => explained_variance_by(&column, &corpus.tokens().collect::<Vec<_>>())?,
        Grouping::Annotation(a) => {
            let labeled = a.by_row(corpus)?;
            if labeled.is_empty() {
                return Err(Error::InvalidArgument(format!("annotation `{}` is empty", a.property)));
            }
            let values: Vec<f64> = labeled.keys().map(|&r| column[r]).collect();
            let keys: Vec<&str> = labeled.values().copied().collect();
            explained_variance_by(&values, &keys)?
        }
    };
    Ok(VarianceReport {
        model: m.to_owned(),
        neuron,
        grouping: grouping.name(),
        percent: format_percent(stats.fraction),
        stats,
    })
}

/// Percentage with two significant digits (`92%`, `5.3%`, `0.41%`).
pub fn format_percent(fraction: f64) -> String {
    let p = fraction * 100.0;
    if p == 0.0 || !p.is_finite() {
        return format!("{p:.0}%");
    }
    let decimals = (1 - p.abs().log10().floor() as i32).max(0) as usize;
    format!("{p:.decimals$}%")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// Fit on even-indexed sentences, evaluate on odd-indexed ones.
    EvenOdd,
    /// Fit and evaluate on every labeled token.
    InSample,
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "even-odd" => Ok(SplitMode::EvenOdd),
            "in-sample" => Ok(SplitMode::InSample),
            other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LeaderMetric {
    MacroF1,
    Accuracy,
    ClassF1(String),
}

impl LeaderMetric {
    fn value(&self, r: &ClassificationReport) -> f64 {
        match self {
            LeaderMetric::MacroF1 => r.macro_f1(),
            LeaderMetric::Accuracy => r.accuracy,
            LeaderMetric::ClassF1(l) => r.f1(l).unwrap_or(0.0),
        }
    }
}

impl fmt::Display for LeaderMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LeaderMetric::MacroF1 => f.write_str("macro-f1"),
            LeaderMetric::Accuracy => f.write_str("accuracy"),
            LeaderMetric::ClassF1(l) => write!(f, "f1:{l}"),
        }
    }
}

impl FromStr for LeaderMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "macro-f1" => Ok(LeaderMetric::MacroF1),
            "accuracy" => Ok(LeaderMetric::Accuracy),
            _ => match s.strip_prefix("f1:") {
                Some(l) if !l.is_empty() => Ok(LeaderMetric::ClassF1(l.to_owned())),
                _ => Err(Error::InvalidArgument(format!("unknown metric `{s}`"))),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct LeaderboardOptions {
    pub split: SplitMode,
    pub metric: LeaderMetric,
    pub gmm: GmmOptions,
    /// Look up each neuron's MaxCorr/MinCorr/LinReg rank (needs 2+ models).
    pub cross_reference: bool,
    pub linreg: LinRegOptions,
}

impl Default for LeaderboardOptions {
    fn default() -> Self {
        LeaderboardOptions {
            split: SplitMode::EvenOdd,
            metric: LeaderMetric::MacroF1,
            gmm: GmmOptions::default(),
            cross_reference: true,
            linreg: LinRegOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronProbe {
    pub neuron: usize,
    pub metric: f64,
    pub accuracy: f64,
    pub macro_f1: f64,
    /// `None` for classes absent from the evaluation labels.
    pub f1: BTreeMap<String, Option<f64>>,
    pub maxcorr_rank: Option<usize>,
    pub mincorr_rank: Option<usize>,
    pub linreg_rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub model: String,
    pub property: String,
    pub metric: String,
    pub split: SplitMode,
    pub classes: Vec<String>,
    pub dropped_classes: Vec<String>,
    pub fit_rows: usize,
    pub eval_rows: usize,
    pub best: Option<usize>,
    pub second: Option<usize>,
    /// Constant neurons (their predictions fall back to the class priors).
    pub flagged: Vec<usize>,
    /// Sorted by metric, descending; ties go to the lower neuron id.
    pub entries: Vec<NeuronProbe>,
}

impl ProbeReport {
    pub fn entry(&self, neuron: usize) -> Option<&NeuronProbe> {
        self.entries.iter().find(|e| e.neuron == neuron)
    }

    pub fn rank_of(&self, neuron: usize) -> Option<usize> {
        self.entries.iter().position(|e| e.neuron == neuron).map(|p| p + 1)
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<usize>| v.map(|r| r.to_string()).unwrap_or_default();
        let mut out = String::from("neuron,metric");
        for c in &self.classes {
            out.push_str(&format!(",f1:{c}"));
        }
        out.push_str(",maxcorr_rank,mincorr_rank,linreg_rank\n");
        for e in &self.entries {
            out.push_str(&format!("{},{}", e.neuron, e.metric));
            for c in &self.classes {
                let f = e.f1.get(c).copied().flatten();
                out.push_str(&format!(",{}", f.map(|v| v.to_string()).unwrap_or_default()));
            }
            out.push_str(&format!(
                ",{},{},{}\n",
                opt(e.maxcorr_rank),
                opt(e.mincorr_rank),
                opt(e.linreg_rank)
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Fits and scores a single-neuron Gaussian classifier for every neuron of
/// model `m` against token labels keyed by corpus row.
pub fn leaderboard_from_labels(
    ds: &ActivationDataset,
    m: &str,
    property: &str,
    labels: &BTreeMap<usize, String>,
    opts: &LeaderboardOptions,
) -> Result<ProbeReport> {
    let record = ds.model(m)?;
    let x = &record.activations;
    if labels.is_empty() {
        return Err(Error::InvalidArgument(format!("no labeled tokens for `{property}`")));
    }
    let corpus = ds.corpus();
    let mut fit = Vec::new();
    let mut eval = Vec::new();
    for (&row, label) in labels {
        if row >= x.rows() {
            return Err(Error::OutOfBounds(format!("label row {row} outside {} tokens", x.rows())));
        }
        match opts.split {
            SplitMode::InSample => {
                fit.push((row, label.clone()));
                eval.push((row, label.clone()));
            }
            SplitMode::EvenOdd => {
                let (s, _) = corpus.locate(row)?;
                if s % 2 == 0 { &mut fit } else { &mut eval }.push((row, label.clone()));
            }
        }
    }
    if eval.is_empty() || fit.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "`{property}` labels leave a split empty ({} fit, {} evaluation tokens)",
            fit.len(),
            eval.len()
        )));
    }
    if let LeaderMetric::ClassF1(l) = &opts.metric {
        if !eval.iter().any(|(_, g)| g == l) {
            return Err(Error::InvalidArgument(format!("class `{l}` absent from the evaluation labels")));
        }
    }
    let fit_labels: Vec<String> = fit.iter().map(|(_, l)| l.clone()).collect();
    let eval_labels: Vec<String> = eval.iter().map(|(_, l)| l.clone()).collect();

    let results = (0..x.cols())
        .into_par_iter()
        .map(|n| {
            let fit_rows: Vec<Vec<f64>> = fit.iter().map(|&(r, _)| vec![x.get(r, n) as f64]).collect();
            let eval_rows: Vec<Vec<f64>> = eval.iter().map(|&(r, _)| vec![x.get(r, n) as f64]).collect();
            let model = GaussianClassModel::fit(vec![n], &fit_rows, &fit_labels, &opts.gmm)?;
            let report = gmm_score(&model, &eval_rows, &eval_labels)?;
            Ok((model.dropped, report))
        })
        .collect::<Result<Vec<_>>>()?;

    let classes = results.first().map(|(_, r)| r.labels.clone()).unwrap_or_default();
    let dropped_classes = results.first().map(|(d, _)| d.clone()).unwrap_or_default();

    let refs: Option<[NeuronRanking; 3]> = if opts.cross_reference && ds.num_models() >= 2 {
        Some([rank_maxcorr(ds, m)?, rank_mincorr(ds, m)?, rank_linreg(ds, m, opts.linreg)?])
    } else {
        None
    };
    let rank_lookup = |r: &NeuronRanking| {
        let mut pos = vec![0; r.len()];
        for (i, u) in r.units().enumerate() {
            pos[u] = i + 1;
        }
        pos
    };
    let positions: Option<Vec<Vec<usize>>> = refs.as_ref().map(|rs| rs.iter().map(rank_lookup).collect());

    let mut entries: Vec<NeuronProbe> = results
        .iter()
        .enumerate()
        .map(|(n, (_, r))| {
            let rank = |i: usize| positions.as_ref().map(|p| p[i][n]);
            NeuronProbe {
                neuron: n,
                metric: opts.metric.value(r),
                accuracy: r.accuracy,
                macro_f1: r.macro_f1(),
                f1: r.per_class.iter().map(|c| (c.label.clone(), c.f1)).collect(),
                maxcorr_rank: rank(0),
                mincorr_rank: rank(1),
                linreg_rank: rank(2),
            }
        })
        .collect();
    entries.sort_by(|a, b| b.metric.total_cmp(&a.metric).then(a.neuron.cmp(&b.neuron)));

    Ok(ProbeReport {
        model: m.to_owned(),
        property: property.to_owned(),
        metric: opts.metric.to_string(),
        split: opts.split,
        classes,
        dropped_classes,
        fit_rows: fit.len(),
        eval_rows: eval.len(),
        best: entries.first().map(|e| e.neuron),
        second: entries.get(1).map(|e| e.neuron),
        flagged: record.constant_columns.clone(),
        entries,
    })
}

/// [`leaderboard_from_labels`] for an annotation over the dataset's corpus.
pub fn neuron_leaderboard(
    ds: &ActivationDataset,
    m: &str,
    annotation: &PropertyAnnotation,
    opts: &LeaderboardOptions,
) -> Result<ProbeReport> {
    let labels = annotation
        .by_row(ds.corpus())?
        .into_iter()
        .map(|(r, l)| (r, l.to_owned()))
        .collect();
    leaderboard_from_labels(ds, m, &annotation.property, &labels, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ActivationMatrix, ModelRecord, Side, TokenCorpus};
    use crate::synth::Rng;
    use proptest::prelude::*;

    #[test]
    fn deterministic_position_function_explains_everything() {
        let corpus = TokenCorpus::from_text("a b c d\ne f\ng h i\n").unwrap();
        let values: Vec<f64> = corpus.positions().iter().map(|&p| 0.1 * p as f64 + 0.3).collect();
        let s = explained_variance_by(&values, &corpus.positions()).unwrap();
        assert_eq!(s.fraction, 1.0);
        assert_eq!(s.groups, 4);
    }

    #[test]
    fn iid_noise_with_large_groups_explains_little() {
        let mut rng = Rng::new(13);
        let values: Vec<f64> = (0..20_000).map(|_| rng.normal()).collect();
        let keys: Vec<usize> = (0..20_000).map(|i| i % 10).collect();
        let s = explained_variance_by(&values, &keys).unwrap();
        assert!(s.fraction <= 0.01, "{}", s.fraction);
        assert_eq!(s.small_group_mass, 0.0);
    }

    #[test]
    fn equal_group_means_explain_nothing() {
        let values = [1.0, 3.0, 1.0, 3.0];
        let s = explained_variance_by(&values, &["a", "a", "b", "b"]).unwrap();
        assert!(s.fraction.abs() < 1e-12);
        assert!(explained_variance_by(&[2.0, 2.0], &[0, 1]).is_err());
        assert_eq!(explained_variance_by(&values, &[0, 1, 2, 3]).unwrap().small_group_mass, 1.0);
    }

    #[test]
    fn percent_formatting() {
        assert_eq!(format_percent(0.92), "92%");
        assert_eq!(format_percent(0.10), "10%");
        assert_eq!(format_percent(0.053), "5.3%");
        assert_eq!(format_percent(0.0041), "0.41%");
        assert_eq!(format_percent(1.0), "100%");
        assert_eq!(format_percent(0.0), "0%");
    }

    fn probe_dataset(seed: u64) -> (ActivationDataset, PropertyAnnotation) {
        let mut rng = Rng::new(seed);
        let sentences: Vec<Vec<String>> = (0..200)
            .map(|s| (0..8).map(|k| format!("w{}", (s + k) % 13)).collect())
            .collect();
        let corpus = TokenCorpus::new(sentences).unwrap();
        let t = corpus.num_tokens();
        let mut ann = PropertyAnnotation::new("flag", Side::Source);
        let mut labels = Vec::with_capacity(t);
        for s in 0..corpus.num_sentences() {
            for k in 0..corpus.sentence_len(s) {
                let l = if rng.uniform() < 0.4 { "on" } else { "off" };
                ann.insert(s, k, l).unwrap();
                labels.push(l);
            }
        }
        let d = 6;
        let mut data = Vec::with_capacity(t * d);
        for l in &labels {
            let y = if *l == "on" { 1.0 } else { -1.0 };
            for n in 0..d {
                let v = match n {
                    2 => 3.0 * y + 0.1 * rng.normal(),
                    4 => 3.0 * y + 0.1 * rng.normal(),
                    5 => 0.0,
                    _ => rng.normal(),
                };
                data.push(v as f32);
            }
        }
        let a = ActivationMatrix::from_vec(t, d, data.clone()).unwrap();
        let b = ActivationMatrix::from_vec(t, d, data.iter().map(|v| v * 2.0).collect()).unwrap();
        let ds = ActivationDataset::new(corpus, vec![ModelRecord::new("a", a), ModelRecord::new("b", b)]).unwrap();
        (ds, ann)
    }

    #[test]
    fn redundant_neurons_share_the_top() {
        let (ds, ann) = probe_dataset(2);
        let r = neuron_leaderboard(&ds, "a", &ann, &LeaderboardOptions::default()).unwrap();
        let top: Vec<usize> = r.entries[..2].iter().map(|e| e.neuron).collect();
        assert_eq!(top, vec![2, 4]);
        assert!(r.entries[0].metric >= 0.99);
        assert!((r.entries[0].metric - r.entries[1].metric).abs() <= 0.05);
        assert!(r.entries[2].metric <= 0.6);
        assert_eq!(r.flagged, vec![5]);
        assert_eq!(r.classes, vec!["off".to_string(), "on".to_string()]);
        assert!(r.fit_rows + r.eval_rows == ds.num_tokens());
        assert!(r.entries.iter().all(|e| e.maxcorr_rank.is_some()));
        let csv = r.to_csv();
        assert!(csv.starts_with("neuron,metric,f1:off,f1:on,maxcorr_rank,mincorr_rank,linreg_rank\n2,"));
    }

    #[test]
    fn empty_annotation_rejected() {
        let (ds, _) = probe_dataset(2);
        let empty = PropertyAnnotation::new("none", Side::Source);
        assert!(neuron_leaderboard(&ds, "a", &empty, &LeaderboardOptions::default()).is_err());
    }

    #[test]
    fn metric_parsing() {
        assert_eq!("macro-f1".parse::<LeaderMetric>().unwrap(), LeaderMetric::MacroF1);
        assert_eq!("f1:in".parse::<LeaderMetric>().unwrap(), LeaderMetric::ClassF1("in".into()));
        assert!("f1:".parse::<LeaderMetric>().is_err());
        assert_eq!(LeaderMetric::ClassF1("x".into()).to_string(), "f1:x");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn refinement_never_decreases_fraction(seed in 0u64..100_000, coarse in 1usize..6, split in 2usize..4) {
            let mut rng = Rng::new(seed);
            let n = 200;
            let values: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let coarse_keys: Vec<usize> = (0..n).map(|_| rng.below(coarse)).collect();
            let fine_keys: Vec<(usize, usize)> = coarse_keys.iter().map(|&k| (k, rng.below(split))).collect();
            let c = explained_variance_by(&values, &coarse_keys).unwrap().fraction;
            let f = explained_variance_by(&values, &fine_keys).unwrap().fraction;
            prop_assert!(f >= c - 1e-12, "coarse {} fine {}", c, f);
            prop_assert!((0.0..=1.0).contains(&f));
        }
    }
}
