//! Steering a property through neuron modification: find neurons that
//! predict a target-side label through word alignments, set them to
//! `alpha = mu1 + beta (mu1 - mu2)` on chosen tokens, and score whether the
//! aligned output words flipped to the desired label.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dataset::{ActivationDataset, ActivationMatrix, AlignmentSet, PropertyAnnotation, Side, TokenCorpus};
use crate::error::{Error, Result};
use crate::probe::{leaderboard_from_labels, LeaderboardOptions, ProbeReport};

/// Source-token labels obtained through alignments, with accounting for
/// the tokens that could not be labeled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedLabels {
    /// Keyed by source corpus row.
    pub labels: BTreeMap<usize, String>,
    /// Aligned to target words with more than one distinct label.
    pub conflicts: usize,
    /// Aligned only to unlabeled target words.
    pub unlabeled: usize,
    pub unaligned: usize,
    /// Skipped by the source-side filter.
    pub filtered: usize,
}

/// Labels each source token with the label of its aligned target words.
/// With `source_filter`, only tokens carrying a source-side label are
/// considered.
pub fn project_labels(
    source: &TokenCorpus,
    target_labels: &PropertyAnnotation,
    alignments: &AlignmentSet,
    source_filter: Option<&PropertyAnnotation>,
) -> Result<ProjectedLabels> {
    if target_labels.side != Side::Target {
        log::warn!("annotation `{}` is not marked as target-side", target_labels.property);
    }
    if alignments.num_sentences() != source.num_sentences() {
        return Err(Error::Corpus(format!(
            "alignments cover {} sentences, source corpus has {}",
            alignments.num_sentences(),
            source.num_sentences()
        )));
    }
    let mut out = ProjectedLabels {
        labels: BTreeMap::new(),
        conflicts: 0,
        unlabeled: 0,
        unaligned: 0,
        filtered: 0,
    };
    for s in 0..source.num_sentences() {
        for k in 0..source.sentence_len(s) {
            if source_filter.is_some_and(|f| f.get(s, k).is_none()) {
                out.filtered += 1;
                continue;
            }
            let mut aligned = false;
            let mut seen = BTreeSet::new();
            for t in alignments.targets_of(s, k) {
                aligned = true;
                if let Some(l) = target_labels.get(s, t) {
                    seen.insert(l);
                }
            }
            match seen.len() {
                0 if aligned => out.unlabeled += 1,
                0 => out.unaligned += 1,
                1 => {
                    let label = seen.into_iter().next().unwrap_or_default();
                    out.labels.insert(source.row(s, k)?, label.to_owned());
                }
                _ => out.conflicts += 1,
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetPredictive {
    pub report: ProbeReport,
    pub pairs: usize,
    pub conflicts: usize,
    pub unlabeled: usize,
    pub unaligned: usize,
}

/// Ranks every neuron of model `m` by how well it predicts the target-side
/// label of the word aligned to each source token.
pub fn target_predictive_neurons(
    ds: &ActivationDataset,
    m: &str,
    target_labels: &PropertyAnnotation,
    alignments: &AlignmentSet,
    source_filter: Option<&PropertyAnnotation>,
    opts: &LeaderboardOptions,
) -> Result<TargetPredictive> {
    let projected = project_labels(ds.corpus(), target_labels, alignments, source_filter)?;
    if projected.labels.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no aligned labeled pairs for `{}`",
            target_labels.property
        )));
    }
    let report = leaderboard_from_labels(ds, m, &target_labels.property, &projected.labels, opts)?;
    Ok(TargetPredictive {
        report,
        pairs: projected.labels.len(),
        conflicts: projected.conflicts,
        unlabeled: projected.unlabeled,
        unaligned: projected.unaligned,
    })
}

/// `mu1 + beta (mu1 - mu2)`.
pub fn compute_alpha(mu1: f64, mu2: f64, beta: f64) -> f64 {
    mu1 + beta * (mu1 - mu2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedNeuron {
    pub id: usize,
    pub mu1: f64,
    pub mu2: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPlan {
    pub property: String,
    pub from: String,
    pub to: String,
    pub neurons: Vec<PlannedNeuron>,
    pub beta: f64,
    /// `(sentence, token)` pairs to modify.
    pub positions: Vec<(usize, usize)>,
}

impl ControlPlan {
    pub fn validate(&self, corpus: &TokenCorpus, neurons: usize) -> Result<()> {
        if self.neurons.is_empty() {
            return Err(Error::InvalidArgument("plan modifies no neurons".into()));
        }
        let mut ids = BTreeSet::new();
        for n in &self.neurons {
            if n.id >= neurons {
                return Err(Error::Dimension(format!("plan neuron {} outside {neurons} neurons", n.id)));
            }
            if !ids.insert(n.id) {
                return Err(Error::InvalidArgument(format!("plan lists neuron {} twice", n.id)));
            }
            if compute_alpha(n.mu1, n.mu2, self.beta).to_bits() != n.alpha.to_bits() {
                return Err(Error::InvalidArgument(format!(
                    "alpha of neuron {} is not mu1 + beta (mu1 - mu2)",
                    n.id
                )));
            }
        }
        let mut seen = BTreeSet::new();
        for &(s, t) in &self.positions {
            corpus.row(s, t)?;
            if !seen.insert((s, t)) {
                return Err(Error::InvalidArgument(format!("plan lists position ({s}, {t}) twice")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone)]
pub struct PlanRequest<'a> {
    pub property: &'a str,
    pub from: &'a str,
    pub to: &'a str,
    pub neurons: &'a [usize],
    pub beta: f64,
}

/// Mean activation of `neuron` over the rows labeled `label`.
pub fn class_mean(x: &ActivationMatrix, neuron: usize, labels: &BTreeMap<usize, String>, label: &str) -> Result<f64> {
    let values: Vec<f64> = labels
        .iter()
        .filter(|(_, l)| l.as_str() == label)
        .map(|(&r, _)| x.get(r, neuron) as f64)
        .collect();
    if values.is_empty() {
        return Err(Error::InvalidArgument(format!("no tokens labeled `{label}`")));
    }
    Ok(crate::numerics::mean(&values))
}

/// Plan that sets each requested neuron to its own `alpha` on every token
/// labeled `from`. Class means come from `labels` (keyed by corpus row).
pub fn build_plan(
    ds: &ActivationDataset,
    m: &str,
    labels: &BTreeMap<usize, String>,
    req: &PlanRequest<'_>,
) -> Result<ControlPlan> {
    let x = &ds.model(m)?.activations;
    if req.from == req.to {
        return Err(Error::InvalidArgument("from and to labels are identical".into()));
    }
    if !req.beta.is_finite() {
        return Err(Error::InvalidArgument("beta must be finite".into()));
    }
    let neurons = req
        .neurons
        .iter()
        .map(|&id| {
            if id >= x.cols() {
                return Err(Error::Dimension(format!("neuron {id} outside model `{m}` ({} neurons)", x.cols())));
            }
            let mu1 = class_mean(x, id, labels, req.from)?;
            let mu2 = class_mean(x, id, labels, req.to)?;
            Ok(PlannedNeuron {
                id,
                mu1,
                mu2,
                alpha: compute_alpha(mu1, mu2, req.beta),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let positions = labels
        .iter()
        .filter(|(_, l)| l.as_str() == req.from)
        .map(|(&r, _)| ds.corpus().locate(r))
        .collect::<Result<Vec<_>>>()?;
    let plan = ControlPlan {
        property: req.property.to_owned(),
        from: req.from.to_owned(),
        to: req.to.to_owned(),
        neurons,
        beta: req.beta,
        positions,
    };
    plan.validate(ds.corpus(), x.cols())?;
    Ok(plan)
}

/// Copy of `x` with every planned (position, neuron) entry set to that
/// neuron's alpha (rounded to `f32`).
pub fn apply_control(x: &ActivationMatrix, corpus: &TokenCorpus, plan: &ControlPlan) -> Result<ActivationMatrix> {
    if x.rows() != corpus.num_tokens() {
        return Err(Error::Dimension(format!(
            "activations have {} rows, corpus {} tokens",
            x.rows(),
            corpus.num_tokens()
        )));
    }
    plan.validate(corpus, x.cols())?;
    let mut out = x.clone();
    for &(s, t) in &plan.positions {
        let row = corpus.row(s, t)?;
        for n in &plan.neurons {
            out.set(row, n.id, n.alpha as f32);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    pub property: String,
    pub from_value: String,
    pub to_value: String,
    /// Aligned only to words labeled `to`.
    #[serde(rename = "to")]
    pub to_count: usize,
    #[serde(rename = "from")]
    pub from_count: usize,
    pub both: usize,
    pub neither: usize,
    pub total: usize,
    /// `to / total`; 0 when nothing was modified.
    pub rate: f64,
    /// Modified positions with no alignment links (counted as neither).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub uncovered: Vec<(usize, usize)>,
}

impl SuccessReport {
    pub fn from_counts(to: usize, from: usize, both: usize, neither: usize) -> Self {
        let total = to + from + both + neither;
        SuccessReport {
            property: String::new(),
            from_value: String::new(),
            to_value: String::new(),
            to_count: to,
            from_count: from,
            both,
            neither,
            total,
            rate: if total == 0 { 0.0 } else { to as f64 / total as f64 },
            uncovered: Vec::new(),
        }
    }

    /// Success rate as a percentage with one decimal.
    pub fn rate_percent(&self) -> String {
        format!("{:.1}%", 100.0 * self.rate)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Classifies each modified source token by the union of labels on its
/// aligned output words.
pub fn score_success(output_tags: &PropertyAnnotation, alignments: &AlignmentSet, plan: &ControlPlan) -> Result<SuccessReport> {
    let (mut to, mut from, mut both, mut neither) = (0, 0, 0, 0);
    let mut uncovered = Vec::new();
    for &(s, k) in &plan.positions {
        let mut any_link = false;
        let (mut has_to, mut has_from) = (false, false);
        if s < alignments.num_sentences() {
            for t in alignments.targets_of(s, k) {
                any_link = true;
                match output_tags.get(s, t) {
                    Some(l) if l == plan.to => has_to = true,
                    Some(l) if l == plan.from => has_from = true,
                    _ => {}
                }
            }
        }
        if !any_link {
            uncovered.push((s, k));
        }
        match (has_to, has_from) {
            (true, true) => both += 1,
            (true, false) => to += 1,
            (false, true) => from += 1,
            (false, false) => neither += 1,
        }
    }
    if !uncovered.is_empty() {
        log::warn!("{} modified tokens have no alignment links", uncovered.len());
    }
    let mut report = SuccessReport::from_counts(to, from, both, neither);
    report.property = plan.property.clone();
    report.from_value = plan.from.clone();
    report.to_value = plan.to.clone();
    report.uncovered = uncovered;
    Ok(report)
}

/// Stand-in decoder: emits `above` when one neuron exceeds a threshold,
/// `below` otherwise, one output word per source token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDecoder {
    pub property: String,
    pub neuron: usize,
    pub threshold: f64,
    pub above: String,
    pub below: String,
}

impl ThresholdDecoder {
    /// Thresholds at the midpoint of the two class means and emits the label
    /// whose mean lies on the same side.
    pub fn from_plan(plan: &ControlPlan, neuron: usize) -> Result<Self> {
        let n = plan
            .neurons
            .iter()
            .find(|n| n.id == neuron)
            .ok_or_else(|| Error::InvalidArgument(format!("neuron {neuron} is not in the plan")))?;
        let (above, below) = if n.mu2 > n.mu1 {
            (plan.to.clone(), plan.from.clone())
        } else {
            (plan.from.clone(), plan.to.clone())
        };
        Ok(ThresholdDecoder {
            property: plan.property.clone(),
            neuron,
            threshold: 0.5 * (n.mu1 + n.mu2),
            above,
            below,
        })
    }

    pub fn decode(&self, x: &ActivationMatrix, corpus: &TokenCorpus) -> Result<PropertyAnnotation> {
        if self.neuron >= x.cols() {
            return Err(Error::Dimension(format!(
                "decoder reads neuron {} of a {}-neuron model",
                self.neuron,
                x.cols()
            )));
        }
        let mut tags = PropertyAnnotation::new(self.property.clone(), Side::Target);
        for s in 0..corpus.num_sentences() {
            for k in 0..corpus.sentence_len(s) {
                let v = x.get(corpus.row(s, k)?, self.neuron) as f64;
                tags.insert(s, k, if v > self.threshold { &self.above } else { &self.below })?;
            }
        }
        Ok(tags)
    }
}

/// Applies `plan` (if any) to model `m` and decodes it, returning output
/// tags and the identity alignment.
pub fn synthetic_decoder_roundtrip(
    ds: &ActivationDataset,
    m: &str,
    plan: Option<&ControlPlan>,
    decoder: &ThresholdDecoder,
) -> Result<(PropertyAnnotation, AlignmentSet)> {
    let x = &ds.model(m)?.activations;
    let tags = match plan {
        Some(p) => decoder.decode(&apply_control(x, ds.corpus(), p)?, ds.corpus())?,
        None => decoder.decode(x, ds.corpus())?,
    };
    Ok((tags, AlignmentSet::identity(ds.corpus())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ModelRecord;
    use crate::synth::Rng;
    use proptest::prelude::*;

    #[test]
    fn alpha_arithmetic() {
        assert_eq!(compute_alpha(0.4, -2.0, 0.0), 0.4);
        assert_eq!(compute_alpha(1.0, -1.0, 1.0), 3.0);
        assert!((compute_alpha(0.5, 0.1, 2.0) - 1.3).abs() < 1e-15);
    }

    #[test]
    fn tense_table_rates() {
        let past_to_present = SuccessReport::from_counts(820, 85, 9, 311);
        assert_eq!(past_to_present.total, 1225);
        assert_eq!(past_to_present.rate_percent(), "66.9%");
        assert_eq!(format!("{:.0}%", 100.0 * past_to_present.rate), "67%");
        let present_to_past = SuccessReport::from_counts(1586, 256, 30, 1363);
        assert_eq!(present_to_past.total, 3235);
        assert_eq!(present_to_past.rate_percent(), "49.0%");
        assert_eq!(SuccessReport::from_counts(0, 0, 0, 0).rate, 0.0);
    }

    /// Two sentences per label pattern; neuron 1 tracks the target label
    /// (`past` at -1, `pres` at +1), the others are noise.
    fn fixture(seed: u64, sentences: usize) -> (ActivationDataset, PropertyAnnotation, AlignmentSet) {
        let mut rng = Rng::new(seed);
        let corpus = TokenCorpus::new((0..sentences).map(|s| (0..5).map(|k| format!("t{s}_{k}")).collect()).collect()).unwrap();
        let mut tags = PropertyAnnotation::new("tense", Side::Target);
        let d = 4;
        let mut data = Vec::new();
        for s in 0..sentences {
            for k in 0..5 {
                let past = rng.uniform() < 0.5;
                tags.insert(s, k, if past { "past" } else { "pres" }).unwrap();
                for n in 0..d {
                    let v = if n == 1 {
                        (if past { -1.0 } else { 1.0 }) + 0.05 * rng.normal()
                    } else {
                        rng.normal()
                    };
                    data.push(v as f32);
                }
            }
        }
        let x = ActivationMatrix::from_vec(corpus.num_tokens(), d, data).unwrap();
        let align = AlignmentSet::identity(&corpus);
        (ActivationDataset::new(corpus, vec![ModelRecord::new("m", x)]).unwrap(), tags, align)
    }

    fn opts() -> LeaderboardOptions {
        LeaderboardOptions {
            cross_reference: false,
            ..LeaderboardOptions::default()
        }
    }

    #[test]
    fn finds_the_planted_neuron_through_alignments() {
        let (ds, tags, align) = fixture(1, 100);
        let r = target_predictive_neurons(&ds, "m", &tags, &align, None, &opts()).unwrap();
        assert_eq!(r.report.best, Some(1));
        assert!(r.report.entries[0].metric >= 0.99);
        assert_eq!(r.pairs, ds.num_tokens());
    }

    #[test]
    fn empty_alignments_have_no_pairs() {
        let (ds, tags, _) = fixture(1, 10);
        let empty = AlignmentSet::new(vec![Vec::new(); 10]).unwrap();
        assert!(matches!(
            target_predictive_neurons(&ds, "m", &tags, &empty, None, &opts()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn conflicting_many_to_one_counts_as_both() {
        let corpus = TokenCorpus::from_text("a b\n").unwrap();
        let mut tags = PropertyAnnotation::new("p", Side::Target);
        tags.insert(0, 0, "x").unwrap();
        tags.insert(0, 1, "y").unwrap();
        let align = AlignmentSet::new(vec![vec![(0, 0), (0, 1), (1, 1)]]).unwrap();
        let p = project_labels(&corpus, &tags, &align, None).unwrap();
        assert_eq!(p.conflicts, 1);
        assert_eq!(p.labels.len(), 1);
        assert_eq!(p.labels[&1], "y");
    }

    fn plan_for(ds: &ActivationDataset, tags: &PropertyAnnotation, beta: f64, neurons: &[usize]) -> ControlPlan {
        let labels = tags.by_row(ds.corpus()).unwrap().into_iter().map(|(r, l)| (r, l.to_owned())).collect();
        let req = PlanRequest {
            property: "tense",
            from: "past",
            to: "pres",
            neurons,
            beta,
        };
        build_plan(ds, "m", &labels, &req).unwrap()
    }

    #[test]
    fn control_loop_with_threshold_decoder() {
        let (ds, tags, _) = fixture(3, 60);
        // mu1 ~ -1, mu2 ~ +1: alpha crosses the midpoint once beta < -0.5.
        let crossing = plan_for(&ds, &tags, -1.0, &[1]);
        let decoder = ThresholdDecoder::from_plan(&crossing, 1).unwrap();
        let (out, align) = synthetic_decoder_roundtrip(&ds, "m", Some(&crossing), &decoder).unwrap();
        let r = score_success(&out, &align, &crossing).unwrap();
        assert_eq!(r.rate, 1.0);
        assert_eq!(r.total, crossing.positions.len());

        let (base_out, base_align) = synthetic_decoder_roundtrip(&ds, "m", None, &decoder).unwrap();
        let baseline = score_success(&base_out, &base_align, &crossing).unwrap();
        let zero = plan_for(&ds, &tags, 0.0, &[1]);
        let (out, align) = synthetic_decoder_roundtrip(&ds, "m", Some(&zero), &decoder).unwrap();
        assert_eq!(score_success(&out, &align, &zero).unwrap().rate, baseline.rate);

        let ignored = plan_for(&ds, &tags, -3.0, &[2]);
        let (out, align) = synthetic_decoder_roundtrip(&ds, "m", Some(&ignored), &decoder).unwrap();
        assert_eq!(score_success(&out, &align, &ignored).unwrap().rate, baseline.rate);
    }

    #[test]
    fn decoder_orientation_follows_class_means() {
        let (ds, tags, _) = fixture(3, 60);
        let up = plan_for(&ds, &tags, 0.0, &[1]);
        let d = ThresholdDecoder::from_plan(&up, 1).unwrap();
        assert_eq!((d.above.as_str(), d.below.as_str()), ("pres", "past"));

        let mut down = up.clone();
        down.from = "pres".into();
        down.to = "past".into();
        let n = &mut down.neurons[0];
        std::mem::swap(&mut n.mu1, &mut n.mu2);
        let midpoint = 0.5 * (n.mu1 + n.mu2);
        let d = ThresholdDecoder::from_plan(&down, 1).unwrap();
        assert_eq!((d.above.as_str(), d.below.as_str()), ("pres", "past"));
        assert_eq!(d.threshold, midpoint);
    }

    #[test]
    fn apply_touches_exactly_planned_entries() {
        let (ds, tags, _) = fixture(4, 20);
        let plan = plan_for(&ds, &tags, 0.7, &[0, 1, 3]);
        let x = &ds.model("m").unwrap().activations;
        let y = apply_control(x, ds.corpus(), &plan).unwrap();
        assert_eq!(x.count_differences(&y).unwrap(), plan.positions.len() * 3);
        assert_eq!(apply_control(&y, ds.corpus(), &plan).unwrap(), y);
        let mut none = plan.clone();
        none.positions.clear();
        assert_eq!(&apply_control(x, ds.corpus(), &none).unwrap(), x);
    }

    #[test]
    fn single_entry_set_to_alpha() {
        let corpus = TokenCorpus::from_text("a b\n").unwrap();
        let x = ActivationMatrix::zeros(2, 3);
        let plan = ControlPlan {
            property: "p".into(),
            from: "x".into(),
            to: "y".into(),
            neurons: vec![PlannedNeuron { id: 2, mu1: 0.7, mu2: 0.0, alpha: 0.7 }],
            beta: 0.0,
            positions: vec![(0, 1)],
        };
        let y = apply_control(&x, &corpus, &plan).unwrap();
        assert_eq!(x.count_differences(&y).unwrap(), 1);
        assert_eq!(y.get(1, 2), 0.7f32);
        let mut bad = plan.clone();
        bad.neurons[0].alpha = 0.8;
        assert!(apply_control(&x, &corpus, &bad).is_err());
        assert!(apply_control(&ActivationMatrix::zeros(2, 2), &corpus, &plan).is_err());
    }

    #[test]
    fn plan_json_shape() {
        let plan = ControlPlan {
            property: "p".into(),
            from: "x".into(),
            to: "y".into(),
            neurons: vec![PlannedNeuron { id: 2, mu1: 1.0, mu2: -1.0, alpha: 3.0 }],
            beta: 1.0,
            positions: vec![(0, 1)],
        };
        let v: serde_json::Value = serde_json::from_str(&plan.to_json().unwrap()).unwrap();
        assert_eq!(v["positions"], serde_json::json!([[0, 1]]));
        assert_eq!(v["neurons"][0], serde_json::json!({"id": 2, "mu1": 1.0, "mu2": -1.0, "alpha": 3.0}));
        assert_eq!(ControlPlan::from_json(&plan.to_json().unwrap()).unwrap(), plan);
    }

    #[test]
    fn uncovered_positions_are_neither_and_flagged() {
        let tags = PropertyAnnotation::new("p", Side::Target);
        let align = AlignmentSet::new(vec![vec![]]).unwrap();
        let plan = ControlPlan {
            property: "p".into(),
            from: "x".into(),
            to: "y".into(),
            neurons: vec![PlannedNeuron { id: 0, mu1: 0.0, mu2: 0.0, alpha: 0.0 }],
            beta: 0.0,
            positions: vec![(0, 0), (0, 1)],
        };
        let r = score_success(&tags, &align, &plan).unwrap();
        assert_eq!((r.neither, r.total, r.rate), (2, 2, 0.0));
        assert_eq!(r.uncovered.len(), 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn counts_partition_and_ignore_link_order(seed in 0u64..10_000) {
            let mut rng = Rng::new(seed);
            let n = 12;
            let mut tags = PropertyAnnotation::new("p", Side::Target);
            for t in 0..n {
                match rng.below(3) {
                    0 => tags.insert(0, t, "x").unwrap(),
                    1 => tags.insert(0, t, "y").unwrap(),
                    _ => {}
                }
            }
            let mut links: Vec<(usize, usize)> = (0..n).flat_map(|s| (0..n).map(move |t| (s, t))).filter(|_| rng.uniform() < 0.15).collect();
            let plan = ControlPlan {
                property: "p".into(), from: "x".into(), to: "y".into(),
                neurons: vec![PlannedNeuron { id: 0, mu1: 0.0, mu2: 0.0, alpha: 0.0 }],
                beta: 0.0,
                positions: (0..n).filter(|_| rng.uniform() < 0.6).map(|k| (0, k)).collect(),
            };
            let a = score_success(&tags, &AlignmentSet::new(vec![links.clone()]).unwrap(), &plan).unwrap();
            links.reverse();
            let b = score_success(&tags, &AlignmentSet::new(vec![links]).unwrap(), &plan).unwrap();
            prop_assert_eq!(a.to_count + a.from_count + a.both + a.neither, plan.positions.len());
            prop_assert_eq!(&a, &b);
            prop_assert!((0.0..=1.0).contains(&a.rate));
        }

        #[test]
        fn success_monotone_in_beta_towards_crossing(seed in 0u64..1000) {
            let (ds, tags, _) = fixture(seed, 20);
            let base = plan_for(&ds, &tags, 0.0, &[1]);
            let decoder = ThresholdDecoder::from_plan(&base, 1).unwrap();
            let mut last = -1.0;
            for beta in [0.0, -0.25, -0.45, -0.55, -0.75, -1.0, -2.0] {
                let plan = plan_for(&ds, &tags, beta, &[1]);
                let (out, align) = synthetic_decoder_roundtrip(&ds, "m", Some(&plan), &decoder).unwrap();
                let rate = score_success(&out, &align, &plan).unwrap().rate;
                prop_assert!(rate >= last);
                last = rate;
            }
            prop_assert_eq!(last, 1.0);
        }
    }
}
