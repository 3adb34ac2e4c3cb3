//! Synthetic multi-model activation datasets with planted ground truth.
//!
//! Generation order is fixed: corpus, then per-feature latent draws, then
//! background noise per model (row-major), then planted columns per model
//! and feature, and finally distributed plants which read other models'
//! finished columns. With the same seed the output is bitwise identical.

mod rng;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use rng::Rng;

use crate::dataset::{
    write_atomic, write_dataset, ActivationDataset, ActivationMatrix, AlignmentSet, ModelRecord, PropertyAnnotation, Side,
    TokenCorpus,
};
use crate::error::{Error, Result};
use crate::ranking::{NeuronRanking, RankMethod};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub models: Vec<SynthModel>,
    pub corpus: CorpusSpec,
    #[serde(default = "one")]
    pub background_sigma: f64,
    #[serde(default)]
    pub features: Vec<FeatureSpec>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SynthModel {
    pub id: String,
    pub neurons: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CorpusSpec {
    /// Total token count `T`.
    pub tokens: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    #[serde(default = "one")]
    pub zipf_exponent: f64,
    /// Probability that a sentence of length >= 4 contains one
    /// parenthesised span.
    #[serde(default)]
    pub paren_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    /// Standard deviation of the noise added to every planted neuron.
    pub sigma: f64,
    /// Planted neuron ids per model.
    pub targets: BTreeMap<String, Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeatureKind {
    /// One independent standard-normal latent per target slot; slot `j`
    /// of every listed model carries latent `j`.
    SharedLatent,
    /// Within-sentence index times `scale`.
    Position {
        #[serde(default = "one")]
        scale: f64,
    },
    /// A per-word standard-normal value times `scale`.
    TokenIdentity {
        #[serde(default = "one")]
        scale: f64,
    },
    /// Weighted sum of finished neurons of another model.
    Distributed {
        source_model: String,
        source_neurons: Vec<usize>,
        weights: Vec<f64>,
    },
    /// Per-token class label; the activation is the class mean.
    LabeledProperty {
        classes: Vec<ClassSpec>,
        #[serde(default)]
        assignment: LabelAssignment,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ClassSpec {
    pub label: String,
    pub mean: f64,
    #[serde(default = "one")]
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum LabelAssignment {
    /// Independent draw per token, proportional to class weights.
    #[default]
    Random,
    /// First class for tokens strictly inside `( ... )`, second class for
    /// every other token.
    Parenthesis,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GroundTruth {
    pub seed: u64,
    pub models: Vec<String>,
    pub features: Vec<PlantedFeature>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PlantedFeature {
    pub name: String,
    pub kind: FeatureKind,
    pub sigma: f64,
    pub targets: BTreeMap<String, Vec<usize>>,
    /// Noise-free signal per token row (one column per latent slot); empty
    /// for distributed plants.
    pub signal: Vec<Vec<f64>>,
    /// Class label per token row, for labelled properties.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl GroundTruth {
    pub fn feature(&self, name: &str) -> Result<&PlantedFeature> {
        self.features
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("no planted feature `{name}`")))
    }

    /// Scalar target per token: the row sum of the feature's signal.
    pub fn scalar_signal(&self, name: &str) -> Result<Vec<f64>> {
        let f = self.feature(name)?;
        if f.signal.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "feature `{name}` has no model-independent signal"
            )));
        }
        Ok(f.signal.iter().map(|row| row.iter().sum()).collect())
    }

    pub fn annotation(&self, name: &str, corpus: &TokenCorpus) -> Result<PropertyAnnotation> {
        let f = self.feature(name)?;
        let labels = f
            .labels
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("feature `{name}` has no labels")))?;
        let mut ann = PropertyAnnotation::new(name, Side::Source);
        for (row, label) in labels.iter().enumerate() {
            let (s, k) = corpus.locate(row)?;
            ann.insert(s, k, label.clone())?;
        }
        Ok(ann)
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.models.is_empty() {
            return bad("synth spec lists no models".into());
        }
        let mut dims = BTreeMap::new();
        for m in &self.models {
            if m.id.trim().is_empty() || m.neurons == 0 {
                return bad(format!("model `{}` needs a non-empty id and >= 1 neuron", m.id));
            }
            if dims.insert(m.id.as_str(), m.neurons).is_some() {
                return bad(format!("duplicate model id `{}`", m.id));
            }
        }
        let c = &self.corpus;
        if c.tokens < 2 || c.min_len == 0 || c.min_len > c.max_len || c.vocab_size == 0 {
            return bad("corpus needs tokens >= 2, 1 <= min_len <= max_len, vocab_size >= 1".into());
        }
        if !(c.zipf_exponent >= 0.0) || !(0.0..=1.0).contains(&c.paren_rate) {
            return bad("zipf_exponent must be >= 0 and paren_rate in [0, 1]".into());
        }
        if !(self.background_sigma > 0.0) {
            return bad("background_sigma must be > 0".into());
        }

        let mut used: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
        let mut distributed_targets: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
        let mut names = BTreeSet::new();
        for f in &self.features {
            if !names.insert(f.name.as_str()) {
                return bad(format!("duplicate feature name `{}`", f.name));
            }
            if !(f.sigma > 0.0) {
                return bad(format!("feature `{}`: sigma must be > 0", f.name));
            }
            if f.targets.is_empty() {
                return bad(format!("feature `{}` has no targets", f.name));
            }
            for (model, ids) in &f.targets {
                let Some(&d) = dims.get(model.as_str()) else {
                    return bad(format!("feature `{}` targets unknown model `{model}`", f.name));
                };
                if ids.is_empty() {
                    return bad(format!("feature `{}`: empty target list for `{model}`", f.name));
                }
                let set = used.entry(model.as_str()).or_default();
                for &id in ids {
                    if id >= d {
                        return bad(format!("feature `{}`: neuron {id} outside model `{model}` (D={d})", f.name));
                    }
                    if !set.insert(id) {
                        return bad(format!("neuron {id} of `{model}` planted twice"));
                    }
                }
            }
            match &f.kind {
                FeatureKind::SharedLatent => {
                    let lens: BTreeSet<usize> = f.targets.values().map(Vec::len).collect();
                    if lens.len() != 1 {
                        return bad(format!("shared latent `{}` needs equal target counts", f.name));
                    }
                }
                FeatureKind::Distributed {
                    source_model,
                    source_neurons,
                    weights,
                } => {
                    let Some(&d) = dims.get(source_model.as_str()) else {
                        return bad(format!("feature `{}`: unknown source model `{source_model}`", f.name));
                    };
                    if f.targets.contains_key(source_model) {
                        return bad(format!("feature `{}` cannot target its own source model", f.name));
                    }
                    if source_neurons.is_empty() || source_neurons.len() != weights.len() {
                        return bad(format!("feature `{}`: source neurons and weights must pair up", f.name));
                    }
                    if source_neurons.iter().any(|&n| n >= d) {
                        return bad(format!("feature `{}`: source neuron out of range", f.name));
                    }
                    for (m, ids) in &f.targets {
                        distributed_targets.entry(m.as_str()).or_default().extend(ids);
                    }
                }
                FeatureKind::LabeledProperty { classes, assignment } => {
                    let labels: BTreeSet<&str> = classes.iter().map(|c| c.label.as_str()).collect();
                    if classes.len() < 2 || labels.len() != classes.len() {
                        return bad(format!("feature `{}` needs >= 2 distinct classes", f.name));
                    }
                    if classes.iter().any(|c| !(c.weight > 0.0)) {
                        return bad(format!("feature `{}`: class weights must be > 0", f.name));
                    }
                    if *assignment == LabelAssignment::Parenthesis && classes.len() != 2 {
                        return bad(format!("feature `{}`: parenthesis assignment takes exactly 2 classes", f.name));
                    }
                }
                FeatureKind::Position { .. } | FeatureKind::TokenIdentity { .. } => {}
            }
        }
        for f in &self.features {
            if let FeatureKind::Distributed {
                source_model,
                source_neurons,
                ..
            } = &f.kind
            {
                if let Some(set) = distributed_targets.get(source_model.as_str()) {
                    if source_neurons.iter().any(|n| set.contains(n)) {
                        return bad(format!("feature `{}` reads another distributed plant", f.name));
                    }
                }
            }
        }
        Ok(())
    }
}

struct Corpus {
    corpus: TokenCorpus,
    vocab_index: Vec<usize>,
    inside_parens: Vec<bool>,
}

const OPEN: &str = "(";
const CLOSE: &str = ")";

fn generate_corpus(spec: &CorpusSpec, rng: &mut Rng) -> Result<Corpus> {
    let cumulative: Vec<f64> = (0..spec.vocab_size)
        .scan(0.0, |acc, r| {
            *acc += 1.0 / ((r + 1) as f64).powf(spec.zipf_exponent);
            Some(*acc)
        })
        .collect();
    let total = *cumulative.last().expect("vocab_size >= 1");
    let mut sentences = Vec::new();
    let mut vocab_index = Vec::with_capacity(spec.tokens);
    let mut inside_parens = Vec::with_capacity(spec.tokens);
    let mut remaining = spec.tokens;
    while remaining > 0 {
        let len = (spec.min_len + rng.below(spec.max_len - spec.min_len + 1)).min(remaining);
        remaining -= len;
        let span = if len >= 4 && spec.paren_rate > 0.0 && rng.uniform() < spec.paren_rate {
            let open = rng.below(len - 2);
            let close = open + 2 + rng.below(len - open - 2);
            Some((open, close))
        } else {
            None
        };
        let mut sentence = Vec::with_capacity(len);
        for k in 0..len {
            match span {
                Some((o, _)) if k == o => {
                    sentence.push(OPEN.to_owned());
                    vocab_index.push(spec.vocab_size);
                    inside_parens.push(false);
                }
                Some((_, c)) if k == c => {
                    sentence.push(CLOSE.to_owned());
                    vocab_index.push(spec.vocab_size + 1);
                    inside_parens.push(false);
                }
                _ => {
                    let u = rng.uniform() * total;
                    let w = cumulative.partition_point(|&c| c <= u).min(spec.vocab_size - 1);
                    sentence.push(format!("w{w}"));
                    vocab_index.push(w);
                    inside_parens.push(matches!(span, Some((o, c)) if k > o && k < c));
                }
            }
        }
        sentences.push(sentence);
    }
    Ok(Corpus {
        corpus: TokenCorpus::new(sentences)?,
        vocab_index,
        inside_parens,
    })
}

/// Builds the dataset and its ground truth from a validated spec.
pub fn generate(spec: &SynthSpec) -> Result<(ActivationDataset, GroundTruth)> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let gen = generate_corpus(&spec.corpus, &mut rng)?;
    let t = gen.corpus.num_tokens();
    let positions = gen.corpus.positions();

    // per-feature signals and labels
    let mut planted = Vec::with_capacity(spec.features.len());
    for f in &spec.features {
        let (signal, labels) = match &f.kind {
            FeatureKind::SharedLatent => {
                let dims = f.targets.values().next().map_or(0, Vec::len);
                let signal = (0..t).map(|_| (0..dims).map(|_| rng.normal()).collect()).collect();
                (signal, None)
            }
            FeatureKind::Position { scale } => (positions.iter().map(|&p| vec![p as f64 * scale]).collect(), None),
            FeatureKind::TokenIdentity { scale } => {
                let values: Vec<f64> = (0..spec.corpus.vocab_size + 2).map(|_| rng.normal() * scale).collect();
                (gen.vocab_index.iter().map(|&w| vec![values[w]]).collect(), None)
            }
            FeatureKind::Distributed { .. } => (Vec::new(), None),
            FeatureKind::LabeledProperty { classes, assignment } => {
                let picks: Vec<usize> = match assignment {
                    LabelAssignment::Random => {
                        let total: f64 = classes.iter().map(|c| c.weight).sum();
                        (0..t)
                            .map(|_| {
                                let mut u = rng.uniform() * total;
                                classes
                                    .iter()
                                    .position(|c| {
                                        u -= c.weight;
                                        u < 0.0
                                    })
                                    .unwrap_or(classes.len() - 1)
                            })
                            .collect()
                    }
                    LabelAssignment::Parenthesis => gen.inside_parens.iter().map(|&inside| if inside { 0 } else { 1 }).collect(),
                };
                let signal = picks.iter().map(|&c| vec![classes[c].mean]).collect();
                let labels = picks.iter().map(|&c| classes[c].label.clone()).collect();
                (signal, Some(labels))
            }
        };
        planted.push(PlantedFeature {
            name: f.name.clone(),
            kind: f.kind.clone(),
            sigma: f.sigma,
            targets: f.targets.clone(),
            signal,
            labels,
        });
    }

    let mut columns: Vec<Vec<Vec<f64>>> = Vec::with_capacity(spec.models.len());
    for m in &spec.models {
        let mut rows = vec![vec![0.0; t]; m.neurons];
        for r in 0..t {
            for col in rows.iter_mut() {
                col[r] = spec.background_sigma * rng.normal();
            }
        }
        columns.push(rows);
    }

    for (mi, m) in spec.models.iter().enumerate() {
        for (f, p) in spec.features.iter().zip(&planted) {
            if matches!(f.kind, FeatureKind::Distributed { .. }) {
                continue;
            }
            let Some(ids) = f.targets.get(&m.id) else { continue };
            for (slot, &id) in ids.iter().enumerate() {
                let slot = if matches!(f.kind, FeatureKind::SharedLatent) { slot } else { 0 };
                let col = &mut columns[mi][id];
                for (r, v) in col.iter_mut().enumerate() {
                    *v = p.signal[r][slot] + f.sigma * rng.normal();
                }
            }
        }
    }

    for f in &spec.features {
        let FeatureKind::Distributed {
            source_model,
            source_neurons,
            weights,
        } = &f.kind
        else {
            continue;
        };
        let src = spec.models.iter().position(|m| &m.id == source_model).expect("validated");
        let sources: Vec<Vec<f64>> = source_neurons
            .iter()
            .map(|&n| columns[src][n].iter().map(|&v| v as f32 as f64).collect())
            .collect();
        for (model, ids) in &f.targets {
            let mi = spec.models.iter().position(|m| &m.id == model).expect("validated");
            for &id in ids {
                for r in 0..t {
                    let s: f64 = sources.iter().zip(weights).map(|(c, w)| w * c[r]).sum();
                    columns[mi][id][r] = s + f.sigma * rng.normal();
                }
            }
        }
    }

    let models = spec
        .models
        .iter()
        .zip(columns)
        .map(|(m, cols)| {
            let mut data = Vec::with_capacity(t * m.neurons);
            for r in 0..t {
                data.extend(cols.iter().map(|c| c[r] as f32));
            }
            Ok(ModelRecord::new(m.id.clone(), ActivationMatrix::from_vec(t, m.neurons, data)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let ds = ActivationDataset::new(gen.corpus, models)?;
    let truth = GroundTruth {
        seed: spec.seed,
        models: spec.models.iter().map(|m| m.id.clone()).collect(),
        features: planted,
    };
    Ok((ds, truth))
}

/// The planted units a ranking method is expected to put on top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedTopSet {
    pub method: RankMethod,
    pub model: String,
    pub units: Vec<usize>,
    /// Minimum precision@|units| required of the method.
    pub min_precision: f64,
}

/// Expected top sets implied by the plants: shared latents spanning two or
/// more models for MaxCorr and LinReg, shared latents spanning every model
/// for MinCorr, distributed plants for LinReg only.
pub fn oracle_rankings(truth: &GroundTruth) -> Vec<ExpectedTopSet> {
    let mut sets: BTreeMap<(RankMethod, String), BTreeSet<usize>> = BTreeMap::new();
    let all = truth.models.len();
    for f in &truth.features {
        match f.kind {
            FeatureKind::SharedLatent if f.targets.len() >= 2 => {
                for (m, ids) in &f.targets {
                    let mut methods = vec![RankMethod::MaxCorr, RankMethod::LinReg];
                    if f.targets.len() == all {
                        methods.push(RankMethod::MinCorr);
                    }
                    for method in methods {
                        sets.entry((method, m.clone())).or_default().extend(ids);
                    }
                }
            }
            FeatureKind::Distributed { .. } => {
                for (m, ids) in &f.targets {
                    sets.entry((RankMethod::LinReg, m.clone())).or_default().extend(ids);
                }
            }
            _ => {}
        }
    }
    sets.into_iter()
        .map(|((method, model), units)| ExpectedTopSet {
            method,
            model,
            units: units.into_iter().collect(),
            min_precision: 1.0,
        })
        .collect()
}

/// Fraction of `expected` found among the first `expected.len()` ranks.
pub fn precision_at_k(ranking: &NeuronRanking, expected: &[usize]) -> f64 {
    if expected.is_empty() {
        return 1.0;
    }
    let want: BTreeSet<usize> = expected.iter().copied().collect();
    let hits = ranking.units().take(expected.len()).filter(|u| want.contains(u)).count();
    hits as f64 / expected.len() as f64
}

/// Target-side corpus with every sentence reversed, and the matching
/// alignment `i -> n-1-i`.
pub fn reversed_target(corpus: &TokenCorpus) -> Result<(TokenCorpus, AlignmentSet)> {
    let tgt = TokenCorpus::new(
        corpus
            .sentences()
            .iter()
            .map(|s| s.iter().rev().cloned().collect())
            .collect(),
    )?;
    let links = corpus
        .sentences()
        .iter()
        .map(|s| (0..s.len()).map(|i| (i, s.len() - 1 - i)).collect())
        .collect();
    Ok((tgt, AlignmentSet::new(links)?))
}

/// Writes the dataset directory plus `truth.json`, source-side annotations
/// under `annotations/`, and a reversed target side (`target_tokens.txt`,
/// `alignments.txt`, `annotations/<name>.target.tsv`).
pub fn write_synth(dir: &Path, ds: &ActivationDataset, truth: &GroundTruth) -> Result<()> {
    write_dataset(dir, ds)?;
    let mut json = serde_json::to_string(truth)?;
    json.push('\n');
    write_atomic(&dir.join("truth.json"), json.as_bytes())?;

    let labelled: Vec<&PlantedFeature> = truth.features.iter().filter(|f| f.labels.is_some()).collect();
    if labelled.is_empty() {
        return Ok(());
    }
    let (tgt, align) = reversed_target(ds.corpus())?;
    write_atomic(&dir.join("target_tokens.txt"), tgt.to_text().as_bytes())?;
    align.write(&dir.join("alignments.txt"))?;
    let ann_dir = dir.join("annotations");
    fs::create_dir_all(&ann_dir).map_err(|e| Error::io(&ann_dir, e))?;
    for f in labelled {
        let src = truth.annotation(&f.name, ds.corpus())?;
        src.write(&ann_dir.join(format!("{}.tsv", f.name)))?;
        let mut target = PropertyAnnotation::new(&f.name, Side::Target);
        for ((s, k), label) in src.iter() {
            let n = ds.corpus().sentence_len(s);
            target.insert(s, n - 1 - k, label)?;
        }
        target.write(&ann_dir.join(format!("{}.target.tsv", f.name)))?;
    }
    Ok(())
}

pub fn load_truth(path: &Path) -> Result<GroundTruth> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
