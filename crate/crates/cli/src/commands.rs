use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use neuron_cartographer::control::{
    apply_control, build_plan, project_labels, score_success, synthetic_decoder_roundtrip, target_predictive_neurons,
    ControlPlan, PlanRequest, ThresholdDecoder,
};
use neuron_cartographer::dataset::{
    load_alignments, load_annotation, load_corpus, load_dataset, manifest_path, write_atomic, write_dataset,
    ActivationDataset, AlignmentSet, ModelRecord, PropertyAnnotation, Side, TokenCorpus,
};
use neuron_cartographer::erasure::{
    erasure_curve, svcca_erasure_curve, KSpec, LinearProbeScorer, RidgeDecoderScorer, Scorer,
};
use neuron_cartographer::probe::{
    explained_variance, leaderboard_from_labels, neuron_leaderboard, GmmOptions, Grouping, LeaderboardOptions,
    VarianceReport,
};
use neuron_cartographer::ranking::{rank, rank_svcca, LinRegOptions, NeuronRanking, RankMethod, SvccaOptions};
use neuron_cartographer::synth::{generate, load_truth, write_synth, SynthSpec};
use neuron_cartographer::viz::heatmap;
use neuron_cartographer::{Error, Result};
use serde::Serialize;

use crate::args::*;

pub fn dispatch(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Synth(a) => synth(g, a),
        Command::Rank(a) => rank_cmd(g, a),
        Command::Erase(a) => erase(g, a),
        Command::Probe(ProbeCommand::Variance(a)) => variance(g, a),
        Command::Probe(ProbeCommand::Leaderboard(a)) => leaderboard(g, a),
        Command::Control(ControlCommand::FindNeurons(a)) => find_neurons(g, a),
        Command::Control(ControlCommand::Plan(a)) => plan(g, a),
        Command::Control(ControlCommand::Apply(a)) => apply(g, a),
        Command::Control(ControlCommand::Score(a)) => score(g, a),
        Command::Control(ControlCommand::Decode(a)) => decode(g, a),
        Command::Viz(a) => viz(g, a),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn data_path(g: &GlobalArgs) -> Result<&Path> {
    g.data
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("--data is required".into()))
}

fn data_dir(g: &GlobalArgs) -> Result<PathBuf> {
    let manifest = manifest_path(data_path(g)?);
    Ok(manifest.parent().map(Path::to_path_buf).unwrap_or_default())
}

fn dataset(g: &GlobalArgs) -> Result<ActivationDataset> {
    load_dataset(data_path(g)?)
}

fn out_dir(g: &GlobalArgs) -> Result<&Path> {
    g.out
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("--out <DIR> is required".into()))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn stdout(text: &str) -> Result<()> {
    std::io::stdout().write_all(text.as_bytes()).map_err(|e| Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    })
}

/// Single-format report to `--out` or stdout.
fn emit(g: &GlobalArgs, text: &str) -> Result<()> {
    match &g.out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => stdout(text),
    }
}

/// Tabular report: CSV and JSON side by side (`--out` with either
/// extension), or JSON on stdout.
fn emit_table(g: &GlobalArgs, json: &str, csv: &str) -> Result<()> {
    match &g.out {
        Some(p) => {
            write_atomic(&p.with_extension("csv"), csv.as_bytes())?;
            write_atomic(&p.with_extension("json"), json.as_bytes())
        }
        None => stdout(json),
    }
}

fn load_labels(path: &Path, corpus: &TokenCorpus, side: Side) -> Result<PropertyAnnotation> {
    let mut a = load_annotation(path, corpus, side)?;
    if let Some(p) = a.property.strip_suffix(".target") {
        a.property = p.to_owned();
    }
    Ok(a)
}

fn synth(g: &GlobalArgs, a: &SynthArgs) -> Result<()> {
    let mut spec: SynthSpec = serde_json::from_str(&read_text(&a.spec)?)?;
    if let Some(seed) = g.seed {
        spec.seed = seed;
    }
    let dir = out_dir(g)?;
    let (ds, truth) = generate(&spec)?;
    write_synth(dir, &ds, &truth)?;
    write_atomic(&dir.join("spec.json"), to_json(&spec)?.as_bytes())?;
    log::info!(
        "wrote {} models x {} tokens to {}",
        ds.num_models(),
        ds.num_tokens(),
        dir.display()
    );
    Ok(())
}

fn linreg_options(o: &RankOptions) -> LinRegOptions {
    LinRegOptions {
        lambda: o.lambda,
        normalize: !o.no_normalize,
    }
}

fn svcca_options(o: &RankOptions) -> SvccaOptions {
    SvccaOptions {
        variance_fraction: o.variance_fraction,
        epsilon: o.epsilon,
    }
}

fn rank_cmd(g: &GlobalArgs, a: &RankArgs) -> Result<()> {
    let ds = dataset(g)?;
    let r = rank(
        &ds,
        &a.model,
        a.method,
        a.options.other.as_deref(),
        linreg_options(&a.options),
        svcca_options(&a.options),
    )?;
    emit_table(g, &r.to_json()?, &r.to_csv())
}

fn build_scorer(g: &GlobalArgs, a: &EraseArgs, ds: &ActivationDataset) -> Result<Box<dyn Scorer>> {
    if let Some(feature) = a.scorer.strip_prefix("probe:") {
        let truth_path = match &a.truth {
            Some(p) => p.clone(),
            None => data_dir(g)?.join("truth.json"),
        };
        let truth = load_truth(&truth_path)?;
        let mut s = LinearProbeScorer::new(feature, truth.scalar_signal(feature)?);
        s.lambda = a.scorer_lambda;
        return Ok(Box::new(s));
    }
    if let Some(target) = a.scorer.strip_prefix("decoder:") {
        let x = &ds.model(&a.model)?.activations;
        let y = ds.model(target)?.activations.to_dmatrix();
        return Ok(Box::new(RidgeDecoderScorer::fit(target, x, y, a.scorer_lambda)?));
    }
    Err(Error::InvalidArgument(format!(
        "unknown scorer `{}` (expected probe:<feature> or decoder:<model>)",
        a.scorer
    )))
}

fn resolve_ks(specs: &[String], units: usize) -> Result<Vec<usize>> {
    specs
        .iter()
        .map(|s| s.parse::<KSpec>()?.resolve(units))
        .collect()
}

fn erase(g: &GlobalArgs, a: &EraseArgs) -> Result<()> {
    let ds = dataset(g)?;
    let ranking = match (&a.ranking, a.method) {
        (Some(path), _) => {
            let r = NeuronRanking::from_json(&read_text(path)?)?;
            if r.model != a.model {
                return Err(Error::InvalidArgument(format!(
                    "ranking is for model `{}`, not `{}`",
                    r.model, a.model
                )));
            }
            r
        }
        (None, Some(method)) => rank(
            &ds,
            &a.model,
            method,
            a.options.other.as_deref(),
            linreg_options(&a.options),
            svcca_options(&a.options),
        )?,
        (None, None) => return Err(Error::InvalidArgument("give --ranking or --method".into())),
    };
    let scorer = build_scorer(g, a, &ds)?;
    let curve = if ranking.method == RankMethod::Svcca {
        let other = ranking
            .others
            .first()
            .cloned()
            .or_else(|| a.options.other.clone())
            .ok_or_else(|| Error::InvalidArgument("svcca erasure needs --other".into()))?;
        let mut opts = svcca_options(&a.options);
        if let Some(f) = ranking.params.get("variance_fraction").and_then(|v| v.as_f64()) {
            opts.variance_fraction = f;
        }
        let directions = rank_svcca(&ds, &a.model, &other, opts)?;
        let ks = resolve_ks(&a.ks, directions.basis.num_directions())?;
        svcca_erasure_curve(&ds, &directions, &ks, scorer.as_ref())?
    } else {
        let ks = resolve_ks(&a.ks, ranking.len())?;
        erasure_curve(&ds, &a.model, &ranking, &ks, scorer.as_ref())?
    };
    emit_table(g, &curve.to_json()?, &curve.to_csv())
}

#[derive(Serialize)]
struct VarianceTable<'a> {
    model: &'a str,
    skipped_constant: Vec<usize>,
    rows: Vec<VarianceReport>,
}

fn variance(g: &GlobalArgs, a: &VarianceArgs) -> Result<()> {
    let ds = dataset(g)?;
    let record = ds.model(&a.model)?;
    let annotation = match &a.annotation {
        Some(p) => Some(load_labels(p, ds.corpus(), Side::Source)?),
        None => None,
    };
    let (neurons, skipped) = if a.neurons.is_empty() {
        let all: Vec<usize> = (0..record.num_neurons())
            .filter(|n| !record.constant_columns.contains(n))
            .collect();
        (all, record.constant_columns.clone())
    } else {
        (a.neurons.clone(), Vec::new())
    };
    let mut rows = Vec::new();
    for &n in &neurons {
        for grouping in &a.grouping {
            let grouping = match grouping {
                GroupingArg::Position => Grouping::Position,
                GroupingArg::Token => Grouping::Token,
                GroupingArg::Annotation => Grouping::Annotation(annotation.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("the annotation grouping needs --annotation".into())
                })?),
            };
            rows.push(explained_variance(&ds, &a.model, n, grouping)?);
        }
    }
    let mut csv = String::from("neuron,grouping,fraction,percent,groups,small_group_mass\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.neuron, r.grouping, r.stats.fraction, r.percent, r.stats.groups, r.stats.small_group_mass
        ));
    }
    let table = VarianceTable {
        model: &a.model,
        skipped_constant: skipped,
        rows,
    };
    emit_table(g, &to_json(&table)?, &csv)
}

fn classifier_options(c: &ClassifierOptions) -> LeaderboardOptions {
    LeaderboardOptions {
        split: c.split,
        metric: c.metric.clone(),
        gmm: GmmOptions {
            components: c.components,
            ..GmmOptions::default()
        },
        cross_reference: !c.no_cross_reference,
        linreg: LinRegOptions::default(),
    }
}

fn leaderboard(g: &GlobalArgs, a: &LeaderboardArgs) -> Result<()> {
    let ds = dataset(g)?;
    let ann = load_labels(&a.annotation, ds.corpus(), Side::Source)?;
    let report = neuron_leaderboard(&ds, &a.model, &ann, &classifier_options(&a.classifier))?;
    emit_table(g, &report.to_json()?, &report.to_csv())
}

struct TargetInputs {
    labels: PropertyAnnotation,
    alignments: AlignmentSet,
    filter: Option<PropertyAnnotation>,
}

fn target_inputs(t: &TargetSide, source: &TokenCorpus) -> Result<TargetInputs> {
    let need = |p: &Option<PathBuf>, flag: &str| {
        p.clone()
            .ok_or_else(|| Error::InvalidArgument(format!("--{flag} is required")))
    };
    let target_corpus = TokenCorpus::load(&need(&t.target_tokens, "target-tokens")?)?;
    let labels = load_labels(&need(&t.target_annotation, "target-annotation")?, &target_corpus, Side::Target)?;
    let alignments = load_alignments(&need(&t.alignments, "alignments")?, source, &target_corpus)?;
    let filter = match &t.source_filter {
        Some(p) => Some(load_labels(p, source, Side::Source)?),
        None => None,
    };
    Ok(TargetInputs {
        labels,
        alignments,
        filter,
    })
}

fn find_neurons(g: &GlobalArgs, a: &FindNeuronsArgs) -> Result<()> {
    let ds = dataset(g)?;
    let t = target_inputs(&a.target, ds.corpus())?;
    let found = target_predictive_neurons(
        &ds,
        &a.model,
        &t.labels,
        &t.alignments,
        t.filter.as_ref(),
        &classifier_options(&a.classifier),
    )?;
    emit_table(g, &to_json(&found)?, &found.report.to_csv())
}

fn plan(g: &GlobalArgs, a: &PlanArgs) -> Result<()> {
    let ds = dataset(g)?;
    let (property, labels): (String, BTreeMap<usize, String>) = match &a.source_annotation {
        Some(p) => {
            let ann = load_labels(p, ds.corpus(), Side::Source)?;
            let labels = ann
                .by_row(ds.corpus())?
                .into_iter()
                .map(|(r, l)| (r, l.to_owned()))
                .collect();
            (ann.property, labels)
        }
        None => {
            let t = target_inputs(&a.target, ds.corpus())?;
            let projected = project_labels(ds.corpus(), &t.labels, &t.alignments, t.filter.as_ref())?;
            (t.labels.property, projected.labels)
        }
    };
    let neurons = if a.neurons.is_empty() {
        if a.top_k == 0 {
            return Err(Error::InvalidArgument("--top-k must be at least 1".into()));
        }
        let report = leaderboard_from_labels(&ds, &a.model, &property, &labels, &classifier_options(&a.classifier))?;
        report.entries.iter().take(a.top_k).map(|e| e.neuron).collect()
    } else {
        a.neurons.clone()
    };
    let req = PlanRequest {
        property: &property,
        from: &a.from,
        to: &a.to,
        neurons: &neurons,
        beta: a.beta,
    };
    let plan = build_plan(&ds, &a.model, &labels, &req)?;
    emit(g, &plan.to_json()?)
}

fn apply(g: &GlobalArgs, a: &ApplyArgs) -> Result<()> {
    let ds = dataset(g)?;
    let plan = ControlPlan::from_json(&read_text(&a.plan)?)?;
    let dir = out_dir(g)?;
    let original = &ds.model(&a.model)?.activations;
    let modified = apply_control(original, ds.corpus(), &plan)?;
    log::info!("modified {} activation entries", original.count_differences(&modified)?);
    let models = ds
        .models()
        .iter()
        .map(|m| {
            if m.model_id == a.model {
                ModelRecord::new(m.model_id.clone(), modified.clone())
            } else {
                m.clone()
            }
        })
        .collect();
    write_dataset(dir, &ActivationDataset::new(ds.corpus().clone(), models)?)
}

fn score(g: &GlobalArgs, a: &ScoreArgs) -> Result<()> {
    let plan = ControlPlan::from_json(&read_text(&a.plan)?)?;
    let source = load_corpus(data_path(g)?)?;
    let output = TokenCorpus::load(&a.output_tokens)?;
    let tags = load_labels(&a.tags, &output, Side::Target)?;
    let alignments = load_alignments(&a.alignments, &source, &output)?;
    plan.validate(&source, usize::MAX)?;
    let report = score_success(&tags, &alignments, &plan)?;
    emit(g, &report.to_json()?)
}

fn decode(g: &GlobalArgs, a: &DecodeArgs) -> Result<()> {
    let ds = dataset(g)?;
    let dir = out_dir(g)?;
    let plan = match &a.plan {
        Some(p) => Some(ControlPlan::from_json(&read_text(p)?)?),
        None => None,
    };
    let missing = |what: &str| Error::InvalidArgument(format!("without a plan, --{what} is required"));
    let neuron = match (a.neuron, &plan) {
        (Some(n), _) => n,
        (None, Some(p)) => p.neurons[0].id,
        (None, None) => return Err(missing("neuron")),
    };
    let base = match &plan {
        Some(p) => Some(ThresholdDecoder::from_plan(p, neuron)?),
        None => None,
    };
    let pick = |given: &Option<String>, default: Option<&String>, flag: &str| {
        given.clone().or_else(|| default.cloned()).ok_or_else(|| missing(flag))
    };
    let decoder = ThresholdDecoder {
        property: pick(&a.property, base.as_ref().map(|d| &d.property), "property")?,
        neuron,
        threshold: match (a.threshold, &base) {
            (Some(t), _) => t,
            (None, Some(d)) => d.threshold,
            (None, None) => return Err(missing("threshold")),
        },
        above: pick(&a.above, base.as_ref().map(|d| &d.above), "above")?,
        below: pick(&a.below, base.as_ref().map(|d| &d.below), "below")?,
    };
    let (tags, alignments) = synthetic_decoder_roundtrip(&ds, &a.model, plan.as_ref(), &decoder)?;
    tags.write(&dir.join("tags.tsv"))?;
    alignments.write(&dir.join("alignments.txt"))?;
    write_atomic(&dir.join("tokens.txt"), ds.corpus().to_text().as_bytes())
}

fn sentence_range(spec: Option<&str>, sentences: usize) -> Result<(usize, usize)> {
    let bad = |s: &str| Error::InvalidArgument(format!("bad sentence range `{s}`"));
    match spec {
        None => Ok((0, sentences.min(10))),
        Some(s) => match s.split_once("..") {
            Some((a, b)) => Ok((a.trim().parse().map_err(|_| bad(s))?, b.trim().parse().map_err(|_| bad(s))?)),
            None => {
                let i: usize = s.trim().parse().map_err(|_| bad(s))?;
                Ok((i, i + 1))
            }
        },
    }
}

fn viz(g: &GlobalArgs, a: &VizArgs) -> Result<()> {
    let ds = dataset(g)?;
    let (start, end) = sentence_range(a.sentences.as_deref(), ds.corpus().num_sentences())?;
    let doc = heatmap(&ds, &a.model, a.neuron, start, end)?;
    let text = match a.format {
        VizFormat::Html => doc.to_html(),
        VizFormat::Ansi => doc.to_ansi(),
    };
    emit(g, &text)
}
