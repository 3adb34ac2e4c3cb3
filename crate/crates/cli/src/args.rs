use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use neuron_cartographer::probe::{LeaderMetric, SplitMode};
use neuron_cartographer::ranking::RankMethod;

pub const THREADS_ENV: &str = "NEURON_CARTOGRAPHER_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "neuron-cartographer",
    version,
    about = "Rank, erase, probe and steer neurons shared across independently trained models",
    after_help = "Exit codes: 0 success, 1 invalid input or usage, 2 numerical failure.\n\
                  Reports with a tabular form are written as both CSV and JSON (same stem)."
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Dataset directory (or its manifest.json)
    #[arg(long, global = true, value_name = "PATH")]
    pub data: Option<PathBuf>,
    /// Output file (or directory for synth, control apply/decode); stdout when omitted for single reports
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Seed for generated data; overrides the seed in a synth spec
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (results do not depend on this)
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    /// JSON object of default flag values keyed by long flag name; explicit flags win
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// More log output (-v info, -vv debug); RUST_LOG overrides
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with planted neurons from a JSON spec
    Synth(SynthArgs),
    /// Rank a model's neurons (or SVCCA directions) by cross-model importance
    Rank(RankArgs),
    /// Erase top- and bottom-ranked units and score the degradation curve
    Erase(EraseArgs),
    /// Supervised checks of individual neurons
    #[command(subcommand)]
    Probe(ProbeCommand),
    /// Find, plan, apply and score neuron modifications
    #[command(subcommand)]
    Control(ControlCommand),
    /// Render one neuron's activations over a sentence range as a heatmap
    Viz(VizArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Synth spec (JSON)
    #[arg(long, value_name = "FILE")]
    pub spec: PathBuf,
}

fn parse_method(s: &str) -> Result<RankMethod, String> {
    s.parse().map_err(|e: neuron_cartographer::Error| e.to_string())
}

fn parse_split(s: &str) -> Result<SplitMode, String> {
    s.parse().map_err(|e: neuron_cartographer::Error| e.to_string())
}

fn parse_metric(s: &str) -> Result<LeaderMetric, String> {
    s.parse().map_err(|e: neuron_cartographer::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Model to rank
    #[arg(long)]
    pub model: String,
    /// maxcorr, mincorr, linreg or svcca
    #[arg(long, value_parser = parse_method)]
    pub method: RankMethod,
    #[command(flatten)]
    pub options: RankOptions,
}

#[derive(Debug, Args, Clone)]
pub struct RankOptions {
    /// Second model for svcca
    #[arg(long)]
    pub other: Option<String>,
    /// Ridge strength for linreg (default: scaled to each regressor's variance)
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Rank linreg by raw MSE instead of variance-normalised MSE
    #[arg(long)]
    pub no_normalize: bool,
    /// Fraction of variance kept by the PCA step of svcca
    #[arg(long, default_value_t = 0.99)]
    pub variance_fraction: f64,
    /// CCA ridge (default: 1e-8 times the mean covariance diagonal)
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EraseArgs {
    /// Model whose units are erased
    #[arg(long)]
    pub model: String,
    /// Ranking JSON from `rank`; computed with --method when omitted
    #[arg(long, value_name = "FILE")]
    pub ranking: Option<PathBuf>,
    /// Ranking method when no --ranking file is given
    #[arg(long, value_parser = parse_method)]
    pub method: Option<RankMethod>,
    #[command(flatten)]
    pub options: RankOptions,
    /// Erasure sizes: counts or percentages, comma separated (k=0 is always added)
    #[arg(long, value_delimiter = ',', required = true)]
    pub ks: Vec<String>,
    /// probe:<planted feature> (R^2, needs truth.json) or decoder:<model> (reconstruction MSE)
    #[arg(long)]
    pub scorer: String,
    /// Ground truth for probe scorers (default: <data>/truth.json)
    #[arg(long, value_name = "FILE")]
    pub truth: Option<PathBuf>,
    /// Ridge strength of the scorer (default: scaled to the input variance)
    #[arg(long)]
    pub scorer_lambda: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum ProbeCommand {
    /// Variance of a neuron explained by position, token identity or annotation labels
    Variance(VarianceArgs),
    /// Fit a per-neuron Gaussian classifier for a property and rank neurons by it
    Leaderboard(LeaderboardArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupingArg {
    Position,
    Token,
    Annotation,
}

#[derive(Debug, Args)]
pub struct VarianceArgs {
    #[arg(long)]
    pub model: String,
    /// Neurons to report, comma separated (default: all non-constant neurons)
    #[arg(long, value_delimiter = ',')]
    pub neurons: Vec<usize>,
    /// Groupings, comma separated
    #[arg(long, value_enum, value_delimiter = ',', default_value = "position,token")]
    pub grouping: Vec<GroupingArg>,
    /// Source-side annotation TSV for the annotation grouping
    #[arg(long, value_name = "FILE")]
    pub annotation: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct ClassifierOptions {
    /// even-odd (fit on even sentences, evaluate on odd) or in-sample
    #[arg(long, value_parser = parse_split, default_value = "even-odd")]
    pub split: SplitMode,
    /// macro-f1, accuracy or f1:<label>
    #[arg(long, value_parser = parse_metric, default_value = "macro-f1")]
    pub metric: LeaderMetric,
    /// Gaussian components per class
    #[arg(long, default_value_t = 1)]
    pub components: usize,
    /// Skip the MaxCorr/MinCorr/LinReg rank columns
    #[arg(long)]
    pub no_cross_reference: bool,
}

#[derive(Debug, Args)]
pub struct LeaderboardArgs {
    #[arg(long)]
    pub model: String,
    /// Source-side annotation TSV (property name = file stem)
    #[arg(long, value_name = "FILE")]
    pub annotation: PathBuf,
    #[command(flatten)]
    pub classifier: ClassifierOptions,
}

#[derive(Debug, Subcommand)]
pub enum ControlCommand {
    /// Rank neurons by how well they predict the aligned target word's label
    FindNeurons(FindNeuronsArgs),
    /// Build a modification plan (alpha = mu1 + beta (mu1 - mu2) per neuron)
    Plan(PlanArgs),
    /// Apply a plan and write the modified dataset
    Apply(ApplyArgs),
    /// Score output tags and alignments of modified tokens
    Score(ScoreArgs),
    /// Run the threshold stand-in decoder and write output tags and alignments
    Decode(DecodeArgs),
}

#[derive(Debug, Args, Clone)]
pub struct TargetSide {
    /// Target-side annotation TSV (property name = file stem, minus `.target`)
    #[arg(long, value_name = "FILE")]
    pub target_annotation: Option<PathBuf>,
    /// Target token file the annotation and alignments refer to
    #[arg(long, value_name = "FILE")]
    pub target_tokens: Option<PathBuf>,
    /// Source-target alignments, one Pharaoh line per sentence
    #[arg(long, value_name = "FILE")]
    pub alignments: Option<PathBuf>,
    /// Only use source tokens labeled in this source-side annotation
    #[arg(long, value_name = "FILE")]
    pub source_filter: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FindNeuronsArgs {
    #[arg(long)]
    pub model: String,
    #[command(flatten)]
    pub target: TargetSide,
    #[command(flatten)]
    pub classifier: ClassifierOptions,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub model: String,
    /// Source-side labels for class means and positions (instead of projected target labels)
    #[arg(long, value_name = "FILE")]
    pub source_annotation: Option<PathBuf>,
    #[command(flatten)]
    pub target: TargetSide,
    /// Label to modify from
    #[arg(long)]
    pub from: String,
    /// Label to modify to
    #[arg(long)]
    pub to: String,
    /// Neurons to modify, comma separated (default: top --top-k by prediction)
    #[arg(long, value_delimiter = ',')]
    pub neurons: Vec<usize>,
    /// Number of best predictive neurons when --neurons is omitted
    #[arg(long, default_value_t = 1)]
    pub top_k: usize,
    /// Scale of the push along mu1 - mu2 (negative values move towards the to-class)
    #[arg(long, allow_hyphen_values = true)]
    pub beta: f64,
    #[command(flatten)]
    pub classifier: ClassifierOptions,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    #[arg(long)]
    pub model: String,
    /// Plan JSON
    #[arg(long, value_name = "FILE")]
    pub plan: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Plan JSON
    #[arg(long, value_name = "FILE")]
    pub plan: PathBuf,
    /// Output-side tags TSV
    #[arg(long, value_name = "FILE")]
    pub tags: PathBuf,
    /// Output token file the tags and alignments refer to
    #[arg(long, value_name = "FILE")]
    pub output_tokens: PathBuf,
    /// Source-output alignments, one Pharaoh line per sentence
    #[arg(long, value_name = "FILE")]
    pub alignments: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub model: String,
    /// Plan to apply before decoding (omit for the unmodified baseline)
    #[arg(long, value_name = "FILE")]
    pub plan: Option<PathBuf>,
    /// Neuron the decoder reads (default: the plan's first neuron)
    #[arg(long)]
    pub neuron: Option<usize>,
    /// Decision threshold (default: midpoint of the plan's class means)
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
    /// Label emitted above the threshold (default: the plan label whose mean is higher)
    #[arg(long)]
    pub above: Option<String>,
    /// Label emitted at or below the threshold (default: the plan label whose mean is lower)
    #[arg(long)]
    pub below: Option<String>,
    /// Property name of the emitted tags (default: the plan's property)
    #[arg(long)]
    pub property: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VizFormat {
    Html,
    Ansi,
}

#[derive(Debug, Args)]
pub struct VizArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub neuron: usize,
    /// Sentence range `start..end` (end exclusive) or a single index [default: first 10 sentences]
    #[arg(long)]
    pub sentences: Option<String>,
    #[arg(long, value_enum, default_value = "html")]
    pub format: VizFormat,
}
