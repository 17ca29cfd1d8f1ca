//! The `rrg-uq` command line.
//!
//! Option values resolve as flag, then `--config` TOML file, then built-in
//! default. Every command writes `run_config.json` with the resolved values
//! next to its outputs.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::corpus::{
    assemble_sample_sets, load_correctness, load_originals, load_pair_scores, load_samples, write_jsonl,
    CorrectnessTable, Report, SampleSet, Strictness,
};
use crate::eval::{self, ReportSentences, SentinelPolicy};
use crate::factuality::{
    load_green_counts, score_pairs, EntityF1Scorer, GreenCountsScorer, LexicalScorer, PairScorer, PrecomputedScorer,
    ScorerKind,
};
use crate::parser::{
    annotate, extract_entities, load_annotations, reference_sets, AnnotationSource, AnnotationStore, Lexicon,
    NodeLabelSet,
};
use crate::prior::{self, MatchOptions, PriorMatcher};
use crate::synth::{self, HallucinationMode, SynthConfig};
use crate::uq;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "rrg-uq", version, about = "Sampling-consistency uncertainty for generated radiology reports")]
pub struct Cli {
    /// TOML file supplying defaults for any option.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract entity-label sets from originals, their sentences and samples.
    Parse(ParseArgs),
    /// Score every (original, sample) pair.
    Score(ScoreArgs),
    /// Report- and sentence-level uncertainty.
    Uq(UqArgs),
    /// Sentence precision against reference reports.
    Precision(PrecisionArgs),
    /// Calibration, abstention, alignment and prior-reference tables.
    Evaluate(EvaluateArgs),
    /// Drop the most uncertain sentences corpus-wide.
    Prune(PruneArgs),
    /// Generate a synthetic corpus with known ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    #[arg(long, value_name = "FILE")]
    reports: PathBuf,
    #[arg(long, value_name = "FILE")]
    samples: PathBuf,
    /// Samples per case (T).
    #[arg(long, value_name = "T")]
    expected_t: Option<usize>,
    /// Accept any T >= 1 per case instead of failing on a mismatch.
    #[arg(long)]
    lenient: bool,
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, value_name = "FILE")]
    lexicon: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScorerArg {
    #[value(alias = "entity_f1")]
    EntityF1,
    Lexical,
    #[value(alias = "green_counts")]
    GreenCounts,
    Precomputed,
}

impl From<ScorerArg> for ScorerKind {
    fn from(s: ScorerArg) -> Self {
        match s {
            ScorerArg::EntityF1 => ScorerKind::EntityF1,
            ScorerArg::Lexical => ScorerKind::Lexical,
            ScorerArg::GreenCounts => ScorerKind::GreenCounts,
            ScorerArg::Precomputed => ScorerKind::Precomputed,
        }
    }
}

#[derive(Debug, Args)]
pub struct ScorerArgs {
    #[arg(long, value_enum)]
    scorer: Option<ScorerArg>,
    /// Entity annotations from `rrg-uq parse`; otherwise the lexicon is used.
    #[arg(long, value_name = "FILE")]
    annotations: Option<PathBuf>,
    /// Precomputed pair scores (`scores.jsonl`).
    #[arg(long, value_name = "FILE")]
    scores: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    green_counts: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    lexicon: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    scoring: ScorerArgs,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Level {
    /// Sentence level too when annotations are available.
    #[default]
    Auto,
    Report,
    Sentence,
    Both,
}

#[derive(Debug, Args)]
pub struct UqArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    scoring: ScorerArgs,
    #[arg(long, value_enum)]
    level: Option<Level>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PrecisionArgs {
    #[arg(long, value_name = "FILE")]
    reports: PathBuf,
    /// Reference reports in the `reports.jsonl` schema.
    #[arg(long, value_name = "FILE")]
    reference: PathBuf,
    /// Annotations for the original sentences.
    #[arg(long, value_name = "FILE")]
    annotations: Option<PathBuf>,
    /// Annotations whose report-level original units are the reference sets.
    #[arg(long, value_name = "FILE")]
    reference_annotations: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    lexicon: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SentinelArg {
    Lowest,
    #[value(alias = "as_zero")]
    AsZero,
    Exclude,
}

impl From<SentinelArg> for SentinelPolicy {
    fn from(s: SentinelArg) -> Self {
        match s {
            SentinelArg::Lowest => SentinelPolicy::Lowest,
            SentinelArg::AsZero => SentinelPolicy::AsZero,
            SentinelArg::Exclude => SentinelPolicy::Exclude,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "FILE")]
    report_u: PathBuf,
    #[arg(long, value_name = "FILE")]
    correctness: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    sentence_u: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    precision: Option<PathBuf>,
    /// Original reports, for prior-exam reference detection.
    #[arg(long, value_name = "FILE")]
    reports: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    substrings: Option<PathBuf>,
    #[arg(long)]
    word_boundary: bool,
    #[arg(long)]
    once_per_substring: bool,
    /// Number of equal-mass bins for RCE.
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Correctness metric for the abstention table.
    #[arg(long)]
    metric: Option<String>,
    /// Treatment of the -1 precision of empty sentence parses in alignment.
    #[arg(long, value_enum)]
    sentinel: Option<SentinelArg>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    #[arg(long, value_name = "FILE")]
    reports: PathBuf,
    #[arg(long, value_name = "FILE")]
    sentence_u: PathBuf,
    #[arg(long)]
    fraction: f64,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    n_cases: Option<usize>,
    /// Samples per case (T).
    #[arg(long)]
    samples_per_case: Option<usize>,
    #[arg(long)]
    min_sentences: Option<usize>,
    #[arg(long)]
    max_sentences: Option<usize>,
    #[arg(long)]
    pool_size: Option<usize>,
    #[arg(long)]
    corruption_rate: Option<f64>,
    #[arg(long)]
    hallucination_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    difficulty_spread: Option<f64>,
    /// Falsify exactly one sentence per original.
    #[arg(long)]
    planted: bool,
    /// Attach prior-exam phrases to the hardest cases instead of at random.
    #[arg(long)]
    coupled: bool,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

/// Options accepted in the `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(rename = "T")]
    t: Option<usize>,
    bins: Option<usize>,
    fractions: Option<Vec<f64>>,
    seeds: Option<Vec<u64>>,
    scorer: Option<String>,
    strictness: Option<Strictness>,
    level: Option<Level>,
    lexicon: Option<PathBuf>,
    substrings: Option<PathBuf>,
    metric: Option<String>,
    sentinel: Option<SentinelPolicy>,
    word_boundary: Option<bool>,
    once_per_substring: Option<bool>,
    synth: Option<SynthConfig>,
}

/// Resolved options of one invocation, echoed as `run_config.json`.
#[derive(Debug, Default, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub paths: BTreeMap<&'static str, String>,
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    #[serde(rename = "B", skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fractions: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scorer: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strictness: Option<Strictness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sentinel: Option<SentinelPolicy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub match_options: Option<MatchOptions>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
}

impl RunConfig {
    fn new(command: &'static str) -> Self {
        RunConfig {
            command,
            ..RunConfig::default()
        }
    }

    fn path(&mut self, key: &'static str, p: &Path) {
        self.paths.insert(key, p.display().to_string());
    }

    fn opt_path(&mut self, key: &'static str, p: Option<&PathBuf>) {
        if let Some(p) = p {
            self.path(key, p);
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] crate::Error),
}

macro_rules! data_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.into())
            }
        }
    )*};
}

data_from!(
    crate::corpus::CorpusError,
    crate::parser::AnnotationError,
    crate::factuality::ScoreError,
    crate::uq::UqError,
    crate::eval::EvalError,
    crate::prior::PriorError,
    crate::synth::SynthError
);

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn require_inputs<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<(), CliError> {
    for p in paths {
        if !p.is_file() {
            return Err(usage(format!("input file not found: {}", p.display())));
        }
    }
    Ok(())
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(crate::Error::io(dir, e)))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Data(crate::Error::io(path, e)))
}

fn write_run_config(dir: &Path, rc: &RunConfig) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(rc).expect("run config serializes");
    text.push('\n');
    write_text(&dir.join("run_config.json"), &text)
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    require_inputs([path])?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(crate::Error::io(path, e)))?;
    toml::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))
}

fn load_lexicon(path: Option<&Path>) -> Result<Lexicon, CliError> {
    match path {
        Some(p) => Ok(Lexicon::from_path(p)?),
        None => Ok(Lexicon::default_radiology()),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    let file = load_file_config(cli.config.as_deref())?;
    match cli.command {
        Command::Parse(a) => cmd_parse(a, &file),
        Command::Score(a) => cmd_score(a, &file),
        Command::Uq(a) => cmd_uq(a, &file),
        Command::Precision(a) => cmd_precision(a, &file),
        Command::Evaluate(a) => cmd_evaluate(a, &file),
        Command::Prune(a) => cmd_prune(a),
        Command::Synth(a) => cmd_synth(a, &file),
    }
}

fn load_sets(c: &CorpusArgs, file: &FileConfig, rc: &mut RunConfig) -> Result<Vec<SampleSet>, CliError> {
    require_inputs([c.reports.as_path(), c.samples.as_path()])?;
    let t = c.expected_t.or(file.t).unwrap_or(10);
    if t < 1 {
        return Err(usage("T must be at least 1"));
    }
    let strictness = if c.lenient {
        Strictness::Lenient
    } else {
        file.strictness.unwrap_or_default()
    };
    rc.path("reports", &c.reports);
    rc.path("samples", &c.samples);
    rc.t = Some(t);
    rc.strictness = Some(strictness);
    let originals = load_originals(&c.reports)?.items;
    let samples = load_samples(&c.samples)?.items;
    Ok(assemble_sample_sets(&originals, &samples, t, strictness)?.items)
}

fn cmd_parse(a: ParseArgs, file: &FileConfig) -> Result<(), CliError> {
    let mut rc = RunConfig::new("parse");
    let lexicon_path = a.lexicon.as_ref().or(file.lexicon.as_ref());
    if let Some(p) = lexicon_path {
        require_inputs([p.as_path()])?;
    }
    let sets = load_sets(&a.corpus, file, &mut rc)?;
    rc.opt_path("lexicon", lexicon_path);
    rc.path("out", &a.out);
    let lexicon = load_lexicon(lexicon_path.map(PathBuf::as_path))?;
    let store = annotate(&sets, AnnotationSource::Lexicon(&lexicon))?;
    prepare_out(&a.out)?;
    store.write(a.out.join("annotations.jsonl"))?;
    write_run_config(&a.out, &rc)?;
    println!("parse: {} cases annotated", sets.len());
    Ok(())
}

struct Scoring {
    kind: ScorerKind,
    annotations: Option<AnnotationStore>,
}

fn resolve_scoring(
    s: &ScorerArgs,
    file: &FileConfig,
    sets: &[SampleSet],
    rc: &mut RunConfig,
) -> Result<Scoring, CliError> {
    let kind = match (s.scorer, &file.scorer) {
        (Some(k), _) => k.into(),
        (None, Some(name)) => name.parse::<ScorerKind>().map_err(usage)?,
        (None, None) if s.scores.is_some() => ScorerKind::Precomputed,
        (None, None) => ScorerKind::EntityF1,
    };
    let lexicon_path = s.lexicon.as_ref().or(file.lexicon.as_ref());
    require_inputs(
        [s.annotations.as_ref(), s.scores.as_ref(), s.green_counts.as_ref(), lexicon_path]
            .into_iter()
            .flatten()
            .map(PathBuf::as_path),
    )?;
    rc.scorer = Some(kind.id().to_string());
    rc.opt_path("annotations", s.annotations.as_ref());
    rc.opt_path("scores", s.scores.as_ref());
    rc.opt_path("green_counts", s.green_counts.as_ref());
    rc.opt_path("lexicon", lexicon_path);
    let annotations = if let Some(p) = &s.annotations {
        let map = load_annotations(p)?;
        Some(annotate(sets, AnnotationSource::File(&map))?)
    } else if kind == ScorerKind::EntityF1 || lexicon_path.is_some() {
        let lexicon = load_lexicon(lexicon_path.map(PathBuf::as_path))?;
        Some(annotate(sets, AnnotationSource::Lexicon(&lexicon))?)
    } else {
        None
    };
    Ok(Scoring { kind, annotations })
}

fn score_table(s: &ScorerArgs, scoring: &Scoring, sets: &[SampleSet]) -> Result<crate::corpus::ScoreTable, CliError> {
    let scorer: Box<dyn PairScorer> = match scoring.kind {
        ScorerKind::EntityF1 => Box::new(EntityF1Scorer),
        ScorerKind::Lexical => Box::new(LexicalScorer),
        ScorerKind::GreenCounts => {
            let p = s
                .green_counts
                .as_ref()
                .ok_or_else(|| usage("--scorer green_counts needs --green-counts FILE"))?;
            Box::new(GreenCountsScorer {
                counts: load_green_counts(p)?,
            })
        }
        ScorerKind::Precomputed => {
            let p = s
                .scores
                .as_ref()
                .ok_or_else(|| usage("--scorer precomputed needs --scores FILE"))?;
            let table = load_pair_scores(p)?.items;
            table.check_complete(sets)?;
            Box::new(PrecomputedScorer { table })
        }
    };
    Ok(score_pairs(sets, scoring.annotations.as_ref(), scorer.as_ref())?)
}

fn cmd_score(a: ScoreArgs, file: &FileConfig) -> Result<(), CliError> {
    let mut rc = RunConfig::new("score");
    let sets = load_sets(&a.corpus, file, &mut rc)?;
    let scoring = resolve_scoring(&a.scoring, file, &sets, &mut rc)?;
    rc.path("out", &a.out);
    let table = score_table(&a.scoring, &scoring, &sets)?;
    prepare_out(&a.out)?;
    table.write(a.out.join("scores.jsonl"))?;
    write_run_config(&a.out, &rc)?;
    println!("score: {} pairs scored with {}", table.entries.len(), table.scorer_id);
    Ok(())
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, s) = xs.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| s / n as f64)
}

fn fmt_mean(m: Option<f64>) -> String {
    m.map_or_else(|| "n/a".to_string(), |m| format!("{m:.4}"))
}

fn cmd_uq(a: UqArgs, file: &FileConfig) -> Result<(), CliError> {
    let mut rc = RunConfig::new("uq");
    let level = a.level.or(file.level).unwrap_or_default();
    let sets = load_sets(&a.corpus, file, &mut rc)?;
    let scoring = resolve_scoring(&a.scoring, file, &sets, &mut rc)?;
    rc.path("out", &a.out);
    rc.level = Some(format!("{level:?}").to_lowercase());
    if sets.is_empty() {
        log::warn!("empty corpus: writing empty uncertainty tables");
    }

    let want_sentences = match (level, &scoring.annotations) {
        (Level::Report, _) => false,
        (Level::Auto, Some(_)) => true,
        (Level::Auto, None) => {
            log::warn!("no annotations available: computing report-level uncertainty only");
            false
        }
        (Level::Sentence | Level::Both, Some(_)) => true,
        (Level::Sentence | Level::Both, None) => {
            return Err(usage(format!(
                "sentence-level uncertainty needs entity annotations, which the {} scorer does not provide; \
                 pass --annotations FILE (see `rrg-uq parse`) or --lexicon FILE",
                scoring.kind.id()
            )))
        }
    };
    let want_reports = level != Level::Sentence;

    prepare_out(&a.out)?;
    let mut summary = String::from("uq:");
    if want_reports {
        let table = score_table(&a.scoring, &scoring, &sets)?;
        let rows = uq::compute_report_uq(&sets, &table)?;
        uq::write_report_u(a.out.join("report_u.jsonl"), &rows)?;
        let _ = write!(
            summary,
            " {} reports (mean u {}, scorer {})",
            rows.len(),
            fmt_mean(mean(rows.iter().map(|r| r.u))),
            table.scorer_id
        );
    }
    if want_sentences {
        let store = scoring.annotations.as_ref().expect("checked above");
        let rows = uq::compute_sentence_uq(&sets, store)?;
        uq::write_sentence_u(a.out.join("sentence_u.jsonl"), &rows)?;
        let empty = rows.iter().filter(|r| r.empty_parse).count();
        let _ = write!(
            summary,
            " {} sentences (mean u {}, {} empty parses)",
            rows.len(),
            fmt_mean(mean(rows.iter().map(|r| r.u))),
            empty
        );
    }
    write_run_config(&a.out, &rc)?;
    println!("{summary}");
    Ok(())
}

fn bare_sets(reports: &[Report]) -> Vec<SampleSet> {
    let mut sets: Vec<SampleSet> = reports
        .iter()
        .map(|r| SampleSet {
            case_id: r.case_id.clone(),
            original: r.clone(),
            samples: Vec::new(),
        })
        .collect();
    sets.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    sets
}

fn cmd_precision(a: PrecisionArgs, file: &FileConfig) -> Result<(), CliError> {
    let mut rc = RunConfig::new("precision");
    let lexicon_path = a.lexicon.as_ref().or(file.lexicon.as_ref());
    require_inputs(
        [
            Some(&a.reports),
            Some(&a.reference),
            a.annotations.as_ref(),
            a.reference_annotations.as_ref(),
            lexicon_path,
        ]
        .into_iter()
        .flatten()
        .map(PathBuf::as_path),
    )?;
    rc.path("reports", &a.reports);
    rc.path("reference", &a.reference);
    rc.opt_path("annotations", a.annotations.as_ref());
    rc.opt_path("reference_annotations", a.reference_annotations.as_ref());
    rc.opt_path("lexicon", lexicon_path);
    rc.path("out", &a.out);

    let lexicon = load_lexicon(lexicon_path.map(PathBuf::as_path))?;
    let originals = load_originals(&a.reports)?.items;
    let sets = bare_sets(&originals);
    let store = match &a.annotations {
        Some(p) => annotate(&sets, AnnotationSource::File(&load_annotations(p)?))?,
        None => annotate(&sets, AnnotationSource::Lexicon(&lexicon))?,
    };
    let references: BTreeMap<String, NodeLabelSet> = match &a.reference_annotations {
        Some(p) => reference_sets(&load_annotations(p)?),
        None => load_originals(&a.reference)?
            .items
            .iter()
            .map(|r| (r.case_id.clone(), extract_entities(&r.text, &lexicon)))
            .collect(),
    };
    let rows = uq::compute_precision(&store, &references)?;
    prepare_out(&a.out)?;
    uq::write_precision(a.out.join("precision.jsonl"), &rows)?;
    write_run_config(&a.out, &rc)?;
    let sentinel = rows.iter().filter(|r| r.p == uq::EMPTY_PARSE_PRECISION).count();
    println!(
        "precision: {} sentences (mean p {}, {} empty parses)",
        rows.len(),
        fmt_mean(mean(rows.iter().filter(|r| r.p >= 0.0).map(|r| r.p))),
        sentinel
    );
    Ok(())
}

fn csv_num(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

fn aligned_correctness(u: &[uq::ReportUncertainty], table: &CorrectnessTable) -> Result<Vec<f64>, CliError> {
    u.iter()
        .map(|r| {
            table.entries.get(&r.case_id).copied().ok_or_else(|| {
                CliError::Data(
                    crate::corpus::CorpusError::InvalidValue {
                        line: 0,
                        field: "case_id",
                        reason: format!("no {} correctness for case {}", table.metric_id, r.case_id),
                    }
                    .into(),
                )
            })
        })
        .collect()
}

fn curve_json(c: &eval::AbstentionCurve) -> serde_json::Value {
    serde_json::to_value(&c.points).expect("curve serializes")
}

fn cmd_evaluate(a: EvaluateArgs, file: &FileConfig) -> Result<(), CliError> {
    let mut rc = RunConfig::new("evaluate");
    let substrings = a.substrings.as_ref().or(file.substrings.as_ref());
    require_inputs(
        [
            Some(&a.report_u),
            a.correctness.as_ref(),
            a.sentence_u.as_ref(),
            a.precision.as_ref(),
            a.reports.as_ref(),
            substrings,
        ]
        .into_iter()
        .flatten()
        .map(PathBuf::as_path),
    )?;
    if a.sentence_u.is_some() != a.precision.is_some() {
        return Err(usage("--sentence-u and --precision must be given together"));
    }
    let bins = a.bins.or(file.bins).unwrap_or(eval::DEFAULT_BINS);
    if bins < 2 {
        return Err(usage("--bins must be at least 2"));
    }
    let fractions = a
        .fractions
        .clone()
        .or_else(|| file.fractions.clone())
        .unwrap_or_else(eval::default_fractions);
    eval::check_fractions(&fractions).map_err(|e| usage(e.to_string()))?;
    let seeds = a
        .seeds
        .clone()
        .or_else(|| file.seeds.clone())
        .unwrap_or_else(|| vec![0, 1, 2, 3, 4]);
    if seeds.is_empty() {
        return Err(usage("--seeds must list at least one seed"));
    }
    let sentinel = a.sentinel.map(SentinelPolicy::from).or(file.sentinel).unwrap_or_default();
    let options = MatchOptions {
        word_boundary: a.word_boundary || file.word_boundary.unwrap_or(false),
        once_per_substring: a.once_per_substring || file.once_per_substring.unwrap_or(false),
    };
    rc.path("report_u", &a.report_u);
    rc.opt_path("correctness", a.correctness.as_ref());
    rc.opt_path("sentence_u", a.sentence_u.as_ref());
    rc.opt_path("precision", a.precision.as_ref());
    rc.opt_path("reports", a.reports.as_ref());
    rc.opt_path("substrings", substrings);
    rc.path("out", &a.out);
    rc.bins = Some(bins);
    rc.fractions = Some(fractions.clone());
    rc.seeds = Some(seeds.clone());
    rc.sentinel = Some(sentinel);

    let mut report_u = uq::load_report_u(&a.report_u)?;
    report_u.sort_by(|x, y| x.case_id.cmp(&y.case_id));
    let us: Vec<f64> = report_u.iter().map(|r| r.u).collect();
    let tables = match &a.correctness {
        Some(p) => load_correctness(p)?.items,
        None => Vec::new(),
    };
    let metric = a.metric.clone().or_else(|| file.metric.clone());
    if let Some(m) = &metric {
        if !tables.is_empty() && !tables.iter().any(|t| &t.metric_id == m) {
            return Err(usage(format!("metric `{m}` not found in correctness file")));
        }
    }
    rc.metric = metric.clone();
    let mut errors: Vec<String> = Vec::new();

    let mut calibration = String::from("metric_id,pearson,rce,B,N\n");
    let mut metrics_json = serde_json::Map::new();
    let mut aligned: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for table in &tables {
        let fs = aligned_correctness(&report_u, table)?;
        let r = eval::pearson(&us, &fs);
        let c = eval::empirical_rce(&us, &fs, bins);
        for (what, res) in [("pearson", &r), ("rce", &c)] {
            if let Err(e) = res {
                log::warn!("{}: {what}: {e}", table.metric_id);
                errors.push(format!("{}: {what}: {e}", table.metric_id));
            }
        }
        let _ = writeln!(
            calibration,
            "{},{},{},{},{}",
            table.metric_id,
            csv_num(r.as_ref().ok().copied()),
            csv_num(c.as_ref().ok().copied()),
            bins,
            us.len()
        );
        metrics_json.insert(
            table.metric_id.clone(),
            json!({
                "pearson": r.as_ref().ok(),
                "rce": c.as_ref().ok(),
                "B": bins,
                "N": us.len(),
            }),
        );
        aligned.insert(table.metric_id.clone(), fs);
    }

    let primary = metric.or_else(|| {
        if aligned.contains_key("green") {
            Some("green".to_string())
        } else {
            aligned.keys().next().cloned()
        }
    });
    let mut abstention = String::from("policy,fraction,mean_correctness,relative_improvement\n");
    let mut abstention_json = serde_json::Value::Null;
    if let Some(m) = &primary {
        let fs = &aligned[m];
        let guided = eval::abstention_curve(&us, fs, &fractions);
        let random = eval::random_abstention_baseline(fs, &fractions, &seeds);
        let mut section = serde_json::Map::new();
        section.insert("metric".into(), json!(m));
        for (policy, res) in [("guided", &guided), ("random", &random)] {
            match res {
                Ok(curve) => {
                    for p in &curve.points {
                        let _ = writeln!(
                            abstention,
                            "{policy},{},{},{}",
                            p.fraction, p.mean_correctness, p.relative_improvement
                        );
                    }
                    section.insert(policy.into(), curve_json(curve));
                }
                Err(e) => {
                    log::warn!("abstention ({policy}): {e}");
                    errors.push(format!("abstention ({policy}): {e}"));
                }
            }
        }
        abstention_json = section.into();
    }

    let mut alignment = String::from("max_u_min_p_rate,min_u_max_p_rate,n_evaluated,n_excluded\n");
    let mut alignment_json = serde_json::Value::Null;
    let mut sentence_pearson = serde_json::Value::Null;
    if let (Some(su), Some(sp)) = (&a.sentence_u, &a.precision) {
        let su = uq::load_sentence_u(su)?;
        let sp = uq::load_precision(sp)?;
        match ReportSentences::group(&su, &sp).and_then(|g| eval::alignment_rates(&g, sentinel)) {
            Ok(r) => {
                let _ = writeln!(
                    alignment,
                    "{},{},{},{}",
                    r.max_u_min_p_rate, r.min_u_max_p_rate, r.n_evaluated, r.n_excluded
                );
                alignment_json = serde_json::to_value(&r).expect("alignment serializes");
            }
            Err(e) => {
                log::warn!("alignment: {e}");
                errors.push(format!("alignment: {e}"));
            }
        }
        match eval::sentence_pairs(&su, &sp, SentinelPolicy::Exclude).and_then(|(u, p)| eval::pearson(&u, &p)) {
            Ok(r) => sentence_pearson = json!(r),
            Err(e) => {
                log::warn!("sentence pearson: {e}");
                errors.push(format!("sentence pearson: {e}"));
            }
        }
    }

    let mut hallucination = String::from("policy,fraction,pct_with_priors,mean_substrings\n");
    let mut hallucination_json = serde_json::Value::Null;
    if let Some(reports) = &a.reports {
        let matcher = match substrings {
            Some(p) => PriorMatcher::from_path(p, options)?,
            None => PriorMatcher::default_list(options),
        };
        rc.match_options = Some(options);
        let originals = load_originals(reports)?.items;
        let detections = matcher.detect_all(
            originals
                .iter()
                .map(|r| (r.case_id.as_str(), r.text.as_str()))
                .collect::<Vec<_>>(),
        );
        match prior::hallucination_abstention_effect(&report_u, &detections, &fractions, &seeds) {
            Ok(rows) => {
                for r in &rows {
                    let _ = writeln!(
                        hallucination,
                        "{},{},{},{}",
                        r.policy, r.rejected_fraction, r.pct_reports_with_priors, r.mean_substrings_per_report
                    );
                }
                hallucination_json = serde_json::to_value(&rows).expect("rows serialize");
            }
            Err(e) => {
                log::warn!("hallucination: {e}");
                errors.push(format!("hallucination: {e}"));
            }
        }
    }

    prepare_out(&a.out)?;
    write_text(&a.out.join("calibration.csv"), &calibration)?;
    write_text(&a.out.join("abstention.csv"), &abstention)?;
    write_text(&a.out.join("alignment.csv"), &alignment)?;
    write_text(&a.out.join("hallucination.csv"), &hallucination)?;
    let summary = json!({
        "n_reports": us.len(),
        "metrics": metrics_json,
        "abstention": abstention_json,
        "alignment": alignment_json,
        "sentence_pearson": sentence_pearson,
        "hallucination": hallucination_json,
        "errors": errors,
    });
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    write_text(&a.out.join("summary.json"), &text)?;
    write_run_config(&a.out, &rc)?;
    println!(
        "evaluate: {} reports, {} metrics, {} errors",
        us.len(),
        tables.len(),
        errors.len()
    );
    Ok(())
}

fn cmd_prune(a: PruneArgs) -> Result<(), CliError> {
    let mut rc = RunConfig::new("prune");
    require_inputs([a.reports.as_path(), a.sentence_u.as_path()])?;
    eval::check_fractions(&[a.fraction]).map_err(|e| usage(e.to_string()))?;
    rc.path("reports", &a.reports);
    rc.path("sentence_u", &a.sentence_u);
    rc.path("out", &a.out);
    rc.fraction = Some(a.fraction);
    let reports = load_originals(&a.reports)?.items;
    let su = uq::load_sentence_u(&a.sentence_u)?;
    let result = eval::prune_sentences(&reports, &su, a.fraction)?;
    prepare_out(&a.out)?;
    let path = a.out.join("pruned_reports.jsonl");
    let file = std::fs::File::create(&path).map_err(|e| CliError::Data(crate::Error::io(&path, e)))?;
    write_jsonl(std::io::BufWriter::new(file), &result.reports).map_err(|e| CliError::Data(crate::Error::io(&path, e)))?;
    write_run_config(&a.out, &rc)?;
    let emptied = result.reports.iter().filter(|r| r.emptied).count();
    println!(
        "prune: removed {} of {} sentences, {} reports emptied",
        result.removed_total, result.sentence_total, emptied
    );
    Ok(())
}

fn cmd_synth(a: SynthArgs, file: &FileConfig) -> Result<(), CliError> {
    let mut cfg = file.synth.clone().unwrap_or_default();
    if let Some(v) = a.n_cases {
        cfg.n_cases = v;
    }
    if let Some(v) = a.samples_per_case.or(file.t) {
        cfg.t = v;
    }
    if let Some(v) = a.min_sentences {
        cfg.sentences_per_report.0 = v;
    }
    if let Some(v) = a.max_sentences {
        cfg.sentences_per_report.1 = v;
    }
    if let Some(v) = a.pool_size {
        cfg.entity_pool_size = v;
    }
    if let Some(v) = a.corruption_rate {
        cfg.corruption_rate = v;
    }
    if let Some(v) = a.hallucination_rate {
        cfg.hallucination_rate = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.difficulty_spread {
        cfg.difficulty_spread = v;
    }
    if a.planted {
        cfg.planted_errors = true;
    }
    if a.coupled {
        cfg.hallucination_mode = HallucinationMode::Coupled;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let corpus = match a.threads {
        Some(0) => return Err(usage("--threads must be at least 1")),
        Some(n) => synth::generate_with_threads(&cfg, n)?,
        None => synth::generate(&cfg)?,
    };
    corpus.write(&a.out)?;
    let mut rc = RunConfig::new("synth");
    rc.path("out", &a.out);
    rc.synth = Some(cfg);
    write_run_config(&a.out, &rc)?;
    println!("synth: {} cases written to {}", corpus.cases.len(), a.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_subcommand() {
        for args in [
            "rrg-uq parse --reports r --samples s --out o",
            "rrg-uq uq --reports r --samples s --scorer lexical --level report --out o",
            "rrg-uq evaluate --report-u u --fractions 0,0.1 --seeds 1,2 --out o",
            "rrg-uq synth --n-cases 3 --planted --out o",
            "rrg-uq prune --reports r --sentence-u s --fraction 0.1 --out o",
        ] {
            Cli::try_parse_from(args.split(' ')).unwrap();
        }
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["rrg-uq", "uq", "--reports"]), EXIT_USAGE);
        assert_eq!(
            run(["rrg-uq", "parse", "--reports", "/nonexistent/r.jsonl", "--samples", "/nonexistent/s", "--out", "/tmp/x"]),
            EXIT_USAGE
        );
    }

    #[test]
    fn config_file_rejects_unknown_keys() {
        assert!(toml::from_str::<FileConfig>("bogus = 1").is_err());
        let c: FileConfig = toml::from_str("T = 5\nbins = 10\n[synth]\nn_cases = 7\n").unwrap();
        assert_eq!(c.t, Some(5));
        assert_eq!(c.synth.unwrap().n_cases, 7);
    }
}
