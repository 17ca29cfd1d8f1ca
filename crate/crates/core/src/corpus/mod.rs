//! Data model, JSONL ingestion and cross-file validation.
//!
//! Every text is normalized (NFC, single spaces, trimmed) on construction, so
//! a loaded collection can be written back and reloaded without change.

pub(crate) mod jsonl;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parser::segment_sentences;
use crate::text::normalize;

pub use jsonl::write_jsonl;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed JSON: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: missing field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: invalid `{field}`: {reason}")]
    InvalidValue {
        line: usize,
        field: &'static str,
        reason: String,
    },
    #[error("duplicate key {0}")]
    DuplicateKey(String),
    #[error("case {case_id}: found {found} samples, expected {expected}")]
    SampleCountMismatch {
        case_id: String,
        found: usize,
        expected: usize,
    },
    #[error("case {case_id}: sample indices are not contiguous from 1 (missing t={missing})")]
    SampleIndexGap { case_id: String, missing: usize },
    #[error("sampled report for case {0} has no original report")]
    OrphanSample(String),
    #[error("case {case_id}, sample {t}: score {value} outside [0, 1]")]
    ScoreOutOfRange { case_id: String, t: usize, value: f64 },
    #[error("case {case_id}: no score for sample {t}")]
    MissingPair { case_id: String, t: usize },
    #[error("line {line}: {field} `{found}` differs from `{expected}` used earlier in the file")]
    InconsistentId {
        line: usize,
        field: &'static str,
        found: String,
        expected: String,
    },
}

/// Non-fatal conditions found while loading.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    EmptyInput(String),
    ShortSampleSet {
        case_id: String,
        found: usize,
        expected: usize,
    },
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Warning::EmptyInput(path) => write!(f, "{path} is empty"),
            Warning::ShortSampleSet {
                case_id,
                found,
                expected,
            } => write!(f, "case {case_id}: using {found} samples (expected {expected})"),
        }
    }
}

/// A loaded collection together with any warnings raised on the way.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub items: T,
    pub warnings: Vec<Warning>,
}

impl<T> Loaded<T> {
    fn new(items: T) -> Self {
        Loaded {
            items,
            warnings: Vec::new(),
        }
    }

    fn warn(&mut self, w: Warning) {
        log::warn!("{w}");
        self.warnings.push(w);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strictness {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sentence {
    pub case_id: String,
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub case_id: String,
    pub text: String,
    pub sentences: Vec<Sentence>,
}

impl Report {
    /// Normalizes `text` and segments it into sentences.
    pub fn new(case_id: impl Into<String>, text: &str) -> Self {
        let case_id = case_id.into();
        let text = normalize(text);
        let sentences = segment_sentences(&text)
            .into_iter()
            .enumerate()
            .map(|(index, text)| Sentence {
                case_id: case_id.clone(),
                index,
                text,
            })
            .collect();
        Report {
            case_id,
            text,
            sentences,
        }
    }
}

/// One line of `samples.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    pub sample_index: usize,
    pub report: Report,
}

/// The original report plus its `T` sampled reports; `samples[t - 1]` is sample `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    pub case_id: String,
    pub original: Report,
    pub samples: Vec<Report>,
}

impl SampleSet {
    pub fn t(&self) -> usize {
        self.samples.len()
    }
}

#[derive(Serialize)]
struct ReportLine<'a> {
    case_id: &'a str,
    text: &'a str,
}

#[derive(Serialize)]
struct SampleLine<'a> {
    case_id: &'a str,
    sample_index: usize,
    text: &'a str,
}

fn warn_if_empty<T>(path: &Path, loaded: &mut Loaded<Vec<T>>) {
    if loaded.items.is_empty() {
        loaded.warn(Warning::EmptyInput(path.display().to_string()));
    }
}

/// Loads `reports.jsonl`: `{"case_id", "text"}` per line, input order kept.
pub fn load_originals(path: impl AsRef<Path>) -> Result<Loaded<Vec<Report>>, CorpusError> {
    let path = path.as_ref();
    let mut seen = HashSet::new();
    let mut out = Loaded::new(Vec::new());
    for line in jsonl::read_lines(path)? {
        let case_id = line.case_id()?;
        let text = line.str("text")?;
        if !seen.insert(case_id.clone()) {
            return Err(CorpusError::DuplicateKey(case_id));
        }
        out.items.push(Report::new(case_id, text));
    }
    warn_if_empty(path, &mut out);
    Ok(out)
}

/// Loads `samples.jsonl`: `{"case_id", "sample_index", "text"}` per line.
pub fn load_samples(path: impl AsRef<Path>) -> Result<Loaded<Vec<SampleRecord>>, CorpusError> {
    let path = path.as_ref();
    let mut seen = HashSet::new();
    let mut out = Loaded::new(Vec::new());
    for line in jsonl::read_lines(path)? {
        let case_id = line.case_id()?;
        let sample_index = line.sample_index()?;
        let text = line.str("text")?;
        if !seen.insert((case_id.clone(), sample_index)) {
            return Err(CorpusError::DuplicateKey(format!("{case_id}#{sample_index}")));
        }
        out.items.push(SampleRecord {
            sample_index,
            report: Report::new(case_id, text),
        });
    }
    warn_if_empty(path, &mut out);
    Ok(out)
}

/// Joins originals with their samples, in ascending `case_id` order.
///
/// A case must carry samples `1..=T` with no gaps. In strict mode `T` must
/// equal `expected_t`; lenient mode accepts any `T >= 1` and warns when it
/// differs.
pub fn assemble_sample_sets(
    originals: &[Report],
    samples: &[SampleRecord],
    expected_t: usize,
    strictness: Strictness,
) -> Result<Loaded<Vec<SampleSet>>, CorpusError> {
    let mut by_case: HashMap<&str, BTreeMap<usize, &Report>> = HashMap::new();
    for s in samples {
        by_case
            .entry(s.report.case_id.as_str())
            .or_default()
            .insert(s.sample_index, &s.report);
    }
    let known: HashSet<&str> = originals.iter().map(|r| r.case_id.as_str()).collect();
    let mut orphans: Vec<&str> = by_case.keys().filter(|c| !known.contains(*c)).copied().collect();
    orphans.sort_unstable();
    if let Some(c) = orphans.first() {
        return Err(CorpusError::OrphanSample(c.to_string()));
    }

    let mut sorted: Vec<&Report> = originals.iter().collect();
    sorted.sort_by(|a, b| a.case_id.cmp(&b.case_id));

    let mut out = Loaded::new(Vec::with_capacity(sorted.len()));
    for original in sorted {
        let per_case = by_case.remove(original.case_id.as_str()).unwrap_or_default();
        let found = per_case.len();
        if found == 0 || (found != expected_t && strictness == Strictness::Strict) {
            return Err(CorpusError::SampleCountMismatch {
                case_id: original.case_id.clone(),
                found,
                expected: expected_t,
            });
        }
        if let Some(missing) = (1..=found).find(|t| !per_case.contains_key(t)) {
            return Err(CorpusError::SampleIndexGap {
                case_id: original.case_id.clone(),
                missing,
            });
        }
        if found != expected_t {
            out.warn(Warning::ShortSampleSet {
                case_id: original.case_id.clone(),
                found,
                expected: expected_t,
            });
        }
        out.items.push(SampleSet {
            case_id: original.case_id.clone(),
            original: original.clone(),
            samples: per_case.into_values().cloned().collect(),
        });
    }
    Ok(out)
}

fn create(path: &Path) -> crate::Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| crate::Error::io(path, e))
}

pub fn write_originals(path: impl AsRef<Path>, reports: &[Report]) -> crate::Result<()> {
    let path = path.as_ref();
    let lines = reports.iter().map(|r| ReportLine {
        case_id: &r.case_id,
        text: &r.text,
    });
    write_jsonl(create(path)?, lines).map_err(|e| crate::Error::io(path, e))
}

pub fn write_samples(path: impl AsRef<Path>, samples: &[SampleRecord]) -> crate::Result<()> {
    let path = path.as_ref();
    let lines = samples.iter().map(|s| SampleLine {
        case_id: &s.report.case_id,
        sample_index: s.sample_index,
        text: &s.report.text,
    });
    write_jsonl(create(path)?, lines).map_err(|e| crate::Error::io(path, e))
}

/// Pairwise factuality `F(original, sample_t)` keyed by `(case_id, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub scorer_id: String,
    pub entries: BTreeMap<(String, usize), f64>,
}

#[derive(Serialize)]
struct ScoreLine<'a> {
    case_id: &'a str,
    sample_index: usize,
    score: f64,
    scorer_id: &'a str,
}

impl ScoreTable {
    pub fn new(scorer_id: impl Into<String>) -> Self {
        ScoreTable {
            scorer_id: scorer_id.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn get(&self, case_id: &str, t: usize) -> Option<f64> {
        self.entries.get(&(case_id.to_string(), t)).copied()
    }

    /// Scores for samples `1..=T` of one case, in order.
    pub fn scores_for(&self, case_id: &str, t_count: usize) -> Result<Vec<f64>, CorpusError> {
        (1..=t_count)
            .map(|t| {
                self.get(case_id, t).ok_or_else(|| CorpusError::MissingPair {
                    case_id: case_id.to_string(),
                    t,
                })
            })
            .collect()
    }

    /// Every sample of every set has a score.
    pub fn check_complete(&self, sets: &[SampleSet]) -> Result<(), CorpusError> {
        for set in sets {
            self.scores_for(&set.case_id, set.t())?;
        }
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> crate::Result<()> {
        let path = path.as_ref();
        let lines = self.entries.iter().map(|((case_id, t), score)| ScoreLine {
            case_id,
            sample_index: *t,
            score: *score,
            scorer_id: &self.scorer_id,
        });
        write_jsonl(create(path)?, lines).map_err(|e| crate::Error::io(path, e))
    }
}

/// Loads `scores.jsonl`. Per case, the indices present must run `1..=max`.
pub fn load_pair_scores(path: impl AsRef<Path>) -> Result<Loaded<ScoreTable>, CorpusError> {
    let path = path.as_ref();
    let mut table = ScoreTable::new("precomputed");
    let mut scorer: Option<String> = None;
    for line in jsonl::read_lines(path)? {
        let case_id = line.case_id()?;
        let t = line.sample_index()?;
        let value = line.finite("score")?;
        let id = line.str("scorer_id")?;
        match &scorer {
            None => scorer = Some(id.to_string()),
            Some(prev) if prev != id => {
                return Err(CorpusError::InconsistentId {
                    line: line.no,
                    field: "scorer_id",
                    found: id.to_string(),
                    expected: prev.clone(),
                })
            }
            Some(_) => {}
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(CorpusError::ScoreOutOfRange { case_id, t, value });
        }
        if table.entries.insert((case_id.clone(), t), value).is_some() {
            return Err(CorpusError::DuplicateKey(format!("{case_id}#{t}")));
        }
    }
    if let Some(id) = scorer {
        table.scorer_id = id;
    }
    let mut max_t: BTreeMap<&str, usize> = BTreeMap::new();
    for (case_id, t) in table.entries.keys() {
        let m = max_t.entry(case_id).or_default();
        *m = (*m).max(*t);
    }
    for (case_id, max) in &max_t {
        table.scores_for(case_id, *max)?;
    }
    let mut out = Loaded::new(table);
    if out.items.entries.is_empty() {
        out.warn(Warning::EmptyInput(path.display().to_string()));
    }
    Ok(out)
}

/// Ground-truth correctness per case for one metric. Used by evaluation only.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrectnessTable {
    pub metric_id: String,
    pub entries: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct CorrectnessLine<'a> {
    case_id: &'a str,
    score: f64,
    metric_id: &'a str,
}

impl CorrectnessTable {
    pub fn write_all(path: impl AsRef<Path>, tables: &[CorrectnessTable]) -> crate::Result<()> {
        let path = path.as_ref();
        let lines = tables.iter().flat_map(|t| {
            t.entries.iter().map(move |(case_id, score)| CorrectnessLine {
                case_id,
                score: *score,
                metric_id: &t.metric_id,
            })
        });
        write_jsonl(create(path)?, lines).map_err(|e| crate::Error::io(path, e))
    }
}

/// Loads `correctness.jsonl`, one table per `metric_id`, sorted by metric.
pub fn load_correctness(path: impl AsRef<Path>) -> Result<Loaded<Vec<CorrectnessTable>>, CorpusError> {
    let path = path.as_ref();
    let mut tables: BTreeMap<String, CorrectnessTable> = BTreeMap::new();
    for line in jsonl::read_lines(path)? {
        let case_id = line.case_id()?;
        let score = line.finite("score")?;
        let metric = line.str("metric_id")?.to_string();
        let table = tables.entry(metric.clone()).or_insert_with(|| CorrectnessTable {
            metric_id: metric.clone(),
            entries: BTreeMap::new(),
        });
        if table.entries.insert(case_id.clone(), score).is_some() {
            return Err(CorpusError::DuplicateKey(format!("{metric}/{case_id}")));
        }
    }
    let mut out = Loaded::new(tables.into_values().collect::<Vec<_>>());
    warn_if_empty(path, &mut out);
    Ok(out)
}
