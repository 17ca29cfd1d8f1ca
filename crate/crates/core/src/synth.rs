//! Synthetic corpora with known ground truth.
//!
//! Each case has a ground-truth report made of one observation per sentence,
//! optionally located at an anatomy term. Texts are rendered from entity sets
//! with fixed templates that the shipped lexicon parses back exactly, so the
//! latent sets recorded in the sidecar are what the pipeline should recover.
//!
//! Two generative modes:
//!
//! * sampled: the original report is the ground truth corrupted at a per-case
//!   rate `d`, and every sample corrupts the original again at rate `d`;
//! * planted: the original is the ground truth with one sentence falsified,
//!   and samples corrupt the ground truth at rate `d`.
//!
//! Corruption acts on each pair independently. An observation is dropped with
//! probability `d/2` and has its presence label flipped with probability
//! `d/2`; an anatomy pair has no label to flip and is dropped with
//! probability `d`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, CorrectnessTable, Report, SampleRecord, SampleSet};
use crate::factuality::{entity_f1, green_from_counts, GreenCountTable, GreenCounts};
use crate::parser::{extract_entities, AnnotationMap, EntityLabel, Lexicon, NodeLabelPair, NodeLabelSet, UnitKey};
use crate::prior::{MatchOptions, PriorMatcher};
use crate::uq::{
    ReportUncertainty, SentencePrecision, SentenceUncertainty, UncertaintyTable, EMPTY_PARSE_PRECISION,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("cannot read sidecar: {0}")]
    Sidecar(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HallucinationMode {
    /// Each original gets a prior-exam phrase with probability `h`.
    #[default]
    Independent,
    /// The hardest `h` share of cases (by latent draw) get the phrase.
    Coupled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_cases: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub sentences_per_report: (usize, usize),
    pub entity_pool_size: usize,
    pub corruption_rate: f64,
    pub hallucination_rate: f64,
    pub seed: u64,
    /// Per-case rate is `clamp(p * (1 + s * (2w - 1)), 0, 1)` with `w ~ U(0, 1)`.
    pub difficulty_spread: f64,
    pub planted_errors: bool,
    pub hallucination_mode: HallucinationMode,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_cases: 100,
            t: 10,
            sentences_per_report: (2, 6),
            entity_pool_size: 60,
            corruption_rate: 0.3,
            hallucination_rate: 0.0,
            seed: 0,
            difficulty_spread: 0.0,
            planted_errors: false,
            hallucination_mode: HallucinationMode::Independent,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::ConfigInvalid(m));
        let (lo, hi) = self.sentences_per_report;
        if self.n_cases < 1 {
            return bad("n_cases must be at least 1".into());
        }
        if self.t < 1 {
            return bad("T must be at least 1".into());
        }
        if lo < 1 || lo > hi {
            return bad(format!("sentences_per_report ({lo}, {hi}) must satisfy 1 <= min <= max"));
        }
        for (name, v) in [("corruption_rate", self.corruption_rate), ("hallucination_rate", self.hallucination_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} is outside [0, 1]"));
            }
        }
        if !self.difficulty_spread.is_finite() || self.difficulty_spread < 0.0 {
            return bad(format!("difficulty_spread {} must be finite and nonnegative", self.difficulty_spread));
        }
        if self.entity_pool_size < hi + 1 {
            return bad(format!(
                "entity_pool_size {} must exceed the maximum sentence count {hi}",
                self.entity_pool_size
            ));
        }
        Ok(())
    }
}

/// Phrases that reference an earlier exam and contain no lexicon entity.
const PRIOR_PHRASES: &[&str] = &[
    "Compared to the prior study.",
    "Similar to the previous exam.",
    "Unchanged since the prior radiograph.",
    "As before.",
    "Again seen on the earlier film.",
    "Stable since the last exam.",
];

struct Pool {
    observations: Vec<String>,
    anatomy: Vec<String>,
    phrases: Vec<&'static str>,
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// A rendered clause: an optional observation with its label and an optional
/// anatomy term. Never both absent.
#[derive(Debug, Clone, PartialEq)]
struct Clause {
    obs: Option<(String, EntityLabel)>,
    anat: Option<String>,
}

impl Clause {
    fn render(&self) -> String {
        match (&self.obs, &self.anat) {
            (Some((o, EntityLabel::ObsDa)), Some(a)) => format!("No {o} in the {a}."),
            (Some((o, EntityLabel::ObsDa)), None) => format!("No {o}."),
            (Some((o, EntityLabel::ObsU)), Some(a)) => format!("Possible {o} in the {a}."),
            (Some((o, EntityLabel::ObsU)), None) => format!("Possible {o}."),
            (Some((o, _)), Some(a)) => format!("{} in the {a}.", capitalize(o)),
            (Some((o, _)), None) => format!("{} present.", capitalize(o)),
            (None, Some(a)) => format!("{} noted.", capitalize(a)),
            (None, None) => unreachable!("empty clauses are never rendered"),
        }
    }

    fn pairs(&self) -> NodeLabelSet {
        let mut set = NodeLabelSet::new();
        if let Some((o, l)) = &self.obs {
            set.insert(NodeLabelPair::new(o.clone(), *l));
        }
        if let Some(a) = &self.anat {
            set.insert(NodeLabelPair::new(a.clone(), EntityLabel::AnatDp));
        }
        set
    }
}

fn flip(label: EntityLabel) -> EntityLabel {
    match label {
        EntityLabel::ObsDp => EntityLabel::ObsDa,
        EntityLabel::ObsDa => EntityLabel::ObsDp,
        EntityLabel::ObsU => EntityLabel::ObsDp,
        EntityLabel::AnatDp => EntityLabel::AnatDp,
    }
}

impl Pool {
    fn build(lexicon: &Lexicon, size: usize) -> Result<Pool, SynthError> {
        let priors = PriorMatcher::default_list(MatchOptions::default());
        let probe_obs = "opacity";
        let probe_anat = "lung";
        let round_trips = |c: &Clause| {
            let text = c.render();
            extract_entities(&text, lexicon) == c.pairs() && !priors.detect("", &text).flagged
        };
        let labels = [EntityLabel::ObsDp, EntityLabel::ObsDa, EntityLabel::ObsU];
        let mut observations: Vec<String> = lexicon
            .observation_terms()
            .filter(|o| {
                labels.iter().all(|&l| {
                    [None, Some(probe_anat.to_string())].into_iter().all(|anat| {
                        round_trips(&Clause {
                            obs: Some((o.to_string(), l)),
                            anat,
                        })
                    })
                })
            })
            .map(str::to_string)
            .collect();
        let mut anatomy: Vec<String> = lexicon
            .anatomy_terms()
            .filter(|a| {
                let a = Some(a.to_string());
                round_trips(&Clause { obs: None, anat: a.clone() })
                    && labels.iter().all(|&l| {
                        round_trips(&Clause {
                            obs: Some((probe_obs.to_string(), l)),
                            anat: a.clone(),
                        })
                    })
            })
            .map(str::to_string)
            .collect();
        observations.sort();
        anatomy.sort();
        observations.truncate(size);
        anatomy.truncate(size);
        let phrases: Vec<&'static str> = PRIOR_PHRASES
            .iter()
            .copied()
            .filter(|p| extract_entities(p, lexicon).is_empty() && priors.detect("", p).flagged)
            .collect();
        if observations.len() < size || anatomy.len() < size || phrases.is_empty() {
            return Err(SynthError::ConfigInvalid(format!(
                "lexicon supports at most {} observation and {} anatomy terms",
                observations.len(),
                anatomy.len()
            )));
        }
        Ok(Pool {
            observations,
            anatomy,
            phrases,
        })
    }
}

type PairList = Vec<(String, EntityLabel)>;

fn to_list(set: &NodeLabelSet) -> PairList {
    set.iter().map(|p| (p.entity.clone(), p.label)).collect()
}

fn to_set(list: &[(String, EntityLabel)]) -> NodeLabelSet {
    list.iter().map(|(e, l)| NodeLabelPair::new(e.clone(), *l)).collect()
}

/// Every latent quantity of one case. One sidecar line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarCase {
    pub case_id: String,
    pub latent: f64,
    pub difficulty: f64,
    pub ground_truth: PairList,
    /// Pairs of each original sentence, in text order; a prior-exam phrase
    /// appears as an empty list.
    pub original_sentences: Vec<PairList>,
    pub original_prior: bool,
    pub planted_sentence: Option<usize>,
    /// Report-level pairs of samples `1..=T`.
    pub samples: Vec<PairList>,
    pub sample_priors: Vec<bool>,
    pub true_precision: Vec<f64>,
    pub pairwise_f: Vec<f64>,
    pub correctness: f64,
    pub correctness_counts: GreenCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCase {
    pub sidecar: SidecarCase,
    pub original_text: String,
    pub ground_truth_text: String,
    pub sample_texts: Vec<String>,
    /// GREEN counts of the original against each sample.
    pub pair_counts: Vec<GreenCounts>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub cases: Vec<SynthCase>,
}

/// GREEN-style counts with `pred` as the candidate and `reference` as truth.
///
/// Pairs of `pred` absent from `reference` are false findings (a), or wrong
/// locations (c) for anatomy; reference entities never mentioned by `pred`
/// are omissions (b); an unsupported prior-exam reference is (e) and a
/// missing one is (f).
pub fn green_counts_between(
    pred: &NodeLabelSet,
    reference: &NodeLabelSet,
    pred_prior: bool,
    reference_prior: bool,
) -> GreenCounts {
    let mut errors = [0u64; 6];
    for p in pred.iter().filter(|p| !reference.contains(p)) {
        if p.label == EntityLabel::AnatDp {
            errors[2] += 1;
        } else {
            errors[0] += 1;
        }
    }
    let mentioned: std::collections::BTreeSet<&str> = pred.iter().map(|p| p.entity.as_str()).collect();
    errors[1] = reference.iter().filter(|r| !mentioned.contains(r.entity.as_str())).count() as u64;
    errors[4] = u64::from(pred_prior && !reference_prior);
    errors[5] = u64::from(reference_prior && !pred_prior);
    GreenCounts {
        matched: pred.overlap(reference) as u64,
        errors,
    }
}

fn corrupt(clauses: &[Clause], rate: f64, rng: &mut ChaCha8Rng) -> Vec<Clause> {
    let mut out = Vec::with_capacity(clauses.len());
    for c in clauses {
        let r_obs: f64 = rng.random();
        let r_anat: f64 = rng.random();
        let obs = c.obs.as_ref().and_then(|(o, l)| {
            if r_obs < rate / 2.0 {
                None
            } else if r_obs < rate {
                Some((o.clone(), flip(*l)))
            } else {
                Some((o.clone(), *l))
            }
        });
        let anat = c.anat.clone().filter(|_| r_anat >= rate);
        if obs.is_some() || anat.is_some() {
            out.push(Clause { obs, anat });
        }
    }
    out
}

/// Renders clauses, optionally inserting a prior-exam phrase; returns the
/// text and per-sentence pair lists.
fn render(clauses: &[Clause], prior: Option<(usize, &str)>) -> (String, Vec<PairList>) {
    let mut sentences: Vec<(String, PairList)> = clauses.iter().map(|c| (c.render(), to_list(&c.pairs()))).collect();
    if let Some((at, phrase)) = prior {
        sentences.insert(at.min(sentences.len()), (phrase.to_string(), Vec::new()));
    }
    let text = sentences.iter().map(|(s, _)| s.as_str()).collect::<Vec<_>>().join(" ");
    (text, sentences.into_iter().map(|(_, p)| p).collect())
}

fn union(lists: &[PairList]) -> NodeLabelSet {
    let mut set = NodeLabelSet::new();
    for l in lists {
        set.union_with(&to_set(l));
    }
    set
}

fn generate_case(cfg: &SynthConfig, pool: &Pool, i: usize) -> SynthCase {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(i as u64);
    let latent: f64 = rng.random();
    let p = cfg.corruption_rate;
    let difficulty = (p * (1.0 + cfg.difficulty_spread * (2.0 * latent - 1.0))).clamp(0.0, 1.0);
    let (lo, hi) = cfg.sentences_per_report;
    let n = rng.random_range(lo..=hi);
    let obs = sample_indices(&mut rng, pool.observations.len(), n).into_vec();
    let anat = sample_indices(&mut rng, pool.anatomy.len(), n + 1).into_vec();

    let truth: Vec<Clause> = (0..n)
        .map(|j| {
            let r: f64 = rng.random();
            let label = if r < 0.4 {
                EntityLabel::ObsDp
            } else if r < 0.85 {
                EntityLabel::ObsDa
            } else {
                EntityLabel::ObsU
            };
            let located: bool = rng.random_bool(0.5);
            Clause {
                obs: Some((pool.observations[obs[j]].clone(), label)),
                anat: located.then(|| pool.anatomy[anat[j]].clone()),
            }
        })
        .collect();
    let truth_set: NodeLabelSet = {
        let mut s = NodeLabelSet::new();
        truth.iter().for_each(|c| s.union_with(&c.pairs()));
        s
    };

    let (original, belief, planted) = if cfg.planted_errors {
        let j = rng.random_range(0..n);
        let mut original = truth.clone();
        let c = &mut original[j];
        if let Some((_, l)) = c.obs.as_mut() {
            *l = flip(*l);
        }
        if c.anat.is_some() {
            c.anat = Some(pool.anatomy[anat[n]].clone());
        }
        (original, truth.clone(), Some(j))
    } else {
        let original = corrupt(&truth, difficulty, &mut rng);
        let belief = original.clone();
        (original, belief, None)
    };

    let h = cfg.hallucination_rate;
    let draw: f64 = rng.random();
    let inject = match cfg.hallucination_mode {
        HallucinationMode::Independent => draw < h,
        HallucinationMode::Coupled => latent > 1.0 - h,
    };
    let phrase_at = rng.random_range(0..=original.len());
    let phrase = pool.phrases[rng.random_range(0..pool.phrases.len())];
    let (original_text, original_sentences) = render(&original, inject.then_some((phrase_at, phrase)));
    // A planted index refers to the clause list; shift it past an inserted phrase.
    let planted_sentence = planted.map(|j| if inject && phrase_at <= j { j + 1 } else { j });
    let original_set = union(&original_sentences);

    let mut sample_texts = Vec::with_capacity(cfg.t);
    let mut samples = Vec::with_capacity(cfg.t);
    let mut sample_priors = Vec::with_capacity(cfg.t);
    for _ in 0..cfg.t {
        let clauses = corrupt(&belief, difficulty, &mut rng);
        let prior = rng.random::<f64>() < h;
        let at = rng.random_range(0..=clauses.len());
        let phrase = pool.phrases[rng.random_range(0..pool.phrases.len())];
        let (text, sentences) = render(&clauses, prior.then_some((at, phrase)));
        sample_texts.push(text);
        samples.push(to_list(&union(&sentences)));
        sample_priors.push(prior);
    }

    let true_precision = original_sentences
        .iter()
        .map(|s| {
            if s.is_empty() {
                EMPTY_PARSE_PRECISION
            } else {
                to_set(s).overlap(&truth_set) as f64 / s.len() as f64
            }
        })
        .collect();
    let pairwise_f = samples.iter().map(|s| entity_f1(&original_set, &to_set(s)).f1).collect();
    let pair_counts = samples
        .iter()
        .zip(&sample_priors)
        .map(|(s, &prior)| green_counts_between(&original_set, &to_set(s), inject, prior))
        .collect();
    let correctness_counts = green_counts_between(&original_set, &truth_set, inject, false);
    let (ground_truth_text, _) = render(&truth, None);

    SynthCase {
        sidecar: SidecarCase {
            case_id: format!("case{i:05}"),
            latent,
            difficulty,
            ground_truth: to_list(&truth_set),
            original_sentences,
            original_prior: inject,
            planted_sentence,
            samples,
            sample_priors,
            true_precision,
            pairwise_f,
            correctness: green_from_counts(&correctness_counts).score,
            correctness_counts,
        },
        original_text,
        ground_truth_text,
        sample_texts,
        pair_counts,
    }
}

/// Generates a corpus on the current rayon pool. Output does not depend on
/// the number of threads.
pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    cfg.validate()?;
    let pool = Pool::build(&Lexicon::default_radiology(), cfg.entity_pool_size)?;
    let cases = (0..cfg.n_cases)
        .into_par_iter()
        .map(|i| generate_case(cfg, &pool, i))
        .collect();
    Ok(SynthCorpus {
        config: cfg.clone(),
        cases,
    })
}

/// [`generate`] on a dedicated pool of `threads` workers.
pub fn generate_with_threads(cfg: &SynthConfig, threads: usize) -> Result<SynthCorpus, SynthError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SynthError::ConfigInvalid(format!("thread pool: {e}")))?;
    pool.install(|| generate(cfg))
}

impl SynthCorpus {
    pub fn originals(&self) -> Vec<Report> {
        self.cases
            .iter()
            .map(|c| Report::new(c.sidecar.case_id.clone(), &c.original_text))
            .collect()
    }

    pub fn ground_truth_reports(&self) -> Vec<Report> {
        self.cases
            .iter()
            .map(|c| Report::new(c.sidecar.case_id.clone(), &c.ground_truth_text))
            .collect()
    }

    pub fn samples(&self) -> Vec<SampleRecord> {
        self.cases
            .iter()
            .flat_map(|c| {
                c.sample_texts.iter().enumerate().map(|(t, text)| SampleRecord {
                    sample_index: t + 1,
                    report: Report::new(c.sidecar.case_id.clone(), text),
                })
            })
            .collect()
    }

    pub fn sample_sets(&self) -> Vec<SampleSet> {
        self.cases
            .iter()
            .map(|c| SampleSet {
                case_id: c.sidecar.case_id.clone(),
                original: Report::new(c.sidecar.case_id.clone(), &c.original_text),
                samples: c
                    .sample_texts
                    .iter()
                    .map(|t| Report::new(c.sidecar.case_id.clone(), t))
                    .collect(),
            })
            .collect()
    }

    /// GREEN-style and entity-F1 correctness of each original against its
    /// ground truth.
    pub fn correctness(&self) -> Vec<CorrectnessTable> {
        let mut green = CorrectnessTable {
            metric_id: "green".into(),
            entries: BTreeMap::new(),
        };
        let mut f1 = CorrectnessTable {
            metric_id: "entity_f1".into(),
            entries: BTreeMap::new(),
        };
        for c in &self.cases {
            let s = &c.sidecar;
            green.entries.insert(s.case_id.clone(), s.correctness);
            let f = entity_f1(&union(&s.original_sentences), &to_set(&s.ground_truth)).f1;
            f1.entries.insert(s.case_id.clone(), f);
        }
        vec![green, f1]
    }

    pub fn green_counts(&self) -> GreenCountTable {
        let mut table = GreenCountTable::new();
        for c in &self.cases {
            let id = &c.sidecar.case_id;
            table.insert((id.clone(), None), c.sidecar.correctness_counts);
            for (t, counts) in c.pair_counts.iter().enumerate() {
                table.insert((id.clone(), Some(t + 1)), *counts);
            }
        }
        table
    }

    /// The latent entity sets in annotation form.
    pub fn annotations(&self) -> AnnotationMap {
        let mut map = AnnotationMap::new();
        for c in &self.cases {
            let s = &c.sidecar;
            map.insert((s.case_id.clone(), UnitKey::original_report()), union(&s.original_sentences));
            for (j, sentence) in s.original_sentences.iter().enumerate() {
                map.insert((s.case_id.clone(), UnitKey::original_sentence(j)), to_set(sentence));
            }
            for (t, sample) in s.samples.iter().enumerate() {
                map.insert((s.case_id.clone(), UnitKey::sample_report(t + 1)), to_set(sample));
            }
        }
        map
    }

    pub fn sidecar(&self) -> Vec<SidecarCase> {
        self.cases.iter().map(|c| c.sidecar.clone()).collect()
    }

    /// Writes `reports.jsonl`, `samples.jsonl`, `ground_truth.jsonl`,
    /// `annotations.jsonl`, `correctness.jsonl`, `green_counts.jsonl` and
    /// `sidecar.jsonl` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> crate::Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
        corpus::write_originals(dir.join("reports.jsonl"), &self.originals())?;
        corpus::write_samples(dir.join("samples.jsonl"), &self.samples())?;
        corpus::write_originals(dir.join("ground_truth.jsonl"), &self.ground_truth_reports())?;
        crate::parser::write_annotation_map(dir.join("annotations.jsonl"), &self.annotations())?;
        CorrectnessTable::write_all(dir.join("correctness.jsonl"), &self.correctness())?;
        crate::factuality::write_green_counts(dir.join("green_counts.jsonl"), &self.green_counts())?;
        let path = dir.join("sidecar.jsonl");
        let file = File::create(&path).map_err(|e| crate::Error::io(&path, e))?;
        corpus::write_jsonl(BufWriter::new(file), self.sidecar()).map_err(|e| crate::Error::io(&path, e))
    }
}

pub fn load_sidecar(path: impl AsRef<Path>) -> Result<Vec<SidecarCase>, SynthError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SynthError::Sidecar(format!("{}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| SynthError::Sidecar(format!("line {}: {e}", i + 1))))
        .collect()
}

/// Reference values recomputed from the sidecar alone.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleTable {
    pub uncertainty: UncertaintyTable,
    pub precision: Vec<SentencePrecision>,
    /// GREEN-style correctness per case, in case order.
    pub correctness: Vec<f64>,
    pub pearson: Option<f64>,
    pub rce: Option<f64>,
    /// Sentence u against precision, sentinel sentences dropped.
    pub sentence_pearson: Option<f64>,
}

fn oracle_contains(list: &[(String, EntityLabel)], item: &(String, EntityLabel)) -> bool {
    for x in list {
        if x.0 == item.0 && x.1 == item.1 {
            return true;
        }
    }
    false
}

fn oracle_dedup(list: &[(String, EntityLabel)]) -> PairList {
    let mut out: PairList = Vec::new();
    for x in list {
        if !oracle_contains(&out, x) {
            out.push(x.clone());
        }
    }
    out
}

fn oracle_f1(pred: &[(String, EntityLabel)], reference: &[(String, EntityLabel)]) -> f64 {
    if pred.is_empty() && reference.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut hits = 0usize;
    for x in pred {
        if oracle_contains(reference, x) {
            hits += 1;
        }
    }
    if hits == 0 {
        return 0.0;
    }
    let precision = hits as f64 / pred.len() as f64;
    let recall = hits as f64 / reference.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

fn oracle_pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mut sx = 0.0;
    let mut sy = 0.0;
    for i in 0..n {
        sx += x[i];
        sy += y[i];
    }
    let mx = sx / n as f64;
    let my = sy / n as f64;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..n {
        cov += (x[i] - mx) * (y[i] - my);
        vx += (x[i] - mx) * (x[i] - mx);
        vy += (y[i] - my) * (y[i] - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

/// `a >= b`, treating values within a relative 1e-12 as tied.
fn oracle_geq(a: f64, b: f64) -> bool {
    let scale = a.abs().max(b.abs()).max(1.0);
    a >= b || b - a <= 1e-12 * scale
}

/// Rank-calibration error with bin sums over `reg(u)`, the bin's mean
/// correctness, and bin sums over `u`.
fn oracle_rce(u: &[f64], f: &[f64], bins: usize) -> Option<f64> {
    let n = u.len();
    if bins < 2 || n < bins {
        return None;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    // Insertion sort keeps equal values in input order.
    for i in 1..n {
        let mut j = i;
        while j > 0 && u[idx[j - 1]] > u[idx[j]] {
            idx.swap(j - 1, j);
            j -= 1;
        }
    }
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut start = 0;
    for b in 0..bins {
        let len = n / bins + if b < n % bins { 1 } else { 0 };
        members.push(idx[start..start + len].to_vec());
        start += len;
    }
    let mut reg_sum = vec![0.0; bins];
    let mut u_sum = vec![0.0; bins];
    for b in 0..bins {
        let mut fs = Vec::new();
        for &i in &members[b] {
            fs.push(f[i]);
        }
        let mut sf = 0.0;
        for x in &fs {
            sf += x;
        }
        let reg = sf / fs.len() as f64;
        for &i in &members[b] {
            reg_sum[b] += reg;
            u_sum[b] += u[i];
        }
    }
    let mut total = 0.0;
    for b in 0..bins {
        let mut a = 0.0;
        let mut c = 0.0;
        for other in 0..bins {
            if other == b {
                continue;
            }
            if oracle_geq(reg_sum[other], reg_sum[b]) {
                a += 1.0;
            }
            if oracle_geq(u_sum[b], u_sum[other]) {
                c += 1.0;
            }
        }
        total += (a / (bins - 1) as f64 - c / (bins - 1) as f64).abs();
    }
    Some(total / bins as f64)
}

/// Recomputes uncertainty, precision, correlation and calibration from the
/// sidecar by direct transcription of the definitions, independent of the
/// parser, scorers and table code.
pub fn oracle_uq(sidecar: &[SidecarCase], bins: usize) -> OracleTable {
    let mut cases: Vec<&SidecarCase> = sidecar.iter().collect();
    cases.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    let mut reports = Vec::new();
    let mut sentences = Vec::new();
    let mut precision = Vec::new();
    let mut correctness = Vec::new();
    for case in cases {
        let mut original: PairList = Vec::new();
        for s in &case.original_sentences {
            original.extend(s.iter().cloned());
        }
        let original = oracle_dedup(&original);
        let truth = oracle_dedup(&case.ground_truth);
        let t = case.samples.len();

        let mut acc = 0.0;
        for sample in &case.samples {
            acc += 1.0 - oracle_f1(&original, &oracle_dedup(sample));
        }
        reports.push(ReportUncertainty {
            case_id: case.case_id.clone(),
            u: acc / t as f64,
            t_used: t,
            scorer_id: "entity_f1".into(),
        });

        for (j, s) in case.original_sentences.iter().enumerate() {
            let s = oracle_dedup(s);
            let (u, p) = if s.is_empty() {
                (1.0, EMPTY_PARSE_PRECISION)
            } else {
                let mut acc = 0.0;
                for sample in &case.samples {
                    let sample = oracle_dedup(sample);
                    let mut hit = 0usize;
                    for x in &s {
                        if oracle_contains(&sample, x) {
                            hit += 1;
                        }
                    }
                    acc += 1.0 - hit as f64 / s.len() as f64;
                }
                let mut hit = 0usize;
                for x in &s {
                    if oracle_contains(&truth, x) {
                        hit += 1;
                    }
                }
                (acc / t as f64, hit as f64 / s.len() as f64)
            };
            sentences.push(SentenceUncertainty {
                case_id: case.case_id.clone(),
                sentence_index: j,
                u,
                empty_parse: s.is_empty(),
            });
            precision.push(SentencePrecision {
                case_id: case.case_id.clone(),
                sentence_index: j,
                p,
            });
        }

        let mut matched = 0u64;
        for x in &original {
            if oracle_contains(&truth, x) {
                matched += 1;
            }
        }
        let mut errors = 0u64;
        for x in &original {
            if !oracle_contains(&truth, x) {
                errors += 1;
            }
        }
        for r in &truth {
            let mut mentioned = false;
            for x in &original {
                if x.0 == r.0 {
                    mentioned = true;
                }
            }
            if !mentioned {
                errors += 1;
            }
        }
        if case.original_prior {
            errors += 1;
        }
        correctness.push(if matched + errors == 0 {
            0.0
        } else {
            matched as f64 / (matched + errors) as f64
        });
    }
    let us: Vec<f64> = reports.iter().map(|r| r.u).collect();
    let mut su = Vec::new();
    let mut sp = Vec::new();
    for (s, p) in sentences.iter().zip(&precision) {
        if p.p != EMPTY_PARSE_PRECISION {
            su.push(s.u);
            sp.push(p.p);
        }
    }
    OracleTable {
        pearson: oracle_pearson(&us, &correctness),
        rce: oracle_rce(&us, &correctness, bins),
        sentence_pearson: oracle_pearson(&su, &sp),
        uncertainty: UncertaintyTable { reports, sentences },
        precision,
        correctness,
    }
}
