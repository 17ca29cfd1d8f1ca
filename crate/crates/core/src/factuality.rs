//! Pairwise factuality scorers `F(prediction, reference) ∈ [0, 1]`.
//!
//! The same scorers serve as the consistency measure between an original
//! report and its samples, and as correctness against a ground-truth report.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{jsonl, CorpusError, SampleSet, ScoreTable};
use crate::parser::{AnnotationError, AnnotationStore, CaseAnnotations, NodeLabelSet};
use crate::text::normalize;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error("scorer unavailable: {0}")]
    ScorerUnavailable(String),
    #[error("case {case_id}, sample {t}: no GREEN counts")]
    MissingCounts { case_id: String, t: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    EntityF1,
    GreenCounts,
    Lexical,
    Precomputed,
}

impl ScorerKind {
    pub fn id(self) -> &'static str {
        match self {
            ScorerKind::EntityF1 => "entity_f1",
            ScorerKind::GreenCounts => "green_counts",
            ScorerKind::Lexical => "lexical",
            ScorerKind::Precomputed => "precomputed",
        }
    }
}

impl std::str::FromStr for ScorerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Self::EntityF1, Self::GreenCounts, Self::Lexical, Self::Precomputed]
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| format!("unknown scorer `{s}` (expected entity_f1, green_counts, lexical or precomputed)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntityF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Entity-label overlap between a predicted and a reference parse.
///
/// Two empty parses agree perfectly; exactly one empty parse scores zero.
pub fn entity_f1(pred: &NodeLabelSet, reference: &NodeLabelSet) -> EntityF1 {
    match (pred.is_empty(), reference.is_empty()) {
        (true, true) => {
            return EntityF1 {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
            }
        }
        (true, false) | (false, true) => {
            return EntityF1 {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
            }
        }
        _ => {}
    }
    let hits = pred.overlap(reference) as f64;
    let precision = hits / pred.len() as f64;
    let recall = hits / reference.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    EntityF1 { precision, recall, f1 }
}

/// Matched findings plus the six error categories (a)-(f).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GreenCounts {
    pub matched: u64,
    pub errors: [u64; 6],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenScore {
    pub score: f64,
    /// No matched findings and no errors; the score is reported as 0.
    pub degenerate: bool,
}

/// `matched / (matched + Σ errors)`.
pub fn green_from_counts(c: &GreenCounts) -> GreenScore {
    let errors: u64 = c.errors.iter().sum();
    let denom = c.matched + errors;
    if denom == 0 {
        return GreenScore {
            score: 0.0,
            degenerate: true,
        };
    }
    GreenScore {
        score: c.matched as f64 / denom as f64,
        degenerate: false,
    }
}

fn lexical_tokens(text: &str) -> Vec<String> {
    normalize(text)
        .to_lowercase()
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Token-level longest-common-subsequence F1 (ROUGE-L, β = 1).
///
/// Tokens are whitespace-separated after normalization and lowercasing.
pub fn lexical_similarity(a: &str, b: &str) -> f64 {
    let ta = lexical_tokens(a);
    let tb = lexical_tokens(b);
    match (ta.is_empty(), tb.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let lcs = lcs_len(&ta, &tb) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let precision = lcs / ta.len() as f64;
    let recall = lcs / tb.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// GREEN counts keyed by `(case_id, sample_index)`; `None` compares against the
/// ground truth rather than a sample.
pub type GreenCountTable = BTreeMap<(String, Option<usize>), GreenCounts>;

#[derive(Serialize)]
struct GreenCountLine<'a> {
    case_id: &'a str,
    sample_index: Option<usize>,
    matched: u64,
    errors: [u64; 6],
}

/// Loads `green_counts.jsonl`.
pub fn load_green_counts(path: impl AsRef<Path>) -> Result<GreenCountTable, CorpusError> {
    let mut table = GreenCountTable::new();
    for line in jsonl::read_lines(path.as_ref())? {
        let case_id = line.case_id()?;
        let t = line.opt_sample_index()?;
        let matched = line.uint("matched")?;
        let raw = line.array("errors")?;
        if raw.len() != 6 {
            return Err(line.error("errors", format!("expected 6 counts, got {}", raw.len())));
        }
        let mut errors = [0u64; 6];
        for (slot, v) in errors.iter_mut().zip(raw) {
            *slot = v
                .as_u64()
                .ok_or_else(|| line.error("errors", "counts must be nonnegative integers"))?;
        }
        if table.insert((case_id.clone(), t), GreenCounts { matched, errors }).is_some() {
            return Err(CorpusError::DuplicateKey(format!("{case_id}#{t:?}")));
        }
    }
    Ok(table)
}

pub fn write_green_counts(path: impl AsRef<Path>, table: &GreenCountTable) -> crate::Result<()> {
    let path = path.as_ref();
    let lines = table.iter().map(|((case_id, t), c)| GreenCountLine {
        case_id,
        sample_index: *t,
        matched: c.matched,
        errors: c.errors,
    });
    let file = std::fs::File::create(path).map_err(|e| crate::Error::io(path, e))?;
    crate::corpus::write_jsonl(std::io::BufWriter::new(file), lines).map_err(|e| crate::Error::io(path, e))
}

/// A factuality function over (original, sample `t`) of one case.
///
/// The original report is the prediction and the sample is the reference.
pub trait PairScorer: Sync {
    fn scorer_id(&self) -> &str;

    fn score(&self, set: &SampleSet, t: usize, annotations: Option<&CaseAnnotations>) -> Result<f64, ScoreError>;
}

pub struct EntityF1Scorer;

impl PairScorer for EntityF1Scorer {
    fn scorer_id(&self) -> &str {
        ScorerKind::EntityF1.id()
    }

    fn score(&self, set: &SampleSet, t: usize, annotations: Option<&CaseAnnotations>) -> Result<f64, ScoreError> {
        let case = annotations
            .ok_or_else(|| ScoreError::ScorerUnavailable("entity_f1 needs report-level annotations".into()))?;
        let sample = case.samples.get(t - 1).ok_or_else(|| AnnotationError::AnnotationGap {
            case_id: set.case_id.clone(),
            unit: format!("sample {t}"),
        })?;
        Ok(entity_f1(&case.original_report, sample).f1)
    }
}

pub struct LexicalScorer;

impl PairScorer for LexicalScorer {
    fn scorer_id(&self) -> &str {
        ScorerKind::Lexical.id()
    }

    fn score(&self, set: &SampleSet, t: usize, _: Option<&CaseAnnotations>) -> Result<f64, ScoreError> {
        Ok(lexical_similarity(&set.original.text, &set.samples[t - 1].text))
    }
}

/// GREEN aggregated from externally produced counts.
pub struct GreenCountsScorer {
    pub counts: GreenCountTable,
}

impl PairScorer for GreenCountsScorer {
    fn scorer_id(&self) -> &str {
        ScorerKind::GreenCounts.id()
    }

    fn score(&self, set: &SampleSet, t: usize, _: Option<&CaseAnnotations>) -> Result<f64, ScoreError> {
        let c = self
            .counts
            .get(&(set.case_id.clone(), Some(t)))
            .ok_or_else(|| ScoreError::MissingCounts {
                case_id: set.case_id.clone(),
                t,
            })?;
        Ok(green_from_counts(c).score)
    }
}

/// Passes through a loaded score table.
pub struct PrecomputedScorer {
    pub table: ScoreTable,
}

impl PairScorer for PrecomputedScorer {
    fn scorer_id(&self) -> &str {
        &self.table.scorer_id
    }

    fn score(&self, set: &SampleSet, t: usize, _: Option<&CaseAnnotations>) -> Result<f64, ScoreError> {
        self.table.get(&set.case_id, t).ok_or_else(|| {
            CorpusError::MissingPair {
                case_id: set.case_id.clone(),
                t,
            }
            .into()
        })
    }
}

/// Scores every `(case, t)` exactly once. The result is in canonical order
/// regardless of how cases are scheduled.
pub fn score_pairs(
    sets: &[SampleSet],
    annotations: Option<&AnnotationStore>,
    scorer: &dyn PairScorer,
) -> Result<ScoreTable, ScoreError> {
    let per_case: Vec<Vec<((String, usize), f64)>> = sets
        .par_iter()
        .map(|set| {
            let case = match annotations {
                Some(store) => Some(store.get(&set.case_id)?),
                None => None,
            };
            (1..=set.t())
                .map(|t| {
                    let score = scorer.score(set, t, case)?;
                    if !(0.0..=1.0).contains(&score) {
                        return Err(CorpusError::ScoreOutOfRange {
                            case_id: set.case_id.clone(),
                            t,
                            value: score,
                        }
                        .into());
                    }
                    Ok(((set.case_id.clone(), t), score))
                })
                .collect::<Result<Vec<_>, ScoreError>>()
        })
        .collect::<Result<_, _>>()?;
    let mut table = ScoreTable::new(scorer.scorer_id());
    table.entries.extend(per_case.into_iter().flatten());
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Report;
    use crate::parser::{annotate, AnnotationSource, EntityLabel, Lexicon, NodeLabelPair};
    use proptest::prelude::*;

    fn set(pairs: &[(&str, EntityLabel)]) -> NodeLabelSet {
        pairs.iter().map(|(e, l)| NodeLabelPair::new(*e, *l)).collect()
    }

    #[test]
    fn entity_f1_half_overlap() {
        let a = set(&[("a", EntityLabel::ObsDp), ("b", EntityLabel::ObsDp)]);
        let b = set(&[("b", EntityLabel::ObsDp), ("c", EntityLabel::ObsDp)]);
        let s = entity_f1(&a, &b);
        assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn entity_f1_identity_and_empty_conventions() {
        let a = set(&[("a", EntityLabel::ObsDp), ("x", EntityLabel::AnatDp)]);
        let s = entity_f1(&a, &a);
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        let e = NodeLabelSet::new();
        let s = entity_f1(&e, &e);
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        for s in [entity_f1(&e, &a), entity_f1(&a, &e)] {
            assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn label_matters_for_overlap() {
        let a = set(&[("effusion", EntityLabel::ObsDp)]);
        let b = set(&[("effusion", EntityLabel::ObsDa)]);
        assert_eq!(entity_f1(&a, &b).f1, 0.0);
    }

    #[test]
    fn green_examples() {
        let g = green_from_counts(&GreenCounts {
            matched: 3,
            errors: [1, 0, 1, 0, 0, 0],
        });
        assert_eq!(g.score, 0.6);
        assert!(!g.degenerate);
        assert_eq!(green_from_counts(&GreenCounts { matched: 5, errors: [0; 6] }).score, 1.0);
        let d = green_from_counts(&GreenCounts::default());
        assert_eq!(d.score, 0.0);
        assert!(d.degenerate);
    }

    /// Longest common subsequence by enumerating every subsequence of `a`.
    fn brute_lcs(a: &[&str], b: &[&str]) -> usize {
        let mut best = 0;
        for mask in 0u32..(1 << a.len()) {
            let sub: Vec<&str> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| a[i]).collect();
            let mut it = b.iter();
            if sub.iter().all(|w| it.any(|x| x == w)) {
                best = best.max(sub.len());
            }
        }
        best
    }

    #[test]
    fn lexical_examples() {
        assert_eq!(lexical_similarity("no acute disease", "no acute disease"), 1.0);
        assert_eq!(lexical_similarity("", "  "), 1.0);
        assert_eq!(lexical_similarity("", "effusion"), 0.0);

        let a = ["no", "effusion"];
        let b = ["large", "effusion", "present"];
        let lcs = brute_lcs(&a, &b);
        assert_eq!(lcs, 1);
        // P = 1/2, R = 1/3 -> F = 0.4
        let expected: f64 = 2.0 * (0.5 * (1.0 / 3.0)) / (0.5 + 1.0 / 3.0);
        assert!((expected - 0.4).abs() < 1e-15);
        assert_eq!(lexical_similarity("no effusion", "large effusion present"), expected);
    }

    #[test]
    fn score_pairs_identity_and_passthrough() {
        let lex = Lexicon::default_radiology();
        let sets = vec![SampleSet {
            case_id: "c1".into(),
            original: Report::new("c1", "No effusion. Possible pneumonia."),
            samples: vec![
                Report::new("c1", "Possible pneumonia. No effusion."),
                Report::new("c1", "no effusion. possible pneumonia"),
            ],
        }];
        let store = annotate(&sets, AnnotationSource::Lexicon(&lex)).unwrap();
        let table = score_pairs(&sets, Some(&store), &EntityF1Scorer).unwrap();
        assert_eq!(table.get("c1", 1), Some(1.0));
        assert_eq!(table.get("c1", 2), Some(1.0));
        assert_eq!(table.scorer_id, "entity_f1");

        let mut pre = ScoreTable::new("green");
        pre.entries.insert(("c1".into(), 1), 0.8);
        pre.entries.insert(("c1".into(), 2), 0.6);
        let passed = score_pairs(&sets, None, &PrecomputedScorer { table: pre.clone() }).unwrap();
        assert_eq!(passed, pre);

        pre.entries.remove(&("c1".to_string(), 2));
        let err = score_pairs(&sets, None, &PrecomputedScorer { table: pre }).unwrap_err();
        assert!(matches!(err, ScoreError::Corpus(CorpusError::MissingPair { t: 2, .. })));

        let err = score_pairs(&sets, None, &EntityF1Scorer).unwrap_err();
        assert!(matches!(err, ScoreError::ScorerUnavailable(_)));
    }

    fn arb_set() -> impl Strategy<Value = NodeLabelSet> {
        let pair = (
            prop::sample::select(vec!["a", "b", "c", "d", "e"]),
            prop::sample::select(EntityLabel::ALL.to_vec()),
        )
            .prop_map(|(e, l)| NodeLabelPair::new(e, l));
        prop::collection::vec(pair, 0..8).prop_map(|v| v.into_iter().collect())
    }

    fn arb_counts() -> impl Strategy<Value = GreenCounts> {
        (0u64..20, prop::array::uniform6(0u64..20)).prop_map(|(matched, errors)| GreenCounts { matched, errors })
    }

    proptest! {
        #[test]
        fn entity_f1_bounded_and_dual(a in arb_set(), b in arb_set()) {
            let ab = entity_f1(&a, &b);
            let ba = entity_f1(&b, &a);
            for v in [ab.precision, ab.recall, ab.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert_eq!(ab.precision, ba.recall);
            prop_assert_eq!(ab.f1, ba.f1);
        }

        #[test]
        fn green_is_monotone(c in arb_counts(), k in 0usize..6) {
            let base = green_from_counts(&c).score;
            prop_assert!((0.0..=1.0).contains(&base));
            let mut more_err = c;
            more_err.errors[k] += 1;
            prop_assert!(green_from_counts(&more_err).score <= base);
            let mut more_match = c;
            more_match.matched += 1;
            prop_assert!(green_from_counts(&more_match).score >= base);
        }

        #[test]
        fn lexical_symmetric_and_bounded(a in "[a-c ]{0,20}", b in "[a-c ]{0,20}") {
            let ab = lexical_similarity(&a, &b);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab, lexical_similarity(&b, &a));
        }
    }
}
