//! Variation-ratio uncertainty against the original report.
//!
//! Report level: `u = (1/T) Σ_t (1 − F(original, sample_t))`.
//!
//! Sentence level: `u = (1/T) Σ_t (1 − |S ∩ R_t| / |S|)` where `S` is the
//! sentence's entity-label set and `R_t` the set of sampled report `t`. A
//! sentence with an empty parse gets `u = 1`.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{jsonl, write_jsonl, CorpusError, SampleSet, ScoreTable};
use crate::parser::{AnnotationError, AnnotationStore, NodeLabelSet};

#[derive(Debug, Error)]
pub enum UqError {
    #[error("uncertainty needs at least one sampled report")]
    EmptySampleList,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
}

/// Sentinel precision for a sentence whose parse is empty.
pub const EMPTY_PARSE_PRECISION: f64 = -1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportUncertainty {
    pub case_id: String,
    pub u: f64,
    #[serde(rename = "T_used")]
    pub t_used: usize,
    pub scorer_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceUncertainty {
    pub case_id: String,
    pub sentence_index: usize,
    pub u: f64,
    pub empty_parse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentencePrecision {
    pub case_id: String,
    pub sentence_index: usize,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct UncertaintyTable {
    pub reports: Vec<ReportUncertainty>,
    pub sentences: Vec<SentenceUncertainty>,
}

pub fn report_vro(scores: &[f64]) -> Result<f64, UqError> {
    if scores.is_empty() {
        return Err(UqError::EmptySampleList);
    }
    let total: f64 = scores.iter().map(|f| 1.0 - f).sum();
    Ok(total / scores.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentenceVro {
    pub u: f64,
    pub empty_parse: bool,
}

pub fn sentence_vro(sentence: &NodeLabelSet, samples: &[NodeLabelSet]) -> Result<SentenceVro, UqError> {
    if samples.is_empty() {
        return Err(UqError::EmptySampleList);
    }
    if sentence.is_empty() {
        return Ok(SentenceVro {
            u: 1.0,
            empty_parse: true,
        });
    }
    let size = sentence.len() as f64;
    let total: f64 = samples
        .iter()
        .map(|sample| 1.0 - sentence.overlap(sample) as f64 / size)
        .sum();
    Ok(SentenceVro {
        u: total / samples.len() as f64,
        empty_parse: false,
    })
}

/// Fraction of the sentence's pairs found in the reference report's parse,
/// or [`EMPTY_PARSE_PRECISION`] when the sentence parses to nothing.
pub fn sentence_precision(sentence: &NodeLabelSet, reference: &NodeLabelSet) -> f64 {
    if sentence.is_empty() {
        return EMPTY_PARSE_PRECISION;
    }
    sentence.overlap(reference) as f64 / sentence.len() as f64
}

/// One row per case, using every score the case has.
pub fn compute_report_uq(sets: &[SampleSet], scores: &ScoreTable) -> Result<Vec<ReportUncertainty>, UqError> {
    let mut rows = sets
        .iter()
        .map(|set| {
            let s = scores.scores_for(&set.case_id, set.t())?;
            Ok(ReportUncertainty {
                case_id: set.case_id.clone(),
                u: report_vro(&s)?,
                t_used: set.t(),
                scorer_id: scores.scorer_id.clone(),
            })
        })
        .collect::<Result<Vec<_>, UqError>>()?;
    rows.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    Ok(rows)
}

/// One row per original sentence, in `(case_id, sentence_index)` order.
pub fn compute_sentence_uq(
    sets: &[SampleSet],
    annotations: &AnnotationStore,
) -> Result<Vec<SentenceUncertainty>, UqError> {
    let mut rows = Vec::new();
    for set in sets {
        let case = annotations.get(&set.case_id)?;
        if case.samples.len() != set.t() {
            return Err(AnnotationError::AnnotationGap {
                case_id: set.case_id.clone(),
                unit: format!("sample {}", case.samples.len() + 1),
            }
            .into());
        }
        for (j, sentence) in case.sentences.iter().enumerate() {
            let v = sentence_vro(sentence, &case.samples)?;
            rows.push(SentenceUncertainty {
                case_id: set.case_id.clone(),
                sentence_index: j,
                u: v.u,
                empty_parse: v.empty_parse,
            });
        }
    }
    rows.sort_by(|a, b| (&a.case_id, a.sentence_index).cmp(&(&b.case_id, b.sentence_index)));
    Ok(rows)
}

pub fn compute_uq(
    sets: &[SampleSet],
    annotations: &AnnotationStore,
    scores: &ScoreTable,
) -> Result<UncertaintyTable, UqError> {
    Ok(UncertaintyTable {
        reports: compute_report_uq(sets, scores)?,
        sentences: compute_sentence_uq(sets, annotations)?,
    })
}

/// Precision of every original sentence against its case's reference parse.
pub fn compute_precision(
    annotations: &AnnotationStore,
    references: &BTreeMap<String, NodeLabelSet>,
) -> Result<Vec<SentencePrecision>, UqError> {
    let mut rows = Vec::new();
    for (case_id, case) in &annotations.cases {
        let reference = references.get(case_id).ok_or_else(|| AnnotationError::AnnotationGap {
            case_id: case_id.clone(),
            unit: "reference report".into(),
        })?;
        for (j, sentence) in case.sentences.iter().enumerate() {
            rows.push(SentencePrecision {
                case_id: case_id.clone(),
                sentence_index: j,
                p: sentence_precision(sentence, reference),
            });
        }
    }
    Ok(rows)
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> crate::Result<()> {
    let file = std::fs::File::create(path).map_err(|e| crate::Error::io(path, e))?;
    write_jsonl(std::io::BufWriter::new(file), rows).map_err(|e| crate::Error::io(path, e))
}

pub fn write_report_u(path: impl AsRef<Path>, rows: &[ReportUncertainty]) -> crate::Result<()> {
    write_rows(path.as_ref(), rows)
}

pub fn write_sentence_u(path: impl AsRef<Path>, rows: &[SentenceUncertainty]) -> crate::Result<()> {
    write_rows(path.as_ref(), rows)
}

pub fn write_precision(path: impl AsRef<Path>, rows: &[SentencePrecision]) -> crate::Result<()> {
    write_rows(path.as_ref(), rows)
}

fn unit_interval(line: &jsonl::Line, field: &'static str) -> Result<f64, CorpusError> {
    let v = line.finite(field)?;
    if !(0.0..=1.0).contains(&v) {
        return Err(line.error(field, format!("{v} outside [0, 1]")));
    }
    Ok(v)
}

pub fn load_report_u(path: impl AsRef<Path>) -> Result<Vec<ReportUncertainty>, CorpusError> {
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for line in jsonl::read_lines(path.as_ref())? {
        let case_id = line.case_id()?;
        if !seen.insert(case_id.clone()) {
            return Err(CorpusError::DuplicateKey(case_id));
        }
        let t_used = line.uint("T_used")? as usize;
        if t_used == 0 {
            return Err(line.error("T_used", "must be at least 1"));
        }
        rows.push(ReportUncertainty {
            case_id,
            u: unit_interval(&line, "u")?,
            t_used,
            scorer_id: line.str("scorer_id")?.to_string(),
        });
    }
    Ok(rows)
}

pub fn load_sentence_u(path: impl AsRef<Path>) -> Result<Vec<SentenceUncertainty>, CorpusError> {
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for line in jsonl::read_lines(path.as_ref())? {
        let case_id = line.case_id()?;
        let sentence_index = line.uint("sentence_index")? as usize;
        if !seen.insert((case_id.clone(), sentence_index)) {
            return Err(CorpusError::DuplicateKey(format!("{case_id}/{sentence_index}")));
        }
        let empty_parse = line.obj.get("empty_parse").and_then(|v| v.as_bool()).ok_or(
            CorpusError::MissingField {
                line: line.no,
                field: "empty_parse",
            },
        )?;
        rows.push(SentenceUncertainty {
            case_id,
            sentence_index,
            u: unit_interval(&line, "u")?,
            empty_parse,
        });
    }
    Ok(rows)
}

pub fn load_precision(path: impl AsRef<Path>) -> Result<Vec<SentencePrecision>, CorpusError> {
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for line in jsonl::read_lines(path.as_ref())? {
        let case_id = line.case_id()?;
        let sentence_index = line.uint("sentence_index")? as usize;
        if !seen.insert((case_id.clone(), sentence_index)) {
            return Err(CorpusError::DuplicateKey(format!("{case_id}/{sentence_index}")));
        }
        let p = line.finite("p")?;
        if p != EMPTY_PARSE_PRECISION && !(0.0..=1.0).contains(&p) {
            return Err(line.error("p", format!("{p} is neither in [0, 1] nor -1")));
        }
        rows.push(SentencePrecision {
            case_id,
            sentence_index,
            p,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Report;
    use crate::parser::{annotate, AnnotationSource, CaseAnnotations, EntityLabel, Lexicon, NodeLabelPair};
    use proptest::prelude::*;

    fn pairs(items: &[(&str, EntityLabel)]) -> NodeLabelSet {
        items.iter().map(|(e, l)| NodeLabelPair::new(*e, *l)).collect()
    }

    #[test]
    fn report_vro_examples() {
        assert_eq!(report_vro(&[1.0, 0.5, 0.0]).unwrap(), 0.5);
        assert_eq!(report_vro(&[1.0; 10]).unwrap(), 0.0);
        assert_eq!(report_vro(&[0.0; 4]).unwrap(), 1.0);
        assert!(matches!(report_vro(&[]), Err(UqError::EmptySampleList)));
    }

    #[test]
    fn sentence_vro_examples() {
        let sentence = pairs(&[("effusion", EntityLabel::ObsDa), ("pleural", EntityLabel::AnatDp)]);
        let superset = pairs(&[
            ("effusion", EntityLabel::ObsDa),
            ("pleural", EntityLabel::AnatDp),
            ("heart", EntityLabel::AnatDp),
        ]);
        let partial = pairs(&[("pleural", EntityLabel::AnatDp)]);
        let v = sentence_vro(&sentence, &[superset, partial.clone()]).unwrap();
        assert_eq!(v.u, 0.25);
        assert!(!v.empty_parse);

        let v = sentence_vro(&NodeLabelSet::new(), &[partial]).unwrap();
        assert_eq!((v.u, v.empty_parse), (1.0, true));

        let other = pairs(&[("lung", EntityLabel::AnatDp)]);
        assert_eq!(sentence_vro(&sentence, &[other.clone(), other]).unwrap().u, 1.0);
        assert!(matches!(sentence_vro(&sentence, &[]), Err(UqError::EmptySampleList)));
    }

    #[test]
    fn precision_examples() {
        let sentence = pairs(&[("effusion", EntityLabel::ObsDa), ("pleural", EntityLabel::AnatDp)]);
        assert_eq!(sentence_precision(&sentence, &sentence), 1.0);
        assert_eq!(sentence_precision(&sentence, &pairs(&[("pleural", EntityLabel::AnatDp)])), 0.5);
        assert_eq!(sentence_precision(&NodeLabelSet::new(), &sentence), -1.0);
    }

    fn fixture() -> (Vec<SampleSet>, AnnotationStore) {
        let sets = vec![SampleSet {
            case_id: "c1".into(),
            original: Report::new("c1", "No pleural effusion. Possible pneumonia."),
            samples: vec![
                Report::new("c1", "No pleural effusion."),
                Report::new("c1", "Possible pneumonia. No effusion."),
            ],
        }];
        let store = annotate(&sets, AnnotationSource::Lexicon(&Lexicon::default_radiology())).unwrap();
        (sets, store)
    }

    #[test]
    fn compute_uq_shapes() {
        let (sets, store) = fixture();
        let mut scores = ScoreTable::new("x");
        scores.entries.insert(("c1".into(), 1), 0.5);
        scores.entries.insert(("c1".into(), 2), 1.0);
        let table = compute_uq(&sets, &store, &scores).unwrap();
        assert_eq!(table.reports.len(), 1);
        assert_eq!(table.reports[0].u, 0.25);
        assert_eq!(table.reports[0].t_used, 2);
        assert_eq!(table.sentences.len(), 2);
        // sentence 0: {pleural, effusion-DA}; sample 1 has both, sample 2 has only effusion-DA
        assert_eq!(table.sentences[0].u, 0.25);
        // sentence 1: {pneumonia-U}; only sample 2
        assert_eq!(table.sentences[1].u, 0.5);
    }

    #[test]
    fn compute_uq_reports_gaps() {
        let (sets, mut store) = fixture();
        store.cases.get_mut("c1").unwrap().samples.pop();
        let mut scores = ScoreTable::new("x");
        scores.entries.insert(("c1".into(), 1), 0.5);
        scores.entries.insert(("c1".into(), 2), 1.0);
        assert!(matches!(
            compute_uq(&sets, &store, &scores),
            Err(UqError::Annotation(AnnotationError::AnnotationGap { .. }))
        ));
        let (sets, store) = fixture();
        scores.entries.remove(&("c1".to_string(), 2));
        assert!(matches!(
            compute_uq(&sets, &store, &scores),
            Err(UqError::Corpus(CorpusError::MissingPair { t: 2, .. }))
        ));
    }

    #[test]
    fn precision_against_reference() {
        let (_, store) = fixture();
        let mut refs = BTreeMap::new();
        refs.insert("c1".to_string(), pairs(&[("effusion", EntityLabel::ObsDa)]));
        let rows = compute_precision(&store, &refs).unwrap();
        assert_eq!(rows.iter().map(|r| r.p).collect::<Vec<_>>(), vec![0.5, 0.0]);
        assert!(compute_precision(&store, &BTreeMap::new()).is_err());
    }

    #[test]
    fn tables_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![SentencePrecision {
            case_id: "a".into(),
            sentence_index: 0,
            p: -1.0,
        }];
        let path = dir.path().join("precision.jsonl");
        write_precision(&path, &rows).unwrap();
        assert_eq!(load_precision(&path).unwrap(), rows);
        let path = dir.path().join("report_u.jsonl");
        let rows = vec![ReportUncertainty {
            case_id: "a".into(),
            u: 0.3,
            t_used: 10,
            scorer_id: "entity_f1".into(),
        }];
        write_report_u(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "{\"case_id\":\"a\",\"u\":0.3,\"T_used\":10,\"scorer_id\":\"entity_f1\"}\n");
        assert_eq!(load_report_u(&path).unwrap(), rows);
    }

    fn arb_set() -> impl Strategy<Value = NodeLabelSet> {
        let pair = (
            prop::sample::select(vec!["a", "b", "c", "d", "e", "f"]),
            prop::sample::select(EntityLabel::ALL.to_vec()),
        )
            .prop_map(|(e, l)| NodeLabelPair::new(e, l));
        prop::collection::vec(pair, 0..6).prop_map(|v| v.into_iter().collect())
    }

    proptest! {
        #[test]
        fn uncertainties_in_unit_interval(s in arb_set(), samples in prop::collection::vec(arb_set(), 1..8),
                                          scores in prop::collection::vec(0.0f64..=1.0, 1..12)) {
            let v = sentence_vro(&s, &samples).unwrap();
            prop_assert!((0.0..=1.0).contains(&v.u));
            prop_assert!(!v.empty_parse || v.u == 1.0);
            let r = report_vro(&scores).unwrap();
            prop_assert!((-1e-15..=1.0 + 1e-15).contains(&r));
        }

        #[test]
        fn sample_order_does_not_matter(s in arb_set(), mut samples in prop::collection::vec(arb_set(), 1..8)) {
            let forward = sentence_vro(&s, &samples).unwrap().u;
            samples.reverse();
            let backward = sentence_vro(&s, &samples).unwrap().u;
            prop_assert!((forward - backward).abs() < 1e-12);
        }

        #[test]
        fn monotone_in_added_pairs(s in arb_set(), samples in prop::collection::vec(arb_set(), 1..8)) {
            let base = sentence_vro(&s, &samples).unwrap();
            prop_assume!(!base.empty_parse);
            let mut absent = s.clone();
            absent.insert(NodeLabelPair::new("zz-nowhere", EntityLabel::ObsDp));
            prop_assert!(sentence_vro(&absent, &samples).unwrap().u >= base.u - 1e-12);

            let everywhere = NodeLabelPair::new("zz-everywhere", EntityLabel::ObsDp);
            let seeded: Vec<NodeLabelSet> = samples.iter().map(|x| {
                let mut x = x.clone();
                x.insert(everywhere.clone());
                x
            }).collect();
            let base_seeded = sentence_vro(&s, &seeded).unwrap().u;
            let mut with = s.clone();
            with.insert(everywhere);
            prop_assert!(sentence_vro(&with, &seeded).unwrap().u <= base_seeded + 1e-12);
        }

        #[test]
        fn agreement_limit(s in arb_set(), extra in prop::collection::vec(arb_set(), 1..6)) {
            prop_assume!(!s.is_empty());
            let samples: Vec<NodeLabelSet> = extra.into_iter().map(|mut x| { x.union_with(&s); x }).collect();
            prop_assert_eq!(sentence_vro(&s, &samples).unwrap().u, 0.0);
        }
    }

    #[test]
    fn empty_store_case_is_a_gap() {
        let (sets, _) = fixture();
        let store = AnnotationStore {
            cases: [("other".to_string(), CaseAnnotations::default())].into(),
        };
        assert!(compute_sentence_uq(&sets, &store).is_err());
    }
}
