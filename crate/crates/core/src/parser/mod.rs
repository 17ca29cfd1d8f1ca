//! Sentence segmentation, entity-label extraction and annotation storage.
//!
//! Extraction is lexicon driven (see [`extract_entities`]). Annotations
//! produced by an external parser can be ingested instead through
//! [`load_annotations`]; both routes fill the same [`AnnotationStore`].

mod lexicon;
mod segment;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{jsonl, write_jsonl, CorpusError, SampleSet};

pub use lexicon::{extract_entities, Lexicon, LexiconFile};
pub use segment::segment_sentences;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("line {line}: unknown entity label `{value}`")]
    UnknownLabel { line: usize, value: String },
    #[error("line {line}: unit=sentence requires sentence_index")]
    MissingSentenceIndex { line: usize },
    #[error("case {case_id}: no annotation for {unit}")]
    AnnotationGap { case_id: String, unit: String },
    #[error("invalid lexicon: {0}")]
    InvalidLexicon(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityLabel {
    #[serde(rename = "ANAT-DP")]
    AnatDp,
    #[serde(rename = "OBS-DP")]
    ObsDp,
    #[serde(rename = "OBS-U")]
    ObsU,
    #[serde(rename = "OBS-DA")]
    ObsDa,
}

impl EntityLabel {
    pub const ALL: [EntityLabel; 4] = [Self::AnatDp, Self::ObsDp, Self::ObsU, Self::ObsDa];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::AnatDp => "ANAT-DP",
            Self::ObsDp => "OBS-DP",
            Self::ObsU => "OBS-U",
            Self::ObsDa => "OBS-DA",
        }
    }

    pub fn is_observation(self) -> bool {
        self != Self::AnatDp
    }
}

impl fmt::Display for EntityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeLabelPair {
    pub entity: String,
    pub label: EntityLabel,
}

impl NodeLabelPair {
    pub fn new(entity: impl Into<String>, label: EntityLabel) -> Self {
        NodeLabelPair {
            entity: entity.into(),
            label,
        }
    }
}

/// A set of entity-label pairs; repeated mentions collapse.
#[derive(Debug, Clone, PartialEq, Eq, Default, Hash)]
pub struct NodeLabelSet(BTreeSet<NodeLabelPair>);

impl NodeLabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, pair: NodeLabelPair) -> bool {
        self.0.insert(pair)
    }

    pub fn contains(&self, pair: &NodeLabelPair) -> bool {
        self.0.contains(pair)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &NodeLabelPair> {
        self.0.iter()
    }

    /// `|self ∩ other|`
    pub fn overlap(&self, other: &NodeLabelSet) -> usize {
        self.0.intersection(&other.0).count()
    }

    pub fn union_with(&mut self, other: &NodeLabelSet) {
        self.0.extend(other.0.iter().cloned());
    }

    fn to_json(&self) -> Vec<(&str, &'static str)> {
        self.0.iter().map(|p| (p.entity.as_str(), p.label.as_str())).collect()
    }
}

impl FromIterator<NodeLabelPair> for NodeLabelSet {
    fn from_iter<I: IntoIterator<Item = NodeLabelPair>>(iter: I) -> Self {
        NodeLabelSet(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a NodeLabelSet {
    type Item = &'a NodeLabelPair;
    type IntoIter = std::collections::btree_set::Iter<'a, NodeLabelPair>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// The unit an annotation line refers to.
///
/// `sample_index: None` is the original report; `sentence_index: None` is the
/// whole report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UnitKey {
    pub sample_index: Option<usize>,
    pub sentence_index: Option<usize>,
}

impl UnitKey {
    pub fn original_report() -> Self {
        UnitKey {
            sample_index: None,
            sentence_index: None,
        }
    }

    pub fn original_sentence(j: usize) -> Self {
        UnitKey {
            sample_index: None,
            sentence_index: Some(j),
        }
    }

    pub fn sample_report(t: usize) -> Self {
        UnitKey {
            sample_index: Some(t),
            sentence_index: None,
        }
    }
}

impl fmt::Display for UnitKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.sample_index, self.sentence_index) {
            (None, None) => write!(f, "original report"),
            (None, Some(j)) => write!(f, "original sentence {j}"),
            (Some(t), None) => write!(f, "sample {t}"),
            (Some(t), Some(j)) => write!(f, "sample {t} sentence {j}"),
        }
    }
}

/// Annotations as read from a file, keyed by `(case_id, unit)`.
pub type AnnotationMap = BTreeMap<(String, UnitKey), NodeLabelSet>;

#[derive(Serialize)]
struct AnnotationLine<'a> {
    case_id: &'a str,
    unit: &'static str,
    sample_index: Option<usize>,
    sentence_index: Option<usize>,
    entities: Vec<(&'a str, &'static str)>,
}

/// Loads `annotations.jsonl`.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<AnnotationMap, AnnotationError> {
    let path = path.as_ref();
    let mut map = AnnotationMap::new();
    for line in jsonl::read_lines(path)? {
        let case_id = line.case_id()?;
        let sample_index = line.opt_sample_index()?;
        let sentence_index = line.opt_uint("sentence_index")?.map(|j| j as usize);
        let unit = match line.str("unit")? {
            "report" => {
                if sentence_index.is_some() {
                    return Err(line.error("sentence_index", "must be null when unit=report").into());
                }
                UnitKey {
                    sample_index,
                    sentence_index: None,
                }
            }
            "sentence" => UnitKey {
                sample_index,
                sentence_index: Some(sentence_index.ok_or(AnnotationError::MissingSentenceIndex { line: line.no })?),
            },
            other => return Err(line.error("unit", format!("expected report or sentence, got `{other}`")).into()),
        };
        let mut set = NodeLabelSet::new();
        for item in line.array("entities")? {
            let pair = item
                .as_array()
                .filter(|a| a.len() == 2)
                .and_then(|a| Some((a[0].as_str()?, a[1].as_str()?)))
                .ok_or_else(|| line.error("entities", "expected [entity, label] string pairs"))?;
            let label = pair.1.parse::<EntityLabel>().map_err(|value| AnnotationError::UnknownLabel {
                line: line.no,
                value,
            })?;
            let entity = crate::text::normalize(&pair.0.to_lowercase());
            if entity.is_empty() {
                return Err(line.error("entities", "entity text must be nonempty").into());
            }
            set.insert(NodeLabelPair::new(entity, label));
        }
        if map.insert((case_id.clone(), unit), set).is_some() {
            return Err(CorpusError::DuplicateKey(format!("{case_id}/{unit}")).into());
        }
    }
    Ok(map)
}

/// Parses of one case: each original sentence, the whole original report, and
/// each sampled report (`samples[t - 1]`).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CaseAnnotations {
    pub original_report: NodeLabelSet,
    pub sentences: Vec<NodeLabelSet>,
    pub samples: Vec<NodeLabelSet>,
}

impl CaseAnnotations {
    /// Sentences whose parse came back empty.
    pub fn empty_parse_flags(&self) -> Vec<bool> {
        self.sentences.iter().map(NodeLabelSet::is_empty).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AnnotationStore {
    pub cases: BTreeMap<String, CaseAnnotations>,
}

/// Where [`annotate`] gets its parses from.
#[derive(Debug, Clone, Copy)]
pub enum AnnotationSource<'a> {
    Lexicon(&'a Lexicon),
    File(&'a AnnotationMap),
}

fn annotate_with_lexicon(set: &SampleSet, lexicon: &Lexicon) -> CaseAnnotations {
    let sentences: Vec<NodeLabelSet> = set
        .original
        .sentences
        .iter()
        .map(|s| extract_entities(&s.text, lexicon))
        .collect();
    let mut original_report = NodeLabelSet::new();
    for s in &sentences {
        original_report.union_with(s);
    }
    CaseAnnotations {
        original_report,
        sentences,
        samples: set.samples.iter().map(|r| extract_entities(&r.text, lexicon)).collect(),
    }
}

fn annotate_from_map(set: &SampleSet, map: &AnnotationMap) -> Result<CaseAnnotations, AnnotationError> {
    let get = |unit: UnitKey| {
        map.get(&(set.case_id.clone(), unit))
            .cloned()
            .ok_or_else(|| AnnotationError::AnnotationGap {
                case_id: set.case_id.clone(),
                unit: unit.to_string(),
            })
    };
    let sentences = (0..set.original.sentences.len())
        .map(|j| get(UnitKey::original_sentence(j)))
        .collect::<Result<Vec<_>, _>>()?;
    let original_report = match map.get(&(set.case_id.clone(), UnitKey::original_report())) {
        Some(s) => s.clone(),
        None => {
            let mut u = NodeLabelSet::new();
            for s in &sentences {
                u.union_with(s);
            }
            u
        }
    };
    let samples = (1..=set.t())
        .map(|t| get(UnitKey::sample_report(t)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CaseAnnotations {
        original_report,
        sentences,
        samples,
    })
}

/// Parses every original sentence and every sampled report.
///
/// The original's report-level set is the union of its sentence sets unless
/// the file source supplies one explicitly. Empty parses are kept (and show up
/// in [`CaseAnnotations::empty_parse_flags`]).
pub fn annotate(sets: &[SampleSet], source: AnnotationSource<'_>) -> Result<AnnotationStore, AnnotationError> {
    let cases: Vec<CaseAnnotations> = match source {
        AnnotationSource::Lexicon(lexicon) => sets.par_iter().map(|s| annotate_with_lexicon(s, lexicon)).collect(),
        AnnotationSource::File(map) => sets
            .iter()
            .map(|s| annotate_from_map(s, map))
            .collect::<Result<_, _>>()?,
    };
    Ok(AnnotationStore {
        cases: sets.iter().map(|s| s.case_id.clone()).zip(cases).collect(),
    })
}

impl AnnotationStore {
    pub fn get(&self, case_id: &str) -> Result<&CaseAnnotations, AnnotationError> {
        self.cases.get(case_id).ok_or_else(|| AnnotationError::AnnotationGap {
            case_id: case_id.to_string(),
            unit: "any unit".into(),
        })
    }

    /// Flattens the store into file form.
    pub fn to_map(&self) -> AnnotationMap {
        let mut map = AnnotationMap::new();
        for (case_id, case) in &self.cases {
            map.insert((case_id.clone(), UnitKey::original_report()), case.original_report.clone());
            for (j, s) in case.sentences.iter().enumerate() {
                map.insert((case_id.clone(), UnitKey::original_sentence(j)), s.clone());
            }
            for (i, s) in case.samples.iter().enumerate() {
                map.insert((case_id.clone(), UnitKey::sample_report(i + 1)), s.clone());
            }
        }
        map
    }

    pub fn write(&self, path: impl AsRef<Path>) -> crate::Result<()> {
        write_annotation_map(path, &self.to_map())
    }
}

/// Writes annotations in canonical `(case_id, unit)` order.
pub fn write_annotation_map(path: impl AsRef<Path>, map: &AnnotationMap) -> crate::Result<()> {
    let path = path.as_ref();
    let lines = map.iter().map(|((case_id, unit), set)| AnnotationLine {
        case_id,
        unit: if unit.sentence_index.is_some() { "sentence" } else { "report" },
        sample_index: unit.sample_index,
        sentence_index: unit.sentence_index,
        entities: set.to_json(),
    });
    let file = std::fs::File::create(path).map_err(|e| crate::Error::io(path, e))?;
    write_jsonl(std::io::BufWriter::new(file), lines).map_err(|e| crate::Error::io(path, e))
}

/// Reference (ground-truth) report sets: the `unit=report`, `sample_index=null`
/// lines of an annotation map.
pub fn reference_sets(map: &AnnotationMap) -> BTreeMap<String, NodeLabelSet> {
    map.iter()
        .filter(|((_, unit), _)| *unit == UnitKey::original_report())
        .map(|((case_id, _), set)| (case_id.clone(), set.clone()))
        .collect()
}
