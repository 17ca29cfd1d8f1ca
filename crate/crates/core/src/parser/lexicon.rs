use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::segment::segment_sentences;
use super::{AnnotationError, EntityLabel, NodeLabelPair, NodeLabelSet};
use crate::text::{normalize, word_tokens};

const DEFAULT_LEXICON: &str = include_str!("../../data/default_lexicon.json");

/// On-disk lexicon format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LexiconFile {
    pub anatomy: Vec<String>,
    pub observation: Vec<String>,
    pub negation_cues: Vec<String>,
    pub uncertainty_cues: Vec<String>,
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cue {
    Negation,
    Uncertainty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Entry {
    Anatomy(String),
    Observation(String),
    Cue(Cue),
}

/// Term and cue lists compiled into a longest-match table.
#[derive(Debug, Clone)]
pub struct Lexicon {
    anatomy: BTreeSet<String>,
    observation: BTreeSet<String>,
    entries: HashMap<String, Entry>,
    max_len: usize,
    source: LexiconFile,
}

fn key(surface: &str) -> String {
    word_tokens(surface).join(" ")
}

impl Lexicon {
    pub fn from_file_contents(file: LexiconFile) -> Result<Self, AnnotationError> {
        let bad = |msg: String| AnnotationError::InvalidLexicon(msg);
        let mut anatomy = BTreeSet::new();
        let mut observation = BTreeSet::new();
        let mut entries: HashMap<String, Entry> = HashMap::new();
        let insert = |k: String, e: Entry, entries: &mut HashMap<String, Entry>| {
            if k.is_empty() {
                return Err(bad("empty lexicon entry".into()));
            }
            match entries.get(&k) {
                Some(prev) if *prev != e => Err(bad(format!("`{k}` is listed under two roles"))),
                _ => {
                    entries.insert(k, e);
                    Ok(())
                }
            }
        };
        for term in &file.anatomy {
            let k = key(term);
            anatomy.insert(k.clone());
            insert(k.clone(), Entry::Anatomy(k), &mut entries)?;
        }
        for term in &file.observation {
            let k = key(term);
            observation.insert(k.clone());
            insert(k.clone(), Entry::Observation(k), &mut entries)?;
        }
        for cue in &file.negation_cues {
            insert(key(cue), Entry::Cue(Cue::Negation), &mut entries)?;
        }
        for cue in &file.uncertainty_cues {
            insert(key(cue), Entry::Cue(Cue::Uncertainty), &mut entries)?;
        }
        for (surface, canonical) in &file.aliases {
            let c = key(canonical);
            let target = if anatomy.contains(&c) {
                Entry::Anatomy(c)
            } else if observation.contains(&c) {
                Entry::Observation(c)
            } else {
                return Err(bad(format!("alias `{surface}` points at unknown term `{canonical}`")));
            };
            insert(key(surface), target, &mut entries)?;
        }
        let max_len = entries.keys().map(|k| k.split(' ').count()).max().unwrap_or(0);
        Ok(Lexicon {
            anatomy,
            observation,
            entries,
            max_len,
            source: file,
        })
    }

    pub fn from_json(json: &str) -> Result<Self, AnnotationError> {
        let file: LexiconFile =
            serde_json::from_str(json).map_err(|e| AnnotationError::InvalidLexicon(e.to_string()))?;
        Self::from_file_contents(file)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, AnnotationError> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path).map_err(|source| AnnotationError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&json)
    }

    /// The shipped chest X-ray lexicon.
    pub fn default_radiology() -> Self {
        Self::from_json(DEFAULT_LEXICON).expect("shipped lexicon is valid")
    }

    pub fn anatomy_terms(&self) -> impl Iterator<Item = &str> {
        self.anatomy.iter().map(String::as_str)
    }

    pub fn observation_terms(&self) -> impl Iterator<Item = &str> {
        self.observation.iter().map(String::as_str)
    }

    pub fn file(&self) -> &LexiconFile {
        &self.source
    }

    fn longest_match(&self, tokens: &[String], start: usize) -> Option<(usize, &Entry)> {
        let longest = self.max_len.min(tokens.len() - start);
        (1..=longest).rev().find_map(|len| {
            self.entries
                .get(&tokens[start..start + len].join(" "))
                .map(|e| (len, e))
        })
    }

    fn extract_sentence(&self, sentence: &str, out: &mut NodeLabelSet) {
        let tokens = word_tokens(sentence);
        let mut scope: Option<Cue> = None;
        let mut i = 0;
        while i < tokens.len() {
            let Some((len, entry)) = self.longest_match(&tokens, i) else {
                i += 1;
                continue;
            };
            match entry {
                Entry::Cue(cue) => scope = Some(*cue),
                Entry::Anatomy(entity) => {
                    out.insert(NodeLabelPair::new(entity.clone(), EntityLabel::AnatDp));
                }
                Entry::Observation(entity) => {
                    let label = match scope {
                        Some(Cue::Negation) => EntityLabel::ObsDa,
                        Some(Cue::Uncertainty) => EntityLabel::ObsU,
                        None => EntityLabel::ObsDp,
                    };
                    out.insert(NodeLabelPair::new(entity.clone(), label));
                }
            }
            i += len;
        }
    }
}

/// Lexicon stand-in for a neural entity parser.
///
/// Scans each sentence left to right taking the longest lexicon entry at
/// every position. Anatomy terms become `ANAT-DP`. Observation terms become
/// `OBS-DA` after a negation cue, `OBS-U` after an uncertainty cue, and
/// `OBS-DP` otherwise; the most recent cue in the same sentence governs.
pub fn extract_entities(text: &str, lexicon: &Lexicon) -> NodeLabelSet {
    let mut out = NodeLabelSet::new();
    for sentence in segment_sentences(&normalize(text)) {
        lexicon.extract_sentence(&sentence, &mut out);
    }
    out
}
