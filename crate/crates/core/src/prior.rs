//! Detection of references to prior examinations, and how abstention
//! changes their prevalence.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::eval::{self, EvalError};
use crate::text::normalize;
use crate::uq::ReportUncertainty;

const DEFAULT_SUBSTRINGS: &str = include_str!("../data/default_prior_substrings.txt");

#[derive(Debug, Error)]
pub enum PriorError {
    #[error("substring list is empty")]
    EmptySubstringList,
    #[error("substring on line {0} is blank after normalization")]
    BlankSubstring(usize),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no detection for case {0}")]
    MissingDetection(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
pub struct MatchOptions {
    /// Require non-alphanumeric characters (or the text edge) on both sides.
    pub word_boundary: bool,
    /// Count each substring at most once per report.
    pub once_per_substring: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriorDetection {
    pub case_id: String,
    pub flagged: bool,
    pub match_count: usize,
    /// `(substring, byte offset)` in the normalized lowercase text.
    pub matches: Vec<(String, usize)>,
}

/// An ordered, normalized substring list.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorMatcher {
    substrings: Vec<String>,
    options: MatchOptions,
}

impl PriorMatcher {
    pub fn new<S: AsRef<str>>(substrings: &[S], options: MatchOptions) -> Result<Self, PriorError> {
        if substrings.is_empty() {
            return Err(PriorError::EmptySubstringList);
        }
        let mut out = Vec::with_capacity(substrings.len());
        for (i, s) in substrings.iter().enumerate() {
            let s = normalize(s.as_ref()).to_lowercase();
            if s.is_empty() {
                return Err(PriorError::BlankSubstring(i + 1));
            }
            out.push(s);
        }
        Ok(PriorMatcher {
            substrings: out,
            options,
        })
    }

    /// Parses one substring per line; blank lines and `#` comments are skipped.
    pub fn parse_list(contents: &str, options: MatchOptions) -> Result<Self, PriorError> {
        let lines: Vec<&str> = contents
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();
        Self::new(&lines, options)
    }

    pub fn from_path(path: impl AsRef<Path>, options: MatchOptions) -> Result<Self, PriorError> {
        let path = path.as_ref();
        let contents = std::fs::read_to_string(path).map_err(|source| PriorError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_list(&contents, options)
    }

    /// The shipped stand-in list.
    pub fn default_list(options: MatchOptions) -> Self {
        Self::parse_list(DEFAULT_SUBSTRINGS, options).expect("bundled substring list is valid")
    }

    pub fn substrings(&self) -> &[String] {
        &self.substrings
    }

    pub fn options(&self) -> MatchOptions {
        self.options
    }

    pub fn detect(&self, case_id: &str, text: &str) -> PriorDetection {
        let hay = normalize(text).to_lowercase();
        let mut matches = Vec::new();
        for s in &self.substrings {
            let mut from = 0;
            while let Some(off) = hay[from..].find(s.as_str()) {
                let at = from + off;
                let end = at + s.len();
                if self.options.word_boundary && !bounded(&hay, at, end) {
                    from = at + hay[at..].chars().next().map_or(1, char::len_utf8);
                    continue;
                }
                matches.push((s.clone(), at));
                if self.options.once_per_substring {
                    break;
                }
                from = end;
            }
        }
        PriorDetection {
            case_id: case_id.to_string(),
            flagged: !matches.is_empty(),
            match_count: matches.len(),
            matches,
        }
    }

    pub fn detect_all<'a, I>(&self, reports: I) -> Vec<PriorDetection>
    where
        I: IntoParallelIterator<Item = (&'a str, &'a str)>,
    {
        reports.into_par_iter().map(|(id, text)| self.detect(id, text)).collect()
    }
}

fn bounded(hay: &str, start: usize, end: usize) -> bool {
    let before = hay[..start].chars().next_back().is_none_or(|c| !c.is_alphanumeric());
    let after = hay[end..].chars().next().is_none_or(|c| !c.is_alphanumeric());
    before && after
}

/// Plain-substring detection with per-occurrence counting.
pub fn detect_priors<S: AsRef<str>>(case_id: &str, text: &str, substrings: &[S]) -> Result<PriorDetection, PriorError> {
    Ok(PriorMatcher::new(substrings, MatchOptions::default())?.detect(case_id, text))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HallucinationAbstentionRow {
    pub policy: String,
    pub rejected_fraction: f64,
    pub pct_reports_with_priors: f64,
    pub mean_substrings_per_report: f64,
    pub retained: usize,
}

fn stats(detections: &[&PriorDetection], kept: &[usize]) -> (f64, f64) {
    let flagged = kept.iter().filter(|&&i| detections[i].flagged).count();
    let total: usize = kept.iter().map(|&i| detections[i].match_count).sum();
    let n = kept.len() as f64;
    (100.0 * flagged as f64 / n, total as f64 / n)
}

/// Prevalence of prior references after guided and random abstention.
/// Detections are matched to uncertainty rows by `case_id`; rows come back
/// guided first, then random, each in fraction order.
pub fn hallucination_abstention_effect(
    u: &[ReportUncertainty],
    detections: &[PriorDetection],
    fractions: &[f64],
    seeds: &[u64],
) -> Result<Vec<HallucinationAbstentionRow>, PriorError> {
    let mut rows: Vec<&ReportUncertainty> = u.iter().collect();
    rows.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    let by_id: std::collections::HashMap<&str, &PriorDetection> =
        detections.iter().map(|d| (d.case_id.as_str(), d)).collect();
    let aligned: Vec<&PriorDetection> = rows
        .iter()
        .map(|r| {
            by_id
                .get(r.case_id.as_str())
                .copied()
                .ok_or_else(|| PriorError::MissingDetection(r.case_id.clone()))
        })
        .collect::<Result<_, _>>()?;
    let us: Vec<f64> = rows.iter().map(|r| r.u).collect();
    if us.iter().any(|x| !x.is_finite()) {
        return Err(EvalError::NonFinite.into());
    }
    eval::check_fractions(fractions)?;
    if seeds.is_empty() {
        return Err(EvalError::InsufficientData { needed: 1, found: 0 }.into());
    }
    let n = us.len();
    let guided = eval::rejection_order(&us);
    let randoms: Vec<Vec<usize>> = seeds.iter().map(|&s| eval::random_rejection_order(n, s)).collect();
    let mut out = Vec::with_capacity(2 * fractions.len());
    for &q in fractions {
        let k = eval::rejected_count(n, q);
        if k >= n {
            return Err(EvalError::EmptyRetainedSet(q).into());
        }
        let (pct, mean) = stats(&aligned, &guided[k..]);
        out.push(HallucinationAbstentionRow {
            policy: "guided".into(),
            rejected_fraction: q,
            pct_reports_with_priors: pct,
            mean_substrings_per_report: mean,
            retained: n - k,
        });
    }
    for &q in fractions {
        let k = eval::rejected_count(n, q);
        let (mut pct, mut mean) = (0.0, 0.0);
        for order in &randoms {
            let (p, m) = stats(&aligned, &order[k..]);
            pct += p;
            mean += m;
        }
        out.push(HallucinationAbstentionRow {
            policy: "random".into(),
            rejected_fraction: q,
            pct_reports_with_priors: pct / seeds.len() as f64,
            mean_substrings_per_report: mean / seeds.len() as f64,
            retained: n - k,
        });
    }
    Ok(out)
}
