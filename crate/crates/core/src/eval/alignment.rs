use std::collections::BTreeMap;

use serde::Serialize;

use super::{EvalError, SentinelPolicy};
use crate::uq::{SentencePrecision, SentenceUncertainty, EMPTY_PARSE_PRECISION};

/// Per-sentence uncertainty and precision for one report, in sentence order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportSentences {
    pub case_id: String,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
}

impl ReportSentences {
    /// Groups sentence-level tables by case. Every precision row needs a
    /// matching uncertainty row.
    pub fn group(
        uncertainty: &[SentenceUncertainty],
        precision: &[SentencePrecision],
    ) -> Result<Vec<ReportSentences>, EvalError> {
        let lookup: BTreeMap<(&str, usize), f64> = uncertainty
            .iter()
            .map(|r| ((r.case_id.as_str(), r.sentence_index), r.u))
            .collect();
        let mut cases: BTreeMap<&str, BTreeMap<usize, (f64, f64)>> = BTreeMap::new();
        for p in precision {
            let u = lookup
                .get(&(p.case_id.as_str(), p.sentence_index))
                .ok_or_else(|| EvalError::MissingUncertainty {
                    case_id: p.case_id.clone(),
                    sentence_index: p.sentence_index,
                })?;
            cases.entry(&p.case_id).or_default().insert(p.sentence_index, (*u, p.p));
        }
        Ok(cases
            .into_iter()
            .map(|(id, rows)| {
                let (u, p) = rows.into_values().unzip();
                ReportSentences {
                    case_id: id.to_string(),
                    u,
                    p,
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentResult {
    /// Share of reports where a most-uncertain sentence is also a
    /// least-precise one.
    pub max_u_min_p_rate: f64,
    /// Share of reports where a least-uncertain sentence is also a
    /// most-precise one.
    pub min_u_max_p_rate: f64,
    pub n_evaluated: usize,
    /// Reports with fewer than two usable sentences.
    pub n_excluded: usize,
}

fn extreme_set(xs: &[f64], want_max: bool) -> Vec<usize> {
    let target = xs
        .iter()
        .copied()
        .fold(if want_max { f64::NEG_INFINITY } else { f64::INFINITY }, |a, b| {
            if want_max {
                a.max(b)
            } else {
                a.min(b)
            }
        });
    (0..xs.len()).filter(|&i| xs[i] == target).collect()
}

fn intersects(a: &[usize], b: &[usize]) -> bool {
    a.iter().any(|i| b.contains(i))
}

pub fn alignment_rates(reports: &[ReportSentences], policy: SentinelPolicy) -> Result<AlignmentResult, EvalError> {
    let mut evaluated = 0usize;
    let mut excluded = 0usize;
    let mut hi = 0usize;
    let mut lo = 0usize;
    for r in reports {
        if r.u.len() != r.p.len() {
            return Err(EvalError::LengthMismatch {
                left: r.u.len(),
                right: r.p.len(),
            });
        }
        if r.u.iter().chain(&r.p).any(|x| !x.is_finite()) {
            return Err(EvalError::NonFinite);
        }
        let mut u = Vec::with_capacity(r.u.len());
        let mut p = Vec::with_capacity(r.p.len());
        for (&ui, &pi) in r.u.iter().zip(&r.p) {
            let sentinel = pi == EMPTY_PARSE_PRECISION;
            match policy {
                SentinelPolicy::Exclude if sentinel => continue,
                SentinelPolicy::AsZero if sentinel => p.push(0.0),
                _ => p.push(pi),
            }
            u.push(ui);
        }
        if u.len() < 2 {
            excluded += 1;
            continue;
        }
        evaluated += 1;
        if intersects(&extreme_set(&u, true), &extreme_set(&p, false)) {
            hi += 1;
        }
        if intersects(&extreme_set(&u, false), &extreme_set(&p, true)) {
            lo += 1;
        }
    }
    if evaluated == 0 {
        return Err(EvalError::InsufficientData { needed: 1, found: 0 });
    }
    Ok(AlignmentResult {
        max_u_min_p_rate: hi as f64 / evaluated as f64,
        min_u_max_p_rate: lo as f64 / evaluated as f64,
        n_evaluated: evaluated,
        n_excluded: excluded,
    })
}
