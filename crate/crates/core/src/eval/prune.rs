use std::collections::BTreeMap;

use serde::Serialize;

use super::abstention::{check_fractions, rejected_count};
use super::EvalError;
use crate::corpus::Report;
use crate::uq::SentenceUncertainty;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrunedReport {
    pub case_id: String,
    /// Kept sentences joined by single spaces; empty if all were removed.
    pub text: String,
    pub kept_sentences: Vec<usize>,
    pub removed_sentences: Vec<usize>,
    pub emptied: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneResult {
    pub reports: Vec<PrunedReport>,
    pub removed_total: usize,
    pub sentence_total: usize,
}

/// Removes the `ceil(q * total)` most uncertain sentences across the whole
/// corpus. Ties drop the later `(case_id, sentence_index)` first.
pub fn prune_sentences(reports: &[Report], uncertainty: &[SentenceUncertainty], q: f64) -> Result<PruneResult, EvalError> {
    check_fractions(&[q])?;
    let lookup: BTreeMap<(&str, usize), f64> = uncertainty
        .iter()
        .map(|r| ((r.case_id.as_str(), r.sentence_index), r.u))
        .collect();
    let mut ordered: Vec<&Report> = reports.iter().collect();
    ordered.sort_by(|a, b| a.case_id.cmp(&b.case_id));

    let mut pool: Vec<(usize, usize, f64)> = Vec::new();
    for (r, report) in ordered.iter().enumerate() {
        for s in &report.sentences {
            let u = *lookup
                .get(&(report.case_id.as_str(), s.index))
                .ok_or_else(|| EvalError::MissingUncertainty {
                    case_id: report.case_id.clone(),
                    sentence_index: s.index,
                })?;
            if !u.is_finite() {
                return Err(EvalError::NonFinite);
            }
            pool.push((r, s.index, u));
        }
    }
    // Pool is built in canonical order, so a larger position is a later key.
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| pool[b].2.total_cmp(&pool[a].2).then(b.cmp(&a)));
    let k = rejected_count(pool.len(), q);
    let mut drop = vec![false; pool.len()];
    for &i in &order[..k] {
        drop[i] = true;
    }

    let mut out: Vec<PrunedReport> = ordered
        .iter()
        .map(|r| PrunedReport {
            case_id: r.case_id.clone(),
            text: String::new(),
            kept_sentences: Vec::new(),
            removed_sentences: Vec::new(),
            emptied: false,
        })
        .collect();
    for (i, &(r, idx, _)) in pool.iter().enumerate() {
        if drop[i] {
            out[r].removed_sentences.push(idx);
        } else {
            out[r].kept_sentences.push(idx);
        }
    }
    for (pr, report) in out.iter_mut().zip(&ordered) {
        let kept: Vec<&str> = pr
            .kept_sentences
            .iter()
            .map(|&j| report.sentences[j].text.as_str())
            .collect();
        pr.text = kept.join(" ");
        pr.emptied = kept.is_empty() && !report.sentences.is_empty();
    }
    Ok(PruneResult {
        reports: out,
        removed_total: k,
        sentence_total: pool.len(),
    })
}
