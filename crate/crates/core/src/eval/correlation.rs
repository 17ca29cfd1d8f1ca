use std::collections::BTreeMap;

use super::{check_pair, mean, EvalError, SentinelPolicy};
use crate::uq::{SentencePrecision, SentenceUncertainty, EMPTY_PARSE_PRECISION};

/// Sample Pearson correlation. A constant series is an error, never NaN.
pub fn pearson(u: &[f64], f: &[f64]) -> Result<f64, EvalError> {
    check_pair(u, f)?;
    if u.len() < 2 {
        return Err(EvalError::InsufficientData {
            needed: 2,
            found: u.len(),
        });
    }
    if is_constant(u) || is_constant(f) {
        return Err(EvalError::DegenerateInput("constant series".into()));
    }
    let mu = mean(u);
    let mf = mean(f);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in u.iter().zip(f) {
        let dx = x - mu;
        let dy = y - mf;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::DegenerateInput("constant series".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn is_constant(xs: &[f64]) -> bool {
    xs.iter().all(|x| *x == xs[0])
}

/// Pearson within each group. Groups are keyed by whatever label the caller
/// attaches to each item (pathology, site, model ...).
pub fn pearson_by_group<K: Ord + Clone>(
    u: &[f64],
    f: &[f64],
    groups: &[K],
) -> Result<BTreeMap<K, Result<f64, EvalError>>, EvalError> {
    check_pair(u, f)?;
    if groups.len() != u.len() {
        return Err(EvalError::LengthMismatch {
            left: u.len(),
            right: groups.len(),
        });
    }
    let mut split: BTreeMap<K, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((x, y), g) in u.iter().zip(f).zip(groups) {
        let e = split.entry(g.clone()).or_default();
        e.0.push(*x);
        e.1.push(*y);
    }
    Ok(split.into_iter().map(|(k, (x, y))| (k, pearson(&x, &y))).collect())
}

/// Joins sentence uncertainty with sentence precision on
/// `(case_id, sentence_index)` and applies the sentinel policy.
pub fn sentence_pairs(
    uncertainty: &[SentenceUncertainty],
    precision: &[SentencePrecision],
    policy: SentinelPolicy,
) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
    let lookup: BTreeMap<(&str, usize), f64> = uncertainty
        .iter()
        .map(|r| ((r.case_id.as_str(), r.sentence_index), r.u))
        .collect();
    let mut keyed: Vec<(&SentencePrecision, f64)> = Vec::with_capacity(precision.len());
    for p in precision {
        let u = lookup
            .get(&(p.case_id.as_str(), p.sentence_index))
            .ok_or_else(|| EvalError::MissingUncertainty {
                case_id: p.case_id.clone(),
                sentence_index: p.sentence_index,
            })?;
        keyed.push((p, *u));
    }
    keyed.sort_by(|a, b| (&a.0.case_id, a.0.sentence_index).cmp(&(&b.0.case_id, b.0.sentence_index)));
    let mut us = Vec::new();
    let mut ps = Vec::new();
    for (p, u) in keyed {
        let value = match (p.p == EMPTY_PARSE_PRECISION, policy) {
            (true, SentinelPolicy::Exclude) => continue,
            (true, SentinelPolicy::AsZero) => 0.0,
            _ => p.p,
        };
        us.push(u);
        ps.push(value);
    }
    Ok((us, ps))
}
