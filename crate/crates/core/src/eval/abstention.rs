use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{check_pair, EvalError};

/// Guards `ceil` against fractions like 0.15 that are not exact in binary.
const CEIL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbstentionPoint {
    pub fraction: f64,
    pub retained: usize,
    pub mean_correctness: f64,
    /// `(m_q - m_0) / |m_0|`, as a fraction.
    pub relative_improvement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbstentionCurve {
    pub points: Vec<AbstentionPoint>,
}

/// 0, 0.05, ..., 0.5.
pub fn default_fractions() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 20.0).collect()
}

/// Number of items dropped at fraction `q`.
pub fn rejected_count(n: usize, q: f64) -> usize {
    let k = (q * n as f64 - CEIL_SLACK).ceil();
    (k.max(0.0) as usize).min(n)
}

/// Indices from most to least uncertain. Equal uncertainty puts the later
/// index first.
pub fn rejection_order(u: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..u.len()).collect();
    order.sort_by(|&a, &b| u[b].total_cmp(&u[a]).then(b.cmp(&a)));
    order
}

/// A uniformly random rejection order drawn from `seed`.
pub fn random_rejection_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

pub fn check_fractions(fractions: &[f64]) -> Result<(), EvalError> {
    let mut prev = f64::NEG_INFINITY;
    for &q in fractions {
        if !(0.0..1.0).contains(&q) || q <= prev {
            return Err(EvalError::InvalidFraction(q));
        }
        prev = q;
    }
    Ok(())
}

fn retained_mean(f: &[f64], order: &[usize], q: f64) -> Result<(usize, f64), EvalError> {
    let k = rejected_count(f.len(), q);
    let mut kept = order[k..].to_vec();
    if kept.is_empty() {
        return Err(EvalError::EmptyRetainedSet(q));
    }
    // Summing in index order makes q = 0 reproduce the base mean exactly.
    kept.sort_unstable();
    let sum: f64 = kept.iter().map(|&i| f[i]).sum();
    Ok((kept.len(), sum / kept.len() as f64))
}

fn relative(m: f64, base: f64) -> Result<f64, EvalError> {
    if base == 0.0 {
        if m == 0.0 {
            return Ok(0.0);
        }
        return Err(EvalError::DegenerateInput("mean correctness is zero with no rejection".into()));
    }
    Ok((m - base) / base.abs())
}

fn base_mean(f: &[f64]) -> Result<f64, EvalError> {
    if f.is_empty() {
        return Err(EvalError::EmptyRetainedSet(0.0));
    }
    Ok(f.iter().sum::<f64>() / f.len() as f64)
}

/// Mean correctness of the retained set after dropping the most uncertain
/// `ceil(q N)` items, for each `q`.
pub fn abstention_curve(u: &[f64], f: &[f64], fractions: &[f64]) -> Result<AbstentionCurve, EvalError> {
    check_pair(u, f)?;
    check_fractions(fractions)?;
    let base = base_mean(f)?;
    let order = rejection_order(u);
    let mut points = Vec::with_capacity(fractions.len());
    for &q in fractions {
        let (retained, m) = retained_mean(f, &order, q)?;
        points.push(AbstentionPoint {
            fraction: q,
            retained,
            mean_correctness: m,
            relative_improvement: relative(m, base)?,
        });
    }
    Ok(AbstentionCurve { points })
}

/// Random rejection averaged over `seeds`. The relative improvement is taken
/// from the averaged mean.
pub fn random_abstention_baseline(f: &[f64], fractions: &[f64], seeds: &[u64]) -> Result<AbstentionCurve, EvalError> {
    if f.iter().any(|x| !x.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    check_fractions(fractions)?;
    if seeds.is_empty() {
        return Err(EvalError::InsufficientData { needed: 1, found: 0 });
    }
    let base = base_mean(f)?;
    let orders: Vec<Vec<usize>> = seeds.iter().map(|&s| random_rejection_order(f.len(), s)).collect();
    let mut points = Vec::with_capacity(fractions.len());
    for &q in fractions {
        let mut total = 0.0;
        let mut retained = 0;
        for order in &orders {
            let (r, m) = retained_mean(f, order, q)?;
            total += m;
            retained = r;
        }
        let m = total / seeds.len() as f64;
        points.push(AbstentionPoint {
            fraction: q,
            retained,
            mean_correctness: m,
            relative_improvement: relative(m, base)?,
        });
    }
    Ok(AbstentionCurve { points })
}
