use super::{check_pair, mean, EvalError};

pub const DEFAULT_BINS: usize = 20;

/// Bin means closer than this (relative) are treated as tied.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct RceBin {
    /// Position of the first member in the stable ascending-`u` order.
    pub start: usize,
    pub len: usize,
    pub mean_u: f64,
    pub mean_f: f64,
}

/// `a >= b` up to the tie tolerance.
pub(crate) fn at_least(a: f64, b: f64) -> bool {
    a >= b || (b - a) <= TIE_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

/// Equal-mass bins over `u` sorted ascending (stable). When `n` is not a
/// multiple of `bins`, the first `n % bins` bins get one extra member.
pub fn rce_bins(u: &[f64], f: &[f64], bins: usize) -> Result<Vec<RceBin>, EvalError> {
    check_pair(u, f)?;
    let needed = bins.max(2);
    if u.len() < needed {
        return Err(EvalError::InsufficientData {
            needed,
            found: u.len(),
        });
    }
    let mut order: Vec<usize> = (0..u.len()).collect();
    order.sort_by(|&a, &b| u[a].total_cmp(&u[b]));
    let base = u.len() / bins;
    let extra = u.len() % bins;
    let mut out = Vec::with_capacity(bins);
    let mut start = 0;
    for b in 0..bins {
        let len = base + usize::from(b < extra);
        let members = &order[start..start + len];
        let us: Vec<f64> = members.iter().map(|&i| u[i]).collect();
        let fs: Vec<f64> = members.iter().map(|&i| f[i]).collect();
        out.push(RceBin {
            start,
            len,
            mean_u: mean(&us),
            mean_f: mean(&fs),
        });
        start += len;
    }
    Ok(out)
}

/// Empirical rank-calibration error over `bins` equal-mass bins.
///
/// For each bin, the share of other bins with mean correctness at least as
/// high is compared with the share of other bins with mean uncertainty at
/// most as high; the result is the mean absolute gap. 0 means uncertainty
/// ranks perfectly inverse to correctness.
pub fn empirical_rce(u: &[f64], f: &[f64], bins: usize) -> Result<f64, EvalError> {
    if bins < 2 {
        return Err(EvalError::InsufficientData { needed: 2, found: bins });
    }
    let table = rce_bins(u, f, bins)?;
    let others = (bins - 1) as f64;
    let mut total = 0.0;
    for (b, bin) in table.iter().enumerate() {
        let mut better = 0usize;
        let mut calmer = 0usize;
        for (c, other) in table.iter().enumerate() {
            if c == b {
                continue;
            }
            if at_least(other.mean_f, bin.mean_f) {
                better += 1;
            }
            if at_least(bin.mean_u, other.mean_u) {
                calmer += 1;
            }
        }
        total += (better as f64 / others - calmer as f64 / others).abs();
    }
    Ok(total / bins as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn anti_ranked_is_zero() {
        let u = [0.1, 0.2, 0.3, 0.4];
        let f = [0.9, 0.8, 0.7, 0.6];
        assert_eq!(empirical_rce(&u, &f, 2).unwrap(), 0.0);
        assert_eq!(empirical_rce(&u, &f, 4).unwrap(), 0.0);
    }

    #[test]
    fn worst_case_two_bins() {
        // Uncertainty agrees with correctness: every comparison is inverted.
        let u = [0.1, 0.2, 0.3, 0.4];
        let f = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(empirical_rce(&u, &f, 2).unwrap(), 1.0);
    }

    #[test]
    fn four_point_fixtures() {
        let u = [0.1, 0.2, 0.8, 0.9];
        assert_eq!(empirical_rce(&u, &[0.9, 0.8, 0.2, 0.1], 2).unwrap(), 0.0);
        assert_eq!(empirical_rce(&u, &[0.1, 0.2, 0.8, 0.9], 2).unwrap(), 1.0);
    }

    /// Bin sums in the original form: Σ reg(u) with reg the bin's mean
    /// correctness, and Σ u, compared bin against bin.
    fn brute_force(u: &[f64], f: &[f64], bins: usize) -> f64 {
        let n = u.len();
        let mut pairs: Vec<(f64, f64)> = u.iter().copied().zip(f.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let size = n / bins;
        let mut reg_sum = Vec::new();
        let mut u_sum = Vec::new();
        for b in 0..bins {
            let chunk = &pairs[b * size..(b + 1) * size];
            let reg = chunk.iter().map(|p| p.1).sum::<f64>() / size as f64;
            reg_sum.push(chunk.iter().map(|_| reg).sum::<f64>());
            u_sum.push(chunk.iter().map(|p| p.0).sum::<f64>());
        }
        let mut total = 0.0;
        for b in 0..bins {
            let a = (0..bins).filter(|&o| o != b && reg_sum[o] >= reg_sum[b]).count() as f64;
            let c = (0..bins).filter(|&o| o != b && u_sum[o] <= u_sum[b]).count() as f64;
            total += (a / (bins - 1) as f64 - c / (bins - 1) as f64).abs();
        }
        total / bins as f64
    }

    #[test]
    fn matches_brute_force_on_random_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let u: Vec<f64> = (0..100).map(|_| rng.random()).collect();
            let f: Vec<f64> = (0..100).map(|_| rng.random()).collect();
            let got = empirical_rce(&u, &f, 20).unwrap();
            assert!((got - brute_force(&u, &f, 20)).abs() < 1e-12);
        }
    }

    #[test]
    fn remainder_goes_to_leading_bins() {
        let u: Vec<f64> = (0..7).map(f64::from).collect();
        let bins = rce_bins(&u, &u, 3).unwrap();
        assert_eq!(bins.iter().map(|b| b.len).collect::<Vec<_>>(), vec![3, 2, 2]);
        assert_eq!(bins[1].start, 3);
    }

    #[test]
    fn preconditions() {
        assert!(matches!(
            empirical_rce(&[0.1, 0.2], &[0.1, 0.2], 3),
            Err(EvalError::InsufficientData { needed: 3, found: 2 })
        ));
        assert!(matches!(empirical_rce(&[0.1, 0.2], &[0.1, 0.2], 1), Err(EvalError::InsufficientData { .. })));
    }

    proptest! {
        #[test]
        fn bounded_and_transform_invariant(
            pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 10..80),
            bins in 2usize..10,
        ) {
            let (u, f): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let Ok(r) = empirical_rce(&u, &f, bins) else { return Ok(()); };
            prop_assert!((0.0..=1.0).contains(&r));
            let warped: Vec<f64> = u.iter().map(|x| (3.0 * x).exp() + 2.0).collect();
            prop_assert_eq!(empirical_rce(&warped, &f, bins).unwrap(), r);
        }

        #[test]
        fn strictly_anti_monotone_is_zero(n in 4usize..60, bins in 2usize..4) {
            let u: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
            let f: Vec<f64> = u.iter().map(|x| 1.0 - x * x).collect();
            prop_assert_eq!(empirical_rce(&u, &f, bins).unwrap(), 0.0);
        }
    }
}
