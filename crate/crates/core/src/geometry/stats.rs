use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::GeometryError;

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // positions i..=j hold ranks i+1..=j+1
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Spearman's rank correlation (Pearson over average ranks).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, GeometryError> {
    if xs.len() != ys.len() {
        return Err(GeometryError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(GeometryError::TooShort(xs.len()));
    }
    pearson(&average_ranks(xs), &average_ranks(ys)).ok_or(GeometryError::UndefinedCorrelation)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMethod {
    Exact,
    NormalApprox,
}

/// Which tail the signed-rank p-value covers. `Less` tests whether the
/// differences `baseline - observed` tend to be negative, i.e. whether the
/// observed value exceeds the baseline.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    #[default]
    TwoSided,
    Less,
    Greater,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatTestResult {
    /// `min(W+, W-)`.
    pub w: f64,
    pub p_value: f64,
    pub n_effective: usize,
    pub method: TestMethod,
}

/// Largest non-zero difference count for which the exact null distribution
/// is used.
pub const EXACT_MAX_N: usize = 50;

/// One-sample Wilcoxon signed-rank test of `observed` against a baseline
/// sample, on the differences `baseline_i - observed`.
pub fn wilcoxon_signed_rank(observed: f64, baseline: &[f64], alternative: Alternative) -> StatTestResult {
    let diffs: Vec<f64> = baseline.iter().map(|b| b - observed).filter(|d| *d != 0.0).collect();
    wilcoxon_from_differences(&diffs, alternative)
}

/// Signed-rank test on precomputed non-zero differences (zeros are dropped).
pub fn wilcoxon_from_differences(diffs: &[f64], alternative: Alternative) -> StatTestResult {
    let diffs: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return StatTestResult {
            w: 0.0,
            p_value: 1.0,
            n_effective: 0,
            method: TestMethod::Exact,
        };
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    // an empty float sum is -0.0; adding +0.0 keeps W = 0 printing as "0"
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum::<f64>() + 0.0;
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;
    let w = w_plus.min(w_minus);

    if n <= EXACT_MAX_N {
        // average ranks are multiples of 1/2, so doubled ranks are integers
        let doubled: Vec<usize> = ranks.iter().map(|r| libm::round(2.0 * r) as usize).collect();
        let dist = signed_rank_counts(&doubled);
        let all = libm::ldexp(1.0, n as i32);
        let lower = |t2: usize| dist[..=t2.min(dist.len() - 1)].iter().sum::<f64>() / all;
        let upper = |t2: usize| dist[t2.min(dist.len())..].iter().sum::<f64>() / all;
        let wp2 = libm::round(2.0 * w_plus) as usize;
        let p = match alternative {
            Alternative::TwoSided => 2.0 * lower(libm::round(2.0 * w) as usize),
            Alternative::Less => lower(wp2),
            Alternative::Greater => upper(wp2),
        };
        return StatTestResult {
            w,
            p_value: p.min(1.0),
            n_effective: n,
            method: TestMethod::Exact,
        };
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0;
    var -= tie_term(&abs) / 48.0;
    let sd = libm::sqrt(var);
    let cdf = |x: f64| 0.5 * libm::erfc(-(x - mean) / (sd * core::f64::consts::SQRT_2));
    let p = match alternative {
        Alternative::TwoSided => 2.0 * cdf(w),
        Alternative::Less => cdf(w_plus),
        Alternative::Greater => 1.0 - cdf(w_plus),
    };
    StatTestResult {
        w,
        p_value: p.min(1.0),
        n_effective: n,
        method: TestMethod::NormalApprox,
    }
}

/// Number of sign assignments giving each doubled positive-rank sum.
fn signed_rank_counts(doubled: &[usize]) -> Vec<f64> {
    let max: usize = doubled.iter().sum();
    let mut dist = vec![0.0; max + 1];
    dist[0] = 1.0;
    let mut reach = 0;
    for &r in doubled {
        for s in (0..=reach).rev() {
            if dist[s] != 0.0 {
                dist[s + r] += dist[s];
            }
        }
        reach += r;
    }
    dist
}

/// `sum(t^3 - t)` over groups of tied absolute differences.
fn tie_term(abs: &[f64]) -> f64 {
    let mut sorted = abs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        term += t * t * t - t;
        i = j + 1;
    }
    term
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng as _;

    /// Rank by counting, independent of any sorting.
    fn oracle_ranks(xs: &[f64]) -> Vec<f64> {
        xs.iter()
            .map(|&x| {
                let below = xs.iter().filter(|&&y| y < x).count() as f64;
                let equal = xs.iter().filter(|&&y| y == x).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    }

    fn oracle_spearman(xs: &[f64], ys: &[f64]) -> f64 {
        let (rx, ry) = (oracle_ranks(xs), oracle_ranks(ys));
        let n = xs.len() as f64;
        let mx = rx.iter().sum::<f64>() / n;
        let my = ry.iter().sum::<f64>() / n;
        let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
        let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
        cov / (vx * vy).sqrt()
    }

    #[test]
    fn spearman_monotone_and_reversed() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
    }

    #[test]
    fn spearman_with_ties_matches_oracle() {
        let xs = [1.0, 2.0, 2.0, 4.0];
        let ys = [1.0, 3.0, 2.0, 4.0];
        // ranks (1, 2.5, 2.5, 4) vs (1, 3, 2, 4): cov 4.5, var 4.5 and 5
        let hand = 4.5 / (4.5f64 * 5.0).sqrt();
        let got = spearman(&xs, &ys).unwrap();
        assert!((got - hand).abs() < 1e-15);
        assert!((got - oracle_spearman(&xs, &ys)).abs() < 1e-15);
    }

    #[test]
    fn spearman_errors() {
        assert_eq!(spearman(&[1.0, 2.0], &[1.0]), Err(GeometryError::LengthMismatch(2, 1)));
        assert_eq!(spearman(&[1.0, 2.0], &[1.0, 2.0]), Err(GeometryError::TooShort(2)));
        assert_eq!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(GeometryError::UndefinedCorrelation)
        );
    }

    #[test]
    fn spearman_matches_rank_oracle_on_random_lists() {
        let mut rng = seeded(17);
        for _ in 0..500 {
            let n = rng.random_range(3..40);
            // coarse values so ties are common
            let xs: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..8))).collect();
            let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            match spearman(&xs, &ys) {
                Ok(r) => assert!((r - oracle_spearman(&xs, &ys)).abs() < 1e-12),
                Err(e) => assert_eq!(e, GeometryError::UndefinedCorrelation),
            }
        }
    }

    /// Two-sided exact p by enumerating every sign assignment of `|d|`.
    fn enumerate_p(diffs: &[f64]) -> (f64, f64) {
        let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
        let ranks = oracle_ranks(&abs);
        let n = diffs.len();
        let total: f64 = ranks.iter().sum();
        let wp: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
        let w = wp.min(total - wp);
        let mut hits = 0u64;
        for mask in 0u64..(1 << n) {
            let t: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            if t <= w + 1e-9 {
                hits += 1;
            }
        }
        (w, (2.0 * hits as f64 / (1u64 << n) as f64).min(1.0))
    }

    #[test]
    fn five_differences_match_enumeration() {
        let d = [1.0, 2.0, 3.0, -1.0, 4.0];
        let r = wilcoxon_from_differences(&d, Alternative::TwoSided);
        let (w, p) = enumerate_p(&d);
        // ranks 1.5, 3, 4, 1.5, 5: W- = 1.5
        assert_eq!(r.w, 1.5);
        assert_eq!((r.w, r.p_value), (w, p));
        assert_eq!(r.method, TestMethod::Exact);
    }

    #[test]
    fn symmetric_differences_give_p_one() {
        let r = wilcoxon_from_differences(&[1.0, -1.0, 2.0, -2.0], Alternative::TwoSided);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn exact_matches_enumeration_up_to_twelve() {
        let mut rng = seeded(3);
        for n in 1..=12 {
            for _ in 0..40 {
                let d: Vec<f64> = (0..n)
                    .map(|_| {
                        let v = f64::from(rng.random_range(1..6));
                        if rng.random::<bool>() { v } else { -v }
                    })
                    .collect();
                let r = wilcoxon_from_differences(&d, Alternative::TwoSided);
                let (w, p) = enumerate_p(&d);
                assert_eq!(r.w, w);
                assert!((r.p_value - p).abs() <= 1e-15, "n={n} {d:?}: {} vs {p}", r.p_value);
            }
        }
    }

    #[test]
    fn forty_three_same_sign_differences() {
        let baseline: Vec<f64> = (1..=43).map(|i| 0.5 - 0.01 * i as f64).collect();
        let r = wilcoxon_signed_rank(0.9, &baseline, Alternative::TwoSided);
        assert_eq!(r.w.to_bits(), 0.0f64.to_bits());
        assert_eq!(r.n_effective, 43);
        let expected = 2.0 * 2f64.powi(-43);
        assert_eq!(r.p_value, expected);
        assert!((r.p_value - 2.27e-13).abs() < 0.005e-13);
    }

    #[test]
    fn zero_differences_are_dropped() {
        let r = wilcoxon_signed_rank(1.0, &[1.0, 1.0, 1.0], Alternative::TwoSided);
        assert_eq!((r.w, r.p_value, r.n_effective), (0.0, 1.0, 0));
        let r = wilcoxon_signed_rank(0.0, &[0.0, 1.0, 2.0], Alternative::TwoSided);
        assert_eq!(r.n_effective, 2);
    }

    #[test]
    fn one_sided_tails() {
        let d: Vec<f64> = (1..=10).map(|i| -(i as f64)).collect();
        let less = wilcoxon_from_differences(&d, Alternative::Less);
        let greater = wilcoxon_from_differences(&d, Alternative::Greater);
        assert_eq!(less.p_value, 2f64.powi(-10));
        assert_eq!(greater.p_value, 1.0);
    }

    #[test]
    fn normal_approximation_above_fifty() {
        // 100 distinct positive diffs: W- = 0, z = -mean/sd
        let d: Vec<f64> = (1..=100).map(f64::from).collect();
        let r = wilcoxon_from_differences(&d, Alternative::TwoSided);
        assert_eq!(r.method, TestMethod::NormalApprox);
        let mean = 100.0 * 101.0 / 4.0;
        let sd = (100.0f64 * 101.0 * 201.0 / 24.0).sqrt();
        let z: f64 = -mean / sd;
        let p = libm::erfc(-z / 2f64.sqrt());
        assert!((r.p_value - p).abs() < 1e-30);
        // balanced signs land near p = 1
        let mixed: Vec<f64> = (1..=100).map(|i| if i % 2 == 0 { i as f64 } else { -(i as f64) }).collect();
        assert!(wilcoxon_from_differences(&mixed, Alternative::TwoSided).p_value > 0.8);
    }

    #[test]
    fn exact_and_normal_agree_roughly_at_the_boundary() {
        let mut rng = seeded(8);
        let d: Vec<f64> = (0..50).map(|_| rng.random_range(-0.8..1.0)).collect();
        let exact = wilcoxon_from_differences(&d, Alternative::TwoSided).p_value;
        let mut d51 = d.clone();
        d51.push(1e-9);
        let approx = wilcoxon_from_differences(&d51, Alternative::TwoSided);
        assert_eq!(approx.method, TestMethod::NormalApprox);
        assert!((exact - approx.p_value).abs() < 0.02, "{exact} {}", approx.p_value);
        assert!(exact > 0.001 && exact < 0.9);
    }
}
