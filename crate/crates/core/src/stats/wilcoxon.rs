//! Two-sided Wilcoxon signed-rank test for paired samples.
//!
//! Ranks are tracked doubled so that average ranks of tied magnitudes stay
//! integral; the exact null distribution of W+ is then a subset-sum count
//! over those integers, which equals enumerating every sign assignment.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroMethod {
    /// Drop zero differences before ranking.
    #[default]
    Wilcox,
    /// Rank zero differences with the rest, then drop them.
    Pratt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonOptions {
    pub zero_method: ZeroMethod,
    /// Largest effective sample size that uses the exact distribution.
    pub exact_max_n: usize,
}

impl Default for WilcoxonOptions {
    fn default() -> Self {
        WilcoxonOptions {
            zero_method: ZeroMethod::Wilcox,
            exact_max_n: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTestResult {
    /// min(W+, W-)
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    pub p_value: f64,
    pub n_effective: usize,
    pub method: TestMethod,
    /// All differences were zero; p is 1 by convention.
    pub degenerate: bool,
}

/// Test with the default options (zeros discarded, exact up to n = 25).
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<PairedTestResult, StatsError> {
    wilcoxon_with(a, b, WilcoxonOptions::default())
}

pub fn wilcoxon_with(
    a: &[f64],
    b: &[f64],
    options: WilcoxonOptions,
) -> Result<PairedTestResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(StatsError::Empty);
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let ranked: Vec<f64> = match options.zero_method {
        ZeroMethod::Wilcox => diffs.iter().copied().filter(|d| *d != 0.0).collect(),
        ZeroMethod::Pratt => diffs.clone(),
    };
    let doubled = doubled_ranks(&ranked);
    // (doubled rank, positive?) for non-zero differences only
    let signed: Vec<(u64, bool)> = ranked
        .iter()
        .zip(&doubled)
        .filter(|(d, _)| **d != 0.0)
        .map(|(d, r)| (*r, *d > 0.0))
        .collect();
    let n = signed.len();
    if n == 0 {
        return Ok(PairedTestResult {
            statistic: 0.0,
            w_plus: 0.0,
            w_minus: 0.0,
            p_value: 1.0,
            n_effective: 0,
            method: TestMethod::Exact,
            degenerate: true,
        });
    }
    let w_plus2: u64 = signed.iter().filter(|s| s.1).map(|s| s.0).sum();
    let w_minus2: u64 = signed.iter().filter(|s| !s.1).map(|s| s.0).sum();
    let w_min2 = w_plus2.min(w_minus2);
    let ranks: Vec<u64> = signed.iter().map(|s| s.0).collect();

    let exact_max = options.exact_max_n.min(63);
    let (p_value, method) = if n <= exact_max {
        (exact_p(&ranks, w_min2), TestMethod::Exact)
    } else {
        (normal_p(&ranks, w_min2), TestMethod::NormalApprox)
    };
    Ok(PairedTestResult {
        statistic: w_min2 as f64 / 2.0,
        w_plus: w_plus2 as f64 / 2.0,
        w_minus: w_minus2 as f64 / 2.0,
        p_value,
        n_effective: n,
        method,
        degenerate: false,
    })
}

/// Twice the average rank of each |x|, ties sharing the mean position.
fn doubled_ranks(xs: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| {
        libm::fabs(xs[i])
            .partial_cmp(&libm::fabs(xs[j]))
            .unwrap_or(Ordering::Equal)
    });
    let mut out = vec![0u64; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && libm::fabs(xs[order[j + 1]]) == libm::fabs(xs[order[i]]) {
            j += 1;
        }
        // positions i+1 ..= j+1, doubled mean = (i+1) + (j+1)
        let r2 = (i + 1 + j + 1) as u64;
        for &k in &order[i..=j] {
            out[k] = r2;
        }
        i = j + 1;
    }
    out
}

/// 2 * P(W+ <= w) under the null, from subset-sum counts of the ranks.
fn exact_p(ranks: &[u64], w_min2: u64) -> f64 {
    let total: u64 = ranks.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let at_most: u64 = counts[..=w_min2 as usize].iter().sum();
    let p = 2.0 * at_most as f64 / libm::ldexp(1.0, ranks.len() as i32);
    p.min(1.0)
}

/// Normal approximation with the variance of the actual (tied) ranks and a
/// 0.5 continuity correction.
fn normal_p(ranks: &[u64], w_min2: u64) -> f64 {
    let sum: f64 = ranks.iter().map(|&r| r as f64 / 2.0).sum();
    let sum_sq: f64 = ranks
        .iter()
        .map(|&r| (r as f64 / 2.0) * (r as f64 / 2.0))
        .sum();
    let mean = sum / 2.0;
    let sd = libm::sqrt(sum_sq / 4.0);
    let w = w_min2 as f64 / 2.0;
    let z = ((w - mean + 0.5) / sd).min(0.0);
    libm::erfc(-z / core::f64::consts::SQRT_2).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute force over all 2^n sign flips of the observed ranks, using
    /// float average ranks computed independently.
    fn oracle_p(a: &[f64], b: &[f64]) -> f64 {
        let d: Vec<f64> = a
            .iter()
            .zip(b)
            .map(|(x, y)| x - y)
            .filter(|d| *d != 0.0)
            .collect();
        let n = d.len();
        if n == 0 {
            return 1.0;
        }
        let ranks: Vec<f64> = d
            .iter()
            .map(|x| {
                let below = d.iter().filter(|y| y.abs() < x.abs()).count() as f64;
                let equal = d.iter().filter(|y| y.abs() == x.abs()).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect();
        let w_plus: f64 = d
            .iter()
            .zip(&ranks)
            .filter(|(x, _)| **x > 0.0)
            .map(|(_, r)| r)
            .sum();
        let total: f64 = ranks.iter().sum();
        let observed = w_plus.min(total - w_plus);
        let mut hits = 0u64;
        for mask in 0u64..(1 << n) {
            let wp: f64 = (0..n)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| ranks[i])
                .sum();
            if wp.min(total - wp) <= observed + 1e-9 {
                hits += 1;
            }
        }
        hits as f64 / (1u64 << n) as f64
    }

    #[test]
    fn identical_is_degenerate() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.n_effective, 0);
    }

    #[test]
    fn three_positive() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0], &[0.0; 3]).unwrap();
        assert_eq!(r.w_minus, 0.0);
        assert_eq!(r.w_plus, 6.0);
        assert_eq!(r.method, TestMethod::Exact);
        assert_eq!(r.p_value, 0.25);
    }

    #[test]
    fn six_positive() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[0.0; 6]).unwrap();
        assert_eq!(r.p_value, 0.03125);
        assert!(r.p_value < 0.05);
    }

    #[test]
    fn ties_get_average_ranks() {
        assert_eq!(
            doubled_ranks(&[1.0, -1.0, 2.0, 3.0, -3.0, 3.0]),
            vec![3, 3, 6, 10, 10, 10]
        );
    }

    #[test]
    fn large_n_uses_normal() {
        let a: Vec<f64> = (1..=40).map(f64::from).collect();
        let r = wilcoxon_signed_rank(&a, &[0.0; 40]).unwrap();
        assert_eq!(r.method, TestMethod::NormalApprox);
        assert!(r.p_value < 1e-6);
        // near-null sample stays near 1
        let mixed: Vec<f64> = (1..=40)
            .map(|i| {
                if i % 2 == 0 {
                    f64::from(i)
                } else {
                    -f64::from(i)
                }
            })
            .collect();
        let r = wilcoxon_signed_rank(&mixed, &[0.0; 40]).unwrap();
        assert!(r.p_value > 0.5);
    }

    #[test]
    fn normal_tracks_exact_at_moderate_n() {
        let a: Vec<f64> = (1..=25)
            .map(|i| f64::from(i) * if i % 3 == 0 { -1.0 } else { 1.0 })
            .collect();
        let b = [0.0; 25];
        let exact = wilcoxon_signed_rank(&a, &b).unwrap();
        let approx = wilcoxon_with(
            &a,
            &b,
            WilcoxonOptions {
                exact_max_n: 0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(exact.method, TestMethod::Exact);
        assert_eq!(approx.method, TestMethod::NormalApprox);
        assert!((exact.p_value - approx.p_value).abs() < 0.01);
    }

    #[test]
    fn pratt_keeps_zero_ranks() {
        let a = [0.0, 1.0, 2.0, 3.0];
        let b = [0.0; 4];
        let w = wilcoxon_with(&a, &b, WilcoxonOptions::default()).unwrap();
        let p = wilcoxon_with(
            &a,
            &b,
            WilcoxonOptions {
                zero_method: ZeroMethod::Pratt,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(w.w_plus, 6.0);
        assert_eq!(p.w_plus, 9.0);
        assert_eq!(p.n_effective, 3);
    }

    #[test]
    fn input_errors() {
        assert_eq!(wilcoxon_signed_rank(&[], &[]), Err(StatsError::Empty));
        assert_eq!(
            wilcoxon_signed_rank(&[1.0], &[]),
            Err(StatsError::LengthMismatch(1, 0))
        );
    }

    fn small_pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..=12).prop_flat_map(|n| {
            (
                proptest::collection::vec(-4i32..=4, n),
                proptest::collection::vec(-4i32..=4, n),
            )
                .prop_map(|(a, b)| {
                    (
                        a.into_iter().map(f64::from).collect(),
                        b.into_iter().map(f64::from).collect(),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn exact_matches_enumeration((a, b) in small_pairs()) {
            let r = wilcoxon_signed_rank(&a, &b).unwrap();
            prop_assert!((r.p_value - oracle_p(&a, &b)).abs() <= 1e-12);
        }

        #[test]
        fn swapping_arguments((a, b) in small_pairs()) {
            let ab = wilcoxon_signed_rank(&a, &b).unwrap();
            let ba = wilcoxon_signed_rank(&b, &a).unwrap();
            prop_assert_eq!(ab.p_value, ba.p_value);
            prop_assert_eq!(ab.w_plus, ba.w_minus);
            prop_assert_eq!(ab.w_minus, ba.w_plus);
        }
    }
}
