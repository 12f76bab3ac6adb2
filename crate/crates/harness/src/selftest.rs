//! Statistics checked against oracles that share no code with the
//! implementations: sign enumeration for the Wilcoxon test, the exact
//! two-point distribution for the bootstrap, and hand-evaluated kappas.

use std::time::Instant;

use figqa_core::stats::{bootstrap_accuracy, cohens_kappa, wilcoxon_signed_rank};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub const WILCOXON_CASES: usize = 200;
pub const WILCOXON_MAX_N: usize = 12;
pub const WILCOXON_TOL: f64 = 1e-12;
pub const BOOTSTRAP_RESAMPLES: usize = 100_000;
pub const BOOTSTRAP_TOL: f64 = 0.01;
pub const KAPPA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Two-sided exact p-value by listing all sign assignments of the
/// non-zero differences and counting those whose smaller rank sum is at
/// most the observed one.
pub fn enumerate_wilcoxon_p(diffs: &[f64]) -> f64 {
    let d: Vec<f64> = diffs.iter().copied().filter(|x| *x != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return 1.0;
    }
    let mags: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    // average rank: 1 + #smaller + (#equal - 1) / 2
    let ranks: Vec<f64> = mags
        .iter()
        .map(|m| {
            let smaller = mags.iter().filter(|o| *o < m).count() as f64;
            let equal = mags.iter().filter(|o| *o == m).count() as f64;
            1.0 + smaller + (equal - 1.0) / 2.0
        })
        .collect();
    let total: f64 = ranks.iter().sum();
    let observed_plus: f64 = d
        .iter()
        .zip(&ranks)
        .filter(|(x, _)| **x > 0.0)
        .map(|(_, r)| r)
        .sum();
    let observed = observed_plus.min(total - observed_plus);
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let plus: f64 = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum();
        if plus.min(total - plus) <= observed + 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}

fn wilcoxon_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for case in 0..WILCOXON_CASES {
        let n = rng.random_range(1..=WILCOXON_MAX_N);
        // small integer values so ties and zero differences are common
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
        let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let expected = enumerate_wilcoxon_p(&diffs);
        match wilcoxon_signed_rank(&a, &b) {
            Ok(r) => {
                let err = (r.p_value - expected).abs();
                worst = worst.max(err);
                if err > WILCOXON_TOL {
                    failures.push(format!("case {case}: got {} want {expected}", r.p_value));
                }
            }
            Err(e) => failures.push(format!("case {case}: {e}")),
        }
    }
    Check {
        name: "wilcoxon exact p vs sign enumeration".into(),
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{WILCOXON_CASES} cases, n <= {WILCOXON_MAX_N}, max |diff| {worst:e} <= {WILCOXON_TOL:e}")
        } else {
            failures.join("; ")
        },
    }
}

fn bootstrap_check() -> Check {
    // resamples of [1,0] have accuracy 0, 1/2, 1 with probability 1/4, 1/2, 1/4
    let mean = 0.5;
    let std = (0.25f64 * 0.25 + 0.25 * 0.25).sqrt();
    match bootstrap_accuracy(&[true, false], BOOTSTRAP_RESAMPLES, 0) {
        Ok(r) => {
            let passed =
                (r.mean - mean).abs() <= BOOTSTRAP_TOL && (r.std_dev - std).abs() <= BOOTSTRAP_TOL;
            Check {
                name: "bootstrap on [1,0]".into(),
                passed,
                detail: format!(
                    "{BOOTSTRAP_RESAMPLES} resamples: mean {:.5} (want {mean} ± {BOOTSTRAP_TOL}), std {:.5} (want {std:.5} ± {BOOTSTRAP_TOL})",
                    r.mean, r.std_dev
                ),
            }
        }
        Err(e) => Check {
            name: "bootstrap on [1,0]".into(),
            passed: false,
            detail: e.to_string(),
        },
    }
}

fn kappa_check() -> Check {
    let cases: [(&[&str], &[&str], f64); 3] = [
        (&["y", "n", "y", "n", "n"], &["y", "n", "y", "n", "n"], 1.0),
        (&["y", "y", "n", "n"], &["y", "n", "n", "n"], 0.5),
        (&["y", "n"], &["n", "y"], -1.0),
    ];
    let mut details = Vec::new();
    let mut passed = true;
    for (a, b, want) in cases {
        match cohens_kappa(a, b) {
            Ok(r) => {
                let ok = (r.kappa - want).abs() <= KAPPA_TOL;
                passed &= ok;
                details.push(format!("{} (want {want})", r.kappa));
            }
            Err(e) => {
                passed = false;
                details.push(e.to_string());
            }
        }
    }
    Check {
        name: "cohen's kappa hand cases".into(),
        passed,
        detail: details.join(", "),
    }
}

/// Runs every check; the last entry reports the total wall time.
pub fn run_all() -> Vec<Check> {
    let started = Instant::now();
    let mut checks = vec![wilcoxon_check(), bootstrap_check(), kappa_check()];
    let secs = started.elapsed().as_secs_f64();
    checks.push(Check {
        name: "statistics oracle runtime".into(),
        passed: secs < 30.0,
        detail: format!("{secs:.3}s (limit 30s)"),
    });
    checks
}
