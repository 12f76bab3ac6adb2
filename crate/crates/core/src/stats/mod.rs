//! Accuracy, bootstrap resampling, Wilcoxon signed-rank tests, Cohen's
//! kappa and the per-split breakdowns built from them.

mod bootstrap;
mod kappa;
mod report;
mod wilcoxon;

use alloc::string::String;

pub use bootstrap::{bootstrap_accuracy, BootstrapResult, ResamplePlan};
pub use kappa::{cohens_kappa, AgreementResult};
pub use report::{
    breakdown_report, figurativeness_gain_curve, BreakdownCell, BreakdownOptions, BreakdownReport,
    BreakdownRow, ColumnKey, GainRow, Pairing, SplitSelector,
};
pub use wilcoxon::{
    wilcoxon_signed_rank, wilcoxon_with, PairedTestResult, TestMethod, WilcoxonOptions, ZeroMethod,
};

use crate::run::RunError;

/// Resamples used when none is given.
pub const DEFAULT_RESAMPLES: usize = 1000;
/// Significance level used when none is given.
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("input is empty")]
    Empty,
    #[error("paired inputs differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("n_resamples must be positive")]
    NoResamples,
    #[error("strategy `{0}` given twice")]
    DuplicateStrategy(String),
    #[error("instance `{0}` missing from a run")]
    MissingInstance(String),
    #[error(transparent)]
    Run(#[from] RunError),
}

/// Fraction of `true` entries.
pub fn accuracy(correct: &[bool]) -> Result<f64, StatsError> {
    if correct.is_empty() {
        return Err(StatsError::Empty);
    }
    Ok(correct.iter().filter(|&&c| c).count() as f64 / correct.len() as f64)
}

/// SplitMix64 finalizer, used to derive independent per-column seeds.
pub(crate) fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
