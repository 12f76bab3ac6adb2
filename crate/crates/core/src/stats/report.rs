//! Per-strategy accuracy breakdown across source and split, and the
//! accuracy gain per figurativeness bin.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::bootstrap::{BootstrapResult, ResamplePlan};
use super::wilcoxon::{wilcoxon_with, PairedTestResult, WilcoxonOptions};
use super::{accuracy, mix_seed, StatsError, DEFAULT_ALPHA, DEFAULT_RESAMPLES};
use crate::corpus::{Dataset, FigurativenessBin, Source, Split};
use crate::run::RunRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSelector {
    Figurative,
    NonFigurative,
    Overall,
}

impl SplitSelector {
    pub fn matches(self, split: Split) -> bool {
        match self {
            SplitSelector::Figurative => split == Split::Figurative,
            SplitSelector::NonFigurative => split == Split::NonFigurative,
            SplitSelector::Overall => true,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SplitSelector::Figurative => "fig",
            SplitSelector::NonFigurative => "non_fig",
            SplitSelector::Overall => "overall",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnKey {
    pub source: Source,
    pub split: SplitSelector,
}

impl ColumnKey {
    /// amazon fig, non-fig, overall, then the same for yelp.
    pub fn all() -> Vec<ColumnKey> {
        let mut out = Vec::with_capacity(6);
        for source in Source::ALL {
            for split in [
                SplitSelector::Figurative,
                SplitSelector::NonFigurative,
                SplitSelector::Overall,
            ] {
                out.push(ColumnKey { source, split });
            }
        }
        out
    }

    pub fn label(&self) -> String {
        alloc::format!("{}_{}", self.source.as_str(), self.split.as_str())
    }
}

/// What the significance test pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Accuracies on the shared bootstrap resamples.
    #[default]
    Resamples,
    /// Per-item correctness.
    PerItem,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreakdownOptions {
    pub n_resamples: usize,
    pub seed: u64,
    pub alpha: f64,
    pub pairing: Pairing,
    pub wilcoxon: WilcoxonOptions,
}

impl Default for BreakdownOptions {
    fn default() -> Self {
        BreakdownOptions {
            n_resamples: DEFAULT_RESAMPLES,
            seed: 0,
            alpha: DEFAULT_ALPHA,
            pairing: Pairing::Resamples,
            wilcoxon: WilcoxonOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownCell {
    pub n: usize,
    /// Plain accuracy over the cell's instances.
    pub accuracy: f64,
    pub bootstrap: BootstrapResult,
    /// Highest bootstrap mean in this column.
    pub is_best: bool,
    /// Test against the column's best strategy; absent on the best itself.
    pub vs_best: Option<PairedTestResult>,
    /// `vs_best.p_value < alpha`, i.e. significantly worse than the best.
    pub significantly_worse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub strategy: String,
    /// One entry per column; `None` when the column has no instances.
    pub cells: Vec<Option<BreakdownCell>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownReport {
    pub columns: Vec<ColumnKey>,
    pub rows: Vec<BreakdownRow>,
    pub options: BreakdownOptions,
}

impl BreakdownReport {
    pub fn cell(&self, strategy: &str, column: ColumnKey) -> Option<&BreakdownCell> {
        let c = self.columns.iter().position(|k| *k == column)?;
        self.rows
            .iter()
            .find(|r| r.strategy == strategy)?
            .cells
            .get(c)?
            .as_ref()
    }
}

/// Scores every run on every column with paired bootstrap resampling.
///
/// Each column draws one resample plan from a seed derived from the base
/// seed and the column position, and every strategy is scored on that same
/// plan. Rows come out sorted by strategy name, so the order runs are given
/// in has no effect.
pub fn breakdown_report<'a, I>(
    runs: I,
    dataset: &Dataset,
    options: BreakdownOptions,
) -> Result<BreakdownReport, StatsError>
where
    I: IntoIterator<Item = (&'a str, &'a RunRecord)>,
{
    let mut by_name: BTreeMap<&str, &RunRecord> = BTreeMap::new();
    for (name, run) in runs {
        run.check_dataset(dataset)?;
        if run.correct.len() != dataset.len() {
            return Err(StatsError::LengthMismatch(run.correct.len(), dataset.len()));
        }
        if by_name.insert(name, run).is_some() {
            return Err(StatsError::DuplicateStrategy(name.to_string()));
        }
    }
    let columns = ColumnKey::all();
    let mut rows: Vec<BreakdownRow> = by_name
        .keys()
        .map(|name| BreakdownRow {
            strategy: name.to_string(),
            cells: Vec::with_capacity(columns.len()),
        })
        .collect();

    for (ci, column) in columns.iter().enumerate() {
        let members: Vec<usize> = dataset
            .instances()
            .iter()
            .enumerate()
            .filter(|(_, inst)| inst.source == column.source && column.split.matches(inst.split))
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            for row in &mut rows {
                row.cells.push(None);
            }
            continue;
        }
        let plan = ResamplePlan::new(
            members.len(),
            options.n_resamples,
            mix_seed(options.seed, ci as u64),
        )?;
        let mut scored = Vec::with_capacity(by_name.len());
        for run in by_name.values() {
            let bits: Vec<bool> = members.iter().map(|&i| run.correct[i]).collect();
            let counts = plan.correct_counts(&bits)?;
            let boot = plan.summarize(&counts);
            scored.push((bits, counts, boot));
        }
        let best = best_index(&scored);
        for (ri, (bits, counts, boot)) in scored.iter().enumerate() {
            let vs_best = if ri == best {
                None
            } else {
                let (best_bits, best_counts, _) = &scored[best];
                Some(match options.pairing {
                    Pairing::Resamples => wilcoxon_with(
                        &to_f64_counts(best_counts),
                        &to_f64_counts(counts),
                        options.wilcoxon,
                    )?,
                    Pairing::PerItem => wilcoxon_with(
                        &to_f64_bits(best_bits),
                        &to_f64_bits(bits),
                        options.wilcoxon,
                    )?,
                })
            };
            let significantly_worse = vs_best
                .as_ref()
                .is_some_and(|t| !t.degenerate && t.p_value < options.alpha);
            rows[ri].cells.push(Some(BreakdownCell {
                n: bits.len(),
                accuracy: accuracy(bits)?,
                bootstrap: boot.clone(),
                is_best: ri == best,
                vs_best,
                significantly_worse,
            }));
        }
    }
    Ok(BreakdownReport {
        columns,
        rows,
        options,
    })
}

fn best_index(scored: &[(Vec<bool>, Vec<u32>, BootstrapResult)]) -> usize {
    let mut best = 0;
    for (i, s) in scored.iter().enumerate().skip(1) {
        if s.2.mean > scored[best].2.mean {
            best = i;
        }
    }
    best
}

// Counts rather than fractions keep tied differences exactly equal.
fn to_f64_counts(c: &[u32]) -> Vec<f64> {
    c.iter().map(|&x| f64::from(x)).collect()
}

fn to_f64_bits(b: &[bool]) -> Vec<f64> {
    b.iter().map(|&x| if x { 1.0 } else { 0.0 }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
    /// `None` marks an empty bin.
    pub baseline_accuracy: Option<f64>,
    pub method_accuracy: Option<f64>,
    pub gain: Option<f64>,
}

/// Plain accuracies of two runs on each bin and their difference.
pub fn figurativeness_gain_curve(
    bins: &[FigurativenessBin],
    baseline: &RunRecord,
    method: &RunRecord,
) -> Result<Vec<GainRow>, StatsError> {
    let lookup = |run: &RunRecord| -> BTreeMap<String, bool> {
        run.predictions
            .iter()
            .zip(&run.correct)
            .map(|(p, &c)| (p.instance_id.clone(), c))
            .collect()
    };
    let base = lookup(baseline);
    let meth = lookup(method);
    let mut rows = Vec::with_capacity(bins.len());
    for bin in bins {
        let mut b_bits = Vec::with_capacity(bin.ids.len());
        let mut m_bits = Vec::with_capacity(bin.ids.len());
        for id in &bin.ids {
            b_bits.push(
                *base
                    .get(id)
                    .ok_or_else(|| StatsError::MissingInstance(id.clone()))?,
            );
            m_bits.push(
                *meth
                    .get(id)
                    .ok_or_else(|| StatsError::MissingInstance(id.clone()))?,
            );
        }
        let (b, m) = if bin.ids.is_empty() {
            (None, None)
        } else {
            (Some(accuracy(&b_bits)?), Some(accuracy(&m_bits)?))
        };
        rows.push(GainRow {
            lower: bin.lower,
            upper: bin.upper,
            n: bin.ids.len(),
            baseline_accuracy: b,
            method_accuracy: m,
            gain: b.zip(m).map(|(b, m)| m - b),
        });
    }
    Ok(rows)
}
