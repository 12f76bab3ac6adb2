use alloc::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::StatsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult {
    pub kappa: f64,
    pub observed_agreement: f64,
    pub expected_agreement: f64,
    pub n: usize,
}

/// Cohen's kappa for two annotators labeling the same items.
///
/// When expected agreement is 1 both annotators used one identical label
/// throughout, so observed agreement is also 1 and kappa is defined as 1.
pub fn cohens_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<AgreementResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(StatsError::Empty);
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let mut marginals: BTreeMap<&T, (usize, usize)> = BTreeMap::new();
    for x in a {
        marginals.entry(x).or_default().0 += 1;
    }
    for y in b {
        marginals.entry(y).or_default().1 += 1;
    }
    let p_o = agree / n;
    let p_e: f64 = marginals
        .values()
        .map(|&(ca, cb)| (ca as f64 / n) * (cb as f64 / n))
        .sum();
    let kappa = if p_e < 1.0 {
        (p_o - p_e) / (1.0 - p_e)
    } else {
        1.0
    };
    Ok(AgreementResult {
        kappa,
        observed_agreement: p_o,
        expected_agreement: p_e,
        n: a.len(),
    })
}
