use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::StatsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub mean: f64,
    /// Population standard deviation of the resample accuracies.
    pub std_dev: f64,
    pub n_resamples: usize,
    pub seed: u64,
}

/// Pre-drawn resample indices, shareable across strategies so that every
/// strategy is scored on the same resampled item multisets.
#[derive(Debug, Clone, PartialEq)]
pub struct ResamplePlan {
    n_items: usize,
    n_resamples: usize,
    seed: u64,
    indices: Vec<u32>,
}

impl ResamplePlan {
    pub fn new(n_items: usize, n_resamples: usize, seed: u64) -> Result<Self, StatsError> {
        if n_items == 0 {
            return Err(StatsError::Empty);
        }
        if n_resamples == 0 {
            return Err(StatsError::NoResamples);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let upper = u32::try_from(n_items).expect("item count fits in u32");
        let indices = (0..n_items * n_resamples)
            .map(|_| rng.random_range(0..upper))
            .collect();
        Ok(ResamplePlan {
            n_items,
            n_resamples,
            seed,
            indices,
        })
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_resamples(&self) -> usize {
        self.n_resamples
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn resample(&self, r: usize) -> &[u32] {
        &self.indices[r * self.n_items..(r + 1) * self.n_items]
    }

    /// Number of correct items in each resample.
    pub fn correct_counts(&self, correct: &[bool]) -> Result<Vec<u32>, StatsError> {
        if correct.len() != self.n_items {
            return Err(StatsError::LengthMismatch(correct.len(), self.n_items));
        }
        Ok(self
            .indices
            .chunks_exact(self.n_items)
            .map(|chunk| chunk.iter().filter(|&&i| correct[i as usize]).count() as u32)
            .collect())
    }

    /// Mean and population std-dev of the resample accuracies.
    pub fn summarize(&self, counts: &[u32]) -> BootstrapResult {
        let n = self.n_items as f64;
        let r = counts.len() as f64;
        let mean = counts.iter().map(|&c| f64::from(c) / n).sum::<f64>() / r;
        let var = counts
            .iter()
            .map(|&c| {
                let d = f64::from(c) / n - mean;
                d * d
            })
            .sum::<f64>()
            / r;
        BootstrapResult {
            mean,
            std_dev: libm::sqrt(var),
            n_resamples: counts.len(),
            seed: self.seed,
        }
    }
}

/// Bootstrap estimate of accuracy: `n_resamples` draws with replacement of
/// `correct.len()` items from a ChaCha8 stream seeded with `seed`.
pub fn bootstrap_accuracy(
    correct: &[bool],
    n_resamples: usize,
    seed: u64,
) -> Result<BootstrapResult, StatsError> {
    let plan = ResamplePlan::new(correct.len(), n_resamples, seed)?;
    let counts = plan.correct_counts(correct)?;
    Ok(plan.summarize(&counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn all_ones() {
        for seed in [0, 1, 99] {
            let b = bootstrap_accuracy(&[true; 7], 200, seed).unwrap();
            assert_eq!(b.mean, 1.0);
            assert_eq!(b.std_dev, 0.0);
        }
    }

    #[test]
    fn two_point_distribution() {
        // resample means of [1,0]: 0 w.p. 1/4, 1/2 w.p. 1/2, 1 w.p. 1/4
        let oracle_mean: f64 = 0.25 * 0.0 + 0.5 * 0.5 + 0.25 * 1.0;
        let oracle_var: f64 = 0.25 * 0.25 + 0.5 * 0.0 + 0.25 * 0.25;
        let b = bootstrap_accuracy(&[true, false], 100_000, 11).unwrap();
        assert!((b.mean - oracle_mean).abs() < 0.01);
        assert!((b.std_dev - oracle_var.sqrt()).abs() < 0.01);
    }

    #[test]
    fn seeded_determinism() {
        let bits = vec![true, false, true, true, false];
        assert_eq!(
            bootstrap_accuracy(&bits, 500, 42).unwrap(),
            bootstrap_accuracy(&bits, 500, 42).unwrap()
        );
        assert_ne!(
            bootstrap_accuracy(&bits, 500, 42).unwrap(),
            bootstrap_accuracy(&bits, 500, 43).unwrap()
        );
    }

    #[test]
    fn errors() {
        assert_eq!(bootstrap_accuracy(&[], 10, 0), Err(StatsError::Empty));
        assert_eq!(
            bootstrap_accuracy(&[true], 0, 0),
            Err(StatsError::NoResamples)
        );
    }

    proptest! {
        // fixed seed: the band is 3 sigma, so an unseeded run would flake
        #![proptest_config(ProptestConfig {
            cases: 48,
            rng_seed: proptest::test_runner::RngSeed::Fixed(0x5eed),
            ..ProptestConfig::default()
        })]
        #[test]
        fn mean_converges(bits in proptest::collection::vec(any::<bool>(), 1..40), seed in any::<u64>()) {
            let n_resamples = 2000;
            let b = bootstrap_accuracy(&bits, n_resamples, seed).unwrap();
            let acc = super::super::accuracy(&bits).unwrap();
            let tol = 3.0 * b.std_dev / (n_resamples as f64).sqrt() + 1e-6;
            prop_assert!((b.mean - acc).abs() <= tol, "mean {} acc {} tol {}", b.mean, acc, tol);
        }
    }
}
