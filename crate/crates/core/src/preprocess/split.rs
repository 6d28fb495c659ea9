use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, PreprocessError};

pub const TRAIN_FRACTION: f64 = 0.64;
pub const VALIDATION_FRACTION: f64 = 0.16;
const MIN_ROWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSplit {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub seed: u64,
}

/// Stratified 64/16/20 partition of row indices by label.
pub fn split_indices(labels: &[u32], seed: u64) -> Result<SplitIndices, PreprocessError> {
    if labels.len() < MIN_ROWS {
        return Err(PreprocessError::TooFewRows {
            needed: MIN_ROWS,
            found: labels.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_classes = labels.iter().copied().max().unwrap_or(0) as usize + 1;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }

    let mut out = SplitIndices {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        seed,
    };
    for mut rows in by_class {
        rows.shuffle(&mut rng);
        let n = rows.len();
        let n_train = (n as f64 * TRAIN_FRACTION).round() as usize;
        let n_val = ((n as f64 * VALIDATION_FRACTION).round() as usize).min(n - n_train);
        out.train.extend_from_slice(&rows[..n_train]);
        out.validation.extend_from_slice(&rows[n_train..n_train + n_val]);
        out.test.extend_from_slice(&rows[n_train + n_val..]);
    }
    out.train.shuffle(&mut rng);
    out.validation.shuffle(&mut rng);
    out.test.shuffle(&mut rng);
    Ok(out)
}

pub fn split(data: &Dataset, seed: u64) -> Result<DataSplit, PreprocessError> {
    let idx = split_indices(data.labels(), seed)?;
    Ok(DataSplit {
        train: data.select_rows(&idx.train),
        validation: data.select_rows(&idx.validation),
        test: data.select_rows(&idx.test),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn balanced(n: usize) -> Vec<u32> {
        (0..n).map(|i| (i % 2) as u32).collect()
    }

    fn positives(labels: &[u32], idx: &[usize]) -> usize {
        idx.iter().filter(|&&i| labels[i] == 1).count()
    }

    #[test]
    fn hundred_balanced_rows() {
        let labels = balanced(100);
        let s = split_indices(&labels, 7).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (64, 16, 20));
        assert_eq!(positives(&labels, &s.train), 32);
        assert_eq!(positives(&labels, &s.validation), 8);
        assert_eq!(positives(&labels, &s.test), 10);
    }

    #[test]
    fn full_scale_subset() {
        let s = split_indices(&balanced(400_000), 1).unwrap();
        assert_eq!(
            (s.train.len(), s.validation.len(), s.test.len()),
            (256_000, 64_000, 80_000)
        );
    }

    #[test]
    fn same_seed_same_indices() {
        let labels = balanced(57);
        assert_eq!(split_indices(&labels, 3).unwrap(), split_indices(&labels, 3).unwrap());
        assert_ne!(split_indices(&labels, 3).unwrap(), split_indices(&labels, 4).unwrap());
    }

    #[test]
    fn too_few_rows() {
        assert_eq!(
            split_indices(&balanced(9), 0).unwrap_err(),
            PreprocessError::TooFewRows { needed: 10, found: 9 }
        );
    }

    proptest! {
        #[test]
        fn disjoint_exhaustive_and_stratified(
            labels in prop::collection::vec(0u32..2, 10..400),
            seed in any::<u64>()
        ) {
            let s = split_indices(&labels, seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
            let n = labels.len() as f64;
            let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
            for (part, frac) in [(&s.train, 0.64), (&s.validation, 0.16), (&s.test, 0.20)] {
                let want_pos = pos * frac;
                let want_neg = (n - pos) * frac;
                let got_pos = positives(&labels, part) as f64;
                let got_neg = part.len() as f64 - got_pos;
                prop_assert!((got_pos - want_pos).abs() <= 1.0);
                prop_assert!((got_neg - want_neg).abs() <= 1.0);
            }
        }
    }
}
