use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    /// Row indices into the source dataset, per part.
    pub train_rows: Vec<usize>,
    pub validation_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

/// Seeded shuffle followed by contiguous slicing.
///
/// Validation and test sizes are `round(n·f)`; train takes the remainder.
pub fn split_dataset(ds: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<DataSplit> {
    let (ft, fv, fs) = fractions;
    if !(ft > 0.0 && fv > 0.0 && fs > 0.0) || ((ft + fv + fs) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "split fractions must be positive and sum to 1, got ({ft}, {fv}, {fs})"
        )));
    }
    let n = ds.n_samples();
    let n_val = (n as f64 * fv).round() as usize;
    let n_test = (n as f64 * fs).round() as usize;
    if n_val == 0 || n_test == 0 || n_val + n_test >= n {
        return Err(Error::TooFewSamples { n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n - n_val - n_test;
    let train_rows = order[..n_train].to_vec();
    let validation_rows = order[n_train..n_train + n_val].to_vec();
    let test_rows = order[n_train + n_val..].to_vec();
    Ok(DataSplit {
        train: ds.select_rows(&train_rows),
        validation: ds.select_rows(&validation_rows),
        test: ds.select_rows(&test_rows),
        train_rows,
        validation_rows,
        test_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::synth_logreg_data;

    #[test]
    fn ninety_five_five() {
        let ds = synth_logreg_data(100, 3, 0, 0.1);
        let sp = split_dataset(&ds, (0.9, 0.05, 0.05), 1).unwrap();
        assert_eq!(
            (sp.train.n_samples(), sp.validation.n_samples(), sp.test.n_samples()),
            (90, 5, 5)
        );
    }

    #[test]
    fn same_seed_same_split() {
        let ds = synth_logreg_data(50, 2, 0, 0.1);
        let a = split_dataset(&ds, (0.8, 0.1, 0.1), 9).unwrap();
        let b = split_dataset(&ds, (0.8, 0.1, 0.1), 9).unwrap();
        assert_eq!(a, b);
        let c = split_dataset(&ds, (0.8, 0.1, 0.1), 10).unwrap();
        assert_ne!(a.train_rows, c.train_rows);
    }

    #[test]
    fn parts_partition_rows() {
        let ds = synth_logreg_data(73, 2, 4, 0.1);
        let sp = split_dataset(&ds, (0.7, 0.2, 0.1), 2).unwrap();
        let mut all: Vec<usize> = sp
            .train_rows
            .iter()
            .chain(&sp.validation_rows)
            .chain(&sp.test_rows)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..73).collect::<Vec<_>>());
        for (k, &r) in sp.test_rows.iter().enumerate() {
            assert_eq!(sp.test.features.row(k), ds.features.row(r));
            assert_eq!(sp.test.labels[k], ds.labels[r]);
        }
    }

    #[test]
    fn tiny_dataset_is_rejected() {
        let ds = synth_logreg_data(8, 2, 0, 0.1);
        assert_eq!(
            split_dataset(&ds, (0.9, 0.05, 0.05), 0),
            Err(Error::TooFewSamples { n: 8 })
        );
    }

    #[test]
    fn bad_fractions_are_rejected() {
        let ds = synth_logreg_data(100, 2, 0, 0.1);
        assert!(matches!(split_dataset(&ds, (0.9, 0.1, 0.1), 0), Err(Error::InvalidConfig(_))));
        assert!(matches!(split_dataset(&ds, (1.0, 0.0, 0.0), 0), Err(Error::InvalidConfig(_))));
    }
}
