//! Dataset ingestion (LIBSVM text), synthetic generation and seeded splitting.

mod libsvm;
mod sparse;
mod split;
mod synth;

use serde::{Deserialize, Serialize};

pub use libsvm::{load_libsvm, parse_libsvm, write_libsvm};
pub use sparse::CsrMatrix;
pub use split::{split_dataset, DataSplit};
pub use synth::{synth_logreg_data, synth_logreg_data_with_truth};

use crate::error::{Error, Result};

/// Binary-labelled design matrix. Labels are always `±1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub features: CsrMatrix<f64>,
    pub labels: Vec<i8>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: CsrMatrix<f64>, labels: Vec<i8>) -> Result<Self> {
        if features.n_rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.n_rows(),
                got: labels.len(),
            });
        }
        if labels.iter().any(|&l| l != 1 && l != -1) {
            return Err(Error::InvalidConfig("labels must be +1 or -1".into()));
        }
        Ok(Self {
            name: name.into(),
            features,
            labels,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.n_cols()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            features: self.features.select_rows(rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }
}
