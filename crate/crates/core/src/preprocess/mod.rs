//! Cleaning, encoding, scaling and splitting flow records into datasets.

mod clean;
mod encoding;
mod io;
mod pipeline;
mod scaler;
mod split;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::clean::{clean, CleanReport};
pub use self::encoding::{apply_encoding, fit_encoding, CategoryVocab, EncodingSpec};
pub use self::io::{read_dataset_csv, write_dataset_csv, DatasetMeta};
pub use self::pipeline::{prepare, PreparedData, Preprocessor};
pub use self::scaler::{apply_scaler, fit_scaler, ScalerParams};
pub use self::split::{split, split_indices, DataSplit, SplitIndices};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("dataset shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in column `{column}` row {row}")]
    NonFinite { column: String, row: usize },
    #[error("duplicate feature name `{0}`")]
    DuplicateFeature(String),
    #[error("need at least {needed} rows, have {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("malformed dataset file: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for PreprocessError {
    fn from(e: std::io::Error) -> Self {
        PreprocessError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    /// A 0/1 column: encoded categorical bit or missingness indicator.
    Bit,
}

/// Column-major numeric feature matrix with binary labels (0 = Benign, 1 = Attack).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    kinds: Vec<FeatureKind>,
    columns: Vec<Vec<f64>>,
    labels: Vec<u32>,
}

impl Dataset {
    pub fn new(
        names: Vec<String>,
        kinds: Vec<FeatureKind>,
        columns: Vec<Vec<f64>>,
        labels: Vec<u32>,
    ) -> Result<Dataset, PreprocessError> {
        if names.len() != kinds.len() || names.len() != columns.len() {
            return Err(PreprocessError::Shape(format!(
                "{} names, {} kinds, {} columns",
                names.len(),
                kinds.len(),
                columns.len()
            )));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(PreprocessError::DuplicateFeature(n.clone()));
            }
        }
        for (name, col) in names.iter().zip(&columns) {
            if col.len() != labels.len() {
                return Err(PreprocessError::Shape(format!(
                    "column `{name}` has {} rows, labels have {}",
                    col.len(),
                    labels.len()
                )));
            }
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(PreprocessError::NonFinite {
                    column: name.clone(),
                    row,
                });
            }
        }
        Ok(Dataset {
            names,
            kinds,
            columns,
            labels,
        })
    }

    /// Builds a dataset from row-major values.
    pub fn from_rows(
        names: Vec<String>,
        kinds: Vec<FeatureKind>,
        rows: &[Vec<f64>],
        labels: Vec<u32>,
    ) -> Result<Dataset, PreprocessError> {
        let p = names.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != p) {
            return Err(PreprocessError::Shape(format!(
                "row {bad} has {} values, expected {p}",
                rows[bad].len()
            )));
        }
        let columns = (0..p).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Dataset::new(names, kinds, columns, labels)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.names
    }

    pub fn feature_kinds(&self) -> &[FeatureKind] {
        &self.kinds
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn row_into(&self, i: usize, buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend(self.columns.iter().map(|c| c[i]));
    }

    pub fn positive_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    /// Keeps the given columns, in the given order.
    pub fn project(&self, features: &[usize]) -> Result<Dataset, PreprocessError> {
        if let Some(&bad) = features.iter().find(|&&j| j >= self.n_features()) {
            return Err(PreprocessError::Shape(format!(
                "feature index {bad} out of range for {} features",
                self.n_features()
            )));
        }
        Dataset::new(
            features.iter().map(|&j| self.names[j].clone()).collect(),
            features.iter().map(|&j| self.kinds[j]).collect(),
            features.iter().map(|&j| self.columns[j].clone()).collect(),
            self.labels.clone(),
        )
    }

    pub fn project_names(&self, names: &[String]) -> Result<Dataset, PreprocessError> {
        let idx = names
            .iter()
            .map(|n| {
                self.feature_index(n)
                    .ok_or_else(|| PreprocessError::UnknownFeature(n.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.project(&idx)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            names: self.names.clone(),
            kinds: self.kinds.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&i| c[i]).collect())
                .collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Replaces one column; used by transforms that keep the schema.
    pub(crate) fn columns_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.columns
    }
}
