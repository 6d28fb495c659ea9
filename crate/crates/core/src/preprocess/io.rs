//! Dataset CSV export with a JSON sidecar describing the schema and the
//! fitted transformation parameters.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Dataset, EncodingSpec, FeatureKind, PreprocessError, ScalerParams};
use crate::ingest::parse_csv;

const LABEL_COLUMN: &str = "label";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub feature_names: Vec<String>,
    pub feature_kinds: Vec<FeatureKind>,
    #[serde(default)]
    pub encoding: Option<EncodingSpec>,
    #[serde(default)]
    pub scaler: Option<ScalerParams>,
    #[serde(default)]
    pub split_seed: Option<u64>,
}

impl DatasetMeta {
    pub fn describe(ds: &Dataset) -> DatasetMeta {
        DatasetMeta {
            feature_names: ds.feature_names().to_vec(),
            feature_kinds: ds.feature_kinds().to_vec(),
            encoding: None,
            scaler: None,
            split_seed: None,
        }
    }
}

pub fn write_dataset_csv<W: Write>(ds: &Dataset, mut out: W) -> Result<(), PreprocessError> {
    let mut line = ds.feature_names().join(",");
    line.push(',');
    line.push_str(LABEL_COLUMN);
    writeln!(out, "{line}")?;
    let mut row = Vec::with_capacity(ds.n_features());
    for i in 0..ds.n_rows() {
        ds.row_into(i, &mut row);
        line.clear();
        for v in &row {
            // shortest round-trip representation
            line.push_str(&v.to_string());
            line.push(',');
        }
        line.push_str(&ds.labels()[i].to_string());
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_dataset_csv<R: Read>(input: R, meta: &DatasetMeta) -> Result<Dataset, PreprocessError> {
    let table = parse_csv(input, true).map_err(|e| PreprocessError::Format(e.to_string()))?;
    let p = meta.feature_names.len();
    if table.columns.len() != p + 1
        || table.columns[..p] != meta.feature_names[..]
        || table.columns[p] != LABEL_COLUMN
    {
        return Err(PreprocessError::Format(
            "CSV header does not match the sidecar feature list".into(),
        ));
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(table.rows.len()); p];
    let mut labels = Vec::with_capacity(table.rows.len());
    for (row, line) in table.rows.iter().zip(&table.row_lines) {
        for (j, cell) in row[..p].iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                PreprocessError::Format(format!("line {line}: bad number `{cell}`"))
            })?;
            columns[j].push(v);
        }
        let l: u32 = row[p]
            .parse()
            .ok()
            .filter(|&l| l <= 1)
            .ok_or_else(|| PreprocessError::Format(format!("line {line}: bad label `{}`", row[p])))?;
        labels.push(l);
    }
    Dataset::new(
        meta.feature_names.clone(),
        meta.feature_kinds.clone(),
        columns,
        labels,
    )
}
