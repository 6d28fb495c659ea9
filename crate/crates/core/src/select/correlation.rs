use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{cell, SelectError};
use crate::ingest::escape_cell;
use crate::preprocess::Dataset;

/// Name given to the label column inside a correlation matrix.
pub const LABEL_COLUMN: &str = "label";

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn rank(values: &[f64]) -> Result<Vec<f64>, SelectError> {
    if values.is_empty() {
        return Err(SelectError::EmptyInput);
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let v = values[order[start]];
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == v {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let r = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            out[i] = r;
        }
        start = end;
    }
    Ok(out)
}

fn centered(r: &[f64]) -> (Vec<f64>, f64) {
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    let d: Vec<f64> = r.iter().map(|v| v - mean).collect();
    let ss = d.iter().map(|v| v * v).sum();
    (d, ss)
}

/// Pearson correlation of two centered rank vectors. The 1/n factors of
/// the population moments cancel.
fn pearson_centered(dx: &[f64], ssx: f64, dy: &[f64], ssy: f64) -> Option<f64> {
    if ssx == 0.0 || ssy == 0.0 {
        return None;
    }
    let cov: f64 = dx.iter().zip(dy).map(|(a, b)| a * b).sum();
    Some((cov / (ssx * ssy).sqrt()).clamp(-1.0, 1.0))
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, SelectError> {
    if x.len() != y.len() {
        return Err(SelectError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(SelectError::TooFewObservations(x.len()));
    }
    let (dx, ssx) = centered(&rank(x)?);
    let (dy, ssy) = centered(&rank(y)?);
    pearson_centered(&dx, ssx, &dy, ssy).ok_or(SelectError::ConstantInput)
}

/// Pairwise Spearman coefficients over every feature column plus the label.
/// Pairs involving a constant column are `None`; the diagonal is always 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub feature_names: Vec<String>,
    pub constant: Vec<bool>,
    pub matrix: Vec<Vec<Option<f64>>>,
}

pub fn correlation_matrix(data: &Dataset) -> Result<CorrelationMatrix, SelectError> {
    if data.n_features() == 0 {
        return Err(SelectError::NoFeatures);
    }
    if data.n_rows() < 2 {
        return Err(SelectError::TooFewObservations(data.n_rows()));
    }
    let labels: Vec<f64> = data.labels().iter().map(|&y| y as f64).collect();
    let mut names = data.feature_names().to_vec();
    names.push(LABEL_COLUMN.to_string());
    let ranked = data
        .columns()
        .iter()
        .map(|c| c.as_slice())
        .chain(std::iter::once(labels.as_slice()))
        .map(|c| rank(c).map(|r| centered(&r)))
        .collect::<Result<Vec<_>, _>>()?;
    let p = ranked.len();
    let mut matrix = vec![vec![None; p]; p];
    for i in 0..p {
        matrix[i][i] = Some(1.0);
        for j in i + 1..p {
            let r = pearson_centered(&ranked[i].0, ranked[i].1, &ranked[j].0, ranked[j].1);
            matrix[i][j] = r;
            matrix[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        feature_names: names,
        constant: ranked.iter().map(|(_, ss)| *ss == 0.0).collect(),
        matrix,
    })
}

impl CorrelationMatrix {
    pub fn len(&self) -> usize {
        self.feature_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.feature_names.is_empty()
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.feature_names.iter().position(|n| n == a)?;
        let j = self.feature_names.iter().position(|n| n == b)?;
        self.matrix[i][j]
    }

    /// Square layout: a header row of names, then one row per feature.
    /// Undefined coefficients are empty cells.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), SelectError> {
        let header: Vec<String> = self.feature_names.iter().map(|n| escape_cell(n)).collect();
        writeln!(out, "feature,{}", header.join(","))?;
        for (name, row) in self.feature_names.iter().zip(&self.matrix) {
            let cells: Vec<String> = row.iter().map(|v| cell(*v)).collect();
            writeln!(out, "{},{}", escape_cell(name), cells.join(","))?;
        }
        Ok(())
    }

    /// One `feature_a,feature_b,spearman` row per ordered pair.
    pub fn write_long<W: Write>(&self, mut out: W) -> Result<(), SelectError> {
        writeln!(out, "feature_a,feature_b,spearman")?;
        for (a, row) in self.feature_names.iter().zip(&self.matrix) {
            for (b, v) in self.feature_names.iter().zip(row) {
                writeln!(out, "{},{},{}", escape_cell(a), escape_cell(b), cell(*v))?;
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::to_value(self).expect("plain data"))
            .expect("plain data")
    }
}
