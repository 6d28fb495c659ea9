//! Confusion counts, derived rates, noise corruption and evaluation reports.

use std::fmt::Write as _;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learner::{EnsembleModel, LearnError};
use crate::preprocess::{Dataset, FeatureKind};
use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("no attack rows to detect")]
    NoPositiveRows,
    #[error("noise sigma {0} must be finite and non-negative")]
    InvalidSigma(f64),
    #[error(transparent)]
    Learn(#[from] LearnError),
}

/// Counts with Attack (class 1) as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn confusion(predictions: &[u32], labels: &[u32]) -> Result<ConfusionMatrix, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    let mut m = ConfusionMatrix::default();
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p == 1, y == 1) {
            (true, true) => m.tp += 1,
            (true, false) => m.fp += 1,
            (false, true) => m.fn_ += 1,
            (false, false) => m.tn += 1,
        }
    }
    Ok(m)
}

/// Rates derived from a confusion matrix; `None` where the denominator is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub specificity: Option<f64>,
    pub fnr: Option<f64>,
    pub fpr: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(m: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    if m.total() == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let precision = ratio(m.tp, m.tp + m.fp);
    let recall = ratio(m.tp, m.tp + m.fn_);
    let specificity = ratio(m.tn, m.tn + m.fp);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Ok(Metrics {
        accuracy: ratio(m.tp + m.tn, m.total()),
        precision,
        recall,
        f1,
        specificity,
        fnr: recall.map(|r| 1.0 - r),
        fpr: specificity.map(|s| 1.0 - s),
    })
}

/// Share of attack rows predicted as attack: recall under another name.
pub fn detection_probability(predictions: &[u32], labels: &[u32]) -> Result<f64, EvalError> {
    let m = confusion(predictions, labels)?;
    ratio(m.tp, m.tp + m.fn_).ok_or(EvalError::NoPositiveRows)
}

pub fn model_detection_probability(model: &EnsembleModel, test: &Dataset) -> Result<f64, EvalError> {
    detection_probability(&model.predict_classes(test)?, test.labels())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseDistribution {
    #[default]
    Gaussian,
}

/// Additive corruption of numeric columns; `sigma` is a fraction of each
/// column's training standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub distribution: NoiseDistribution,
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn gaussian(sigma: f64, seed: u64) -> NoiseSpec {
        NoiseSpec {
            distribution: NoiseDistribution::Gaussian,
            sigma,
            seed,
        }
    }
}

/// Population standard deviation of every column (0 for bit columns).
pub fn column_stds(train: &Dataset) -> Vec<f64> {
    train
        .feature_kinds()
        .iter()
        .enumerate()
        .map(|(j, k)| match k {
            FeatureKind::Bit => 0.0,
            FeatureKind::Numeric => {
                let c = train.column(j);
                let n = c.len().max(1) as f64;
                let mean = c.iter().sum::<f64>() / n;
                (c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
            }
        })
        .collect()
}

/// Copy of `data` with `N(0, (sigma * train_std[j])^2)` added to each numeric
/// column `j`. Draws run column by column, row by row.
pub fn inject_noise(data: &Dataset, spec: &NoiseSpec, train_std: &[f64]) -> Result<Dataset, EvalError> {
    if !(spec.sigma >= 0.0 && spec.sigma.is_finite()) {
        return Err(EvalError::InvalidSigma(spec.sigma));
    }
    if train_std.len() != data.n_features() {
        return Err(EvalError::LengthMismatch {
            predictions: train_std.len(),
            labels: data.n_features(),
        });
    }
    let mut out = data.clone();
    if spec.sigma == 0.0 {
        return Ok(out);
    }
    let mut rng = seed::rng(spec.seed, seed::streams::NOISE);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let kinds = data.feature_kinds().to_vec();
    for (j, col) in out.columns_mut().iter_mut().enumerate() {
        if kinds[j] != FeatureKind::Numeric {
            continue;
        }
        let scale = spec.sigma * train_std[j];
        for v in col.iter_mut() {
            *v += scale * unit.sample(&mut rng);
        }
    }
    Ok(out)
}

/// Content hash of a dataset: names, kinds, values and labels.
pub fn dataset_fingerprint(data: &Dataset) -> String {
    let crc = crc::Crc::<u64>::new(&crc::CRC_64_XZ);
    let mut d = crc.digest();
    for (name, kind) in data.feature_names().iter().zip(data.feature_kinds()) {
        d.update(name.as_bytes());
        d.update(&[0, matches!(kind, FeatureKind::Bit) as u8]);
    }
    for col in data.columns() {
        for v in col {
            d.update(&v.to_bits().to_le_bytes());
        }
    }
    for y in data.labels() {
        d.update(&y.to_le_bytes());
    }
    format!("{:016x}", d.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIdentity {
    pub name: String,
    pub rows: usize,
    pub positives: usize,
    pub features: usize,
    pub fingerprint: String,
}

impl DatasetIdentity {
    pub fn of(name: &str, data: &Dataset) -> DatasetIdentity {
        DatasetIdentity {
            name: name.to_string(),
            rows: data.n_rows(),
            positives: data.positive_count(),
            features: data.n_features(),
            fingerprint: dataset_fingerprint(data),
        }
    }
}

/// Wall-clock measurements; machine-dependent, so kept apart from metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resources {
    pub train_seconds: f64,
    pub inference_seconds: f64,
    pub model_size_bytes: u64,
    pub repeats: usize,
    pub host: String,
}

pub const DETECTION_PROBABILITY_DEFINITION: &str = "test-set recall";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub model_id: Option<String>,
    pub dataset: DatasetIdentity,
    pub noise: Option<NoiseSpec>,
    pub confusion: ConfusionMatrix,
    pub metrics: Option<Metrics>,
    pub detection_probability: Option<f64>,
    pub detection_probability_definition: String,
    pub resources: Option<Resources>,
}

impl EvalReport {
    /// Scores `predictions` against `data`. An empty dataset gives
    /// undefined metrics rather than an error.
    pub fn from_predictions(
        model: &str,
        model_id: Option<String>,
        dataset_name: &str,
        data: &Dataset,
        predictions: &[u32],
    ) -> Result<EvalReport, EvalError> {
        let cm = confusion(predictions, data.labels())?;
        let metrics = match metrics(&cm) {
            Ok(m) => Some(m),
            Err(EvalError::EmptyMatrix) => None,
            Err(e) => return Err(e),
        };
        Ok(EvalReport {
            model: model.to_string(),
            model_id,
            dataset: DatasetIdentity::of(dataset_name, data),
            noise: None,
            confusion: cm,
            metrics,
            detection_probability: ratio(cm.tp, cm.tp + cm.fn_),
            detection_probability_definition: DETECTION_PROBABILITY_DEFINITION.into(),
            resources: None,
        })
    }

    pub fn evaluate(
        model: &EnsembleModel,
        model_id: Option<String>,
        dataset_name: &str,
        data: &Dataset,
    ) -> Result<EvalReport, EvalError> {
        let pred = model.predict_classes(data)?;
        EvalReport::from_predictions(model.kind().as_str(), model_id, dataset_name, data, &pred)
    }

    pub fn accuracy(&self) -> Option<f64> {
        self.metrics.and_then(|m| m.accuracy)
    }

    /// Pretty JSON with keys in sorted order.
    pub fn to_json(&self) -> String {
        canonical_json(self)
    }
}

/// Pretty JSON with object keys sorted at every level.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable report");
    let mut s = serde_json::to_string_pretty(&v).expect("serializable report");
    s.push('\n');
    s
}

fn show(v: Option<f64>) -> String {
    v.map(|x| format!("{:.4}", x)).unwrap_or_else(|| "undefined".into())
}

/// Aligned table with one column per report.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut rows: Vec<(String, Vec<String>)> = Vec::new();
    let m = |f: fn(&Metrics) -> Option<f64>| -> Vec<String> {
        reports.iter().map(|r| show(r.metrics.as_ref().and_then(f))).collect()
    };
    rows.push(("dataset".into(), reports.iter().map(|r| r.dataset.name.clone()).collect()));
    rows.push(("rows".into(), reports.iter().map(|r| r.dataset.rows.to_string()).collect()));
    rows.push((
        "noise sigma".into(),
        reports.iter().map(|r| r.noise.map(|n| n.sigma.to_string()).unwrap_or("-".into())).collect(),
    ));
    rows.push(("accuracy".into(), m(|x| x.accuracy)));
    rows.push((
        format!("detection probability ({DETECTION_PROBABILITY_DEFINITION})"),
        reports.iter().map(|r| show(r.detection_probability)).collect(),
    ));
    rows.push(("precision".into(), m(|x| x.precision)));
    rows.push(("recall".into(), m(|x| x.recall)));
    rows.push(("f1".into(), m(|x| x.f1)));
    rows.push(("specificity".into(), m(|x| x.specificity)));
    rows.push(("fnr".into(), m(|x| x.fnr)));
    rows.push(("fpr".into(), m(|x| x.fpr)));
    for (name, f) in [
        ("tp", (|c: &ConfusionMatrix| c.tp) as fn(&ConfusionMatrix) -> u64),
        ("fp", |c| c.fp),
        ("fn", |c| c.fn_),
        ("tn", |c| c.tn),
    ] {
        rows.push((name.into(), reports.iter().map(|r| f(&r.confusion).to_string()).collect()));
    }
    if reports.iter().any(|r| r.resources.is_some()) {
        let res = |f: fn(&Resources) -> String| -> Vec<String> {
            reports.iter().map(|r| r.resources.as_ref().map(f).unwrap_or("-".into())).collect()
        };
        rows.push(("train time (s)".into(), res(|r| format!("{:.3}", r.train_seconds))));
        rows.push(("inference time (s)".into(), res(|r| format!("{:.3}", r.inference_seconds))));
        rows.push((
            "model size (MB)".into(),
            res(|r| format!("{:.3}", r.model_size_bytes as f64 / 1e6)),
        ));
    }

    let header: Vec<String> = reports.iter().map(|r| r.model.clone()).collect();
    let label_w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max("metric".len());
    let widths: Vec<usize> = (0..reports.len())
        .map(|k| rows.iter().map(|r| r.1[k].len()).chain([header[k].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let mut line = |label: &str, cells: &[String]| {
        let mut l = format!("{label:<label_w$}");
        for (c, w) in cells.iter().zip(&widths) {
            let _ = write!(l, "  {c:>w$}");
        }
        out.push_str(l.trim_end());
        out.push('\n');
    };
    line("metric", &header);
    for (label, cells) in &rows {
        line(label, cells);
    }
    out
}
