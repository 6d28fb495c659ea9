use serde::{Deserialize, Serialize};

use super::{
    apply_encoding, apply_scaler, clean, fit_encoding, fit_scaler, split_indices, CleanReport,
    DataSplit, Dataset, EncodingSpec, FeatureKind, PreprocessError, ScalerParams,
};
use crate::ingest::{FlowFeatures, FlowRecord};

/// Fitted encoding and scaling: everything needed to turn a raw flow into a
/// model-ready feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub encoding: EncodingSpec,
    pub scaler: ScalerParams,
}

impl Preprocessor {
    pub fn fit(train: &[FlowRecord]) -> Preprocessor {
        let encoding = fit_encoding(train);
        let scaler = fit_scaler(&apply_encoding(&encoding, train));
        Preprocessor { encoding, scaler }
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.encoding.feature_names()
    }

    pub fn feature_kinds(&self) -> Vec<FeatureKind> {
        self.encoding.feature_kinds()
    }

    pub fn transform(&self, records: &[FlowRecord]) -> Dataset {
        apply_scaler(&self.scaler, &apply_encoding(&self.encoding, records))
    }

    /// Encodes and scales one flow into `out` (full feature width).
    pub fn transform_flow(&self, flow: &FlowFeatures, out: &mut Vec<f64>) {
        self.encoding.encode_into(flow, out);
        self.scaler.apply_row(out);
    }
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub split: DataSplit,
    pub preprocessor: Preprocessor,
    pub clean_report: CleanReport,
}

/// Clean, split by label, then fit encoding and scaling on the training rows only.
pub fn prepare(records: Vec<FlowRecord>, seed: u64) -> Result<PreparedData, PreprocessError> {
    let (records, clean_report) = clean(records);
    let labels: Vec<u32> = records.iter().map(|r| r.label.index()).collect();
    let idx = split_indices(&labels, seed)?;
    let pick = |rows: &[usize]| -> Vec<FlowRecord> {
        rows.iter().map(|&i| records[i].clone()).collect()
    };
    let train_records = pick(&idx.train);
    let preprocessor = Preprocessor::fit(&train_records);
    let split = DataSplit {
        train: preprocessor.transform(&train_records),
        validation: preprocessor.transform(&pick(&idx.validation)),
        test: preprocessor.transform(&pick(&idx.test)),
        seed,
    };
    Ok(PreparedData {
        split,
        preprocessor,
        clean_report,
    })
}
