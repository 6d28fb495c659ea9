//! Positional binary encoding of categorical flow fields.
//!
//! Each categorical field gets a vocabulary in first-seen training order.
//! Category `k` (0-based) has code `k + 1`; code 0 is reserved for unseen or
//! missing values. Codes are written as `ceil(log2(|vocab| + 1))` bit columns,
//! most significant bit first.

use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureKind};
use crate::ingest::{FlowFeatures, FlowRecord};

pub(crate) const NUMERIC_FEATURES: [&str; 9] = [
    "src_port",
    "dst_port",
    "duration",
    "orig_bytes",
    "resp_bytes",
    "orig_pkts",
    "orig_ip_bytes",
    "resp_pkts",
    "resp_ip_bytes",
];

pub(crate) const MISSING_INDICATORS: [&str; 3] =
    ["duration_missing", "orig_bytes_missing", "resp_bytes_missing"];

pub(crate) const CATEGORICAL_FEATURES: [&str; 4] = ["proto", "service", "conn_state", "history"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryVocab {
    pub feature: String,
    pub categories: Vec<String>,
    pub bits: u32,
}

impl CategoryVocab {
    fn new(feature: &str) -> Self {
        CategoryVocab {
            feature: feature.to_string(),
            categories: Vec::new(),
            bits: 1,
        }
    }

    fn observe(&mut self, value: Option<&str>) {
        if let Some(v) = value {
            if !self.categories.iter().any(|c| c == v) {
                self.categories.push(v.to_string());
            }
        }
    }

    fn finish(&mut self) {
        self.bits = bit_width(self.categories.len());
    }

    pub fn code(&self, value: Option<&str>) -> u32 {
        value
            .and_then(|v| self.categories.iter().position(|c| c == v))
            .map_or(0, |i| i as u32 + 1)
    }

    /// Bit columns for `value`, most significant first.
    pub fn bits_of(&self, value: Option<&str>) -> impl Iterator<Item = f64> + '_ {
        let code = self.code(value);
        (0..self.bits).rev().map(move |k| ((code >> k) & 1) as f64)
    }

    pub fn column_names(&self) -> impl Iterator<Item = String> + '_ {
        (0..self.bits)
            .rev()
            .map(move |k| format!("{}_bit{k}", self.feature))
    }
}

/// `ceil(log2(n + 1))`, at least 1.
fn bit_width(n_categories: usize) -> u32 {
    let codes = n_categories as u64 + 1;
    let w = u64::BITS - (codes - 1).leading_zeros();
    w.max(1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingSpec {
    pub vocabs: Vec<CategoryVocab>,
}

fn categorical_values(f: &FlowFeatures) -> [Option<&str>; 4] {
    [
        Some(f.proto.as_str()),
        f.service.as_deref(),
        Some(f.conn_state.as_str()).filter(|s| !s.is_empty()),
        f.history.as_deref(),
    ]
}

/// Learns category vocabularies from training records only.
pub fn fit_encoding(train: &[FlowRecord]) -> EncodingSpec {
    let mut vocabs: Vec<CategoryVocab> =
        CATEGORICAL_FEATURES.iter().map(|f| CategoryVocab::new(f)).collect();
    for r in train {
        for (v, value) in vocabs.iter_mut().zip(categorical_values(&r.flow)) {
            v.observe(value);
        }
    }
    vocabs.iter_mut().for_each(CategoryVocab::finish);
    EncodingSpec { vocabs }
}

impl EncodingSpec {
    pub fn feature_names(&self) -> Vec<String> {
        let mut names: Vec<String> = NUMERIC_FEATURES
            .iter()
            .chain(MISSING_INDICATORS.iter())
            .map(|s| s.to_string())
            .collect();
        for v in &self.vocabs {
            names.extend(v.column_names());
        }
        names
    }

    pub fn feature_kinds(&self) -> Vec<FeatureKind> {
        let bits: usize = self.vocabs.iter().map(|v| v.bits as usize).sum();
        let mut kinds = vec![FeatureKind::Numeric; NUMERIC_FEATURES.len()];
        kinds.extend(std::iter::repeat_n(
            FeatureKind::Bit,
            MISSING_INDICATORS.len() + bits,
        ));
        kinds
    }

    pub fn width(&self) -> usize {
        NUMERIC_FEATURES.len()
            + MISSING_INDICATORS.len()
            + self.vocabs.iter().map(|v| v.bits as usize).sum::<usize>()
    }

    /// Writes the unscaled feature vector of one flow into `out`.
    pub fn encode_into(&self, f: &FlowFeatures, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&[
            f.src_port as f64,
            f.dst_port as f64,
            f.duration.unwrap_or(0.0),
            f.orig_bytes.unwrap_or(0) as f64,
            f.resp_bytes.unwrap_or(0) as f64,
            f.orig_pkts as f64,
            f.orig_ip_bytes as f64,
            f.resp_pkts as f64,
            f.resp_ip_bytes as f64,
            f.duration.is_none() as u8 as f64,
            f.orig_bytes.is_none() as u8 as f64,
            f.resp_bytes.is_none() as u8 as f64,
        ]);
        for (v, value) in self.vocabs.iter().zip(categorical_values(f)) {
            out.extend(v.bits_of(value));
        }
    }
}

/// Encodes records into an unscaled dataset.
pub fn apply_encoding(spec: &EncodingSpec, records: &[FlowRecord]) -> Dataset {
    let width = spec.width();
    let mut columns: Vec<Vec<f64>> = (0..width)
        .map(|_| Vec::with_capacity(records.len()))
        .collect();
    let mut buf = Vec::with_capacity(width);
    for r in records {
        spec.encode_into(&r.flow, &mut buf);
        for (c, v) in columns.iter_mut().zip(&buf) {
            c.push(*v);
        }
    }
    let labels = records.iter().map(|r| r.label.index()).collect();
    Dataset::new(spec.feature_names(), spec.feature_kinds(), columns, labels)
        .expect("encoder output is finite and well-shaped")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Label, Proto};
    use crate::synth;

    fn with_proto(p: Proto) -> FlowRecord {
        let mut r = synth::flows(1, 0.5, 5).remove(0);
        r.flow.proto = p;
        r
    }

    #[test]
    fn three_protocols_use_two_bits() {
        let recs = vec![with_proto(Proto::Tcp), with_proto(Proto::Udp), with_proto(Proto::Icmp)];
        let spec = fit_encoding(&recs);
        let proto = &spec.vocabs[0];
        assert_eq!(proto.categories, vec!["tcp", "udp", "icmp"]);
        assert_eq!(proto.bits, 2);
        assert_eq!(proto.code(Some("tcp")), 1);
        assert_eq!(proto.code(Some("udp")), 2);
        assert_eq!(proto.code(Some("icmp")), 3);
        assert_eq!(proto.bits_of(Some("tcp")).collect::<Vec<_>>(), vec![0.0, 1.0]);
        assert_eq!(proto.bits_of(Some("icmp")).collect::<Vec<_>>(), vec![1.0, 1.0]);
        assert_eq!(
            proto.column_names().collect::<Vec<_>>(),
            vec!["proto_bit1", "proto_bit0"]
        );
    }

    #[test]
    fn bit_width_enumeration() {
        // brute force: smallest w with 2^w >= n + 1, floor 1
        for n in 0..300usize {
            let mut w = 1;
            while (1usize << w) < n + 1 {
                w += 1;
            }
            assert_eq!(bit_width(n), w, "n={n}");
        }
    }

    #[test]
    fn unseen_category_is_all_zero() {
        let spec = fit_encoding(&[with_proto(Proto::Tcp)]);
        let mut r = with_proto(Proto::Tcp);
        r.flow.service = Some("never-seen".into());
        let ds = apply_encoding(&spec, &[r]);
        let service_cols: Vec<usize> = (0..ds.n_features())
            .filter(|&j| ds.feature_names()[j].starts_with("service_bit"))
            .collect();
        assert!(!service_cols.is_empty());
        assert!(service_cols.iter().all(|&j| ds.column(j)[0] == 0.0));
    }

    #[test]
    fn single_category_gets_one_bit() {
        let spec = fit_encoding(&[with_proto(Proto::Udp)]);
        assert_eq!(spec.vocabs[0].bits, 1);
        assert_eq!(spec.vocabs[0].bits_of(Some("udp")).collect::<Vec<_>>(), vec![1.0]);
    }

    #[test]
    fn missing_duration_imputed_with_indicator() {
        let mut r = synth::flows(1, 0.5, 5).remove(0);
        r.flow.duration = None;
        let spec = fit_encoding(std::slice::from_ref(&r));
        let ds = apply_encoding(&spec, &[r]);
        let d = ds.feature_index("duration").unwrap();
        let m = ds.feature_index("duration_missing").unwrap();
        assert_eq!(ds.column(d)[0], 0.0);
        assert_eq!(ds.column(m)[0], 1.0);
    }

    #[test]
    fn empty_history_is_its_own_category() {
        let mut a = synth::flows(1, 0.5, 5).remove(0);
        a.flow.history = Some(String::new());
        let mut b = a.clone();
        b.flow.history = None;
        let spec = fit_encoding(&[a.clone(), b.clone()]);
        let h = &spec.vocabs[3];
        assert_eq!(h.code(a.flow.history.as_deref()), 1);
        assert_eq!(h.code(b.flow.history.as_deref()), 0);
    }

    #[test]
    fn reencoding_training_set_is_stable() {
        let recs = synth::flows(300, 0.5, 6);
        let spec = fit_encoding(&recs);
        let a = apply_encoding(&spec, &recs);
        let b = apply_encoding(&fit_encoding(&recs), &recs);
        assert_eq!(a, b);
        assert_eq!(a.labels().iter().filter(|&&l| l == Label::Attack.index()).count(), 150);
        assert_eq!(a.n_features(), spec.width());
    }
}
