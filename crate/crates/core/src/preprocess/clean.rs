use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::ingest::FlowRecord;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    pub input: usize,
    pub duplicates_removed: usize,
    pub inconsistent_dropped: usize,
    pub output: usize,
    /// Surviving rows whose optional field will be imputed with 0.
    pub missing_duration: usize,
    pub missing_orig_bytes: usize,
    pub missing_resp_bytes: usize,
}

fn inconsistent(r: &FlowRecord) -> bool {
    let f = &r.flow;
    f.orig_bytes.is_some_and(|b| b > f.orig_ip_bytes)
        || f.resp_bytes.is_some_and(|b| b > f.resp_ip_bytes)
}

/// Drops payload/IP-byte inconsistencies and exact duplicates (first
/// occurrence wins). Missing optional fields survive as-is; the encoder
/// imputes them as 0 with an indicator column.
pub fn clean(records: Vec<FlowRecord>) -> (Vec<FlowRecord>, CleanReport) {
    let mut report = CleanReport {
        input: records.len(),
        ..CleanReport::default()
    };
    let mut seen = HashSet::with_capacity(records.len());
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        if inconsistent(&r) {
            report.inconsistent_dropped += 1;
            continue;
        }
        if !seen.insert(r.dedup_key()) {
            report.duplicates_removed += 1;
            continue;
        }
        report.missing_duration += r.flow.duration.is_none() as usize;
        report.missing_orig_bytes += r.flow.orig_bytes.is_none() as usize;
        report.missing_resp_bytes += r.flow.resp_bytes.is_none() as usize;
        out.push(r);
    }
    report.output = out.len();
    (out, report)
}
