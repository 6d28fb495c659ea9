//! Flow ingestion: Zeek connection logs, CSV exports and balanced subsetting.

mod balance;
mod csv;
mod zeek;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::balance::{balance_subset, balance_targets};
pub use self::csv::{parse_csv, RawTable};
pub(crate) use self::csv::escape_cell;
pub use self::zeek::{
    parse_conn_log, records_from_table, write_conn_log, ConnLogReader, LineItem, ParsedFlow,
    CONN_LOG_FIELDS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("data line {line} appears before any #fields directive")]
    MissingHeader { line: usize },
    #[error("line {line}: expected {expected} fields, found {found}")]
    FieldCountMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: cannot parse column `{column}` value `{value}`")]
    UnparsableValue {
        line: usize,
        column: String,
        value: String,
    },
    #[error("line {line}: unbalanced quote")]
    UnbalancedQuote { line: usize },
    #[error("required column `{0}` is not present")]
    MissingColumn(String),
    #[error("line {line}: record carries no label")]
    MissingLabel { line: usize },
    #[error("not enough {class} records: need {needed}, have {available} (short by {shortfall})")]
    InsufficientClassSamples {
        class: Label,
        needed: usize,
        available: usize,
        shortfall: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("read error: {0}")]
    Io(String),
}

impl From<std::io::Error> for IngestError {
    fn from(e: std::io::Error) -> Self {
        IngestError::Io(e.to_string())
    }
}

/// Binary traffic class. `Attack` is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Benign,
    Attack,
}

impl Label {
    pub fn index(self) -> u32 {
        match self {
            Label::Benign => 0,
            Label::Attack => 1,
        }
    }

    pub fn from_index(i: u32) -> Option<Label> {
        match i {
            0 => Some(Label::Benign),
            1 => Some(Label::Attack),
            _ => None,
        }
    }

    /// Maps a raw label cell. `None` for unknown or placeholder values.
    pub fn parse(s: &str) -> Option<Label> {
        match s.trim().to_ascii_lowercase().as_str() {
            "benign" | "0" | "normal" => Some(Label::Benign),
            "malicious" | "attack" | "1" => Some(Label::Attack),
            _ => None,
        }
    }

    /// Fallback used when the binary label column is absent: any detailed label
    /// other than empty/benign is an attack.
    pub fn from_detailed(s: &str) -> Label {
        let t = s.trim();
        if t.is_empty() || t == "-" || t.eq_ignore_ascii_case("benign") {
            Label::Benign
        } else {
            Label::Attack
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Benign => f.write_str("Benign"),
            Label::Attack => f.write_str("Attack"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Proto {
    Tcp,
    Udp,
    Icmp,
}

impl Proto {
    pub fn parse(s: &str) -> Option<Proto> {
        match s {
            "tcp" => Some(Proto::Tcp),
            "udp" => Some(Proto::Udp),
            "icmp" => Some(Proto::Icmp),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Proto::Tcp => "tcp",
            Proto::Udp => "udp",
            Proto::Icmp => "icmp",
        }
    }
}

/// The modeled features of one connection.
///
/// `service` uses `None` for Zeek's unset marker; `history` distinguishes
/// unset (`None`) from the explicit empty set (`Some("")`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowFeatures {
    pub src_port: u16,
    pub dst_port: u16,
    pub proto: Proto,
    pub service: Option<String>,
    pub duration: Option<f64>,
    pub orig_bytes: Option<u64>,
    pub resp_bytes: Option<u64>,
    pub conn_state: String,
    pub history: Option<String>,
    pub orig_pkts: u64,
    pub orig_ip_bytes: u64,
    pub resp_pkts: u64,
    pub resp_ip_bytes: u64,
}

/// Non-feature identifying columns, carried for alerting only.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowMeta {
    pub ts: Option<f64>,
    pub uid: Option<String>,
    pub orig_h: Option<String>,
    pub resp_h: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub meta: FlowMeta,
    pub flow: FlowFeatures,
    pub label: Label,
    pub detailed_label: String,
}

impl FlowRecord {
    /// Identity used for duplicate detection: the 13 features plus label.
    pub(crate) fn dedup_key(&self) -> impl std::hash::Hash + Eq {
        let f = &self.flow;
        (
            (f.src_port, f.dst_port, f.proto, f.service.clone()),
            (f.duration.map(f64::to_bits), f.orig_bytes, f.resp_bytes),
            (f.conn_state.clone(), f.history.clone()),
            (f.orig_pkts, f.orig_ip_bytes, f.resp_pkts, f.resp_ip_bytes),
            self.label,
        )
    }
}
