//! Zeek TSV connection logs.
//!
//! Column order always comes from the `#fields` directive. IoT-23 style logs
//! glue `tunnel_parents label detailed-label` into one tab-separated header
//! cell with whitespace between the names; such compound cells are split on
//! whitespace runs in both the header and every data line.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::BufRead;
use std::sync::Arc;

use super::{FlowFeatures, FlowMeta, FlowRecord, IngestError, Label, Proto, RawTable};

/// Field order used by [`write_conn_log`].
pub const CONN_LOG_FIELDS: [&str; 19] = [
    "ts",
    "uid",
    "id.orig_h",
    "id.orig_p",
    "id.resp_h",
    "id.resp_p",
    "proto",
    "service",
    "duration",
    "orig_bytes",
    "resp_bytes",
    "conn_state",
    "history",
    "orig_pkts",
    "orig_ip_bytes",
    "resp_pkts",
    "resp_ip_bytes",
    "label",
    "detailed-label",
];

const CONN_LOG_TYPES: [&str; 19] = [
    "time", "string", "addr", "port", "addr", "port", "enum", "string", "interval", "count",
    "count", "string", "string", "count", "count", "count", "count", "string", "string",
];

#[derive(Debug)]
struct Header {
    /// Number of separator-delimited cells per data line.
    raw_arity: usize,
    /// For each raw cell, how many logical columns it expands into.
    widths: Vec<usize>,
    index: HashMap<String, usize>,
}

impl Header {
    fn new(raw_names: &[&str]) -> Header {
        let mut widths = Vec::with_capacity(raw_names.len());
        let mut index = HashMap::new();
        let mut col = 0;
        for raw in raw_names {
            let parts: Vec<&str> = raw.split_whitespace().collect();
            let parts = if parts.is_empty() { vec![""] } else { parts };
            widths.push(parts.len());
            for p in parts {
                index.entry(p.to_string()).or_insert(col);
                col += 1;
            }
        }
        Header {
            raw_arity: raw_names.len(),
            widths,
            index,
        }
    }

    fn col(&self, names: &[&str]) -> Option<usize> {
        names.iter().find_map(|n| self.index.get(*n).copied())
    }
}

#[derive(Debug, Clone)]
struct Sentinels {
    unset: String,
    empty: String,
}

impl Default for Sentinels {
    fn default() -> Self {
        Sentinels {
            unset: "-".to_string(),
            empty: "(empty)".to_string(),
        }
    }
}

/// One classified line of a conn.log stream.
#[derive(Debug, Clone, PartialEq)]
pub enum LineItem {
    Directive,
    Blank,
    Flow(ParsedFlow),
}

/// A data line whose label may be absent (unlabeled live logs).
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedFlow {
    pub line: usize,
    pub meta: FlowMeta,
    pub flow: FlowFeatures,
    pub label: Option<Label>,
    pub detailed_label: Option<String>,
}

/// Incremental, header-aware conn.log line parser.
///
/// Cloning is cheap; the header is shared.
#[derive(Debug, Clone)]
pub struct ConnLogReader {
    separator: String,
    sentinels: Sentinels,
    header: Option<Arc<Header>>,
    line: usize,
}

impl Default for ConnLogReader {
    fn default() -> Self {
        ConnLogReader {
            separator: "\t".to_string(),
            sentinels: Sentinels::default(),
            header: None,
            line: 0,
        }
    }
}

impl ConnLogReader {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of lines consumed so far.
    pub fn line_number(&self) -> usize {
        self.line
    }

    pub fn has_header(&self) -> bool {
        self.header.is_some()
    }

    /// Consumes the next line (without its terminator).
    pub fn next_line(&mut self, text: &str) -> Result<LineItem, IngestError> {
        self.line += 1;
        let text = text.strip_suffix('\r').unwrap_or(text);
        if text.starts_with('#') {
            self.directive(text);
            return Ok(LineItem::Directive);
        }
        if text.trim().is_empty() {
            return Ok(LineItem::Blank);
        }
        self.parse_data(text, self.line).map(LineItem::Flow)
    }

    /// Advances past one line, applying directives, without parsing data.
    /// Returns the line number when the line holds data.
    pub fn begin_line(&mut self, text: &str) -> Option<usize> {
        self.line += 1;
        let text = text.strip_suffix('\r').unwrap_or(text);
        if text.starts_with('#') {
            self.directive(text);
            return None;
        }
        (!text.trim().is_empty()).then_some(self.line)
    }

    /// Splits off a detached parser for a data line, so callers can hand the
    /// (header, line) pair to another thread.
    pub fn snapshot(&self) -> ConnLogReader {
        self.clone()
    }

    /// Parses a data line against the current header without advancing state.
    pub fn parse_data(&self, text: &str, line: usize) -> Result<ParsedFlow, IngestError> {
        let header = self
            .header
            .as_ref()
            .ok_or(IngestError::MissingHeader { line })?;
        let raw: Vec<&str> = text.split(self.separator.as_str()).collect();
        if raw.len() != header.raw_arity {
            return Err(IngestError::FieldCountMismatch {
                line,
                expected: header.raw_arity,
                found: raw.len(),
            });
        }
        let mut cells: Vec<&str> = Vec::with_capacity(header.index.len());
        for (i, (cell, &width)) in raw.iter().zip(&header.widths).enumerate() {
            if width == 1 {
                cells.push(cell);
                continue;
            }
            let parts = split_whitespace_n(cell, width);
            if parts.len() != width {
                let trailing: usize = raw.len() - i - 1;
                return Err(IngestError::FieldCountMismatch {
                    line,
                    expected: header.widths.iter().sum(),
                    found: cells.len() + parts.len() + trailing,
                });
            }
            cells.extend(parts);
        }
        let row = Row {
            header,
            cells: &cells,
            sentinels: &self.sentinels,
            line,
        };
        row.parse()
    }

    fn directive(&mut self, text: &str) {
        let sep = self.separator.chars().next().unwrap_or('\t');
        let (name, rest) = match text.find(|c: char| c == ' ' || c == '\t' || c == sep) {
            Some(i) => (&text[..i], &text[i + 1..]),
            None => (text, ""),
        };
        match name {
            "#separator" => self.separator = unescape(rest.trim()),
            "#unset_field" => self.sentinels.unset = rest.to_string(),
            "#empty_field" => self.sentinels.empty = rest.to_string(),
            "#fields" => {
                let names: Vec<&str> = rest.split(self.separator.as_str()).collect();
                self.header = Some(Arc::new(Header::new(&names)));
            }
            // #types, #path, #open, #close and comments carry nothing we need.
            _ => {}
        }
    }
}

fn split_whitespace_n(cell: &str, n: usize) -> Vec<&str> {
    let mut out = Vec::with_capacity(n);
    let mut rest = cell.trim();
    while out.len() + 1 < n {
        match rest.find(char::is_whitespace) {
            Some(i) => {
                out.push(&rest[..i]);
                rest = rest[i..].trim_start();
            }
            None => break,
        }
    }
    if !rest.is_empty() {
        out.push(rest);
    }
    out
}

/// Decodes `\xHH` escapes used by `#separator`.
fn unescape(s: &str) -> String {
    let mut out = String::new();
    let mut rest = s;
    while let Some(i) = rest.find("\\x") {
        out.push_str(&rest[..i]);
        let hex = rest.get(i + 2..i + 4);
        match hex.and_then(|h| u8::from_str_radix(h, 16).ok()) {
            Some(b) => {
                out.push(b as char);
                rest = &rest[i + 4..];
            }
            None => {
                out.push_str("\\x");
                rest = &rest[i + 2..];
            }
        }
    }
    out.push_str(rest);
    if out.is_empty() {
        "\t".to_string()
    } else {
        out
    }
}

struct Row<'a> {
    header: &'a Header,
    cells: &'a [&'a str],
    sentinels: &'a Sentinels,
    line: usize,
}

enum Cell<'a> {
    Unset,
    Empty,
    Value(&'a str),
}

impl<'a> Row<'a> {
    fn cell(&self, names: &[&str]) -> Option<Cell<'a>> {
        let i = self.header.col(names)?;
        let v = self.cells[i];
        Some(if v == self.sentinels.unset {
            Cell::Unset
        } else if v == self.sentinels.empty {
            Cell::Empty
        } else {
            Cell::Value(v)
        })
    }

    fn required(&self, name: &str) -> Result<Cell<'a>, IngestError> {
        self.cell(&[name])
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    }

    fn bad(&self, column: &str, value: &str) -> IngestError {
        IngestError::UnparsableValue {
            line: self.line,
            column: column.to_string(),
            value: value.to_string(),
        }
    }

    fn number<T: std::str::FromStr>(&self, name: &str) -> Result<Option<T>, IngestError> {
        match self.required(name)? {
            Cell::Unset => Ok(None),
            Cell::Empty => Err(self.bad(name, &self.sentinels.empty)),
            Cell::Value(v) => v.parse().map(Some).map_err(|_| self.bad(name, v)),
        }
    }

    fn count(&self, name: &str) -> Result<u64, IngestError> {
        self.number(name)?
            .ok_or_else(|| self.bad(name, &self.sentinels.unset))
    }

    fn port(&self, name: &str) -> Result<u16, IngestError> {
        self.number(name)?
            .ok_or_else(|| self.bad(name, &self.sentinels.unset))
    }

    fn text(&self, names: &[&str]) -> Option<String> {
        match self.cell(names)? {
            Cell::Unset => None,
            Cell::Empty => Some(String::new()),
            Cell::Value(v) => Some(v.to_string()),
        }
    }

    fn parse(&self) -> Result<ParsedFlow, IngestError> {
        let proto = match self.required("proto")? {
            Cell::Value(v) => Proto::parse(v).ok_or_else(|| self.bad("proto", v))?,
            _ => return Err(self.bad("proto", &self.sentinels.unset)),
        };
        let duration: Option<f64> = self.number("duration")?;
        if let Some(d) = duration {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(self.bad("duration", &d.to_string()));
            }
        }
        let conn_state = match self.required("conn_state")? {
            Cell::Value(v) => v.to_string(),
            _ => String::new(),
        };
        self.required("history")?;
        self.required("service")?;
        let flow = FlowFeatures {
            src_port: self.port("id.orig_p")?,
            dst_port: self.port("id.resp_p")?,
            proto,
            service: self.text(&["service"]),
            duration,
            orig_bytes: self.number("orig_bytes")?,
            resp_bytes: self.number("resp_bytes")?,
            conn_state,
            history: self.text(&["history"]),
            orig_pkts: self.count("orig_pkts")?,
            orig_ip_bytes: self.count("orig_ip_bytes")?,
            resp_pkts: self.count("resp_pkts")?,
            resp_ip_bytes: self.count("resp_ip_bytes")?,
        };
        let ts = match self.cell(&["ts"]) {
            Some(Cell::Value(v)) => Some(v.parse().map_err(|_| self.bad("ts", v))?),
            _ => None,
        };
        let meta = FlowMeta {
            ts,
            uid: self.text(&["uid"]),
            orig_h: self.text(&["id.orig_h"]),
            resp_h: self.text(&["id.resp_h"]),
        };
        let detailed_label = self.text(&["detailed-label", "detailed_label"]);
        let label = match self.cell(&["label"]) {
            Some(Cell::Value(v)) => Some(Label::parse(v).ok_or_else(|| self.bad("label", v))?),
            Some(_) => detailed_label.as_deref().map(Label::from_detailed),
            None => detailed_label.as_deref().map(Label::from_detailed),
        };
        Ok(ParsedFlow {
            line: self.line,
            meta,
            flow,
            label,
            detailed_label,
        })
    }
}

impl ParsedFlow {
    pub fn into_record(self) -> Result<FlowRecord, IngestError> {
        let label = self
            .label
            .ok_or(IngestError::MissingLabel { line: self.line })?;
        Ok(FlowRecord {
            meta: self.meta,
            flow: self.flow,
            label,
            detailed_label: self.detailed_label.unwrap_or_default(),
        })
    }
}

/// Parses a labeled Zeek conn.log into flow records.
pub fn parse_conn_log<R: BufRead>(input: R) -> Result<Vec<FlowRecord>, IngestError> {
    let mut reader = ConnLogReader::new();
    let mut out = Vec::new();
    for line in input.lines() {
        if let LineItem::Flow(p) = reader.next_line(&line?)? {
            out.push(p.into_record()?);
        }
    }
    Ok(out)
}

/// Interprets a CSV table whose header uses Zeek column names.
pub fn records_from_table(table: &RawTable) -> Result<Vec<FlowRecord>, IngestError> {
    let names: Vec<&str> = table.columns.iter().map(String::as_str).collect();
    let header = Header::new(&names);
    let sentinels = Sentinels::default();
    table
        .rows
        .iter()
        .zip(&table.row_lines)
        .map(|(row, &line)| {
            let cells: Vec<&str> = row.iter().map(String::as_str).collect();
            Row {
                header: &header,
                cells: &cells,
                sentinels: &sentinels,
                line,
            }
            .parse()?
            .into_record()
        })
        .collect()
}

/// Renders records as a labeled conn.log with [`CONN_LOG_FIELDS`] columns.
pub fn write_conn_log(records: &[FlowRecord]) -> String {
    let mut out = String::new();
    out.push_str("#separator \\x09\n#set_separator\t,\n#empty_field\t(empty)\n#unset_field\t-\n#path\tconn\n");
    out.push_str("#fields\t");
    out.push_str(&CONN_LOG_FIELDS.join("\t"));
    out.push_str("\n#types\t");
    out.push_str(&CONN_LOG_TYPES.join("\t"));
    out.push('\n');
    for r in records {
        write_record_line(&mut out, r);
        out.push('\n');
    }
    out
}

fn opt_text(s: &Option<String>) -> &str {
    match s {
        None => "-",
        Some(v) if v.is_empty() => "(empty)",
        Some(v) => v,
    }
}

fn opt_num<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

fn write_record_line(out: &mut String, r: &FlowRecord) {
    let f = &r.flow;
    let m = &r.meta;
    let detailed = if r.detailed_label.is_empty() {
        "-"
    } else {
        r.detailed_label.as_str()
    };
    let label = match r.label {
        Label::Benign => "Benign",
        Label::Attack => "Malicious",
    };
    let _ = write!(
        out,
        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
        opt_num(m.ts),
        opt_text(&m.uid),
        opt_text(&m.orig_h),
        f.src_port,
        opt_text(&m.resp_h),
        f.dst_port,
        f.proto.as_str(),
        opt_text(&f.service),
        opt_num(f.duration),
        opt_num(f.orig_bytes),
        opt_num(f.resp_bytes),
        if f.conn_state.is_empty() { "-" } else { &f.conn_state },
        opt_text(&f.history),
        f.orig_pkts,
        f.orig_ip_bytes,
        f.resp_pkts,
        f.resp_ip_bytes,
        label,
        detailed,
    );
}
