//! Streaming flow classification.
//!
//! One reader thread feeds a bounded queue; worker threads share the
//! immutable artifact; the calling thread writes records back in input
//! order using sequence numbers.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, SecondsFormat, Utc};
use crossbeam_channel::{bounded, Receiver};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{ArtifactError, ModelArtifact};
use crate::ingest::{ConnLogReader, Label, ParsedFlow};

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("output sink closed: {0}")]
    SinkClosed(std::io::Error),
    #[error("input read failed: {0}")]
    Input(std::io::Error),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    /// One record per data line.
    Full,
    /// Attack predictions and error records only.
    AlertsOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Clock {
    Wall,
    /// Every record carries this instant; for reproducible output.
    Fixed(DateTime<Utc>),
}

impl Clock {
    fn now(&self) -> String {
        let t = match self {
            Clock::Wall => Utc::now(),
            Clock::Fixed(t) => *t,
        };
        t.to_rfc3339_opts(SecondsFormat::Millis, true)
    }
}

#[derive(Debug, Clone)]
pub struct StreamConfig {
    pub mode: OutputMode,
    pub workers: usize,
    /// Lines in flight between reader and workers; the reader blocks when full.
    pub queue_capacity: usize,
    /// Keep polling at end of input instead of stopping.
    pub follow: bool,
    pub poll_interval: Duration,
    pub clock: Clock,
    /// Set to stop a follow-mode stream.
    pub stop: Arc<AtomicBool>,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            mode: OutputMode::Full,
            workers: 1,
            queue_capacity: 1024,
            follow: false,
            poll_interval: Duration::from_millis(200),
            clock: Clock::Wall,
            stop: Arc::new(AtomicBool::new(false)),
        }
    }
}

/// Key fields of the flow that produced a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowKey {
    pub ts: Option<f64>,
    pub uid: Option<String>,
    pub orig_h: Option<String>,
    pub resp_h: Option<String>,
    pub src_port: u16,
    pub dst_port: u16,
    pub proto: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertRecord {
    pub line: u64,
    pub timestamp: String,
    pub class: String,
    pub score: f64,
    pub model_id: String,
    pub flow: FlowKey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub line: u64,
    pub timestamp: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum StreamRecord {
    Alert(AlertRecord),
    Error(ErrorRecord),
}

impl StreamRecord {
    /// One JSON object, keys sorted, no trailing newline.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&serde_json::to_value(self).expect("plain data")).expect("plain data")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StreamStats {
    pub data_lines: u64,
    pub alerts: u64,
    pub attacks: u64,
    pub errors: u64,
    pub written: u64,
}

pub enum StreamInput {
    Reader(Box<dyn BufRead + Send>),
    Lines(Receiver<String>),
}

struct Work {
    seq: u64,
    line: u64,
    text: String,
    parser: Arc<ConnLogReader>,
}

fn classify_line(
    artifact: &ModelArtifact,
    model_id: &str,
    clock: &Clock,
    w: &Work,
    scratch: &mut crate::artifact::Scratch,
) -> StreamRecord {
    let error = |e: String| StreamRecord::Error(ErrorRecord { line: w.line, timestamp: clock.now(), error: e });
    let parsed: ParsedFlow = match w.parser.parse_data(w.text.trim_end_matches('\r'), w.line as usize) {
        Ok(p) => p,
        Err(e) => return error(e.to_string()),
    };
    match artifact.classify_flow(&parsed.flow, scratch) {
        Ok(p) => StreamRecord::Alert(AlertRecord {
            line: w.line,
            timestamp: clock.now(),
            class: Label::from_index(p.class).map(|l| l.to_string()).unwrap_or_else(|| p.class.to_string()),
            score: p.score,
            model_id: model_id.to_string(),
            flow: FlowKey {
                ts: parsed.meta.ts,
                uid: parsed.meta.uid,
                orig_h: parsed.meta.orig_h,
                resp_h: parsed.meta.resp_h,
                src_port: parsed.flow.src_port,
                dst_port: parsed.flow.dst_port,
                proto: parsed.flow.proto.as_str().to_string(),
            },
        }),
        Err(e) => error(e.to_string()),
    }
}

/// Reads lines until end of input (or until `stop` in follow mode) and
/// hands data lines to the queue. Returns early when the queue closes.
fn read_input(
    input: StreamInput,
    tx: crossbeam_channel::Sender<Work>,
    cfg: &StreamConfig,
) -> Result<(), std::io::Error> {
    let mut reader = ConnLogReader::new();
    let mut parser = Arc::new(reader.snapshot());
    let mut seq = 0u64;
    let mut dispatch = |text: String| -> bool {
        let was_header = text.starts_with('#');
        match reader.begin_line(&text) {
            Some(line) => {
                let w = Work { seq, line: line as u64, text, parser: parser.clone() };
                seq += 1;
                tx.send(w).is_ok()
            }
            None => {
                if was_header {
                    parser = Arc::new(reader.snapshot());
                }
                true
            }
        }
    };
    match input {
        StreamInput::Lines(rx) => {
            for line in rx {
                if cfg.stop.load(Ordering::Relaxed) || !dispatch(line) {
                    break;
                }
            }
        }
        StreamInput::Reader(mut r) => {
            let mut buf = String::new();
            loop {
                if cfg.stop.load(Ordering::Relaxed) {
                    break;
                }
                let n = r.read_line(&mut buf)?;
                if n > 0 && buf.ends_with('\n') {
                    buf.pop();
                    if !dispatch(std::mem::take(&mut buf)) {
                        break;
                    }
                    continue;
                }
                // end of input; a partial line waits for its newline in follow mode
                if cfg.follow {
                    std::thread::sleep(cfg.poll_interval);
                    continue;
                }
                if !buf.is_empty() {
                    dispatch(std::mem::take(&mut buf));
                }
                break;
            }
        }
    }
    Ok(())
}

/// Classifies every data line of `input` and writes one JSON line per
/// record to `sink`. Malformed lines become error records. Fails only when
/// the sink or the input itself fails.
pub fn classify_stream<W: Write>(
    artifact: &ModelArtifact,
    input: StreamInput,
    sink: &mut W,
    cfg: &StreamConfig,
) -> Result<StreamStats, StreamError> {
    let model_id = artifact.model_id();
    let workers = cfg.workers.max(1);
    let (work_tx, work_rx) = bounded::<Work>(cfg.queue_capacity.max(1));
    let (out_tx, out_rx) = bounded::<(u64, StreamRecord)>(cfg.queue_capacity.max(1));
    let mut stats = StreamStats::default();

    std::thread::scope(|s| {
        let reader = s.spawn(move || read_input(input, work_tx, cfg));
        for _ in 0..workers {
            let rx = work_rx.clone();
            let tx = out_tx.clone();
            let model_id = &model_id;
            s.spawn(move || {
                let mut scratch = artifact.scratch();
                for w in rx {
                    let rec = classify_line(artifact, model_id, &cfg.clock, &w, &mut scratch);
                    if tx.send((w.seq, rec)).is_err() {
                        break;
                    }
                }
            });
        }
        drop(work_rx);
        drop(out_tx);

        let mut pending: BTreeMap<u64, StreamRecord> = BTreeMap::new();
        let mut next = 0u64;
        let mut sink_error = None;
        'recv: for (seq, rec) in out_rx.iter() {
            pending.insert(seq, rec);
            while let Some(rec) = pending.remove(&next) {
                next += 1;
                stats.data_lines += 1;
                let emit = match &rec {
                    StreamRecord::Alert(a) => {
                        stats.alerts += 1;
                        let attack = a.class == Label::Attack.to_string();
                        stats.attacks += attack as u64;
                        cfg.mode == OutputMode::Full || attack
                    }
                    StreamRecord::Error(_) => {
                        stats.errors += 1;
                        true
                    }
                };
                if emit {
                    let r = writeln!(sink, "{}", rec.to_json_line()).and_then(|_| sink.flush());
                    if let Err(e) = r {
                        sink_error = Some(e);
                        cfg.stop.store(true, Ordering::Relaxed);
                        break 'recv;
                    }
                    stats.written += 1;
                }
            }
        }
        // dropping the receiver unblocks workers, which unblocks the reader
        drop(out_rx);
        let read = reader.join().expect("reader thread panicked");
        if let Some(e) = sink_error {
            return Err(StreamError::SinkClosed(e));
        }
        read.map_err(StreamError::Input)
    })?;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifact::{ArtifactMeta, Preprocessing};
    use crate::ingest::write_conn_log;
    use crate::learner::{FitOptions, HyperParams, ModelKind, Registry};
    use crate::preprocess::prepare;
    use crate::synth;
    use std::sync::OnceLock;

    fn artifact() -> &'static ModelArtifact {
        static A: OnceLock<ModelArtifact> = OnceLock::new();
        A.get_or_init(|| {
            let prepared = prepare(synth::flows(2000, 0.5, 1), 1).unwrap();
            let train = &prepared.split.train;
            let mut h = HyperParams::tuned(ModelKind::Xgb);
            h.n_estimators = Some(30);
            let model = Registry::builtin().get("xgb").unwrap().fit(train, &h, &FitOptions::default()).unwrap();
            ModelArtifact::new(
                ArtifactMeta {
                    kind: ModelKind::Xgb,
                    hyper: h,
                    seed: 1,
                    dataset_fingerprint: String::new(),
                    train_rows: train.n_rows(),
                    feature_names: train.feature_names().to_vec(),
                },
                Preprocessing {
                    selected: (0..train.n_features()).collect(),
                    preprocessor: Some(prepared.preprocessor),
                },
                model,
            )
        })
    }

    fn fixed() -> StreamConfig {
        StreamConfig {
            clock: Clock::Fixed(DateTime::from_timestamp(1_700_000_000, 0).unwrap()),
            ..StreamConfig::default()
        }
    }

    fn run(text: String, cfg: &StreamConfig) -> (StreamStats, Vec<StreamRecord>) {
        let mut out = Vec::new();
        let input = StreamInput::Reader(Box::new(std::io::Cursor::new(text.into_bytes())));
        let stats = classify_stream(artifact(), input, &mut out, cfg).unwrap();
        let recs = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        (stats, recs)
    }

    /// A conn.log with `n` flows where every `bad_every`-th data line is cut short.
    fn log_with_bad_lines(n: usize, bad_every: usize, seed: u64) -> (String, Vec<bool>) {
        let text = write_conn_log(&synth::flows(n, 0.5, seed));
        let mut out = String::new();
        let mut bad = Vec::new();
        let mut k = 0;
        for line in text.lines() {
            if line.starts_with('#') {
                out.push_str(line);
            } else {
                let broken = bad_every > 0 && k % bad_every == bad_every - 1;
                bad.push(broken);
                out.push_str(if broken { &line[..line.len() / 2] } else { line });
                k += 1;
            }
            out.push('\n');
        }
        (out, bad)
    }

    #[test]
    fn empty_stream_is_silent() {
        let (stats, recs) = run(String::new(), &fixed());
        assert!(recs.is_empty());
        assert_eq!(stats, StreamStats::default());
    }

    #[test]
    fn three_valid_one_malformed_in_order() {
        let (text, bad) = log_with_bad_lines(4, 0, 5);
        let mut lines: Vec<&str> = text.lines().collect();
        let first_data = lines.iter().position(|l| !l.starts_with('#')).unwrap();
        lines[first_data + 2] = "garbage\twith\tthree fields";
        let (stats, recs) = run(lines.join("\n"), &fixed());
        assert_eq!(bad.len(), 4);
        assert_eq!(recs.len(), 4);
        let kinds: Vec<bool> = recs.iter().map(|r| matches!(r, StreamRecord::Error(_))).collect();
        assert_eq!(kinds, vec![false, false, true, false]);
        let line_nos: Vec<u64> = recs
            .iter()
            .map(|r| match r {
                StreamRecord::Alert(a) => a.line,
                StreamRecord::Error(e) => e.line,
            })
            .collect();
        assert!(line_nos.windows(2).all(|w| w[0] + 1 == w[1]));
        assert_eq!(stats.errors, 1);
    }

    #[test]
    fn one_record_per_line_under_load_and_any_worker_count() {
        let (text, bad) = log_with_bad_lines(2000, 20, 9);
        let mut reference = None;
        for workers in [1, 4] {
            let cfg = StreamConfig { workers, queue_capacity: 8, ..fixed() };
            let (stats, recs) = run(text.clone(), &cfg);
            assert_eq!(recs.len(), bad.len());
            for (r, &b) in recs.iter().zip(&bad) {
                assert_eq!(matches!(r, StreamRecord::Error(_)), b);
            }
            assert_eq!(stats.errors as usize, bad.iter().filter(|&&b| b).count());
            match &reference {
                None => reference = Some(recs),
                Some(r) => assert_eq!(r, &recs),
            }
        }
    }

    #[test]
    fn alerts_only_keeps_attacks_and_errors() {
        let (text, _) = log_with_bad_lines(300, 50, 2);
        let (full_stats, full) = run(text.clone(), &fixed());
        let (stats, alerts) = run(text, &StreamConfig { mode: OutputMode::AlertsOnly, ..fixed() });
        let expected: Vec<&StreamRecord> = full
            .iter()
            .filter(|r| match r {
                StreamRecord::Alert(a) => a.class == "Attack",
                StreamRecord::Error(_) => true,
            })
            .collect();
        assert_eq!(alerts.iter().collect::<Vec<_>>(), expected);
        assert_eq!(stats.written, (full_stats.attacks + full_stats.errors));
    }

    #[test]
    fn records_match_direct_prediction() {
        let flows = synth::flows(50, 0.5, 33);
        let (_, recs) = run(write_conn_log(&flows), &fixed());
        let art = artifact();
        let mut s = art.scratch();
        for (r, f) in recs.iter().zip(&flows) {
            let StreamRecord::Alert(a) = r else { panic!("unexpected error record") };
            let p = art.classify_flow(&f.flow, &mut s).unwrap();
            assert_eq!(a.score.to_bits(), p.score.to_bits());
            assert_eq!(a.flow.src_port, f.flow.src_port);
            assert_eq!(a.timestamp, "2023-11-14T22:13:20.000Z");
            assert_eq!(a.model_id, art.model_id());
        }
    }

    #[test]
    fn json_line_schema() {
        let r = StreamRecord::Error(ErrorRecord { line: 3, timestamp: "t".into(), error: "bad".into() });
        assert_eq!(r.to_json_line(), r#"{"error":"bad","line":3,"timestamp":"t","type":"error"}"#);
    }

    #[test]
    fn data_before_header_is_an_error_record() {
        let (_, recs) = run("1\t2\t3\n".into(), &fixed());
        assert!(matches!(&recs[..], [StreamRecord::Error(e)] if e.error.contains("#fields")));
    }

    #[test]
    fn channel_input_and_sink_closure() {
        let (text, _) = log_with_bad_lines(20, 0, 4);
        let (tx, rx) = crossbeam_channel::unbounded();
        for l in text.lines() {
            tx.send(l.to_string()).unwrap();
        }
        drop(tx);
        let mut out = Vec::new();
        let stats = classify_stream(artifact(), StreamInput::Lines(rx), &mut out, &fixed()).unwrap();
        assert_eq!(stats.data_lines, 20);

        struct Closed;
        impl Write for Closed {
            fn write(&mut self, _: &[u8]) -> std::io::Result<usize> {
                Err(std::io::ErrorKind::BrokenPipe.into())
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        let input = StreamInput::Reader(Box::new(std::io::Cursor::new(text.into_bytes())));
        let cfg = StreamConfig { queue_capacity: 2, ..fixed() };
        assert!(matches!(
            classify_stream(artifact(), input, &mut Closed, &cfg),
            Err(StreamError::SinkClosed(_))
        ));
    }

    #[test]
    fn follow_mode_picks_up_appended_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("conn.log");
        let (text, _) = log_with_bad_lines(10, 0, 8);
        let (head, tail) = text.split_at(text.len() / 2);
        std::fs::write(&path, head).unwrap();
        let cfg = StreamConfig { follow: true, poll_interval: Duration::from_millis(10), ..fixed() };
        let stop = cfg.stop.clone();
        let writer = {
            let path = path.clone();
            let tail = tail.to_string();
            std::thread::spawn(move || {
                std::thread::sleep(Duration::from_millis(100));
                let mut f = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
                f.write_all(tail.as_bytes()).unwrap();
                drop(f);
                std::thread::sleep(Duration::from_millis(200));
                stop.store(true, Ordering::Relaxed);
            })
        };
        let file = std::io::BufReader::new(std::fs::File::open(&path).unwrap());
        let mut out = Vec::new();
        let stats = classify_stream(artifact(), StreamInput::Reader(Box::new(file)), &mut out, &cfg).unwrap();
        writer.join().unwrap();
        assert_eq!(stats.data_lines, 10);
        assert_eq!(stats.errors, 0);
    }
}
