//! Synthetic IoT-like connection records.
//!
//! Benign and attack flows overlap on ports, protocols and packet counts; the
//! two classes are separated only by connection duration (attacks last under
//! one second or leave duration unset, benign flows last between one and
//! three seconds). The boundary is densely populated on both sides, so small
//! perturbations of numeric features flip a measurable share of predictions.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::{FlowFeatures, FlowMeta, FlowRecord, Label, Proto};
use crate::preprocess::{prepare, DataSplit, PreprocessError, Preprocessor};

const ATTACK_FAMILIES: [&str; 4] = ["PartOfAHorizontalPortScan", "C&C", "DDoS", "Okiru"];

/// `n` records with exactly `ceil(n * attack_ratio)` attacks, shuffled.
pub fn flows(n: usize, attack_ratio: f64, seed: u64) -> Vec<FlowRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_attack = crate::ingest::balance_targets(n, attack_ratio).0;
    let mut labels: Vec<Label> = (0..n)
        .map(|i| if i < n_attack { Label::Attack } else { Label::Benign })
        .collect();
    labels.shuffle(&mut rng);
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| flow(&mut rng, i, label))
        .collect()
}

fn flow(rng: &mut ChaCha8Rng, i: usize, label: Label) -> FlowRecord {
    let attack = label == Label::Attack;
    let r: f64 = rng.random();
    let proto = match (attack, r) {
        (false, r) if r < 0.6 => Proto::Tcp,
        (false, r) if r < 0.95 => Proto::Udp,
        (true, r) if r < 0.7 => Proto::Tcp,
        (true, r) if r < 0.95 => Proto::Udp,
        _ => Proto::Icmp,
    };
    let (dst_port, service): (u16, Option<&str>) = match (proto, attack) {
        (Proto::Tcp, false) => *[
            (80, Some("http")),
            (443, Some("ssl")),
            (22, Some("ssh")),
            (8080, None),
        ]
        .choose(rng)
        .unwrap(),
        (Proto::Tcp, true) => *[
            (23, None),
            (2323, None),
            (80, Some("http")),
            (8081, None),
            (37215, None),
            (443, None),
        ]
        .choose(rng)
        .unwrap(),
        (Proto::Udp, false) => *[(53, Some("dns")), (123, None), (5353, Some("dns"))]
            .choose(rng)
            .unwrap(),
        (Proto::Udp, true) => *[(53, Some("dns")), (123, None), (6881, None)]
            .choose(rng)
            .unwrap(),
        (Proto::Icmp, _) => (0, None),
    };
    let src_port: u16 = if proto == Proto::Icmp {
        8
    } else {
        rng.random_range(1024..=65535)
    };

    let duration = if attack {
        if rng.random_bool(0.3) {
            None
        } else {
            Some(round6(rng.random_range(0.0..1.0)))
        }
    } else {
        Some(round6(rng.random_range(1.000_001..3.0)))
    };

    let orig_pkts: u64 = if attack {
        rng.random_range(1..=6)
    } else {
        rng.random_range(2..=30)
    };
    let resp_pkts: u64 = if attack && rng.random_bool(0.6) {
        0
    } else {
        rng.random_range(1..=25)
    };
    let orig_payload: u64 = orig_pkts * rng.random_range(0..=300);
    let resp_payload: u64 = resp_pkts * rng.random_range(0..=600);
    let header = if proto == Proto::Tcp { 40 } else { 28 };
    let bytes_known = duration.is_some();

    let conn_state = if attack {
        *["S0", "S0", "SF", "REJ", "OTH", "RSTO"].choose(rng).unwrap()
    } else {
        *["SF", "SF", "SF", "S1", "RSTO", "OTH", "S0"].choose(rng).unwrap()
    };
    let history = match proto {
        Proto::Tcp if attack => *["S", "Sr", "ShAdDaf", "S"].choose(rng).unwrap(),
        Proto::Tcp => *["ShADadFf", "ShADadfF", "ShAdDaFf", "S"].choose(rng).unwrap(),
        Proto::Udp => *["D", "Dd", ""].choose(rng).unwrap(),
        Proto::Icmp => "",
    };

    let detailed_label = if attack {
        ATTACK_FAMILIES.choose(rng).unwrap().to_string()
    } else {
        String::new()
    };

    FlowRecord {
        meta: FlowMeta {
            ts: Some(1_545_403_816.0 + i as f64 * 0.25),
            uid: Some(format!("C{:016x}", rng.random::<u64>())),
            orig_h: Some(format!("192.168.1.{}", rng.random_range(2..=254))),
            resp_h: Some(format!(
                "{}.{}.{}.{}",
                rng.random_range(1..=223),
                rng.random_range(0..=255),
                rng.random_range(0..=255),
                rng.random_range(1..=254)
            )),
        },
        flow: FlowFeatures {
            src_port,
            dst_port,
            proto,
            service: service.map(str::to_string),
            duration,
            orig_bytes: bytes_known.then_some(orig_payload),
            resp_bytes: bytes_known.then_some(resp_payload),
            conn_state: conn_state.to_string(),
            history: Some(history.to_string()),
            orig_pkts,
            orig_ip_bytes: orig_payload + orig_pkts * header,
            resp_pkts,
            resp_ip_bytes: resp_payload + resp_pkts * header,
        },
        label,
        detailed_label,
    }
}

/// Columns of the benchmark dataset: every numeric feature, the duration
/// indicator, and the protocol and service bits.
pub const BENCHMARK_FEATURES: [&str; 15] = [
    "src_port",
    "dst_port",
    "duration",
    "orig_bytes",
    "resp_bytes",
    "orig_pkts",
    "orig_ip_bytes",
    "resp_pkts",
    "resp_ip_bytes",
    "duration_missing",
    "proto_bit1",
    "proto_bit0",
    "service_bit2",
    "service_bit1",
    "service_bit0",
];

/// A balanced, split, preprocessed synthetic dataset restricted to
/// [`BENCHMARK_FEATURES`].
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub split: DataSplit,
    pub preprocessor: Preprocessor,
    /// Positions of the benchmark columns in the preprocessor output.
    pub selected: Vec<usize>,
}

pub fn benchmark(n: usize, seed: u64) -> Result<Benchmark, PreprocessError> {
    let prepared = prepare(flows(n, 0.5, seed), seed)?;
    let all = prepared.preprocessor.feature_names();
    let selected = BENCHMARK_FEATURES
        .iter()
        .map(|f| {
            all.iter()
                .position(|n| n == f)
                .ok_or_else(|| PreprocessError::UnknownFeature(f.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let s = prepared.split;
    Ok(Benchmark {
        split: DataSplit {
            train: s.train.project(&selected)?,
            validation: s.validation.project(&selected)?,
            test: s.test.project(&selected)?,
            seed: s.seed,
        },
        preprocessor: prepared.preprocessor,
        selected,
    })
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}
