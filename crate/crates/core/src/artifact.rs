//! Single-file model artifact.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "EBOT"  u32 version
//! repeated: u8 tag, u32 length, payload      (tag 0 with length 0 ends the list)
//! u64 CRC-64/XZ of every preceding byte
//! ```
//!
//! Sections: 1 metadata (JSON), 2 preprocessing (JSON), 3 trees (binary).

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boosting::{GbdtModel, GbdtParams, FeatureBundle};
use crate::forest::{ForestModel, ForestParams};
use crate::ingest::FlowFeatures;
use crate::learner::{EnsembleModel, HyperParams, LearnError, ModelKind, Prediction};
use crate::preprocess::Preprocessor;
use crate::tree::{DecisionTree, LeafValue, Node};

pub const MAGIC: &[u8; 4] = b"EBOT";
pub const VERSION: u32 = 1;

const TAG_END: u8 = 0;
const TAG_META: u8 = 1;
const TAG_PREPROCESSING: u8 = 2;
const TAG_TREES: u8 = 3;

const CRC: crc::Crc<u64> = crc::Crc::<u64>::new(&crc::CRC_64_XZ);

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("not a model artifact (bad magic)")]
    BadMagic,
    #[error("unsupported artifact version {0} (this build reads version {VERSION})")]
    UnsupportedVersion(u32),
    #[error("artifact is truncated")]
    TruncatedArtifact,
    #[error("checksum mismatch: stored {stored:016x}, computed {computed:016x}")]
    ChecksumMismatch { stored: u64, computed: u64 },
    #[error("artifact lacks the {0} section")]
    MissingSection(&'static str),
    #[error("malformed artifact: {0}")]
    Malformed(String),
    #[error("artifact carries no preprocessing parameters")]
    NoPreprocessing,
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parameters of the model itself, by family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelParams {
    Forest {
        params: ForestParams,
        n_classes: usize,
        features_per_split: usize,
        tree_seeds: Vec<u64>,
    },
    Gbdt {
        params: GbdtParams,
        base_score: f64,
        bundles: Option<FeatureBundle>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub kind: ModelKind,
    pub hyper: HyperParams,
    pub seed: u64,
    pub dataset_fingerprint: String,
    pub train_rows: usize,
    /// Names of the model's input columns, in order.
    pub feature_names: Vec<String>,
}

/// How a raw flow becomes a model input row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub preprocessor: Option<Preprocessor>,
    /// Positions of the model inputs within the preprocessor output.
    pub selected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub meta: ArtifactMeta,
    pub preprocessing: Preprocessing,
    pub model: EnsembleModel,
}

#[derive(Serialize, Deserialize)]
struct MetaSection {
    meta: ArtifactMeta,
    model: ModelParams,
    n_features: usize,
}

fn model_params(model: &EnsembleModel) -> ModelParams {
    match model {
        EnsembleModel::Forest(m) => ModelParams::Forest {
            params: *m.params(),
            n_classes: m.n_classes(),
            features_per_split: m.features_per_split(),
            tree_seeds: m.tree_seeds().to_vec(),
        },
        EnsembleModel::Gbdt(m) => ModelParams::Gbdt {
            params: *m.params(),
            base_score: m.base_score(),
            bundles: m.bundles().cloned(),
        },
    }
}

fn push_section(out: &mut Vec<u8>, tag: u8, payload: &[u8]) {
    out.push(tag);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let v = serde_json::to_value(v).expect("serializable section");
    serde_json::to_vec(&v).expect("serializable section")
}

fn encode_trees(trees: &[DecisionTree]) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(&(trees.len() as u32).to_le_bytes());
    for t in trees {
        b.extend_from_slice(&(t.nodes().len() as u32).to_le_bytes());
        for n in t.nodes() {
            match n {
                Node::Split { feature, threshold, left, right, gain, cover, samples } => {
                    b.push(0);
                    b.extend_from_slice(&feature.to_le_bytes());
                    b.extend_from_slice(&threshold.to_le_bytes());
                    b.extend_from_slice(&left.to_le_bytes());
                    b.extend_from_slice(&right.to_le_bytes());
                    b.extend_from_slice(&gain.to_le_bytes());
                    b.extend_from_slice(&cover.to_le_bytes());
                    b.extend_from_slice(&samples.to_le_bytes());
                }
                Node::Leaf { value, cover, samples } => {
                    match value {
                        LeafValue::Counts(c) => {
                            b.push(1);
                            b.extend_from_slice(&(c.len() as u16).to_le_bytes());
                            for v in c {
                                b.extend_from_slice(&v.to_le_bytes());
                            }
                        }
                        LeafValue::Weight(w) => {
                            b.push(2);
                            b.extend_from_slice(&w.to_le_bytes());
                        }
                    }
                    b.extend_from_slice(&cover.to_le_bytes());
                    b.extend_from_slice(&samples.to_le_bytes());
                }
            }
        }
    }
    b
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ArtifactError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or(ArtifactError::TruncatedArtifact)?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ArtifactError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ArtifactError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ArtifactError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ArtifactError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn decode_trees(payload: &[u8]) -> Result<Vec<DecisionTree>, ArtifactError> {
    let mut c = Cursor { buf: payload, pos: 0 };
    let n_trees = c.u32()? as usize;
    let mut trees = Vec::with_capacity(n_trees.min(payload.len()));
    for _ in 0..n_trees {
        let n_nodes = c.u32()? as usize;
        let mut nodes = Vec::with_capacity(n_nodes.min(payload.len()));
        for _ in 0..n_nodes {
            let node = match c.u8()? {
                0 => Node::Split {
                    feature: c.u32()?,
                    threshold: c.f64()?,
                    left: c.u32()?,
                    right: c.u32()?,
                    gain: c.f64()?,
                    cover: c.f64()?,
                    samples: c.u32()?,
                },
                tag @ (1 | 2) => {
                    let value = if tag == 1 {
                        let k = c.u16()? as usize;
                        LeafValue::Counts((0..k).map(|_| c.u32()).collect::<Result<_, _>>()?)
                    } else {
                        LeafValue::Weight(c.f64()?)
                    };
                    Node::Leaf { value, cover: c.f64()?, samples: c.u32()? }
                }
                t => return Err(ArtifactError::Malformed(format!("node tag {t}"))),
            };
            nodes.push(node);
        }
        trees.push(
            DecisionTree::from_nodes(nodes).map_err(|e| ArtifactError::Malformed(e.to_string()))?,
        );
    }
    if c.pos != payload.len() {
        return Err(ArtifactError::Malformed("trailing bytes in tree section".into()));
    }
    Ok(trees)
}

impl ModelArtifact {
    pub fn new(meta: ArtifactMeta, preprocessing: Preprocessing, model: EnsembleModel) -> ModelArtifact {
        ModelArtifact { meta, preprocessing, model }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = MetaSection {
            meta: self.meta.clone(),
            model: model_params(&self.model),
            n_features: self.model.n_features(),
        };
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        push_section(&mut out, TAG_META, &json_bytes(&meta));
        push_section(&mut out, TAG_PREPROCESSING, &json_bytes(&self.preprocessing));
        push_section(&mut out, TAG_TREES, &encode_trees(self.model.trees()));
        push_section(&mut out, TAG_END, &[]);
        let sum = CRC.checksum(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    /// Framing is walked first so a cut-off file reports truncation; the
    /// checksum is then verified before any section is decoded.
    pub fn from_bytes(bytes: &[u8]) -> Result<ModelArtifact, ArtifactError> {
        if bytes.len() < 4 {
            return Err(ArtifactError::TruncatedArtifact);
        }
        if &bytes[..4] != MAGIC {
            return Err(ArtifactError::BadMagic);
        }
        let mut c = Cursor { buf: bytes, pos: 4 };
        let version = c.u32()?;
        if version != VERSION {
            return Err(ArtifactError::UnsupportedVersion(version));
        }
        let mut sections: Vec<(u8, &[u8])> = Vec::new();
        loop {
            let tag = c.u8()?;
            let len = c.u32()? as usize;
            let payload = c.take(len)?;
            if tag == TAG_END {
                break;
            }
            sections.push((tag, payload));
        }
        let body_end = c.pos;
        let stored = u64::from_le_bytes(c.take(8)?.try_into().unwrap());
        let computed = CRC.checksum(&bytes[..body_end]);
        if stored != computed {
            return Err(ArtifactError::ChecksumMismatch { stored, computed });
        }
        if c.pos != bytes.len() {
            return Err(ArtifactError::Malformed("bytes after checksum".into()));
        }
        let find = |tag: u8, name: &'static str| {
            sections
                .iter()
                .find(|s| s.0 == tag)
                .map(|s| s.1)
                .ok_or(ArtifactError::MissingSection(name))
        };
        let json_err = |e: serde_json::Error| ArtifactError::Malformed(e.to_string());
        let meta: MetaSection = serde_json::from_slice(find(TAG_META, "metadata")?).map_err(json_err)?;
        let preprocessing: Preprocessing =
            serde_json::from_slice(find(TAG_PREPROCESSING, "preprocessing")?).map_err(json_err)?;
        let trees = decode_trees(find(TAG_TREES, "trees")?)?;
        let model = match meta.model {
            ModelParams::Forest { params, n_classes, features_per_split, tree_seeds } => {
                EnsembleModel::Forest(
                    ForestModel::from_trees(trees, tree_seeds, n_classes, meta.n_features, features_per_split, params)
                        .map_err(|e| ArtifactError::Malformed(e.to_string()))?,
                )
            }
            ModelParams::Gbdt { params, base_score, bundles } => EnsembleModel::Gbdt(
                GbdtModel::from_parts(params, trees, base_score, meta.n_features, bundles)
                    .map_err(|e| ArtifactError::Malformed(e.to_string()))?,
            ),
        };
        if model.kind() != meta.meta.kind {
            return Err(ArtifactError::Malformed("model kind disagrees with metadata".into()));
        }
        Ok(ModelArtifact { meta: meta.meta, preprocessing, model })
    }

    pub fn write_file(&self, path: &Path) -> Result<u64, ArtifactError> {
        let bytes = self.to_bytes();
        std::fs::write(path, &bytes)?;
        Ok(bytes.len() as u64)
    }

    pub fn read_file(path: &Path) -> Result<ModelArtifact, ArtifactError> {
        ModelArtifact::from_bytes(&std::fs::read(path)?)
    }

    /// Checksum of the serialized artifact as 16 hex digits.
    pub fn model_id(&self) -> String {
        model_id_of(&self.to_bytes())
    }

    /// Scratch buffers for repeated single-flow inference.
    pub fn scratch(&self) -> Scratch {
        Scratch::default()
    }

    /// Encodes, scales and projects one flow, then predicts.
    pub fn classify_flow(&self, flow: &FlowFeatures, s: &mut Scratch) -> Result<Prediction, ArtifactError> {
        let pre = self.preprocessing.preprocessor.as_ref().ok_or(ArtifactError::NoPreprocessing)?;
        pre.transform_flow(flow, &mut s.full);
        s.input.clear();
        s.input.extend(self.preprocessing.selected.iter().map(|&j| s.full[j]));
        Ok(self.model.predict(&s.input)?)
    }

    /// Human-readable description of the container and every tree.
    pub fn dump_text(&self) -> String {
        let bytes = self.to_bytes();
        let mut out = String::new();
        let _ = writeln!(out, "format: EBOT v{VERSION}");
        let _ = writeln!(out, "size_bytes: {}", bytes.len());
        let _ = writeln!(out, "model_id: {}", model_id_of(&bytes));
        let _ = writeln!(out, "kind: {}", self.meta.kind);
        let _ = writeln!(out, "hyperparameters: {}", self.meta.hyper);
        let _ = writeln!(out, "seed: {}", self.meta.seed);
        let _ = writeln!(out, "dataset_fingerprint: {}", self.meta.dataset_fingerprint);
        let _ = writeln!(out, "train_rows: {}", self.meta.train_rows);
        let _ = writeln!(out, "features: {}", self.meta.feature_names.join(","));
        let _ = writeln!(
            out,
            "preprocessing: {}",
            if self.preprocessing.preprocessor.is_some() { "embedded" } else { "none" }
        );
        let _ = writeln!(out, "trees: {}", self.model.trees().len());
        for (k, t) in self.model.trees().iter().enumerate() {
            let _ = writeln!(out, "tree {k} depth={} leaves={}", t.depth(), t.n_leaves());
            for (i, n) in t.nodes().iter().enumerate() {
                match n {
                    Node::Split { feature, threshold, left, right, gain, .. } => {
                        let name = self.meta.feature_names.get(*feature as usize).map(String::as_str).unwrap_or("?");
                        let _ = writeln!(out, "  {i}: {name} <= {threshold} ? {left} : {right} gain={gain}");
                    }
                    Node::Leaf { value: LeafValue::Counts(c), .. } => {
                        let _ = writeln!(out, "  {i}: leaf counts={c:?}");
                    }
                    Node::Leaf { value: LeafValue::Weight(w), .. } => {
                        let _ = writeln!(out, "  {i}: leaf weight={w}");
                    }
                }
            }
        }
        out
    }
}

pub fn model_id_of(bytes: &[u8]) -> String {
    let tail = &bytes[bytes.len().saturating_sub(8)..];
    let mut b = [0u8; 8];
    b[..tail.len()].copy_from_slice(tail);
    format!("{:016x}", u64::from_le_bytes(b))
}

#[derive(Debug, Default)]
pub struct Scratch {
    full: Vec<f64>,
    input: Vec<f64>,
}
