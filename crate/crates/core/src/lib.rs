//! Botnet detection for edge-assisted IoT networks.

pub mod artifact;
pub mod boosting;
pub mod eval;
pub mod forest;
pub mod ingest;
pub mod learner;
pub mod preprocess;
pub mod runtime;
pub mod seed;
pub mod select;
pub mod synth;
pub mod tree;
pub mod tuning;
