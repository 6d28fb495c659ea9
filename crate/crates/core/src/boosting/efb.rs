//! Exclusive feature bundling over binned columns. A feature's "zero" is
//! its bin 0; features whose bin 0 holds the value 0 are bundling
//! candidates.

use serde::{Deserialize, Serialize};

use crate::preprocess::Dataset;
use crate::tree::{BinnedMatrix, BundleColumn, MAX_BINS};

/// Code space per bundle; keeps bundle histograms small.
pub const MAX_BUNDLE_CODES: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub members: Vec<usize>,
    /// First code of each member; member `m` bin `k >= 1` encodes as
    /// `offsets[m] + k - 1`.
    pub offsets: Vec<u32>,
    pub n_codes: usize,
    /// Rows where a later member's nonzero bin was overwritten.
    pub conflicts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBundle {
    pub bundles: Vec<Bundle>,
    pub conflict_budget: usize,
}

impl FeatureBundle {
    /// Bundles with at least two members; the rest stay plain columns.
    pub fn multi_member(&self) -> impl Iterator<Item = &Bundle> {
        self.bundles.iter().filter(|b| b.members.len() > 1)
    }

    pub fn encode(&self, binned: &BinnedMatrix) -> Vec<BundleColumn> {
        self.multi_member()
            .map(|b| BundleColumn {
                members: b.members.clone(),
                offsets: b.offsets.clone(),
                n_codes: b.n_codes,
                codes: encode_codes(b, binned),
            })
            .collect()
    }
}

fn encode_codes(b: &Bundle, binned: &BinnedMatrix) -> Vec<u16> {
    let mut codes = vec![0u16; binned.n_rows()];
    for (m, &f) in b.members.iter().enumerate() {
        for (code, &bin) in codes.iter_mut().zip(binned.bins(f)) {
            if bin != 0 && *code == 0 {
                *code = (b.offsets[m] + bin as u32 - 1) as u16;
            }
        }
    }
    codes
}

/// Per-member bin columns recovered from bundle codes.
pub fn decode(bundle: &Bundle, codes: &[u16]) -> Vec<Vec<u8>> {
    let mut out = vec![vec![0u8; codes.len()]; bundle.members.len()];
    for (i, &c) in codes.iter().enumerate() {
        if c == 0 {
            continue;
        }
        // last member whose first code is <= c
        let m = bundle.offsets.partition_point(|&o| o <= c as u32) - 1;
        out[m][i] = (c as u32 - bundle.offsets[m] + 1) as u8;
    }
    out
}

fn is_candidate(binned: &BinnedMatrix, f: usize) -> bool {
    let m = binned.mapper(f);
    m.n_bins() >= 2 && m.lower(0) == 0.0
}

/// Greedy bundling: candidates by descending nonzero count (index breaks
/// ties), each placed in the first bundle whose conflict count stays within
/// `budget`, else a new bundle.
pub fn efb_bundle_binned(binned: &BinnedMatrix, budget: usize) -> FeatureBundle {
    let n = binned.n_rows();
    let mut cands: Vec<(usize, usize)> = (0..binned.n_features())
        .filter(|&f| is_candidate(binned, f))
        .map(|f| (f, binned.bins(f).iter().filter(|&&b| b != 0).count()))
        .collect();
    cands.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    struct Open {
        bundle: Bundle,
        occupied: Vec<bool>,
    }
    let mut open: Vec<Open> = Vec::new();
    for (f, _) in cands {
        let bins = binned.bins(f);
        let width = binned.mapper(f).n_bins() - 1;
        let mut placed = false;
        for o in open.iter_mut() {
            if o.bundle.n_codes + width > MAX_BUNDLE_CODES {
                continue;
            }
            let clash = (0..n).filter(|&i| bins[i] != 0 && o.occupied[i]).count();
            if o.bundle.conflicts + clash <= budget {
                o.bundle.members.push(f);
                o.bundle.offsets.push(o.bundle.n_codes as u32);
                o.bundle.n_codes += width;
                o.bundle.conflicts += clash;
                for i in 0..n {
                    o.occupied[i] |= bins[i] != 0;
                }
                placed = true;
                break;
            }
        }
        if !placed {
            open.push(Open {
                bundle: Bundle {
                    members: vec![f],
                    offsets: vec![1],
                    n_codes: 1 + width,
                    conflicts: 0,
                },
                occupied: bins.iter().map(|&b| b != 0).collect(),
            });
        }
    }
    FeatureBundle {
        bundles: open.into_iter().map(|o| o.bundle).collect(),
        conflict_budget: budget,
    }
}

pub fn efb_bundle(data: &Dataset, budget: usize) -> FeatureBundle {
    efb_bundle_binned(&BinnedMatrix::from_columns(data.columns(), MAX_BINS), budget)
}
