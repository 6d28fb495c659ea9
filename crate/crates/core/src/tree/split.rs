//! Best-split search. Candidates are scanned in (feature, threshold)
//! ascending order and only a strictly larger gain replaces the incumbent,
//! which yields the lower-feature, lower-threshold tie rule.

use super::{BinnedMatrix, Criterion, NodeHistogram};

/// Gains at or below this are treated as no improvement. Keeps rounding
/// noise on uninformative splits from producing nodes.
pub const MIN_SPLIT_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate<S> {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
    pub left: S,
    pub right: S,
}

/// Threshold strictly between `a < b`, preferring the midpoint. Falls back
/// to `a` when the two are adjacent floats and the midpoint rounds onto `b`.
#[inline]
pub(crate) fn midpoint(a: f64, b: f64) -> f64 {
    let m = a * 0.5 + b * 0.5;
    if m >= a && m < b {
        m
    } else {
        a
    }
}

struct Best<S> {
    cand: Option<SplitCandidate<S>>,
}

impl<S: Clone> Best<S> {
    fn new() -> Self {
        Best { cand: None }
    }

    #[inline]
    fn floor(&self) -> f64 {
        self.cand.as_ref().map_or(MIN_SPLIT_GAIN, |c| c.gain)
    }

    fn offer(&mut self, feature: usize, threshold: f64, gain: f64, left: &S, right: &S) {
        if gain > self.floor() {
            self.cand = Some(SplitCandidate {
                feature,
                threshold,
                gain,
                left: left.clone(),
                right: right.clone(),
            });
        }
    }
}

/// Scans the midpoints between consecutive distinct values of each
/// candidate feature over the node's rows. `features` must be ascending.
pub fn best_split_exhaustive<C: Criterion>(
    crit: &C,
    columns: &[Vec<f64>],
    rows: &[u32],
    features: &[usize],
    parent: &C::Stats,
) -> Option<SplitCandidate<C::Stats>> {
    let mut best = Best::new();
    let mut sorted: Vec<(f64, u32)> = Vec::with_capacity(rows.len());
    let mut left = crit.zero();
    let mut right = crit.zero();
    for &f in features {
        let col = &columns[f];
        sorted.clear();
        sorted.extend(rows.iter().map(|&r| (col[r as usize], r)));
        sorted.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        left.clone_from(&crit.zero());
        for i in 0..sorted.len().saturating_sub(1) {
            crit.add_row(&mut left, sorted[i].1 as usize);
            let (a, b) = (sorted[i].0, sorted[i + 1].0);
            if a == b {
                continue;
            }
            right.clone_from(parent);
            crit.subtract(&mut right, &left);
            if let Some(g) = crit.split_gain(parent, &left, &right) {
                best.offer(f, midpoint(a, b), g, &left, &right);
            }
        }
    }
    best.cand
}

/// Evaluates bin boundaries only. A boundary sits between a non-empty bin
/// and the next non-empty one; its threshold is the midpoint of the
/// training values bordering the gap, so value-exact bins reproduce the
/// exhaustive search.
pub fn best_split_histogram<C: Criterion>(
    crit: &C,
    hist: &NodeHistogram<C::Stats>,
    binned: &BinnedMatrix,
    features: &[usize],
    parent: &C::Stats,
) -> Option<SplitCandidate<C::Stats>> {
    let mut best = Best::new();
    let mut left = crit.zero();
    let mut right = crit.zero();
    for &f in features {
        let bins = hist.feature(f);
        let mapper = binned.mapper(f);
        left.clone_from(&crit.zero());
        let mut prev: Option<usize> = None;
        for (b, s) in bins.iter().enumerate() {
            if crit.count(s) == 0 {
                continue;
            }
            if let Some(p) = prev {
                right.clone_from(parent);
                crit.subtract(&mut right, &left);
                if let Some(g) = crit.split_gain(parent, &left, &right) {
                    let t = midpoint(mapper.upper(p), mapper.lower(b));
                    best.offer(f, t, g, &left, &right);
                }
            }
            crit.merge(&mut left, s);
            prev = Some(b);
        }
    }
    best.cand
}
