//! Feature discretization and per-node histograms for the boosting modes.

use super::Criterion;

/// Upper limit on bins per feature, so bin codes fit a byte.
pub const MAX_BINS: usize = 255;

/// Maps raw values of one feature to bins. Each bin remembers the smallest
/// and largest training value it holds; bins are ordered and disjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct BinMapper {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BinMapper {
    /// One bin per distinct value when there are at most `max_bins` of them,
    /// otherwise groups of roughly equal row counts (quantile edges).
    pub fn fit(values: &[f64], max_bins: usize) -> BinMapper {
        assert!((1..=MAX_BINS).contains(&max_bins), "max_bins out of range");
        let mut sorted = values.to_vec();
        sorted.sort_unstable_by(f64::total_cmp);
        let mut distinct: Vec<(f64, u64)> = Vec::new();
        for v in sorted {
            match distinct.last_mut() {
                Some((d, c)) if *d == v => *c += 1,
                _ => distinct.push((v, 1)),
            }
        }
        if distinct.is_empty() {
            return BinMapper {
                lower: vec![0.0],
                upper: vec![0.0],
            };
        }
        if distinct.len() <= max_bins {
            let v: Vec<f64> = distinct.iter().map(|d| d.0).collect();
            return BinMapper {
                lower: v.clone(),
                upper: v,
            };
        }
        let n = values.len() as u64;
        let b = max_bins as u64;
        let (mut lower, mut upper) = (Vec::new(), Vec::new());
        let mut cum = 0u64;
        let mut closed = 0u64;
        let mut open: Option<f64> = None;
        for (v, c) in distinct {
            open.get_or_insert(v);
            cum += c;
            if cum * b >= (closed + 1) * n {
                lower.push(open.take().unwrap());
                upper.push(v);
                closed = cum * b / n;
            }
        }
        debug_assert!(open.is_none() && lower.len() <= max_bins);
        BinMapper { lower, upper }
    }

    pub fn n_bins(&self) -> usize {
        self.upper.len()
    }

    pub fn lower(&self, bin: usize) -> f64 {
        self.lower[bin]
    }

    pub fn upper(&self, bin: usize) -> f64 {
        self.upper[bin]
    }

    /// Values between two bins fall into the upper one.
    #[inline]
    pub fn bin_of(&self, v: f64) -> usize {
        self.upper
            .partition_point(|&u| u < v)
            .min(self.upper.len() - 1)
    }
}

/// Several sparse features stored as one column of codes. Code 0 means
/// every member sits in its bin 0; member `m` in bin `k >= 1` is stored as
/// `offsets[m] + k - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleColumn {
    pub members: Vec<usize>,
    pub offsets: Vec<u32>,
    pub n_codes: usize,
    pub codes: Vec<u16>,
}

/// Column-major bin codes for a training matrix.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    mappers: Vec<BinMapper>,
    bins: Vec<Vec<u8>>,
    bundles: Vec<BundleColumn>,
    bundle_of: Vec<Option<usize>>,
    n_rows: usize,
}

impl BinnedMatrix {
    pub fn from_columns(columns: &[Vec<f64>], max_bins: usize) -> BinnedMatrix {
        let n_rows = columns.first().map_or(0, Vec::len);
        let mut mappers = Vec::with_capacity(columns.len());
        let mut bins = Vec::with_capacity(columns.len());
        for col in columns {
            let m = BinMapper::fit(col, max_bins);
            bins.push(col.iter().map(|&v| m.bin_of(v) as u8).collect());
            mappers.push(m);
        }
        BinnedMatrix {
            bundle_of: vec![None; columns.len()],
            mappers,
            bins,
            bundles: Vec::new(),
            n_rows,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.mappers.len()
    }

    pub fn mapper(&self, feature: usize) -> &BinMapper {
        &self.mappers[feature]
    }

    pub fn mappers(&self) -> &[BinMapper] {
        &self.mappers
    }

    /// Bin codes of an unbundled feature.
    pub fn bins(&self, feature: usize) -> &[u8] {
        &self.bins[feature]
    }

    pub fn bundles(&self) -> &[BundleColumn] {
        &self.bundles
    }

    /// Replaces the members' own code columns by bundle columns.
    pub fn attach_bundles(&mut self, bundles: Vec<BundleColumn>) {
        for (i, b) in bundles.iter().enumerate() {
            assert_eq!(b.codes.len(), self.n_rows);
            for &m in &b.members {
                self.bundle_of[m] = Some(i);
                self.bins[m] = Vec::new();
            }
        }
        self.bundles = bundles;
    }
}

/// Per-feature, per-bin aggregates over the rows of one node. Only the
/// requested features are populated.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeHistogram<S> {
    bins: Vec<Vec<S>>,
}

impl<S: Clone> NodeHistogram<S> {
    pub fn build<C: Criterion<Stats = S>>(
        crit: &C,
        binned: &BinnedMatrix,
        rows: &[u32],
        features: &[usize],
    ) -> NodeHistogram<S> {
        let mut hist: Vec<Vec<S>> = vec![Vec::new(); binned.n_features()];
        let mut wanted_bundles = vec![false; binned.bundles.len()];
        for &f in features {
            if let Some(b) = binned.bundle_of[f] {
                wanted_bundles[b] = true;
                continue;
            }
            let col = &binned.bins[f];
            let mut h = vec![crit.zero(); binned.mappers[f].n_bins()];
            for &r in rows {
                crit.add_row(&mut h[col[r as usize] as usize], r as usize);
            }
            hist[f] = h;
        }
        if wanted_bundles.iter().any(|&w| w) {
            let total = crit.stats_of(rows);
            for (b, bundle) in binned.bundles.iter().enumerate() {
                if !wanted_bundles[b] {
                    continue;
                }
                let mut h = vec![crit.zero(); bundle.n_codes];
                for &r in rows {
                    crit.add_row(&mut h[bundle.codes[r as usize] as usize], r as usize);
                }
                for (m, &f) in bundle.members.iter().enumerate() {
                    if !features.contains(&f) {
                        continue;
                    }
                    let nb = binned.mappers[f].n_bins();
                    let mut fh = vec![crit.zero(); nb];
                    let mut zero = total.clone();
                    for (k, slot) in fh.iter_mut().enumerate().skip(1) {
                        let code = bundle.offsets[m] as usize + k - 1;
                        *slot = h[code].clone();
                        crit.subtract(&mut zero, slot);
                    }
                    fh[0] = zero;
                    hist[f] = fh;
                }
            }
        }
        NodeHistogram { bins: hist }
    }

    /// Sibling histogram by subtraction: `parent - child`, bin by bin.
    pub fn subtract<C: Criterion<Stats = S>>(
        crit: &C,
        parent: &NodeHistogram<S>,
        child: &NodeHistogram<S>,
    ) -> NodeHistogram<S> {
        let bins = parent
            .bins
            .iter()
            .zip(&child.bins)
            .map(|(p, c)| {
                p.iter()
                    .zip(c)
                    .map(|(a, b)| {
                        let mut d = a.clone();
                        crit.subtract(&mut d, b);
                        d
                    })
                    .collect()
            })
            .collect();
        NodeHistogram { bins }
    }

    pub fn feature(&self, f: usize) -> &[S] {
        &self.bins[f]
    }

    pub fn total<C: Criterion<Stats = S>>(&self, crit: &C, f: usize) -> S {
        let mut t = crit.zero();
        for s in &self.bins[f] {
            crit.merge(&mut t, s);
        }
        t
    }
}
