use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    best_split_exhaustive, best_split_histogram, BinnedMatrix, Criterion, DecisionTree,
    NodeHistogram, Node, SplitCandidate, TreeError,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Growth {
    /// Breadth-first: every splittable node at one depth before the next.
    DepthWise,
    /// Best-first: always split the open leaf with the largest gain.
    LeafWise { max_leaves: usize },
}

#[derive(Debug, Clone, Copy)]
pub enum SplitSearch<'a> {
    Exhaustive {
        columns: &'a [Vec<f64>],
    },
    Histogram {
        columns: &'a [Vec<f64>],
        binned: &'a BinnedMatrix,
    },
}

impl<'a> SplitSearch<'a> {
    fn columns(&self) -> &'a [Vec<f64>] {
        match *self {
            SplitSearch::Exhaustive { columns } | SplitSearch::Histogram { columns, .. } => columns,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub growth: Growth,
}

/// Chooses the features a node may split on.
#[derive(Debug, Clone)]
pub enum FeatureSampler {
    All(Vec<usize>),
    /// A fresh uniform subset of `k` pool features at every split.
    PerSplit {
        pool: Vec<usize>,
        k: usize,
        rng: ChaCha8Rng,
    },
}

impl FeatureSampler {
    pub fn per_split(pool: Vec<usize>, k: usize, seed: u64) -> FeatureSampler {
        FeatureSampler::PerSplit {
            pool,
            k,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn pool(&self) -> &[usize] {
        match self {
            FeatureSampler::All(p) | FeatureSampler::PerSplit { pool: p, .. } => p,
        }
    }

    fn validate(&self) -> Result<(), TreeError> {
        if let FeatureSampler::PerSplit { pool, k, .. } = self {
            if *k == 0 || *k > pool.len() {
                return Err(TreeError::InvalidParams(format!(
                    "cannot sample {k} of {} features",
                    pool.len()
                )));
            }
        }
        Ok(())
    }

    /// Ascending feature indices.
    fn draw(&mut self) -> Vec<usize> {
        match self {
            FeatureSampler::All(p) => p.clone(),
            FeatureSampler::PerSplit { pool, k, rng } => {
                let mut f: Vec<usize> = rand::seq::index::sample(rng, pool.len(), *k)
                    .into_iter()
                    .map(|i| pool[i])
                    .collect();
                f.sort_unstable();
                f
            }
        }
    }
}

/// Instrumentation collected while growing one tree.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GrowTrace {
    /// Number of features examined at each split search, in search order.
    pub features_examined: Vec<usize>,
}

struct Open<S> {
    slot: usize,
    depth: usize,
    start: usize,
    end: usize,
    stats: S,
    hist: Option<NodeHistogram<S>>,
    split: Option<SplitCandidate<S>>,
}

struct Grower<'c, 's, C: Criterion> {
    crit: &'c C,
    search: SplitSearch<'s>,
    params: GrowParams,
    sampler: &'c mut FeatureSampler,
    rows: Vec<u32>,
    scratch: Vec<u32>,
    nodes: Vec<Option<Node>>,
    depth: usize,
    trace: GrowTrace,
}

impl<C: Criterion> Grower<'_, '_, C> {
    fn splittable(&self, depth: usize, stats: &C::Stats) -> bool {
        depth < self.params.max_depth
            && self.crit.count(stats) >= self.params.min_samples_split.max(2)
            && !self.crit.is_pure(stats)
    }

    fn evaluate(&mut self, open: &mut Open<C::Stats>) {
        if !self.splittable(open.depth, &open.stats) {
            return;
        }
        let features = self.sampler.draw();
        self.trace.features_examined.push(features.len());
        let rows = &self.rows[open.start..open.end];
        open.split = match (self.search, &open.hist) {
            (SplitSearch::Histogram { binned, .. }, Some(h)) => {
                best_split_histogram(self.crit, h, binned, &features, &open.stats)
            }
            (search, _) => {
                best_split_exhaustive(self.crit, search.columns(), rows, &features, &open.stats)
            }
        };
    }

    fn new_open(&mut self, depth: usize, start: usize, end: usize, stats: C::Stats) -> Open<C::Stats> {
        let slot = self.nodes.len();
        self.nodes.push(None);
        self.depth = self.depth.max(depth);
        Open {
            slot,
            depth,
            start,
            end,
            stats,
            hist: None,
            split: None,
        }
    }

    fn close(&mut self, open: Open<C::Stats>) {
        self.nodes[open.slot] = Some(Node::Leaf {
            value: self.crit.leaf(&open.stats),
            cover: self.crit.cover(&open.stats),
            samples: (open.end - open.start) as u32,
        });
    }

    fn build_hist(&self, start: usize, end: usize) -> Option<NodeHistogram<C::Stats>> {
        match self.search {
            SplitSearch::Histogram { binned, .. } => Some(NodeHistogram::build(
                self.crit,
                binned,
                &self.rows[start..end],
                self.sampler.pool(),
            )),
            SplitSearch::Exhaustive { .. } => None,
        }
    }

    /// Splits an evaluated node and returns its evaluated children.
    fn split(&mut self, mut open: Open<C::Stats>) -> [Open<C::Stats>; 2] {
        let cand = open.split.take().expect("split requested on a leaf");
        let col = &self.search.columns()[cand.feature];
        // stable partition of the node's row range
        self.scratch.clear();
        let mut w = open.start;
        for i in open.start..open.end {
            let r = self.rows[i];
            if col[r as usize] <= cand.threshold {
                self.rows[w] = r;
                w += 1;
            } else {
                self.scratch.push(r);
            }
        }
        self.rows[w..open.end].copy_from_slice(&self.scratch);
        debug_assert_eq!(w - open.start, self.crit.count(&cand.left));

        let depth = open.depth + 1;
        let mut left = self.new_open(depth, open.start, w, cand.left);
        let mut right = self.new_open(depth, w, open.end, cand.right);
        self.nodes[open.slot] = Some(Node::Split {
            feature: cand.feature as u32,
            threshold: cand.threshold,
            left: left.slot as u32,
            right: right.slot as u32,
            gain: cand.gain,
            cover: self.crit.cover(&open.stats),
            samples: (open.end - open.start) as u32,
        });

        if let Some(parent_hist) = open.hist.take() {
            if depth < self.params.max_depth {
                // build the smaller child, derive the larger by subtraction
                let (small, large) = if left.end - left.start <= right.end - right.start {
                    (&mut left, &mut right)
                } else {
                    (&mut right, &mut left)
                };
                let h = self.build_hist(small.start, small.end).unwrap();
                large.hist = Some(NodeHistogram::subtract(self.crit, &parent_hist, &h));
                small.hist = Some(h);
            }
        }
        self.evaluate(&mut left);
        self.evaluate(&mut right);
        [left, right]
    }
}

/// Grows one tree over `rows` (indices into the search columns; repeats
/// allowed). Leaves carry class counts or leaf weights depending on the
/// criterion.
pub fn grow_tree<C: Criterion>(
    crit: &C,
    search: SplitSearch<'_>,
    rows: Vec<u32>,
    params: &GrowParams,
    sampler: &mut FeatureSampler,
) -> Result<(DecisionTree, GrowTrace), TreeError> {
    if rows.is_empty() {
        return Err(TreeError::EmptyTrainingSet);
    }
    if params.min_samples_split == 0 {
        return Err(TreeError::InvalidParams("min_samples_split must be positive".into()));
    }
    if let Growth::LeafWise { max_leaves } = params.growth {
        if max_leaves == 0 {
            return Err(TreeError::InvalidParams("max_leaves must be positive".into()));
        }
    }
    sampler.validate()?;
    let n_cols = search.columns().len();
    if let Some(&f) = sampler.pool().iter().find(|&&f| f >= n_cols) {
        return Err(TreeError::FeatureIndexOutOfRange { index: f, len: n_cols });
    }

    let n = rows.len();
    let stats = crit.stats_of(&rows);
    let mut g = Grower {
        crit,
        search,
        params: *params,
        sampler,
        rows,
        scratch: Vec::new(),
        nodes: Vec::new(),
        depth: 0,
        trace: GrowTrace::default(),
    };
    let mut root = g.new_open(0, 0, n, stats);
    if g.splittable(0, &root.stats) {
        root.hist = g.build_hist(0, n);
    }
    g.evaluate(&mut root);

    match params.growth {
        Growth::DepthWise => {
            let mut queue = VecDeque::from([root]);
            while let Some(open) = queue.pop_front() {
                if open.split.is_some() {
                    queue.extend(g.split(open));
                } else {
                    g.close(open);
                }
            }
        }
        Growth::LeafWise { max_leaves } => {
            let mut open = vec![root];
            let mut leaves = 1;
            while leaves < max_leaves {
                // largest gain first, earliest node on ties
                let pick = open
                    .iter()
                    .enumerate()
                    .filter_map(|(i, o)| o.split.as_ref().map(|s| (i, s.gain, o.slot)))
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(b.2.cmp(&a.2)));
                let Some((i, _, _)) = pick else { break };
                let node = open.swap_remove(i);
                open.extend(g.split(node));
                leaves += 1;
            }
            for o in open {
                g.close(o);
            }
        }
    }

    let nodes = g.nodes.into_iter().map(|n| n.expect("unfinished node")).collect();
    Ok((DecisionTree::from_nodes_unchecked(nodes, g.depth as u32), g.trace))
}
