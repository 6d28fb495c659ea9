//! Random Forest: bootstrap-bagged gini trees with per-split feature
//! subsampling and hard majority voting.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::Dataset;
use crate::seed;
use crate::tree::{
    grow_tree, DecisionTree, FeatureSampler, GiniCriterion, GrowParams, GrowTrace, Growth,
    LeafValue, SplitSearch, TreeError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForestError {
    #[error("invalid forest parameters: {0}")]
    InvalidParams(String),
    #[error("model has no trees")]
    UntrainedModel,
    #[error("tree leaves do not carry numeric payloads")]
    PayloadKindMismatch,
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// Rule for the number of features examined at each split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `ceil(sqrt(p))`
    Sqrt,
    /// `ceil(log2(p))`
    Log2,
    All,
    Count(usize),
    Fraction(f64),
}

impl MaxFeatures {
    pub fn resolve(self, p: usize) -> Result<usize, ForestError> {
        let k = match self {
            MaxFeatures::Sqrt => (p as f64).sqrt().ceil() as usize,
            MaxFeatures::Log2 => (p as f64).log2().ceil() as usize,
            MaxFeatures::All => p,
            MaxFeatures::Count(k) => k,
            MaxFeatures::Fraction(f) if f > 0.0 && f <= 1.0 => (f * p as f64).ceil() as usize,
            MaxFeatures::Fraction(f) => {
                return Err(ForestError::InvalidParams(format!("max_features fraction {f}")))
            }
        };
        let k = k.max(1);
        if p == 0 || k > p {
            return Err(ForestError::InvalidParams(format!(
                "max_features resolves to {k} of {p} features"
            )));
        }
        Ok(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    /// Worker threads for tree construction; results never depend on it.
    pub threads: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_estimators: 100,
            max_depth: 6,
            min_samples_split: 10,
            min_samples_leaf: 4,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            threads: 1,
        }
    }
}

impl ForestParams {
    fn validate(&self) -> Result<(), ForestError> {
        let bad = |m: &str| Err(ForestError::InvalidParams(m.into()));
        if self.n_estimators == 0 {
            return bad("n_estimators must be at least 1");
        }
        if self.min_samples_split == 0 {
            return bad("min_samples_split must be positive");
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSample {
    /// `n` draws with replacement, ascending.
    pub indices: Vec<u32>,
    /// Rows never drawn, ascending.
    pub out_of_bag: Vec<u32>,
}

pub fn bootstrap_sample<R: Rng>(n: usize, rng: &mut R) -> BootstrapSample {
    let mut hits = vec![0u32; n];
    for _ in 0..n {
        hits[rng.random_range(0..n)] += 1;
    }
    let mut indices = Vec::with_capacity(n);
    let mut out_of_bag = Vec::new();
    for (i, &h) in hits.iter().enumerate() {
        if h == 0 {
            out_of_bag.push(i as u32);
        }
        indices.extend(std::iter::repeat_n(i as u32, h as usize));
    }
    BootstrapSample {
        indices,
        out_of_bag,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<DecisionTree>,
    tree_seeds: Vec<u64>,
    n_classes: usize,
    n_features: usize,
    features_per_split: usize,
    params: ForestParams,
}

/// Seed of tree `k`; trees can be regrown individually from it.
pub fn tree_seed(master: u64, k: usize) -> u64 {
    seed::derive(seed::derive(master, seed::streams::FOREST), k as u64)
}

fn grow_one(
    data: &Dataset,
    params: &ForestParams,
    n_classes: usize,
    k: usize,
    seed: u64,
) -> Result<(DecisionTree, GrowTrace), ForestError> {
    let mut rng = seed::rng(seed, 0);
    let rows = if params.bootstrap {
        bootstrap_sample(data.n_rows(), &mut rng).indices
    } else {
        (0..data.n_rows() as u32).collect()
    };
    let crit = GiniCriterion::new(data.labels(), n_classes, params.min_samples_leaf);
    let mut sampler = FeatureSampler::per_split((0..data.n_features()).collect(), k, rng.random());
    let grow = GrowParams {
        max_depth: params.max_depth,
        min_samples_split: params.min_samples_split,
        growth: Growth::DepthWise,
    };
    Ok(grow_tree(
        &crit,
        SplitSearch::Exhaustive {
            columns: data.columns(),
        },
        rows,
        &grow,
        &mut sampler,
    )?)
}

/// Trains `n_estimators` trees, each on its own bootstrap sample, and also
/// returns each tree's growth trace.
pub fn train_forest_traced(
    data: &Dataset,
    params: &ForestParams,
    seed: u64,
) -> Result<(ForestModel, Vec<GrowTrace>), ForestError> {
    params.validate()?;
    if data.n_rows() == 0 {
        return Err(TreeError::EmptyTrainingSet.into());
    }
    let k = params.max_features.resolve(data.n_features())?;
    let n_classes = data
        .labels()
        .iter()
        .map(|&l| l as usize + 1)
        .max()
        .unwrap_or(0)
        .max(2);
    let seeds: Vec<u64> = (0..params.n_estimators).map(|i| tree_seed(seed, i)).collect();

    let threads = params.threads.clamp(1, params.n_estimators);
    let mut out: Vec<Option<Result<(DecisionTree, GrowTrace), ForestError>>> =
        vec![None; params.n_estimators];
    if threads == 1 {
        for (i, &s) in seeds.iter().enumerate() {
            out[i] = Some(grow_one(data, params, n_classes, k, s));
        }
    } else {
        // strided assignment; results are placed by tree index
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads)
                .map(|w| {
                    let seeds = &seeds;
                    scope.spawn(move || {
                        (w..seeds.len())
                            .step_by(threads)
                            .map(|i| (i, grow_one(data, params, n_classes, k, seeds[i])))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("forest worker panicked") {
                    out[i] = Some(r);
                }
            }
        });
    }

    let mut trees = Vec::with_capacity(params.n_estimators);
    let mut traces = Vec::with_capacity(params.n_estimators);
    for r in out {
        let (t, tr) = r.expect("every tree index is assigned")?;
        trees.push(t);
        traces.push(tr);
    }
    Ok((
        ForestModel {
            trees,
            tree_seeds: seeds,
            n_classes,
            n_features: data.n_features(),
            features_per_split: k,
            params: *params,
        },
        traces,
    ))
}

pub fn train_forest(
    data: &Dataset,
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel, ForestError> {
    train_forest_traced(data, params, seed).map(|(m, _)| m)
}

/// Vote outcome for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct Vote {
    pub class: u32,
    pub fractions: Vec<f64>,
}

impl ForestModel {
    /// Assembles a model from existing trees (e.g. loaded from an artifact).
    pub fn from_trees(
        trees: Vec<DecisionTree>,
        tree_seeds: Vec<u64>,
        n_classes: usize,
        n_features: usize,
        features_per_split: usize,
        params: ForestParams,
    ) -> Result<ForestModel, ForestError> {
        if let Some(m) = trees.iter().filter_map(DecisionTree::max_feature).max() {
            if m as usize >= n_features {
                return Err(TreeError::FeatureIndexOutOfRange {
                    index: m as usize,
                    len: n_features,
                }
                .into());
            }
        }
        Ok(ForestModel {
            trees,
            tree_seeds,
            n_classes,
            n_features,
            features_per_split,
            params,
        })
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn tree_seeds(&self) -> &[u64] {
        &self.tree_seeds
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn features_per_split(&self) -> usize {
        self.features_per_split
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    fn check_input(&self, len: usize) -> Result<(), ForestError> {
        if self.trees.is_empty() {
            return Err(ForestError::UntrainedModel);
        }
        if len < self.n_features {
            return Err(TreeError::FeatureIndexOutOfRange {
                index: self.n_features - 1,
                len,
            }
            .into());
        }
        Ok(())
    }

    fn tally<F: Fn(usize) -> f64 + Copy>(&self, value: F, votes: &mut [u32]) -> Result<(), ForestError> {
        votes.iter_mut().for_each(|v| *v = 0);
        for t in &self.trees {
            let c = t
                .leaf_value(t.leaf_index_by(value))
                .majority_class()
                .ok_or(ForestError::PayloadKindMismatch)?;
            votes[c as usize] += 1;
        }
        Ok(())
    }

    /// Mode of the per-tree leaf-majority votes; ties go to the lower class.
    pub fn predict_class(&self, x: &[f64]) -> Result<Vote, ForestError> {
        self.check_input(x.len())?;
        let mut votes = vec![0u32; self.n_classes];
        self.tally(|j| x[j], &mut votes)?;
        let class = argmax_low(&votes);
        let m = self.trees.len() as f64;
        Ok(Vote {
            class,
            fractions: votes.iter().map(|&v| v as f64 / m).collect(),
        })
    }

    /// Predicted class and attack vote fraction for every row.
    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<(u32, f64)>, ForestError> {
        self.check_input(data.n_features())?;
        let cols = data.columns();
        let mut votes = vec![0u32; self.n_classes];
        let m = self.trees.len() as f64;
        (0..data.n_rows())
            .map(|i| {
                self.tally(|j| cols[j][i], &mut votes)?;
                let pos = votes.get(1).copied().unwrap_or(0) as f64 / m;
                Ok((argmax_low(&votes), pos))
            })
            .collect()
    }

    /// Mean of numeric tree outputs, `(1/M) sum T_j(x)`.
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64, ForestError> {
        self.check_input(x.len())?;
        let mut sum = 0.0;
        for t in &self.trees {
            match t.leaf_value(t.leaf_index_by(|j| x[j])) {
                LeafValue::Weight(w) => sum += w,
                LeafValue::Counts(_) => return Err(ForestError::PayloadKindMismatch),
            }
        }
        Ok(sum / self.trees.len() as f64)
    }
}

fn argmax_low(votes: &[u32]) -> u32 {
    let mut best = 0;
    for (k, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = k;
        }
    }
    best as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::FeatureKind;
    use crate::tree::Node;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn leaf(counts: Vec<u32>) -> Node {
        let s = counts.iter().sum::<u32>();
        Node::Leaf {
            value: LeafValue::Counts(counts),
            cover: s as f64,
            samples: s,
        }
    }

    fn const_tree(class: u32) -> DecisionTree {
        let mut c = vec![0, 0];
        c[class as usize] = 5;
        DecisionTree::from_nodes(vec![leaf(c)]).unwrap()
    }

    fn weight_stump(threshold: f64, l: f64, r: f64) -> DecisionTree {
        DecisionTree::from_nodes(vec![
            Node::Split {
                feature: 0,
                threshold,
                left: 1,
                right: 2,
                gain: 0.0,
                cover: 0.0,
                samples: 0,
            },
            Node::Leaf {
                value: LeafValue::Weight(l),
                cover: 0.0,
                samples: 0,
            },
            Node::Leaf {
                value: LeafValue::Weight(r),
                cover: 0.0,
                samples: 0,
            },
        ])
        .unwrap()
    }

    fn model(trees: Vec<DecisionTree>) -> ForestModel {
        let n = trees.len();
        ForestModel::from_trees(trees, vec![0; n], 2, 1, 1, ForestParams::default()).unwrap()
    }

    fn separable(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cols = vec![Vec::new(); 5];
        let mut labels = Vec::new();
        for _ in 0..n {
            let y = rng.random_range(0..2u32);
            for (j, c) in cols.iter_mut().enumerate() {
                let shift = if j == 2 { 3.0 * y as f64 } else { 0.0 };
                c.push(rng.random_range(0.0..1.0) + shift);
            }
            labels.push(y);
        }
        Dataset::new(
            (0..5).map(|j| format!("f{j}")).collect(),
            vec![FeatureKind::Numeric; 5],
            cols,
            labels,
        )
        .unwrap()
    }

    #[test]
    fn bootstrap_of_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = bootstrap_sample(1, &mut rng);
        assert_eq!(b.indices, vec![0]);
        assert!(b.out_of_bag.is_empty());
    }

    #[test]
    fn out_of_bag_fraction_near_inverse_e() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let b = bootstrap_sample(10_000, &mut rng);
        let frac = b.out_of_bag.len() as f64 / 10_000.0;
        assert!((frac - (-1.0f64).exp()).abs() < 0.02, "{frac}");
        assert_eq!(b.indices.len(), 10_000);
    }

    #[test]
    fn bootstrap_reproducible() {
        let a = bootstrap_sample(50, &mut ChaCha8Rng::seed_from_u64(4));
        let b = bootstrap_sample(50, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
    }

    #[test]
    fn voting_and_ties() {
        let m = model(vec![const_tree(1), const_tree(1), const_tree(0)]);
        let v = m.predict_class(&[0.0]).unwrap();
        assert_eq!(v.class, 1);
        assert_eq!(v.fractions, vec![1.0 / 3.0, 2.0 / 3.0]);
        let tie = model(vec![const_tree(0), const_tree(1)]);
        assert_eq!(tie.predict_class(&[0.0]).unwrap().class, 0);
        let rev = model(vec![const_tree(1), const_tree(0)]);
        assert_eq!(rev.predict_class(&[0.0]).unwrap().class, 0);
    }

    #[test]
    fn empty_model_is_untrained() {
        let m = model(vec![]);
        assert_eq!(m.predict_class(&[0.0]).unwrap_err(), ForestError::UntrainedModel);
    }

    #[test]
    fn mean_of_numeric_leaves() {
        let one = model(vec![weight_stump(0.0, 2.0, 3.0)]);
        assert_eq!(one.predict_mean(&[-1.0]).unwrap(), 2.0);
        let two = model(vec![weight_stump(0.0, 0.0, 0.0), weight_stump(0.0, 1.0, 1.0)]);
        assert_eq!(two.predict_mean(&[5.0]).unwrap(), 0.5);
        let counts = model(vec![const_tree(0)]);
        assert_eq!(
            counts.predict_mean(&[0.0]).unwrap_err(),
            ForestError::PayloadKindMismatch
        );

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let stumps: Vec<(f64, f64, f64)> = (0..10)
            .map(|_| (rng.random_range(-1.0..1.0), rng.random(), rng.random()))
            .collect();
        let m = model(stumps.iter().map(|&(t, l, r)| weight_stump(t, l, r)).collect());
        for _ in 0..100 {
            let x: f64 = rng.random_range(-1.5..1.5);
            let want = stumps
                .iter()
                .map(|&(t, l, r)| if x <= t { l } else { r })
                .sum::<f64>()
                / 10.0;
            assert!((m.predict_mean(&[x]).unwrap() - want).abs() < 1e-15);
        }
    }

    #[test]
    fn single_depth_zero_tree_predicts_majority() {
        let d = Dataset::new(
            vec!["a".into()],
            vec![FeatureKind::Numeric],
            vec![vec![0.0, 1.0, 2.0, 3.0, 4.0]],
            vec![1, 1, 1, 0, 0],
        )
        .unwrap();
        let p = ForestParams {
            n_estimators: 1,
            max_depth: 0,
            bootstrap: false,
            ..ForestParams::default()
        };
        let m = train_forest(&d, &p, 0).unwrap();
        for x in [-5.0, 0.0, 9.0] {
            assert_eq!(m.predict_class(&[x]).unwrap().class, 1);
        }
    }

    #[test]
    fn separable_defaults_fit() {
        let d = separable(2000, 1);
        let m = train_forest(&d, &ForestParams::default(), 7).unwrap();
        let preds = m.predict_dataset(&d).unwrap();
        let acc = preds
            .iter()
            .zip(d.labels())
            .filter(|((p, _), &y)| *p == y)
            .count() as f64
            / d.n_rows() as f64;
        assert!(acc >= 0.99, "{acc}");
        assert!(m.trees().iter().all(|t| t.depth() <= 6));
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let d = separable(500, 2);
        let p = ForestParams {
            n_estimators: 8,
            ..ForestParams::default()
        };
        let a = train_forest(&d, &p, 3).unwrap();
        let b = train_forest(&d, &ForestParams { threads: 3, ..p }, 3).unwrap();
        assert_eq!(a.trees(), b.trees());
        // tree k regrows in isolation from its seed
        let n_classes = 2;
        let (t5, _) = grow_one(&d, &p, n_classes, a.features_per_split(), tree_seed(3, 5)).unwrap();
        assert_eq!(&t5, &a.trees()[5]);
    }

    #[test]
    fn vote_oracle_and_order_invariance() {
        let d = separable(400, 9);
        let p = ForestParams {
            n_estimators: 15,
            max_depth: 3,
            ..ForestParams::default()
        };
        let m = train_forest(&d, &p, 11).unwrap();
        let mut reversed = m.trees().to_vec();
        reversed.reverse();
        let r = ForestModel::from_trees(reversed, vec![0; 15], 2, 5, 3, p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..500 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-0.5..4.5)).collect();
            let mut votes = [0u32; 2];
            for t in m.trees() {
                votes[t.traverse(&x).unwrap().majority_class().unwrap() as usize] += 1;
            }
            let want = if votes[1] > votes[0] { 1 } else { 0 };
            let v = m.predict_class(&x).unwrap();
            assert_eq!(v.class, want);
            assert_eq!(argmax_low_f(&v.fractions), v.class);
            assert!((v.fractions.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(r.predict_class(&x).unwrap().class, v.class);
        }
    }

    fn argmax_low_f(f: &[f64]) -> u32 {
        let mut b = 0;
        for k in 1..f.len() {
            if f[k] > f[b] {
                b = k;
            }
        }
        b as u32
    }

    #[test]
    fn sqrt_rule_examines_four_of_fifteen() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 600;
        let cols: Vec<Vec<f64>> = (0..15)
            .map(|_| (0..n).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let labels = (0..n).map(|i| (cols[0][i] + cols[9][i] > 1.0) as u32).collect();
        let d = Dataset::new(
            (0..15).map(|j| format!("f{j}")).collect(),
            vec![FeatureKind::Numeric; 15],
            cols,
            labels,
        )
        .unwrap();
        let p = ForestParams {
            n_estimators: 5,
            ..ForestParams::default()
        };
        let (m, traces) = train_forest_traced(&d, &p, 1).unwrap();
        assert_eq!(m.features_per_split(), 4);
        let all: Vec<usize> = traces.iter().flat_map(|t| t.features_examined.clone()).collect();
        assert!(!all.is_empty());
        assert!(all.iter().all(|&k| k == 4));
    }

    #[test]
    fn invalid_params() {
        let d = separable(20, 0);
        let p = ForestParams {
            n_estimators: 0,
            ..ForestParams::default()
        };
        assert!(matches!(train_forest(&d, &p, 0), Err(ForestError::InvalidParams(_))));
        let p = ForestParams {
            max_features: MaxFeatures::Count(9),
            ..ForestParams::default()
        };
        assert!(matches!(train_forest(&d, &p, 0), Err(ForestError::InvalidParams(_))));
    }
}
