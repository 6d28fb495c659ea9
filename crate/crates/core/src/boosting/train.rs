use rand::seq::index;
use rand_chacha::ChaCha8Rng;

use super::{
    efb_bundle_binned, goss_sample, logloss, sigmoid, BoostError, BoostMode, FeatureBundle,
    GbdtModel, GbdtParams, SearchKind,
};
use crate::preprocess::Dataset;
use crate::seed;
use crate::tree::{
    grow_tree, BinnedMatrix, DecisionTree, FeatureSampler, GradHessCriterion, GrowParams, Growth,
    LeafValue, SplitSearch, TreeError,
};

/// Keeps saturated rows from producing a zero hessian.
const MIN_HESS: f64 = 1e-16;

/// Incremental training state. Per-row margins are kept as
/// `base + eta * raw` where `raw` accumulates leaf weights in tree order,
/// so they match `GbdtModel::margins` bit for bit.
pub struct Booster<'a> {
    data: &'a Dataset,
    params: GbdtParams,
    binned: Option<BinnedMatrix>,
    bundles: Option<FeatureBundle>,
    trees: Vec<DecisionTree>,
    base_score: f64,
    raw: Vec<f64>,
    rng: ChaCha8Rng,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

impl<'a> Booster<'a> {
    pub fn new(data: &'a Dataset, params: &GbdtParams, seed: u64) -> Result<Booster<'a>, BoostError> {
        params.validate()?;
        let n = data.n_rows();
        if n == 0 {
            return Err(TreeError::EmptyTrainingSet.into());
        }
        if data.n_features() == 0 {
            return Err(BoostError::InvalidParams("dataset has no features".into()));
        }
        let rate = (data.positive_count() as f64 / n as f64).clamp(1e-7, 1.0 - 1e-7);
        let base_score = (rate / (1.0 - rate)).ln();

        let (binned, bundles) = match params.search {
            SearchKind::Exhaustive => (None, None),
            SearchKind::Histogram => {
                let mut b = BinnedMatrix::from_columns(data.columns(), params.max_bins);
                let bundles = params.efb_budget.map(|budget| efb_bundle_binned(&b, budget));
                if let Some(fb) = &bundles {
                    let cols = fb.encode(&b);
                    if !cols.is_empty() {
                        b.attach_bundles(cols);
                    }
                }
                (Some(b), bundles)
            }
        };
        Ok(Booster {
            data,
            params: *params,
            binned,
            bundles,
            trees: Vec::new(),
            base_score,
            raw: vec![0.0; n],
            rng: seed::rng(seed, seed::streams::BOOSTING),
            grad: vec![0.0; n],
            hess: vec![0.0; n],
        })
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn bundles(&self) -> Option<&FeatureBundle> {
        self.bundles.as_ref()
    }

    pub fn margins(&self) -> Vec<f64> {
        let eta = self.params.learning_rate;
        self.raw.iter().map(|&r| self.base_score + eta * r).collect()
    }

    pub fn train_logloss(&self) -> f64 {
        logloss(&self.margins(), self.data.labels())
    }

    fn rows_for_round(&mut self) -> Result<Vec<u32>, BoostError> {
        let n = self.data.n_rows();
        let mut rows: Vec<u32> = if self.params.subsample < 1.0 {
            let k = ((self.params.subsample * n as f64).round() as usize).clamp(1, n);
            let mut r: Vec<u32> = index::sample(&mut self.rng, n, k)
                .into_iter()
                .map(|i| i as u32)
                .collect();
            r.sort_unstable();
            r
        } else {
            (0..n as u32).collect()
        };
        if let Some(cfg) = self.params.goss.filter(|c| !c.is_identity()) {
            let g: Vec<f64> = rows.iter().map(|&r| self.grad[r as usize]).collect();
            let s = goss_sample(&g, &cfg, &mut self.rng)?;
            let picked: Vec<u32> = s.rows.iter().map(|&k| rows[k as usize]).collect();
            for (&r, &w) in picked.iter().zip(&s.weights) {
                if w != 1.0 {
                    self.grad[r as usize] *= w;
                    self.hess[r as usize] *= w;
                }
            }
            rows = picked;
        }
        Ok(rows)
    }

    fn features_for_round(&mut self) -> Vec<usize> {
        let p = self.data.n_features();
        let k = ((self.params.colsample_bytree * p as f64).floor() as usize).clamp(1, p);
        if k == p {
            return (0..p).collect();
        }
        let mut f = index::sample(&mut self.rng, p, k).into_vec();
        f.sort_unstable();
        f
    }

    /// One boosting round: gradients at the current margins, one tree under
    /// the second-order objective, then `raw += f_t(x)` for every row.
    pub fn round(&mut self) -> Result<&DecisionTree, BoostError> {
        let eta = self.params.learning_rate;
        let labels = self.data.labels();
        for i in 0..self.raw.len() {
            let p = sigmoid(self.base_score + eta * self.raw[i]);
            self.grad[i] = p - labels[i] as f64;
            self.hess[i] = (p * (1.0 - p)).max(MIN_HESS);
        }
        let rows = self.rows_for_round()?;
        let features = self.features_for_round();

        let crit = GradHessCriterion {
            grad: &self.grad,
            hess: &self.hess,
            reg: self.params.reg,
        };
        let columns = self.data.columns();
        let search = match &self.binned {
            Some(binned) => SplitSearch::Histogram { columns, binned },
            None => SplitSearch::Exhaustive { columns },
        };
        let growth = match self.params.num_leaves {
            Some(max_leaves) => Growth::LeafWise { max_leaves },
            None => Growth::DepthWise,
        };
        let grow = GrowParams {
            max_depth: self.params.max_depth,
            min_samples_split: 2,
            growth,
        };
        let (tree, _) = grow_tree(&crit, search, rows, &grow, &mut FeatureSampler::All(features))?;

        for (i, r) in self.raw.iter_mut().enumerate() {
            if let LeafValue::Weight(w) = tree.leaf_value(tree.leaf_index_by(|j| columns[j][i])) {
                *r += w;
            }
        }
        self.trees.push(tree);
        Ok(self.trees.last().unwrap())
    }

    pub fn finish(self) -> GbdtModel {
        GbdtModel::from_parts(
            self.params,
            self.trees,
            self.base_score,
            self.data.n_features(),
            self.bundles,
        )
        .expect("trees only reference training features")
    }
}

pub fn boost_round<'b>(booster: &'b mut Booster<'_>) -> Result<&'b DecisionTree, BoostError> {
    booster.round()
}

pub fn train_gbdt(data: &Dataset, params: &GbdtParams, seed: u64) -> Result<GbdtModel, BoostError> {
    let mut b = Booster::new(data, params, seed)?;
    for _ in 0..params.n_estimators {
        b.round()?;
    }
    Ok(b.finish())
}

pub fn train_xgb(data: &Dataset, params: &GbdtParams, seed: u64) -> Result<GbdtModel, BoostError> {
    if params.mode != BoostMode::Xgb {
        return Err(BoostError::InvalidParams("train_xgb needs xgb-mode parameters".into()));
    }
    train_gbdt(data, params, seed)
}

pub fn train_lgbm(data: &Dataset, params: &GbdtParams, seed: u64) -> Result<GbdtModel, BoostError> {
    if params.mode != BoostMode::Lgbm {
        return Err(BoostError::InvalidParams("train_lgbm needs lgbm-mode parameters".into()));
    }
    train_gbdt(data, params, seed)
}
