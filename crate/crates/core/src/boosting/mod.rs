//! Gradient-boosted trees for binary classification under logistic loss,
//! in two modes: depth-wise second-order boosting (xgb) and leaf-wise
//! histogram boosting with GOSS and exclusive feature bundling (lgbm).

mod efb;
mod goss;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::Dataset;
use crate::tree::{DecisionTree, RegParams, TreeError};

pub use self::efb::{decode, efb_bundle, efb_bundle_binned, Bundle, FeatureBundle, MAX_BUNDLE_CODES};
pub use self::goss::{goss_sample, GossConfig, GossSample};
pub use self::train::{boost_round, train_gbdt, train_lgbm, train_xgb, Booster};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoostError {
    #[error("invalid boosting parameters: {0}")]
    InvalidParams(String),
    #[error("invalid sampling configuration: {0}")]
    InvalidConfig(String),
    #[error("probability {0} outside (0, 1)")]
    ProbabilityOutOfRange(f64),
    #[error("model has not been trained")]
    UntrainedModel,
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoostMode {
    Xgb,
    Lgbm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchKind {
    Histogram,
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub mode: BoostMode,
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub subsample: f64,
    pub colsample_bytree: f64,
    pub reg: RegParams,
    /// Leaf cap for leaf-wise growth; `None` grows depth-wise.
    pub num_leaves: Option<usize>,
    pub goss: Option<GossConfig>,
    /// Conflict budget for feature bundling; `None` disables bundling.
    pub efb_budget: Option<usize>,
    pub max_bins: usize,
    pub search: SearchKind,
}

impl GbdtParams {
    /// Second-order boosting defaults: depth 6, 100 rounds, eta 0.1,
    /// column sampling 0.8, gamma 0.1, lambda 1, min_child_weight 1, exact
    /// split enumeration.
    pub fn xgb() -> GbdtParams {
        GbdtParams {
            mode: BoostMode::Xgb,
            n_estimators: 100,
            max_depth: 6,
            learning_rate: 0.1,
            subsample: 1.0,
            colsample_bytree: 0.8,
            reg: RegParams {
                lambda: 1.0,
                alpha: 0.0,
                gamma: 0.1,
                min_child_weight: 1.0,
                min_child_samples: 1,
            },
            num_leaves: None,
            goss: None,
            efb_budget: None,
            max_bins: crate::tree::MAX_BINS,
            search: SearchKind::Exhaustive,
        }
    }

    /// Leaf-wise defaults: depth 5, 31 leaves, 200 rounds, eta 0.01,
    /// row sampling 0.9, column sampling 0.9, alpha 1, lambda 0, at least
    /// 20 rows per child, GOSS and zero-conflict bundling on.
    pub fn lgbm() -> GbdtParams {
        GbdtParams {
            mode: BoostMode::Lgbm,
            n_estimators: 200,
            max_depth: 5,
            learning_rate: 0.01,
            subsample: 0.9,
            colsample_bytree: 0.9,
            reg: RegParams {
                lambda: 0.0,
                alpha: 1.0,
                gamma: 0.0,
                min_child_weight: 1e-3,
                min_child_samples: 20,
            },
            num_leaves: Some(31),
            goss: Some(GossConfig::default()),
            efb_budget: Some(0),
            max_bins: crate::tree::MAX_BINS,
            search: SearchKind::Histogram,
        }
    }

    pub fn validate(&self) -> Result<(), BoostError> {
        let bad = |m: String| Err(BoostError::InvalidParams(m));
        let unit = |x: f64| x > 0.0 && x <= 1.0;
        if self.n_estimators == 0 {
            return bad("n_estimators must be at least 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {}", self.learning_rate));
        }
        if !unit(self.subsample) {
            return bad(format!("subsample {} outside (0, 1]", self.subsample));
        }
        if !unit(self.colsample_bytree) {
            return bad(format!("colsample_bytree {} outside (0, 1]", self.colsample_bytree));
        }
        let r = &self.reg;
        for (name, v) in [
            ("reg_lambda", r.lambda),
            ("reg_alpha", r.alpha),
            ("gamma", r.gamma),
            ("min_child_weight", r.min_child_weight),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} {v} must be a non-negative number"));
            }
        }
        if r.min_child_samples == 0 {
            return bad("min_child_samples must be positive".into());
        }
        if let Some(l) = self.num_leaves {
            if l < 2 {
                return bad(format!("num_leaves {l} must be at least 2"));
            }
        }
        if !(2..=crate::tree::MAX_BINS).contains(&self.max_bins) {
            return bad(format!("max_bins {} outside [2, 255]", self.max_bins));
        }
        if let Some(g) = &self.goss {
            g.validate()?;
        }
        Ok(())
    }
}

#[inline]
pub fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

/// Gradient and hessian of binary cross-entropy with respect to the margin.
pub fn logloss_grad_hess(p: f64, y: u32) -> Result<(f64, f64), BoostError> {
    if !(p > 0.0 && p < 1.0) || y > 1 {
        return Err(BoostError::ProbabilityOutOfRange(p));
    }
    Ok((p - y as f64, p * (1.0 - p)))
}

/// Mean binary cross-entropy of margins against labels.
pub fn logloss(margins: &[f64], labels: &[u32]) -> f64 {
    let total: f64 = margins
        .iter()
        .zip(labels)
        .map(|(&m, &y)| {
            // log(1 + e^m) - y m, computed without overflow
            let softplus = if m > 0.0 { m + (-m).exp().ln_1p() } else { m.exp().ln_1p() };
            softplus - y as f64 * m
        })
        .sum();
    total / margins.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    mode: BoostMode,
    trees: Vec<DecisionTree>,
    learning_rate: f64,
    base_score: f64,
    n_features: usize,
    params: GbdtParams,
    bundles: Option<FeatureBundle>,
}

impl GbdtModel {
    pub fn from_parts(
        params: GbdtParams,
        trees: Vec<DecisionTree>,
        base_score: f64,
        n_features: usize,
        bundles: Option<FeatureBundle>,
    ) -> Result<GbdtModel, BoostError> {
        if let Some(m) = trees.iter().filter_map(DecisionTree::max_feature).max() {
            if m as usize >= n_features {
                return Err(TreeError::FeatureIndexOutOfRange {
                    index: m as usize,
                    len: n_features,
                }
                .into());
            }
        }
        Ok(GbdtModel {
            mode: params.mode,
            trees,
            learning_rate: params.learning_rate,
            base_score,
            n_features,
            params,
            bundles,
        })
    }

    pub fn mode(&self) -> BoostMode {
        self.mode
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn params(&self) -> &GbdtParams {
        &self.params
    }

    pub fn bundles(&self) -> Option<&FeatureBundle> {
        self.bundles.as_ref()
    }

    /// `base + eta * sum_m f_m(x)`: leaf weights are summed first, then scaled.
    #[inline]
    fn margin_by<F: Fn(usize) -> f64 + Copy>(&self, value: F) -> f64 {
        let sum: f64 = self
            .trees
            .iter()
            .map(|t| match t.leaf_value(t.leaf_index_by(value)) {
                crate::tree::LeafValue::Weight(w) => *w,
                crate::tree::LeafValue::Counts(_) => 0.0,
            })
            .sum();
        self.base_score + self.learning_rate * sum
    }

    fn check_input(&self, len: usize) -> Result<(), BoostError> {
        if len < self.n_features {
            return Err(TreeError::FeatureIndexOutOfRange {
                index: self.n_features.saturating_sub(1),
                len,
            }
            .into());
        }
        Ok(())
    }

    pub fn predict_margin(&self, x: &[f64]) -> Result<f64, BoostError> {
        self.check_input(x.len())?;
        Ok(self.margin_by(|j| x[j]))
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, BoostError> {
        self.predict_margin(x).map(sigmoid)
    }

    /// Attack (1) when the probability is at least 0.5.
    pub fn predict_class(&self, x: &[f64]) -> Result<u32, BoostError> {
        self.predict_proba(x).map(|p| (p >= 0.5) as u32)
    }

    pub fn margins(&self, data: &Dataset) -> Result<Vec<f64>, BoostError> {
        self.check_input(data.n_features())?;
        let cols = data.columns();
        Ok((0..data.n_rows())
            .map(|i| self.margin_by(|j| cols[j][i]))
            .collect())
    }

    /// Scales the learning rate by `factor` and every leaf weight by its
    /// inverse. Margins are unchanged when `factor` is a power of two.
    pub fn rescale_shrinkage(&mut self, factor: f64) {
        self.learning_rate *= factor;
        self.params.learning_rate = self.learning_rate;
        for t in &mut self.trees {
            t.scale_weights(1.0 / factor);
        }
    }
}
