//! Learners registered by name and the model they produce.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boosting::{train_gbdt, BoostError, BoostMode, GbdtModel, GbdtParams, SearchKind};
use crate::forest::{train_forest, ForestError, ForestModel, ForestParams, MaxFeatures};
use crate::preprocess::Dataset;
use crate::tree::DecisionTree;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("unknown learner `{0}`")]
    UnknownLearner(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidParams(String),
    #[error("model used before fitting")]
    UntrainedModel,
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Boost(#[from] BoostError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rf,
    Xgb,
    Lgbm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Rf, ModelKind::Xgb, ModelKind::Lgbm];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Rf => "rf",
            ModelKind::Xgb => "xgb",
            ModelKind::Lgbm => "lgbm",
        }
    }

    /// Hyperparameter keys meaningful for this kind.
    pub fn keys(self) -> &'static [&'static str] {
        match self {
            ModelKind::Rf => &[
                "max_depth",
                "n_estimators",
                "min_samples_split",
                "min_samples_leaf",
                "max_features",
            ],
            ModelKind::Xgb => &[
                "max_depth",
                "n_estimators",
                "subsample",
                "learning_rate",
                "colsample_bytree",
                "gamma",
            ],
            ModelKind::Lgbm => &[
                "max_depth",
                "n_estimators",
                "min_child_samples",
                "subsample",
                "learning_rate",
                "num_leaves",
                "reg_alpha",
                "reg_lambda",
                "colsample_bytree",
            ],
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = LearnError;
    fn from_str(s: &str) -> Result<Self, LearnError> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| LearnError::UnknownLearner(s.to_string()))
    }
}

fn parse_max_features(s: &str) -> Option<MaxFeatures> {
    match s {
        "sqrt" => Some(MaxFeatures::Sqrt),
        "log2" => Some(MaxFeatures::Log2),
        "all" | "none" => Some(MaxFeatures::All),
        _ if s.contains('.') => s.parse().ok().map(MaxFeatures::Fraction),
        _ => s.parse().ok().map(MaxFeatures::Count),
    }
}

fn max_features_str(m: MaxFeatures) -> String {
    match m {
        MaxFeatures::Sqrt => "sqrt".into(),
        MaxFeatures::Log2 => "log2".into(),
        MaxFeatures::All => "all".into(),
        MaxFeatures::Count(k) => k.to_string(),
        MaxFeatures::Fraction(f) => format!("{f:?}"),
    }
}

/// Union of every learner's hyperparameters. Fields a kind does not use
/// stay `None`; unset fields a kind does use fall back to its defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_estimators: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_samples_split: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_child_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_samples_leaf: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_features: Option<MaxFeatures>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_leaves: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reg_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reg_lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub colsample_bytree: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

impl HyperParams {
    pub fn empty(kind: ModelKind) -> HyperParams {
        HyperParams {
            kind,
            max_depth: None,
            n_estimators: None,
            min_samples_split: None,
            min_child_samples: None,
            min_samples_leaf: None,
            max_features: None,
            subsample: None,
            learning_rate: None,
            num_leaves: None,
            reg_alpha: None,
            reg_lambda: None,
            colsample_bytree: None,
            gamma: None,
        }
    }

    /// The tuned configuration for each learner.
    pub fn tuned(kind: ModelKind) -> HyperParams {
        let mut h = HyperParams::empty(kind);
        match kind {
            ModelKind::Rf => {
                h.max_depth = Some(6);
                h.n_estimators = Some(100);
                h.min_samples_split = Some(10);
                h.min_samples_leaf = Some(4);
                h.max_features = Some(MaxFeatures::Sqrt);
            }
            ModelKind::Xgb => {
                h.max_depth = Some(6);
                h.n_estimators = Some(100);
                h.subsample = Some(1.0);
                h.learning_rate = Some(0.1);
                h.colsample_bytree = Some(0.8);
                h.gamma = Some(0.1);
            }
            ModelKind::Lgbm => {
                h.max_depth = Some(5);
                h.n_estimators = Some(200);
                h.min_child_samples = Some(20);
                h.subsample = Some(0.9);
                h.learning_rate = Some(0.01);
                h.num_leaves = Some(31);
                h.reg_alpha = Some(1.0);
                h.reg_lambda = Some(0.0);
                h.colsample_bytree = Some(0.9);
            }
        }
        h
    }

    /// Set keys in canonical order with their textual values.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut push = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k, v));
            }
        };
        let f = |x: Option<f64>| x.map(|v| format!("{v:?}"));
        let u = |x: Option<usize>| x.map(|v| v.to_string());
        push("max_depth", u(self.max_depth));
        push("n_estimators", u(self.n_estimators));
        push("min_samples_split", u(self.min_samples_split));
        push("min_child_samples", u(self.min_child_samples));
        push("min_samples_leaf", u(self.min_samples_leaf));
        push("max_features", self.max_features.map(max_features_str));
        push("subsample", f(self.subsample));
        push("learning_rate", f(self.learning_rate));
        push("num_leaves", u(self.num_leaves));
        push("reg_alpha", f(self.reg_alpha));
        push("reg_lambda", f(self.reg_lambda));
        push("colsample_bytree", f(self.colsample_bytree));
        push("gamma", f(self.gamma));
        out
    }

    /// Sets one field from text. Keys the kind does not use are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), LearnError> {
        if !self.kind.keys().contains(&key) {
            return Err(LearnError::InvalidParams(format!(
                "`{key}` is not a {} hyperparameter",
                self.kind
            )));
        }
        let bad = || LearnError::InvalidParams(format!("{key} = `{value}`"));
        let int = || value.parse::<usize>().map_err(|_| bad());
        let float = || value.parse::<f64>().map_err(|_| bad());
        match key {
            "max_depth" => self.max_depth = Some(int()?),
            "n_estimators" => self.n_estimators = Some(int()?),
            "min_samples_split" => self.min_samples_split = Some(int()?),
            "min_child_samples" => self.min_child_samples = Some(int()?),
            "min_samples_leaf" => self.min_samples_leaf = Some(int()?),
            "max_features" => self.max_features = Some(parse_max_features(value).ok_or_else(bad)?),
            "subsample" => self.subsample = Some(float()?),
            "learning_rate" => self.learning_rate = Some(float()?),
            "num_leaves" => self.num_leaves = Some(int()?),
            "reg_alpha" => self.reg_alpha = Some(float()?),
            "reg_lambda" => self.reg_lambda = Some(float()?),
            "colsample_bytree" => self.colsample_bytree = Some(float()?),
            "gamma" => self.gamma = Some(float()?),
            _ => unreachable!("key list and match arms agree"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        for (k, _) in self.entries() {
            if !self.kind.keys().contains(&k) {
                return Err(LearnError::InvalidParams(format!(
                    "`{k}` is not a {} hyperparameter",
                    self.kind
                )));
            }
        }
        match self.kind {
            ModelKind::Rf => {
                let p = self.forest_params(1);
                if p.max_depth == 0 {
                    return Err(LearnError::InvalidParams("max_depth must be positive".into()));
                }
                // resolve against a wide matrix so only malformed rules fail
                if let MaxFeatures::Fraction(_) | MaxFeatures::Count(0) = p.max_features {
                    p.max_features.resolve(usize::MAX / 2)?;
                }
                if p.n_estimators == 0 || p.min_samples_split == 0 || p.min_samples_leaf == 0 {
                    return Err(LearnError::InvalidParams(
                        "n_estimators, min_samples_split and min_samples_leaf must be positive"
                            .into(),
                    ));
                }
            }
            ModelKind::Xgb | ModelKind::Lgbm => {
                let p = self.gbdt_params();
                p.validate()?;
                if p.max_depth == 0 {
                    return Err(LearnError::InvalidParams("max_depth must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn forest_params(&self, threads: usize) -> ForestParams {
        let d = ForestParams::default();
        ForestParams {
            n_estimators: self.n_estimators.unwrap_or(d.n_estimators),
            max_depth: self.max_depth.unwrap_or(d.max_depth),
            min_samples_split: self.min_samples_split.unwrap_or(d.min_samples_split),
            min_samples_leaf: self.min_samples_leaf.unwrap_or(d.min_samples_leaf),
            max_features: self.max_features.unwrap_or(d.max_features),
            bootstrap: true,
            threads: threads.max(1),
        }
    }

    pub fn gbdt_params(&self) -> GbdtParams {
        let mut p = match self.kind {
            ModelKind::Lgbm => GbdtParams::lgbm(),
            _ => GbdtParams::xgb(),
        };
        if let Some(v) = self.max_depth {
            p.max_depth = v;
        }
        if let Some(v) = self.n_estimators {
            p.n_estimators = v;
        }
        if let Some(v) = self.subsample {
            p.subsample = v;
        }
        if let Some(v) = self.learning_rate {
            p.learning_rate = v;
        }
        if let Some(v) = self.colsample_bytree {
            p.colsample_bytree = v;
        }
        if let Some(v) = self.gamma {
            p.reg.gamma = v;
        }
        if let Some(v) = self.reg_alpha {
            p.reg.alpha = v;
        }
        if let Some(v) = self.reg_lambda {
            p.reg.lambda = v;
        }
        if let Some(v) = self.min_child_samples {
            p.reg.min_child_samples = v;
        }
        if let Some(v) = self.num_leaves {
            p.num_leaves = Some(v);
        }
        p
    }
}

impl fmt::Display for HyperParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.entries().iter().map(|(k, v)| format!("{k}={v}")).collect();
        write!(f, "{} {}", self.kind, parts.join(" "))
    }
}

/// Class and attack score for one input. The score is the attack vote
/// fraction for the forest and the attack probability for boosting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub class: u32,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EnsembleModel {
    Forest(ForestModel),
    Gbdt(GbdtModel),
}

impl EnsembleModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            EnsembleModel::Forest(_) => ModelKind::Rf,
            EnsembleModel::Gbdt(m) => match m.mode() {
                BoostMode::Xgb => ModelKind::Xgb,
                BoostMode::Lgbm => ModelKind::Lgbm,
            },
        }
    }

    pub fn trees(&self) -> &[DecisionTree] {
        match self {
            EnsembleModel::Forest(m) => m.trees(),
            EnsembleModel::Gbdt(m) => m.trees(),
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            EnsembleModel::Forest(m) => m.n_features(),
            EnsembleModel::Gbdt(m) => m.n_features(),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction, LearnError> {
        match self {
            EnsembleModel::Forest(m) => {
                let v = m.predict_class(x)?;
                Ok(Prediction {
                    class: v.class,
                    score: v.fractions.get(1).copied().unwrap_or(0.0),
                })
            }
            EnsembleModel::Gbdt(m) => {
                let p = m.predict_proba(x)?;
                Ok(Prediction {
                    class: (p >= 0.5) as u32,
                    score: p,
                })
            }
        }
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<Prediction>, LearnError> {
        match self {
            EnsembleModel::Forest(m) => Ok(m
                .predict_dataset(data)?
                .into_iter()
                .map(|(class, score)| Prediction { class, score })
                .collect()),
            EnsembleModel::Gbdt(m) => Ok(m
                .margins(data)?
                .into_iter()
                .map(|z| {
                    let p = crate::boosting::sigmoid(z);
                    Prediction {
                        class: (p >= 0.5) as u32,
                        score: p,
                    }
                })
                .collect()),
        }
    }

    pub fn predict_classes(&self, data: &Dataset) -> Result<Vec<u32>, LearnError> {
        Ok(self.predict_dataset(data)?.into_iter().map(|p| p.class).collect())
    }
}

/// Training options that are not hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub seed: u64,
    pub threads: usize,
    /// Split search override for the boosting learners; `None` keeps the
    /// mode default (exhaustive for xgb, histogram for lgbm).
    pub search: Option<SearchKind>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            seed: 0,
            threads: 1,
            search: None,
        }
    }
}

pub trait Learner: Send + Sync {
    fn name(&self) -> &str;
    fn kind(&self) -> ModelKind;

    fn default_params(&self) -> HyperParams {
        HyperParams::tuned(self.kind())
    }

    fn fit(
        &self,
        data: &Dataset,
        params: &HyperParams,
        opts: &FitOptions,
    ) -> Result<EnsembleModel, LearnError>;
}

fn check_kind(params: &HyperParams, kind: ModelKind) -> Result<(), LearnError> {
    if params.kind != kind {
        return Err(LearnError::InvalidParams(format!(
            "{} hyperparameters given to the {kind} learner",
            params.kind
        )));
    }
    params.validate()
}

pub struct RandomForestLearner;

impl Learner for RandomForestLearner {
    fn name(&self) -> &str {
        "rf"
    }

    fn kind(&self) -> ModelKind {
        ModelKind::Rf
    }

    fn fit(&self, data: &Dataset, params: &HyperParams, opts: &FitOptions) -> Result<EnsembleModel, LearnError> {
        check_kind(params, ModelKind::Rf)?;
        let model = train_forest(data, &params.forest_params(opts.threads), opts.seed)?;
        Ok(EnsembleModel::Forest(model))
    }
}

pub struct BoostingLearner {
    kind: ModelKind,
}

impl BoostingLearner {
    pub fn xgb() -> BoostingLearner {
        BoostingLearner { kind: ModelKind::Xgb }
    }

    pub fn lgbm() -> BoostingLearner {
        BoostingLearner { kind: ModelKind::Lgbm }
    }
}

impl Learner for BoostingLearner {
    fn name(&self) -> &str {
        self.kind.as_str()
    }

    fn kind(&self) -> ModelKind {
        self.kind
    }

    fn fit(&self, data: &Dataset, params: &HyperParams, opts: &FitOptions) -> Result<EnsembleModel, LearnError> {
        check_kind(params, self.kind)?;
        let mut p = params.gbdt_params();
        if let Some(search) = opts.search {
            p.search = search;
        }
        Ok(EnsembleModel::Gbdt(train_gbdt(data, &p, opts.seed)?))
    }
}

/// Name-keyed learner table.
pub struct Registry {
    learners: BTreeMap<String, Box<dyn Learner>>,
}

impl Registry {
    pub fn empty() -> Registry {
        Registry {
            learners: BTreeMap::new(),
        }
    }

    /// `rf`, `xgb` and `lgbm`.
    pub fn builtin() -> Registry {
        let mut r = Registry::empty();
        r.register(Box::new(RandomForestLearner));
        r.register(Box::new(BoostingLearner::xgb()));
        r.register(Box::new(BoostingLearner::lgbm()));
        r
    }

    /// Replaces any learner already registered under the same name.
    pub fn register(&mut self, learner: Box<dyn Learner>) {
        self.learners.insert(learner.name().to_string(), learner);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Learner, LearnError> {
        self.learners
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| LearnError::UnknownLearner(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.learners.keys().map(String::as_str)
    }
}

/// A learner bound to its hyperparameters, fitted at most once.
pub struct Estimator<'a> {
    learner: &'a dyn Learner,
    params: HyperParams,
    model: Option<EnsembleModel>,
}

impl<'a> Estimator<'a> {
    pub fn new(learner: &'a dyn Learner, params: HyperParams) -> Estimator<'a> {
        Estimator {
            learner,
            params,
            model: None,
        }
    }

    pub fn params(&self) -> &HyperParams {
        &self.params
    }

    pub fn fit(&mut self, data: &Dataset, opts: &FitOptions) -> Result<&EnsembleModel, LearnError> {
        let m = self.learner.fit(data, &self.params, opts)?;
        Ok(self.model.insert(m))
    }

    pub fn model(&self) -> Result<&EnsembleModel, LearnError> {
        self.model.as_ref().ok_or(LearnError::UntrainedModel)
    }

    pub fn into_model(self) -> Result<EnsembleModel, LearnError> {
        self.model.ok_or(LearnError::UntrainedModel)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction, LearnError> {
        self.model()?.predict(x)
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<Prediction>, LearnError> {
        self.model()?.predict_dataset(data)
    }
}
