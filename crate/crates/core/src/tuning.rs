//! Randomized hyperparameter search and resource benchmarking.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::artifact::{ArtifactMeta, ModelArtifact, Preprocessing};
use crate::eval::{dataset_fingerprint, EvalError, EvalReport, Resources};
use crate::learner::{FitOptions, HyperParams, LearnError, Learner, ModelKind};
use crate::preprocess::Dataset;
use crate::seed;

/// Candidate values for one hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// Textual values, each parsed by `HyperParams::set`.
    Choice(Vec<String>),
    /// Inclusive integer range.
    IntRange(i64, i64),
    /// Half-open uniform float range.
    FloatRange(f64, f64),
}

impl Domain {
    pub fn choice<T: ToString>(values: &[T]) -> Domain {
        Domain::Choice(values.iter().map(ToString::to_string).collect())
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> String {
        match self {
            Domain::Choice(v) => v.choose(rng).expect("non-empty choice").clone(),
            Domain::IntRange(lo, hi) => rng.random_range(*lo..=*hi).to_string(),
            Domain::FloatRange(lo, hi) => format!("{:?}", rng.random_range(*lo..*hi)),
        }
    }

    /// Values at the edges of the domain, enough to validate it.
    fn probes(&self) -> Vec<String> {
        match self {
            Domain::Choice(v) => v.clone(),
            Domain::IntRange(lo, hi) => vec![lo.to_string(), hi.to_string()],
            Domain::FloatRange(lo, hi) => {
                vec![format!("{lo:?}"), format!("{:?}", lo + (hi - lo) * (1.0 - 1e-9))]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub kind: ModelKind,
    /// Drawn in key order, so the draw sequence is fixed by the seed.
    pub domains: BTreeMap<String, Domain>,
    /// Whole configurations. When non-empty the search walks them in a
    /// seeded shuffled order (cycling if `n_iter` exceeds the pool) and
    /// `domains` is ignored.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pool: Vec<HyperParams>,
    pub n_iter: usize,
    pub seed: u64,
}

impl ParamSpace {
    pub fn new(kind: ModelKind, n_iter: usize, seed: u64) -> ParamSpace {
        ParamSpace { kind, domains: BTreeMap::new(), pool: Vec::new(), n_iter, seed }
    }

    pub fn with(mut self, key: &str, domain: Domain) -> ParamSpace {
        self.domains.insert(key.to_string(), domain);
        self
    }

    pub fn from_pool(kind: ModelKind, pool: Vec<HyperParams>, n_iter: usize, seed: u64) -> ParamSpace {
        ParamSpace { kind, domains: BTreeMap::new(), pool, n_iter, seed }
    }

    /// A pool around the tuned configuration of each learner.
    pub fn default_for(kind: ModelKind, n_iter: usize, seed: u64) -> ParamSpace {
        let s = ParamSpace::new(kind, n_iter, seed);
        match kind {
            ModelKind::Rf => s
                .with("max_depth", Domain::choice(&[4, 6, 8, 10]))
                .with("n_estimators", Domain::choice(&[50, 100, 200]))
                .with("min_samples_split", Domain::choice(&[2, 5, 10]))
                .with("min_samples_leaf", Domain::choice(&[1, 2, 4]))
                .with("max_features", Domain::choice(&["sqrt", "log2"])),
            ModelKind::Xgb => s
                .with("max_depth", Domain::choice(&[3, 4, 6, 8]))
                .with("n_estimators", Domain::choice(&[50, 100, 200]))
                .with("subsample", Domain::choice(&[0.8, 0.9, 1.0]))
                .with("learning_rate", Domain::choice(&[0.01, 0.05, 0.1, 0.2]))
                .with("colsample_bytree", Domain::choice(&[0.6, 0.8, 1.0]))
                .with("gamma", Domain::choice(&[0.0, 0.1, 0.3])),
            ModelKind::Lgbm => s
                .with("max_depth", Domain::choice(&[3, 5, 7]))
                .with("n_estimators", Domain::choice(&[100, 200, 300]))
                .with("min_child_samples", Domain::choice(&[10, 20, 30]))
                .with("subsample", Domain::choice(&[0.8, 0.9, 1.0]))
                .with("learning_rate", Domain::choice(&[0.01, 0.05, 0.1]))
                .with("num_leaves", Domain::choice(&[15, 31, 63]))
                .with("reg_alpha", Domain::choice(&[0.0, 0.5, 1.0]))
                .with("reg_lambda", Domain::choice(&[0.0, 1.0]))
                .with("colsample_bytree", Domain::choice(&[0.8, 0.9, 1.0])),
        }
    }

    /// Every key belongs to the kind and every probe value validates.
    pub fn validate(&self) -> Result<(), LearnError> {
        if self.n_iter == 0 {
            return Err(LearnError::InvalidParams("n_iter must be at least 1".into()));
        }
        for h in &self.pool {
            if h.kind != self.kind {
                return Err(LearnError::InvalidParams(format!("{} configuration in a {} pool", h.kind, self.kind)));
            }
            h.validate()?;
        }
        for (key, dom) in &self.domains {
            match dom {
                Domain::Choice(v) if v.is_empty() => {
                    return Err(LearnError::InvalidParams(format!("{key}: empty choice list")))
                }
                Domain::IntRange(lo, hi) if lo > hi => {
                    return Err(LearnError::InvalidParams(format!("{key}: empty range")))
                }
                Domain::FloatRange(lo, hi) if !(lo < hi) => {
                    return Err(LearnError::InvalidParams(format!("{key}: empty range")))
                }
                _ => {}
            }
            for v in dom.probes() {
                let mut h = HyperParams::tuned(self.kind);
                h.set(key, &v)?;
                h.validate()?;
            }
        }
        Ok(())
    }

    /// Draws `n_iter` configurations. Keys without a domain keep their
    /// tuned values.
    pub fn draw(&self) -> Result<Vec<HyperParams>, LearnError> {
        self.validate()?;
        let mut rng = seed::rng(self.seed, seed::streams::SEARCH);
        if !self.pool.is_empty() {
            let mut order: Vec<usize> = (0..self.pool.len()).collect();
            order.shuffle(&mut rng);
            return Ok((0..self.n_iter).map(|i| self.pool[order[i % order.len()]]).collect());
        }
        (0..self.n_iter)
            .map(|_| {
                let mut h = HyperParams::tuned(self.kind);
                for (key, dom) in &self.domains {
                    h.set(key, &dom.draw(&mut rng))?;
                }
                Ok(h)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub params: HyperParams,
    pub accuracy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: HyperParams,
    pub best_index: usize,
    pub best_accuracy: f64,
    pub trials: Vec<TrialRecord>,
}

impl SearchOutcome {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for t in &self.trials {
            let v = serde_json::to_value(t).expect("plain data");
            writeln!(out, "{}", serde_json::to_string(&v).expect("plain data"))?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error(transparent)]
    Space(#[from] LearnError),
    #[error("every trial failed; first error: {0}")]
    AllTrialsFailed(String),
}

fn run_trial(
    learner: &dyn Learner,
    index: usize,
    params: HyperParams,
    train: &Dataset,
    validation: &Dataset,
    opts: &FitOptions,
) -> TrialRecord {
    let scored = learner
        .fit(train, &params, opts)
        .map_err(EvalError::from)
        .and_then(|m| EvalReport::evaluate(&m, None, "validation", validation));
    match scored {
        Ok(r) => TrialRecord { index, params, accuracy: r.accuracy(), error: None },
        Err(e) => {
            log::warn!("trial {index} failed: {e}");
            TrialRecord { index, params, accuracy: None, error: Some(e.to_string()) }
        }
    }
}

/// Trains every drawn configuration on `train`, scores validation accuracy
/// and keeps the best; equal scores go to the earlier draw. Failed trials
/// are logged and skipped. With `threads > 1` trials run concurrently, but
/// the log is always in draw order.
pub fn random_search(
    learner: &dyn Learner,
    space: &ParamSpace,
    train: &Dataset,
    validation: &Dataset,
    opts: &FitOptions,
    threads: usize,
) -> Result<SearchOutcome, SearchError> {
    let draws = space.draw()?;
    let trial_opts = FitOptions { threads: 1, ..*opts };
    let mut trials: Vec<Option<TrialRecord>> = vec![None; draws.len()];
    let threads = threads.clamp(1, draws.len());
    if threads == 1 {
        for (i, h) in draws.iter().enumerate() {
            trials[i] = Some(run_trial(learner, i, *h, train, validation, &trial_opts));
        }
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..threads)
                .map(|t| {
                    let draws = &draws;
                    let trial_opts = &trial_opts;
                    s.spawn(move || {
                        (t..draws.len())
                            .step_by(threads)
                            .map(|i| run_trial(learner, i, draws[i], train, validation, trial_opts))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for r in h.join().expect("trial thread panicked") {
                    let i = r.index;
                    trials[i] = Some(r);
                }
            }
        });
    }
    let trials: Vec<TrialRecord> = trials.into_iter().map(|t| t.expect("every trial ran")).collect();
    let mut best: Option<(usize, f64)> = None;
    for t in &trials {
        if let Some(a) = t.accuracy {
            if best.is_none_or(|(_, b)| a > b) {
                best = Some((t.index, a));
            }
        }
    }
    match best {
        Some((i, a)) => Ok(SearchOutcome { best: trials[i].params, best_index: i, best_accuracy: a, trials }),
        None => Err(SearchError::AllTrialsFailed(
            trials.iter().find_map(|t| t.error.clone()).unwrap_or_else(|| "no score".into()),
        )),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) * 0.5
    }
}

pub fn host_identity() -> String {
    let cpus = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!("{}-{} cpus={cpus}", std::env::consts::OS, std::env::consts::ARCH)
}

/// Trains and predicts `repeats` times (median timing), sizes the
/// serialized artifact, and scores the last model on `test`.
pub fn benchmark(
    learner: &dyn Learner,
    params: &HyperParams,
    train: &Dataset,
    test: &Dataset,
    opts: &FitOptions,
    repeats: usize,
) -> Result<(EvalReport, ModelArtifact), EvalError> {
    let repeats = repeats.max(1);
    let mut train_t = Vec::with_capacity(repeats);
    let mut infer_t = Vec::with_capacity(repeats);
    let mut last = None;
    for _ in 0..repeats {
        let t0 = Instant::now();
        let model = learner.fit(train, params, opts)?;
        train_t.push(t0.elapsed().as_secs_f64());
        let t1 = Instant::now();
        let pred = if test.n_rows() == 0 { Vec::new() } else { model.predict_classes(test)? };
        infer_t.push(if test.n_rows() == 0 { 0.0 } else { t1.elapsed().as_secs_f64() });
        last = Some((model, pred));
    }
    let (model, pred) = last.expect("at least one repeat");
    let artifact = ModelArtifact::new(
        ArtifactMeta {
            kind: model.kind(),
            hyper: *params,
            seed: opts.seed,
            dataset_fingerprint: dataset_fingerprint(train),
            train_rows: train.n_rows(),
            feature_names: train.feature_names().to_vec(),
        },
        Preprocessing { preprocessor: None, selected: (0..train.n_features()).collect() },
        model,
    );
    let bytes = artifact.to_bytes();
    let id = crate::artifact::model_id_of(&bytes);
    let mut report = EvalReport::from_predictions(artifact.meta.kind.as_str(), Some(id), "test", test, &pred)?;
    report.resources = Some(Resources {
        train_seconds: median(train_t),
        inference_seconds: median(infer_t),
        model_size_bytes: bytes.len() as u64,
        repeats,
        host: host_identity(),
    });
    Ok((report, artifact))
}
