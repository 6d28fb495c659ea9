//! Acceptance run. Prints one PASS/FAIL line per criterion and fails at the
//! end if any required line failed.
//!
//! The IoT-23 reproduction needs a capture on disk: point
//! `EDGEBOT_IOT23_DIR` at a directory of `*conn.log.labeled` files.
//! `EDGEBOT_IOT23_ROWS` overrides the balanced subset size (default 400000).

use std::fs;
use std::io::Cursor;
use std::path::Path;
use std::time::Instant;

use chrono::{TimeZone, Utc};
use edgebot_core::artifact::{ArtifactMeta, ModelArtifact, Preprocessing};
use edgebot_core::boosting::{efb_bundle_binned, goss_sample, logloss_grad_hess, sigmoid, GossConfig};
use edgebot_core::eval::{
    column_stds, confusion, dataset_fingerprint, inject_noise, metrics, ConfusionMatrix, EvalReport, NoiseSpec,
};
use edgebot_core::ingest::{balance_subset, parse_conn_log, write_conn_log, FlowRecord};
use edgebot_core::learner::{EnsembleModel, FitOptions, HyperParams, ModelKind, Registry};
use edgebot_core::preprocess::{prepare, DataSplit, Dataset, Preprocessor};
use edgebot_core::runtime::{classify_stream, Clock, OutputMode, StreamConfig, StreamInput};
use edgebot_core::select::spearman;
use edgebot_core::synth;
use edgebot_core::tree::{
    best_split_exhaustive, best_split_histogram, BinnedMatrix, Criterion, GiniCriterion, NodeHistogram, MAX_BINS,
};
use edgebot_core::tuning;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Ledger {
    failed: Vec<String>,
}

impl Ledger {
    fn new() -> Ledger {
        Ledger { failed: Vec::new() }
    }

    fn check(&mut self, name: &str, ok: bool, detail: String) {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed.push(name.to_string());
        }
    }

    /// Reported but not enforced: proxies and blocked criteria.
    fn note(&self, name: &str, ok: bool, detail: String) {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }

    fn finish(self) {
        assert!(self.failed.is_empty(), "failed: {:?}", self.failed);
    }
}

// ---------- math oracles ----------

/// Average ranks by direct counting: 1 + #smaller + (#equal - 1) / 2.
fn brute_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let less = v.iter().filter(|&&y| y < x).count() as f64;
            let eq = v.iter().filter(|&&y| y == x).count() as f64;
            1.0 + less + (eq - 1.0) / 2.0
        })
        .collect()
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn spearman_oracle(l: &mut Ledger) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut worst_mono: f64 = 0.0;
    let mut pairs = 0;
    while pairs < 1000 {
        let n = rng.random_range(5..80);
        let levels = rng.random_range(2..12);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 - 3.0).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 * 0.7).collect();
        let (Ok(got), true) = (spearman(&x, &y), has_ties(&x) || has_ties(&y)) else {
            continue;
        };
        pairs += 1;
        worst = worst.max((got - pearson(&brute_ranks(&x), &brute_ranks(&y))).abs());
        let fx: Vec<f64> = x.iter().map(|v| (v / 3.0).exp() + v * v * v).collect();
        let gy: Vec<f64> = y.iter().map(|v| 5.0 * v - 11.0).collect();
        worst_mono = worst_mono.max((spearman(&fx, &gy).unwrap() - got).abs());
    }
    l.check("spearman vs rank-then-pearson", worst <= 1e-9, format!("{pairs} tied pairs, max |d| = {worst:.2e} (tol 1e-9)"));
    l.check("spearman monotone invariance", worst_mono <= 1e-12, format!("max |d| = {worst_mono:.2e} (tol 1e-12)"));
}

fn has_ties(v: &[f64]) -> bool {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).any(|w| w[0] == w[1])
}

/// Every (feature, midpoint) pair recounted from scratch.
fn gini_split_oracle(cols: &[Vec<f64>], labels: &[u32], min_leaf: usize) -> Option<(usize, f64, f64)> {
    let gini = |rows: &[usize]| {
        let t = rows.len() as f64;
        let k1 = rows.iter().filter(|&&r| labels[r] == 1).count() as f64;
        let k0 = t - k1;
        1.0 - (k0 * k0 + k1 * k1) / (t * t)
    };
    let n = labels.len();
    let all: Vec<usize> = (0..n).collect();
    let mut best: Option<(usize, f64, f64)> = None;
    for (f, col) in cols.iter().enumerate() {
        let mut vals = col.clone();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = w[0] * 0.5 + w[1] * 0.5;
            let t = if t >= w[0] && t < w[1] { t } else { w[0] };
            let (lt, rt): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&r| col[r] <= t);
            if lt.len() < min_leaf || rt.len() < min_leaf {
                continue;
            }
            let nf = n as f64;
            let g = gini(&all) - lt.len() as f64 / nf * gini(&lt) - rt.len() as f64 / nf * gini(&rt);
            if g > 1e-12 && best.is_none_or(|b| g > b.2) {
                best = Some((f, t, g));
            }
        }
    }
    best
}

fn split_oracles(l: &mut Ledger) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut agree, mut hist_agree, mut hist_cases) = (0, 0, 0);
    for case in 0..200 {
        let n = rng.random_range(2..=200);
        let p = rng.random_range(1..=5);
        // alternate coarse (heavy ties) and fine-grained columns
        let scale = if case % 2 == 0 { 8 } else { 1000 };
        let cols: Vec<Vec<f64>> = (0..p)
            .map(|_| (0..n).map(|_| rng.random_range(0..scale) as f64 / 7.0).collect())
            .collect();
        let labels: Vec<u32> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let min_leaf = rng.random_range(1..4);
        let c = GiniCriterion::new(&labels, 2, min_leaf);
        let rows: Vec<u32> = (0..n as u32).collect();
        let parent = c.stats_of(&rows);
        let feats: Vec<usize> = (0..p).collect();
        let ex = best_split_exhaustive(&c, &cols, &rows, &feats, &parent).map(|s| (s.feature, s.threshold, s.gain));
        let want = gini_split_oracle(&cols, &labels, min_leaf);
        let same = |a: Option<(usize, f64, f64)>, b: Option<(usize, f64, f64)>| match (a, b) {
            (None, None) => true,
            (Some(a), Some(b)) => a.0 == b.0 && a.1 == b.1 && (a.2 - b.2).abs() < 1e-12,
            _ => false,
        };
        agree += same(ex, want) as usize;

        let distinct_ok = cols.iter().all(|c| {
            let mut v = c.clone();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v.len() <= MAX_BINS
        });
        if distinct_ok {
            hist_cases += 1;
            let binned = BinnedMatrix::from_columns(&cols, MAX_BINS);
            let h = NodeHistogram::build(&c, &binned, &rows, &feats);
            let hs = best_split_histogram(&c, &h, &binned, &feats, &parent).map(|s| (s.feature, s.threshold, s.gain));
            hist_agree += same(hs, ex) as usize;
        }
    }
    l.check("exhaustive split vs enumeration", agree == 200, format!("{agree}/200 datasets agree"));
    l.check(
        "histogram split vs exhaustive",
        hist_agree == hist_cases && hist_cases > 0,
        format!("{hist_agree}/{hist_cases} datasets with <= {MAX_BINS} distinct values agree"),
    );
}

fn gradient_oracle(l: &mut Ledger) {
    // loss in the margin, evaluated without overflow
    let loss = |m: f64, y: f64| {
        let softplus = if m > 0.0 { m + (-m).exp().ln_1p() } else { m.exp().ln_1p() };
        softplus - y * m
    };
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for i in 1..100 {
        let p = i as f64 / 100.0;
        let m = (p / (1.0 - p)).ln();
        for y in [0u32, 1] {
            let (g, h) = logloss_grad_hess(sigmoid(m), y).unwrap();
            let yf = y as f64;
            let e1 = 1e-5;
            let g_fd = (loss(m + e1, yf) - loss(m - e1, yf)) / (2.0 * e1);
            let e2 = 1e-3;
            let h_fd = (loss(m + e2, yf) - 2.0 * loss(m, yf) + loss(m - e2, yf)) / (e2 * e2);
            worst = worst.max(((g - g_fd) / g_fd).abs()).max(((h - h_fd) / h_fd).abs());
            points += 1;
        }
    }
    l.check(
        "boosting gradients vs finite differences",
        worst <= 1e-5,
        format!("{points} (p, y) points, max relative error {worst:.2e} (tol 1e-5)"),
    );
}

fn goss_oracle(l: &mut Ledger) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let grad: Vec<f64> = (0..2000).map(|_| rng.random_range(-1.0..1.0) * rng.random_range(0.0f64..1.0).powi(3)).collect();
    let truth: f64 = grad.iter().sum();
    let cfg = GossConfig::default();
    let sums: Vec<f64> = (0..1000)
        .map(|_| {
            let s = goss_sample(&grad, &cfg, &mut rng).unwrap();
            s.rows.iter().zip(&s.weights).map(|(&r, &w)| w * grad[r as usize]).sum()
        })
        .collect();
    let k = sums.len() as f64;
    let mean = sums.iter().sum::<f64>() / k;
    let var = sums.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0);
    let se = (var / k).sqrt();
    let z = (mean - truth).abs() / se;
    l.check(
        "GOSS weighted gradient sum unbiased",
        z <= 3.0,
        format!("1000 resamplings, |mean - truth| = {:.4} = {z:.2} SE (tol 3)", (mean - truth).abs()),
    );
}

fn efb_oracle(l: &mut Ledger) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, p) = (3000, 12);
    // mutually exclusive sparse columns plus two that collide with them
    let owner: Vec<usize> = (0..n).map(|_| rng.random_range(0..p + 4)).collect();
    let mut cols: Vec<Vec<f64>> = (0..p)
        .map(|f| (0..n).map(|i| if owner[i] == f { rng.random_range(1..40) as f64 } else { 0.0 }).collect())
        .collect();
    for _ in 0..2 {
        cols.push((0..n).map(|_| if rng.random_bool(0.3) { rng.random_range(1..5) as f64 } else { 0.0 }).collect());
    }
    let binned = BinnedMatrix::from_columns(&cols, MAX_BINS);
    let bundle = efb_bundle_binned(&binned, 0);
    let encoded = bundle.encode(&binned);
    let mut exact = true;
    let mut merged = 0;
    for (b, col) in bundle.multi_member().zip(&encoded) {
        exact &= b.conflicts == 0;
        for (m, bins) in edgebot_core::boosting::decode(b, &col.codes).iter().enumerate() {
            exact &= bins.as_slice() == binned.bins(b.members[m]);
            merged += 1;
        }
    }
    l.check(
        "EFB round trip at conflict budget 0",
        exact && merged >= p,
        format!("{merged} bundled features decoded, exact = {exact}"),
    );
}

fn metric_identities(l: &mut Ledger) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for _ in 0..10_000 {
        let cm = ConfusionMatrix {
            tp: rng.random_range(0..500),
            fp: rng.random_range(0..500),
            fn_: rng.random_range(0..500),
            tn: rng.random_range(0..500),
        };
        let Ok(m) = metrics(&cm) else { continue };
        checked += 1;
        let mut d = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
            (None, None) => {}
            _ => worst = f64::INFINITY,
        };
        let acc = (cm.tp + cm.tn) as f64 / cm.total() as f64;
        d(m.accuracy, Some(acc));
        let f1 = match (m.precision, m.recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => m.f1,
        };
        d(m.f1, f1);
        d(m.fnr, m.recall.map(|r| 1.0 - r));
        d(m.fpr, m.specificity.map(|s| 1.0 - s));
    }
    // the confusion counter itself against a direct tally
    let pred: Vec<u32> = (0..1000).map(|_| rng.random_range(0..2)).collect();
    let truth: Vec<u32> = (0..1000).map(|_| rng.random_range(0..2)).collect();
    let cm = confusion(&pred, &truth).unwrap();
    let tally = |p, t| pred.iter().zip(&truth).filter(|&(&a, &b)| a == p && b == t).count() as u64;
    let counts_ok = (cm.tp, cm.fp, cm.fn_, cm.tn) == (tally(1, 1), tally(1, 0), tally(0, 1), tally(0, 0));
    l.check(
        "metric identities",
        worst <= 1e-12 && counts_ok,
        format!("{checked} confusion matrices, max |d| = {worst:.2e} (tol 1e-12), tally ok = {counts_ok}"),
    );
}

// ---------- end-to-end ----------

struct Fitted {
    kind: ModelKind,
    model: EnsembleModel,
    train_seconds: f64,
}

fn fit_all(train: &Dataset, seed: u64) -> Vec<Fitted> {
    let registry = Registry::builtin();
    ModelKind::ALL
        .iter()
        .map(|&kind| {
            let learner = registry.get(kind.as_str()).unwrap();
            let t = Instant::now();
            let model = learner
                .fit(train, &learner.default_params(), &FitOptions { seed, ..FitOptions::default() })
                .unwrap();
            Fitted { kind, model, train_seconds: t.elapsed().as_secs_f64() }
        })
        .collect()
}

/// Mean accuracy over `seeds` Gaussian perturbations of `test`.
fn noisy_accuracy(model: &EnsembleModel, train: &Dataset, test: &Dataset, sigma: f64, seeds: u64) -> f64 {
    let stds = column_stds(train);
    let total: f64 = (0..seeds)
        .map(|s| {
            let noisy = inject_noise(test, &NoiseSpec::gaussian(sigma, 1000 + s), &stds).unwrap();
            EvalReport::evaluate(model, None, "noisy", &noisy).unwrap().accuracy().unwrap()
        })
        .sum();
    total / seeds as f64
}

fn synthetic_end_to_end(l: &mut Ledger, split: &DataSplit, fitted: &[Fitted]) {
    let (train, test) = (&split.train, &split.test);
    println!(
        "  synthetic data: {} features, train {} / test {} rows, test positives {}",
        train.n_features(),
        train.n_rows(),
        test.n_rows(),
        test.positive_count()
    );
    for f in fitted {
        let clean = EvalReport::evaluate(&f.model, None, "test", test).unwrap().accuracy().unwrap();
        let noisy = noisy_accuracy(&f.model, train, test, 0.1, 10);
        l.check(
            &format!("synthetic {} test accuracy", f.kind),
            clean >= 0.99,
            format!("{clean:.4} (need >= 0.99)"),
        );
        l.check(
            &format!("synthetic {} noise degrades accuracy", f.kind),
            noisy < clean,
            format!("clean {clean:.4} -> sigma 0.1 mean over 10 seeds {noisy:.4}"),
        );
    }
}

fn artifact_size(f: &Fitted, train: &Dataset) -> usize {
    ModelArtifact::new(
        ArtifactMeta {
            kind: f.kind,
            hyper: HyperParams::tuned(f.kind),
            seed: 0,
            dataset_fingerprint: dataset_fingerprint(train),
            train_rows: train.n_rows(),
            feature_names: train.feature_names().to_vec(),
        },
        Preprocessing { preprocessor: None, selected: (0..train.n_features()).collect() },
        f.model.clone(),
    )
    .to_bytes()
    .len()
}

/// Size and timing order; `enforce` decides whether lines count.
fn resource_ordering(l: &mut Ledger, label: &str, train: &Dataset, big_test: &Dataset, fitted: &[Fitted], enforce: bool) {
    let by = |k: ModelKind| fitted.iter().find(|f| f.kind == k).unwrap();
    let (rf, xgb, lgbm) = (by(ModelKind::Rf), by(ModelKind::Xgb), by(ModelKind::Lgbm));
    let size = |f: &Fitted| artifact_size(f, train);
    let (s_rf, s_xgb, s_lgbm) = (size(rf), size(xgb), size(lgbm));
    let infer = |f: &Fitted| {
        let t = Instant::now();
        f.model.predict_classes(big_test).unwrap();
        t.elapsed().as_secs_f64()
    };
    let (i_rf, i_xgb, i_lgbm) = (infer(rf), infer(xgb), infer(lgbm));
    let mut line = |name: &str, ok: bool, detail: String| {
        let name = format!("{label} {name}");
        if enforce {
            l.check(&name, ok, detail)
        } else {
            l.note(&name, ok, detail)
        }
    };
    line(
        "size order xgb < lgbm < rf",
        s_xgb < s_lgbm && s_lgbm < s_rf,
        format!("xgb {s_xgb} B, lgbm {s_lgbm} B, rf {s_rf} B"),
    );
    line(
        "train time order lgbm < rf < xgb",
        lgbm.train_seconds < rf.train_seconds && rf.train_seconds < xgb.train_seconds,
        format!("lgbm {:.3} s, rf {:.3} s, xgb {:.3} s", lgbm.train_seconds, rf.train_seconds, xgb.train_seconds),
    );
    line(
        &format!("inference over {} rows < 1 s", big_test.n_rows()),
        i_rf < 1.0 && i_xgb < 1.0 && i_lgbm < 1.0,
        format!("rf {i_rf:.3} s, xgb {i_xgb:.3} s, lgbm {i_lgbm:.3} s"),
    );
}

// ---------- reproduction on IoT-23 ----------

fn iot23_records(dir: &Path) -> Vec<FlowRecord> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .expect("EDGEBOT_IOT23_DIR readable")
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.contains("conn.log")))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for f in files {
        let reader = std::io::BufReader::new(fs::File::open(&f).unwrap());
        out.extend(parse_conn_log(reader).unwrap_or_else(|e| panic!("{}: {e}", f.display())));
    }
    out
}

fn iot23(l: &mut Ledger) {
    let Some(dir) = std::env::var_os("EDGEBOT_IOT23_DIR") else {
        let why = "blocked: no IoT-23 capture available (set EDGEBOT_IOT23_DIR)".to_string();
        l.note("IoT-23 reproduction accuracy/detection/noise", false, why.clone());
        l.note("IoT-23 resource ordering", false, why);
        return;
    };
    let rows: usize = std::env::var("EDGEBOT_IOT23_ROWS").ok().and_then(|v| v.parse().ok()).unwrap_or(400_000);
    let seed = 42;
    let records = iot23_records(Path::new(&dir));
    let subset = balance_subset(&records, rows, 0.5, seed).unwrap();
    let split = prepare(subset, seed).unwrap().split;
    let fitted = fit_all(&split.train, seed);
    // test accuracy and detection probability in percent
    let target = |k: ModelKind| match k {
        ModelKind::Rf => (99.0, 98.8),
        ModelKind::Xgb => (97.9, 98.2),
        ModelKind::Lgbm => (98.7, 98.3),
    };
    for f in &fitted {
        let r = EvalReport::evaluate(&f.model, None, "test", &split.test).unwrap();
        let acc = 100.0 * r.accuracy().unwrap();
        let dp = 100.0 * r.detection_probability.unwrap();
        let (ta, td) = target(f.kind);
        l.check(&format!("IoT-23 {} test accuracy", f.kind), (acc - ta).abs() <= 1.5, format!("{acc:.2} vs {ta} +- 1.5"));
        l.check(&format!("IoT-23 {} detection probability", f.kind), (dp - td).abs() <= 1.5, format!("{dp:.2} vs {td} +- 1.5"));
        let noisy = 100.0 * noisy_accuracy(&f.model, &split.train, &split.test, 0.1, 10);
        let drop = acc - noisy;
        l.check(&format!("IoT-23 {} noise drop", f.kind), (1.0..=5.0).contains(&drop), format!("{drop:.2} points (need 1 to 5)"));
    }
    resource_ordering(l, "IoT-23", &split.train, &split.test, &fitted, true);
}

// ---------- determinism and stream robustness ----------

fn determinism(l: &mut Ledger, split: &DataSplit) {
    let registry = Registry::builtin();
    let mut identical = true;
    for kind in ModelKind::ALL {
        let learner = registry.get(kind.as_str()).unwrap();
        let params = learner.default_params();
        let opts = FitOptions { seed: 9, ..FitOptions::default() };
        let run = || {
            let (mut report, art) = tuning::benchmark(learner, &params, &split.train, &split.test, &opts, 1).unwrap();
            report.resources = None;
            (art.to_bytes(), report.to_json())
        };
        let (a, b) = (run(), run());
        identical &= a == b;
    }
    l.check("identical seeds give identical artifacts and reports", identical, format!("rf, xgb, lgbm byte-compared: {identical}"));
}

fn corrupt(line: &str, k: usize) -> String {
    let fields: Vec<&str> = line.split('\t').collect();
    match k % 5 {
        0 => fields[..fields.len() - 3].join("\t"),
        1 => {
            let mut f = fields.clone();
            f[5] = "not-a-port";
            f.join("\t")
        }
        2 => "garbage line without tabs".to_string(),
        3 => {
            let mut f = fields.clone();
            f[9] = "-12x";
            f.join("\t")
        }
        _ => format!("{line}\textra\tfields"),
    }
}

fn stream_robustness(l: &mut Ledger, bench: &synth::Benchmark, model: &EnsembleModel) {
    let train = &bench.split.train;
    let art = ModelArtifact::new(
        ArtifactMeta {
            kind: model.kind(),
            hyper: HyperParams::tuned(model.kind()),
            seed: 0,
            dataset_fingerprint: dataset_fingerprint(train),
            train_rows: train.n_rows(),
            feature_names: train.feature_names().to_vec(),
        },
        Preprocessing { preprocessor: Some(bench.preprocessor.clone()), selected: bench.selected.clone() },
        model.clone(),
    );
    let log = write_conn_log(&synth::flows(10_000, 0.5, 77));
    let (header, data): (Vec<&str>, Vec<&str>) = log.lines().partition(|l| l.starts_with('#'));
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut rng);
    let bad: std::collections::BTreeSet<usize> = idx[..data.len() / 20].iter().copied().collect();
    let mut text = header.join("\n") + "\n";
    for (i, line) in data.iter().enumerate() {
        if bad.contains(&i) {
            text.push_str(&corrupt(line, i));
        } else {
            text.push_str(line);
        }
        text.push('\n');
    }
    let cfg = StreamConfig {
        mode: OutputMode::Full,
        workers: 4,
        clock: Clock::Fixed(Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap()),
        ..StreamConfig::default()
    };
    let run = || {
        let mut out = Vec::new();
        let stats = classify_stream(&art, StreamInput::Reader(Box::new(Cursor::new(text.clone()))), &mut out, &cfg).unwrap();
        (stats, String::from_utf8(out).unwrap())
    };
    let (stats, out) = run();
    let records: Vec<serde_json::Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let errors = records.iter().filter(|r| r["type"] == "error").count();
    let lines: Vec<u64> = records.iter().map(|r| r["line"].as_u64().unwrap()).collect();
    let first = header.len() as u64 + 1;
    let in_order = lines.iter().enumerate().all(|(i, &n)| n == first + i as u64);
    let ok = records.len() == data.len() && errors == bad.len() && in_order && stats.errors as usize == bad.len();
    l.check(
        "stream survives 5% malformed lines, one record per line",
        ok,
        format!("{} data lines, {} records, {errors} errors of {} malformed, in order = {in_order}", data.len(), records.len(), bad.len()),
    );
    let (_, again) = run();
    l.check("stream output reproducible", again == out, format!("{} bytes compared", out.len()));
}

fn proxy_test_rows(pre: &Preprocessor, selected: &[usize], rows: usize) -> Dataset {
    pre.transform(&synth::flows(rows, 0.5, 4242)).project(selected).unwrap()
}

#[test]
fn acceptance() {
    let mut l = Ledger::new();
    let t0 = Instant::now();
    spearman_oracle(&mut l);
    split_oracles(&mut l);
    gradient_oracle(&mut l);
    goss_oracle(&mut l);
    efb_oracle(&mut l);
    metric_identities(&mut l);
    println!("  math oracles took {:.1} s", t0.elapsed().as_secs_f64());

    let t1 = Instant::now();
    let bench = synth::benchmark(20_000, 42).unwrap();
    let fitted = fit_all(&bench.split.train, 42);
    synthetic_end_to_end(&mut l, &bench.split, &fitted);
    println!("  synthetic end-to-end took {:.1} s", t1.elapsed().as_secs_f64());

    iot23(&mut l);
    let big = proxy_test_rows(&bench.preprocessor, &bench.selected, 80_000);
    resource_ordering(&mut l, "synthetic proxy", &bench.split.train, &big, &fitted, false);

    determinism(&mut l, &bench.split);
    stream_robustness(&mut l, &bench, &fitted[0].model);
    l.finish();
}
