use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, Utc};
use edgebot_core::artifact::{ArtifactMeta, ModelArtifact, Preprocessing};
use edgebot_core::boosting::SearchKind;
use edgebot_core::eval::{
    canonical_json, column_stds, dataset_fingerprint, inject_noise, render_table, EvalReport, NoiseSpec,
};
use edgebot_core::ingest::{balance_subset, parse_conn_log, parse_csv, records_from_table, write_conn_log, FlowRecord};
use edgebot_core::learner::{EnsembleModel, FitOptions, HyperParams, Learner, Registry};
use edgebot_core::preprocess::{prepare, read_dataset_csv, write_dataset_csv, Dataset, DatasetMeta, Preprocessor};
use edgebot_core::runtime::{classify_stream, Clock, OutputMode, StreamConfig, StreamError, StreamInput};
use edgebot_core::select::{
    correlation_matrix, forest_importance, model_importance, select_nonzero, ImportanceMode, Selection,
};
use edgebot_core::synth;
use edgebot_core::tuning::{self, random_search, ParamSpace};
use serde_json::json;

use crate::error::CliError;
use crate::{
    BenchmarkArgs, Command, DumpArgs, EvaluateArgs, IngestArgs, InputFormat, NoiseArgs, PredictArgs,
    PreprocessArgs, SearchArg, SelectArgs, ServeArgs, Settings, StreamArgs, SynthArgs, TrainArgs, TuneArgs,
};

pub fn run(cmd: &Command, s: &Settings) -> Result<(), CliError> {
    match cmd {
        Command::Ingest(a) => ingest(a, s),
        Command::Synth(a) => synth_flows(a, s),
        Command::Preprocess(a) => preprocess(a, s),
        Command::SelectFeatures(a) => select_features(a, s),
        Command::Train(a) => train(a, s),
        Command::Tune(a) => tune(a, s),
        Command::Evaluate(a) => evaluate(a, s),
        Command::NoiseTest(a) => noise_test(a, s),
        Command::Benchmark(a) => benchmark(a, s),
        Command::Serve(a) => serve(a, s),
        Command::Predict(a) => predict(a, s),
        Command::Dump(a) => dump(a),
        Command::Learners => {
            for name in Registry::builtin().names() {
                println!("{name}");
            }
            Ok(())
        }
    }
}

fn out_path(s: &Settings, name: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(&s.output_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", s.output_dir.display())))?;
    Ok(s.output_dir.join(name))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    if path.as_os_str() == "-" {
        let mut buf = String::new();
        io::stdin().read_to_string(&mut buf)?;
        return Ok(buf);
    }
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn sidecar_of(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Loads a dataset CSV and its JSON sidecar.
pub fn load_dataset(path: &Path) -> Result<(Dataset, DatasetMeta), CliError> {
    let side = sidecar_of(path);
    let meta: DatasetMeta = serde_json::from_str(&read_text(&side)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", side.display())))?;
    let file = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let ds = read_dataset_csv(BufReader::new(file), &meta)
        .map_err(|e| CliError::from(e).context(path))?;
    Ok((ds, meta))
}

fn save_dataset(path: &Path, ds: &Dataset, meta: &DatasetMeta) -> Result<(), CliError> {
    let mut w = create(path)?;
    write_dataset_csv(ds, &mut w)?;
    w.flush()?;
    write_text(&sidecar_of(path), &canonical_json(meta))
}

fn read_flows(path: &Path, format: InputFormat) -> Result<Vec<FlowRecord>, CliError> {
    let text = read_text(path)?;
    let zeek = match format {
        InputFormat::Zeek => true,
        InputFormat::Csv => false,
        InputFormat::Auto => text
            .lines()
            .find(|l| !l.trim().is_empty())
            .is_some_and(|l| l.starts_with('#')),
    };
    let records = if zeek {
        parse_conn_log(text.as_bytes())
    } else {
        parse_csv(text.as_bytes(), true).and_then(|t| records_from_table(&t))
    };
    records.map_err(|e| CliError::from(e).context(path))
}

fn load_selection(path: &Path) -> Result<Selection, CliError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn apply_selection(ds: Dataset, sel: Option<&Selection>) -> Result<Dataset, CliError> {
    match sel {
        Some(sel) => Ok(sel.project(&ds)?),
        None => Ok(ds),
    }
}

fn fit_options(s: &Settings, search: Option<SearchArg>) -> FitOptions {
    FitOptions {
        seed: s.seed,
        threads: s.threads,
        search: search.map(|k| match k {
            SearchArg::Histogram => SearchKind::Histogram,
            SearchArg::Exhaustive => SearchKind::Exhaustive,
        }),
    }
}

/// Learner defaults, then `<learner>.<key>` config entries.
fn configured_params(learner: &dyn Learner, s: &Settings) -> Result<HyperParams, CliError> {
    let mut p = learner.default_params();
    for (key, value, origin) in s.config.section(learner.name()) {
        p.set(&key, &value).map_err(|e| CliError::Usage(format!("{origin}: {e}")))?;
    }
    Ok(p)
}

fn ingest(a: &IngestArgs, s: &Settings) -> Result<(), CliError> {
    let mut records = read_flows(&a.input, a.format)?;
    log::info!("parsed {} flows", records.len());
    if let Some(n) = a.subset {
        records = balance_subset(&records, n, a.attack_ratio, s.seed)?;
    }
    let path = out_path(s, &a.out)?;
    write_text(&path, &write_conn_log(&records))?;
    println!("{} flows -> {}", records.len(), path.display());
    Ok(())
}

fn synth_flows(a: &SynthArgs, s: &Settings) -> Result<(), CliError> {
    if !(a.attack_ratio > 0.0 && a.attack_ratio < 1.0) {
        return Err(CliError::Usage(format!("attack ratio must lie in (0, 1), got {}", a.attack_ratio)));
    }
    let records = synth::flows(a.rows, a.attack_ratio, s.seed);
    let path = out_path(s, &a.out)?;
    write_text(&path, &write_conn_log(&records))?;
    println!("{} flows -> {}", records.len(), path.display());
    Ok(())
}

fn preprocess(a: &PreprocessArgs, s: &Settings) -> Result<(), CliError> {
    let records = read_flows(&a.input, a.format)?;
    let prepared = prepare(records, s.seed)?;
    let pp = &prepared.preprocessor;
    let split = &prepared.split;
    for (name, ds) in [("train", &split.train), ("validation", &split.validation), ("test", &split.test)] {
        let ds = if a.keep.is_empty() { ds.clone() } else { ds.project_names(&a.keep)? };
        let meta = DatasetMeta {
            encoding: Some(pp.encoding.clone()),
            scaler: Some(pp.scaler.clone()),
            split_seed: Some(s.seed),
            ..DatasetMeta::describe(&ds)
        };
        save_dataset(&out_path(s, &format!("{name}.csv"))?, &ds, &meta)?;
    }
    write_text(&out_path(s, "clean_report.json")?, &canonical_json(&prepared.clean_report))?;
    let r = &prepared.clean_report;
    println!(
        "{} flows in, {} duplicates and {} inconsistent removed; train {} / validation {} / test {}",
        r.input,
        r.duplicates_removed,
        r.inconsistent_dropped,
        split.train.n_rows(),
        split.validation.n_rows(),
        split.test.n_rows()
    );
    Ok(())
}

fn select_features(a: &SelectArgs, s: &Settings) -> Result<(), CliError> {
    let mode: ImportanceMode = a.mode.parse()?;
    let (data, _) = load_dataset(&a.data)?;

    let corr = correlation_matrix(&data)?;
    corr.write_csv(create(&out_path(s, "correlation.csv")?)?)?;
    corr.write_long(create(&out_path(s, "correlation_long.csv")?)?)?;
    write_text(&out_path(s, "correlation.json")?, &corr.to_json())?;

    let (model, names, id) = match &a.model {
        Some(path) => {
            let art = ModelArtifact::read_file(path)?;
            let id = art.model_id();
            (art.model, art.meta.feature_names, id)
        }
        None => {
            let registry = Registry::builtin();
            let learner = registry.get(&a.learner)?;
            let params = configured_params(learner, s)?;
            let model = learner.fit(&data, &params, &fit_options(s, None))?;
            (model, data.feature_names().to_vec(), learner.name().to_string())
        }
    };
    let report = match &model {
        EnsembleModel::Forest(f) => forest_importance(f, &names, &id, mode)?,
        EnsembleModel::Gbdt(g) => model_importance(g, &names, &id, mode)?,
    };
    report.write_csv(create(&out_path(s, "importance.csv")?)?)?;
    report.write_long(create(&out_path(s, "importance_long.csv")?)?)?;
    write_text(&out_path(s, "importance.json")?, &report.to_json())?;
    let selection = select_nonzero(&report)?;
    write_text(&out_path(s, "selection.json")?, &canonical_json(&selection))?;
    for (name, score) in report.ranked() {
        println!("{name:<24} {score:.6}");
    }
    println!("selected {} of {} features", selection.names.len(), names.len());
    Ok(())
}

fn preprocessor_of(meta: &DatasetMeta) -> Option<Preprocessor> {
    match (&meta.encoding, &meta.scaler) {
        (Some(encoding), Some(scaler)) => Some(Preprocessor {
            encoding: encoding.clone(),
            scaler: scaler.clone(),
        }),
        _ => None,
    }
}

fn train(a: &TrainArgs, s: &Settings) -> Result<(), CliError> {
    let registry = Registry::builtin();
    let learner = registry.get(&a.model)?;
    let mut params = if a.params == "defaults" {
        configured_params(learner, s)?
    } else {
        let path = Path::new(&a.params);
        let p: HyperParams = serde_json::from_str(&read_text(path)?)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if p.kind != learner.kind() {
            return Err(CliError::Usage(format!(
                "{}: {} hyperparameters given to the {} learner",
                path.display(),
                p.kind,
                learner.name()
            )));
        }
        p
    };
    for kv in &a.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got `{kv}`")))?;
        params.set(k.trim(), v.trim()).map_err(|e| CliError::Usage(format!("--set {kv}: {e}")))?;
    }
    params.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let selection = a.selection.as_deref().map(load_selection).transpose()?;
    let (data, meta) = load_dataset(&a.data)?;
    let data = apply_selection(data, selection.as_ref())?;
    let opts = fit_options(s, a.search);
    let model = learner.fit(&data, &params, &opts)?;

    let preprocessor = preprocessor_of(&meta);
    let selected = match &preprocessor {
        Some(pp) => {
            let all = pp.feature_names();
            data.feature_names()
                .iter()
                .map(|n| {
                    all.iter()
                        .position(|m| m == n)
                        .ok_or_else(|| CliError::Data(format!("feature `{n}` is not produced by the sidecar's preprocessor")))
                })
                .collect::<Result<Vec<_>, _>>()?
        }
        None => (0..data.n_features()).collect(),
    };
    let artifact = ModelArtifact::new(
        ArtifactMeta {
            kind: learner.kind(),
            hyper: params,
            seed: s.seed,
            dataset_fingerprint: dataset_fingerprint(&data),
            train_rows: data.n_rows(),
            feature_names: data.feature_names().to_vec(),
        },
        Preprocessing { preprocessor, selected },
        model,
    );
    let path = out_path(s, &a.out)?;
    let size = artifact.write_file(&path)?;
    let id = artifact.model_id();
    println!("{} model {id} ({size} bytes) -> {}", learner.name(), path.display());

    if let Some(vpath) = &a.validation {
        let (val, _) = load_dataset(vpath)?;
        let val = val.project_names(data.feature_names())?;
        let report = EvalReport::evaluate(&artifact.model, Some(id), "validation", &val)?;
        write_text(&out_path(s, "validation_report.json")?, &report.to_json())?;
        let table = render_table(std::slice::from_ref(&report));
        write_text(&out_path(s, "validation_report.txt")?, &table)?;
        print!("{table}");
    }
    Ok(())
}

fn tune(a: &TuneArgs, s: &Settings) -> Result<(), CliError> {
    let registry = Registry::builtin();
    let learner = registry.get(&a.model)?;
    let selection = a.selection.as_deref().map(load_selection).transpose()?;
    let (train, _) = load_dataset(&a.data)?;
    let train = apply_selection(train, selection.as_ref())?;
    let (val, _) = load_dataset(&a.validation)?;
    let val = val.project_names(train.feature_names())?;
    let space = ParamSpace::default_for(learner.kind(), a.n_iter, s.seed);
    let opts = FitOptions {
        threads: 1,
        ..fit_options(s, None)
    };
    let outcome = random_search(learner, &space, &train, &val, &opts, s.threads)?;
    let mut w = create(&out_path(s, "trials.jsonl")?)?;
    outcome.write_jsonl(&mut w)?;
    w.flush()?;
    write_text(&out_path(s, "best_params.json")?, &canonical_json(&outcome.best))?;
    println!(
        "best trial {} of {}: validation accuracy {:.6} with {}",
        outcome.best_index,
        outcome.trials.len(),
        outcome.best_accuracy,
        outcome.best
    );
    Ok(())
}

/// Loads a dataset restricted to the artifact's training columns.
fn dataset_for(art: &ModelArtifact, path: &Path) -> Result<Dataset, CliError> {
    let (ds, _) = load_dataset(path)?;
    Ok(ds.project_names(&art.meta.feature_names)?)
}

fn evaluate(a: &EvaluateArgs, s: &Settings) -> Result<(), CliError> {
    let art = ModelArtifact::read_file(&a.model)?;
    let data = dataset_for(&art, &a.data)?;
    let dataset_name = a.data.file_stem().and_then(|n| n.to_str()).unwrap_or("data");
    let report = EvalReport::evaluate(&art.model, Some(art.model_id()), dataset_name, &data)?;
    write_text(&out_path(s, &format!("{}.json", a.name))?, &report.to_json())?;
    let table = render_table(std::slice::from_ref(&report));
    write_text(&out_path(s, &format!("{}.txt", a.name))?, &table)?;
    print!("{table}");
    Ok(())
}

fn noise_test(a: &NoiseArgs, s: &Settings) -> Result<(), CliError> {
    if a.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let art = ModelArtifact::read_file(&a.model)?;
    let id = art.model_id();
    let data = dataset_for(&art, &a.data)?;
    let stds = column_stds(&dataset_for(&art, &a.train)?);
    let clean = EvalReport::evaluate(&art.model, Some(id.clone()), "clean", &data)?;
    let mut noisy = Vec::with_capacity(a.seeds as usize);
    for k in 0..a.seeds {
        let spec = NoiseSpec::gaussian(a.sigma, s.seed.wrapping_add(k));
        let perturbed = inject_noise(&data, &spec, &stds)?;
        let mut r = EvalReport::evaluate(&art.model, Some(id.clone()), &format!("noisy-{k}"), &perturbed)?;
        r.noise = Some(spec);
        noisy.push(r);
    }
    let accs: Vec<f64> = noisy.iter().filter_map(EvalReport::accuracy).collect();
    let mean = (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64);
    let drop = clean.accuracy().zip(mean).map(|(c, m)| c - m);
    let summary = json!({
        "clean": clean,
        "noisy": noisy,
        "sigma": a.sigma,
        "clean_accuracy": clean.accuracy(),
        "mean_noisy_accuracy": mean,
        "accuracy_drop": drop,
    });
    write_text(&out_path(s, "noise_report.json")?, &canonical_json(&summary))?;
    let mut all = vec![clean];
    all.extend(noisy);
    let mut table = render_table(&all);
    let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.6}"));
    table.push_str(&format!("mean noisy accuracy: {}\naccuracy drop: {}\n", fmt(mean), fmt(drop)));
    write_text(&out_path(s, "noise_report.txt")?, &table)?;
    print!("{table}");
    Ok(())
}

fn benchmark(a: &BenchmarkArgs, s: &Settings) -> Result<(), CliError> {
    let registry = Registry::builtin();
    let selection = a.selection.as_deref().map(load_selection).transpose()?;
    let (train, _) = load_dataset(&a.data_dir.join("train.csv"))?;
    let train = apply_selection(train, selection.as_ref())?;
    let (test, _) = load_dataset(&a.data_dir.join("test.csv"))?;
    let test = test.project_names(train.feature_names())?;
    let mut reports = Vec::with_capacity(a.models.len());
    for name in &a.models {
        let learner = registry.get(name)?;
        let params = configured_params(learner, s)?;
        let (report, _) = tuning::benchmark(learner, &params, &train, &test, &fit_options(s, None), a.repeats)?;
        reports.push(report);
    }
    write_text(&out_path(s, "benchmark.json")?, &canonical_json(&reports))?;
    let table = render_table(&reports);
    write_text(&out_path(s, "benchmark.txt")?, &table)?;
    print!("{table}");
    Ok(())
}

fn stream_config(a: &StreamArgs, s: &Settings) -> Result<StreamConfig, CliError> {
    let workers = match a.workers {
        Some(w) => w,
        None => s.config.parse("serve.workers")?.unwrap_or(s.threads),
    };
    let clock = match &a.fixed_time {
        Some(t) => Clock::Fixed(
            DateTime::parse_from_rfc3339(t)
                .map_err(|e| CliError::Usage(format!("--fixed-time `{t}`: {e}")))?
                .with_timezone(&Utc),
        ),
        None => Clock::Wall,
    };
    Ok(StreamConfig {
        mode: if a.alerts_only { OutputMode::AlertsOnly } else { OutputMode::Full },
        workers: workers.max(1),
        clock,
        ..StreamConfig::default()
    })
}

fn run_stream(a: &StreamArgs, cfg: &StreamConfig) -> Result<(), CliError> {
    let art = ModelArtifact::read_file(&a.model)?;
    if art.preprocessing.preprocessor.is_none() {
        return Err(CliError::Artifact("artifact carries no preprocessing; train it from a preprocessed dataset".into()));
    }
    let reader: Box<dyn BufRead + Send> = if a.input.as_os_str() == "-" {
        Box::new(BufReader::new(io::stdin()))
    } else {
        let f = File::open(&a.input).map_err(|e| CliError::Io(format!("{}: {e}", a.input.display())))?;
        Box::new(BufReader::new(f))
    };
    let stats = match &a.output {
        Some(path) => {
            let mut w = create(path)?;
            let st = classify_stream(&art, StreamInput::Reader(reader), &mut w, cfg)?;
            w.flush()?;
            st
        }
        None => {
            let mut w = BufWriter::new(io::stdout().lock());
            match classify_stream(&art, StreamInput::Reader(reader), &mut w, cfg) {
                // a closed pipe (`| head`) is the reader's choice to stop
                Err(StreamError::SinkClosed(e)) if e.kind() == io::ErrorKind::BrokenPipe => return Ok(()),
                r => {
                    let st = r?;
                    w.flush()?;
                    st
                }
            }
        }
    };
    eprintln!(
        "{} data lines: {} attacks, {} errors, {} records written",
        stats.data_lines, stats.attacks, stats.errors, stats.written
    );
    Ok(())
}

fn serve(a: &ServeArgs, s: &Settings) -> Result<(), CliError> {
    let mut cfg = stream_config(&a.stream, s)?;
    cfg.follow = a.follow;
    cfg.poll_interval = Duration::from_millis(a.poll_ms.max(1));
    if a.follow && a.stream.input.as_os_str() == "-" {
        return Err(CliError::Usage("--follow needs a file, not stdin".into()));
    }
    run_stream(&a.stream, &cfg)
}

fn predict(a: &PredictArgs, s: &Settings) -> Result<(), CliError> {
    let cfg = stream_config(&a.stream, s)?;
    run_stream(&a.stream, &cfg)
}

fn dump(a: &DumpArgs) -> Result<(), CliError> {
    let art = ModelArtifact::read_file(&a.model)?;
    print!("{}", art.dump_text());
    Ok(())
}
