use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use weld_core::dataset::{read_dataset_csv, read_labeled_csv, write_dataset_csv};
use weld_core::eval::{compare_models, evaluate as score, render_table, split_dataset, EvalReport};
use weld_core::mlp::{init_mlp, train_mlp as fit_mlp, MlpModel};
use weld_core::persist::{load_model, save_model, Classifier, ModelDocument};
use weld_core::ranking::{score_welders, write_ranking_csv, Ranking};
use weld_core::rbf::{train_rbf as fit_rbf, RbfModel};
use weld_core::signal::{preprocess_series, read_raw_series, write_raw_series};
use weld_core::som::{train_som, SomModel};
use weld_core::stream::{parse_feed_line, StreamingDetector};
use weld_core::synth::{default_profiles, generate_corpus_trial, CorpusShape, WelderProfile};
use weld_core::{FeatureVector, LabeledDataset};

use crate::config::RunConfig;

const SERIES_EXTENSION: &str = "series";
const FEED_CHUNK: usize = 8192;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn save(doc: ModelDocument, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    save_model(&doc, path).with_context(|| format!("writing model {}", path.display()))
}

fn load(path: &Path) -> Result<ModelDocument> {
    load_model(path).with_context(|| format!("loading model {}", path.display()))
}

fn load_classifier(path: &Path) -> Result<Classifier> {
    Classifier::try_from(load(path)?).with_context(|| format!("loading model {}", path.display()))
}

fn load_som(path: &Path) -> Result<SomModel> {
    match load(path)? {
        ModelDocument::Som(m) => Ok(m),
        other => bail!("{} holds a {} model, expected som", path.display(), other.kind()),
    }
}

fn read_features(path: &Path) -> Result<Vec<FeatureVector>> {
    let (records, _) = read_dataset_csv(open(path)?).with_context(|| format!("reading {}", path.display()))?;
    Ok(records)
}

fn read_labeled(path: &Path) -> Result<LabeledDataset> {
    read_labeled_csv(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn write_features(path: &Path, records: &[FeatureVector], labels: Option<&[u8]>) -> Result<()> {
    write_dataset_csv(records, labels, create(path)?).with_context(|| format!("writing {}", path.display()))
}

fn split(cfg: &RunConfig, data: &LabeledDataset) -> Result<(LabeledDataset, LabeledDataset)> {
    Ok(split_dataset(data, cfg.split, cfg.split_mode, cfg.seed)?)
}

pub fn generate(cfg: &RunConfig, out: &Path, profile_file: Option<&Path>) -> Result<()> {
    let profiles: Vec<WelderProfile> = match profile_file {
        Some(p) => serde_json::from_reader(open(p)?).with_context(|| format!("parsing profiles {}", p.display()))?,
        None => default_profiles(cfg.corpus.welders, cfg.seed),
    };
    if profiles.is_empty() {
        bail!("no welder profiles");
    }
    for p in &profiles {
        p.validate().with_context(|| format!("profile {}", p.welder_id))?;
    }
    let shape = CorpusShape {
        trials_per_welder: cfg.corpus.trials,
        n_segments: cfg.corpus.segments,
        segment_len: cfg.preprocess.segment_len,
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    serde_json::to_writer_pretty(create(&out.join("profiles.json"))?, &profiles)?;
    let truth_path = out.join("ground_truth.csv");
    let mut truth = create(&truth_path)?;
    writeln!(truth, "welder_id,trial,segment_index,true_label")?;
    let mut segments = 0;
    for p in &profiles {
        for t in 0..shape.trials_per_welder {
            let trial = generate_corpus_trial(p, t, &shape)?;
            let path = out.join(format!("{}_{}.{SERIES_EXTENSION}", trial.welder_id, trial.trial));
            write_raw_series(&trial.series, create(&path)?).with_context(|| format!("writing {}", path.display()))?;
            for (i, &steady) in trial.truth.labels.iter().enumerate() {
                writeln!(truth, "{},{},{i},{}", trial.welder_id, trial.trial, u8::from(steady))?;
            }
            segments += trial.truth.len();
        }
    }
    truth.flush()?;
    println!(
        "generated {} welders x {} trials x {} segments = {segments} segments in {}",
        profiles.len(),
        shape.trials_per_welder,
        shape.n_segments,
        out.display()
    );
    Ok(())
}

/// `.series` files under `input` in name order, or `input` itself.
fn series_files(input: &Path) -> Result<Vec<PathBuf>> {
    if !input.is_dir() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(input).with_context(|| format!("listing {}", input.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == SERIES_EXTENSION) {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        bail!("no .{SERIES_EXTENSION} files in {}", input.display());
    }
    Ok(files)
}

fn extract(cfg: &RunConfig, input: &Path) -> Result<Vec<FeatureVector>> {
    let mut records = Vec::new();
    for path in series_files(input)? {
        let series = read_raw_series(open(&path)?).with_context(|| format!("reading {}", path.display()))?;
        records.extend(preprocess_series(&series, &cfg.preprocess).with_context(|| format!("preprocessing {}", path.display()))?);
    }
    if records.is_empty() {
        bail!("no complete segments of {} samples in {}", cfg.preprocess.segment_len, input.display());
    }
    Ok(records)
}

pub fn preprocess(cfg: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    let records = extract(cfg, input)?;
    write_features(out, &records, None)?;
    println!("{} patterns of dimension {} written to {}", records.len(), cfg.preprocess.feature_dim, out.display());
    Ok(())
}

fn print_clusters(som: &SomModel, records: &[FeatureVector], flags: Option<&[bool]>) -> Result<()> {
    let counts = som.cluster_counts(records)?;
    let stds = som.label_clusters(1)?.weight_std;
    for (j, (n, s)) in counts.iter().zip(&stds).enumerate() {
        let mark = match flags {
            Some(f) if f[j] => "  desirable",
            _ => "",
        };
        println!("cluster {j}: {n} patterns, weight std {s:.4}{mark}");
    }
    Ok(())
}

pub fn cluster(cfg: &RunConfig, data: &Path, model: &Path) -> Result<()> {
    let records = read_features(data)?;
    let som = train_som(&records, &cfg.som)?;
    println!("SOM with {} clusters trained for {} epochs", som.n_clusters(), som.epochs_run);
    print_clusters(&som, &records, None)?;
    save(som.into(), model)
}

fn label_records(cfg: &RunConfig, som: &SomModel, records: &[FeatureVector]) -> Result<LabeledDataset> {
    let labeling = som.label_clusters(cfg.desirable_k)?;
    let labeled = som.label_dataset(&labeling, records)?;
    print_clusters(som, records, Some(&labeling.desirable))?;
    let good = labeled.labels.iter().filter(|&&l| l == 1).count();
    println!("{good} desirable, {} undesirable patterns", labeled.len() - good);
    Ok(labeled)
}

pub fn label(cfg: &RunConfig, data: &Path, model: &Path, out: &Path) -> Result<()> {
    let records = read_features(data)?;
    let som = load_som(model)?;
    let labeled = label_records(cfg, &som, &records)?;
    write_features(out, &labeled.records, Some(&labeled.labels))
}

fn report_ranking(ranking: &Ranking) {
    if ranking.uneven_totals {
        eprintln!("warning: welders contributed different numbers of patterns");
    }
}

pub fn rank(data: &Path, out: Option<&Path>) -> Result<()> {
    let ranking = score_welders(&read_labeled(data)?)?;
    report_ranking(&ranking);
    match out {
        Some(path) => write_ranking_csv(&ranking, create(path)?)?,
        None => write_ranking_csv(&ranking, io::stdout().lock())?,
    }
    Ok(())
}

fn mlp_on(cfg: &RunConfig, train: &LabeledDataset, topology: &weld_core::mlp::MlpTopology) -> Result<MlpModel> {
    let model = fit_mlp(init_mlp(topology, cfg.seed), train, &cfg.mlp)?;
    println!(
        "MLP {} trained on {} patterns: {} epochs, final mse {:.3e}, {:.2} s",
        model.topology,
        train.len(),
        model.epochs_run,
        model.final_loss.unwrap_or(f64::NAN),
        model.training_seconds
    );
    Ok(model)
}

fn rbf_on(cfg: &RunConfig, train: &LabeledDataset) -> Result<RbfModel> {
    let model = fit_rbf(train, &cfg.rbf)?;
    println!(
        "RBF {} trained on {} patterns: {} epochs, final mse {:.3e}, {:.2} s",
        Classifier::Rbf(model.clone()).descriptor(),
        train.len(),
        model.epochs_run,
        model.final_loss.unwrap_or(f64::NAN),
        model.training_seconds
    );
    Ok(model)
}

pub fn train_mlp(cfg: &RunConfig, data: &Path, model: &Path) -> Result<()> {
    let (train, _) = split(cfg, &read_labeled(data)?)?;
    let m = mlp_on(cfg, &train, &cfg.topology)?;
    save(m.into(), model)
}

pub fn train_rbf(cfg: &RunConfig, data: &Path, model: &Path) -> Result<()> {
    let (train, _) = split(cfg, &read_labeled(data)?)?;
    let m = rbf_on(cfg, &train)?;
    save(m.into(), model)
}

fn report_for(classifier: &Classifier, test: &LabeledDataset) -> Result<EvalReport> {
    let cm = score(test, |x| classifier.predict(x))?;
    Ok(EvalReport::new(classifier.descriptor(), cm, classifier.training_seconds())?)
}

fn publish(reports: &[EvalReport], json_out: Option<&Path>) -> Result<Vec<EvalReport>> {
    let rows = compare_models(reports);
    print!("{}", render_table(&rows));
    if let Some(path) = json_out {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &rows)?;
        writeln!(w)?;
        w.flush()?;
    }
    Ok(rows)
}

pub fn evaluate(cfg: &RunConfig, data: &Path, models: &[PathBuf], report: Option<&Path>) -> Result<()> {
    let (_, test) = split(cfg, &read_labeled(data)?)?;
    let reports = models
        .iter()
        .map(|m| report_for(&load_classifier(m)?, &test).with_context(|| format!("evaluating {}", m.display())))
        .collect::<Result<Vec<_>>>()?;
    publish(&reports, report)?;
    Ok(())
}

/// Hidden layers of the MLPs trained by `pipeline`.
const PIPELINE_HIDDEN: [&[usize]; 3] = [&[35], &[25, 25], &[80]];

pub fn pipeline(cfg: &RunConfig, corpus: &Path, out: &Path) -> Result<()> {
    let stage = |name: &'static str| move || format!("pipeline stage `{name}` failed");
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("config.json"), cfg.to_json() + "\n").with_context(stage("config"))?;

    let records = extract(cfg, corpus).with_context(stage("preprocess"))?;
    write_features(&out.join("dataset.csv"), &records, None).with_context(stage("preprocess"))?;
    println!("{} patterns of dimension {}", records.len(), cfg.preprocess.feature_dim);

    let som = train_som(&records, &cfg.som).with_context(stage("cluster"))?;
    save(som.clone().into(), &out.join("som.json")).with_context(stage("cluster"))?;

    let labeled = label_records(cfg, &som, &records).with_context(stage("label"))?;
    write_features(&out.join("labeled.csv"), &labeled.records, Some(&labeled.labels)).with_context(stage("label"))?;

    let ranking = score_welders(&labeled).with_context(stage("rank"))?;
    report_ranking(&ranking);
    write_ranking_csv(&ranking, create(&out.join("ranking.csv"))?).with_context(stage("rank"))?;

    let (train, test) = split(cfg, &labeled).with_context(stage("split"))?;
    println!("split: {} training, {} test patterns", train.len(), test.len());

    let mut reports = Vec::new();
    for hidden in PIPELINE_HIDDEN {
        let topology = cfg.topology_for_features(hidden).with_context(stage("train-mlp"))?;
        let model = mlp_on(cfg, &train, &topology).with_context(stage("train-mlp"))?;
        let c = Classifier::Mlp(model);
        save(c.clone().into(), &out.join(format!("mlp_{}.json", c.descriptor()))).with_context(stage("train-mlp"))?;
        reports.push(report_for(&c, &test).with_context(stage("evaluate"))?);
    }
    let c = Classifier::Rbf(rbf_on(cfg, &train).with_context(stage("train-rbf"))?);
    save(c.clone().into(), &out.join(format!("rbf_{}.json", c.descriptor()))).with_context(stage("train-rbf"))?;
    reports.push(report_for(&c, &test).with_context(stage("evaluate"))?);

    let rows = publish(&reports, Some(&out.join("report.json"))).with_context(stage("evaluate"))?;
    fs::write(out.join("report.txt"), render_table(&rows)).with_context(stage("evaluate"))?;
    Ok(())
}

pub fn stream(cfg: &RunConfig, model: &Path, input: Option<&Path>) -> Result<u8> {
    let classifier = load_classifier(model)?;
    let mut detector = StreamingDetector::new(classifier, cfg.preprocess)?;
    let reader: Box<dyn BufRead> = match input {
        Some(path) => Box::new(open(path)?),
        None => Box::new(io::stdin().lock()),
    };
    let mut stdout = io::stdout().lock();
    let mut chunk = Vec::with_capacity(FEED_CHUNK);
    let mut events = 0usize;
    let mut push = |chunk: &mut Vec<f64>, out: &mut dyn Write| -> Result<()> {
        for e in detector.push_samples(chunk)?.events {
            writeln!(out, "{}", e.to_json_line())?;
            events += 1;
        }
        chunk.clear();
        Ok(())
    };
    for line in reader.lines() {
        let line = line.context("reading sample feed")?;
        if let Some(v) = parse_feed_line(&line) {
            chunk.push(v);
            if chunk.len() == FEED_CHUNK {
                push(&mut chunk, &mut stdout)?;
            }
        }
    }
    push(&mut chunk, &mut stdout)?;
    stdout.flush()?;
    eprintln!("{} segments classified, {events} error events", detector.segments_decided());
    if let Some(n) = detector.flush() {
        eprintln!("discarded {n} trailing samples (incomplete segment)");
    }
    Ok(if events > 0 { 3 } else { 0 })
}
