//! Single-stage subcommands. Each reads explicit inputs and writes explicit
//! outputs so a run can be resumed or inspected stage by stage.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use sigcamo::anomaly::{detect, novelty_split};
use sigcamo::classify::{select_hyperparameters, signed_labels, svm_train_with, SvmOptions};
use sigcamo::divergence::{sample_to_distribution, Bandwidth, KdeGrid};
use sigcamo::encode::{signal_to_audio, signal_to_image, write_pgm, write_wav};
use sigcamo::eval::{confusion, metrics, pr_curve, roc_curve, write_curve_csv};
use sigcamo::ingest::{
    derive_seed, parse_recording, synthesize_recording, write_recording, Dataset, Instance, Label,
    Pairing,
};
use sigcamo::kernels::{KernelSpec, PairwiseTable};

use crate::config::{DataType, DetectorKind, RunConfig};
use crate::pipeline::{self, detector_inputs, majority_baseline, represent, train_detector};
use crate::report::{write_atomic, Report};
use crate::{Command, EXIT_FAILURES, EXIT_OK};

pub fn dispatch(cmd: Command) -> anyhow::Result<i32> {
    match cmd {
        Command::Synth {
            out,
            config,
            rows,
            seed,
        } => synth(&out, config.as_deref(), rows, seed),
        Command::Ingest {
            input,
            pairing,
            out,
        } => ingest(&input, pairing, &out),
        Command::Encode {
            input,
            pairing,
            data_type,
            out,
            config,
        } => encode(&input, pairing, data_type, &out, config.as_deref()),
        Command::Features {
            input,
            pairing,
            data_type,
            out,
            config,
            resize,
        } => features(&input, pairing, data_type, &out, config.as_deref(), resize),
        Command::Train {
            input,
            pairing,
            kernel,
            out,
            config,
            seed,
        } => train(&input, pairing, &kernel, &out, config.as_deref(), seed),
        Command::Detect {
            input,
            pairing,
            detector,
            out,
            config,
        } => detect_cmd(&input, pairing, detector, &out, config.as_deref()),
        Command::Evaluate {
            input,
            out,
            positive,
        } => evaluate(&input, &out, &positive),
        Command::Report { run, out } => report(&run, out.as_deref()),
        Command::Run { config, out } => run(config.as_deref(), out),
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn read_dataset(path: &Path, pairing: Pairing) -> anyhow::Result<Dataset> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Dataset::read_csv(BufReader::new(f), pairing)?)
}

fn write_dataset(ds: &Dataset, path: &Path) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    ds.write_csv(&mut buf)?;
    write_atomic(path, &buf).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn synth(
    out: &Path,
    config: Option<&Path>,
    rows: Option<usize>,
    seed: Option<u64>,
) -> anyhow::Result<i32> {
    let cfg = load_config(config)?;
    let mut gen = cfg.data.generator.clone();
    if let Some(r) = rows {
        gen.rows = r;
    }
    let frame = synthesize_recording(&gen, seed.unwrap_or(cfg.data.generator_seed))?;
    let mut buf = Vec::new();
    write_recording(&frame, &mut buf)?;
    write_atomic(out, &buf)?;
    let (g, n) = frame.label_counts();
    println!(
        "{} rows ({g} gesture, {n} no-gesture) -> {}",
        frame.len(),
        out.display()
    );
    Ok(EXIT_OK)
}

fn ingest(input: &Path, pairing: Pairing, out: &Path) -> anyhow::Result<i32> {
    let frame = parse_recording(input)?;
    let ds = pipeline::prepare(&frame, pairing)?;
    write_dataset(&ds, out)?;
    println!(
        "{} instances of dimension {} -> {}",
        ds.len(),
        ds.dim(),
        out.display()
    );
    Ok(EXIT_OK)
}

fn encode(
    input: &Path,
    pairing: Pairing,
    data_type: DataType,
    out: &Path,
    config: Option<&Path>,
) -> anyhow::Result<i32> {
    let cfg = load_config(config)?;
    let ds = read_dataset(input, pairing)?;
    fs::create_dir_all(out)?;
    let mut index = csv::Writer::from_writer(Vec::new());
    index.write_record(["file", "label"])?;
    for (i, inst) in ds.instances.iter().enumerate() {
        let path = match data_type {
            DataType::Signal => anyhow::bail!("`encode` needs --type image or --type audio"),
            DataType::Image => {
                let img = signal_to_image(&inst.vector, cfg.encode.bit_depth)?;
                let path = out.join(format!("inst-{i:06}.pgm"));
                let mut w = BufWriter::new(File::create(&path)?);
                write_pgm(&img, &mut w)?;
                img.meta.write_sidecar(&path)?;
                path
            }
            DataType::Audio => {
                let clip = signal_to_audio(&inst.vector, &cfg.encode.audio)?;
                let path = out.join(format!("inst-{i:06}.wav"));
                let mut w = BufWriter::new(File::create(&path)?);
                write_wav(&clip, &mut w)?;
                clip.meta.write_sidecar(&path)?;
                path
            }
        };
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        index.write_record([name, inst.label.as_u8().to_string()])?;
    }
    write_atomic(&out.join("index.csv"), &index.into_inner()?)?;
    println!("{} {data_type} artifacts -> {}", ds.len(), out.display());
    Ok(EXIT_OK)
}

fn features(
    input: &Path,
    pairing: Pairing,
    data_type: DataType,
    out: &Path,
    config: Option<&Path>,
    resize: Option<usize>,
) -> anyhow::Result<i32> {
    let mut cfg = load_config(config)?;
    if let Some(r) = resize {
        cfg.features.gist.resize_to = r;
    }
    let ds = read_dataset(input, pairing)?;
    let rep = represent(&cfg, &ds, data_type)?;
    let feats = ds.with_instances(
        rep.vectors
            .into_iter()
            .zip(rep.labels)
            .map(|(vector, label)| Instance { vector, label })
            .collect(),
    );
    write_dataset(&feats, out)?;
    println!(
        "{} descriptors of length {} -> {}",
        feats.len(),
        feats.dim(),
        out.display()
    );
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize, Deserialize)]
struct TrainSummary {
    kernel: String,
    rows: usize,
    cv_mean: f64,
    cv_standard_error: f64,
    sigma: f64,
    c: f64,
    baseline: f64,
}

fn train(
    input: &Path,
    pairing: Pairing,
    kernel: &str,
    out: &Path,
    config: Option<&Path>,
    seed: u64,
) -> anyhow::Result<i32> {
    let cfg = load_config(config)?;
    let spec: KernelSpec = kernel.parse()?;
    let ds = read_dataset(input, pairing)?;
    let ds = if ds.len() > cfg.classify.cap {
        sigcamo::ingest::stratified_subsample(&ds, cfg.classify.cap, seed)?
    } else {
        ds
    };
    let vectors = ds.vectors();
    let labels = ds.labels();
    let grid = KdeGrid::for_samples(&vectors, cfg.classify.grid_points, Bandwidth::Auto)?;
    let dists = vectors
        .iter()
        .map(|v| sample_to_distribution(v, &grid, Bandwidth::Auto))
        .collect::<sigcamo::Result<Vec<_>>>()?;
    let table = PairwiseTable::compute(&vectors, &dists)?;
    let cv = &sigcamo::classify::nested_cv(&table, &labels, &[spec], &cfg.classify.cv, seed)?[0];

    // Final model on every row, hyperparameters chosen on every row.
    let all: Vec<usize> = (0..labels.len()).collect();
    let (sigma, c) = select_hyperparameters(
        &table,
        &spec,
        &labels,
        &all,
        &cfg.classify.cv,
        derive_seed(seed, "final"),
    )?;
    let gram = table.gram(&spec.with_sigma(sigma))?;
    let opts = SvmOptions {
        c,
        class_weight: cfg.classify.cv.class_weight,
        tol: cfg.classify.cv.tol,
        max_iter: Some(cfg.classify.cv.max_iter),
    };
    let mut model = svm_train_with(&gram, &signed_labels(&labels), &opts)?;
    model.spec = spec.with_sigma(sigma);

    fs::create_dir_all(out)?;
    let mut buf = Vec::new();
    model.write_to(&mut buf)?;
    write_atomic(&out.join("model.ckm"), &buf)?;
    write_atomic(&out.join("folds.json"), &serde_json::to_vec_pretty(cv)?)?;
    let summary = TrainSummary {
        kernel: spec.key(),
        rows: labels.len(),
        cv_mean: cv.mean,
        cv_standard_error: cv.standard_error,
        sigma,
        c,
        baseline: majority_baseline(&labels),
    };
    let text = serde_json::to_string_pretty(&summary)?;
    write_atomic(&out.join("summary.json"), text.as_bytes())?;
    println!("{text}");
    Ok(EXIT_OK)
}

fn detect_cmd(
    input: &Path,
    pairing: Pairing,
    kind: DetectorKind,
    out: &Path,
    config: Option<&Path>,
) -> anyhow::Result<i32> {
    let cfg = load_config(config)?;
    let ds = read_dataset(input, pairing)?;
    let seed = cfg.detect.seed;
    let train_class = cfg.detect.train_class;
    let (train, eval) = novelty_split(&ds, train_class, cfg.detect.train_fraction, seed)?;
    let tr: Vec<Vec<f64>> = train.instances.iter().map(|i| i.vector.clone()).collect();
    let ev: Vec<Vec<f64>> = eval.instances.iter().map(|i| i.vector.clone()).collect();
    let (tr, ev) = detector_inputs(&cfg, &tr, &ev)?;
    let det = train_detector(&cfg, kind, &tr, derive_seed(seed, kind.name()))?;
    let d = detect(&det, &ev, det.default_threshold(), train_class)?;
    let truth = eval.labels();

    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["score", "label", "predicted"])?;
    for ((s, t), p) in d.scores.iter().zip(&truth).zip(&d.predicted) {
        w.write_record([
            format!("{s:e}"),
            t.as_u8().to_string(),
            p.as_u8().to_string(),
        ])?;
    }
    let predictions = out.join("predictions.csv");
    write_atomic(&predictions, &w.into_inner()?)?;
    let cm = confusion(&truth, &d.predicted, train_class)?;
    let text = serde_json::to_string_pretty(&serde_json::json!({
        "detector": kind.name(),
        "threshold": d.threshold,
        "confusion": cm,
        "metrics": metrics(&cm)?,
        "baseline": majority_baseline(&truth),
    }))?;
    write_atomic(&out.join("metrics.json"), text.as_bytes())?;
    println!("{text}");
    Ok(EXIT_OK)
}

#[derive(Debug, Deserialize)]
struct PredictionRow {
    score: f64,
    label: u8,
    predicted: Option<u8>,
}

fn to_label(v: u8) -> anyhow::Result<Label> {
    Label::from_u8(v).ok_or_else(|| {
        sigcamo::Error::BadLabel {
            row: 0,
            value: f64::from(v),
        }
        .into()
    })
}

fn evaluate(input: &Path, out: &Path, positive: &str) -> anyhow::Result<i32> {
    let positive: Label = positive.parse()?;
    let mut rdr =
        csv::Reader::from_path(input).with_context(|| format!("opening {}", input.display()))?;
    let mut scores = Vec::new();
    let mut truth = Vec::new();
    let mut predicted = Vec::new();
    for row in rdr.deserialize::<PredictionRow>() {
        let row = row?;
        scores.push(row.score);
        let t = to_label(row.label)?;
        truth.push(t);
        predicted.push(match row.predicted {
            Some(p) => to_label(p)?,
            // Scores without hard predictions are thresholded at zero.
            None if row.score >= 0.0 => positive,
            None => positive.other(),
        });
    }
    fs::create_dir_all(out)?;
    let cm = confusion(&truth, &predicted, positive)?;
    let roc = roc_curve(&scores, &truth, positive)?;
    let pr = pr_curve(&scores, &truth, positive)?;
    let mut buf = Vec::new();
    write_curve_csv(&roc.points, &mut buf)?;
    write_atomic(&out.join("roc.csv"), &buf)?;
    buf.clear();
    write_curve_csv(&pr, &mut buf)?;
    write_atomic(&out.join("pr.csv"), &buf)?;
    let text = serde_json::to_string_pretty(&serde_json::json!({
        "confusion": cm,
        "metrics": metrics(&cm)?,
        "auc": roc.auc,
    }))?;
    write_atomic(&out.join("metrics.json"), text.as_bytes())?;
    println!("{text}");
    Ok(EXIT_OK)
}

fn report(run_dir: &Path, out: Option<&Path>) -> anyhow::Result<i32> {
    let r = Report::read(&run_dir.join("report.json"))?;
    let text = serde_json::to_string_pretty(&serde_json::json!({
        "table": r.table,
        "summary": r.summary,
        "failed_cells": r.failed_cells,
    }))?;
    match out {
        Some(p) => write_atomic(p, text.as_bytes())?,
        None => println!("{text}"),
    }
    Ok(if r.failed_cells.is_empty() {
        EXIT_OK
    } else {
        EXIT_FAILURES
    })
}

fn run(config: Option<&Path>, out: Option<PathBuf>) -> anyhow::Result<i32> {
    let cfg = load_config(config)?;
    let out = out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("sigcamo-run"));
    let outcome = pipeline::run_pipeline(&cfg, &out)?;
    let s = &outcome.report.summary;
    println!(
        "{} cells, {} failed, {:.1}s -> {}",
        s.cells,
        s.failed,
        outcome.timings.total_s,
        outcome.report_path.display()
    );
    for failed in &outcome.report.failed_cells {
        let cell = &outcome.report.cells[failed];
        if let Some(e) = &cell.error {
            eprintln!("error[{}]: {failed}: {}", e.code, e.message);
        }
    }
    Ok(if s.failed == 0 {
        EXIT_OK
    } else {
        EXIT_FAILURES
    })
}
