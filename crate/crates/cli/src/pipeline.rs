//! The before/after-encoding experiment matrix.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use sigcamo::anomaly::{
    calibrated_gmm, detect, iforest_train, novelty_split, ocsvm_train, Detector,
};
use sigcamo::classify::{mlp_cv, nested_cv, CvReport, Standardizer};
use sigcamo::divergence::{sample_to_distribution, Bandwidth, ChisiniKind, KdeGrid};
use sigcamo::encode::{signal_to_audio, signal_to_image};
use sigcamo::eval::{
    confusion, error_bar, metrics, pr_curve, roc_curve, write_curve_csv, ConfusionMatrix,
};
use sigcamo::features::{gist_plane, GistExtractor, GistParams, MfccExtractor, PcaModel};
use sigcamo::ingest::{
    derive_seed, fuse_channels, parse_recording, preprocess, synthesize_recording, Dataset,
    Instance, Label, Pairing, SensorFrame,
};
use sigcamo::kernels::{KernelSpec, PairwiseTable};

use crate::config::{DataType, DetectorKind, RunConfig};
use crate::report::{
    write_atomic, CellError, CellReport, CvSummary, Provenance, Report, Task, Timings, TOOL_VERSION,
};

/// Row-major feature rows.
pub type Rows = Vec<Vec<f64>>;

/// Descriptor vectors of one (pairing, data type) with their labels.
#[derive(Debug, Clone)]
pub struct Representation {
    pub vectors: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
}

pub fn load_frame(cfg: &RunConfig) -> anyhow::Result<SensorFrame> {
    Ok(match &cfg.data.input {
        Some(p) => parse_recording(p)?,
        None => synthesize_recording(&cfg.data.generator, cfg.data.generator_seed)?,
    })
}

pub fn prepare(frame: &SensorFrame, pairing: Pairing) -> sigcamo::Result<Dataset> {
    preprocess(&fuse_channels(frame, pairing)?)
}

fn gist_params(cfg: &RunConfig, side: usize) -> GistParams {
    let mut p = cfg.features.gist;
    if p.grid == 0 {
        p.grid = side;
    }
    p
}

/// Features of every instance for one data type.
pub fn represent(
    cfg: &RunConfig,
    ds: &Dataset,
    data_type: DataType,
) -> sigcamo::Result<Representation> {
    let labels = ds.labels();
    let vectors = match data_type {
        DataType::Signal => ds.instances.iter().map(|i| i.vector.clone()).collect(),
        DataType::Image => {
            let images = ds
                .instances
                .iter()
                .map(|i| signal_to_image(&i.vector, cfg.encode.bit_depth))
                .collect::<sigcamo::Result<Vec<_>>>()?;
            let Some(first) = images.first() else {
                return Err(sigcamo::Error::EmptyDataset);
            };
            let p = gist_params(cfg, first.side);
            let side = if p.resize_to == 0 {
                first.side
            } else {
                p.resize_to
            };
            let ex = GistExtractor::new(p, side)?;
            images
                .par_iter()
                .map(|img| ex.descriptor(&gist_plane(img, &p)?))
                .collect::<sigcamo::Result<Vec<_>>>()?
        }
        DataType::Audio => {
            let ex = MfccExtractor::new(cfg.features.mfcc, cfg.encode.audio.sample_rate)?;
            ds.instances
                .par_iter()
                .map(|i| {
                    let clip = signal_to_audio(&i.vector, &cfg.encode.audio)?;
                    ex.descriptor(&clip.samples)
                })
                .collect::<sigcamo::Result<Vec<_>>>()?
        }
    };
    Ok(Representation { vectors, labels })
}

fn subsample_indices(labels: &[Label], cap: usize, seed: u64) -> sigcamo::Result<Vec<usize>> {
    if labels.len() <= cap {
        return Ok((0..labels.len()).collect());
    }
    let frac = cap as f64 / labels.len() as f64;
    Ok(sigcamo::ingest::stratified_indices(labels, frac, seed)?.0)
}

fn hash_rows(vectors: &[&[f64]], labels: &[Label], grid_points: usize) -> String {
    let mut h = Sha256::new();
    h.update((vectors.len() as u64).to_le_bytes());
    h.update((grid_points as u64).to_le_bytes());
    for (v, l) in vectors.iter().zip(labels) {
        h.update((v.len() as u64).to_le_bytes());
        for x in v.iter() {
            h.update(x.to_le_bytes());
        }
        h.update([l.as_u8()]);
    }
    hex::encode(&h.finalize()[..12])
}

#[derive(Debug, Default, Clone, Copy)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
}

/// Pairwise table for `rows`, read from or written to the cache directory.
fn pairwise_cached(
    cache_dir: &Path,
    rep: &Representation,
    rows: &[usize],
    grid_points: usize,
    stats: &mut CacheStats,
) -> anyhow::Result<PairwiseTable> {
    let vectors: Vec<&[f64]> = rows.iter().map(|&i| rep.vectors[i].as_slice()).collect();
    let labels: Vec<Label> = rows.iter().map(|&i| rep.labels[i]).collect();
    let path = cache_dir.join(format!(
        "pairwise-{}.ckp",
        hash_rows(&vectors, &labels, grid_points)
    ));
    if path.exists() {
        let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        if let Ok(t) = PairwiseTable::read_from(bytes.as_slice()) {
            if t.n == rows.len() {
                stats.hits += 1;
                return Ok(t);
            }
        }
    }
    let grid = KdeGrid::for_samples(&vectors, grid_points, Bandwidth::Auto)?;
    let dists = vectors
        .iter()
        .map(|v| sample_to_distribution(v, &grid, Bandwidth::Auto))
        .collect::<sigcamo::Result<Vec<_>>>()?;
    let table = PairwiseTable::compute(&vectors, &dists)?;
    let mut buf = Vec::new();
    table.write_to(&mut buf)?;
    write_atomic(&path, &buf)?;
    stats.misses += 1;
    Ok(table)
}

fn pooled_confusion(
    cv: &CvReport,
    labels: &[Label],
) -> sigcamo::Result<(ConfusionMatrix, Vec<f64>, Vec<Label>)> {
    let mut truth = Vec::new();
    let mut scores = Vec::new();
    for f in &cv.folds {
        for (&i, &d) in f.test.iter().zip(&f.decisions) {
            truth.push(labels[i]);
            scores.push(d);
        }
    }
    let predicted: Vec<Label> = scores
        .iter()
        .map(|&d| {
            if d >= 0.0 {
                Label::Gesture
            } else {
                Label::NoGesture
            }
        })
        .collect();
    Ok((
        confusion(&truth, &predicted, Label::Gesture)?,
        scores,
        truth,
    ))
}

/// Majority-class share of `labels`.
pub fn majority_baseline(labels: &[Label]) -> f64 {
    let g = labels.iter().filter(|&&l| l == Label::Gesture).count();
    g.max(labels.len() - g) as f64 / labels.len() as f64
}

/// A finished cell plus the plot-ready files written under `cells/<key>/`.
struct CellOutput {
    report: CellReport,
    files: Vec<(String, Vec<u8>)>,
}

fn curve_files(
    scores: &[f64],
    truth: &[Label],
    positive: Label,
) -> (Option<f64>, Vec<(String, Vec<u8>)>) {
    let mut files = Vec::new();
    let mut auc = None;
    if let Ok(roc) = roc_curve(scores, truth, positive) {
        auc = Some(roc.auc);
        let mut buf = Vec::new();
        if write_curve_csv(&roc.points, &mut buf).is_ok() {
            files.push(("roc.csv".to_string(), buf));
        }
    }
    if let Ok(pr) = pr_curve(scores, truth, positive) {
        let mut buf = Vec::new();
        if write_curve_csv(&pr, &mut buf).is_ok() {
            files.push(("pr.csv".to_string(), buf));
        }
    }
    (auc, files)
}

fn classification_cell(
    method: String,
    data_type: DataType,
    pairing: Pairing,
    provenance: Provenance,
    cv: &CvReport,
    labels: &[Label],
) -> sigcamo::Result<CellOutput> {
    let (cm, scores, truth) = pooled_confusion(cv, labels)?;
    let m = metrics(&cm)?;
    let bar = error_bar(&cv.fold_accuracies)?;
    let (auc, mut files) = curve_files(&scores, &truth, Label::Gesture);
    files.push(("confusion.json".into(), serde_json::to_vec_pretty(&cm)?));
    files.push(("folds.json".into(), serde_json::to_vec_pretty(cv)?));
    Ok(CellOutput {
        report: CellReport {
            task: Task::Classification,
            method,
            data_type,
            pairing,
            status: "ok".into(),
            error: None,
            provenance,
            metrics: Some(m),
            confusion: Some(cm),
            auc,
            baseline: Some(majority_baseline(labels)),
            cv: Some(CvSummary {
                mean: cv.mean,
                standard_error: cv.standard_error,
                ci95: [bar.ci95.0, bar.ci95.1],
                fold_accuracies: cv.fold_accuracies.clone(),
                sigma: cv.folds.iter().map(|f| f.sigma).collect(),
                c: cv.folds.iter().map(|f| f.c).collect(),
            }),
            eval_rows: Some(truth.len()),
        },
        files,
    })
}

fn failed_cell(
    task: Task,
    method: String,
    data_type: DataType,
    pairing: Pairing,
    provenance: Provenance,
    err: &anyhow::Error,
) -> CellOutput {
    let code = err
        .downcast_ref::<sigcamo::Error>()
        .map_or("pipeline", sigcamo::Error::code)
        .to_string();
    CellOutput {
        report: CellReport {
            task,
            method,
            data_type,
            pairing,
            status: "failed".into(),
            error: Some(CellError {
                code,
                message: format!("{err:#}"),
            }),
            provenance,
            metrics: None,
            confusion: None,
            auc: None,
            baseline: None,
            cv: None,
            eval_rows: None,
        },
        files: Vec::new(),
    }
}

/// SVM cells for every selected kernel plus the optional MLP cell.
#[allow(clippy::too_many_arguments)]
fn classify_cells(
    cfg: &RunConfig,
    cache_dir: &Path,
    rep: &Representation,
    data_type: DataType,
    pairing: Pairing,
    config_hash: &str,
    stats: &mut CacheStats,
    timings: &mut BTreeMap<String, f64>,
) -> Vec<CellOutput> {
    let specs = cfg.classify.specs().expect("validated config");
    let mut out = Vec::new();
    for mean in ChisiniKind::ALL {
        let group: Vec<KernelSpec> = specs
            .iter()
            .copied()
            .filter(|s| s.mean == Some(mean))
            .collect();
        if group.is_empty() {
            continue;
        }
        let seed = cfg.seeds.get(mean);
        let prov = |spec: &KernelSpec| Provenance {
            config_hash: config_hash.to_string(),
            seed,
            version: TOOL_VERSION.to_string(),
            kernel: Some(spec.key()),
        };
        let started = Instant::now();
        let result = (|| -> anyhow::Result<(Vec<CvReport>, Vec<Label>)> {
            let rows = subsample_indices(&rep.labels, cfg.classify.cap, seed)?;
            let table = pairwise_cached(cache_dir, rep, &rows, cfg.classify.grid_points, stats)?;
            let labels: Vec<Label> = rows.iter().map(|&i| rep.labels[i]).collect();
            Ok((
                nested_cv(&table, &labels, &group, &cfg.classify.cv, seed)?,
                labels,
            ))
        })();
        let elapsed = started.elapsed().as_secs_f64() / group.len() as f64;
        match result {
            Ok((reports, labels)) => {
                for (spec, cv) in group.iter().zip(&reports) {
                    let method = format!("svm-{}", spec.key());
                    let cell = classification_cell(
                        method.clone(),
                        data_type,
                        pairing,
                        prov(spec),
                        cv,
                        &labels,
                    )
                    .unwrap_or_else(|e| {
                        failed_cell(
                            Task::Classification,
                            method,
                            data_type,
                            pairing,
                            prov(spec),
                            &e.into(),
                        )
                    });
                    timings.insert(cell.report.key(), elapsed);
                    out.push(cell);
                }
            }
            Err(e) => {
                for spec in &group {
                    let cell = failed_cell(
                        Task::Classification,
                        format!("svm-{}", spec.key()),
                        data_type,
                        pairing,
                        prov(spec),
                        &e,
                    );
                    timings.insert(cell.report.key(), elapsed);
                    out.push(cell);
                }
            }
        }
    }
    if cfg.classify.mlp {
        let seed = cfg.seeds.am;
        let prov = Provenance {
            config_hash: config_hash.to_string(),
            seed,
            version: TOOL_VERSION.to_string(),
            kernel: None,
        };
        let started = Instant::now();
        let result = (|| -> anyhow::Result<CellOutput> {
            let rows = subsample_indices(&rep.labels, cfg.classify.cap, seed)?;
            let xs: Vec<Vec<f64>> = rows.iter().map(|&i| rep.vectors[i].clone()).collect();
            let labels: Vec<Label> = rows.iter().map(|&i| rep.labels[i]).collect();
            let mut mlp = cfg.classify.mlp_config.clone();
            mlp.seed = derive_seed(seed, "mlp");
            let cv = mlp_cv(&xs, &labels, &mlp, cfg.classify.cv.folds, seed)?;
            Ok(classification_cell(
                "mlp".into(),
                data_type,
                pairing,
                prov.clone(),
                &cv,
                &labels,
            )?)
        })();
        let cell = result.unwrap_or_else(|e| {
            failed_cell(
                Task::Classification,
                "mlp".into(),
                data_type,
                pairing,
                prov,
                &e,
            )
        });
        timings.insert(cell.report.key(), started.elapsed().as_secs_f64());
        out.push(cell);
    }
    out
}

/// Rows handed to detectors: standardized on the training rows, then
/// reduced by PCA when wider than the configured dimension.
pub fn detector_inputs(
    cfg: &RunConfig,
    train: &[Vec<f64>],
    eval: &[Vec<f64>],
) -> sigcamo::Result<(Rows, Rows)> {
    let scaler = Standardizer::fit(train);
    let mut tr: Vec<Vec<f64>> = train.iter().map(|x| scaler.apply(x)).collect();
    let mut ev: Vec<Vec<f64>> = eval.iter().map(|x| scaler.apply(x)).collect();
    let k = cfg.detect.pca_components;
    let d = tr.first().map_or(0, Vec::len);
    if k > 0 && d > k {
        let pca: PcaModel = sigcamo::features::pca_fit(&tr, k.min(tr.len() - 1))?;
        tr = tr
            .iter()
            .map(|x| pca.transform(x))
            .collect::<sigcamo::Result<_>>()?;
        ev = ev
            .iter()
            .map(|x| pca.transform(x))
            .collect::<sigcamo::Result<_>>()?;
    }
    Ok((tr, ev))
}

pub fn train_detector(
    cfg: &RunConfig,
    kind: DetectorKind,
    train: &[Vec<f64>],
    seed: u64,
) -> sigcamo::Result<Detector> {
    Ok(match kind {
        DetectorKind::Ocsvm => Detector::OcSvm(ocsvm_train(train, cfg.detect.nu, None)?),
        DetectorKind::Iforest => Detector::IsolationForest(iforest_train(
            train,
            cfg.detect.trees,
            cfg.detect.subsample.min(train.len()),
            seed,
        )?),
        DetectorKind::Gmm => Detector::Gmm(calibrated_gmm(
            train,
            seed,
            &cfg.detect.gmm,
            &cfg.detect.calibration,
        )?),
    })
}

fn detect_cells(
    cfg: &RunConfig,
    rep: &Representation,
    ds: &Dataset,
    data_type: DataType,
    pairing: Pairing,
    config_hash: &str,
    timings: &mut BTreeMap<String, f64>,
) -> Vec<CellOutput> {
    let seed = cfg.detect.seed;
    let train_class = cfg.detect.train_class;
    let prov = Provenance {
        config_hash: config_hash.to_string(),
        seed,
        version: TOOL_VERSION.to_string(),
        kernel: None,
    };
    let prepared = (|| -> anyhow::Result<(Rows, Rows, Vec<Label>)> {
        let view = ds.with_instances(
            rep.vectors
                .iter()
                .zip(&rep.labels)
                .map(|(v, &label)| Instance {
                    vector: v.clone(),
                    label,
                })
                .collect(),
        );
        let (train, eval) = novelty_split(&view, train_class, cfg.detect.train_fraction, seed)?;
        let train = stratified_or_all(&train, cfg.detect.train_cap, derive_seed(seed, "train-cap"));
        let tr: Vec<Vec<f64>> = train.iter().map(|i| i.vector.clone()).collect();
        let ev: Vec<Vec<f64>> = eval.instances.iter().map(|i| i.vector.clone()).collect();
        let (tr, ev) = detector_inputs(cfg, &tr, &ev)?;
        Ok((tr, ev, eval.labels()))
    })();
    let mut out = Vec::new();
    for &kind in &cfg.detect.detectors {
        let method = kind.name().to_string();
        let started = Instant::now();
        let result = match &prepared {
            Err(e) => Err(anyhow::anyhow!("{e:#}")),
            Ok((tr, ev, truth)) => (|| -> anyhow::Result<CellOutput> {
                let det = train_detector(cfg, kind, tr, derive_seed(seed, kind.name()))?;
                let d = detect(&det, ev, det.default_threshold(), train_class)?;
                let cm = confusion(truth, &d.predicted, train_class)?;
                let (auc, mut files) = curve_files(&d.scores, truth, train_class);
                files.push(("confusion.json".into(), serde_json::to_vec_pretty(&cm)?));
                Ok(CellOutput {
                    report: CellReport {
                        task: Task::Detection,
                        method: method.clone(),
                        data_type,
                        pairing,
                        status: "ok".into(),
                        error: None,
                        provenance: prov.clone(),
                        metrics: Some(metrics(&cm)?),
                        confusion: Some(cm),
                        auc,
                        baseline: Some(majority_baseline(truth)),
                        cv: None,
                        eval_rows: Some(truth.len()),
                    },
                    files,
                })
            })(),
        };
        let cell = result.unwrap_or_else(|e| {
            failed_cell(
                Task::Detection,
                method,
                data_type,
                pairing,
                prov.clone(),
                &e,
            )
        });
        timings.insert(cell.report.key(), started.elapsed().as_secs_f64());
        out.push(cell);
    }
    out
}

fn stratified_or_all(ds: &Dataset, cap: usize, seed: u64) -> Vec<Instance> {
    if ds.len() <= cap {
        return ds.instances.clone();
    }
    let idx = sigcamo::ingest::permutation(ds.len(), seed);
    let mut keep: Vec<usize> = idx.into_iter().take(cap).collect();
    keep.sort_unstable();
    keep.into_iter().map(|i| ds.instances[i].clone()).collect()
}

pub struct RunOutcome {
    pub report: Report,
    pub timings: Timings,
    pub report_path: PathBuf,
}

/// Runs every configured cell and writes `report.json`, `timings.json`,
/// `config.toml` and `cells/<key>/` under `out`.
pub fn run_pipeline(cfg: &RunConfig, out: &Path) -> anyhow::Result<RunOutcome> {
    cfg.validate().map_err(anyhow::Error::msg)?;
    let started = Instant::now();
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let cache_dir = out.join("cache");
    fs::create_dir_all(&cache_dir)?;
    let config_hash = cfg.hash();
    write_atomic(&out.join("config.toml"), cfg.canonical().as_bytes())?;

    let frame = load_frame(cfg)?;
    let mut stats = CacheStats::default();
    let mut timings = BTreeMap::new();
    let mut cells = Vec::new();
    let mut datasets = BTreeMap::new();
    for &pairing in &cfg.pairings {
        let ds = match prepare(&frame, pairing) {
            Ok(ds) => ds,
            Err(e) => {
                let e = anyhow::Error::from(e);
                for &dt in &cfg.data_types {
                    cells.extend(placeholder_failures(cfg, dt, pairing, &config_hash, &e));
                }
                continue;
            }
        };
        datasets.insert(
            pairing.name().to_string(),
            [
                ds.len(),
                ds.count(Label::Gesture),
                ds.count(Label::NoGesture),
            ],
        );
        for &data_type in &cfg.data_types {
            let t = Instant::now();
            let rep = match represent(cfg, &ds, data_type) {
                Ok(r) => r,
                Err(e) => {
                    cells.extend(placeholder_failures(
                        cfg,
                        data_type,
                        pairing,
                        &config_hash,
                        &e.into(),
                    ));
                    continue;
                }
            };
            timings.insert(
                format!("features.{data_type}.{pairing}"),
                t.elapsed().as_secs_f64(),
            );
            if cfg.classify.enabled {
                cells.extend(classify_cells(
                    cfg,
                    &cache_dir,
                    &rep,
                    data_type,
                    pairing,
                    &config_hash,
                    &mut stats,
                    &mut timings,
                ));
            }
            if cfg.detect.enabled {
                cells.extend(detect_cells(
                    cfg,
                    &rep,
                    &ds,
                    data_type,
                    pairing,
                    &config_hash,
                    &mut timings,
                ));
            }
        }
    }

    let cells_dir = out.join("cells");
    for c in &cells {
        if c.files.is_empty() {
            continue;
        }
        let dir = cells_dir.join(c.report.key());
        fs::create_dir_all(&dir)?;
        for (name, bytes) in &c.files {
            write_atomic(&dir.join(name), bytes)?;
        }
    }
    let report = Report::assemble(
        cfg,
        config_hash,
        datasets,
        cells.into_iter().map(|c| c.report).collect(),
    );
    let report_path = out.join("report.json");
    write_atomic(&report_path, &report.to_bytes()?)?;
    let timings = Timings {
        total_s: started.elapsed().as_secs_f64(),
        cells_s: timings,
        cache_hits: stats.hits,
        cache_misses: stats.misses,
    };
    write_atomic(
        &out.join("timings.json"),
        &serde_json::to_vec_pretty(&timings)?,
    )?;
    Ok(RunOutcome {
        report,
        timings,
        report_path,
    })
}

/// Failed entries for every cell that depended on a missing input.
fn placeholder_failures(
    cfg: &RunConfig,
    data_type: DataType,
    pairing: Pairing,
    config_hash: &str,
    err: &anyhow::Error,
) -> Vec<CellOutput> {
    let prov = |seed: u64, kernel: Option<String>| Provenance {
        config_hash: config_hash.to_string(),
        seed,
        version: TOOL_VERSION.to_string(),
        kernel,
    };
    let mut out = Vec::new();
    if cfg.classify.enabled {
        for spec in cfg.classify.specs().expect("validated config") {
            let seed = cfg.seeds.get(spec.mean.expect("validated config"));
            out.push(failed_cell(
                Task::Classification,
                format!("svm-{}", spec.key()),
                data_type,
                pairing,
                prov(seed, Some(spec.key())),
                err,
            ));
        }
        if cfg.classify.mlp {
            out.push(failed_cell(
                Task::Classification,
                "mlp".into(),
                data_type,
                pairing,
                prov(cfg.seeds.am, None),
                err,
            ));
        }
    }
    if cfg.detect.enabled {
        for kind in &cfg.detect.detectors {
            out.push(failed_cell(
                Task::Detection,
                kind.name().into(),
                data_type,
                pairing,
                prov(cfg.detect.seed, None),
                err,
            ));
        }
    }
    out
}
