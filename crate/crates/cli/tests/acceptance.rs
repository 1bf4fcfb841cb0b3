//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero when any fails.

// `ensure!` negates comparisons so NaN counts as a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sigcamo::anomaly::{c_factor, gmm_fit, iforest_train, isotonic_fit, GmmConfig, DEFAULT_TREES};
use sigcamo::classify::svm_train;
use sigcamo::divergence::{cjsd_all, mcjsd, ChisiniKind, Distribution, KdeGrid};
use sigcamo::encode::{
    audio_to_signal, image_to_signal, pad_signal, signal_to_audio, signal_to_image, AudioConfig,
};
use sigcamo::eval::{confusion, metrics, roc_curve};
use sigcamo::features::{gist_descriptor, mfcc_descriptor, GistParams, MfccParams};
use sigcamo::ingest::{Label, Pairing};
use sigcamo::kernels::{enumerate_specs, KernelFamily, KernelSpec, PairwiseTable};

use sigcamo_cli::config::RunConfig;
use sigcamo_cli::pipeline::run_pipeline;
use sigcamo_cli::report::digest;

#[path = "../../core/tests/support/mod.rs"]
mod support;

type Check = fn() -> Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

const GRID: usize = 64;

fn grid() -> KdeGrid {
    KdeGrid::new(0.0, 1.0, GRID, 0.01).unwrap()
}

/// Random distribution with occasional near-empty cells.
fn random_dist(rng: &mut ChaCha8Rng, g: &KdeGrid) -> Distribution {
    let w: Vec<f64> = (0..g.len())
        .map(|_| {
            let u: f64 = rng.random();
            if rng.random_bool(0.1) {
                0.0
            } else {
                u.powi(3)
            }
        })
        .collect();
    Distribution::from_weights(g, &w).unwrap()
}

fn divergence_ordering() -> Result<String, String> {
    let started = Instant::now();
    let g = grid();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut violations = 0;
    for _ in 0..10_000 {
        let p = random_dist(&mut rng, &g);
        let q = random_dist(&mut rng, &g);
        let [am, gm, hm] = cjsd_all(&p, &q).map_err(|e| e.to_string())?;
        if !(hm + 1e-12 >= gm && gm + 1e-12 >= am && am >= -1e-12) {
            violations += 1;
        }
    }
    let elapsed = started.elapsed();
    ensure!(violations == 0, "{violations} ordering violations");
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!(
        "10000 pairs, 0 violations, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

/// Direct sum of `p ln(p/m) + q ln(q/m)` over cells, halved.
fn direct_cjsd(p: &[f64], q: &[f64], mean: fn(f64, f64) -> f64) -> f64 {
    0.5 * p
        .iter()
        .zip(q)
        .map(|(&a, &b)| {
            let m = mean(a, b);
            a * (a / m).ln() + b * (b / m).ln()
        })
        .sum::<f64>()
}

fn hand_derived_values() -> Result<String, String> {
    let g = KdeGrid::new(0.0, 1.0, 2, 0.5).unwrap();
    let p = Distribution::from_weights(&g, &[0.6, 0.4]).unwrap();
    let q = Distribution::from_weights(&g, &[0.4, 0.6]).unwrap();
    let got = cjsd_all(&p, &q).map_err(|e| e.to_string())?;
    let published = [0.020136, 0.040547, 0.060957];
    let means: [fn(f64, f64) -> f64; 3] = [
        |a, b| 0.5 * (a + b),
        |a, b| (a * b).sqrt(),
        |a, b| 2.0 * a * b / (a + b),
    ];
    for k in 0..3 {
        let direct = direct_cjsd(&[0.6, 0.4], &[0.4, 0.6], means[k]);
        ensure!(
            (got[k] - published[k]).abs() <= 1e-6,
            "mean {k}: {} vs published {}",
            got[k],
            published[k]
        );
        ensure!(
            (got[k] - direct).abs() <= 1e-12,
            "mean {k}: {} vs direct {direct}",
            got[k]
        );
    }
    Ok(format!(
        "AM {:.6} GM {:.6} HM {:.6}",
        got[0], got[1], got[2]
    ))
}

fn jsd_bound_and_triangle() -> Result<String, String> {
    let g = grid();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ln2 = std::f64::consts::LN_2;
    let mut worst_slack = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let p = random_dist(&mut rng, &g);
        let q = random_dist(&mut rng, &g);
        let r = random_dist(&mut rng, &g);
        let am = cjsd_all(&p, &q).map_err(|e| e.to_string())?[0];
        ensure!(am <= ln2 + 1e-12, "AM divergence {am} exceeds ln 2");
        let d = |a: &Distribution, b: &Distribution| mcjsd(a, b, ChisiniKind::Arithmetic).unwrap();
        let slack = d(&p, &r) - d(&p, &q) - d(&q, &r);
        worst_slack = worst_slack.max(slack);
        ensure!(slack <= 1e-10, "triangle violated by {slack}");
    }
    // Disjoint supports reach the bound.
    let a = Distribution::from_weights(
        &g,
        &(0..GRID)
            .map(|i| f64::from(u8::from(i < 32)))
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let b = Distribution::from_weights(
        &g,
        &(0..GRID)
            .map(|i| f64::from(u8::from(i >= 32)))
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let top = cjsd_all(&a, &b).unwrap()[0];
    ensure!(
        top <= ln2 + 1e-12 && top > ln2 - 1e-6,
        "disjoint supports give {top}"
    );
    Ok(format!(
        "10000 triples, worst triangle slack {worst_slack:.3e}"
    ))
}

fn kernel_grid() -> Result<String, String> {
    let specs = enumerate_specs(1.0);
    ensure!(specs.len() == 21, "{} kernels", specs.len());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let xs: Vec<Vec<f64>> = (0..30)
        .map(|_| (0..14).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect();
    let g = KdeGrid::for_samples(&xs, GRID, sigcamo::divergence::Bandwidth::Auto).unwrap();
    let dists: Vec<Distribution> = xs
        .iter()
        .map(|x| {
            sigcamo::divergence::sample_to_distribution(x, &g, sigcamo::divergence::Bandwidth::Auto)
                .unwrap()
        })
        .collect();
    let table = PairwiseTable::compute(&xs, &dists).map_err(|e| e.to_string())?;
    let mut worst_asym = 0.0f64;
    for spec in &specs {
        for sigma in [0.5, 2.0] {
            let spec: KernelSpec = spec.with_sigma(sigma);
            let gram = table.gram(&spec).map_err(|e| e.to_string())?;
            let want = match spec.family {
                KernelFamily::Rbf | KernelFamily::Scaled => 1.0,
                KernelFamily::Amplified | KernelFamily::AmplifiedScaled => 0.0,
            };
            for i in 0..gram.n {
                ensure!(
                    gram.get(i, i) == want,
                    "{}: diagonal {}",
                    spec.key(),
                    gram.get(i, i)
                );
            }
            worst_asym = worst_asym.max(gram.max_asymmetry());
        }
    }
    ensure!(worst_asym <= 1e-12, "asymmetry {worst_asym}");
    Ok(format!(
        "21 kernels, diagonal laws exact, asymmetry {worst_asym:.1e}"
    ))
}

fn encoding_round_trip() -> Result<String, String> {
    for (n, want) in [(14, 16), (6, 9), (8, 9)] {
        let len = pad_signal(&vec![1.0; n]).map_err(|e| e.to_string())?.len();
        ensure!(len == want, "padding {n} gives {len}, expected {want}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let audio = AudioConfig::default();
    let (mut worst_img, mut worst_wav) = (0.0f64, 0.0f64);
    for pairing in Pairing::ALL {
        for _ in 0..1000 {
            let scale = 10f64.powf(rng.random_range(-2.0..3.0));
            let v: Vec<f64> = (0..pairing.dim())
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let img = signal_to_image(&v, 8).map_err(|e| e.to_string())?;
            let range = img.meta.range();
            let back = image_to_signal(&img).map_err(|e| e.to_string())?;
            let err = v
                .iter()
                .zip(&back)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            ensure!(
                err <= range / 510.0 * (1.0 + 1e-12),
                "{pairing}: image error {err} over range {range}"
            );
            worst_img = worst_img.max(err / range);
            let clip = signal_to_audio(&v, &audio).map_err(|e| e.to_string())?;
            let back = audio_to_signal(&clip).map_err(|e| e.to_string())?;
            let err = v
                .iter()
                .zip(&back)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            ensure!(
                err <= range / 65534.0 * (1.0 + 1e-12),
                "{pairing}: audio error {err} over range {range}"
            );
            worst_wav = worst_wav.max(err / range);
        }
    }
    Ok(format!(
        "3000 signals, worst image {:.3} of bound, worst audio {:.3} of bound",
        worst_img * 510.0,
        worst_wav * 65534.0
    ))
}

fn descriptor_lengths() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let v: Vec<f64> = (0..14).map(|_| rng.random_range(-1.0..1.0)).collect();
    let img = signal_to_image(&v, 8).map_err(|e| e.to_string())?;
    let p4 = GistParams::default();
    let p3 = GistParams { grid: 3, ..p4 };
    let d4 = gist_descriptor(&img, &p4).map_err(|e| e.to_string())?;
    let d3 = gist_descriptor(&img, &p3).map_err(|e| e.to_string())?;
    ensure!(
        d4.len() == 512 && d3.len() == 288,
        "GIST lengths {} and {}",
        d4.len(),
        d3.len()
    );
    let clip = signal_to_audio(&v, &AudioConfig::default()).map_err(|e| e.to_string())?;
    let m = mfcc_descriptor(&clip, &MfccParams::default()).map_err(|e| e.to_string())?;
    ensure!(m.len() == 20, "MFCC length {}", m.len());
    // 16 values fill the 4x4 grid without zero padding.
    let flat = signal_to_image(&[3.0; 16], 8).map_err(|e| e.to_string())?;
    let d = gist_descriptor(&flat, &p4).map_err(|e| e.to_string())?;
    let norm = d.iter().map(|x| x.abs()).fold(0.0, f64::max);
    ensure!(norm < 1e-6, "uniform image GIST norm {norm}");
    Ok(format!(
        "GIST 512/288, MFCC 20, uniform-image norm {norm:.1e}"
    ))
}

fn svm_correctness() -> Result<String, String> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_gap = 0.0f64;
    let mut worst_kkt = 0.0f64;
    for trial in 0..50 {
        let n = rng.random_range(2..=8);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let mut y: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        y[0] = 1.0;
        y[n - 1] = -1.0;
        let c = [0.1, 1.0, 10.0, 100.0][trial % 4];
        let k = support::rbf_gram(&points, rng.random_range(0.5..2.0));
        let model = svm_train(&k, &y, c, 1e-3).map_err(|e| e.to_string())?;
        let oracle = support::brute_force_dual(&k, &y, c);
        let gap = (model.dual_objective - oracle).abs();
        ensure!(
            gap <= 1e-4,
            "trial {trial}: objective {} vs oracle {oracle}",
            model.dual_objective
        );
        let kkt = model.kkt_residual(&k);
        ensure!(kkt <= 1e-3, "trial {trial}: KKT residual {kkt}");
        worst_gap = worst_gap.max(gap);
        worst_kkt = worst_kkt.max(kkt);
    }
    let identity = sigcamo::kernels::GramMatrix {
        n: 2,
        values: vec![1.0, 0.0, 0.0, 1.0],
        spec: KernelSpec::rbf(1.0),
        instance_ids: vec![0, 1],
    };
    let m = svm_train(&identity, &[1.0, -1.0], 10.0, 1e-3).map_err(|e| e.to_string())?;
    ensure!(
        m.alphas == vec![1.0, 1.0],
        "identity Gram alphas {:?}",
        m.alphas
    );
    ensure!(m.kkt_residual(&identity) <= 1e-3, "identity KKT residual");
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "worst dual gap {worst_gap:.1e}, worst KKT {worst_kkt:.1e}, alpha=(1,1)"
    ))
}

fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, d: usize, shift: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..d)
                .map(|_| shift + rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}

fn anomaly_detectors() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = GmmConfig::default();
    for fit in 0..100u64 {
        let d = rng.random_range(1..=3);
        let mut data = gaussian_rows(&mut rng, 60, d, 0.0);
        data.extend(gaussian_rows(&mut rng, 40, d, 4.0));
        let k = 1 + (fit as usize % 3);
        let m = gmm_fit(&data, k, fit, &cfg).map_err(|e| e.to_string())?;
        let trace = &m.log_likelihood_trace;
        ensure!(
            trace.windows(2).all(|w| w[1] >= w[0]),
            "fit {fit}: trace {trace:?}"
        );
    }
    let mut sequences = 0;
    for n in 1..=12usize {
        let scores: Vec<f64> = (0..n).map(|i| i as f64).collect();
        for bits in 0u32..(1 << n) {
            let y: Vec<f64> = (0..n).map(|i| f64::from((bits >> i) & 1)).collect();
            let cal = isotonic_fit(&scores, &y).map_err(|e| e.to_string())?;
            for (i, want) in support::min_max(&y).iter().enumerate() {
                let got = cal.apply(i as f64);
                ensure!(
                    (got - want).abs() <= 1e-12,
                    "n={n} bits={bits:b}: {got} vs {want}"
                );
            }
            sequences += 1;
        }
    }
    let c = c_factor(256);
    ensure!((c - 10.2448).abs() <= 5e-5, "c(256) = {c}");
    let mut hits = 0;
    for seed in 0..20u64 {
        let mut r = ChaCha8Rng::seed_from_u64(900 + seed);
        let mut data = gaussian_rows(&mut r, 255, 2, 0.0);
        data.push(vec![8.0, -8.0]);
        let f = iforest_train(&data, DEFAULT_TREES, 256, seed).map_err(|e| e.to_string())?;
        let scores: Vec<f64> = data.iter().map(|x| f.score(x)).collect();
        let top = (0..scores.len())
            .max_by(|&a, &b| scores[a].total_cmp(&scores[b]))
            .unwrap();
        hits += usize::from(top == 255);
    }
    ensure!(hits >= 19, "planted outlier on top in {hits}/20 runs");
    Ok(format!(
        "100 EM traces monotone, {sequences} isotonic sequences, c(256)={c:.5}, outlier {hits}/20"
    ))
}

fn metrics_and_curves() -> Result<String, String> {
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    for (t, p, count) in [
        (Label::Gesture, Label::Gesture, 90),
        (Label::NoGesture, Label::Gesture, 20),
        (Label::NoGesture, Label::NoGesture, 80),
        (Label::Gesture, Label::NoGesture, 10),
    ] {
        truth.extend(std::iter::repeat_n(t, count));
        pred.extend(std::iter::repeat_n(p, count));
    }
    let cm = confusion(&truth, &pred, Label::Gesture).map_err(|e| e.to_string())?;
    let m = metrics(&cm).map_err(|e| e.to_string())?;
    ensure!(m.accuracy == 170.0 / 200.0, "accuracy {}", m.accuracy);
    ensure!(
        m.precision == Some(90.0 / 110.0),
        "precision {:?}",
        m.precision
    );
    ensure!(
        m.sensitivity == Some(90.0 / 100.0),
        "sensitivity {:?}",
        m.sensitivity
    );
    ensure!(
        m.specificity == Some(80.0 / 100.0),
        "specificity {:?}",
        m.specificity
    );
    ensure!(
        (m.precision.unwrap() - 0.81818).abs() < 5e-6,
        "precision rounding"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(4..200);
        let labels: Vec<Label> = (0..n)
            .map(|i| {
                if i % 2 == 0 || rng.random_bool(0.3) {
                    Label::Gesture
                } else {
                    Label::NoGesture
                }
            })
            .collect();
        // Coarse scores so ties occur.
        let scores: Vec<f64> = labels
            .iter()
            .map(|l| {
                (rng.random_range(-3.0f64..3.0) + if *l == Label::Gesture { 1.0 } else { 0.0 })
                    .round()
                    / 2.0
            })
            .collect();
        let roc = roc_curve(&scores, &labels, Label::Gesture).map_err(|e| e.to_string())?;
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let flipped = roc_curve(&neg, &labels, Label::Gesture).map_err(|e| e.to_string())?;
        ensure!(roc.auc_den == flipped.auc_den, "denominators differ");
        ensure!(
            roc.auc_num + flipped.auc_num == roc.auc_den,
            "reflection identity fails"
        );
        // The identity is exact on the integer numerators; the f64 quotients
        // can differ from each other by one rounding.
        ensure!(
            (flipped.auc - (1.0 - roc.auc)).abs() <= f64::EPSILON,
            "reflection in floating point"
        );
        for f in [
            |s: f64| s.exp(),
            |s: f64| 3.0 * s + 7.0,
            |s: f64| s.powi(3) + s,
        ] {
            let t: Vec<f64> = scores.iter().map(|&s| f(s)).collect();
            let other = roc_curve(&t, &labels, Label::Gesture).map_err(|e| e.to_string())?;
            worst = worst.max((other.auc - roc.auc).abs());
        }
    }
    ensure!(
        worst <= 1e-12,
        "monotone transform moved the AUC by {worst}"
    );
    Ok(format!(
        "(0.85, {:.5}, 0.9, 0.8), reflection exact, transform deviation {worst:.1e}",
        m.precision.unwrap()
    ))
}

fn end_to_end_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.data.generator.rows = 4000;
    cfg
}

struct EndToEnd {
    digest: String,
}

fn end_to_end() -> Result<(String, EndToEnd), String> {
    let cfg = end_to_end_config();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let started = Instant::now();
    let outcome = run_pipeline(&cfg, dir.path()).map_err(|e| format!("{e:#}"))?;
    let elapsed = started.elapsed();
    let r = &outcome.report;
    let [n, g, ng] = r.datasets["acc-gyro-emg"];
    ensure!(n == 4000, "{n} instances");
    let ratio = g as f64 / ng as f64;
    let target_ratio = 13662.0 / 24845.0;
    ensure!(
        (ratio - target_ratio).abs() / target_ratio < 0.05,
        "class ratio {ratio:.4} vs {target_ratio:.4}"
    );
    ensure!(
        r.failed_cells.is_empty(),
        "failed cells: {:?}",
        r.failed_cells
    );
    ensure!(r.cells.len() == 189 + 9 + 27, "{} cells", r.cells.len());
    for method in [
        "svm-rbf-AM",
        "svm-scaled-mcjsd-HM",
        "mlp",
        "ocsvm",
        "iforest",
        "gmm",
    ] {
        for dt in ["signal", "image", "audio"] {
            for p in ["acc-gyro-emg", "acc-gyro", "emg"] {
                ensure!(
                    r.table
                        .get(method)
                        .and_then(|m| m.get(dt))
                        .and_then(|m| m.get(p))
                        .is_some(),
                    "table lacks {method}/{dt}/{p}"
                );
            }
        }
    }
    let best_svm = r
        .cells
        .values()
        .filter(|c| c.method.starts_with("svm-"))
        .max_by(|a, b| {
            a.metrics
                .unwrap()
                .accuracy
                .total_cmp(&b.metrics.unwrap().accuracy)
        })
        .unwrap();
    let svm_acc = best_svm.metrics.unwrap().accuracy;
    ensure!(
        svm_acc > best_svm.baseline.unwrap(),
        "best kernel {svm_acc} vs baseline {:?}",
        best_svm.baseline
    );
    let best_det = r
        .summary
        .best_detection
        .clone()
        .ok_or("no detector cells")?;
    ensure!(
        best_det.accuracy > best_det.baseline,
        "best detector {} vs baseline {}",
        best_det.accuracy,
        best_det.baseline
    );
    ensure!(elapsed < Duration::from_secs(30 * 60), "took {elapsed:?}");
    let bytes = std::fs::read(&outcome.report_path).map_err(|e| e.to_string())?;
    Ok((
        format!(
            "{} cells in {:.0}s; best kernel {} {:.3} vs {:.3}; best detector {} {:.3} vs {:.3}",
            r.cells.len(),
            elapsed.as_secs_f64(),
            best_svm.key(),
            svm_acc,
            best_svm.baseline.unwrap(),
            best_det.key,
            best_det.accuracy,
            best_det.baseline
        ),
        EndToEnd {
            digest: digest(&bytes),
        },
    ))
}

fn run_check(id: usize, name: &str, f: impl FnOnce() -> Result<String, String>) -> bool {
    let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    match outcome {
        Ok(detail) => {
            println!("criterion {id:>2} PASS  {name}: {detail}");
            true
        }
        Err(why) => {
            println!("criterion {id:>2} FAIL  {name}: {why}");
            false
        }
    }
}

fn main() {
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let selected = |id: usize| filter.is_empty() || filter.iter().any(|f| f == &id.to_string());
    let checks: [(usize, &str, Check); 9] = [
        (1, "divergence ordering", divergence_ordering),
        (2, "hand-derived CJSD values", hand_derived_values),
        (
            3,
            "JSD bound and M-CJSD triangle inequality",
            jsd_bound_and_triangle,
        ),
        (4, "kernel grid cardinality and Gram laws", kernel_grid),
        (5, "encoding round trip and padding", encoding_round_trip),
        (6, "descriptor lengths", descriptor_lengths),
        (7, "SVM correctness", svm_correctness),
        (8, "anomaly detectors", anomaly_detectors),
        (9, "metrics and curves", metrics_and_curves),
    ];
    let mut failed = 0;
    for (id, name, f) in checks {
        if selected(id) && !run_check(id, name, f) {
            failed += 1;
        }
    }
    if selected(10) || selected(11) {
        let mut first: Option<String> = None;
        if !run_check(10, "end-to-end synthetic experiment", || {
            let (detail, e) = end_to_end()?;
            first = Some(e.digest);
            Ok(detail)
        }) {
            failed += 1;
        }
        if selected(11)
            && !run_check(11, "determinism", || {
                let a = first.clone().ok_or("first run did not produce a report")?;
                let (_, b) = end_to_end()?;
                ensure!(a == b.digest, "digests differ: {a} vs {}", b.digest);
                Ok(format!("report digest {}", &a[..16]))
            })
        {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
