//! Binary SVM on precomputed Gram matrices, nested cross-validation, and a
//! one-hidden-layer perceptron used as a benchmark.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::ChisiniKind;
use crate::ingest::{derive_seed, Label};
use crate::kernels::{
    ByteCursor, DivergenceKind, GramMatrix, KernelFamily, KernelSpec, PairwiseTable,
};
use crate::smo::{default_max_iter, SmoProblem};
use crate::{Error, Result};

pub const DEFAULT_C_GRID: [f64; 4] = [0.1, 1.0, 10.0, 100.0];
pub const DEFAULT_TOL: f64 = 1e-3;

/// Sigma multipliers applied to the median pairwise distance.
pub fn default_sigma_multipliers() -> Vec<f64> {
    (-3..=3).map(|e| 2f64.powi(e)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub support_ids: Vec<usize>,
    /// +1 / -1 per training instance.
    pub labels: Vec<f64>,
    pub c: f64,
    pub spec: KernelSpec,
    pub converged: bool,
    pub dual_objective: f64,
}

fn check_labels(labels: &[f64]) -> Result<()> {
    if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
        return Err(Error::invalid("labels must be +1 or -1"));
    }
    let pos = labels.iter().filter(|&&y| y > 0.0).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmOptions {
    pub c: f64,
    /// Multipliers of C for the negative and positive class.
    pub class_weight: [f64; 2],
    pub tol: f64,
    /// `None` uses the solver default.
    pub max_iter: Option<usize>,
}

impl SvmOptions {
    pub fn new(c: f64, tol: f64) -> SvmOptions {
        SvmOptions {
            c,
            class_weight: [1.0, 1.0],
            tol,
            max_iter: None,
        }
    }
}

pub fn svm_train(gram: &GramMatrix, labels: &[f64], c: f64, tol: f64) -> Result<SvmModel> {
    svm_train_with(gram, labels, &SvmOptions::new(c, tol))
}

pub fn svm_train_with(gram: &GramMatrix, labels: &[f64], opts: &SvmOptions) -> Result<SvmModel> {
    let SvmOptions {
        c,
        class_weight,
        tol,
        max_iter,
    } = *opts;
    let n = gram.n;
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    if n < 2 {
        return Err(Error::invalid("svm needs at least two instances"));
    }
    if !(c > 0.0) || !(tol > 0.0) {
        return Err(Error::invalid("C and tol must be positive"));
    }
    check_labels(labels)?;
    let asym = gram.max_asymmetry();
    if asym > 1e-12 {
        return Err(Error::NotSymmetric(asym));
    }
    let upper = labels
        .iter()
        .map(|&y| {
            c * if y > 0.0 {
                class_weight[1]
            } else {
                class_weight[0]
            }
        })
        .collect();
    let prob = SmoProblem {
        kernel: &gram.values,
        y: labels,
        p: vec![-1.0; n],
        upper,
        alpha: vec![0.0; n],
    };
    let sol = prob.solve(tol, max_iter.unwrap_or_else(|| default_max_iter(n)))?;
    let support_ids = sol
        .alpha
        .iter()
        .enumerate()
        .filter(|(_, &a)| a > 0.0)
        .map(|(i, _)| i)
        .collect();
    Ok(SvmModel {
        alphas: sol.alpha,
        bias: -sol.rho,
        support_ids,
        labels: labels.to_vec(),
        c,
        spec: gram.spec,
        converged: sol.converged,
        dual_objective: -sol.objective,
    })
}

impl SvmModel {
    /// `kernel_row[i] = K(x, x_i)` over all training instances.
    pub fn decision(&self, kernel_row: &[f64]) -> Result<f64> {
        if kernel_row.len() != self.alphas.len() {
            return Err(Error::DimensionMismatch {
                expected: self.alphas.len(),
                found: kernel_row.len(),
            });
        }
        Ok(self
            .support_ids
            .iter()
            .map(|&i| self.alphas[i] * self.labels[i] * kernel_row[i])
            .sum::<f64>()
            + self.bias)
    }

    /// Sign of the decision; an exact zero goes to the positive class.
    pub fn predict(&self, kernel_row: &[f64]) -> Result<Label> {
        Ok(if self.decision(kernel_row)? >= 0.0 {
            Label::Gesture
        } else {
            Label::NoGesture
        })
    }

    /// Largest KKT violation over the training set.
    pub fn kkt_residual(&self, gram: &GramMatrix) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..gram.n {
            let margin = self.labels[i] * self.decision(gram.row(i)).expect("row length");
            let upper = self.c_for(i);
            let v = if self.alphas[i] <= 0.0 {
                (1.0 - margin).max(0.0)
            } else if self.alphas[i] >= upper {
                (margin - 1.0).max(0.0)
            } else {
                (margin - 1.0).abs()
            };
            worst = worst.max(v);
        }
        worst
    }

    fn c_for(&self, _i: usize) -> f64 {
        self.c
    }

    pub fn equality_residual(&self) -> f64 {
        self.alphas
            .iter()
            .zip(&self.labels)
            .map(|(a, y)| a * y)
            .sum::<f64>()
            .abs()
    }

    /// Layout: magic `CKM1`, u32 version (1), u8 family, u8 divergence,
    /// u8 mean (255 = none), f64 sigma, f64 C, f64 bias, u64 n,
    /// n f64 alphas, n bytes of labels (1 = +1, 0 = -1). Little-endian.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(b"CKM1")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&[
            self.spec.family as u8,
            self.spec.divergence as u8,
            self.spec.mean.map_or(255, ChisiniKind::code),
        ])?;
        for v in [self.spec.sigma, self.c, self.bias] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(self.alphas.len() as u64).to_le_bytes())?;
        for a in &self.alphas {
            w.write_all(&a.to_le_bytes())?;
        }
        let labels: Vec<u8> = self.labels.iter().map(|&y| u8::from(y > 0.0)).collect();
        w.write_all(&labels)
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<SvmModel> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::io("<model reader>", e))?;
        let mut cur = ByteCursor::new(&bytes);
        if cur.take(4)? != b"CKM1" {
            return Err(Error::Format("bad model magic".into()));
        }
        let version = cur.u32()?;
        if version != 1 {
            return Err(Error::Format(format!(
                "unsupported model version {version}"
            )));
        }
        let codes = cur.take(3)?;
        let family = match codes[0] {
            0 => KernelFamily::Rbf,
            1 => KernelFamily::Amplified,
            2 => KernelFamily::Scaled,
            3 => KernelFamily::AmplifiedScaled,
            c => return Err(Error::Format(format!("bad family code {c}"))),
        };
        let divergence = match codes[1] {
            0 => DivergenceKind::None,
            1 => DivergenceKind::Cjsd,
            2 => DivergenceKind::Mcjsd,
            c => return Err(Error::Format(format!("bad divergence code {c}"))),
        };
        let mean = match codes[2] {
            255 => None,
            c => Some(
                ChisiniKind::from_code(c).ok_or_else(|| Error::Format(format!("bad mean {c}")))?,
            ),
        };
        let sigma = cur.f64()?;
        let c = cur.f64()?;
        let bias = cur.f64()?;
        let n = cur.u64()? as usize;
        let alphas = (0..n).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        let labels = cur
            .take(n)?
            .iter()
            .map(|&b| if b == 1 { 1.0 } else { -1.0 })
            .collect();
        cur.finish()?;
        let support_ids = alphas
            .iter()
            .enumerate()
            .filter(|(_, &a)| a > 0.0)
            .map(|(i, _)| i)
            .collect();
        Ok(SvmModel {
            alphas,
            bias,
            support_ids,
            labels,
            c,
            spec: KernelSpec {
                family,
                divergence,
                mean,
                sigma,
            },
            converged: true,
            dual_objective: f64::NAN,
        })
    }
}

pub fn signed_labels(labels: &[Label]) -> Vec<f64> {
    labels.iter().map(|l| l.sign()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub folds: usize,
    pub inner_folds: usize,
    pub c_grid: Vec<f64>,
    pub sigma_multipliers: Vec<f64>,
    pub tol: f64,
    /// C multipliers for (no-gesture, gesture).
    pub class_weight: [f64; 2],
    /// SMO iteration cap per training run.
    pub max_iter: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            inner_folds: 3,
            c_grid: DEFAULT_C_GRID.to_vec(),
            sigma_multipliers: default_sigma_multipliers(),
            tol: DEFAULT_TOL,
            class_weight: [1.0, 1.0],
            max_iter: 200_000,
        }
    }
}

impl CvConfig {
    fn options(&self, c: f64) -> SvmOptions {
        SvmOptions {
            c,
            class_weight: self.class_weight,
            tol: self.tol,
            max_iter: Some(self.max_iter),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub accuracy: f64,
    /// `None` for models without that hyperparameter.
    pub sigma: Option<f64>,
    pub c: Option<f64>,
    /// Original indices of the held-out instances.
    pub test: Vec<usize>,
    /// Decision value per held-out instance; positive means gesture.
    pub decisions: Vec<f64>,
    /// Original indices that took part in hyperparameter selection.
    pub selection_pool: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub spec: String,
    pub seed: u64,
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    pub standard_error: f64,
    pub folds: Vec<FoldRecord>,
}

/// Sample mean and standard error (sample standard deviation over sqrt(m)).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Stratified fold id per position of `labels`, after a seeded shuffle.
pub fn stratified_folds(labels: &[Label], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::invalid("need at least two folds"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; labels.len()];
    let mut offset = 0;
    for class in [Label::NoGesture, Label::Gesture] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < folds {
            return Err(Error::DegenerateClass {
                label: class.as_u8(),
                count: members.len(),
                needed: folds,
            });
        }
        members.shuffle(&mut rng);
        for (r, &i) in members.iter().enumerate() {
            assignment[i] = (r + offset) % folds;
        }
        offset += members.len();
    }
    Ok(assignment)
}

/// Kernel blocks of one train/test split, reusable across C values.
struct SplitKernels<'a> {
    gram: GramMatrix,
    cross: Vec<f64>,
    y_train: Vec<f64>,
    y_test: Vec<f64>,
    cfg: &'a CvConfig,
}

impl<'a> SplitKernels<'a> {
    fn new(
        table: &PairwiseTable,
        spec: &KernelSpec,
        labels: &[f64],
        train: &[usize],
        test: &[usize],
        cfg: &'a CvConfig,
    ) -> Result<SplitKernels<'a>> {
        Ok(SplitKernels {
            gram: table.gram_on(spec, train)?,
            cross: table.cross(spec, test, train),
            y_train: train.iter().map(|&i| labels[i]).collect(),
            y_test: test.iter().map(|&i| labels[i]).collect(),
            cfg,
        })
    }

    /// Accuracy and decision values on the test part.
    fn score(&self, c: f64) -> Result<(f64, Vec<f64>)> {
        let model = svm_train_with(&self.gram, &self.y_train, &self.cfg.options(c))?;
        let m = self.y_train.len();
        let mut correct = 0usize;
        let mut decisions = Vec::with_capacity(self.y_test.len());
        for (r, &y) in self.y_test.iter().enumerate() {
            let d = model.decision(&self.cross[r * m..(r + 1) * m])?;
            if (d >= 0.0) == (y > 0.0) {
                correct += 1;
            }
            decisions.push(d);
        }
        Ok((correct as f64 / self.y_test.len() as f64, decisions))
    }
}

fn median_distance_on(table: &PairwiseTable, idx: &[usize]) -> f64 {
    let mut d: Vec<f64> = Vec::with_capacity(idx.len() * idx.len() / 2);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            d.push(table.sq_dist[i * table.n + j].sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let med = if d.len().is_multiple_of(2) {
        0.5 * (d[mid - 1] + d[mid])
    } else {
        d[mid]
    };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

/// Picks (sigma, C) by inner cross-validation on `pool` only.
pub fn select_hyperparameters(
    table: &PairwiseTable,
    spec: &KernelSpec,
    labels: &[Label],
    pool: &[usize],
    cfg: &CvConfig,
    seed: u64,
) -> Result<(f64, f64)> {
    let y = signed_labels(labels);
    let pool_labels: Vec<Label> = pool.iter().map(|&i| labels[i]).collect();
    let inner = stratified_folds(&pool_labels, cfg.inner_folds, seed)?;
    let base = median_distance_on(table, pool);
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..cfg.inner_folds)
        .map(|f| {
            let pick = |keep: bool| -> Vec<usize> {
                (0..pool.len())
                    .filter(|&k| (inner[k] == f) != keep)
                    .map(|k| pool[k])
                    .collect()
            };
            (pick(true), pick(false))
        })
        .collect();
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for &mult in &cfg.sigma_multipliers {
        let sigma = base * mult;
        let s = spec.with_sigma(sigma);
        let blocks = splits
            .iter()
            .map(|(train, test)| SplitKernels::new(table, &s, &y, train, test, cfg))
            .collect::<Result<Vec<_>>>()?;
        for &c in &cfg.c_grid {
            let mut total = 0.0;
            for b in &blocks {
                total += b.score(c)?.0;
            }
            // Strict improvement keeps the first grid point on ties.
            let acc = total / cfg.inner_folds as f64;
            if acc > best.0 {
                best = (acc, sigma, c);
            }
        }
    }
    Ok((best.1, best.2))
}

/// Nested cross-validation of each spec on one seeded randomization.
///
/// `table` holds the pairwise quantities of all instances; the outer folds
/// come from a stratified shuffle under `seed`, and sigma/C are chosen per
/// outer fold by inner cross-validation on that fold's training part.
pub fn nested_cv(
    table: &PairwiseTable,
    labels: &[Label],
    specs: &[KernelSpec],
    cfg: &CvConfig,
    seed: u64,
) -> Result<Vec<CvReport>> {
    if labels.len() != table.n {
        return Err(Error::DimensionMismatch {
            expected: table.n,
            found: labels.len(),
        });
    }
    if cfg.c_grid.is_empty() || cfg.sigma_multipliers.is_empty() {
        return Err(Error::invalid("empty hyperparameter grid"));
    }
    for s in specs {
        s.validate()?;
    }
    let outer = stratified_folds(labels, cfg.folds, seed)?;
    let y = signed_labels(labels);
    let cells: Vec<(usize, usize)> = (0..specs.len())
        .flat_map(|s| (0..cfg.folds).map(move |f| (s, f)))
        .collect();
    let records: Vec<FoldRecord> = cells
        .par_iter()
        .map(|&(s, f)| {
            let train: Vec<usize> = (0..labels.len()).filter(|&i| outer[i] != f).collect();
            let test: Vec<usize> = (0..labels.len()).filter(|&i| outer[i] == f).collect();
            let inner_seed = derive_seed(seed, &format!("inner-{f}"));
            let (sigma, c) =
                select_hyperparameters(table, &specs[s], labels, &train, cfg, inner_seed)?;
            let spec = specs[s].with_sigma(sigma);
            let (accuracy, decisions) =
                SplitKernels::new(table, &spec, &y, &train, &test, cfg)?.score(c)?;
            Ok(FoldRecord {
                accuracy,
                sigma: Some(sigma),
                c: Some(c),
                test,
                decisions,
                selection_pool: train,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut reports = Vec::with_capacity(specs.len());
    for (s, chunk) in records.chunks(cfg.folds).enumerate() {
        let fold_accuracies: Vec<f64> = chunk.iter().map(|r| r.accuracy).collect();
        let (mean, standard_error) = mean_and_se(&fold_accuracies);
        reports.push(CvReport {
            spec: specs[s].key(),
            seed,
            fold_accuracies,
            mean,
            standard_error,
            folds: chunk.to_vec(),
        });
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            epochs: 200,
            learning_rate: 0.05,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// One hidden ReLU layer, sigmoid output, binary cross-entropy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub input: usize,
    pub hidden: usize,
    /// `hidden x input`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub seed: u64,
}

/// Gradients laid out like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl MlpModel {
    pub fn init(input: usize, hidden: usize, seed: u64) -> Result<MlpModel> {
        if hidden == 0 || input == 0 {
            return Err(Error::invalid(
                "mlp needs at least one input and one hidden unit",
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lim1 = (6.0 / input as f64).sqrt();
        let lim2 = (6.0 / hidden as f64).sqrt();
        Ok(MlpModel {
            input,
            hidden,
            w1: (0..hidden * input)
                .map(|_| rng.random_range(-lim1..lim1))
                .collect(),
            b1: vec![0.01; hidden],
            w2: (0..hidden).map(|_| rng.random_range(-lim2..lim2)).collect(),
            b2: 0.0,
            seed,
        })
    }

    fn hidden_act(&self, x: &[f64]) -> Vec<f64> {
        (0..self.hidden)
            .map(|h| {
                let row = &self.w1[h * self.input..(h + 1) * self.input];
                let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[h];
                z.max(0.0)
            })
            .collect()
    }

    /// Output logit.
    pub fn logit(&self, x: &[f64]) -> f64 {
        let a = self.hidden_act(x);
        a.iter().zip(&self.w2).map(|(a, w)| a * w).sum::<f64>() + self.b2
    }

    /// Probability of the gesture class.
    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    /// Mean cross-entropy and its gradient over a batch; targets are 0/1.
    pub fn loss_and_grad(&self, xs: &[&[f64]], targets: &[f64]) -> (f64, MlpGrad) {
        let mut g = MlpGrad {
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.hidden],
            w2: vec![0.0; self.hidden],
            b2: 0.0,
        };
        let mut loss = 0.0;
        let m = xs.len() as f64;
        for (x, &t) in xs.iter().zip(targets) {
            let a = self.hidden_act(x);
            let z = a.iter().zip(&self.w2).map(|(a, w)| a * w).sum::<f64>() + self.b2;
            // Stable log(1 + e^z) - t z.
            loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - t * z;
            let dz = (sigmoid(z) - t) / m;
            g.b2 += dz;
            for h in 0..self.hidden {
                g.w2[h] += dz * a[h];
                if a[h] > 0.0 {
                    let da = dz * self.w2[h];
                    g.b1[h] += da;
                    for (k, xv) in x.iter().enumerate() {
                        g.w1[h * self.input + k] += da * xv;
                    }
                }
            }
        }
        (loss / m, g)
    }

    fn step(&mut self, g: &MlpGrad, lr: f64) {
        self.w1
            .iter_mut()
            .zip(&g.w1)
            .for_each(|(w, d)| *w -= lr * d);
        self.b1
            .iter_mut()
            .zip(&g.b1)
            .for_each(|(w, d)| *w -= lr * d);
        self.w2
            .iter_mut()
            .zip(&g.w2)
            .for_each(|(w, d)| *w -= lr * d);
        self.b2 -= lr * g.b2;
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mini-batch gradient descent. Returns the model and the full-data loss
/// recorded after every epoch.
pub fn mlp_train(
    xs: &[Vec<f64>],
    labels: &[Label],
    cfg: &MlpConfig,
) -> Result<(MlpModel, Vec<f64>)> {
    if xs.is_empty() || xs.len() != labels.len() {
        return Err(Error::invalid("mlp training data is empty or misaligned"));
    }
    let d = xs[0].len();
    if xs.iter().any(|x| x.len() != d) {
        return Err(Error::invalid("ragged mlp training data"));
    }
    let mut model = MlpModel::init(d, cfg.hidden, cfg.seed)?;
    let targets: Vec<f64> = labels.iter().map(|l| l.as_u8() as f64).collect();
    let batch = cfg.batch_size.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "mlp-batches"));
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let all: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let bx: Vec<&[f64]> = chunk.iter().map(|&i| xs[i].as_slice()).collect();
            let bt: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
            let (loss, g) = model.loss_and_grad(&bx, &bt);
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "mlp loss diverged in epoch {epoch}"
                )));
            }
            model.step(&g, cfg.learning_rate);
        }
        let (loss, _) = model.loss_and_grad(&all, &targets);
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "mlp loss diverged in epoch {epoch}"
            )));
        }
        trace.push(loss);
    }
    Ok((model, trace))
}

/// Per-feature standardization fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(xs: &[Vec<f64>]) -> Standardizer {
        let d = xs.first().map_or(0, Vec::len);
        let n = xs.len().max(1) as f64;
        let mean: Vec<f64> = (0..d)
            .map(|k| xs.iter().map(|x| x[k]).sum::<f64>() / n)
            .collect();
        let scale = (0..d)
            .map(|k| {
                let v = xs.iter().map(|x| (x[k] - mean[k]).powi(2)).sum::<f64>() / n;
                if v > 0.0 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// Outer stratified cross-validation of the perceptron with a fixed
/// configuration; features are standardized on each training part.
pub fn mlp_cv(
    xs: &[Vec<f64>],
    labels: &[Label],
    cfg: &MlpConfig,
    folds: usize,
    seed: u64,
) -> Result<CvReport> {
    if xs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: xs.len(),
        });
    }
    let outer = stratified_folds(labels, folds, seed)?;
    let records = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..labels.len()).filter(|&i| outer[i] != f).collect();
            let test: Vec<usize> = (0..labels.len()).filter(|&i| outer[i] == f).collect();
            let raw: Vec<Vec<f64>> = train.iter().map(|&i| xs[i].clone()).collect();
            let scaler = Standardizer::fit(&raw);
            let tx: Vec<Vec<f64>> = raw.iter().map(|x| scaler.apply(x)).collect();
            let ty: Vec<Label> = train.iter().map(|&i| labels[i]).collect();
            let fold_cfg = MlpConfig {
                seed: derive_seed(seed, &format!("mlp-{f}")),
                ..cfg.clone()
            };
            let (model, _) = mlp_train(&tx, &ty, &fold_cfg)?;
            let decisions: Vec<f64> = test
                .iter()
                .map(|&i| model.logit(&scaler.apply(&xs[i])))
                .collect();
            let correct = test
                .iter()
                .zip(&decisions)
                .filter(|(&i, &d)| (d >= 0.0) == (labels[i] == Label::Gesture))
                .count();
            Ok(FoldRecord {
                accuracy: correct as f64 / test.len() as f64,
                sigma: None,
                c: None,
                test,
                decisions,
                selection_pool: train,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fold_accuracies: Vec<f64> = records.iter().map(|r| r.accuracy).collect();
    let (mean, standard_error) = mean_and_se(&fold_accuracies);
    Ok(CvReport {
        spec: "mlp".into(),
        seed,
        fold_accuracies,
        mean,
        standard_error,
        folds: records,
    })
}
