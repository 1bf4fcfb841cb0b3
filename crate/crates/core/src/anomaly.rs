//! Novelty detectors trained on a single class: one-class SVM, Isolation
//! Forest, and a Gaussian mixture whose log-likelihood is calibrated into a
//! probability by isotonic regression.
//!
//! Every detector exposes an inlier score where larger means "more like the
//! training class"; an instance is an inlier iff its score is at least the
//! threshold.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{derive_seed, stratified_indices, Dataset, Instance, Label, SplitTag};
use crate::kernels::squared_distance;
use crate::smo::{default_max_iter, SmoProblem};
use crate::{Error, Result};

pub const EULER_GAMMA: f64 = 0.5772156649;

fn check_rows(data: &[Vec<f64>]) -> Result<usize> {
    let d = data.first().map_or(0, Vec::len);
    if d == 0 {
        return Err(Error::EmptyDataset);
    }
    for row in data {
        if row.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("detector input".into()));
        }
    }
    Ok(d)
}

fn median_distance(data: &[Vec<f64>]) -> f64 {
    let mut d = Vec::new();
    for i in 0..data.len() {
        for j in i + 1..data.len() {
            d.push(squared_distance(&data[i], &data[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d[d.len() / 2];
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcSvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub rho: f64,
    pub nu: f64,
    pub sigma: f64,
    pub converged: bool,
}

/// `sigma = None` uses the median pairwise distance of the training data.
pub fn ocsvm_train(data: &[Vec<f64>], nu: f64, sigma: Option<f64>) -> Result<OcSvmModel> {
    let n = data.len();
    if n < 2 {
        return Err(Error::Degenerate(
            "one-class svm needs at least two points".into(),
        ));
    }
    check_rows(data)?;
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::invalid(format!("nu must lie in (0, 1], got {nu}")));
    }
    if data.iter().all(|r| r == &data[0]) {
        return Err(Error::Degenerate(
            "all training points are identical".into(),
        ));
    }
    let sigma = sigma.unwrap_or_else(|| median_distance(data));
    if !(sigma > 0.0) {
        return Err(Error::invalid("sigma must be positive"));
    }
    let gamma = 1.0 / (2.0 * sigma * sigma);
    let kernel: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            (0..n).map(move |j| (-gamma * squared_distance(&data[i], &data[j])).exp())
        })
        .collect();
    let upper = 1.0 / (nu * n as f64);
    // Feasible start with sum 1: fill from the front.
    let mut alpha = vec![0.0; n];
    let mut left = 1.0f64;
    for a in alpha.iter_mut() {
        if left <= 0.0 {
            break;
        }
        *a = left.min(upper);
        left -= *a;
    }
    let y = vec![1.0; n];
    let prob = SmoProblem {
        kernel: &kernel,
        y: &y,
        p: vec![0.0; n],
        upper: vec![upper; n],
        alpha,
    };
    let sol = prob.solve(1e-6, default_max_iter(n))?;
    let mut support_vectors = Vec::new();
    let mut alphas = Vec::new();
    for (i, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(data[i].clone());
            alphas.push(a);
        }
    }
    Ok(OcSvmModel {
        support_vectors,
        alphas,
        rho: sol.rho,
        nu,
        sigma,
        converged: sol.converged,
    })
}

impl OcSvmModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        let gamma = 1.0 / (2.0 * self.sigma * self.sigma);
        self.support_vectors
            .iter()
            .zip(&self.alphas)
            .map(|(sv, a)| a * (-gamma * squared_distance(sv, x)).exp())
            .sum::<f64>()
            - self.rho
    }
}

/// Average unsuccessful-search path length in a binary search tree of `m` keys.
pub fn c_factor(m: usize) -> f64 {
    if m < 2 {
        return 0.0;
    }
    let m = m as f64;
    2.0 * ((m - 1.0).ln() + EULER_GAMMA) - 2.0 * (m - 1.0) / m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum IsoNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

/// Nodes in a flat arena; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoTree {
    pub nodes: Vec<IsoNode>,
}

impl IsoTree {
    fn build(data: &[Vec<f64>], idx: &[usize], limit: usize, rng: &mut ChaCha8Rng) -> IsoTree {
        let mut tree = IsoTree { nodes: Vec::new() };
        tree.grow(data, idx.to_vec(), 0, limit, rng);
        tree
    }

    fn grow(
        &mut self,
        data: &[Vec<f64>],
        idx: Vec<usize>,
        depth: usize,
        limit: usize,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let id = self.nodes.len();
        self.nodes.push(IsoNode::Leaf { size: idx.len() });
        if depth >= limit || idx.len() <= 1 {
            return id;
        }
        let d = data[idx[0]].len();
        let spans: Vec<(usize, f64, f64)> = (0..d)
            .filter_map(|f| {
                let (lo, hi) = idx
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                        (lo.min(data[i][f]), hi.max(data[i][f]))
                    });
                (hi > lo).then_some((f, lo, hi))
            })
            .collect();
        if spans.is_empty() {
            return id;
        }
        let (feature, lo, hi) = spans[rng.random_range(0..spans.len())];
        let mut threshold = rng.random_range(lo..hi);
        if threshold <= lo {
            threshold = 0.5 * (lo + hi);
        }
        let (l, r): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| data[i][feature] < threshold);
        let left = self.grow(data, l, depth + 1, limit, rng);
        let right = self.grow(data, r, depth + 1, limit, rng);
        self.nodes[id] = IsoNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    pub fn depth(&self) -> usize {
        fn go(t: &IsoTree, n: usize) -> usize {
            match t.nodes[n] {
                IsoNode::Leaf { .. } => 0,
                IsoNode::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    pub fn path_length(&self, x: &[f64]) -> f64 {
        let mut node = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[node] {
                IsoNode::Leaf { size } => return depth + c_factor(size),
                IsoNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[feature] < threshold { left } else { right };
                    depth += 1.0;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoForest {
    pub trees: Vec<IsoTree>,
    pub subsample_size: usize,
    pub n_trees: usize,
    pub seed: u64,
}

pub const DEFAULT_TREES: usize = 100;
pub const DEFAULT_SUBSAMPLE: usize = 256;

pub fn iforest_train(
    data: &[Vec<f64>],
    n_trees: usize,
    psi: usize,
    seed: u64,
) -> Result<IsoForest> {
    check_rows(data)?;
    if psi < 2 {
        return Err(Error::invalid(format!(
            "subsample size must be at least 2, got {psi}"
        )));
    }
    if psi > data.len() {
        return Err(Error::invalid(format!(
            "subsample size {psi} exceeds the {} training rows",
            data.len()
        )));
    }
    if n_trees == 0 {
        return Err(Error::invalid("need at least one tree"));
    }
    let limit = (psi as f64).log2().ceil() as usize;
    let trees = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("tree-{t}")));
            let mut idx = sample(&mut rng, data.len(), psi).into_vec();
            idx.sort_unstable();
            IsoTree::build(data, &idx, limit, &mut rng)
        })
        .collect();
    Ok(IsoForest {
        trees,
        subsample_size: psi,
        n_trees,
        seed,
    })
}

impl IsoForest {
    pub fn mean_path_length(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Anomaly score `2^(-E[h] / c(psi))`.
    pub fn score(&self, x: &[f64]) -> f64 {
        2f64.powf(-self.mean_path_length(x) / c_factor(self.subsample_size))
    }
}

pub fn iforest_score(f: &IsoForest, x: &[f64]) -> f64 {
    f.score(x)
}

#[derive(Debug, Clone)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_det: f64,
}

impl GmmComponent {
    fn new(weight: f64, mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<GmmComponent> {
        let chol = Cholesky::new(covariance.clone())
            .ok_or_else(|| Error::Degenerate("covariance is not positive definite".into()))?
            .l();
        let log_det = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(GmmComponent {
            weight,
            mean,
            covariance,
            chol,
            log_det,
        })
    }

    fn log_density(&self, x: &DVector<f64>) -> f64 {
        let d = x.len() as f64;
        let diff = x - &self.mean;
        let z = self
            .chol
            .solve_lower_triangular(&diff)
            .expect("cholesky factor has a positive diagonal");
        -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + self.log_det + z.norm_squared())
    }
}

#[derive(Debug, Clone)]
pub struct GmmModel {
    pub components: Vec<GmmComponent>,
    pub ridge: f64,
    /// Total training log-likelihood after each EM iteration (first entry is
    /// the initialization).
    pub log_likelihood_trace: Vec<f64>,
    pub n_train: usize,
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].mean.len()
    }

    fn joint(&self, x: &DVector<f64>) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| {
                if c.weight > 0.0 {
                    c.weight.ln() + c.log_density(x)
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect()
    }

    /// Log-likelihood of one point.
    pub fn score(&self, x: &[f64]) -> f64 {
        log_sum_exp(&self.joint(&DVector::from_column_slice(x)))
    }

    pub fn responsibilities(&self, x: &[f64]) -> Vec<f64> {
        let j = self.joint(&DVector::from_column_slice(x));
        let z = log_sum_exp(&j);
        j.iter().map(|v| (v - z).exp()).collect()
    }

    pub fn free_parameters(&self) -> usize {
        let (k, d) = (self.k(), self.dim());
        k - 1 + k * d + k * d * (d + 1) / 2
    }

    pub fn bic(&self) -> f64 {
        let ll = *self
            .log_likelihood_trace
            .last()
            .expect("trace is never empty");
        -2.0 * ll + self.free_parameters() as f64 * (self.n_train as f64).ln()
    }
}

pub fn gmm_score(m: &GmmModel, x: &[f64]) -> f64 {
    m.score(x)
}

fn kmeans_pp(xs: &[DVector<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = xs.len();
    let mut centers = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = xs
        .iter()
        .map(|x| (x - &xs[centers[0]]).norm_squared())
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(next);
        for (i, x) in xs.iter().enumerate() {
            d2[i] = d2[i].min((x - &xs[next]).norm_squared());
        }
    }
    centers
}

fn m_step(
    xs: &[DVector<f64>],
    resp: &[Vec<f64>],
    ridge: f64,
    prev: Option<&[GmmComponent]>,
) -> Result<Vec<GmmComponent>> {
    let n = xs.len() as f64;
    let d = xs[0].len();
    let k = resp[0].len();
    let mut out = Vec::with_capacity(k);
    for c in 0..k {
        let nk: f64 = resp.iter().map(|r| r[c]).sum();
        if !(nk > 0.0) {
            // Empty component: keep its shape, drop its weight.
            let (mean, cov) = match prev {
                Some(p) => (p[c].mean.clone(), p[c].covariance.clone()),
                None => (xs[0].clone(), DMatrix::identity(d, d)),
            };
            out.push(GmmComponent::new(0.0, mean, cov)?);
            continue;
        }
        let mut mean = DVector::zeros(d);
        for (x, r) in xs.iter().zip(resp) {
            mean.axpy(r[c], x, 1.0);
        }
        mean /= nk;
        let mut cov = DMatrix::zeros(d, d);
        for (x, r) in xs.iter().zip(resp) {
            let diff = x - &mean;
            cov.ger(r[c], &diff, &diff, 1.0);
        }
        cov /= nk;
        cov = (&cov + cov.transpose()) * 0.5;
        for i in 0..d {
            cov[(i, i)] += ridge;
        }
        out.push(GmmComponent::new(nk / n, mean, cov)?);
    }
    let total: f64 = out.iter().map(|c| c.weight).sum();
    for c in &mut out {
        c.weight /= total;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmConfig {
    pub max_iter: usize,
    pub ridge: f64,
    /// Stop once an iteration gains less than this much total log-likelihood.
    pub tol: f64,
    pub max_k: usize,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            ridge: 1e-6,
            tol: 1e-6,
            max_k: 5,
        }
    }
}

/// EM from a k-means++ seeding. An iteration that would lower the
/// log-likelihood (possible only through the ridge) is discarded and ends
/// the fit, so the recorded trace never decreases.
pub fn gmm_fit(data: &[Vec<f64>], k: usize, seed: u64, cfg: &GmmConfig) -> Result<GmmModel> {
    check_rows(data)?;
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if data.len() <= k {
        return Err(Error::invalid(format!(
            "need more than {k} rows, got {}",
            data.len()
        )));
    }
    if !(cfg.ridge > 0.0) {
        return Err(Error::invalid("ridge must be positive"));
    }
    let xs: Vec<DVector<f64>> = data.iter().map(|r| DVector::from_column_slice(r)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = kmeans_pp(&xs, k, &mut rng);
    let resp: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| {
            let best = (0..k)
                .min_by(|&a, &b| {
                    (x - &xs[centers[a]])
                        .norm_squared()
                        .total_cmp(&(x - &xs[centers[b]]).norm_squared())
                })
                .expect("k >= 1");
            (0..k).map(|c| if c == best { 1.0 } else { 0.0 }).collect()
        })
        .collect();
    let mut model = GmmModel {
        components: m_step(&xs, &resp, cfg.ridge, None)?,
        ridge: cfg.ridge,
        log_likelihood_trace: Vec::new(),
        n_train: data.len(),
    };
    let e_step = |m: &GmmModel| -> Result<(f64, Vec<Vec<f64>>)> {
        let mut ll = 0.0;
        let mut resp = Vec::with_capacity(xs.len());
        for x in &xs {
            let j = m.joint(x);
            let z = log_sum_exp(&j);
            ll += z;
            resp.push(j.iter().map(|v| (v - z).exp()).collect());
        }
        if !ll.is_finite() {
            return Err(Error::NonFinite("gmm log-likelihood".into()));
        }
        Ok((ll, resp))
    };
    let (mut ll, mut resp) = e_step(&model)?;
    model.log_likelihood_trace.push(ll);
    for _ in 0..cfg.max_iter {
        let next = GmmModel {
            components: m_step(&xs, &resp, cfg.ridge, Some(&model.components))?,
            ..model.clone()
        };
        let (next_ll, next_resp) = e_step(&next)?;
        if next_ll < ll {
            break;
        }
        let gain = next_ll - ll;
        model.components = next.components;
        model.log_likelihood_trace.push(next_ll);
        ll = next_ll;
        resp = next_resp;
        if gain < cfg.tol {
            break;
        }
    }
    Ok(model)
}

/// Fits k = 1..=max_k (skipping k >= n) and keeps the lowest BIC.
pub fn gmm_select(data: &[Vec<f64>], seed: u64, cfg: &GmmConfig) -> Result<GmmModel> {
    let ks: Vec<usize> = (1..=cfg.max_k.max(1)).filter(|&k| k < data.len()).collect();
    let fits: Vec<Result<GmmModel>> = ks
        .par_iter()
        .map(|&k| gmm_fit(data, k, derive_seed(seed, &format!("gmm-{k}")), cfg))
        .collect();
    let mut best: Option<GmmModel> = None;
    let mut first_err = None;
    for f in fits {
        match f {
            Ok(m) => {
                if best.as_ref().is_none_or(|b| m.bic() < b.bic()) {
                    best = Some(m);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap_or(Error::EmptyDataset))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicCalibrator {
    /// Distinct scores, ascending.
    pub breakpoints: Vec<f64>,
    /// Non-decreasing fitted values in [0, 1], one per breakpoint.
    pub values: Vec<f64>,
}

/// Pool-adjacent-violators over `targets` ordered by ascending `scores`.
/// Tied scores are pooled before fitting so they share one value.
pub fn isotonic_fit(scores: &[f64], targets: &[f64]) -> Result<IsotonicCalibrator> {
    if scores.is_empty() || scores.len() != targets.len() {
        return Err(Error::invalid(
            "isotonic fit needs equal-length, non-empty inputs",
        ));
    }
    if scores.iter().any(|s| s.is_nan()) || targets.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::invalid(
            "scores must be numbers and targets in [0, 1]",
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Blocks of (first score, sum, weight, distinct-score count).
    let mut blocks: Vec<(f64, f64, f64, Vec<f64>)> = Vec::new();
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        let (mut sum, mut w) = (0.0, 0.0);
        while k < order.len() && scores[order[k]] == s {
            sum += targets[order[k]];
            w += 1.0;
            k += 1;
        }
        blocks.push((s, sum, w, vec![s]));
        while blocks.len() >= 2 {
            let b = &blocks[blocks.len() - 1];
            let a = &blocks[blocks.len() - 2];
            if a.1 / a.2 > b.1 / b.2 {
                let b = blocks.pop().expect("two blocks");
                let a = blocks.last_mut().expect("one block");
                a.1 += b.1;
                a.2 += b.2;
                a.3.extend(b.3);
            } else {
                break;
            }
        }
    }
    let mut breakpoints = Vec::new();
    let mut values = Vec::new();
    for (_, sum, w, members) in blocks {
        let v = (sum / w).clamp(0.0, 1.0);
        for s in members {
            breakpoints.push(s);
            values.push(v);
        }
    }
    Ok(IsotonicCalibrator {
        breakpoints,
        values,
    })
}

impl IsotonicCalibrator {
    /// Value of the last breakpoint at or below `score`; clamped outside.
    pub fn apply(&self, score: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&b| b <= score);
        self.values[idx.saturating_sub(1)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Share of the training rows held out to calibrate the GMM.
    pub holdout: f64,
    /// Anchors per calibration row.
    pub anchor_ratio: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            holdout: 0.2,
            anchor_ratio: 0.1,
        }
    }
}

/// GMM fitted on part of the training class, calibrated on the rest.
#[derive(Debug, Clone)]
pub struct CalibratedGmm {
    pub gmm: GmmModel,
    pub calibrator: IsotonicCalibrator,
}

pub fn calibrated_gmm(
    data: &[Vec<f64>],
    seed: u64,
    gmm: &GmmConfig,
    cal: &CalibrationConfig,
) -> Result<CalibratedGmm> {
    check_rows(data)?;
    if !(cal.holdout > 0.0 && cal.holdout < 1.0) || !(cal.anchor_ratio > 0.0) {
        return Err(Error::invalid(
            "calibration holdout must lie in (0, 1) and anchors be positive",
        ));
    }
    let n = data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "calibration"));
    let held = ((cal.holdout * n as f64).round() as usize).clamp(1, n.saturating_sub(2).max(1));
    let mut calib_idx = sample(&mut rng, n, held).into_vec();
    calib_idx.sort_unstable();
    let fit_rows: Vec<Vec<f64>> = (0..n)
        .filter(|i| calib_idx.binary_search(i).is_err())
        .map(|i| data[i].clone())
        .collect();
    let model = gmm_select(&fit_rows, seed, gmm)?;
    let mut scores: Vec<f64> = calib_idx.iter().map(|&i| model.score(&data[i])).collect();
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let anchor = lo - 0.05 * (hi - lo) - 1e-9 * lo.abs().max(1.0);
    let anchors = ((cal.anchor_ratio * held as f64).ceil() as usize).max(1);
    let mut targets = vec![1.0; scores.len()];
    scores.extend(std::iter::repeat_n(anchor, anchors));
    targets.extend(std::iter::repeat_n(0.0, anchors));
    Ok(CalibratedGmm {
        gmm: model,
        calibrator: isotonic_fit(&scores, &targets)?,
    })
}

#[derive(Debug, Clone)]
pub enum Detector {
    OcSvm(OcSvmModel),
    IsolationForest(IsoForest),
    Gmm(CalibratedGmm),
}

impl Detector {
    pub fn name(&self) -> &'static str {
        match self {
            Detector::OcSvm(_) => "ocsvm",
            Detector::IsolationForest(_) => "iforest",
            Detector::Gmm(_) => "gmm",
        }
    }

    /// Larger is more typical of the training class.
    pub fn inlier_score(&self, x: &[f64]) -> f64 {
        match self {
            Detector::OcSvm(m) => m.decision(x),
            Detector::IsolationForest(f) => 0.5 - f.score(x),
            Detector::Gmm(g) => g.calibrator.apply(g.gmm.score(x)),
        }
    }

    pub fn default_threshold(&self) -> f64 {
        match self {
            Detector::OcSvm(_) | Detector::IsolationForest(_) => 0.0,
            Detector::Gmm(_) => 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub scores: Vec<f64>,
    pub inlier: Vec<bool>,
    pub predicted: Vec<Label>,
    pub threshold: f64,
}

/// Inliers are assigned `train_class`, outliers the other class.
pub fn detect(
    det: &Detector,
    data: &[Vec<f64>],
    threshold: f64,
    train_class: Label,
) -> Result<Detection> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let scores: Vec<f64> = data.par_iter().map(|x| det.inlier_score(x)).collect();
    let inlier: Vec<bool> = scores.iter().map(|&s| s >= threshold).collect();
    let predicted = inlier
        .iter()
        .map(|&i| if i { train_class } else { train_class.other() })
        .collect();
    Ok(Detection {
        scores,
        inlier,
        predicted,
        threshold,
    })
}

/// Training rows: `train_fraction` of `train_class`. Evaluation rows: the
/// remaining `train_class` rows plus every row of the other class.
pub fn novelty_split(
    ds: &Dataset,
    train_class: Label,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let class_idx: Vec<usize> = (0..ds.len())
        .filter(|&i| ds.instances[i].label == train_class)
        .collect();
    let n = class_idx.len();
    if n < 2 {
        return Err(Error::DegenerateClass {
            label: train_class.as_u8(),
            count: n,
            needed: 2,
        });
    }
    // Reuse the stratified splitter on a two-class view of the class rows.
    let pseudo: Vec<Label> = (0..n)
        .map(|i| {
            if i % 2 == 0 {
                Label::Gesture
            } else {
                Label::NoGesture
            }
        })
        .collect();
    let (keep, _) = if n >= 4 {
        stratified_indices(&pseudo, train_fraction, seed)?
    } else {
        ((0..n - 1).collect(), vec![n - 1])
    };
    let mut is_train = vec![false; ds.len()];
    for k in keep {
        is_train[class_idx[k]] = true;
    }
    let pick = |train: bool| -> Vec<Instance> {
        ds.instances
            .iter()
            .zip(&is_train)
            .filter(|(_, &t)| t == train)
            .map(|(inst, _)| inst.clone())
            .collect()
    };
    let mut train = ds.with_instances(pick(true));
    train.split = SplitTag::Train;
    let mut eval = ds.with_instances(pick(false));
    eval.split = SplitTag::Validation;
    Ok((train, eval))
}
