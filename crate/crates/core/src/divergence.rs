//! Chisini means, the Chisini-Jensen-Shannon divergence family, and the
//! per-sample KDE distributions those divergences are evaluated on.
//!
//! All logarithms are natural, so divergences are in nats.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Mass floor applied before renormalization.
pub const MASS_FLOOR: f64 = 1e-12;
/// Default number of grid points.
pub const DEFAULT_GRID_POINTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChisiniKind {
    #[serde(rename = "AM")]
    Arithmetic,
    #[serde(rename = "GM")]
    Geometric,
    #[serde(rename = "HM")]
    Harmonic,
}

impl ChisiniKind {
    pub const ALL: [ChisiniKind; 3] = [
        ChisiniKind::Arithmetic,
        ChisiniKind::Geometric,
        ChisiniKind::Harmonic,
    ];

    pub fn short(self) -> &'static str {
        match self {
            ChisiniKind::Arithmetic => "AM",
            ChisiniKind::Geometric => "GM",
            ChisiniKind::Harmonic => "HM",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<ChisiniKind> {
        ChisiniKind::ALL.get(c as usize).copied()
    }
}

impl fmt::Display for ChisiniKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for ChisiniKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "AM" => Ok(ChisiniKind::Arithmetic),
            "GM" => Ok(ChisiniKind::Geometric),
            "HM" => Ok(ChisiniKind::Harmonic),
            other => Err(Error::invalid(format!("unknown Chisini mean `{other}`"))),
        }
    }
}

/// Mean of two non-negative numbers. Equal inputs return that input exactly.
#[inline]
fn mean_unchecked(p: f64, q: f64, kind: ChisiniKind) -> f64 {
    if p == q {
        return p;
    }
    match kind {
        ChisiniKind::Arithmetic => 0.5 * (p + q),
        ChisiniKind::Geometric => (p * q).sqrt(),
        ChisiniKind::Harmonic => {
            let s = p + q;
            if s > 0.0 {
                2.0 * p * q / s
            } else {
                0.0
            }
        }
    }
}

pub fn chisini_mean(p: f64, q: f64, kind: ChisiniKind) -> Result<f64> {
    for v in [p, q] {
        if v < 0.0 || v.is_nan() {
            return Err(Error::NegativeInput(v));
        }
    }
    Ok(mean_unchecked(p, q, kind))
}

/// Shared, evenly spaced evaluation points.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeGrid {
    points: Arc<Vec<f64>>,
    /// Bandwidth used when a sample is constant.
    fallback_bandwidth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bandwidth {
    /// Silverman's rule over the sample's own values.
    Auto,
    Fixed(f64),
}

/// Silverman's rule of thumb: `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`.
/// Returns `None` for a constant sample.
pub fn silverman_bandwidth(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if !(sd > 0.0) {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Some(0.9 * spread * (n as f64).powf(-0.2))
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl KdeGrid {
    /// Grid spanning `[lo, hi]` with `g` points.
    pub fn new(lo: f64, hi: f64, g: usize, fallback_bandwidth: f64) -> Result<KdeGrid> {
        if g < 2 {
            return Err(Error::invalid("a KDE grid needs at least two points"));
        }
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::invalid(format!("bad grid bounds [{lo}, {hi}]")));
        }
        if !(fallback_bandwidth > 0.0) {
            return Err(Error::invalid("fallback bandwidth must be positive"));
        }
        let step = (hi - lo) / (g - 1) as f64;
        let points = (0..g).map(|i| lo + step * i as f64).collect();
        Ok(KdeGrid {
            points: Arc::new(points),
            fallback_bandwidth,
        })
    }

    /// Grid over the global value range of `samples`, widened by three
    /// bandwidths on each side.
    pub fn for_samples<S: AsRef<[f64]>>(
        samples: &[S],
        g: usize,
        bandwidth: Bandwidth,
    ) -> Result<KdeGrid> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in samples {
            for &v in s.as_ref() {
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("sample value {v}")));
                }
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if lo > hi {
            return Err(Error::invalid("no sample values to build a grid from"));
        }
        let span = if hi > lo { hi - lo } else { 1.0 };
        let fallback = 0.01 * span;
        let widest = match bandwidth {
            Bandwidth::Fixed(h) => {
                if !(h > 0.0) {
                    return Err(Error::invalid("bandwidth must be positive"));
                }
                h
            }
            Bandwidth::Auto => samples
                .iter()
                .map(|s| silverman_bandwidth(s.as_ref()).unwrap_or(fallback))
                .fold(fallback, f64::max),
        };
        let (lo, hi) = if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        };
        KdeGrid::new(lo - 3.0 * widest, hi + 3.0 * widest, g, fallback)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn fallback_bandwidth(&self) -> f64 {
        self.fallback_bandwidth
    }

    fn same_as(&self, other: &KdeGrid) -> bool {
        Arc::ptr_eq(&self.points, &other.points) || self.points == other.points
    }
}

/// Probability mass on a shared grid; every entry is at least about
/// [`MASS_FLOOR`] and the masses sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    grid: KdeGrid,
    mass: Vec<f64>,
}

impl Distribution {
    /// Floors `weights` at [`MASS_FLOOR`] after normalizing, then renormalizes.
    pub fn from_weights(grid: &KdeGrid, weights: &[f64]) -> Result<Distribution> {
        if weights.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::NonFinite("distribution weights".into()));
        }
        let total: f64 = weights.iter().sum();
        let mut mass: Vec<f64> = if total > 0.0 {
            weights
                .iter()
                .map(|w| (w / total).max(MASS_FLOOR))
                .collect()
        } else {
            vec![1.0 / grid.len() as f64; grid.len()]
        };
        let total: f64 = mass.iter().sum();
        mass.iter_mut().for_each(|m| *m /= total);
        Ok(Distribution {
            grid: grid.clone(),
            mass,
        })
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn grid(&self) -> &KdeGrid {
        &self.grid
    }

    pub fn argmax(&self) -> usize {
        self.mass
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            })
            .0
    }
}

/// Gaussian KDE over the values of a single sample, evaluated on `grid`.
pub fn sample_to_distribution(
    x: &[f64],
    grid: &KdeGrid,
    bandwidth: Bandwidth,
) -> Result<Distribution> {
    if x.is_empty() {
        return Err(Error::invalid("empty sample"));
    }
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("sample value {v}")));
    }
    let h = match bandwidth {
        Bandwidth::Fixed(h) if h > 0.0 => h,
        Bandwidth::Fixed(h) => return Err(Error::invalid(format!("bandwidth {h} must be > 0"))),
        Bandwidth::Auto => silverman_bandwidth(x).unwrap_or(grid.fallback_bandwidth),
    };
    let inv = 1.0 / h;
    let weights: Vec<f64> = grid
        .points()
        .iter()
        .map(|&g| {
            x.iter()
                .map(|&v| {
                    let z = (g - v) * inv;
                    (-0.5 * z * z).exp()
                })
                .sum()
        })
        .collect();
    Distribution::from_weights(grid, &weights)
}

/// CJSD over raw probability vectors. Terms with zero mass contribute zero.
pub fn cjsd_slices(p: &[f64], q: &[f64], kind: ChisiniKind) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::GridMismatch);
    }
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi < 0.0 || qi < 0.0 || pi.is_nan() || qi.is_nan() {
            return Err(Error::NegativeInput(pi.min(qi)));
        }
        if pi == qi {
            continue;
        }
        let m = mean_unchecked(pi, qi, kind);
        let term = |x: f64| if x > 0.0 { x * (x / m).ln() } else { 0.0 };
        total += term(pi) + term(qi);
    }
    Ok((0.5 * total).max(0.0))
}

pub fn cjsd(p: &Distribution, q: &Distribution, kind: ChisiniKind) -> Result<f64> {
    if !p.grid.same_as(&q.grid) {
        return Err(Error::GridMismatch);
    }
    cjsd_slices(&p.mass, &q.mass, kind)
}

/// Metric version: the square root of [`cjsd`].
pub fn mcjsd(p: &Distribution, q: &Distribution, kind: ChisiniKind) -> Result<f64> {
    cjsd(p, q, kind).map(f64::sqrt)
}

/// All three CJSD values for a pair, ordered AM, GM, HM.
pub fn cjsd_all(p: &Distribution, q: &Distribution) -> Result<[f64; 3]> {
    if !p.grid.same_as(&q.grid) {
        return Err(Error::GridMismatch);
    }
    let mut out = [0.0; 3];
    for (slot, kind) in out.iter_mut().zip(ChisiniKind::ALL) {
        *slot = cjsd_slices(&p.mass, &q.mass, kind)?;
    }
    Ok(out)
}
