//! The 21-kernel grid and Gram-matrix construction.
//!
//! Divergence kernels modulate an RBF term with `D`, a CJSD or M-CJSD value
//! between the per-sample distributions of the two instances:
//!
//! * Amplified: `D * exp(-|xi - xj|^2 / (2 sigma^2))`
//! * Scaled: `exp(-D * |xi - xj|^2 / (2 sigma^2))`
//! * AmplifiedScaled: `D * exp(-D * |xi - xj|^2 / (2 sigma^2))`
//!
//! Amplified kernels vanish on the diagonal and are generally indefinite.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::{cjsd_all, ChisiniKind, Distribution};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    Rbf,
    Amplified,
    Scaled,
    AmplifiedScaled,
}

impl KernelFamily {
    pub const DIVERGENCE_FAMILIES: [KernelFamily; 3] = [
        KernelFamily::Amplified,
        KernelFamily::Scaled,
        KernelFamily::AmplifiedScaled,
    ];

    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(c: u8) -> Option<Self> {
        [
            KernelFamily::Rbf,
            KernelFamily::Amplified,
            KernelFamily::Scaled,
            KernelFamily::AmplifiedScaled,
        ]
        .get(c as usize)
        .copied()
    }

    fn name(self) -> &'static str {
        match self {
            KernelFamily::Rbf => "rbf",
            KernelFamily::Amplified => "amplified",
            KernelFamily::Scaled => "scaled",
            KernelFamily::AmplifiedScaled => "amplified-scaled",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DivergenceKind {
    None,
    Cjsd,
    Mcjsd,
}

impl DivergenceKind {
    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(c: u8) -> Option<Self> {
        [
            DivergenceKind::None,
            DivergenceKind::Cjsd,
            DivergenceKind::Mcjsd,
        ]
        .get(c as usize)
        .copied()
    }

    /// Turns a CJSD value into the divergence factor.
    pub fn apply(self, cjsd: f64) -> f64 {
        match self {
            DivergenceKind::None => 0.0,
            DivergenceKind::Cjsd => cjsd,
            DivergenceKind::Mcjsd => cjsd.sqrt(),
        }
    }
}

/// One kernel of the grid.
///
/// For RBF, `mean` does not enter the kernel; it names the randomized data
/// version (one per Chisini mean family) the RBF baseline is evaluated on,
/// which is what makes three RBF entries out of one formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub divergence: DivergenceKind,
    pub mean: Option<ChisiniKind>,
    pub sigma: f64,
}

impl KernelSpec {
    pub fn rbf(sigma: f64) -> KernelSpec {
        KernelSpec {
            family: KernelFamily::Rbf,
            divergence: DivergenceKind::None,
            mean: None,
            sigma,
        }
    }

    pub fn divergence(
        family: KernelFamily,
        divergence: DivergenceKind,
        mean: ChisiniKind,
        sigma: f64,
    ) -> KernelSpec {
        KernelSpec {
            family,
            divergence,
            mean: Some(mean),
            sigma,
        }
    }

    pub fn with_sigma(self, sigma: f64) -> KernelSpec {
        KernelSpec { sigma, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        let is_rbf = self.family == KernelFamily::Rbf;
        let no_div = self.divergence == DivergenceKind::None;
        if is_rbf != no_div {
            return Err(Error::invalid(format!(
                "{} kernel cannot use divergence {:?}",
                self.family.name(),
                self.divergence
            )));
        }
        if !is_rbf && self.mean.is_none() {
            return Err(Error::invalid("divergence kernels need a Chisini mean"));
        }
        Ok(())
    }

    /// Stable identifier without sigma, e.g. `scaled-mcjsd-GM` or `rbf-AM`.
    pub fn key(&self) -> String {
        let mut s = self.family.name().to_string();
        match self.divergence {
            DivergenceKind::None => {}
            DivergenceKind::Cjsd => s.push_str("-cjsd"),
            DivergenceKind::Mcjsd => s.push_str("-mcjsd"),
        }
        if let Some(m) = self.mean {
            s.push('-');
            s.push_str(m.short());
        }
        s
    }

    /// Kernel value from a squared distance and a raw CJSD value.
    #[inline]
    pub fn eval_parts(&self, sq_dist: f64, cjsd: f64) -> f64 {
        let scaled = sq_dist / (2.0 * self.sigma * self.sigma);
        let d = self.divergence.apply(cjsd);
        match self.family {
            KernelFamily::Rbf => (-scaled).exp(),
            KernelFamily::Amplified => d * (-scaled).exp(),
            KernelFamily::Scaled => (-d * scaled).exp(),
            KernelFamily::AmplifiedScaled => d * (-d * scaled).exp(),
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(sigma={})", self.key(), self.sigma)
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    /// Parses a key as produced by [`KernelSpec::key`], with sigma 1.
    fn from_str(s: &str) -> Result<Self> {
        enumerate_specs(1.0)
            .into_iter()
            .chain([KernelSpec::rbf(1.0)])
            .find(|k| k.key().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown kernel `{s}`")))
    }
}

/// The full grid for one sigma: per Chisini mean, one RBF baseline plus the
/// three divergence families with CJSD and M-CJSD. 21 specs in total.
pub fn enumerate_specs(sigma: f64) -> Vec<KernelSpec> {
    let mut specs = Vec::with_capacity(21);
    for mean in ChisiniKind::ALL {
        specs.push(KernelSpec {
            mean: Some(mean),
            ..KernelSpec::rbf(sigma)
        });
        for family in KernelFamily::DIVERGENCE_FAMILIES {
            for div in [DivergenceKind::Cjsd, DivergenceKind::Mcjsd] {
                specs.push(KernelSpec::divergence(family, div, mean, sigma));
            }
        }
    }
    specs
}

fn check_finite(x: &[f64]) -> Result<()> {
    match x.iter().find(|v| !v.is_finite()) {
        Some(v) => Err(Error::NonFinite(format!("kernel input {v}"))),
        None => Ok(()),
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn rbf(xi: &[f64], xj: &[f64], sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if xi.len() != xj.len() {
        return Err(Error::DimensionMismatch {
            expected: xi.len(),
            found: xj.len(),
        });
    }
    check_finite(xi)?;
    check_finite(xj)?;
    Ok((-squared_distance(xi, xj) / (2.0 * sigma * sigma)).exp())
}

pub fn divergence_kernel(
    xi: &[f64],
    xj: &[f64],
    pi: &Distribution,
    pj: &Distribution,
    spec: &KernelSpec,
) -> Result<f64> {
    spec.validate()?;
    if spec.family == KernelFamily::Rbf {
        return Err(Error::invalid("divergence_kernel called with an RBF spec"));
    }
    if xi.len() != xj.len() {
        return Err(Error::DimensionMismatch {
            expected: xi.len(),
            found: xj.len(),
        });
    }
    check_finite(xi)?;
    check_finite(xj)?;
    let mean = spec.mean.expect("validated");
    let d = crate::divergence::cjsd(pi, pj, mean)?;
    Ok(spec.eval_parts(squared_distance(xi, xj), d))
}

/// Any kernel of the grid on one pair.
pub fn kernel(
    xi: &[f64],
    xj: &[f64],
    pi: &Distribution,
    pj: &Distribution,
    spec: &KernelSpec,
) -> Result<f64> {
    match spec.family {
        KernelFamily::Rbf => rbf(xi, xj, spec.sigma),
        _ => divergence_kernel(xi, xj, pi, pj, spec),
    }
}

/// Row-major square matrix tagged with the kernel that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub n: usize,
    pub values: Vec<f64>,
    pub spec: KernelSpec,
    pub instance_ids: Vec<u64>,
}

impl GramMatrix {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in i + 1..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Principal submatrix on `idx` (ids carried along).
    pub fn submatrix(&self, idx: &[usize]) -> GramMatrix {
        let m = idx.len();
        let mut values = Vec::with_capacity(m * m);
        for &i in idx {
            for &j in idx {
                values.push(self.get(i, j));
            }
        }
        GramMatrix {
            n: m,
            values,
            spec: self.spec,
            instance_ids: idx.iter().map(|&i| self.instance_ids[i]).collect(),
        }
    }

    /// Eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let m = DMatrix::from_row_slice(self.n, self.n, &self.values);
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Diagnostic copy with negative eigenvalues set to zero.
    pub fn clip_negative_eigenvalues(&self) -> GramMatrix {
        let m = DMatrix::from_row_slice(self.n, self.n, &self.values);
        let eig = m.symmetric_eigen();
        let clipped = eig.eigenvalues.map(|v| v.max(0.0));
        let rebuilt =
            &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        let mut values = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for j in i..self.n {
                let v = 0.5 * (rebuilt[(i, j)] + rebuilt[(j, i)]);
                values[i * self.n + j] = v;
                values[j * self.n + i] = v;
            }
        }
        GramMatrix {
            values,
            ..self.clone()
        }
    }

    /// Binary layout: magic `CKG1`, u64 n, u8 family, u8 divergence,
    /// u8 mean (255 = none), f64 sigma, n u64 ids, then n*n f64 row-major.
    /// All integers and floats little-endian.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(b"CKG1")?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&[
            self.spec.family.code(),
            self.spec.divergence.code(),
            self.spec.mean.map_or(255, ChisiniKind::code),
        ])?;
        w.write_all(&self.spec.sigma.to_le_bytes())?;
        for id in &self.instance_ids {
            w.write_all(&id.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<GramMatrix> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::io("<gram reader>", e))?;
        let mut cur = ByteCursor::new(&bytes);
        if cur.take(4)? != b"CKG1" {
            return Err(Error::Format("bad gram magic".into()));
        }
        let n = cur.u64()? as usize;
        let codes = cur.take(3)?;
        let family = KernelFamily::from_code(codes[0])
            .ok_or_else(|| Error::Format(format!("bad family code {}", codes[0])))?;
        let divergence = DivergenceKind::from_code(codes[1])
            .ok_or_else(|| Error::Format(format!("bad divergence code {}", codes[1])))?;
        let mean = match codes[2] {
            255 => None,
            c => Some(
                ChisiniKind::from_code(c)
                    .ok_or_else(|| Error::Format(format!("bad mean code {c}")))?,
            ),
        };
        let sigma = cur.f64()?;
        let instance_ids = (0..n).map(|_| cur.u64()).collect::<Result<Vec<_>>>()?;
        let values = (0..n * n).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        cur.finish()?;
        Ok(GramMatrix {
            n,
            values,
            spec: KernelSpec {
                family,
                divergence,
                mean,
                sigma,
            },
            instance_ids,
        })
    }
}

pub(crate) struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Format("unexpected end of file".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(Error::Format(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )))
        }
    }
}

/// Kernel-independent pairwise quantities: squared distances and the three
/// CJSD values. Every Gram of the grid is an elementwise map of these, so
/// one table serves all 21 kernels and every sigma.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseTable {
    pub n: usize,
    pub sq_dist: Vec<f64>,
    /// Indexed by `ChisiniKind as usize`.
    pub cjsd: [Vec<f64>; 3],
}

impl PairwiseTable {
    pub fn compute<S: AsRef<[f64]> + Sync>(
        vectors: &[S],
        dists: &[Distribution],
    ) -> Result<PairwiseTable> {
        let n = vectors.len();
        if n == 0 {
            return Err(Error::invalid("pairwise table of zero instances"));
        }
        if dists.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: dists.len(),
            });
        }
        let dim = vectors[0].as_ref().len();
        for v in vectors {
            if v.as_ref().len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.as_ref().len(),
                });
            }
            check_finite(v.as_ref())?;
        }
        // Upper triangle row by row, mirrored afterwards.
        let rows: Vec<Vec<(f64, [f64; 3])>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (i..n)
                    .map(|j| {
                        let sq = squared_distance(vectors[i].as_ref(), vectors[j].as_ref());
                        let d = if i == j {
                            [0.0; 3]
                        } else {
                            cjsd_all(&dists[i], &dists[j])?
                        };
                        Ok((sq, d))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut sq_dist = vec![0.0; n * n];
        let mut cjsd = [vec![0.0; n * n], vec![0.0; n * n], vec![0.0; n * n]];
        for (i, row) in rows.into_iter().enumerate() {
            for (off, (sq, d)) in row.into_iter().enumerate() {
                let j = i + off;
                sq_dist[i * n + j] = sq;
                sq_dist[j * n + i] = sq;
                for k in 0..3 {
                    cjsd[k][i * n + j] = d[k];
                    cjsd[k][j * n + i] = d[k];
                }
            }
        }
        Ok(PairwiseTable { n, sq_dist, cjsd })
    }

    #[inline]
    pub fn value(&self, spec: &KernelSpec, i: usize, j: usize) -> f64 {
        let idx = i * self.n + j;
        let d = match (spec.family, spec.mean) {
            (KernelFamily::Rbf, _) | (_, None) => 0.0,
            (_, Some(m)) => self.cjsd[m as usize][idx],
        };
        spec.eval_parts(self.sq_dist[idx], d)
    }

    /// Gram of `spec` over all instances.
    pub fn gram(&self, spec: &KernelSpec) -> Result<GramMatrix> {
        let idx: Vec<usize> = (0..self.n).collect();
        self.gram_on(spec, &idx)
    }

    /// Gram of `spec` restricted to the instances in `idx`.
    pub fn gram_on(&self, spec: &KernelSpec, idx: &[usize]) -> Result<GramMatrix> {
        spec.validate()?;
        let m = idx.len();
        let mut values = vec![0.0; m * m];
        for a in 0..m {
            for b in a..m {
                let v = self.value(spec, idx[a], idx[b]);
                values[a * m + b] = v;
                values[b * m + a] = v;
            }
        }
        Ok(GramMatrix {
            n: m,
            values,
            spec: *spec,
            instance_ids: idx.iter().map(|&i| i as u64).collect(),
        })
    }

    /// Kernel rows between `rows` and `cols` (row-major, `rows.len()` by `cols.len()`).
    pub fn cross(&self, spec: &KernelSpec, rows: &[usize], cols: &[usize]) -> Vec<f64> {
        rows.iter()
            .flat_map(|&i| cols.iter().map(move |&j| self.value(spec, i, j)))
            .collect()
    }

    /// Median of the off-diagonal pairwise Euclidean distances.
    pub fn median_distance(&self) -> f64 {
        let mut d: Vec<f64> = (0..self.n)
            .flat_map(|i| (i + 1..self.n).map(move |j| (i, j)))
            .map(|(i, j)| self.sq_dist[i * self.n + j].sqrt())
            .collect();
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

    /// Layout: magic `CKP1`, u64 n, then four n*n f64 blocks
    /// (squared distance, CJSD-AM, CJSD-GM, CJSD-HM), little-endian.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(b"CKP1")?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(4 * self.n * self.n * 8);
        for block in std::iter::once(&self.sq_dist).chain(self.cjsd.iter()) {
            for v in block {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&buf)
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<PairwiseTable> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::io("<pairwise reader>", e))?;
        let mut cur = ByteCursor::new(&bytes);
        if cur.take(4)? != b"CKP1" {
            return Err(Error::Format("bad pairwise-table magic".into()));
        }
        let n = cur.u64()? as usize;
        let mut block = || (0..n * n).map(|_| cur.f64()).collect::<Result<Vec<_>>>();
        let sq_dist = block()?;
        let cjsd = [block()?, block()?, block()?];
        cur.finish()?;
        Ok(PairwiseTable { n, sq_dist, cjsd })
    }
}

/// Gram of `spec` over `vectors`, built through a [`PairwiseTable`].
pub fn gram<S: AsRef<[f64]> + Sync>(
    vectors: &[S],
    dists: &[Distribution],
    spec: &KernelSpec,
) -> Result<GramMatrix> {
    if vectors.is_empty() {
        return Err(Error::invalid("gram of zero instances"));
    }
    spec.validate()?;
    PairwiseTable::compute(vectors, dists)?.gram(spec)
}
