//! Descriptors for encoded artifacts: a GIST-style texture descriptor for
//! images, MFCCs for audio clips, and PCA.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::encode::{ImageGrid, WavClip, AUDIO_PEAK};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GistParams {
    /// 0 keeps the native side.
    pub resize_to: usize,
    pub scales: usize,
    pub orientations: usize,
    pub grid: usize,
}

impl Default for GistParams {
    fn default() -> Self {
        Self {
            resize_to: 256,
            scales: 4,
            orientations: 8,
            grid: 4,
        }
    }
}

impl GistParams {
    pub fn descriptor_len(&self) -> usize {
        self.grid * self.grid * self.scales * self.orientations
    }

    /// Smallest side whose frequency grid resolves the coarsest scale.
    pub fn min_side(&self) -> usize {
        1usize << (self.scales + 1)
    }

    fn validate(&self) -> Result<()> {
        if self.scales == 0 || self.orientations == 0 || self.grid == 0 {
            return Err(Error::invalid(
                "gist scales, orientations and grid must be positive",
            ));
        }
        if self.scales > 12 {
            return Err(Error::invalid("at most 12 gist scales"));
        }
        Ok(())
    }
}

/// Bilinear upsampling with corners aligned.
pub fn resize_plane(values: &[f64], side: usize, new_side: usize) -> Result<Vec<f64>> {
    if values.len() != side * side || side == 0 {
        return Err(Error::DimensionMismatch {
            expected: side * side,
            found: values.len(),
        });
    }
    if new_side < side {
        return Err(Error::invalid(format!(
            "cannot downsize from {side} to {new_side}"
        )));
    }
    if new_side == side {
        return Ok(values.to_vec());
    }
    let scale = if new_side > 1 {
        (side - 1) as f64 / (new_side - 1) as f64
    } else {
        0.0
    };
    let coord = |t: usize| {
        let x = t as f64 * scale;
        let i0 = (x.floor() as usize).min(side - 1);
        let i1 = (i0 + 1).min(side - 1);
        (i0, i1, x - i0 as f64)
    };
    let mut out = Vec::with_capacity(new_side * new_side);
    for r in 0..new_side {
        let (r0, r1, fr) = coord(r);
        for c in 0..new_side {
            let (c0, c1, fc) = coord(c);
            let top = values[r0 * side + c0] * (1.0 - fc) + values[r0 * side + c1] * fc;
            let bottom = values[r1 * side + c0] * (1.0 - fc) + values[r1 * side + c1] * fc;
            out.push(top * (1.0 - fr) + bottom * fr);
        }
    }
    Ok(out)
}

pub fn resize_image(img: &ImageGrid, side: usize) -> Result<ImageGrid> {
    let plane: Vec<f64> = img.pixels.iter().map(|&p| p as f64).collect();
    let out = resize_plane(&plane, img.side, side)?;
    let max = img.max_value() as f64;
    Ok(ImageGrid {
        side,
        pixels: out
            .iter()
            .map(|v| v.round().clamp(0.0, max) as u16)
            .collect(),
        meta: img.meta.clone(),
    })
}

/// Precomputed log-Gabor filter bank for one image side.
pub struct GistExtractor {
    params: GistParams,
    side: usize,
    row_fft: Arc<dyn Fft<f64>>,
    row_ifft: Arc<dyn Fft<f64>>,
    /// scales * orientations filters, each `side x side`, real and even.
    filters: Vec<Vec<f64>>,
}

impl std::fmt::Debug for GistExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GistExtractor")
            .field("params", &self.params)
            .field("side", &self.side)
            .finish_non_exhaustive()
    }
}

fn fft_freq(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64 / n as f64
    } else {
        k as f64 / n as f64 - 1.0
    }
}

impl GistExtractor {
    pub fn new(params: GistParams, side: usize) -> Result<GistExtractor> {
        params.validate()?;
        if side < params.min_side() || side < params.grid {
            return Err(Error::BelowNyquist {
                side,
                scales: params.scales,
                min_side: params.min_side().max(params.grid),
            });
        }
        let mut planner = FftPlanner::new();
        let row_fft = planner.plan_fft_forward(side);
        let row_ifft = planner.plan_fft_inverse(side);
        let sigma_theta = 0.6 * PI / params.orientations as f64;
        let sigma_r = 0.55f64.ln();
        let mut filters = Vec::with_capacity(params.scales * params.orientations);
        for s in 0..params.scales {
            let f0 = 0.25 * 0.5f64.powi(s as i32);
            for o in 0..params.orientations {
                let theta0 = o as f64 * PI / params.orientations as f64;
                let mut filter = vec![0.0; side * side];
                for r in 0..side {
                    let v = fft_freq(r, side);
                    for c in 0..side {
                        let u = fft_freq(c, side);
                        let rad = (u * u + v * v).sqrt();
                        if rad == 0.0 {
                            continue;
                        }
                        // Wrapped to [-pi/2, pi/2) so the filter is even.
                        let d = (v.atan2(u) - theta0 + PI / 2.0).rem_euclid(PI) - PI / 2.0;
                        let radial = (-(rad / f0).ln().powi(2) / (2.0 * sigma_r * sigma_r)).exp();
                        let angular = (-d * d / (2.0 * sigma_theta * sigma_theta)).exp();
                        filter[r * side + c] = radial * angular;
                    }
                }
                filters.push(filter);
            }
        }
        Ok(GistExtractor {
            params,
            side,
            row_fft,
            row_ifft,
            filters,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    fn fft2(&self, data: &mut [Complex<f64>], inverse: bool) {
        let n = self.side;
        let plan = if inverse {
            &self.row_ifft
        } else {
            &self.row_fft
        };
        plan.process(data);
        let mut col = vec![Complex::new(0.0, 0.0); n];
        for c in 0..n {
            for r in 0..n {
                col[r] = data[r * n + c];
            }
            plan.process(&mut col);
            for r in 0..n {
                data[r * n + c] = col[r];
            }
        }
        if inverse {
            let scale = 1.0 / (n * n) as f64;
            data.iter_mut().for_each(|z| *z *= scale);
        }
    }

    /// `plane` is row-major `side x side` with intensities in [0, 1].
    pub fn descriptor(&self, plane: &[f64]) -> Result<Vec<f64>> {
        let n = self.side;
        if plane.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: plane.len(),
            });
        }
        if plane.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gist input".into()));
        }
        let mut spectrum: Vec<Complex<f64>> = plane.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.fft2(&mut spectrum, false);
        let g = self.params.grid;
        let cell_of = |t: usize| t * g / n;
        let mut cell_sizes = vec![0usize; g * g];
        for r in 0..n {
            for c in 0..n {
                cell_sizes[cell_of(r) * g + cell_of(c)] += 1;
            }
        }
        let mut out = Vec::with_capacity(self.params.descriptor_len());
        let mut work = vec![Complex::new(0.0, 0.0); n * n];
        for filter in &self.filters {
            for ((w, s), f) in work.iter_mut().zip(&spectrum).zip(filter) {
                *w = s * f;
            }
            self.fft2(&mut work, true);
            let mut sums = vec![0.0; g * g];
            for r in 0..n {
                for c in 0..n {
                    sums[cell_of(r) * g + cell_of(c)] += work[r * n + c].norm();
                }
            }
            out.extend(sums.iter().zip(&cell_sizes).map(|(s, &k)| s / k as f64));
        }
        Ok(out)
    }
}

/// Normalized intensities of an image.
pub fn image_plane(img: &ImageGrid) -> Vec<f64> {
    let max = img.max_value() as f64;
    img.pixels.iter().map(|&p| p as f64 / max).collect()
}

/// Plane at the working side chosen by `p`: `resize_to` when set, the
/// native side otherwise.
pub fn gist_plane(img: &ImageGrid, p: &GistParams) -> Result<Vec<f64>> {
    let plane = image_plane(img);
    if p.resize_to == 0 {
        Ok(plane)
    } else {
        resize_plane(&plane, img.side, p.resize_to)
    }
}

pub fn gist_descriptor(img: &ImageGrid, p: &GistParams) -> Result<Vec<f64>> {
    let side = if p.resize_to == 0 {
        img.side
    } else {
        p.resize_to
    };
    let ex = GistExtractor::new(*p, side)?;
    ex.descriptor(&gist_plane(img, p)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfccParams {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub n_mels: usize,
    pub n_coeffs: usize,
    pub log_floor: f64,
}

impl Default for MfccParams {
    fn default() -> Self {
        Self {
            frame_ms: 25.0,
            hop_ms: 10.0,
            n_mels: 26,
            n_coeffs: 20,
            log_floor: 1e-10,
        }
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Frame layout and filterbank for one sample rate.
#[derive(Clone)]
pub struct MfccExtractor {
    params: MfccParams,
    frame_len: usize,
    hop: usize,
    nfft: usize,
    window: Vec<f64>,
    /// `n_mels x (nfft/2 + 1)`.
    filterbank: Vec<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for MfccExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MfccExtractor")
            .field("params", &self.params)
            .field("frame_len", &self.frame_len)
            .field("hop", &self.hop)
            .field("nfft", &self.nfft)
            .finish_non_exhaustive()
    }
}

impl MfccExtractor {
    pub fn new(params: MfccParams, sample_rate: u32) -> Result<MfccExtractor> {
        if params.n_coeffs == 0 || params.n_coeffs > params.n_mels {
            return Err(Error::invalid("need 1 <= n_coeffs <= n_mels"));
        }
        if !(params.log_floor > 0.0) {
            return Err(Error::invalid("log floor must be positive"));
        }
        let sr = sample_rate as f64;
        let frame_len = (sr * params.frame_ms / 1000.0).round() as usize;
        let hop = (sr * params.hop_ms / 1000.0).round() as usize;
        if frame_len < 2 || hop == 0 {
            return Err(Error::invalid(
                "frame and hop must span at least two and one samples",
            ));
        }
        let nfft = frame_len.next_power_of_two();
        let window = (0..frame_len)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (frame_len - 1) as f64).cos())
            .collect();
        let bins = nfft / 2 + 1;
        let hi = hz_to_mel(sr / 2.0);
        let edges: Vec<f64> = (0..params.n_mels + 2)
            .map(|i| mel_to_hz(hi * i as f64 / (params.n_mels + 1) as f64))
            .collect();
        let filterbank = (0..params.n_mels)
            .map(|m| {
                let (lo, mid, up) = (edges[m], edges[m + 1], edges[m + 2]);
                (0..bins)
                    .map(|k| {
                        let f = k as f64 * sr / nfft as f64;
                        if f > lo && f <= mid {
                            (f - lo) / (mid - lo)
                        } else if f > mid && f < up {
                            (up - f) / (up - mid)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(nfft);
        Ok(MfccExtractor {
            params,
            frame_len,
            hop,
            nfft,
            window,
            filterbank,
            fft,
        })
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    /// Coefficients of every frame.
    pub fn frames(&self, samples: &[i16]) -> Result<Vec<Vec<f64>>> {
        if samples.len() < self.frame_len {
            return Err(Error::ClipTooShort {
                needed: self.frame_len,
                found: samples.len(),
            });
        }
        let n_frames = 1 + (samples.len() - self.frame_len) / self.hop;
        let n_mels = self.params.n_mels;
        let mut buf = vec![Complex::new(0.0, 0.0); self.nfft];
        let mut out = Vec::with_capacity(n_frames);
        let mut silent: Option<Vec<f64>> = None;
        for f in 0..n_frames {
            let start = f * self.hop;
            let frame = &samples[start..start + self.frame_len];
            let all_zero = frame.iter().all(|&s| s == 0);
            if all_zero {
                if let Some(c) = &silent {
                    out.push(c.clone());
                    continue;
                }
            }
            buf.iter_mut().for_each(|z| *z = Complex::new(0.0, 0.0));
            for i in 0..self.frame_len {
                buf[i].re = samples[start + i] as f64 / AUDIO_PEAK as f64 * self.window[i];
            }
            self.fft.process(&mut buf);
            let log_e: Vec<f64> = self
                .filterbank
                .iter()
                .map(|w| {
                    let e: f64 = w.iter().zip(&buf).map(|(w, z)| w * z.norm()).sum();
                    e.max(self.params.log_floor).ln()
                })
                .collect();
            out.push(
                (0..self.params.n_coeffs)
                    .map(|k| {
                        let s = if k == 0 {
                            (1.0 / n_mels as f64).sqrt()
                        } else {
                            (2.0 / n_mels as f64).sqrt()
                        };
                        s * log_e
                            .iter()
                            .enumerate()
                            .map(|(n, x)| {
                                x * (PI * k as f64 * (2 * n + 1) as f64 / (2 * n_mels) as f64).cos()
                            })
                            .sum::<f64>()
                    })
                    .collect::<Vec<f64>>(),
            );
            if all_zero {
                silent = out.last().cloned();
            }
        }
        Ok(out)
    }

    /// Mean over frames.
    pub fn descriptor(&self, samples: &[i16]) -> Result<Vec<f64>> {
        let frames = self.frames(samples)?;
        let m = frames.len() as f64;
        Ok((0..self.params.n_coeffs)
            .map(|k| frames.iter().map(|f| f[k]).sum::<f64>() / m)
            .collect())
    }
}

pub fn mfcc_descriptor(clip: &WavClip, p: &MfccParams) -> Result<Vec<f64>> {
    if clip.samples.is_empty() {
        return Err(Error::invalid("empty clip"));
    }
    MfccExtractor::new(*p, clip.sample_rate)?.descriptor(&clip.samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k` orthonormal rows of length `d`.
    pub components: Vec<Vec<f64>>,
    /// Covariance eigenvalues of the kept components.
    pub eigenvalues: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

pub fn pca_fit(data: &[Vec<f64>], k: usize) -> Result<PcaModel> {
    let n = data.len();
    if n < 2 {
        return Err(Error::invalid("pca needs at least two rows"));
    }
    let d = data[0].len();
    if data.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("ragged pca input"));
    }
    if k == 0 || k > d.min(n - 1) {
        return Err(Error::invalid(format!(
            "k must be in 1..={}, got {k}",
            d.min(n - 1)
        )));
    }
    let mean: Vec<f64> = (0..d)
        .map(|j| data.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let centered = DMatrix::from_fn(n, d, |i, j| data[i][j] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n - 1) as f64;
    let total: f64 = cov.diagonal().iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let mut components = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let lead = v
            .iter()
            .copied()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        eigenvalues.push(eig.eigenvalues[idx].max(0.0));
    }
    let explained_variance_ratio = eigenvalues.iter().map(|e| (e / total).min(1.0)).collect();
    Ok(PcaModel {
        mean,
        components,
        eigenvalues,
        explained_variance_ratio,
    })
}

impl PcaModel {
    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                found: x.len(),
            });
        }
        Ok(self
            .components
            .iter()
            .map(|c| {
                c.iter()
                    .zip(x.iter().zip(&self.mean))
                    .map(|(c, (x, m))| c * (x - m))
                    .sum()
            })
            .collect())
    }

    pub fn reconstruct(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.components.len() {
            return Err(Error::DimensionMismatch {
                expected: self.components.len(),
                found: z.len(),
            });
        }
        let mut x = self.mean.clone();
        for (c, &w) in self.components.iter().zip(z) {
            x.iter_mut().zip(c).for_each(|(x, c)| *x += w * c);
        }
        Ok(x)
    }
}

pub fn pca_transform(model: &PcaModel, x: &[f64]) -> Result<Vec<f64>> {
    model.transform(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::{signal_to_audio, signal_to_image, AudioConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn image(side: usize, pixels: Vec<u16>) -> ImageGrid {
        let mut img = signal_to_image(&vec![0.0; side * side], 8).unwrap();
        img.pixels = pixels;
        img
    }

    #[test]
    fn resize_laws() {
        let img = signal_to_image(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0], 8).unwrap();
        assert_eq!(resize_image(&img, 3).unwrap().pixels, img.pixels);
        assert!(resize_image(&img, 2).is_err());
        let four = signal_to_image(&(0..16).map(f64::from).collect::<Vec<_>>(), 8).unwrap();
        let big = resize_image(&four, 256).unwrap();
        assert_eq!(big.side, 256);
        assert_eq!(big.pixels.len(), 256 * 256);
        assert_eq!(big.pixel(0, 0), four.pixel(0, 0));
        assert_eq!(big.pixel(255, 255), four.pixel(3, 3));
        let flat = image(4, vec![77; 16]);
        assert!(resize_image(&flat, 40)
            .unwrap()
            .pixels
            .iter()
            .all(|&p| p == 77));
    }

    #[test]
    fn descriptor_lengths() {
        let four = signal_to_image(&(0..14).map(f64::from).collect::<Vec<_>>(), 8).unwrap();
        assert_eq!(
            gist_descriptor(&four, &GistParams::default())
                .unwrap()
                .len(),
            512
        );
        let three = signal_to_image(&[1.0, 5.0, 2.0, 7.0, 3.0, 0.5], 8).unwrap();
        let p = GistParams {
            grid: 3,
            ..Default::default()
        };
        assert_eq!(gist_descriptor(&three, &p).unwrap().len(), 288);
        for (g, s, o) in [(1, 1, 1), (2, 3, 5), (5, 2, 4)] {
            let p = GistParams {
                resize_to: 64,
                scales: s,
                orientations: o,
                grid: g,
            };
            assert_eq!(gist_descriptor(&four, &p).unwrap().len(), g * g * s * o);
            assert_eq!(p.descriptor_len(), g * g * s * o);
        }
    }

    #[test]
    fn tiny_native_images_need_resizing() {
        let four = signal_to_image(&(0..16).map(f64::from).collect::<Vec<_>>(), 8).unwrap();
        let p = GistParams {
            resize_to: 0,
            ..Default::default()
        };
        assert!(matches!(
            gist_descriptor(&four, &p),
            Err(Error::BelowNyquist {
                side: 4,
                min_side: 32,
                ..
            })
        ));
    }

    #[test]
    fn uniform_image_has_no_energy() {
        let flat = image(4, vec![200; 16]);
        let g = gist_descriptor(&flat, &GistParams::default()).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn stripes_pick_the_aligned_orientation() {
        let side = 64;
        // Intensity varies along columns: energy sits on the horizontal frequency axis.
        let plane: Vec<f64> = (0..side * side)
            .map(|i| 0.5 + 0.5 * (2.0 * PI * (i % side) as f64 / 8.0).cos())
            .collect();
        let p = GistParams {
            resize_to: 0,
            scales: 4,
            orientations: 8,
            grid: 4,
        };
        let ex = GistExtractor::new(p, side).unwrap();
        let g = ex.descriptor(&plane).unwrap();
        let cells = 16;
        let energy = |o: usize| -> f64 {
            (0..p.scales)
                .map(|s| {
                    g[(s * 8 + o) * cells..(s * 8 + o + 1) * cells]
                        .iter()
                        .sum::<f64>()
                })
                .sum()
        };
        let best = (0..8)
            .max_by(|&a, &b| energy(a).total_cmp(&energy(b)))
            .unwrap();
        assert_eq!(best, 0);
    }

    #[test]
    fn mfcc_of_silence_is_the_floor_constant() {
        let clip = signal_to_audio(&[0.0; 16], &AudioConfig::default()).unwrap();
        let mut silent = clip.clone();
        silent.samples.iter_mut().for_each(|s| *s = 0);
        let p = MfccParams::default();
        let d = mfcc_descriptor(&silent, &p).unwrap();
        assert_eq!(d.len(), 20);
        assert!((d[0] - 26f64.sqrt() * 1e-10f64.ln()).abs() < 1e-9);
        assert!(d[1..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn mfcc_is_deterministic_and_twenty_dimensional() {
        let sig: Vec<f64> = (0..14).map(|i| (i as f64 * 0.7).sin()).collect();
        let clip = signal_to_audio(&sig, &AudioConfig::default()).unwrap();
        assert_eq!(clip.duration_s(), 9.0);
        let a = mfcc_descriptor(&clip, &MfccParams::default()).unwrap();
        let b = mfcc_descriptor(&clip.clone(), &MfccParams::default()).unwrap();
        assert_eq!(a.len(), 20);
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn mfcc_shift_stability() {
        let sig: Vec<f64> = (0..8).map(|i| (i as f64).cos() * 3.0).collect();
        let clip = signal_to_audio(&sig, &AudioConfig::default()).unwrap();
        let ex = MfccExtractor::new(MfccParams::default(), clip.sample_rate).unwrap();
        let mut shifted = vec![0i16; ex.hop()];
        shifted.extend_from_slice(&clip.samples);
        let fa = ex.frames(&clip.samples).unwrap();
        let fb = ex.frames(&shifted).unwrap();
        let da = ex.descriptor(&clip.samples).unwrap();
        let db = ex.descriptor(&shifted).unwrap();
        let dev = fa
            .iter()
            .chain(&fb)
            .flat_map(|f| f.iter().zip(&da).map(|(x, m)| (x - m).abs()))
            .fold(0.0f64, f64::max);
        let change = da
            .iter()
            .zip(&db)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(change <= 2.0 * dev / fa.len() as f64, "{change} vs {dev}");
    }

    #[test]
    fn mfcc_rejects_short_clips() {
        let clip = signal_to_audio(&[1.0, 2.0], &AudioConfig::default()).unwrap();
        let mut short = clip.clone();
        short.samples.truncate(10);
        assert!(mfcc_descriptor(&short, &MfccParams::default()).is_err());
        short.samples.clear();
        assert!(mfcc_descriptor(&short, &MfccParams::default()).is_err());
    }

    #[test]
    fn pca_on_a_line() {
        let data: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![i as f64, 2.0 * i as f64 + 1.0])
            .collect();
        let m = pca_fit(&data, 1).unwrap();
        assert!((m.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
        assert!(m.components[0].iter().all(|&v| v > 0.0));
    }

    #[test]
    fn pca_isotropic_cloud() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let normal = rand_distr::StandardNormal;
        let data: Vec<Vec<f64>> = (0..4000)
            .map(|_| vec![rng.sample::<f64, _>(normal), rng.sample::<f64, _>(normal)])
            .collect();
        let m = pca_fit(&data, 2).unwrap();
        for r in &m.explained_variance_ratio {
            assert!((r - 0.5).abs() < 0.05);
        }
        assert!(m.explained_variance_ratio[0] >= m.explained_variance_ratio[1]);
    }

    #[test]
    fn pca_transform_laws() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = 5;
        let data: Vec<Vec<f64>> = (0..60)
            .map(|_| {
                (0..d)
                    .map(|j| rng.random_range(-1.0..1.0) * (j + 1) as f64)
                    .collect()
            })
            .collect();
        let m = pca_fit(&data, d).unwrap();
        for a in 0..d {
            for b in 0..d {
                let dot: f64 = m.components[a]
                    .iter()
                    .zip(&m.components[b])
                    .map(|(x, y)| x * y)
                    .sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-8);
            }
        }
        assert!(m.explained_variance_ratio.windows(2).all(|w| w[0] >= w[1]));
        assert!(m.explained_variance_ratio.iter().sum::<f64>() <= 1.0 + 1e-12);
        assert!(m
            .transform(&m.mean)
            .unwrap()
            .iter()
            .all(|v| v.abs() < 1e-12));
        let x: Vec<f64> = m
            .mean
            .iter()
            .zip(&m.components[0])
            .map(|(a, b)| a + b)
            .collect();
        let z = m.transform(&x).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-12 && z[1..].iter().all(|v| v.abs() < 1e-12));
        for row in &data {
            let back = m.reconstruct(&m.transform(row).unwrap()).unwrap();
            assert!(back.iter().zip(row).all(|(a, b)| (a - b).abs() < 1e-8));
        }
        let zs: Vec<Vec<f64>> = data.iter().map(|r| m.transform(r).unwrap()).collect();
        for k in 0..d {
            let var = zs.iter().map(|z| z[k] * z[k]).sum::<f64>() / (zs.len() - 1) as f64;
            assert!((var - m.eigenvalues[k]).abs() <= 1e-6 * m.eigenvalues[k]);
        }
        assert!(m.transform(&[1.0]).is_err());
    }

    #[test]
    fn pca_errors() {
        assert!(matches!(
            pca_fit(&[vec![1.0, 1.0], vec![1.0, 1.0]], 1),
            Err(Error::ZeroVariance)
        ));
        assert!(pca_fit(&[vec![1.0, 2.0], vec![3.0, 1.0]], 2).is_err());
    }
}
