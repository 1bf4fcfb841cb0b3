//! Reversible camouflage of short sensor vectors as tiny images or audio clips.
//!
//! Both directions pad first and then min-max scale the padded signal, so the
//! appended zeros take part in the range. The range is kept in a [`ScaleMeta`]
//! sidecar, without which the quantized artifact cannot be inverted.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest audio sample magnitude; the audio map is symmetric around 0.
pub const AUDIO_PEAK: i32 = 32767;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleMeta {
    pub original_len: usize,
    pub padded_len: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub degenerate: bool,
    pub bit_depth: u32,
    pub dwell_ms: Option<f64>,
    pub sample_rate: Option<u32>,
}

impl ScaleMeta {
    fn for_padded(original_len: usize, padded: &[f64], bit_depth: u32) -> Result<ScaleMeta> {
        let mut v_min = f64::INFINITY;
        let mut v_max = f64::NEG_INFINITY;
        for &x in padded {
            if !x.is_finite() {
                return Err(Error::NonFinite(format!("signal value {x}")));
            }
            v_min = v_min.min(x);
            v_max = v_max.max(x);
        }
        Ok(ScaleMeta {
            original_len,
            padded_len: padded.len(),
            v_min,
            v_max,
            degenerate: v_min == v_max,
            bit_depth,
            dwell_ms: None,
            sample_rate: None,
        })
    }

    pub fn range(&self) -> f64 {
        self.v_max - self.v_min
    }

    pub fn write_sidecar(&self, artifact: &Path) -> Result<()> {
        let path = sidecar_path(artifact);
        let json = serde_json::to_vec_pretty(self)?;
        write_atomic(&path, &json)
    }

    pub fn read_sidecar(artifact: &Path) -> Result<ScaleMeta> {
        let path = sidecar_path(artifact);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// `<artifact>.meta.json`
pub fn sidecar_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Smallest `k` with `k * k >= n`.
pub fn square_side(n: usize) -> usize {
    let mut k = (n as f64).sqrt() as usize;
    while k * k < n {
        k += 1;
    }
    while k > 0 && (k - 1) * (k - 1) >= n {
        k -= 1;
    }
    k
}

/// Appends zeros up to the next perfect square length.
pub fn pad_signal(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::invalid("cannot pad an empty signal"));
    }
    let k = square_side(v.len());
    let mut out = v.to_vec();
    out.resize(k * k, 0.0);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    pub side: usize,
    /// Row-major.
    pub pixels: Vec<u16>,
    pub meta: ScaleMeta,
}

impl ImageGrid {
    pub fn max_value(&self) -> u16 {
        max_level(self.meta.bit_depth) as u16
    }

    pub fn pixel(&self, row: usize, col: usize) -> u16 {
        self.pixels[row * self.side + col]
    }
}

fn max_level(bit_depth: u32) -> u32 {
    (1u32 << bit_depth) - 1
}

fn check_depth(bit_depth: u32) -> Result<()> {
    if bit_depth == 8 || bit_depth == 16 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "bit depth must be 8 or 16, got {bit_depth}"
        )))
    }
}

pub fn signal_to_image(v: &[f64], bit_depth: u32) -> Result<ImageGrid> {
    check_depth(bit_depth)?;
    let padded = pad_signal(v)?;
    let meta = ScaleMeta::for_padded(v.len(), &padded, bit_depth)?;
    let levels = max_level(bit_depth) as f64;
    let pixels = if meta.degenerate {
        vec![0; padded.len()]
    } else {
        let range = meta.range();
        padded
            .iter()
            .map(|&x| (levels * (x - meta.v_min) / range).round() as u16)
            .collect()
    };
    Ok(ImageGrid {
        side: square_side(padded.len()),
        pixels,
        meta,
    })
}

pub fn image_to_signal(img: &ImageGrid) -> Result<Vec<f64>> {
    let meta = &img.meta;
    check_depth(meta.bit_depth)?;
    if img.side * img.side != meta.padded_len || img.pixels.len() != meta.padded_len {
        return Err(Error::CorruptMeta(format!(
            "side {} with {} pixels does not match padded_len {}",
            img.side,
            img.pixels.len(),
            meta.padded_len
        )));
    }
    if meta.original_len == 0 || meta.original_len > meta.padded_len || meta.v_min > meta.v_max {
        return Err(Error::CorruptMeta(format!(
            "original_len {} / v_min {} / v_max {}",
            meta.original_len, meta.v_min, meta.v_max
        )));
    }
    if meta.degenerate {
        return Ok(vec![meta.v_min; meta.original_len]);
    }
    let levels = max_level(meta.bit_depth) as f64;
    let range = meta.range();
    Ok(img.pixels[..meta.original_len]
        .iter()
        .map(|&p| meta.v_min + range * p as f64 / levels)
        .collect())
}

/// Binary PGM (P5). 16-bit images are stored big-endian, maxval 65535.
pub fn write_pgm<W: Write>(img: &ImageGrid, mut w: W) -> std::io::Result<()> {
    let maxval = img.max_value();
    write!(w, "P5\n{} {}\n{}\n", img.side, img.side, maxval)?;
    if maxval <= 255 {
        let bytes: Vec<u8> = img.pixels.iter().map(|&p| p as u8).collect();
        w.write_all(&bytes)
    } else {
        let bytes: Vec<u8> = img.pixels.iter().flat_map(|p| p.to_be_bytes()).collect();
        w.write_all(&bytes)
    }
}

/// Reads a P5 image; the caller supplies metadata from the sidecar.
pub fn read_pgm<R: Read>(mut r: R, meta: ScaleMeta) -> Result<ImageGrid> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)
        .map_err(|e| Error::io("<pgm reader>", e))?;
    let mut pos = 0usize;
    let mut token = |buf: &[u8]| -> Result<String> {
        loop {
            while pos < buf.len() && buf[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < buf.len() && buf[pos] == b'#' {
                while pos < buf.len() && buf[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated pgm header".into()));
        }
        Ok(String::from_utf8_lossy(&buf[start..pos]).into_owned())
    };
    if token(&buf)? != "P5" {
        return Err(Error::Format("not a binary pgm".into()));
    }
    let parse = |s: String| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad pgm header field `{s}`")))
    };
    let width = parse(token(&buf)?)?;
    let height = parse(token(&buf)?)?;
    let maxval = parse(token(&buf)?)?;
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    if width != height {
        return Err(Error::Format(format!(
            "expected a square image, got {width}x{height}"
        )));
    }
    let n = width * height;
    let raster = buf.get(pos..).unwrap_or_default();
    let pixels: Vec<u16> = if maxval <= 255 {
        if raster.len() < n {
            return Err(Error::Format("truncated pgm raster".into()));
        }
        raster[..n].iter().map(|&b| b as u16).collect()
    } else {
        if raster.len() < 2 * n {
            return Err(Error::Format("truncated pgm raster".into()));
        }
        raster[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    if maxval != max_level(meta.bit_depth) as usize {
        return Err(Error::CorruptMeta(format!(
            "pgm maxval {maxval} disagrees with bit depth {}",
            meta.bit_depth
        )));
    }
    Ok(ImageGrid {
        side: width,
        pixels,
        meta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AudioConfig {
    pub sample_rate: u32,
    pub dwell_ms: f64,
    /// `None` picks 9 s for padded lengths above 9 and 4 s otherwise.
    pub target_duration_s: Option<f64>,
}

impl Default for AudioConfig {
    fn default() -> Self {
        Self {
            sample_rate: 8000,
            dwell_ms: 25.0,
            target_duration_s: None,
        }
    }
}

impl AudioConfig {
    pub fn duration_for(&self, padded_len: usize) -> f64 {
        self.target_duration_s
            .unwrap_or(if padded_len > 9 { 9.0 } else { 4.0 })
    }
}

fn dwell_samples(sample_rate: u32, dwell_ms: f64) -> usize {
    (sample_rate as f64 * dwell_ms / 1000.0).round() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct WavClip {
    pub sample_rate: u32,
    pub samples: Vec<i16>,
    pub meta: ScaleMeta,
}

impl WavClip {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

pub fn signal_to_audio(v: &[f64], cfg: &AudioConfig) -> Result<WavClip> {
    if cfg.sample_rate < 1000 {
        return Err(Error::invalid(format!(
            "sample rate must be at least 1000 Hz, got {}",
            cfg.sample_rate
        )));
    }
    let dwell = dwell_samples(cfg.sample_rate, cfg.dwell_ms);
    if dwell == 0 {
        return Err(Error::invalid("dwell shorter than one sample"));
    }
    let padded = pad_signal(v)?;
    let target_s = cfg.duration_for(padded.len());
    let total = (target_s * cfg.sample_rate as f64).round() as usize;
    let burst = padded.len() * dwell;
    if burst > total {
        return Err(Error::BurstTooLong {
            burst_s: burst as f64 / cfg.sample_rate as f64,
            target_s,
        });
    }
    let mut meta = ScaleMeta::for_padded(v.len(), &padded, 16)?;
    meta.dwell_ms = Some(cfg.dwell_ms);
    meta.sample_rate = Some(cfg.sample_rate);

    let mut samples = Vec::with_capacity(total);
    for &x in &padded {
        let s = if meta.degenerate {
            0
        } else {
            let t = (x - meta.v_min) / meta.range();
            (-(AUDIO_PEAK as f64) + 2.0 * AUDIO_PEAK as f64 * t).round() as i16
        };
        samples.extend(std::iter::repeat_n(s, dwell));
    }
    samples.resize(total, 0);
    Ok(WavClip {
        sample_rate: cfg.sample_rate,
        samples,
        meta,
    })
}

pub fn audio_to_signal(clip: &WavClip) -> Result<Vec<f64>> {
    let meta = &clip.meta;
    let (Some(dwell_ms), Some(rate)) = (meta.dwell_ms, meta.sample_rate) else {
        return Err(Error::CorruptMeta(
            "audio sidecar lacks dwell_ms/sample_rate".into(),
        ));
    };
    if rate != clip.sample_rate {
        return Err(Error::CorruptMeta(format!(
            "sidecar rate {rate} != clip rate {}",
            clip.sample_rate
        )));
    }
    let dwell = dwell_samples(rate, dwell_ms);
    if dwell == 0 || meta.original_len == 0 || meta.original_len > meta.padded_len {
        return Err(Error::CorruptMeta("inconsistent audio metadata".into()));
    }
    let needed = meta.original_len * dwell;
    if clip.samples.len() < needed {
        return Err(Error::ClipTooShort {
            needed,
            found: clip.samples.len(),
        });
    }
    if meta.degenerate {
        return Ok(vec![meta.v_min; meta.original_len]);
    }
    let peak = AUDIO_PEAK as f64;
    Ok((0..meta.original_len)
        .map(|i| {
            let s = clip.samples[i * dwell] as f64;
            meta.v_min + meta.range() * (s + peak) / (2.0 * peak)
        })
        .collect())
}

/// RIFF/WAVE, 16-bit PCM, mono.
pub fn write_wav<W: Write>(clip: &WavClip, mut w: W) -> std::io::Result<()> {
    let data_len = (clip.samples.len() * 2) as u32;
    w.write_all(b"RIFF")?;
    w.write_all(&(36 + data_len).to_le_bytes())?;
    w.write_all(b"WAVE")?;
    w.write_all(b"fmt ")?;
    w.write_all(&16u32.to_le_bytes())?;
    w.write_all(&1u16.to_le_bytes())?; // PCM
    w.write_all(&1u16.to_le_bytes())?; // mono
    w.write_all(&clip.sample_rate.to_le_bytes())?;
    w.write_all(&(clip.sample_rate * 2).to_le_bytes())?;
    w.write_all(&2u16.to_le_bytes())?;
    w.write_all(&16u16.to_le_bytes())?;
    w.write_all(b"data")?;
    w.write_all(&data_len.to_le_bytes())?;
    let bytes: Vec<u8> = clip.samples.iter().flat_map(|s| s.to_le_bytes()).collect();
    w.write_all(&bytes)
}

pub fn read_wav<R: Read>(mut r: R, meta: ScaleMeta) -> Result<WavClip> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)
        .map_err(|e| Error::io("<wav reader>", e))?;
    if buf.len() < 12 || &buf[0..4] != b"RIFF" || &buf[8..12] != b"WAVE" {
        return Err(Error::Format("not a RIFF/WAVE file".into()));
    }
    let u16_at = |i: usize| u16::from_le_bytes([buf[i], buf[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes([buf[i], buf[i + 1], buf[i + 2], buf[i + 3]]);
    let mut pos = 12;
    let mut sample_rate = None;
    let mut samples = None;
    while pos + 8 <= buf.len() {
        let id = &buf[pos..pos + 4];
        let len = u32_at(pos + 4) as usize;
        let body = pos + 8;
        if body + len > buf.len() {
            return Err(Error::Format("truncated wav chunk".into()));
        }
        match id {
            b"fmt " => {
                if len < 16 {
                    return Err(Error::Format("short fmt chunk".into()));
                }
                let (format, channels, bits) = (u16_at(body), u16_at(body + 2), u16_at(body + 14));
                if format != 1 || channels != 1 || bits != 16 {
                    return Err(Error::Format(format!(
                        "expected 16-bit mono PCM, got format {format}, {channels} ch, {bits} bits"
                    )));
                }
                sample_rate = Some(u32_at(body + 4));
            }
            b"data" => {
                samples = Some(
                    buf[body..body + len]
                        .chunks_exact(2)
                        .map(|c| i16::from_le_bytes([c[0], c[1]]))
                        .collect::<Vec<_>>(),
                );
            }
            _ => {}
        }
        pos = body + len + (len & 1);
    }
    match (sample_rate, samples) {
        (Some(sample_rate), Some(samples)) => Ok(WavClip {
            sample_rate,
            samples,
            meta,
        }),
        _ => Err(Error::Format("wav is missing fmt or data chunk".into())),
    }
}
