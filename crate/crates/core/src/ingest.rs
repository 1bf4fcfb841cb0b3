//! Sensor recordings: parsing, synthesis, channel fusion, cleaning and splitting.
//!
//! A recording row carries 16 data channels laid out as
//! `emg1..emg8 | acc1..acc3 | gyro1..gyro3 | pose | label`, followed by a
//! timestamp column in the CSV form.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal, StudentT};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const EMG_CHANNELS: usize = 8;
pub const ACC_CHANNELS: usize = 3;
pub const GYRO_CHANNELS: usize = 3;
/// Data channels per record: EMG, accelerometer, gyroscope, pose, label.
pub const DATA_CHANNELS: usize = EMG_CHANNELS + ACC_CHANNELS + GYRO_CHANNELS + 2;

pub const CSV_HEADER: [&str; DATA_CHANNELS + 1] = [
    "emg1",
    "emg2",
    "emg3",
    "emg4",
    "emg5",
    "emg6",
    "emg7",
    "emg8",
    "acc1",
    "acc2",
    "acc3",
    "gyro1",
    "gyro2",
    "gyro3",
    "pose",
    "label",
    "timestamp",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    NoGesture,
    Gesture,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::NoGesture => 0,
            Label::Gesture => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Label> {
        match v {
            0 => Some(Label::NoGesture),
            1 => Some(Label::Gesture),
            _ => None,
        }
    }

    /// `+1` for gestures, `-1` otherwise.
    pub fn sign(self) -> f64 {
        match self {
            Label::Gesture => 1.0,
            Label::NoGesture => -1.0,
        }
    }

    pub fn other(self) -> Label {
        match self {
            Label::Gesture => Label::NoGesture,
            Label::NoGesture => Label::Gesture,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Gesture => "gesture",
            Label::NoGesture => "no-gesture",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gesture" | "1" => Ok(Label::Gesture),
            "no-gesture" | "nogesture" | "0" => Ok(Label::NoGesture),
            other => Err(Error::invalid(format!("unknown class `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorRecord {
    pub emg: [f64; EMG_CHANNELS],
    pub acc: [f64; ACC_CHANNELS],
    pub gyro: [f64; GYRO_CHANNELS],
    /// Categorical pose code. Parsed but never used as a feature.
    pub pose: f64,
    pub label: Label,
    pub timestamp: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SensorFrame {
    pub records: Vec<SensorRecord>,
}

impl SensorFrame {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn label_counts(&self) -> (usize, usize) {
        let gestures = self
            .records
            .iter()
            .filter(|r| r.label == Label::Gesture)
            .count();
        (gestures, self.records.len() - gestures)
    }
}

/// Parses a numeric CSV cell. `nan`, `inf`, `+inf` and `-inf` (any case)
/// become IEEE sentinels; any other alphabetic content is rejected.
fn parse_cell(cell: &str, row: usize, column: &str) -> Result<f64> {
    let trimmed = cell.trim();
    match trimmed.to_ascii_lowercase().as_str() {
        "nan" | "+nan" | "-nan" => return Ok(f64::NAN),
        "inf" | "+inf" => return Ok(f64::INFINITY),
        "-inf" => return Ok(f64::NEG_INFINITY),
        _ => {}
    }
    let bad = || Error::ParseCell {
        row,
        column: column.to_string(),
        cell: cell.to_string(),
    };
    if trimmed.is_empty()
        || trimmed
            .chars()
            .any(|c| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
    {
        return Err(bad());
    }
    trimmed.parse::<f64>().map_err(|_| bad())
}

pub fn parse_recording(path: impl AsRef<Path>) -> Result<SensorFrame> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_recording_from(file)
}

pub fn parse_recording_from<R: Read>(reader: R) -> Result<SensorFrame> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let header = rdr.headers()?.clone();
    let found: Vec<String> = header
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    if found.len() != CSV_HEADER.len() || found.iter().zip(CSV_HEADER).any(|(a, b)| a != b) {
        return Err(Error::Header {
            expected: CSV_HEADER.join(","),
            found: found.join(","),
        });
    }

    let mut records = Vec::new();
    let mut last_ts = f64::NEG_INFINITY;
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        // 1-based data row numbers, header excluded.
        let row_no = i + 1;
        if row.len() != CSV_HEADER.len() {
            return Err(Error::ColumnCount {
                row: row_no,
                expected: CSV_HEADER.len(),
                found: row.len(),
            });
        }
        let mut vals = [0.0f64; DATA_CHANNELS + 1];
        for (j, cell) in row.iter().enumerate() {
            vals[j] = parse_cell(cell, row_no, CSV_HEADER[j])?;
        }
        let label = match vals[15] {
            0.0 => Label::NoGesture,
            1.0 => Label::Gesture,
            v => {
                return Err(Error::BadLabel {
                    row: row_no,
                    value: v,
                })
            }
        };
        let timestamp = vals[16];
        // NaN fails this comparison too.
        if !(timestamp > last_ts) {
            return Err(Error::NonMonotoneTimestamps { row: row_no });
        }
        last_ts = timestamp;
        let mut emg = [0.0; EMG_CHANNELS];
        emg.copy_from_slice(&vals[0..8]);
        records.push(SensorRecord {
            emg,
            acc: [vals[8], vals[9], vals[10]],
            gyro: [vals[11], vals[12], vals[13]],
            pose: vals[14],
            label,
            timestamp,
        });
    }
    Ok(SensorFrame { records })
}

fn fmt_cell(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        // Shortest representation that round-trips.
        format!("{v:?}")
    }
}

pub fn write_recording<W: Write>(frame: &SensorFrame, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in &frame.records {
        let row = r
            .emg
            .iter()
            .chain(&r.acc)
            .chain(&r.gyro)
            .copied()
            .chain([r.pose, r.label.as_u8() as f64, r.timestamp])
            .map(fmt_cell);
        w.write_record(row)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Parameters for the synthetic recording generator.
///
/// Gesture rows occur in `segments` contiguous runs (a square wave on the
/// label channel). Inside a run the channels are shifted by a fixed
/// per-channel activation pattern and carry heavier-tailed noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub rows: usize,
    pub segments: usize,
    pub gesture_fraction: f64,
    pub sample_rate_hz: f64,
    /// Standard deviation of EMG counts at rest.
    pub emg_rest_noise: f64,
    /// Scale of the Student-t EMG noise during gestures.
    pub emg_gesture_noise: f64,
    pub imu_rest_noise: f64,
    pub imu_gesture_noise: f64,
    /// Multiplier on the gesture activation pattern.
    pub gesture_shift: f64,
    /// Degrees of freedom of the gesture noise.
    pub tail_dof: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            rows: 38507,
            segments: 5,
            gesture_fraction: 13662.0 / 38507.0,
            sample_rate_hz: 200.0,
            emg_rest_noise: 3.0,
            emg_gesture_noise: 4.0,
            imu_rest_noise: 0.05,
            imu_gesture_noise: 0.15,
            gesture_shift: 1.0,
            tail_dof: 5.0,
        }
    }
}

const EMG_PATTERN: [f64; EMG_CHANNELS] = [24.0, -16.0, 30.0, -8.0, 20.0, -26.0, 12.0, 28.0];
const ACC_REST: [f64; ACC_CHANNELS] = [0.0, 0.0, 1.0];
const ACC_PATTERN: [f64; ACC_CHANNELS] = [0.6, -0.4, -0.5];
const GYRO_PATTERN: [f64; GYRO_CHANNELS] = [40.0, -25.0, 30.0];

/// Start/end (exclusive) of each gesture run for the square-wave label channel.
pub fn gesture_runs(rows: usize, segments: usize, gesture_fraction: f64) -> Vec<(usize, usize)> {
    if segments == 0 || rows == 0 {
        return Vec::new();
    }
    let gesture_rows =
        ((gesture_fraction.clamp(0.0, 1.0) * rows as f64).round() as usize).min(rows);
    let rest_rows = rows - gesture_rows;
    let gaps = segments + 1;
    let mut runs = Vec::with_capacity(segments);
    let mut cursor = 0usize;
    for s in 0..segments {
        let gap = rest_rows / gaps + usize::from(s < rest_rows % gaps);
        let run = gesture_rows / segments + usize::from(s < gesture_rows % segments);
        cursor += gap;
        runs.push((cursor, cursor + run));
        cursor += run;
    }
    runs
}

pub fn synthesize_recording(cfg: &GeneratorConfig, seed: u64) -> Result<SensorFrame> {
    if cfg.rows == 0 {
        return Err(Error::invalid("synthetic recording needs at least one row"));
    }
    if !(cfg.sample_rate_hz > 0.0) {
        return Err(Error::invalid("sample rate must be positive"));
    }
    let runs = gesture_runs(cfg.rows, cfg.segments, cfg.gesture_fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let tails =
        StudentT::new(cfg.tail_dof).map_err(|e| Error::invalid(format!("tail_dof: {e}")))?;

    let mut records = Vec::with_capacity(cfg.rows);
    let mut run_iter = runs.iter().enumerate().peekable();
    for i in 0..cfg.rows {
        while run_iter.peek().is_some_and(|(_, &(_, end))| i >= end) {
            run_iter.next();
        }
        let segment = run_iter
            .peek()
            .filter(|(_, &(start, end))| i >= start && i < end)
            .map(|(s, _)| *s);

        let mut emg = [0.0; EMG_CHANNELS];
        let mut acc = [0.0; ACC_CHANNELS];
        let mut gyro = [0.0; GYRO_CHANNELS];
        let (label, pose) = match segment {
            Some(s) => {
                for (k, v) in emg.iter_mut().enumerate() {
                    let x = cfg.gesture_shift * EMG_PATTERN[k]
                        + cfg.emg_gesture_noise * tails.sample(&mut rng);
                    *v = x.round().clamp(-128.0, 127.0);
                }
                for k in 0..ACC_CHANNELS {
                    acc[k] = ACC_REST[k]
                        + cfg.gesture_shift * ACC_PATTERN[k]
                        + cfg.imu_gesture_noise * tails.sample(&mut rng);
                }
                for (k, v) in gyro.iter_mut().enumerate() {
                    *v = cfg.gesture_shift * GYRO_PATTERN[k]
                        + 100.0 * cfg.imu_gesture_noise * tails.sample(&mut rng);
                }
                (Label::Gesture, (s % 5 + 1) as f64)
            }
            None => {
                for v in emg.iter_mut() {
                    let x: f64 = cfg.emg_rest_noise * std_normal.sample(&mut rng);
                    *v = x.round().clamp(-128.0, 127.0);
                }
                for k in 0..ACC_CHANNELS {
                    acc[k] = ACC_REST[k] + cfg.imu_rest_noise * std_normal.sample(&mut rng);
                }
                for v in gyro.iter_mut() {
                    *v = 100.0 * cfg.imu_rest_noise * std_normal.sample(&mut rng);
                }
                (Label::NoGesture, 0.0)
            }
        };
        records.push(SensorRecord {
            emg,
            acc,
            gyro,
            pose,
            label,
            timestamp: i as f64 / cfg.sample_rate_hz,
        });
    }
    Ok(SensorFrame { records })
}

/// Sensor groupings fused into one feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    AccGyroEmg,
    AccGyro,
    Emg,
}

impl Pairing {
    pub const ALL: [Pairing; 3] = [Pairing::AccGyroEmg, Pairing::AccGyro, Pairing::Emg];

    pub fn dim(self) -> usize {
        match self {
            Pairing::AccGyroEmg => EMG_CHANNELS + ACC_CHANNELS + GYRO_CHANNELS,
            Pairing::AccGyro => ACC_CHANNELS + GYRO_CHANNELS,
            Pairing::Emg => EMG_CHANNELS,
        }
    }

    /// Zero-based channel indices, in recording order.
    pub fn channels(self) -> std::ops::Range<usize> {
        match self {
            Pairing::AccGyroEmg => 0..14,
            Pairing::AccGyro => 8..14,
            Pairing::Emg => 0..8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Pairing::AccGyroEmg => "acc-gyro-emg",
            Pairing::AccGyro => "acc-gyro",
            Pairing::Emg => "emg",
        }
    }
}

impl fmt::Display for Pairing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pairing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "acc-gyro-emg" | "acc+gyro+emg" => Ok(Pairing::AccGyroEmg),
            "acc-gyro" | "acc+gyro" => Ok(Pairing::AccGyro),
            "emg" => Ok(Pairing::Emg),
            other => Err(Error::invalid(format!("unknown pairing `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitTag {
    All,
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub vector: Vec<f64>,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub instances: Vec<Instance>,
    pub pairing: Pairing,
    pub split: SplitTag,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.instances.first().map_or(0, |i| i.vector.len())
    }

    pub fn labels(&self) -> Vec<Label> {
        self.instances.iter().map(|i| i.label).collect()
    }

    pub fn vectors(&self) -> Vec<&[f64]> {
        self.instances.iter().map(|i| i.vector.as_slice()).collect()
    }

    pub fn count(&self, label: Label) -> usize {
        self.instances.iter().filter(|i| i.label == label).count()
    }

    /// Same metadata, different rows.
    pub fn with_instances(&self, instances: Vec<Instance>) -> Dataset {
        Dataset {
            instances,
            pairing: self.pairing,
            split: self.split,
            seed: self.seed,
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        self.with_instances(indices.iter().map(|&i| self.instances[i].clone()).collect())
    }

    /// Writes one row per instance, label (0/1) in the last column.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.dim()).map(|i| format!("f{i}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for inst in &self.instances {
            let mut row: Vec<String> = inst.vector.iter().map(|v| fmt_cell(*v)).collect();
            row.push(inst.label.as_u8().to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, pairing: Pairing) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let width = rdr.headers()?.len();
        if width < 2 {
            return Err(Error::invalid(
                "descriptor csv needs a feature and a label column",
            ));
        }
        let mut instances = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            if row.len() != width {
                return Err(Error::ColumnCount {
                    row: i + 1,
                    expected: width,
                    found: row.len(),
                });
            }
            let vector = row
                .iter()
                .take(width - 1)
                .enumerate()
                .map(|(j, c)| parse_cell(c, i + 1, &format!("f{}", j + 1)))
                .collect::<Result<Vec<_>>>()?;
            let raw = parse_cell(&row[width - 1], i + 1, "label")?;
            let label = if raw == 0.0 {
                Label::NoGesture
            } else if raw == 1.0 {
                Label::Gesture
            } else {
                return Err(Error::BadLabel {
                    row: i + 1,
                    value: raw,
                });
            };
            instances.push(Instance { vector, label });
        }
        Ok(Dataset {
            instances,
            pairing,
            split: SplitTag::All,
            seed: 0,
        })
    }
}

pub fn fuse_channels(frame: &SensorFrame, pairing: Pairing) -> Result<Dataset> {
    if frame.is_empty() {
        return Err(Error::invalid("cannot fuse an empty recording"));
    }
    let instances = frame
        .records
        .iter()
        .map(|r| {
            let all: Vec<f64> = r.emg.iter().chain(&r.acc).chain(&r.gyro).copied().collect();
            Instance {
                vector: all[pairing.channels()].to_vec(),
                label: r.label,
            }
        })
        .collect();
    Ok(Dataset {
        instances,
        pairing,
        split: SplitTag::All,
        seed: 0,
    })
}

/// Bit key for exact duplicate detection; `-0.0` and `0.0` compare equal.
fn row_key(inst: &Instance) -> (Vec<u64>, u8) {
    (
        inst.vector.iter().map(|v| (v + 0.0).to_bits()).collect(),
        inst.label.as_u8(),
    )
}

/// Drops rows with NaN/infinite entries, then exact duplicates (first kept).
pub fn preprocess(ds: &Dataset) -> Result<Dataset> {
    let mut seen = HashSet::new();
    let instances: Vec<Instance> = ds
        .instances
        .iter()
        .filter(|inst| inst.vector.iter().all(|v| v.is_finite()))
        .filter(|inst| seen.insert(row_key(inst)))
        .cloned()
        .collect();
    if instances.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(ds.with_instances(instances))
}

/// Index-level stratified split; both returned lists are sorted.
pub fn stratified_indices(
    labels: &[Label],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for class in [Label::NoGesture, Label::Gesture] {
        let mut members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        if members.len() < 2 {
            return Err(Error::DegenerateClass {
                label: class.as_u8(),
                count: members.len(),
                needed: 2,
            });
        }
        members.shuffle(&mut rng);
        let n = members.len();
        let k = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
        train.extend_from_slice(&members[..k]);
        valid.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    valid.sort_unstable();
    Ok((train, valid))
}

/// Stratified split into (train, validation), survivors kept in input order.
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train_idx, valid_idx) = stratified_indices(&ds.labels(), train_fraction, seed)?;
    let mut train = ds.subset(&train_idx);
    train.split = SplitTag::Train;
    train.seed = seed;
    let mut valid = ds.subset(&valid_idx);
    valid.split = SplitTag::Validation;
    valid.seed = seed;
    Ok((train, valid))
}

/// Stratified random subsample of at most `cap` rows (all rows if smaller).
pub fn stratified_subsample(ds: &Dataset, cap: usize, seed: u64) -> Result<Dataset> {
    if ds.len() <= cap {
        return Ok(ds.clone());
    }
    let fraction = cap as f64 / ds.len() as f64;
    let (keep, _) = stratified_indices(&ds.labels(), fraction, seed)?;
    Ok(ds.subset(&keep))
}

/// Uniform random permutation of `0..n` for a seed.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// Deterministic per-purpose seed derived from a base seed and a tag.
pub fn derive_seed(base: u64, tag: &str) -> u64 {
    // FNV-1a over the tag, mixed with the base through splitmix64.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = base ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Random draw helper shared by tests of downstream modules.
pub fn random_unit_vectors(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> String {
        CSV_HEADER.join(",")
    }

    fn row(ts: f64, label: u8) -> String {
        format!("1,2,3,4,5,6,7,8,0.1,0.2,0.3,10,20,30,0,{label},{ts}")
    }

    #[test]
    fn empty_file_with_header_parses_to_zero_records() {
        let csv = format!("{}\n", header());
        let frame = parse_recording_from(csv.as_bytes()).unwrap();
        assert!(frame.is_empty());
    }

    #[test]
    fn inf_cell_is_retained_as_sentinel() {
        let csv = format!(
            "{}\n{}\ninf,2,3,4,5,6,7,8,0.1,0.2,0.3,10,20,30,0,1,0.5\n",
            header(),
            row(0.0, 0)
        );
        let frame = parse_recording_from(csv.as_bytes()).unwrap();
        assert_eq!(frame.len(), 2);
        assert_eq!(frame.records[1].emg[0], f64::INFINITY);
        assert_eq!(frame.records[1].label, Label::Gesture);
    }

    #[test]
    fn sentinel_spellings_are_case_insensitive() {
        assert!(parse_cell("NaN", 1, "x").unwrap().is_nan());
        assert_eq!(parse_cell("-INF", 1, "x").unwrap(), f64::NEG_INFINITY);
        assert_eq!(parse_cell(" 1.5e3 ", 1, "x").unwrap(), 1500.0);
        assert!(parse_cell("infinity", 1, "x").is_err());
        assert!(parse_cell("abc", 1, "x").is_err());
        assert!(parse_cell("", 1, "x").is_err());
    }

    #[test]
    fn wrong_column_count_is_rejected() {
        let csv = format!("{}\n1,2,3\n", header());
        assert!(matches!(
            parse_recording_from(csv.as_bytes()),
            Err(Error::ColumnCount {
                row: 1,
                found: 3,
                ..
            })
        ));
    }

    #[test]
    fn non_monotone_timestamps_are_rejected() {
        let csv = format!("{}\n{}\n{}\n", header(), row(1.0, 0), row(1.0, 1));
        assert!(matches!(
            parse_recording_from(csv.as_bytes()),
            Err(Error::NonMonotoneTimestamps { row: 2 })
        ));
    }

    #[test]
    fn bad_header_is_rejected() {
        let csv = "a,b,c\n1,2,3\n";
        assert!(matches!(
            parse_recording_from(csv.as_bytes()),
            Err(Error::Header { .. })
        ));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        assert!(matches!(
            parse_recording("/definitely/not/here.csv"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn write_then_parse_round_trips() {
        let cfg = GeneratorConfig {
            rows: 50,
            ..Default::default()
        };
        let frame = synthesize_recording(&cfg, 3).unwrap();
        let mut buf = Vec::new();
        write_recording(&frame, &mut buf).unwrap();
        let back = parse_recording_from(buf.as_slice()).unwrap();
        assert_eq!(frame, back);
    }

    #[test]
    fn synthesized_square_wave_has_requested_runs() {
        let cfg = GeneratorConfig {
            rows: 1000,
            segments: 5,
            ..Default::default()
        };
        let frame = synthesize_recording(&cfg, 42).unwrap();
        let mut runs = 0;
        let mut prev = Label::NoGesture;
        for r in &frame.records {
            if r.label == Label::Gesture && prev == Label::NoGesture {
                runs += 1;
            }
            prev = r.label;
        }
        assert_eq!(runs, 5);
    }

    #[test]
    fn synthesis_is_deterministic() {
        let cfg = GeneratorConfig {
            rows: 500,
            ..Default::default()
        };
        let a = synthesize_recording(&cfg, 9).unwrap();
        let b = synthesize_recording(&cfg, 9).unwrap();
        assert_eq!(a, b);
        let c = synthesize_recording(&cfg, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn full_size_synthesis_matches_reported_class_counts() {
        let cfg = GeneratorConfig::default();
        let frame = synthesize_recording(&cfg, 7).unwrap();
        assert_eq!(frame.len(), 38507);
        let (g, ng) = frame.label_counts();
        assert!((g as f64 - 13662.0).abs() <= 0.01 * 13662.0);
        assert!((ng as f64 - 24845.0).abs() <= 0.01 * 24845.0);
    }

    #[test]
    fn zero_rows_is_an_error() {
        let cfg = GeneratorConfig {
            rows: 0,
            ..Default::default()
        };
        assert!(synthesize_recording(&cfg, 1).is_err());
    }

    #[test]
    fn fusion_takes_channel_slices_in_order() {
        let csv = format!("{}\n{}\n", header(), row(0.0, 1));
        let frame = parse_recording_from(csv.as_bytes()).unwrap();
        let ds = fuse_channels(&frame, Pairing::AccGyro).unwrap();
        assert_eq!(
            ds.instances[0].vector,
            vec![0.1, 0.2, 0.3, 10.0, 20.0, 30.0]
        );
        let ds = fuse_channels(&frame, Pairing::AccGyroEmg).unwrap();
        assert_eq!(ds.dim(), 14);
        assert_eq!(
            &ds.instances[0].vector[..8],
            &[1., 2., 3., 4., 5., 6., 7., 8.]
        );
        assert_eq!(ds.instances[0].label, Label::Gesture);
    }

    #[test]
    fn fusion_of_zero_record_is_zero_vector() {
        let rec = SensorRecord {
            emg: [0.0; 8],
            acc: [0.0; 3],
            gyro: [0.0; 3],
            pose: 0.0,
            label: Label::NoGesture,
            timestamp: 0.0,
        };
        let frame = SensorFrame { records: vec![rec] };
        let ds = fuse_channels(&frame, Pairing::AccGyroEmg).unwrap();
        assert_eq!(ds.instances[0].vector, vec![0.0; 14]);
    }

    #[test]
    fn emg_fusion_on_full_frame_keeps_shape() {
        let frame = synthesize_recording(&GeneratorConfig::default(), 7).unwrap();
        let ds = fuse_channels(&frame, Pairing::Emg).unwrap();
        assert_eq!((ds.len(), ds.dim()), (38507, 8));
    }

    fn inst(v: &[f64], l: Label) -> Instance {
        Instance {
            vector: v.to_vec(),
            label: l,
        }
    }

    fn ds(instances: Vec<Instance>) -> Dataset {
        Dataset {
            instances,
            pairing: Pairing::Emg,
            split: SplitTag::All,
            seed: 0,
        }
    }

    #[test]
    fn preprocess_drops_nan_rows_and_duplicates() {
        let d = ds(vec![
            inst(&[1.0, 2.0], Label::Gesture),
            inst(&[f64::NAN, 2.0], Label::Gesture),
            inst(&[3.0, 4.0], Label::NoGesture),
        ]);
        assert_eq!(preprocess(&d).unwrap().len(), 2);

        let d = ds(vec![
            inst(&[1.0, 2.0], Label::Gesture),
            inst(&[1.0, 2.0], Label::Gesture),
        ]);
        assert_eq!(preprocess(&d).unwrap().len(), 1);

        // Same vector, different label: both kept.
        let d = ds(vec![
            inst(&[1.0, 2.0], Label::Gesture),
            inst(&[1.0, 2.0], Label::NoGesture),
            inst(&[-0.0, 2.0], Label::NoGesture),
            inst(&[0.0, 2.0], Label::NoGesture),
        ]);
        assert_eq!(preprocess(&d).unwrap().len(), 3);
    }

    #[test]
    fn preprocess_of_all_bad_rows_is_an_error() {
        let d = ds(vec![inst(&[f64::INFINITY], Label::Gesture)]);
        assert!(matches!(preprocess(&d), Err(Error::EmptyDataset)));
    }

    #[test]
    fn split_is_stratified_and_deterministic() {
        let instances = (0..100)
            .map(|i| {
                inst(
                    &[i as f64],
                    if i % 2 == 0 {
                        Label::Gesture
                    } else {
                        Label::NoGesture
                    },
                )
            })
            .collect();
        let d = ds(instances);
        let (tr, va) = split(&d, 0.75, 1).unwrap();
        assert_eq!(tr.len() + va.len(), 100);
        assert!((74..=76).contains(&tr.len()));
        let pos = tr.count(Label::Gesture);
        assert!(pos == 37 || pos == 38, "{pos}");
        let (tr2, va2) = split(&d, 0.75, 1).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(va, va2);
        assert_eq!(tr.split, SplitTag::Train);
    }

    #[test]
    fn single_class_split_fails() {
        let d = ds((0..8).map(|i| inst(&[i as f64], Label::Gesture)).collect());
        assert!(matches!(
            split(&d, 0.75, 1),
            Err(Error::DegenerateClass { .. })
        ));
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let d = ds(vec![]);
        assert!(split(&d, 0.0, 1).is_err());
        assert!(split(&d, 1.0, 1).is_err());
    }

    #[test]
    fn descriptor_csv_round_trips() {
        let d = ds(vec![
            inst(&[1.5, -2.0], Label::Gesture),
            inst(&[0.25, 4.0], Label::NoGesture),
        ]);
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice(), Pairing::Emg).unwrap();
        assert_eq!(back.instances, d.instances);
    }
}
