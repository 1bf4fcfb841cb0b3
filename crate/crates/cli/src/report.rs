//! Consolidated run report.
//!
//! `report.json` holds no wall-clock data, so two runs with the same
//! config serialize to the same bytes. Timings go to `timings.json`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sigcamo::eval::{ConfusionMatrix, Metrics};
use sigcamo::ingest::Pairing;

use crate::config::{DataType, RunConfig};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Classification,
    Detection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kernel: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellError {
    /// Machine-readable, e.g. `below-nyquist`.
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub mean: f64,
    pub standard_error: f64,
    pub ci95: [f64; 2],
    pub fold_accuracies: Vec<f64>,
    pub sigma: Vec<Option<f64>>,
    pub c: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub task: Task,
    pub method: String,
    pub data_type: DataType,
    pub pairing: Pairing,
    /// `ok` or `failed`.
    pub status: String,
    pub error: Option<CellError>,
    pub provenance: Provenance,
    pub metrics: Option<Metrics>,
    pub confusion: Option<ConfusionMatrix>,
    pub auc: Option<f64>,
    /// Majority-class accuracy on the rows this cell was scored on.
    pub baseline: Option<f64>,
    pub cv: Option<CvSummary>,
    pub eval_rows: Option<usize>,
}

impl CellReport {
    pub fn key(&self) -> String {
        cell_key(&self.method, self.data_type, self.pairing)
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    /// Accuracy minus baseline, when both exist.
    pub fn margin(&self) -> Option<f64> {
        Some(self.metrics?.accuracy - self.baseline?)
    }
}

pub fn cell_key(method: &str, data_type: DataType, pairing: Pairing) -> String {
    format!("{method}.{data_type}.{pairing}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunProvenance {
    pub config_hash: String,
    pub version: String,
    pub generator_seed: Option<u64>,
    pub input: Option<String>,
    pub mean_seeds: [u64; 3],
    pub detector_seed: u64,
}

/// Best cell of one task, judged by accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestCell {
    pub key: String,
    pub accuracy: f64,
    pub baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cells: usize,
    pub failed: usize,
    pub best_classification: Option<BestCell>,
    pub best_detection: Option<BestCell>,
    /// Some classification cell strictly beats its majority baseline.
    pub classification_beats_baseline: bool,
    pub detection_beats_baseline: bool,
}

/// method -> data type -> pairing -> metrics.
pub type Table = BTreeMap<String, BTreeMap<String, BTreeMap<String, Metrics>>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub provenance: RunProvenance,
    /// pairing -> [instances, gesture, no-gesture].
    pub datasets: BTreeMap<String, [usize; 3]>,
    pub cells: BTreeMap<String, CellReport>,
    pub failed_cells: Vec<String>,
    pub table: Table,
    pub summary: Summary,
}

fn best(cells: &[&CellReport]) -> Option<BestCell> {
    let mut out: Option<BestCell> = None;
    for c in cells {
        let (Some(m), Some(b)) = (c.metrics, c.baseline) else {
            continue;
        };
        if out.as_ref().is_none_or(|o| m.accuracy > o.accuracy) {
            out = Some(BestCell {
                key: c.key(),
                accuracy: m.accuracy,
                baseline: b,
            });
        }
    }
    out
}

impl Report {
    pub fn assemble(
        cfg: &RunConfig,
        config_hash: String,
        datasets: BTreeMap<String, [usize; 3]>,
        cells: Vec<CellReport>,
    ) -> Report {
        let provenance = RunProvenance {
            config_hash,
            version: TOOL_VERSION.to_string(),
            generator_seed: cfg.data.input.is_none().then_some(cfg.data.generator_seed),
            input: cfg.data.input.as_ref().map(|p| p.display().to_string()),
            mean_seeds: [cfg.seeds.am, cfg.seeds.gm, cfg.seeds.hm],
            detector_seed: cfg.detect.seed,
        };
        Report::from_cells(provenance, datasets, cells)
    }

    pub fn from_cells(
        provenance: RunProvenance,
        datasets: BTreeMap<String, [usize; 3]>,
        cells: Vec<CellReport>,
    ) -> Report {
        let cells: BTreeMap<String, CellReport> = cells.into_iter().map(|c| (c.key(), c)).collect();
        let failed_cells: Vec<String> = cells
            .values()
            .filter(|c| !c.is_ok())
            .map(CellReport::key)
            .collect();
        let mut table = Table::new();
        for c in cells.values() {
            if let Some(m) = c.metrics {
                table
                    .entry(c.method.clone())
                    .or_default()
                    .entry(c.data_type.to_string())
                    .or_default()
                    .insert(c.pairing.to_string(), m);
            }
        }
        let of_task =
            |t: Task| -> Vec<&CellReport> { cells.values().filter(|c| c.task == t).collect() };
        let beats = |t: Task| {
            of_task(t)
                .iter()
                .any(|c| c.margin().is_some_and(|m| m > 0.0))
        };
        let summary = Summary {
            cells: cells.len(),
            failed: failed_cells.len(),
            best_classification: best(&of_task(Task::Classification)),
            best_detection: best(&of_task(Task::Detection)),
            classification_beats_baseline: beats(Task::Classification),
            detection_beats_baseline: beats(Task::Detection),
        };
        Report {
            provenance,
            datasets,
            cells,
            failed_cells,
            table,
            summary,
        }
    }

    pub fn to_bytes(&self) -> serde_json::Result<Vec<u8>> {
        let mut v = serde_json::to_vec_pretty(self)?;
        v.push(b'\n');
        Ok(v)
    }

    pub fn read(path: &Path) -> anyhow::Result<Report> {
        let bytes =
            fs::read(path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// Hex SHA-256 of a serialized report.
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_s: f64,
    pub cells_s: BTreeMap<String, f64>,
    pub cache_hits: usize,
    pub cache_misses: usize,
}

/// Writes to a sibling temp file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(method: &str, task: Task, acc: Option<f64>, baseline: f64) -> CellReport {
        CellReport {
            task,
            method: method.into(),
            data_type: DataType::Signal,
            pairing: Pairing::Emg,
            status: if acc.is_some() { "ok" } else { "failed" }.into(),
            error: None,
            provenance: Provenance {
                config_hash: "h".into(),
                seed: 1,
                version: TOOL_VERSION.into(),
                kernel: None,
            },
            metrics: acc.map(|a| Metrics {
                accuracy: a,
                precision: None,
                sensitivity: None,
                specificity: None,
            }),
            confusion: None,
            auc: None,
            baseline: Some(baseline),
            cv: None,
            eval_rows: None,
        }
    }

    fn prov() -> RunProvenance {
        RunProvenance {
            config_hash: "h".into(),
            version: TOOL_VERSION.into(),
            generator_seed: Some(7),
            input: None,
            mean_seeds: [1, 2, 3],
            detector_seed: 4,
        }
    }

    #[test]
    fn table_and_summary() {
        let r = Report::from_cells(
            prov(),
            BTreeMap::new(),
            vec![
                cell("svm-rbf-AM", Task::Classification, Some(0.7), 0.65),
                cell("svm-scaled-cjsd-AM", Task::Classification, None, 0.65),
                cell("iforest", Task::Detection, Some(0.5), 0.6),
            ],
        );
        assert_eq!(
            r.failed_cells,
            vec!["svm-scaled-cjsd-AM.signal.emg".to_string()]
        );
        assert_eq!(r.table["svm-rbf-AM"]["signal"]["emg"].accuracy, 0.7);
        assert!(r.summary.classification_beats_baseline);
        assert!(!r.summary.detection_beats_baseline);
        assert_eq!(
            r.summary.best_classification.unwrap().key,
            "svm-rbf-AM.signal.emg"
        );
    }

    #[test]
    fn serialization_is_stable() {
        let a = Report::from_cells(
            prov(),
            BTreeMap::new(),
            vec![cell("mlp", Task::Classification, Some(0.8), 0.6)],
        );
        let bytes = a.to_bytes().unwrap();
        let back: Report = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(digest(&bytes).len(), 64);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
