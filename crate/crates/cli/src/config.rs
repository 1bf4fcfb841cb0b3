//! Run configuration, read from a TOML file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sigcamo::anomaly::{CalibrationConfig, GmmConfig, DEFAULT_SUBSAMPLE, DEFAULT_TREES};
use sigcamo::classify::{CvConfig, MlpConfig};
use sigcamo::divergence::{ChisiniKind, DEFAULT_GRID_POINTS};
use sigcamo::encode::AudioConfig;
use sigcamo::features::{GistParams, MfccParams};
use sigcamo::ingest::{GeneratorConfig, Label, Pairing};
use sigcamo::kernels::{enumerate_specs, KernelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataType {
    Signal,
    Image,
    Audio,
}

impl DataType {
    pub const ALL: [DataType; 3] = [DataType::Signal, DataType::Image, DataType::Audio];

    pub fn name(self) -> &'static str {
        match self {
            DataType::Signal => "signal",
            DataType::Image => "image",
            DataType::Audio => "audio",
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DataType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "signal" => Ok(DataType::Signal),
            "image" => Ok(DataType::Image),
            "audio" => Ok(DataType::Audio),
            other => Err(format!("unknown data type `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    Ocsvm,
    Iforest,
    Gmm,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 3] = [
        DetectorKind::Ocsvm,
        DetectorKind::Iforest,
        DetectorKind::Gmm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Ocsvm => "ocsvm",
            DetectorKind::Iforest => "iforest",
            DetectorKind::Gmm => "gmm",
        }
    }
}

impl FromStr for DetectorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ocsvm" => Ok(DetectorKind::Ocsvm),
            "iforest" => Ok(DetectorKind::Iforest),
            "gmm" => Ok(DetectorKind::Gmm),
            other => Err(format!("unknown detector `{other}`")),
        }
    }
}

/// One randomization seed per Chisini mean family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanSeeds {
    pub am: u64,
    pub gm: u64,
    pub hm: u64,
}

impl Default for MeanSeeds {
    fn default() -> Self {
        Self {
            am: 1101,
            gm: 2202,
            hm: 3303,
        }
    }
}

impl MeanSeeds {
    pub fn get(&self, kind: ChisiniKind) -> u64 {
        match kind {
            ChisiniKind::Arithmetic => self.am,
            ChisiniKind::Geometric => self.gm,
            ChisiniKind::Harmonic => self.hm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Recording CSV; the generator is used when absent.
    pub input: Option<PathBuf>,
    pub generator_seed: u64,
    pub generator: GeneratorConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            input: None,
            generator_seed: 7,
            generator: GeneratorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodeConfig {
    pub bit_depth: u32,
    pub audio: AudioConfig,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self {
            bit_depth: 8,
            audio: AudioConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// `grid = 0` picks the side of the source image.
    pub gist: GistParams,
    pub mfcc: MfccParams,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            gist: GistParams {
                resize_to: 32,
                grid: 0,
                ..GistParams::default()
            },
            mfcc: MfccParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    pub enabled: bool,
    /// Kernel keys such as `scaled-mcjsd-GM`; empty means all 21.
    pub kernels: Vec<String>,
    /// Stratified subsample size per randomized dataset.
    pub cap: usize,
    pub grid_points: usize,
    pub cv: CvConfig,
    pub mlp: bool,
    pub mlp_config: MlpConfig,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            kernels: Vec::new(),
            cap: 200,
            grid_points: DEFAULT_GRID_POINTS,
            cv: CvConfig::default(),
            mlp: true,
            mlp_config: MlpConfig::default(),
        }
    }
}

impl ClassifyConfig {
    pub fn specs(&self) -> Result<Vec<KernelSpec>, String> {
        if self.kernels.is_empty() {
            return Ok(enumerate_specs(1.0));
        }
        let mut out = Vec::new();
        for k in &self.kernels {
            let spec: KernelSpec = k.parse().map_err(|e: sigcamo::Error| e.to_string())?;
            if spec.mean.is_none() {
                return Err(format!("kernel `{k}` needs a mean suffix such as `-AM`"));
            }
            if !out.contains(&spec) {
                out.push(spec);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    pub enabled: bool,
    pub detectors: Vec<DetectorKind>,
    pub train_class: Label,
    pub train_fraction: f64,
    /// Largest number of training rows handed to a detector.
    pub train_cap: usize,
    pub seed: u64,
    pub nu: f64,
    pub trees: usize,
    pub subsample: usize,
    /// PCA dimensions for descriptors wider than this; 0 disables.
    pub pca_components: usize,
    pub gmm: GmmConfig,
    pub calibration: CalibrationConfig,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            detectors: DetectorKind::ALL.to_vec(),
            train_class: Label::Gesture,
            train_fraction: 0.75,
            train_cap: 1000,
            seed: 4404,
            nu: 0.1,
            trees: DEFAULT_TREES,
            subsample: DEFAULT_SUBSAMPLE,
            pca_components: 30,
            gmm: GmmConfig::default(),
            calibration: CalibrationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Not part of the config hash.
    pub output_dir: Option<PathBuf>,
    pub pairings: Vec<Pairing>,
    pub data_types: Vec<DataType>,
    pub seeds: MeanSeeds,
    pub data: DataConfig,
    pub encode: EncodeConfig,
    pub features: FeatureConfig,
    pub classify: ClassifyConfig,
    pub detect: DetectConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: None,
            pairings: Pairing::ALL.to_vec(),
            data_types: DataType::ALL.to_vec(),
            seeds: MeanSeeds::default(),
            data: DataConfig::default(),
            encode: EncodeConfig::default(),
            features: FeatureConfig::default(),
            classify: ClassifyConfig::default(),
            detect: DetectConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> anyhow::Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate().map_err(anyhow::Error::msg)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.pairings.is_empty() || self.data_types.is_empty() {
            return Err("at least one pairing and one data type are required".into());
        }
        let s = self.seeds;
        if s.am == s.gm || s.gm == s.hm || s.am == s.hm {
            return Err("seeds must differ between mean families".into());
        }
        if self.classify.cap < 2 * self.classify.cv.folds {
            return Err("classification cap is too small for the fold count".into());
        }
        if !(self.detect.train_fraction > 0.0 && self.detect.train_fraction < 1.0) {
            return Err("detector train fraction must lie in (0, 1)".into());
        }
        self.classify.specs()?;
        Ok(())
    }

    /// Canonical TOML without the output directory.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        toml::to_string(&c).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}
