//! Run configuration, error classes and the run manifest.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use lobgen::calibration::GridSpec;
use lobgen::ingest::DatasetConfig;
use lobgen::nn::{ModelConfig, TrainSchedule};
use lobgen::sim::SimConfig;
use lobgen::ExecMode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Data,
    Runtime,
}

impl Kind {
    pub fn code(self) -> i32 {
        match self {
            Kind::Usage => 1,
            Kind::Data => 2,
            Kind::Runtime => 3,
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Usage => "usage",
            Kind::Data => "data",
            Kind::Runtime => "runtime",
        })
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub msg: String,
}

impl CliError {
    /// `error: kind=<kind> msg="<message>"` on one line.
    pub fn line(&self) -> String {
        let msg = self.msg.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
        format!("error: kind={} msg=\"{}\"", self.kind, msg)
    }
}

pub fn usage(msg: impl fmt::Display) -> CliError {
    CliError { kind: Kind::Usage, msg: msg.to_string() }
}

pub fn data(msg: impl fmt::Display) -> CliError {
    CliError { kind: Kind::Data, msg: msg.to_string() }
}

pub fn runtime(msg: impl fmt::Display) -> CliError {
    CliError { kind: Kind::Runtime, msg: msg.to_string() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorChoice {
    Baseline,
    Tabl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every component seed derives from it.
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// LOBSTER message and orderbook files.
    #[serde(default)]
    pub messages: Option<PathBuf>,
    #[serde(default)]
    pub orderbook: Option<PathBuf>,
    /// Mid-price CSV used as the calibration history.
    #[serde(default)]
    pub history: Option<PathBuf>,
    /// Dataset written by `ingest`, read by `train` and the tabl generator.
    #[serde(default)]
    pub dataset_dir: Option<PathBuf>,
    /// Trained heads written by `train`.
    #[serde(default)]
    pub models_dir: Option<PathBuf>,
    /// Baseline generator JSON; the synthetic default is used when absent.
    #[serde(default)]
    pub baseline: Option<PathBuf>,
    /// Deletion statistics JSON; overrides `engine.deletion`.
    #[serde(default)]
    pub deletion_stats: Option<PathBuf>,
    /// Overrides the deletion hazard scale.
    #[serde(default)]
    pub deletion_scale: Option<f64>,
    #[serde(default)]
    pub engine: SimConfig,
    #[serde(default = "default_generator")]
    pub generator: GeneratorChoice,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    /// Log-spacing half-width of the default grid.
    #[serde(default = "default_grid_factor")]
    pub grid_factor: f64,
    #[serde(default)]
    pub dataset: DatasetConfig,
    /// Template for the three heads; head, window and class counts follow
    /// the dataset.
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub schedule: TrainSchedule,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_events")]
    pub events: usize,
    #[serde(default = "default_t_inject")]
    pub t_inject: usize,
    #[serde(default)]
    pub execution: ExecMode,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_generator() -> GeneratorChoice {
    GeneratorChoice::Baseline
}

fn default_grid_factor() -> f64 {
    4.0
}

fn default_paths() -> usize {
    50
}

fn default_events() -> usize {
    10_000
}

fn default_t_inject() -> usize {
    1_000
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
        cfg.check_files()?;
        Ok(cfg)
    }

    /// Every referenced input must exist.
    pub fn check_files(&self) -> Result<(), CliError> {
        let inputs = [&self.messages, &self.orderbook, &self.history, &self.dataset_dir, &self.models_dir, &self.baseline, &self.deletion_stats];
        for p in inputs.into_iter().flatten() {
            if !p.exists() {
                return Err(data(format!("referenced path {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub seed: u64,
    pub config_sha256: String,
    pub config: &'a RunConfig,
    pub outputs: Vec<String>,
    pub created_unix: u64,
}

pub fn write_manifest(command: &str, cfg: &RunConfig, outputs: &[PathBuf]) -> Result<PathBuf, CliError> {
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config_sha256: cfg.hash(),
        config: cfg,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    };
    let path = cfg.out.join(format!("manifest_{command}.json"));
    let text = serde_json::to_string_pretty(&manifest).map_err(runtime)?;
    fs::write(&path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    Ok(path)
}
