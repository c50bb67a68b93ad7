//! Resolved run descriptions written next to every output file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shfront::profile::{Conventions, ModelKind};
use shfront::ssafn::SsafnConfig;
use shfront::stft::StftConfig;

use crate::error::CliError;

pub const TOOL: &str = "shfront";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum WavFormat {
    Float32,
    Pcm16,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateJob {
    pub scene: PathBuf,
    pub output: PathBuf,
    pub seed: u64,
    pub format: WavFormat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformJob {
    pub input: PathBuf,
    pub output: PathBuf,
    pub geometry: PathBuf,
    pub order: usize,
    /// Microphone indices actually used, after any random draw.
    pub subset: Option<Vec<usize>>,
    /// Seed of the random draw that produced `subset`, if any.
    pub subset_seed: Option<u64>,
    pub stft: StftConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnhanceJob {
    pub input: PathBuf,
    pub output: PathBuf,
    pub weights: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileJob {
    pub seconds: Vec<f64>,
    pub models: Vec<ModelKind>,
    pub json: bool,
    pub output: PathBuf,
    pub conventions: Conventions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightsInitJob {
    pub output: PathBuf,
    pub seed: u64,
    pub config: SsafnConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "snake_case")]
pub enum Job {
    Simulate(SimulateJob),
    Transform(TransformJob),
    Enhance(EnhanceJob),
    Profile(ProfileJob),
    WeightsInit(WeightsInitJob),
}

impl Job {
    pub fn output(&self) -> &Path {
        match self {
            Job::Simulate(j) => &j.output,
            Job::Transform(j) => &j.output,
            Job::Enhance(j) => &j.output,
            Job::Profile(j) => &j.output,
            Job::WeightsInit(j) => &j.output,
        }
    }

    pub fn set_output(&mut self, path: PathBuf) {
        match self {
            Job::Simulate(j) => j.output = path,
            Job::Transform(j) => j.output = path,
            Job::Enhance(j) => j.output = path,
            Job::Profile(j) => j.output = path,
            Job::WeightsInit(j) => j.output = path,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub job: Job,
}

impl RunManifest {
    pub fn new(job: Job) -> Self {
        Self {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            job,
        }
    }

    pub fn path_for(output: &Path) -> PathBuf {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read manifest {}: {e}", path.display())))?;
        let m: RunManifest = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("malformed manifest {}: {e}", path.display())))?;
        if m.tool != TOOL {
            return Err(CliError::usage(format!("manifest was written by {:?}", m.tool)));
        }
        Ok(m)
    }

    pub fn write(&self) -> Result<(), CliError> {
        let path = Self::path_for(self.job.output());
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n")
            .map_err(|e| CliError::write(format!("cannot write {}: {e}", path.display())))
    }
}

/// Absolute form of a user path so manifests replay from any directory.
pub fn absolute(path: &Path) -> PathBuf {
    std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf())
}
