//! Run manifests and benchmark suite files (TOML, versioned, unknown keys
//! rejected). Saved snapshots have every default filled in explicitly so an
//! archived run is self-describing.

use crate::CliError;
use migap::{
    Error as MigapError, MlpConfig, OptimizerConfig, SamplingConfig, TaskSpec, TrainConfig,
    Variant,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const MANIFEST_VERSION: u32 = 1;

fn default_version() -> u32 {
    MANIFEST_VERSION
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Profile {
    /// Reduced budgets that finish on a laptop CPU.
    Desk,
    /// Full-scale published settings.
    Paper,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        }
    }

    pub fn train_config(self, seed: u64) -> TrainConfig {
        match self {
            Profile::Desk => TrainConfig::desk(seed),
            Profile::Paper => TrainConfig::paper(seed),
        }
    }

    /// Network sizing. The desk profile fixes width 64; the paper profile
    /// scales width with the task dimension (64 up to 10 total dims, 128 up
    /// to 20, 256 beyond).
    pub fn mlp_config(self, task: &TaskSpec) -> MlpConfig {
        let total = task.dim_x() + task.dim_y();
        let (width, time_embed_dim) = match self {
            Profile::Desk => (64, 16),
            Profile::Paper => {
                let w = if total <= 10 {
                    64
                } else if total <= 20 {
                    128
                } else {
                    256
                };
                (w, 64)
            }
        };
        MlpConfig {
            input_dim: task.dim_x(),
            width,
            n_blocks: 3,
            time_embed_dim,
            cond_dim: task.dim_y(),
            output_dim: task.dim_x(),
        }
    }
}

/// Everything needed to reproduce one training-plus-estimation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    #[serde(default = "default_version")]
    pub version: u32,
    pub task: TaskSpec,
    pub variant: Variant,
    pub train: TrainConfig,
    pub mlp: MlpConfig,
    pub optimizer: OptimizerConfig,
    /// Estimation-time log-SNR proposal (training uses `train.sampling`).
    pub sampling: SamplingConfig,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl RunManifest {
    pub fn from_profile(
        profile: Profile,
        task: TaskSpec,
        variant: Variant,
        seeds: Vec<u64>,
        output_dir: PathBuf,
    ) -> Self {
        let train = profile.train_config(seeds.first().copied().unwrap_or(0));
        RunManifest {
            version: MANIFEST_VERSION,
            mlp: profile.mlp_config(&task),
            task,
            variant,
            sampling: train.sampling,
            train,
            optimizer: OptimizerConfig::default(),
            seeds,
            output_dir,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.version != MANIFEST_VERSION {
            return Err(CliError::Manifest(format!(
                "unsupported manifest version {} (expected {MANIFEST_VERSION})",
                self.version
            )));
        }
        if self.seeds.is_empty() {
            return Err(CliError::Manifest("seeds must be non-empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(CliError::Manifest("seeds must be distinct".into()));
        }
        self.task.validate().map_err(field_error("task"))?;
        self.train.validate().map_err(field_error("train"))?;
        self.mlp.validate().map_err(field_error("mlp"))?;
        self.optimizer.validate().map_err(field_error("optimizer"))?;
        self.sampling.validate().map_err(field_error("sampling"))?;
        if self.mlp.output_dim != self.task.dim_x() || self.mlp.cond_dim != self.task.dim_y() {
            return Err(CliError::Manifest(format!(
                "mlp dims ({}, {}) do not match task dims ({}, {})",
                self.mlp.output_dim,
                self.mlp.cond_dim,
                self.task.dim_x(),
                self.task.dim_y()
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let body = std::fs::read_to_string(path)?;
        let manifest: RunManifest = toml::from_str(&body)
            .map_err(|e| CliError::Manifest(format!("{}: {e}", path.display())))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let body =
            toml::to_string_pretty(self).map_err(|e| CliError::Manifest(e.to_string()))?;
        std::fs::write(path, body)?;
        Ok(())
    }
}

fn field_error(field: &'static str) -> impl Fn(MigapError) -> CliError {
    move |e| CliError::Manifest(format!("{field}: {e}"))
}

/// Benchmark suite: a list of tasks plus the estimator variants to compare.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteFile {
    #[serde(default = "default_version")]
    pub version: u32,
    pub tasks: Vec<TaskSpec>,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
}

fn default_variants() -> Vec<Variant> {
    vec![Variant::Gap, Variant::GapAdaptive]
}

impl SuiteFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let body = std::fs::read_to_string(path)?;
        let suite: SuiteFile = toml::from_str(&body)
            .map_err(|e| CliError::Manifest(format!("{}: {e}", path.display())))?;
        if suite.version != MANIFEST_VERSION {
            return Err(CliError::Manifest(format!(
                "unsupported suite version {}",
                suite.version
            )));
        }
        if suite.tasks.is_empty() {
            return Err(CliError::Manifest("suite lists no tasks".into()));
        }
        for t in &suite.tasks {
            t.validate()
                .map_err(|e| CliError::Manifest(format!("task: {e}")))?;
        }
        if suite.variants.is_empty() {
            return Err(CliError::Manifest("suite lists no variants".into()));
        }
        Ok(suite)
    }
}

/// Loads a task description TOML (the same shape as the `[task]` table of a
/// manifest).
pub fn load_task(path: &Path) -> Result<TaskSpec, CliError> {
    let body = std::fs::read_to_string(path)?;
    let task: TaskSpec = toml::from_str(&body)
        .map_err(|e| CliError::Manifest(format!("{}: {e}", path.display())))?;
    task.validate()
        .map_err(|e| CliError::Manifest(e.to_string()))?;
    Ok(task)
}
