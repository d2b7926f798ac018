use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, ClusterConfig, ClusterMode};
use crate::embedding::{Encoder, RandomEncoder, DEFAULT_EMBED_DIM};
use crate::envsim::{MazeConfig, ObsMode, RewardRegime, DEFAULT_VISIT_QUANTUM};
use crate::error::{Error, Result};
use crate::pseudocount::{DEFAULT_IR_SCALE, DEFAULT_KAPPA};
use crate::rng::{derive_seed, Stream};

/// Environment overrides the output root.
pub const OUTPUT_ROOT_ENV: &str = "CLUSTERCOUNT_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub kind: ObsMode,
    pub noisy_tv: bool,
    /// Layout seed shared by every run seed; derived from the run seed when unset.
    pub maze_seed: Option<u64>,
    pub visit_quantum: f64,
    pub maze: MazeConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            kind: ObsMode::Maze,
            noisy_tv: false,
            maze_seed: None,
            visit_quantum: DEFAULT_VISIT_QUANTUM,
            maze: MazeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    #[default]
    Random,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub embed_dim: usize,
    /// Derived from the run seed when unset.
    pub seed: Option<u64>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Random,
            embed_dim: DEFAULT_EMBED_DIM,
            seed: None,
        }
    }
}

/// Optional outputs of a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Per-step JSON-lines stream next to the metrics file.
    pub step_stream: bool,
    /// Adds a wall-clock column; metrics are then no longer reproducible byte for byte.
    pub wall_clock: bool,
    /// Text dump of every episode's mixture.
    pub dump_gmm: bool,
    /// Records the run's embeddings (single-seed runs only) plus the live rewards.
    pub embedding_trace: Option<PathBuf>,
}

/// Full description of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub name: String,
    pub seeds: Vec<u64>,
    pub total_steps: usize,
    /// A metrics row is written every this many episodes, and after the last one.
    pub eval_every: usize,
    pub kappa: f64,
    pub ir_scale: f64,
    pub regime: RewardRegime,
    /// One-hot tabular observations, identity encoder and passthrough clustering.
    pub oracle_mode: bool,
    pub output_dir: Option<PathBuf>,
    pub env: EnvConfig,
    pub encoder: EncoderConfig,
    pub clustering: ClusterConfig,
    pub agent: AgentConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            seeds: vec![0],
            total_steps: 100_000,
            eval_every: 1,
            kappa: DEFAULT_KAPPA,
            ir_scale: DEFAULT_IR_SCALE,
            regime: RewardRegime::SparseExtrinsic,
            oracle_mode: false,
            output_dir: None,
            env: EnvConfig::default(),
            encoder: EncoderConfig::default(),
            clustering: ClusterConfig::default(),
            agent: AgentConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies oracle mode; every other field is left as configured.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        if c.oracle_mode {
            c.env.kind = ObsMode::Tabular;
            c.encoder.kind = EncoderKind::Identity;
            c.clustering.mode = ClusterMode::Passthrough;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds: at least one seed is required".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seeds: duplicate seed".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(Error::Config(format!(
                "kappa must lie in [0, 1], got {}",
                self.kappa
            )));
        }
        if !(self.ir_scale.is_finite() && self.ir_scale >= 0.0) {
            return Err(Error::Config(format!(
                "ir_scale must be non-negative, got {}",
                self.ir_scale
            )));
        }
        if !(self.env.visit_quantum > 0.0 && self.env.visit_quantum.is_finite()) {
            return Err(Error::Config("env.visit_quantum must be positive".into()));
        }
        if self.encoder.embed_dim == 0 {
            return Err(Error::Config("encoder.embed_dim must be at least 1".into()));
        }
        if self.output.embedding_trace.is_some() && self.seeds.len() != 1 {
            return Err(Error::Config(
                "output.embedding_trace needs exactly one seed".into(),
            ));
        }
        self.env.maze.validate()?;
        self.clustering.validate()?;
        self.agent.validate()
    }

    /// Output directory: explicit setting, else `$CLUSTERCOUNT_OUTPUT_ROOT/<name>`,
    /// else `runs/<name>`.
    pub fn output_dir(&self) -> PathBuf {
        if let Some(dir) = &self.output_dir {
            return dir.clone();
        }
        let root = std::env::var_os(OUTPUT_ROOT_ENV)
            .map_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT), PathBuf::from);
        root.join(&self.name)
    }

    pub fn maze_seed(&self, run_seed: u64) -> u64 {
        self.env
            .maze_seed
            .unwrap_or_else(|| derive_seed(run_seed, Stream::Maze))
    }

    pub fn encoder_seed(&self, run_seed: u64) -> u64 {
        self.encoder
            .seed
            .unwrap_or_else(|| derive_seed(run_seed, Stream::Encoder))
    }

    pub fn build_encoder(
        &self,
        run_seed: u64,
        input_shape: (usize, usize, usize),
    ) -> Result<Encoder> {
        Ok(match self.encoder.kind {
            EncoderKind::Identity => Encoder::Identity { input_shape },
            EncoderKind::Random => Encoder::Random(RandomEncoder::new(
                self.encoder_seed(run_seed),
                input_shape,
                self.encoder.embed_dim,
            )?),
        })
    }
}
