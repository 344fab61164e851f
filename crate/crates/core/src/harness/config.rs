use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::AgentConfig;
use crate::envs::EnvKind;
use crate::error::{ensure, Error, Result};
use crate::replay::RelabelMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Ddpg,
    Her,
    Mher,
    Gcsl,
    Mve,
}

impl Algo {
    pub const ALL: [Algo; 5] = [Algo::Ddpg, Algo::Her, Algo::Mher, Algo::Gcsl, Algo::Mve];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Ddpg => "ddpg",
            Algo::Her => "her",
            Algo::Mher => "mher",
            Algo::Gcsl => "gcsl",
            Algo::Mve => "mve",
        }
    }

    /// Relabeling and supervised-term settings that define the algorithm.
    pub fn agent_defaults(self) -> AgentConfig {
        let base = AgentConfig::default();
        match self {
            Algo::Ddpg | Algo::Mve => AgentConfig {
                relabel_mode: RelabelMode::None,
                alpha: 0.0,
                ..base
            },
            Algo::Her => AgentConfig {
                relabel_mode: RelabelMode::HerFuture,
                alpha: 0.0,
                ..base
            },
            Algo::Mher => base,
            Algo::Gcsl => AgentConfig {
                relabel_mode: RelabelMode::HerFuture,
                alpha: 0.0,
                p_relabel: 1.0,
                ..base
            },
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::UnknownName {
                kind: "algorithm",
                name: s.to_string(),
            })
    }
}

/// Everything that determines one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub env: EnvKind,
    pub algo: Algo,
    #[serde(flatten)]
    pub agent: AgentConfig,
    pub epochs: usize,
    /// Defaults to 1 on the point tasks and 15 on the arm.
    pub episodes_per_epoch: Option<usize>,
    pub batches_per_episode: usize,
    pub batch_size: usize,
    pub model_updates_per_batch: usize,
    pub warmup_updates: usize,
    pub warmup_batch_size: usize,
    pub warmup_episodes: usize,
    pub eval_episodes: usize,
    pub buffer_capacity: usize,
    pub model_layers: usize,
    pub model_width: usize,
    pub lr_model: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Also write the final replay buffer as CSV.
    pub dump_buffer: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::new(EnvKind::Point2DLarge, Algo::Mher)
    }
}

impl RunConfig {
    pub fn new(env: EnvKind, algo: Algo) -> Self {
        Self {
            env,
            algo,
            agent: algo.agent_defaults(),
            epochs: 30,
            episodes_per_epoch: None,
            batches_per_episode: 5,
            batch_size: 64,
            model_updates_per_batch: 2,
            warmup_updates: 100,
            warmup_batch_size: 512,
            warmup_episodes: 10,
            eval_episodes: 100,
            buffer_capacity: 1_000_000,
            model_layers: 4,
            model_width: 256,
            lr_model: 1e-3,
            seed: 0,
            out: None,
            dump_buffer: false,
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&body)?)
    }

    pub fn episodes_per_epoch(&self) -> usize {
        self.episodes_per_epoch.unwrap_or(match self.env {
            EnvKind::PlanarReacher => 15,
            EnvKind::Point2DLarge | EnvKind::Point2DFourRoom => 1,
        })
    }

    pub fn model_hidden(&self) -> Vec<usize> {
        vec![self.model_width; self.model_layers]
    }

    /// The supervised term draws on a separate model-relabeled copy of the
    /// batch while the RL terms use the configured relabeling.
    pub fn split_supervision(&self) -> bool {
        self.algo != Algo::Gcsl
            && self.agent.effective_alpha() > 0.0
            && self.agent.relabel_mode != RelabelMode::Mbr
    }

    pub fn uses_model(&self) -> bool {
        match self.algo {
            Algo::Gcsl => false,
            Algo::Mve => true,
            Algo::Ddpg | Algo::Her | Algo::Mher => {
                self.agent.relabel_mode == RelabelMode::Mbr || self.split_supervision()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        for (name, n) in [
            ("epochs", self.epochs),
            ("episodes_per_epoch", self.episodes_per_epoch()),
            ("batches_per_episode", self.batches_per_episode),
            ("batch_size", self.batch_size),
            ("model_updates_per_batch", self.model_updates_per_batch),
            ("warmup_updates", self.warmup_updates),
            ("warmup_batch_size", self.warmup_batch_size),
            ("warmup_episodes", self.warmup_episodes),
            ("eval_episodes", self.eval_episodes),
            ("model_layers", self.model_layers),
            ("model_width", self.model_width),
        ] {
            ensure!(n > 0, InvalidArgument, "{name} must be positive");
        }
        ensure!(self.lr_model > 0.0, InvalidArgument, "lr_model must be positive");
        Ok(())
    }
}
