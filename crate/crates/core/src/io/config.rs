//! JSON run configuration shared by the CLI subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::AugmentPlan;
use crate::dodiss::DodissConfig;
use crate::error::{Error, Result};
use crate::samix::MixConfig;
use crate::synth::SynthConfig;
use crate::train::TrainConfig;

/// Corpus and artifact locations. Command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub source: Option<PathBuf>,
    pub source_labels: Option<PathBuf>,
    pub source_val: Option<PathBuf>,
    pub source_val_labels: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub target_test: Option<PathBuf>,
    pub target_test_labels: Option<PathBuf>,
    pub distance: Option<PathBuf>,
    pub sensitivity: Option<PathBuf>,
}

/// Which model answers predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OracleSpec {
    /// The in-process toy model loaded from a checkpoint.
    Builtin { checkpoint: Option<PathBuf> },
    /// External processes speaking the line protocol.
    Subprocess {
        command: Vec<String>,
        #[serde(default = "one")]
        processes: usize,
        #[serde(default)]
        timeout_secs: Option<u64>,
    },
}

fn one() -> usize {
    1
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec::Builtin { checkpoint: None }
    }
}

/// Toy model layout; image dims come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelLayout {
    pub pool_grid: Option<usize>,
    pub hidden: usize,
}

impl Default for ModelLayout {
    fn default() -> Self {
        Self {
            pool_grid: Some(8),
            hidden: 64,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// When set, overrides every component seed (each gets its own offset).
    pub seed: Option<u64>,
    pub paths: Paths,
    pub oracle: OracleSpec,
    pub output_dir: Option<PathBuf>,
    pub model: ModelLayout,
    pub augment: AugmentPlan,
    pub dodiss: DodissConfig,
    pub mix: MixConfig,
    pub train: TrainConfig,
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg.apply_seed())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |r: Result<()>| r.map_err(|e| Error::Config(e.to_string()));
        wrap(self.augment.validate())?;
        wrap(self.mix.validate())?;
        wrap(self.train.validate())?;
        if self.model.hidden == 0 {
            return Err(Error::Config("model.hidden must be >= 1".into()));
        }
        if self.dodiss.batch_size == 0 {
            return Err(Error::Config("dodiss.batch_size must be >= 1".into()));
        }
        if let OracleSpec::Subprocess { command, processes, .. } = &self.oracle {
            if command.is_empty() || *processes == 0 {
                return Err(Error::Config("subprocess oracle needs a command and >= 1 process".into()));
            }
        }
        Ok(())
    }

    /// Pushes `seed`, when set, into every component config.
    pub fn apply_seed(mut self) -> Self {
        if let Some(seed) = self.seed {
            self.synth.seed = seed;
            self.augment.seed = seed.wrapping_add(1);
            self.dodiss.seed = seed.wrapping_add(2);
            self.train.seed = seed.wrapping_add(3);
        }
        self
    }
}
