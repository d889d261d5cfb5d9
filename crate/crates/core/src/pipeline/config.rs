use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::SynthConfig;
use crate::disambig::Stage1Config;
use crate::error::{Error, Result};
use crate::nnet::ModelConfig;
use crate::vecnmt::{DecodeConfig, DecodeMode, NmtConfig};

/// Environment variable that replaces the master seed.
pub const SEED_ENV: &str = "LEXI_SEED";

/// Stage-2 route.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Vec,
    Template,
}

impl Backend {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "vec" => Ok(Self::Vec),
            "template" => Ok(Self::Template),
            _ => Err(Error::Config(format!("unknown backend {s:?}; expected vec or template"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Vec => "vec",
            Self::Template => "template",
        }
    }
}

/// Where constraint choices for ambiguous lexicons come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selector {
    Stage1,
    Random,
    #[serde(rename = "mostfreq")]
    MostFreq,
    Gold,
}

impl Selector {
    pub const ALL: [Selector; 4] = [Self::Stage1, Self::Random, Self::MostFreq, Self::Gold];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "stage1" => Ok(Self::Stage1),
            "random" => Ok(Self::Random),
            "mostfreq" => Ok(Self::MostFreq),
            "gold" => Ok(Self::Gold),
            _ => Err(Error::Config(format!(
                "unknown selector {s:?}; expected stage1, random, mostfreq or gold"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Stage1 => "stage1",
            Self::Random => "random",
            Self::MostFreq => "mostfreq",
            Self::Gold => "gold",
        }
    }
}

/// Every knob of every command. Component seeds are derived from `seed`
/// by [`RunConfig::resolved`], so one number pins a whole run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads for per-sentence decoding.
    pub threads: usize,
    pub synth: SynthConfig,
    /// Train / valid / test fractions.
    pub split: (f64, f64, f64),
    pub stage1: Stage1Config,
    pub nmt: NmtConfig,
    pub decode: DecodeConfig,
    pub mode: DecodeMode,
    pub backend: Backend,
    pub selector: Selector,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            threads: 1,
            synth: SynthConfig::default(),
            split: (0.8, 0.1, 0.1),
            stage1: Stage1Config {
                model: ModelConfig {
                    d_model: 64,
                    ffn_dim: 128,
                    ..ModelConfig::default()
                },
                steps: 3000,
                ..Stage1Config::default()
            },
            nmt: NmtConfig {
                steps: 4000,
                ..NmtConfig::default()
            },
            decode: DecodeConfig::default(),
            mode: DecodeMode::Gda,
            backend: Backend::Vec,
            selector: Selector::Stage1,
        }
    }
}

impl RunConfig {
    /// Parses a TOML file; absent fields keep their defaults.
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies `LEXI_SEED` when it is set.
    pub fn with_env_seed(mut self) -> Result<Self> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(self)
    }

    /// Copy with every component seed derived from the master seed.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.synth.seed = self.seed;
        c.stage1.seed = self.seed.wrapping_add(2);
        c.nmt.seed = self.seed.wrapping_add(3);
        c
    }

    pub fn split_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    pub fn selector_seed(&self) -> u64 {
        self.seed.wrapping_add(4)
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if self.decode.beam == 0 {
            return Err(Error::Config("beam size must be at least 1".into()));
        }
        Ok(())
    }
}
