//! Experiment configuration: a TOML file of dotted keys.
//!
//! ```toml
//! env.kind = "random"
//! env.seed = 0
//! env.n_states = 5
//! env.n_actions = 2
//! env.gamma = 0.9
//! T = 50
//! K = 20
//! B = 64
//! n = 256
//! H = 5
//! sigma = 0.3
//! critic.J_outer = 5
//! critic.L_inner = 200
//! ```
//!
//! Every key outside `env` is a [`TrainConfig`] field. Unknown keys are
//! rejected by name.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rlhf_bilevel::bilevel::TrainConfig;
use rlhf_bilevel::seeds::{stream_rng, Stream};
use rlhf_bilevel::{Error, Result, TabularMdp};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum EnvConfig {
    /// Dirichlet transitions and uniform rewards. Without `seed` the MDP is
    /// drawn from the environment stream of the master seed.
    Random {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        n_states: usize,
        n_actions: usize,
        gamma: f64,
    },
    Chain {
        n_states: usize,
        gamma: f64,
        #[serde(default)]
        slip: f64,
    },
    /// An MDP saved with `TabularMdp::save`. Relative paths are resolved
    /// against the config file's directory.
    Fixture { path: PathBuf },
}

impl EnvConfig {
    pub fn build(&self, master_seed: u64) -> Result<TabularMdp> {
        match self {
            EnvConfig::Random { seed, n_states, n_actions, gamma } => {
                let seed = seed.unwrap_or_else(|| stream_rng(master_seed, Stream::Environment).random());
                TabularMdp::random(seed, *n_states, *n_actions, *gamma)
            }
            EnvConfig::Chain { n_states, gamma, slip } => TabularMdp::chain(*n_states, *gamma, *slip),
            EnvConfig::Fixture { path } => TabularMdp::load(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub train: TrainConfig,
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string().trim_end().to_owned())
}

impl ExperimentConfig {
    /// Strict parse with defaults applied. `base_dir` anchors relative
    /// fixture paths.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(config_err)?;
        let env = table.remove("env").ok_or_else(|| Error::Config("missing key `env`".into()))?;
        let mut env: EnvConfig = env.try_into().map_err(|e| config_err(format!("env: {e}")))?;
        let train: TrainConfig = toml::Value::Table(table).try_into().map_err(config_err)?;
        if let EnvConfig::Fixture { path } = &mut env {
            if path.is_relative() {
                *path = base_dir.join(&*path);
            }
            if !path.is_file() {
                return Err(Error::Config(format!("env.path: {} does not exist", path.display())));
            }
        }
        if let EnvConfig::Random { n_states, n_actions, gamma, .. } = &env {
            if *n_states < 2 || *n_actions < 2 {
                return Err(Error::Config("env.n_states and env.n_actions must be at least 2".into()));
            }
            if !(*gamma > 0.0 && *gamma < 1.0) {
                return Err(Error::Config(format!("env.gamma must lie in (0, 1), got {gamma}")));
            }
        }
        train.validate()?;
        Ok(Self { env, train })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    /// Every key with its resolved value, one dotted key per line, sorted
    /// within each section. Parses back to an equal config.
    pub fn to_dotted_toml(&self) -> String {
        let mut out = String::new();
        let env = toml::Value::try_from(&self.env).expect("env serializes");
        flatten(&mut out, "env.", &env);
        let train = toml::Value::try_from(&self.train).expect("train config serializes");
        flatten(&mut out, "", &train);
        out
    }
}

fn flatten(out: &mut String, prefix: &str, value: &toml::Value) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if is_bare_key(k) { k.clone() } else { toml::Value::String(k.clone()).to_string() };
                flatten(out, &format!("{prefix}{key}."), v);
            }
        }
        leaf => {
            writeln!(out, "{} = {leaf}", prefix.trim_end_matches('.')).expect("string write");
        }
    }
}

fn is_bare_key(k: &str) -> bool {
    !k.is_empty() && k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}
