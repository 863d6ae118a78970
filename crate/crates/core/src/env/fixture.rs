use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TabularMdp;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// On-disk form of a [`TabularMdp`] (TOML). Floats are written in shortest
/// round-trip form, so `load(save(m)) == m` bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub start_dist: Vec<f64>,
    /// `[s][a][s']` row-major.
    pub transition: Vec<f64>,
    /// `[s][a]` row-major.
    pub true_reward: Vec<f64>,
}

impl<T: Scalar> From<&TabularMdp<T>> for MdpFile {
    fn from(m: &TabularMdp<T>) -> Self {
        let cast = |v: &[T]| v.iter().map(|x| x.as_f64()).collect();
        Self {
            n_states: m.n_states,
            n_actions: m.n_actions,
            gamma: m.gamma.as_f64(),
            start_dist: cast(&m.start_dist),
            transition: cast(&m.transition),
            true_reward: cast(&m.true_reward),
        }
    }
}

impl MdpFile {
    pub fn into_mdp<T: Scalar>(self) -> Result<TabularMdp<T>> {
        let cast = |v: Vec<f64>| v.into_iter().map(T::lit).collect();
        TabularMdp::new(
            self.n_states,
            self.n_actions,
            cast(self.transition),
            cast(self.true_reward),
            T::lit(self.gamma),
            cast(self.start_dist),
        )
    }
}

impl<T: Scalar> TabularMdp<T> {
    pub fn to_toml_string(&self) -> String {
        toml::to_string(&MdpFile::from(self)).expect("MDP fixture serializes")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: MdpFile = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        file.into_mdp()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_toml_string())
            .map_err(|e| Error::Format(format!("{}: {e}", path.as_ref().display())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Format(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml_str(&text)
    }
}
