use serde::{Deserialize, Serialize};

use crate::critic_fit::CriticFitConfig;
use crate::error::{Error, Result};
use crate::models::Architecture;

/// Which hyper-gradient formula the outer step uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HyperVariant {
    /// Preference batch from the plain chain, `(∇Ĵ(plain) − ∇Ĵ(pen)) / σ`.
    PaperLiteral,
    /// Preference batch from the penalized chain, `(∇Ĵ(pen) − ∇Ĵ(plain)) / σ`:
    /// the gradient of `[max (J + σG⁺) − max J] / σ`.
    #[default]
    PenaltyConsistent,
}

/// Which policy generates the rollouts of each inner step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Each chain samples under its own current policy.
    #[default]
    PerChain,
    /// Both chains share replay tuples and visitation draws from the plain
    /// chain's policy.
    Shared,
}

/// Where each outer iteration's inner chains begin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainStart {
    /// Both chains restart from the initial policy `λ_0` every outer step.
    #[default]
    Restart,
    /// Chains continue from their previous final iterates.
    WarmStart,
}

fn one() -> f64 {
    1.0
}

fn default_norm_eps() -> f64 {
    1e-12
}

fn default_heldout_pairs() -> usize {
    1000
}

fn tabular() -> Architecture {
    Architecture::Tabular
}

/// Every hyperparameter of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Outer iterations.
    #[serde(rename = "T")]
    pub t_outer: usize,
    /// Inner iterations per outer step.
    #[serde(rename = "K")]
    pub k_inner: usize,
    /// Preference pairs per batch.
    #[serde(rename = "B")]
    pub batch: usize,
    /// Replay tuples and visitation draws per inner step.
    pub n: usize,
    /// Trajectory length.
    #[serde(rename = "H")]
    pub horizon: usize,
    pub sigma: f64,
    #[serde(default = "one")]
    pub mu1: f64,
    #[serde(default = "one")]
    pub mu2: f64,
    #[serde(default = "one")]
    pub mu3: f64,
    pub critic: CriticFitConfig,
    #[serde(default = "default_norm_eps")]
    pub norm_eps: f64,
    #[serde(default)]
    pub hyper_variant: HyperVariant,
    #[serde(default)]
    pub sampling_mode: SamplingMode,
    #[serde(default)]
    pub chain_start: ChainStart,
    #[serde(default)]
    pub seed: u64,
    /// Length of the trajectories behind the `∇_φ J` estimates; `H` when
    /// unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_horizon: Option<usize>,
    /// Cap on the geometric horizon of visitation draws; the smallest
    /// horizon with tail mass `≤ 1e-3` when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_geo_horizon: Option<usize>,
    #[serde(default = "tabular")]
    pub policy_arch: Architecture,
    #[serde(default = "tabular")]
    pub reward_arch: Architecture,
    #[serde(default = "tabular")]
    pub critic_arch: Architecture,
    /// Compute the enumerated upper objective in every record.
    #[serde(default)]
    pub oracle_enabled: bool,
    /// Size of the fixed held-out set behind `pref_accuracy`.
    #[serde(default = "default_heldout_pairs")]
    pub heldout_pairs: usize,
}

impl TrainConfig {
    /// Config with the required fields set and every default applied.
    pub fn new(
        t_outer: usize,
        k_inner: usize,
        batch: usize,
        n: usize,
        horizon: usize,
        sigma: f64,
        critic: CriticFitConfig,
    ) -> Self {
        Self {
            t_outer,
            k_inner,
            batch,
            n,
            horizon,
            sigma,
            mu1: 1.0,
            mu2: 1.0,
            mu3: 1.0,
            critic,
            norm_eps: default_norm_eps(),
            hyper_variant: HyperVariant::default(),
            sampling_mode: SamplingMode::default(),
            chain_start: ChainStart::default(),
            seed: 0,
            j_horizon: None,
            max_geo_horizon: None,
            policy_arch: Architecture::Tabular,
            reward_arch: Architecture::Tabular,
            critic_arch: Architecture::Tabular,
            oracle_enabled: false,
            heldout_pairs: default_heldout_pairs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("T", self.t_outer),
            ("K", self.k_inner),
            ("B", self.batch),
            ("n", self.n),
            ("H", self.horizon),
            ("heldout_pairs", self.heldout_pairs),
        ];
        for (key, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{key} must be >= 1")));
            }
        }
        if self.j_horizon == Some(0) {
            return Err(Error::Config("j_horizon must be >= 1".into()));
        }
        if self.max_geo_horizon == Some(0) {
            return Err(Error::Config("max_geo_horizon must be >= 1".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        for (key, v) in [("mu1", self.mu1), ("mu2", self.mu2), ("mu3", self.mu3)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{key} must be positive, got {v}")));
            }
        }
        if !(self.norm_eps >= 0.0) {
            return Err(Error::Config("norm_eps must be nonnegative".into()));
        }
        self.critic.validate()
    }

    pub fn j_horizon(&self) -> usize {
        self.j_horizon.unwrap_or(self.horizon)
    }

    pub fn max_geo_horizon(&self, gamma: f64) -> usize {
        self.max_geo_horizon.unwrap_or_else(|| crate::env::default_geo_horizon(gamma))
    }
}

/// `(η_t, τ_k, τ′_k) = 7/(2t√μ1), 7/(2(k+1)√μ3), 7/(2(k+1)√μ2)` with the
/// inner index starting at 0.
pub fn step_sizes(t: usize, k: usize, cfg: &TrainConfig) -> Result<(f64, f64, f64)> {
    if t == 0 {
        return Err(Error::Usage("outer index starts at 1".into()));
    }
    let k1 = (k + 1) as f64;
    Ok((
        7.0 / (2.0 * t as f64 * cfg.mu1.sqrt()),
        7.0 / (2.0 * k1 * cfg.mu3.sqrt()),
        7.0 / (2.0 * k1 * cfg.mu2.sqrt()),
    ))
}

/// Diagnostics of one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub t: usize,
    /// Batch mean of the label likelihood at `φ_t`.
    pub upper_value_est: f64,
    /// Enumerated `G⁺(λ_t^K, φ_t)`; NaN unless the oracle is enabled.
    pub upper_value_exact: f64,
    /// `J` of the plain chain's policy under the hidden reward.
    pub j_true_exact: f64,
    /// Held-out ranking accuracy of `φ_{t+1}`.
    pub pref_accuracy: f64,
    pub grad_norm_dt: f64,
    /// Replay-buffer Bellman residual of the plain chain's last critic.
    pub bellman_residual: f64,
}
