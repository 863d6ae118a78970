//! Q-function estimation with experience replay, a per-phase target network,
//! projection onto a ball around the initial parameters and iterate
//! averaging.
//!
//! Each of the `j_outer` phases runs `l_inner` single-sample semi-gradient TD
//! steps against a frozen target; the target of phase `j` is the averaged
//! iterate of phase `j - 1` (phase 1 uses the initial critic). Phases warm
//! start from the previous average, and the projection center stays at the
//! critic's anchor throughout.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::ParamVec;
use crate::env::{sample_categorical, Transition};
use crate::error::{Error, Result};
use crate::models::{CriticModel, PolicyModel};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticFitConfig {
    /// Number of target phases.
    #[serde(rename = "J_outer")]
    pub j_outer: usize,
    /// Steps per phase (also the target refresh period).
    #[serde(rename = "L_inner")]
    pub l_inner: usize,
    /// TD step size; `1/sqrt(l_inner)` when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_beta: Option<f64>,
    /// Projection radius; `1/(1 - γ)` when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

impl CriticFitConfig {
    pub fn new(j_outer: usize, l_inner: usize) -> Self {
        Self { j_outer, l_inner, step_beta: None, radius: None }
    }

    pub fn beta(&self) -> f64 {
        self.step_beta.unwrap_or_else(|| 1.0 / (self.l_inner as f64).sqrt())
    }

    pub fn radius_for(&self, gamma: f64) -> f64 {
        self.radius.unwrap_or(1.0 / (1.0 - gamma))
    }

    pub fn validate(&self) -> Result<()> {
        if self.j_outer == 0 || self.l_inner == 0 {
            return Err(Error::Config("critic J_outer and L_inner must be >= 1".into()));
        }
        if !(self.beta() > 0.0) {
            return Err(Error::Config("critic step_beta must be positive".into()));
        }
        if let Some(r) = self.radius {
            if !(r > 0.0) {
                return Err(Error::Config("critic radius must be positive".into()));
            }
        }
        Ok(())
    }

    /// Same config with both optional fields filled in.
    pub fn resolved(&self, gamma: f64) -> Self {
        Self {
            j_outer: self.j_outer,
            l_inner: self.l_inner,
            step_beta: Some(self.beta()),
            radius: Some(self.radius_for(gamma)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer<T> {
    pub tuples: Vec<Transition<T>>,
}

impl<T: Scalar> ReplayBuffer<T> {
    pub fn new(tuples: Vec<Transition<T>>) -> Self {
        Self { tuples }
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }
}

/// Euclidean projection onto the ball of `radius` around `center`.
pub fn project_ball<T: Scalar>(params: &ParamVec<T>, center: &ParamVec<T>, radius: T) -> ParamVec<T> {
    let offset = params.sub(center);
    let dist = offset.norm();
    if dist <= radius {
        return params.clone();
    }
    let mut out = center.clone();
    out.axpy(radius / dist, &offset);
    out
}

/// `mean over the buffer of (r + γ Σ_a' π(a'|s') Q(s', a') - Q(s, a))²`.
pub fn bellman_residual<T: Scalar>(
    gamma: T,
    buffer: &ReplayBuffer<T>,
    policy: &PolicyModel<T>,
    critic: &CriticModel<T>,
) -> T {
    if buffer.is_empty() {
        return T::zero();
    }
    let q = critic.table();
    let pi = policy.table();
    let na = critic.n_actions;
    let next_value: Vec<T> = (0..critic.n_states)
        .map(|s| (0..na).map(|a| pi[s][a] * q[s * na + a]).sum())
        .collect();
    let total: T = buffer
        .tuples
        .iter()
        .map(|t| {
            let d = t.r + gamma * next_value[t.s_next] - q[t.s * na + t.a];
            d * d
        })
        .sum();
    total / T::lit(buffer.len() as f64)
}

/// Fits `Q^{π}` for the reward stored in the buffer.
pub fn fit_q<T: Scalar, R: Rng + ?Sized>(
    gamma: T,
    buffer: &ReplayBuffer<T>,
    policy: &PolicyModel<T>,
    critic_init: &CriticModel<T>,
    cfg: &CriticFitConfig,
    rng: &mut R,
) -> Result<CriticModel<T>> {
    fit_q_traced(gamma, buffer, policy, critic_init, cfg, rng).map(|(c, _)| c)
}

/// Per-phase diagnostics of [`fit_q_traced`].
#[derive(Debug, Clone, Default)]
pub struct FitTrace {
    /// Bellman residual of each phase's averaged critic.
    pub residuals: Vec<f64>,
    /// Largest `‖θ - θ_0‖` seen after any projected step.
    pub max_anchor_distance: f64,
}

pub fn fit_q_traced<T: Scalar, R: Rng + ?Sized>(
    gamma: T,
    buffer: &ReplayBuffer<T>,
    policy: &PolicyModel<T>,
    critic_init: &CriticModel<T>,
    cfg: &CriticFitConfig,
    rng: &mut R,
) -> Result<(CriticModel<T>, FitTrace)> {
    if buffer.is_empty() {
        return Err(Error::Usage("cannot fit a critic on an empty replay buffer".into()));
    }
    cfg.validate()?;
    if policy.n_states() != critic_init.n_states || policy.n_actions() != critic_init.n_actions {
        return Err(Error::Dimension("policy and critic disagree on MDP size".into()));
    }
    let beta = T::lit(cfg.beta());
    let radius = T::lit(cfg.radius_for(gamma.as_f64()));
    let na = critic_init.n_actions;
    let pi = policy.table();
    for row in &pi {
        crate::env::check_distribution(row)?;
    }

    let anchor = critic_init.anchor.clone();
    let mut critic = critic_init.clone();
    let mut target_q = critic_init.table();
    let mut trace = FitTrace::default();
    let inv_l = T::one() / T::lit(cfg.l_inner as f64);
    for _phase in 0..cfg.j_outer {
        let mut sum = ParamVec::zeros(critic.params.len());
        for _ in 0..cfg.l_inner {
            let t = &buffer.tuples[rng.random_range(0..buffer.len())];
            let a_next = sample_categorical(&pi[t.s_next], rng);
            let y = t.r + gamma * target_q[t.s_next * na + a_next];
            let (q, g) = critic.eval_grad(t.s, t.a);
            let mut next = critic.params.clone();
            next.axpy(beta * (y - q), &g);
            let next = project_ball(&next, &anchor, radius);
            if !next.is_finite() {
                return Err(Error::Numeric("critic parameters diverged".into()));
            }
            trace.max_anchor_distance = trace.max_anchor_distance.max(next.distance(&anchor).as_f64());
            critic.params = next;
            sum.axpy(T::one(), &critic.params);
        }
        sum.scale(inv_l);
        critic.params = sum;
        target_q = critic.table();
        trace.residuals.push(bellman_residual(gamma, buffer, policy, &critic).as_f64());
    }
    Ok((critic, trace))
}
