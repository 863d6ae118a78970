//! Bradley–Terry trajectory preferences.
//!
//! Sign convention: a label `y = true` means the first trajectory is
//! preferred, and the upper-level objective is the *likelihood*
//! `G⁺ = E[y·P + (1 - y)(1 - P)]`, maximized. `P` is always evaluated as
//! the logistic of the reward-sum difference, never as a ratio of
//! exponentials.

use rand::Rng;

use crate::diffcore::ParamVec;
use crate::env::{sample_trajectory, TabularMdp, Trajectory};
use crate::error::{Error, Result};
use crate::models::{PolicyModel, RewardModel};
use crate::scalar::{logistic, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct PreferencePair {
    pub traj0: Trajectory,
    pub traj1: Trajectory,
    /// `true` when `traj0` is preferred.
    pub y: bool,
}

impl PreferencePair {
    pub fn new(traj0: Trajectory, traj1: Trajectory, y: bool) -> Result<Self> {
        if traj0.is_empty() || traj0.len() != traj1.len() {
            return Err(Error::Usage("preference pair needs two nonempty trajectories of equal length".into()));
        }
        Ok(Self { traj0, traj1, y })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrefBatch {
    pub pairs: Vec<PreferencePair>,
}

impl PrefBatch {
    pub fn new(pairs: Vec<PreferencePair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Usage("preference batch must be nonempty".into()));
        }
        Ok(Self { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Which per-pair quantity the upper objective averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefObjective {
    /// `U = y·P + (1 - y)(1 - P)`.
    #[default]
    Likelihood,
    /// `log U`; experimental, not used by the acceptance suite.
    LogLikelihood,
}

/// `P(τ0 ≻ τ1) = σ(R(τ0) - R(τ1))` with `R(τ) = Σ_h reward(s_h, a_h)`.
pub fn bt_prob<T: Scalar>(reward_fn: impl Fn(usize, usize) -> T, traj0: &Trajectory, traj1: &Trajectory) -> Result<T> {
    if traj0.is_empty() || traj1.is_empty() {
        return Err(Error::Usage("bt_prob needs nonempty trajectories".into()));
    }
    let r0 = traj0.total(&reward_fn);
    let r1 = traj1.total(&reward_fn);
    if !r0.is_finite() || !r1.is_finite() {
        return Err(Error::Model("non-finite trajectory reward".into()));
    }
    Ok(logistic(r0 - r1))
}

/// Bradley–Terry label under the hidden reward.
pub fn oracle_label<T: Scalar, R: Rng + ?Sized>(
    mdp: &TabularMdp<T>,
    traj0: &Trajectory,
    traj1: &Trajectory,
    rng: &mut R,
) -> Result<bool> {
    for &(s, a) in traj0.steps.iter().chain(&traj1.steps) {
        mdp.check_pair(s, a)?;
    }
    let p = bt_prob(|s, a| mdp.true_reward(s, a), traj0, traj1)?;
    Ok(rng.random::<f64>() < p.as_f64())
}

/// `B` fresh trajectory pairs under `policy`, labeled by the oracle.
pub fn sample_labeled_batch<T: Scalar, R: Rng + ?Sized>(
    mdp: &TabularMdp<T>,
    policy: &PolicyModel<T>,
    b: usize,
    h: usize,
    rng: &mut R,
) -> Result<PrefBatch> {
    let table = policy.table();
    let dist = |s: usize| table[s].clone();
    let mut pairs = Vec::with_capacity(b);
    for _ in 0..b {
        let traj0 = sample_trajectory(mdp, &dist, h, rng)?;
        let traj1 = sample_trajectory(mdp, &dist, h, rng)?;
        let y = oracle_label(mdp, &traj0, &traj1, rng)?;
        pairs.push(PreferencePair { traj0, traj1, y });
    }
    PrefBatch::new(pairs)
}

/// Reward values and gradients of every state-action pair, computed once.
pub(crate) struct RewardTable<T> {
    n_actions: usize,
    values: Vec<T>,
    grads: Vec<ParamVec<T>>,
}

impl<T: Scalar> RewardTable<T> {
    pub(crate) fn new(reward: &RewardModel<T>) -> Self {
        let mut values = Vec::with_capacity(reward.n_states * reward.n_actions);
        let mut grads = Vec::with_capacity(values.capacity());
        for s in 0..reward.n_states {
            for a in 0..reward.n_actions {
                let (v, g) = reward.eval_grad(s, a);
                values.push(v);
                grads.push(g);
            }
        }
        Self { n_actions: reward.n_actions, values, grads }
    }

    pub(crate) fn value(&self, s: usize, a: usize) -> T {
        self.values[s * self.n_actions + a]
    }

    pub(crate) fn grad(&self, s: usize, a: usize) -> &ParamVec<T> {
        &self.grads[s * self.n_actions + a]
    }

    /// `∇_φ R(τ)`
    pub(crate) fn sum_grad(&self, traj: &Trajectory) -> ParamVec<T> {
        let mut g = ParamVec::zeros(self.grads[0].len());
        for &(s, a) in &traj.steps {
            g.axpy(T::one(), self.grad(s, a));
        }
        g
    }
}

/// Per-pair likelihood `U` of the observed label and `P(τ0 ≻ τ1)`.
fn pair_likelihood<T: Scalar>(table: &RewardTable<T>, pair: &PreferencePair) -> (T, T) {
    let p = logistic(pair.traj0.total(|s, a| table.value(s, a)) - pair.traj1.total(|s, a| table.value(s, a)));
    let u = if pair.y { p } else { T::one() - p };
    (u, p)
}

/// Batch mean of `U(φ)` and its gradient in `φ`.
pub fn pref_objective_and_grad_phi<T: Scalar>(reward: &RewardModel<T>, batch: &PrefBatch) -> (T, ParamVec<T>) {
    pref_objective_and_grad_phi_with(reward, batch, PrefObjective::Likelihood)
}

pub fn pref_objective_and_grad_phi_with<T: Scalar>(
    reward: &RewardModel<T>,
    batch: &PrefBatch,
    objective: PrefObjective,
) -> (T, ParamVec<T>) {
    let table = RewardTable::new(reward);
    let mut value = T::zero();
    let mut grad = ParamVec::zeros(reward.params.len());
    for pair in &batch.pairs {
        let (u, p) = pair_likelihood(&table, pair);
        // dU/d(R0 - R1) = ±P(1 - P)
        let mut slope = p * (T::one() - p);
        if !pair.y {
            slope = -slope;
        }
        let (v, weight) = match objective {
            PrefObjective::Likelihood => (u, slope),
            PrefObjective::LogLikelihood => (u.ln(), slope / u),
        };
        value += v;
        if weight != T::zero() {
            grad.axpy(weight, &table.sum_grad(&pair.traj0));
            grad.axpy(-weight, &table.sum_grad(&pair.traj1));
        }
    }
    let inv_b = T::one() / T::lit(batch.len() as f64);
    grad.scale(inv_b);
    (value * inv_b, grad)
}

/// Score-function estimate of `∇_λ G⁺`: `(1/B) Σ U · Σ_h ∇_λ log π(a_h|s_h)`
/// over the steps of both trajectories.
pub fn pref_grad_lambda<T: Scalar>(reward: &RewardModel<T>, policy: &PolicyModel<T>, batch: &PrefBatch) -> ParamVec<T> {
    let table = RewardTable::new(reward);
    let scores = ScoreTable::new(policy);
    let mut grad = ParamVec::zeros(policy.params.len());
    for pair in &batch.pairs {
        let (u, _) = pair_likelihood(&table, pair);
        for &(s, a) in pair.traj0.steps.iter().chain(&pair.traj1.steps) {
            grad.axpy(u, scores.get(s, a));
        }
    }
    grad.scale(T::one() / T::lit(batch.len() as f64));
    grad
}

/// `∇_λ log π(a|s)` for every pair, computed once.
pub(crate) struct ScoreTable<T> {
    n_actions: usize,
    scores: Vec<ParamVec<T>>,
}

impl<T: Scalar> ScoreTable<T> {
    pub(crate) fn new(policy: &PolicyModel<T>) -> Self {
        let n_actions = policy.n_actions();
        let scores = (0..policy.n_states())
            .flat_map(|s| (0..n_actions).map(move |a| (s, a)))
            .map(|(s, a)| policy.score(s, a))
            .collect();
        Self { n_actions, scores }
    }

    pub(crate) fn get(&self, s: usize, a: usize) -> &ParamVec<T> {
        &self.scores[s * self.n_actions + a]
    }
}
