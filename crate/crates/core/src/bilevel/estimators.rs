use rand::Rng;

use super::config::{HyperVariant, TrainConfig};
use crate::diffcore::ParamVec;
use crate::env::{sample_trajectory, sample_visitation_pair, TabularMdp, Trajectory};
use crate::error::{Error, Result};
use crate::models::{CriticModel, PolicyModel, RewardModel};
use crate::preference::{
    oracle_label, pref_grad_lambda, pref_objective_and_grad_phi, sample_labeled_batch, PrefBatch, PreferencePair,
    RewardTable, ScoreTable,
};
use crate::scalar::Scalar;

/// Direction of a normalized step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Ascent,
    Descent,
}

/// `params ± step · d / ‖d‖`, or `params` unchanged when `‖d‖ < norm_eps`.
pub fn normalized_update<T: Scalar>(
    params: &ParamVec<T>,
    d: &ParamVec<T>,
    step: T,
    direction: Direction,
    norm_eps: T,
) -> Result<ParamVec<T>> {
    if !(step > T::zero()) {
        return Err(Error::Usage(format!("step must be positive, got {step}")));
    }
    if params.len() != d.len() {
        return Err(Error::Dimension("update direction has the wrong length".into()));
    }
    if !d.is_finite() {
        return Err(Error::Numeric("non-finite update direction".into()));
    }
    let norm = d.norm();
    if norm < norm_eps || norm == T::zero() {
        return Ok(params.clone());
    }
    let scale = match direction {
        Direction::Ascent => step / norm,
        Direction::Descent => -step / norm,
    };
    let mut out = params.clone();
    out.axpy(scale, d);
    Ok(out)
}

/// Score-function estimate of `∇_λ J`: the mean of
/// `∇ log π(a|s) · Q̂(s, a) / (1 − γ)` over `n` draws from the discounted
/// visitation distribution.
pub fn policy_grad_estimate<T: Scalar, R: Rng + ?Sized>(
    policy: &PolicyModel<T>,
    critic: &CriticModel<T>,
    mdp: &TabularMdp<T>,
    n: usize,
    max_geo_horizon: usize,
    rng: &mut R,
) -> Result<ParamVec<T>> {
    let pairs = draw_visitation_pairs(mdp, policy, n, max_geo_horizon, rng)?;
    Ok(policy_grad_from_pairs(policy, critic, mdp, &pairs))
}

pub(crate) fn draw_visitation_pairs<T: Scalar, R: Rng + ?Sized>(
    mdp: &TabularMdp<T>,
    policy: &PolicyModel<T>,
    n: usize,
    max_geo_horizon: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    if n == 0 {
        return Err(Error::Usage("need at least one visitation draw".into()));
    }
    let table = policy.table();
    let dist = |s: usize| table[s].clone();
    (0..n).map(|_| sample_visitation_pair(mdp, &dist, rng, max_geo_horizon)).collect()
}

pub(crate) fn policy_grad_from_pairs<T: Scalar>(
    policy: &PolicyModel<T>,
    critic: &CriticModel<T>,
    mdp: &TabularMdp<T>,
    pairs: &[(usize, usize)],
) -> ParamVec<T> {
    let scores = ScoreTable::new(policy);
    let q = critic.table();
    let na = mdp.n_actions();
    let mut g = ParamVec::zeros(policy.params.len());
    for &(s, a) in pairs {
        g.axpy(q[s * na + a], scores.get(s, a));
    }
    g.scale(T::one() / (T::lit(pairs.len() as f64) * (T::one() - mdp.gamma())));
    g
}

/// `σ · (policy-gradient estimate) + ∇_λ` of the preference objective on a
/// fresh labeled batch from `policy`.
#[allow(clippy::too_many_arguments)]
pub fn penalized_policy_grad_estimate<T: Scalar, R: Rng + ?Sized>(
    policy: &PolicyModel<T>,
    critic: &CriticModel<T>,
    reward: &RewardModel<T>,
    mdp: &TabularMdp<T>,
    n: usize,
    b: usize,
    h: usize,
    sigma: T,
    max_geo_horizon: usize,
    rng: &mut R,
) -> Result<ParamVec<T>> {
    let pairs = draw_visitation_pairs(mdp, policy, n, max_geo_horizon, rng)?;
    let batch = sample_labeled_batch(mdp, policy, b, h, rng)?;
    Ok(penalized_grad_from_samples(policy, critic, reward, mdp, &pairs, &batch, sigma))
}

pub(crate) fn penalized_grad_from_samples<T: Scalar>(
    policy: &PolicyModel<T>,
    critic: &CriticModel<T>,
    reward: &RewardModel<T>,
    mdp: &TabularMdp<T>,
    pairs: &[(usize, usize)],
    batch: &PrefBatch,
    sigma: T,
) -> ParamVec<T> {
    let mut g = pref_grad_lambda(reward, policy, batch);
    if sigma != T::zero() {
        g.axpy(sigma, &policy_grad_from_pairs(policy, critic, mdp, pairs));
    }
    g
}

/// Ascent direction of `J + σG⁺` for the penalized chain: the
/// policy-gradient estimate plus `σ ·` the preference gradient in `λ`. The
/// penalty-consistent hyper-gradient needs the penalized chain to track the
/// maximizer of exactly this objective.
#[allow(clippy::too_many_arguments)]
pub fn proxy_policy_grad_estimate<T: Scalar, R: Rng + ?Sized>(
    policy: &PolicyModel<T>,
    critic: &CriticModel<T>,
    reward: &RewardModel<T>,
    mdp: &TabularMdp<T>,
    n: usize,
    b: usize,
    h: usize,
    sigma: T,
    max_geo_horizon: usize,
    rng: &mut R,
) -> Result<ParamVec<T>> {
    let pairs = draw_visitation_pairs(mdp, policy, n, max_geo_horizon, rng)?;
    let batch = sample_labeled_batch(mdp, policy, b, h, rng)?;
    Ok(proxy_grad_from_samples(policy, critic, reward, mdp, &pairs, &batch, sigma))
}

pub(crate) fn proxy_grad_from_samples<T: Scalar>(
    policy: &PolicyModel<T>,
    critic: &CriticModel<T>,
    reward: &RewardModel<T>,
    mdp: &TabularMdp<T>,
    pairs: &[(usize, usize)],
    batch: &PrefBatch,
    sigma: T,
) -> ParamVec<T> {
    let mut g = policy_grad_from_pairs(policy, critic, mdp, pairs);
    g.axpy(sigma, &pref_grad_lambda(reward, policy, batch));
    g
}

/// `(1/B) Σ_τ Σ_j γ^{j−1} ∇_φ r_φ(s_j, a_j)`, the discount restarting in
/// every trajectory.
pub fn grad_phi_j_estimate<T: Scalar>(reward: &RewardModel<T>, trajectories: &[Trajectory], gamma: T) -> Result<ParamVec<T>> {
    let Some(first) = trajectories.first() else {
        return Err(Error::Usage("need at least one trajectory".into()));
    };
    let h = first.len();
    if h == 0 || trajectories.iter().any(|t| t.len() != h) {
        return Err(Error::Usage("trajectories must be nonempty and share one length".into()));
    }
    let table = RewardTable::new(reward);
    let mut g = ParamVec::zeros(reward.params.len());
    for traj in trajectories {
        let mut w = T::one();
        for &(s, a) in &traj.steps {
            g.axpy(w, table.grad(s, a));
            w *= gamma;
        }
    }
    g.scale(T::one() / T::lit(trajectories.len() as f64));
    Ok(g)
}

/// One inner chain: its policy and its most recent critic.
#[derive(Debug, Clone)]
pub struct ChainState<T> {
    pub policy: PolicyModel<T>,
    pub critic: CriticModel<T>,
}

/// Outer-step hyper-gradient and the pieces it was built from.
#[derive(Debug, Clone)]
pub struct HyperGrad<T> {
    pub d: ParamVec<T>,
    /// Batch mean of the label likelihood at the current `φ`.
    pub pref_value: T,
    pub pref_grad: ParamVec<T>,
    /// `(∇Ĵ(first) − ∇Ĵ(second)) / σ` in the order the variant prescribes.
    pub j_term: ParamVec<T>,
}

/// `d_t` per [`HyperVariant`]. Both `∇_φ Ĵ` estimates use `cfg.batch`
/// trajectories of length `cfg.j_horizon()` drawn with common random
/// numbers, so identical chains contribute exactly zero.
pub fn hyper_grad_estimate<T: Scalar, R: Rng + Clone, L: Rng + ?Sized>(
    reward: &RewardModel<T>,
    chain_plain: &ChainState<T>,
    chain_pen: &ChainState<T>,
    mdp: &TabularMdp<T>,
    cfg: &TrainConfig,
    rng: &mut R,
    label_rng: &mut L,
) -> Result<HyperGrad<T>> {
    if !(cfg.sigma > 0.0) {
        return Err(Error::Config("sigma must be positive".into()));
    }
    let (batch_policy, first, second) = match cfg.hyper_variant {
        HyperVariant::PaperLiteral => (&chain_plain.policy, &chain_plain.policy, &chain_pen.policy),
        HyperVariant::PenaltyConsistent => (&chain_pen.policy, &chain_pen.policy, &chain_plain.policy),
    };
    let batch = sample_batch(mdp, batch_policy, cfg.batch, cfg.horizon, rng, label_rng)?;
    let (pref_value, pref_grad) = pref_objective_and_grad_phi(reward, &batch);

    let jh = cfg.j_horizon();
    let mut common = rng.clone();
    let trajs_first = sample_trajectories(mdp, first, cfg.batch, jh, &mut common)?;
    let trajs_second = sample_trajectories(mdp, second, cfg.batch, jh, rng)?;
    let gamma = mdp.gamma();
    let mut j_term = grad_phi_j_estimate(reward, &trajs_first, gamma)?;
    j_term.axpy(-T::one(), &grad_phi_j_estimate(reward, &trajs_second, gamma)?);
    j_term.scale(T::one() / T::lit(cfg.sigma));

    let mut d = pref_grad.clone();
    d.axpy(T::one(), &j_term);
    Ok(HyperGrad { d, pref_value, pref_grad, j_term })
}

pub(crate) fn sample_trajectories<T: Scalar, R: Rng + ?Sized>(
    mdp: &TabularMdp<T>,
    policy: &PolicyModel<T>,
    count: usize,
    h: usize,
    rng: &mut R,
) -> Result<Vec<Trajectory>> {
    let table = policy.table();
    let dist = |s: usize| table[s].clone();
    (0..count).map(|_| sample_trajectory(mdp, &dist, h, rng)).collect()
}

/// Trajectory pairs from `rng`, labels from `label_rng`.
pub(crate) fn sample_batch<T: Scalar, R: Rng + ?Sized, L: Rng + ?Sized>(
    mdp: &TabularMdp<T>,
    policy: &PolicyModel<T>,
    b: usize,
    h: usize,
    rng: &mut R,
    label_rng: &mut L,
) -> Result<PrefBatch> {
    let trajs = sample_trajectories(mdp, policy, 2 * b, h, rng)?;
    let mut pairs = Vec::with_capacity(b);
    let mut it = trajs.into_iter();
    while let (Some(traj0), Some(traj1)) = (it.next(), it.next()) {
        let y = oracle_label(mdp, &traj0, &traj1, label_rng)?;
        pairs.push(PreferencePair { traj0, traj1, y });
    }
    PrefBatch::new(pairs)
}
