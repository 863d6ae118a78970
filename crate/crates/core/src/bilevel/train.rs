use super::config::{step_sizes, ChainStart, HyperVariant, RunRecord, SamplingMode, TrainConfig};
use super::estimators::{
    draw_visitation_pairs, hyper_grad_estimate, normalized_update, penalized_grad_from_samples, policy_grad_from_pairs,
    proxy_grad_from_samples, sample_trajectories, ChainState, Direction,
};
use crate::critic_fit::{bellman_residual, fit_q, ReplayBuffer};
use crate::env::{collect_transitions, TabularMdp, Trajectory};
use crate::error::{Error, Result};
use crate::models::{CriticModel, PolicyModel, RewardModel};
use crate::oracle::{exact_pref_objective, j_true};
use crate::preference::sample_labeled_batch;
use crate::scalar::Scalar;
use crate::seeds::{stream_rng, Stream};

/// Final models and the per-iteration records of a run.
#[derive(Debug, Clone)]
pub struct TrainOutput<T> {
    pub reward: RewardModel<T>,
    pub plain: ChainState<T>,
    pub penalized: ChainState<T>,
    pub records: Vec<RunRecord>,
}

/// Fixed trajectory pairs for measuring how well a reward ranks
/// trajectories against the hidden reward.
#[derive(Debug, Clone)]
pub struct HeldoutSet {
    pairs: Vec<(Trajectory, Trajectory)>,
    /// Sign of the true return difference of each pair.
    truth: Vec<bool>,
}

impl HeldoutSet {
    /// `count` pairs of length-`h` rollouts under `policy`. Pairs whose true
    /// returns tie exactly are dropped.
    pub fn sample<T: Scalar, R: rand::Rng + ?Sized>(
        mdp: &TabularMdp<T>,
        policy: &PolicyModel<T>,
        count: usize,
        h: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let trajs = sample_trajectories(mdp, policy, 2 * count, h, rng)?;
        let mut pairs = Vec::with_capacity(count);
        let mut truth = Vec::with_capacity(count);
        let mut it = trajs.into_iter();
        while let (Some(a), Some(b)) = (it.next(), it.next()) {
            let diff = a.total(|s, x| mdp.true_reward(s, x)) - b.total(|s, x| mdp.true_reward(s, x));
            if diff != T::zero() {
                truth.push(diff > T::zero());
                pairs.push((a, b));
            }
        }
        Ok(Self { pairs, truth })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Fraction of pairs the reward orders like the hidden reward; a tie
    /// under `reward` counts as wrong.
    pub fn accuracy<T: Scalar>(&self, reward: &RewardModel<T>) -> f64 {
        if self.pairs.is_empty() {
            return f64::NAN;
        }
        let table = reward.table();
        let na = reward.n_actions;
        let r = |s: usize, a: usize| table[s * na + a];
        let correct = self
            .pairs
            .iter()
            .zip(&self.truth)
            .filter(|((a, b), &truth)| {
                let d = a.total(r) - b.total(r);
                d != T::zero() && (d > T::zero()) == truth
            })
            .count();
        correct as f64 / self.pairs.len() as f64
    }
}

/// Runs the bilevel loop without a per-record hook.
pub fn train<T: Scalar>(mdp: &TabularMdp<T>, cfg: &TrainConfig) -> Result<TrainOutput<T>> {
    train_with(mdp, cfg, |_| Ok(()))
}

/// Runs the bilevel loop. `on_record` sees every record as soon as it
/// exists, so a caller can persist partial progress before a later failure.
pub fn train_with<T, F>(mdp: &TabularMdp<T>, cfg: &TrainConfig, mut on_record: F) -> Result<TrainOutput<T>>
where
    T: Scalar,
    F: FnMut(&RunRecord) -> Result<()>,
{
    cfg.validate()?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let gamma = mdp.gamma();
    let geo = cfg.max_geo_horizon(gamma.as_f64());
    let sigma = T::lit(cfg.sigma);
    let norm_eps = T::lit(cfg.norm_eps);

    let mut init_rng = stream_rng(cfg.seed, Stream::Init);
    let mut reward = RewardModel::init(ns, na, &cfg.reward_arch, &mut init_rng)?;
    let policy0 = PolicyModel::init(ns, na, &cfg.policy_arch, &mut init_rng)?;
    let mut plain = ChainState { policy: policy0.clone(), critic: CriticModel::init(ns, na, &cfg.critic_arch, &mut init_rng)? };
    let mut pen = ChainState { policy: policy0.clone(), critic: CriticModel::init(ns, na, &cfg.critic_arch, &mut init_rng)? };

    let mut rng_plain = stream_rng(cfg.seed, Stream::ChainPlain);
    let mut rng_pen = stream_rng(cfg.seed, Stream::ChainPenalized);
    let mut rng_critic_plain = stream_rng(cfg.seed, Stream::CriticPlain);
    let mut rng_critic_pen = stream_rng(cfg.seed, Stream::CriticPenalized);
    let mut rng_label = stream_rng(cfg.seed, Stream::Labeler);
    let mut rng_outer = stream_rng(cfg.seed, Stream::Outer);
    let uniform = PolicyModel::zeros(ns, na, &crate::models::Architecture::Tabular)?;
    let heldout =
        HeldoutSet::sample(mdp, &uniform, cfg.heldout_pairs, cfg.horizon, &mut stream_rng(cfg.seed, Stream::Heldout))?;

    let mut records = Vec::with_capacity(cfg.t_outer);
    for t in 1..=cfg.t_outer {
        let table = reward.table();
        let reward_fn = |s: usize, a: usize| table[s * na + a];
        let mut residual = T::nan();
        if cfg.chain_start == ChainStart::Restart {
            plain.policy = policy0.clone();
            pen.policy = policy0.clone();
        }
        for k in 0..cfg.k_inner {
            let (_, tau, tau_pen) = step_sizes(t, k, cfg)?;

            let plain_dist = plain.policy.table();
            let buf_plain = ReplayBuffer::new(collect_transitions(
                mdp,
                &|s: usize| plain_dist[s].clone(),
                reward_fn,
                cfg.n,
                cfg.horizon,
                &mut rng_plain,
            )?);
            let pairs_plain = draw_visitation_pairs(mdp, &plain.policy, cfg.n, geo, &mut rng_plain)?;
            plain.critic = fit_q(gamma, &buf_plain, &plain.policy, &plain.critic, &cfg.critic, &mut rng_critic_plain)?;
            residual = bellman_residual(gamma, &buf_plain, &plain.policy, &plain.critic);
            let d_plain = policy_grad_from_pairs(&plain.policy, &plain.critic, mdp, &pairs_plain);

            let (buf_pen, pairs_pen) = match cfg.sampling_mode {
                SamplingMode::PerChain => {
                    let pen_dist = pen.policy.table();
                    let buf = ReplayBuffer::new(collect_transitions(
                        mdp,
                        &|s: usize| pen_dist[s].clone(),
                        reward_fn,
                        cfg.n,
                        cfg.horizon,
                        &mut rng_pen,
                    )?);
                    (buf, draw_visitation_pairs(mdp, &pen.policy, cfg.n, geo, &mut rng_pen)?)
                }
                SamplingMode::Shared => (buf_plain, pairs_plain),
            };
            pen.critic = fit_q(gamma, &buf_pen, &pen.policy, &pen.critic, &cfg.critic, &mut rng_critic_pen)?;
            let batch = sample_labeled_batch(mdp, &pen.policy, cfg.batch, cfg.horizon, &mut rng_pen)?;
            let d_pen = match cfg.hyper_variant {
                HyperVariant::PaperLiteral => {
                    penalized_grad_from_samples(&pen.policy, &pen.critic, &reward, mdp, &pairs_pen, &batch, sigma)
                }
                HyperVariant::PenaltyConsistent => {
                    proxy_grad_from_samples(&pen.policy, &pen.critic, &reward, mdp, &pairs_pen, &batch, sigma)
                }
            };

            plain.policy.params = normalized_update(&plain.policy.params, &d_plain, T::lit(tau), Direction::Ascent, norm_eps)?;
            pen.policy.params = normalized_update(&pen.policy.params, &d_pen, T::lit(tau_pen), Direction::Ascent, norm_eps)?;
        }

        let (eta, _, _) = step_sizes(t, 0, cfg)?;
        let hyper = hyper_grad_estimate(&reward, &plain, &pen, mdp, cfg, &mut rng_outer, &mut rng_label)?;
        let upper_value_exact = if cfg.oracle_enabled {
            exact_pref_objective(mdp, &plain.policy, &reward, cfg.horizon)?.value.as_f64()
        } else {
            f64::NAN
        };
        let j_true_exact = j_true(mdp, &plain.policy)?.as_f64();
        reward.params = normalized_update(&reward.params, &hyper.d, T::lit(eta), Direction::Ascent, norm_eps)?;

        let record = RunRecord {
            t,
            upper_value_est: hyper.pref_value.as_f64(),
            upper_value_exact,
            j_true_exact,
            pref_accuracy: heldout.accuracy(&reward),
            grad_norm_dt: hyper.d.norm().as_f64(),
            bellman_residual: residual.as_f64(),
        };
        check_record(&record)?;
        on_record(&record)?;
        records.push(record);
    }
    Ok(TrainOutput { reward, plain, penalized: pen, records })
}

fn check_record(r: &RunRecord) -> Result<()> {
    let fields = [
        ("upper_value_est", r.upper_value_est),
        ("j_true_exact", r.j_true_exact),
        ("pref_accuracy", r.pref_accuracy),
        ("grad_norm_dt", r.grad_norm_dt),
        ("bellman_residual", r.bellman_residual),
    ];
    for (name, v) in fields {
        if !v.is_finite() {
            return Err(Error::Numeric(format!("{name} is not finite at t={}", r.t)));
        }
    }
    if r.upper_value_exact.is_infinite() {
        return Err(Error::Numeric(format!("upper_value_exact is infinite at t={}", r.t)));
    }
    Ok(())
}
