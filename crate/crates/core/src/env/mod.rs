//! Finite MDPs with a hidden ground-truth reward and the samplers that feed
//! the training loop: trajectories, replay transitions and draws from the
//! discounted state-action visitation distribution.
//!
//! The true reward is never exposed to the learner directly. It is read only
//! by the preference labeler and by the exact evaluation oracles.

mod fixture;
mod sampling;

pub use fixture::MdpFile;
pub use sampling::{
    check_distribution, collect_transitions, default_geo_horizon, sample_categorical,
    sample_trajectory, sample_truncated_geometric, sample_visitation_pair, Trajectory, Transition,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const SUM_TOL: f64 = 1e-12;

/// Actions of [`TabularMdp::chain`].
pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp<T> {
    n_states: usize,
    n_actions: usize,
    /// `[s][a][s']`, flattened row-major.
    transition: Vec<T>,
    /// `[s][a]`, flattened row-major, entries in `[0, 1]`.
    true_reward: Vec<T>,
    gamma: T,
    start_dist: Vec<T>,
}

impl<T: Scalar> TabularMdp<T> {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<T>,
        true_reward: Vec<T>,
        gamma: T,
        start_dist: Vec<T>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Config("MDP needs at least one state and one action".into()));
        }
        if !(gamma > T::zero() && gamma < T::one()) {
            return Err(Error::Config(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::Dimension(format!(
                "transition has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        if true_reward.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "true_reward has {} entries, expected {}",
                true_reward.len(),
                n_states * n_actions
            )));
        }
        if start_dist.len() != n_states {
            return Err(Error::Dimension(format!(
                "start_dist has {} entries, expected {n_states}",
                start_dist.len()
            )));
        }
        for (row_idx, row) in transition.chunks(n_states).enumerate() {
            check_stochastic(row, SUM_TOL).map_err(|e| {
                Error::Config(format!(
                    "transition row (s={}, a={}): {e}",
                    row_idx / n_actions,
                    row_idx % n_actions
                ))
            })?;
        }
        check_stochastic(&start_dist, SUM_TOL).map_err(|e| Error::Config(format!("start_dist: {e}")))?;
        if true_reward.iter().any(|r| !(*r >= T::zero() && *r <= T::one())) {
            return Err(Error::Config("true_reward entries must lie in [0, 1]".into()));
        }
        Ok(Self { n_states, n_actions, transition, true_reward, gamma, start_dist })
    }

    /// Random MDP: transition rows from a symmetric Dirichlet(1), rewards
    /// i.i.d. uniform on `[0, 1)`, uniform start distribution.
    pub fn random(seed: u64, n_states: usize, n_actions: usize, gamma: T) -> Result<Self> {
        if n_states < 2 || n_actions < 2 {
            return Err(Error::Config("random MDP needs n_states, n_actions >= 2".into()));
        }
        if !(gamma > T::zero() && gamma < T::one()) {
            return Err(Error::Config(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
        for _ in 0..n_states * n_actions {
            let draws: Vec<f64> = (0..n_states).map(|_| Exp1.sample(&mut rng)).collect();
            let total: f64 = draws.iter().sum();
            transition.extend(draws.iter().map(|d| T::lit(d / total)));
        }
        let true_reward = (0..n_states * n_actions).map(|_| T::lit(rng.random::<f64>())).collect();
        let start = T::one() / T::lit(n_states as f64);
        Self::new(n_states, n_actions, transition, true_reward, gamma, vec![start; n_states])
    }

    /// Chain of `n_states` cells with actions `LEFT`/`RIGHT`. The intended
    /// move happens with probability `1 - slip`, the opposite move otherwise;
    /// moves off either end stay in place. Reward 1 only for `RIGHT` in the
    /// rightmost cell; the walk starts in cell 0.
    pub fn chain(n_states: usize, gamma: T, slip: T) -> Result<Self> {
        if n_states < 3 {
            return Err(Error::Config("chain needs at least 3 states".into()));
        }
        if !(slip >= T::zero() && slip < T::lit(0.5)) {
            return Err(Error::Config(format!("slip must lie in [0, 0.5), got {slip}")));
        }
        let n_actions = 2;
        let mut transition = vec![T::zero(); n_states * n_actions * n_states];
        for s in 0..n_states {
            let left = s.saturating_sub(1);
            let right = (s + 1).min(n_states - 1);
            for (a, (intended, other)) in [(left, right), (right, left)].into_iter().enumerate() {
                let row = (s * n_actions + a) * n_states;
                transition[row + intended] += T::one() - slip;
                transition[row + other] += slip;
            }
        }
        let mut true_reward = vec![T::zero(); n_states * n_actions];
        true_reward[(n_states - 1) * n_actions + RIGHT] = T::one();
        let mut start_dist = vec![T::zero(); n_states];
        start_dist[0] = T::one();
        Self::new(n_states, n_actions, transition, true_reward, gamma, start_dist)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Number of state-action pairs.
    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn start_dist(&self) -> &[T] {
        &self.start_dist
    }

    /// `P(. | s, a)`
    pub fn transition_row(&self, s: usize, a: usize) -> &[T] {
        let at = (s * self.n_actions + a) * self.n_states;
        &self.transition[at..at + self.n_states]
    }

    pub fn transition(&self) -> &[T] {
        &self.transition
    }

    pub fn true_reward(&self, s: usize, a: usize) -> T {
        self.true_reward[s * self.n_actions + a]
    }

    pub fn true_rewards(&self) -> &[T] {
        &self.true_reward
    }

    pub(crate) fn check_pair(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.n_states || a >= self.n_actions {
            return Err(Error::Dimension(format!(
                "(s={s}, a={a}) outside {}x{} MDP",
                self.n_states, self.n_actions
            )));
        }
        Ok(())
    }
}

fn check_stochastic<T: Scalar>(row: &[T], tol: f64) -> std::result::Result<(), String> {
    if row.iter().any(|p| !(*p >= T::zero()) || !p.is_finite()) {
        return Err("entries must be finite and nonnegative".into());
    }
    let total: T = row.iter().copied().sum();
    if (total.as_f64() - 1.0).abs() > tol {
        return Err(format!("sums to {total}, expected 1"));
    }
    Ok(())
}
