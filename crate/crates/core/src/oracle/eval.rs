use super::linalg::{solve, transpose};
use crate::diffcore::ParamVec;
use crate::env::TabularMdp;
use crate::error::{Error, Result};
use crate::models::{PolicyModel, RewardModel};
use crate::preference::{RewardTable, ScoreTable};
use crate::scalar::Scalar;

/// Closed-form evaluation of a fixed policy. Tables are indexed
/// `[s * n_actions + a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactPolicyEval<T> {
    pub q_table: Vec<T>,
    /// Normalized discounted visitation `d_ν^π`.
    pub visitation: Vec<T>,
    /// `J = Σ_s ν(s) Σ_a π(a|s) Q(s, a)`.
    pub j_value: T,
}

fn policy_rows<T: Scalar>(mdp: &TabularMdp<T>, policy_dist: impl Fn(usize) -> Vec<T>) -> Result<Vec<Vec<T>>> {
    (0..mdp.n_states())
        .map(|s| {
            let row = policy_dist(s);
            if row.len() != mdp.n_actions() {
                return Err(Error::Model("policy row has the wrong number of actions".into()));
            }
            crate::env::check_distribution(&row)?;
            Ok(row)
        })
        .collect()
}

/// `I - γ P_π` over state-action pairs.
fn bellman_matrix<T: Scalar>(mdp: &TabularMdp<T>, pi: &[Vec<T>]) -> Vec<T> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let n = ns * na;
    let gamma = mdp.gamma();
    let mut m = vec![T::zero(); n * n];
    for s in 0..ns {
        for a in 0..na {
            let row = s * na + a;
            m[row * n + row] += T::one();
            for (s2, &p) in mdp.transition_row(s, a).iter().enumerate() {
                if p == T::zero() {
                    continue;
                }
                for a2 in 0..na {
                    m[row * n + s2 * na + a2] -= gamma * p * pi[s2][a2];
                }
            }
        }
    }
    m
}

/// Solves the policy Bellman equation and the visitation equation by dense
/// linear solves.
pub fn exact_policy_eval<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy_dist: impl Fn(usize) -> Vec<T>,
    reward_fn: impl Fn(usize, usize) -> T,
) -> Result<ExactPolicyEval<T>> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let n = ns * na;
    let pi = policy_rows(mdp, policy_dist)?;
    let m = bellman_matrix(mdp, &pi);
    let r: Vec<T> = (0..n).map(|i| reward_fn(i / na, i % na)).collect();
    let q_table = solve(&m, &r)?;
    let mu0: Vec<T> = (0..n).map(|i| mdp.start_dist()[i / na] * pi[i / na][i % na]).collect();
    let one_minus_gamma = T::one() - mdp.gamma();
    let visitation: Vec<T> = solve(&transpose(&m, n), &mu0)?
        .into_iter()
        // tiny negative round-off on unreachable pairs
        .map(|x| (x * one_minus_gamma).max(T::zero()))
        .collect();
    let j_value = (0..n).map(|i| mu0[i] * q_table[i]).sum();
    Ok(ExactPolicyEval { q_table, visitation, j_value })
}

/// `max |Q - T^π Q|` over all pairs.
pub fn bellman_residual_max<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy_dist: impl Fn(usize) -> Vec<T>,
    reward_fn: impl Fn(usize, usize) -> T,
    q: &[T],
) -> T {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let v: Vec<T> = (0..ns)
        .map(|s| policy_dist(s).iter().enumerate().map(|(a, &p)| p * q[s * na + a]).sum())
        .collect();
    let mut worst = T::zero();
    for s in 0..ns {
        for a in 0..na {
            let next: T = mdp.transition_row(s, a).iter().zip(&v).map(|(&p, &vv)| p * vv).sum();
            let resid = (reward_fn(s, a) + mdp.gamma() * next - q[s * na + a]).abs();
            worst = worst.max(resid);
        }
    }
    worst
}

/// Optimal values by value iteration.
#[derive(Debug, Clone)]
pub struct OptimalValues<T> {
    pub q_table: Vec<T>,
    pub v: Vec<T>,
    /// Greedy action per state (lowest index on ties).
    pub greedy: Vec<usize>,
    /// `Σ_s ν(s) V*(s)`.
    pub j_star: T,
}

impl<T: Scalar> OptimalValues<T> {
    /// Deterministic greedy policy as action distributions.
    pub fn greedy_dist(&self, n_actions: usize) -> impl Fn(usize) -> Vec<T> + '_ {
        move |s| {
            let mut row = vec![T::zero(); n_actions];
            row[self.greedy[s]] = T::one();
            row
        }
    }
}

pub fn value_iteration<T: Scalar>(mdp: &TabularMdp<T>, reward_fn: impl Fn(usize, usize) -> T) -> Result<OptimalValues<T>> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let gamma = mdp.gamma();
    let r: Vec<T> = (0..ns * na).map(|i| reward_fn(i / na, i % na)).collect();
    let mut v = vec![T::zero(); ns];
    let mut q = vec![T::zero(); ns * na];
    let tol = T::lit(1e-13) * (T::one() - gamma);
    for _ in 0..1_000_000 {
        for s in 0..ns {
            for a in 0..na {
                let next: T = mdp.transition_row(s, a).iter().zip(&v).map(|(&p, &vv)| p * vv).sum();
                q[s * na + a] = r[s * na + a] + gamma * next;
            }
        }
        let mut delta = T::zero();
        for s in 0..ns {
            let best = q[s * na..(s + 1) * na].iter().copied().fold(T::neg_infinity(), T::max);
            delta = delta.max((best - v[s]).abs());
            v[s] = best;
        }
        if delta <= tol {
            let greedy = (0..ns)
                .map(|s| {
                    let row = &q[s * na..(s + 1) * na];
                    let best = row.iter().copied().fold(T::neg_infinity(), T::max);
                    row.iter().position(|&x| x == best).expect("max is attained")
                })
                .collect();
            let j_star = mdp.start_dist().iter().zip(&v).map(|(&p, &vv)| p * vv).sum();
            return Ok(OptimalValues { q_table: q, v, greedy, j_star });
        }
    }
    Err(Error::Convergence("value iteration did not converge".into()))
}

/// `∇_λ J = (1/(1-γ)) Σ_{s,a} d(s,a) ∇_λ log π(a|s) Q(s,a)`.
pub fn exact_grad_lambda_j<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &PolicyModel<T>,
    reward_fn: impl Fn(usize, usize) -> T,
) -> Result<ParamVec<T>> {
    let eval = exact_policy_eval(mdp, |s| policy.probs(s), reward_fn)?;
    Ok(grad_lambda_from_eval(mdp, policy, &ScoreTable::new(policy), &eval))
}

pub(crate) fn grad_lambda_from_eval<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &PolicyModel<T>,
    scores: &ScoreTable<T>,
    eval: &ExactPolicyEval<T>,
) -> ParamVec<T> {
    let na = mdp.n_actions();
    let mut g = ParamVec::zeros(policy.params.len());
    for s in 0..mdp.n_states() {
        for a in 0..na {
            let w = eval.visitation[s * na + a] * eval.q_table[s * na + a];
            if w != T::zero() {
                g.axpy(w, scores.get(s, a));
            }
        }
    }
    g.scale(T::one() / (T::one() - mdp.gamma()));
    g
}

/// `∇_φ J = (1/(1-γ)) Σ_{s,a} d(s,a) ∇_φ r_φ(s,a)`.
pub fn exact_grad_phi_j<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy_dist: impl Fn(usize) -> Vec<T>,
    reward: &RewardModel<T>,
) -> Result<ParamVec<T>> {
    let table = RewardTable::new(reward);
    let eval = exact_policy_eval(mdp, policy_dist, |s, a| table.value(s, a))?;
    let na = mdp.n_actions();
    let mut g = ParamVec::zeros(reward.params.len());
    for s in 0..mdp.n_states() {
        for a in 0..na {
            let d = eval.visitation[s * na + a];
            if d != T::zero() {
                g.axpy(d, table.grad(s, a));
            }
        }
    }
    g.scale(T::one() / (T::one() - mdp.gamma()));
    Ok(g)
}

/// `J(λ, φ)` under the learned reward.
pub fn j_value<T: Scalar>(mdp: &TabularMdp<T>, policy: &PolicyModel<T>, reward: &RewardModel<T>) -> Result<T> {
    let table = reward.table();
    let na = mdp.n_actions();
    Ok(exact_policy_eval(mdp, |s| policy.probs(s), |s, a| table[s * na + a])?.j_value)
}

/// `J(λ)` under the hidden true reward.
pub fn j_true<T: Scalar>(mdp: &TabularMdp<T>, policy: &PolicyModel<T>) -> Result<T> {
    Ok(exact_policy_eval(mdp, |s| policy.probs(s), |s, a| mdp.true_reward(s, a))?.j_value)
}
