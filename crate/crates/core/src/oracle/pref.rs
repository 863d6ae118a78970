use std::collections::BTreeMap;

use crate::diffcore::ParamVec;
use crate::env::TabularMdp;
use crate::error::{Error, Result};
use crate::models::{PolicyModel, RewardModel};
use crate::preference::{RewardTable, ScoreTable};
use crate::scalar::{logistic, Scalar};

/// Largest number of raw length-`H` trajectories the enumeration accepts.
pub const MAX_ENUMERATED_TRAJECTORIES: f64 = 1e6;

/// Exact upper objective `G⁺` and both of its gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactPref<T> {
    pub value: T,
    pub grad_phi: ParamVec<T>,
    pub grad_lambda: ParamVec<T>,
}

/// Trajectories grouped by how often they visit each state-action pair.
/// Returns and summed scores depend only on these counts, so each class is
/// handled once.
pub(crate) struct TrajectoryClasses<T> {
    pub(crate) counts: Vec<Vec<u16>>,
    pub(crate) probs: Vec<T>,
}

pub(crate) fn enumerate_classes<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy_dist: impl Fn(usize) -> Vec<T>,
    h: usize,
) -> Result<TrajectoryClasses<T>> {
    if h == 0 {
        return Err(Error::Usage("trajectory length must be at least 1".into()));
    }
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let raw = ((ns * na) as f64).powi(h as i32);
    if raw > MAX_ENUMERATED_TRAJECTORIES {
        return Err(Error::Capacity(format!(
            "{raw:.3e} trajectories of length {h} exceed the enumeration cap of {MAX_ENUMERATED_TRAJECTORIES:.0e}"
        )));
    }
    let pi: Vec<Vec<T>> = (0..ns).map(&policy_dist).collect();
    // frontier keyed by (counts so far, current state)
    let mut frontier: BTreeMap<(Vec<u16>, usize), T> = BTreeMap::new();
    for (s, &p) in mdp.start_dist().iter().enumerate() {
        if p > T::zero() {
            frontier.insert((vec![0; ns * na], s), p);
        }
    }
    let mut finished: BTreeMap<Vec<u16>, T> = BTreeMap::new();
    for step in 0..h {
        let last = step + 1 == h;
        let mut next: BTreeMap<(Vec<u16>, usize), T> = BTreeMap::new();
        for ((counts, s), p) in frontier {
            for a in 0..na {
                let pa = p * pi[s][a];
                if pa == T::zero() {
                    continue;
                }
                let mut c = counts.clone();
                c[s * na + a] += 1;
                if last {
                    *finished.entry(c).or_insert(T::zero()) += pa;
                    continue;
                }
                for (s2, &pt) in mdp.transition_row(s, a).iter().enumerate() {
                    if pt > T::zero() {
                        *next.entry((c.clone(), s2)).or_insert(T::zero()) += pa * pt;
                    }
                }
            }
        }
        frontier = next;
    }
    let (counts, probs): (Vec<_>, Vec<_>) = finished.into_iter().unzip();
    let total: T = probs.iter().copied().sum();
    let tol = T::lit(1e-9).max(T::lit(1e3) * T::epsilon());
    if (total - T::one()).abs() > tol {
        return Err(Error::Numeric(format!("enumerated trajectory probabilities sum to {total}")));
    }
    Ok(TrajectoryClasses { counts, probs })
}

fn class_total<T: Scalar>(counts: &[u16], table: impl Fn(usize) -> T) -> T {
    counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| T::lit(c as f64) * table(i))
        .sum()
}

/// Exact `G⁺(λ, φ)`: the expected likelihood of a Bradley–Terry label drawn
/// under the hidden reward, for two independent length-`h` trajectories
/// of the policy.
pub fn exact_pref_objective<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &PolicyModel<T>,
    reward: &RewardModel<T>,
    h: usize,
) -> Result<ExactPref<T>> {
    let classes = enumerate_classes(mdp, |s| policy.probs(s), h)?;
    let na = mdp.n_actions();
    let learned = RewardTable::new(reward);
    let scores = ScoreTable::new(policy);
    let n = classes.probs.len();

    let r_learned: Vec<T> = classes
        .counts
        .iter()
        .map(|c| class_total(c, |i| learned.value(i / na, i % na)))
        .collect();
    let r_true: Vec<T> = classes
        .counts
        .iter()
        .map(|c| class_total(c, |i| mdp.true_reward(i / na, i % na)))
        .collect();

    // U = 1/2 + 2 (q - 1/2)(P - 1/2); the constant is split off so that an
    // uninformative reward gives exactly 1/2
    let half = T::lit(0.5);
    let mut excess = T::zero();
    // per-class weights on ∇_φ R and on the summed scores
    let mut c_phi = vec![T::zero(); n];
    let mut c_lambda = vec![T::zero(); n];
    let two = T::lit(2.0);
    for i in 0..n {
        let pi = classes.probs[i];
        for j in 0..n {
            let pij = pi * classes.probs[j];
            let p = logistic(r_learned[i] - r_learned[j]);
            let q = logistic(r_true[i] - r_true[j]);
            let u = two * (q - half) * (p - half);
            excess += pij * u;
            c_phi[i] += two * pij * (two * q - T::one()) * p * (T::one() - p);
            // scores integrate to zero, so the constant part drops out
            c_lambda[i] += two * pij * u;
        }
    }

    let mut grad_phi = ParamVec::zeros(reward.params.len());
    let mut grad_lambda = ParamVec::zeros(policy.params.len());
    for (i, counts) in classes.counts.iter().enumerate() {
        for (k, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let (s, a) = (k / na, k % na);
            let c = T::lit(c as f64);
            grad_phi.axpy(c_phi[i] * c, learned.grad(s, a));
            grad_lambda.axpy(c_lambda[i] * c, scores.get(s, a));
        }
    }
    Ok(ExactPref { value: half + excess, grad_phi, grad_lambda })
}
