use rand::Rng;
use rand_distr::{Distribution, Geometric};

use super::TabularMdp;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const POLICY_SUM_TOL: f64 = 1e-9;

/// A length-`H` sequence of visited state-action pairs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Trajectory {
    pub steps: Vec<(usize, usize)>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `Σ_h f(s_h, a_h)`
    pub fn total<T: Scalar>(&self, mut f: impl FnMut(usize, usize) -> T) -> T {
        self.steps.iter().map(|&(s, a)| f(s, a)).sum()
    }
}

/// Replay tuple `(s, a, r, s')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition<T> {
    pub s: usize,
    pub a: usize,
    pub r: T,
    pub s_next: usize,
}

/// Checks that `probs` is a probability vector up to `1e-9`.
pub fn check_distribution<T: Scalar>(probs: &[T]) -> Result<()> {
    let mut total = 0.0;
    for p in probs {
        let p = p.as_f64();
        if !(p >= 0.0) || !p.is_finite() {
            return Err(Error::Model(format!("invalid action probability {p}")));
        }
        total += p;
    }
    if (total - 1.0).abs() > POLICY_SUM_TOL {
        return Err(Error::Model(format!("action probabilities sum to {total}")));
    }
    Ok(())
}

/// Inverse-CDF draw from a probability vector; consumes exactly one uniform.
pub fn sample_categorical<T: Scalar, R: Rng + ?Sized>(probs: &[T], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p.as_f64();
        if u < acc {
            return i;
        }
    }
    // Rounding left `acc` just below one: fall back to the last supported index.
    probs.iter().rposition(|p| p.as_f64() > 0.0).unwrap_or(probs.len() - 1)
}

fn draw_action<T, P, R>(mdp: &TabularMdp<T>, policy: &P, s: usize, rng: &mut R) -> Result<usize>
where
    T: Scalar,
    P: Fn(usize) -> Vec<T>,
    R: Rng + ?Sized,
{
    let probs = policy(s);
    if probs.len() != mdp.n_actions() {
        return Err(Error::Model(format!(
            "policy returned {} probabilities for {} actions",
            probs.len(),
            mdp.n_actions()
        )));
    }
    check_distribution(&probs)?;
    Ok(sample_categorical(&probs, rng))
}

/// Rolls out `h` steps from `s_0 ~ ν` under `policy`.
pub fn sample_trajectory<T, P, R>(mdp: &TabularMdp<T>, policy: &P, h: usize, rng: &mut R) -> Result<Trajectory>
where
    T: Scalar,
    P: Fn(usize) -> Vec<T>,
    R: Rng + ?Sized,
{
    if h == 0 {
        return Err(Error::Usage("trajectory length must be >= 1".into()));
    }
    let mut steps = Vec::with_capacity(h);
    let mut s = sample_categorical(mdp.start_dist(), rng);
    for t in 0..h {
        let a = draw_action(mdp, policy, s, rng)?;
        steps.push((s, a));
        if t + 1 < h {
            s = sample_categorical(mdp.transition_row(s, a), rng);
        }
    }
    Ok(Trajectory { steps })
}

/// Smallest horizon whose geometric tail mass `γ^k` is at most `1e-3`.
pub fn default_geo_horizon(gamma: f64) -> usize {
    ((1e-3f64).ln() / gamma.ln()).ceil().max(1.0) as usize
}

/// `t` with `P(t = k) ∝ (1-γ)γ^k` on `0..max_horizon` (rejection outside).
pub fn sample_truncated_geometric<R: Rng + ?Sized>(gamma: f64, max_horizon: usize, rng: &mut R) -> Result<usize> {
    if max_horizon == 0 {
        return Err(Error::Usage("max_geo_horizon must be >= 1".into()));
    }
    let geo = Geometric::new(1.0 - gamma).map_err(|e| Error::Config(format!("geometric sampler: {e}")))?;
    loop {
        let t = geo.sample(rng);
        if t < max_horizon as u64 {
            return Ok(t as usize);
        }
    }
}

/// Draw from the discounted visitation distribution: `t` from a truncated
/// geometric, then `t` steps of rollout, returning `(s_t, a_t)`.
pub fn sample_visitation_pair<T, P, R>(
    mdp: &TabularMdp<T>,
    policy: &P,
    rng: &mut R,
    max_geo_horizon: usize,
) -> Result<(usize, usize)>
where
    T: Scalar,
    P: Fn(usize) -> Vec<T>,
    R: Rng + ?Sized,
{
    let t = sample_truncated_geometric(mdp.gamma().as_f64(), max_geo_horizon, rng)?;
    let mut s = sample_categorical(mdp.start_dist(), rng);
    let mut a = draw_action(mdp, policy, s, rng)?;
    for _ in 0..t {
        s = sample_categorical(mdp.transition_row(s, a), rng);
        a = draw_action(mdp, policy, s, rng)?;
    }
    Ok((s, a))
}

/// Gathers `n` replay tuples from consecutive length-`h` rollouts. The reward
/// field is `reward_fn(s, a)`, i.e. the learned reward at collection time.
pub fn collect_transitions<T, P, F, R>(
    mdp: &TabularMdp<T>,
    policy: &P,
    reward_fn: F,
    n: usize,
    h: usize,
    rng: &mut R,
) -> Result<Vec<Transition<T>>>
where
    T: Scalar,
    P: Fn(usize) -> Vec<T>,
    F: Fn(usize, usize) -> T,
    R: Rng + ?Sized,
{
    if n == 0 || h == 0 {
        return Err(Error::Usage("need n >= 1 and h >= 1 to collect transitions".into()));
    }
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut s = sample_categorical(mdp.start_dist(), rng);
        for _ in 0..h {
            if out.len() == n {
                break;
            }
            let a = draw_action(mdp, policy, s, rng)?;
            let r = reward_fn(s, a);
            if !r.is_finite() {
                return Err(Error::Model(format!("non-finite reward at (s={s}, a={a})")));
            }
            let s_next = sample_categorical(mdp.transition_row(s, a), rng);
            out.push(Transition { s, a, r, s_next });
            s = s_next;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{LEFT, RIGHT};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_state() -> TabularMdp<f64> {
        TabularMdp::new(
            2,
            2,
            vec![0.7, 0.3, 0.2, 0.8, 0.4, 0.6, 0.9, 0.1],
            vec![0.1, 0.9, 0.5, 0.3],
            0.6,
            vec![0.25, 0.75],
        )
        .unwrap()
    }

    fn policy2(s: usize) -> Vec<f64> {
        if s == 0 {
            vec![0.35, 0.65]
        } else {
            vec![0.8, 0.2]
        }
    }

    /// |freq - p| within three binomial standard errors.
    fn within_3se(count: usize, n: usize, p: f64) -> bool {
        let se = (p * (1.0 - p) / n as f64).sqrt();
        (count as f64 / n as f64 - p).abs() <= 3.0 * se
    }

    #[test]
    fn single_state_trajectory_stays_put() {
        let m = TabularMdp::new(1, 2, vec![1.0, 1.0], vec![0.0, 1.0], 0.9, vec![1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tr = sample_trajectory(&m, &|_| vec![0.5, 0.5], 12, &mut rng).unwrap();
        assert_eq!(tr.len(), 12);
        assert!(tr.steps.iter().all(|&(s, _)| s == 0));
    }

    #[test]
    fn deterministic_chain_trajectory() {
        let m = TabularMdp::<f64>::chain(4, 0.9, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tr = sample_trajectory(&m, &|_| vec![0.0, 1.0], 6, &mut rng).unwrap();
        assert_eq!(tr.steps, vec![(0, RIGHT), (1, RIGHT), (2, RIGHT), (3, RIGHT), (3, RIGHT), (3, RIGHT)]);
        let tr = sample_trajectory(&m, &|_| vec![1.0, 0.0], 3, &mut rng).unwrap();
        assert_eq!(tr.steps, vec![(0, LEFT); 3]);
    }

    #[test]
    fn rejects_unnormalized_policy() {
        let m = two_state();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = sample_trajectory(&m, &|_| vec![0.5, 0.6], 3, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Model(_)));
        assert!(sample_trajectory(&m, &policy2, 0, &mut rng).is_err());
    }

    #[test]
    fn step_one_state_frequency_matches_exact() {
        let m = two_state();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| sample_trajectory(&m, &policy2, 2, &mut rng).unwrap().steps[1].0 == 0)
            .count();
        // P(s_1 = 0) = Σ_s ν(s) Σ_a π(a|s) P(0|s,a)
        let mut exact = 0.0;
        for s in 0..2 {
            for a in 0..2 {
                exact += m.start_dist()[s] * policy2(s)[a] * m.transition_row(s, a)[0];
            }
        }
        assert!(within_3se(hits, n, exact), "{hits} vs {exact}");
    }

    #[test]
    fn near_zero_gamma_visitation_is_start_pair() {
        let m = TabularMdp::new(2, 2, vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0], vec![0.0; 4], 1e-9, vec![1.0, 0.0])
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let (s, a) = sample_visitation_pair(&m, &|_| vec![1.0, 0.0], &mut rng, 10).unwrap();
            assert_eq!((s, a), (0, 0));
        }
    }

    #[test]
    fn single_state_visitation_follows_policy() {
        let m = TabularMdp::new(1, 3, vec![1.0; 3], vec![0.0; 3], 0.8, vec![1.0]).unwrap();
        let pi = vec![0.2, 0.5, 0.3];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let (s, a) = sample_visitation_pair(&m, &|_| pi.clone(), &mut rng, default_geo_horizon(0.8)).unwrap();
            assert_eq!(s, 0);
            counts[a] += 1;
        }
        for a in 0..3 {
            assert!(within_3se(counts[a], n, pi[a]));
        }
    }

    #[test]
    fn truncated_geometric_law() {
        let gamma = 0.7;
        let max = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mut counts = vec![0usize; max];
        for _ in 0..n {
            counts[sample_truncated_geometric(gamma, max, &mut rng).unwrap()] += 1;
        }
        let norm: f64 = (0..max).map(|k| (1.0 - gamma) * gamma.powi(k as i32)).sum();
        for k in 0..max {
            let p = (1.0 - gamma) * gamma.powi(k as i32) / norm;
            assert!(within_3se(counts[k], n, p));
        }
        assert!(sample_truncated_geometric(gamma, 0, &mut rng).is_err());
    }

    #[test]
    fn default_horizon_bounds_tail_mass() {
        for gamma in [0.5, 0.9, 0.95, 0.99] {
            let k = default_geo_horizon(gamma);
            assert!(gamma.powi(k as i32) <= 1e-3 + 1e-15);
            assert!(gamma.powi(k as i32 - 1) > 1e-3);
        }
    }

    #[test]
    fn transitions_follow_rows_and_reward_fn() {
        let m = two_state();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let tuples = collect_transitions(&m, &policy2, |_, _| 0.0, 100_000, 5, &mut rng).unwrap();
        assert_eq!(tuples.len(), 100_000);
        assert!(tuples.iter().all(|t| t.r == 0.0));
        let from: Vec<_> = tuples.iter().filter(|t| t.s == 1 && t.a == 0).collect();
        let to0 = from.iter().filter(|t| t.s_next == 0).count();
        assert!(within_3se(to0, from.len(), m.transition_row(1, 0)[0]));
        assert!(collect_transitions(&m, &policy2, |_, _| f64::NAN, 3, 2, &mut rng).is_err());
    }

    #[test]
    fn deterministic_transitions_are_fully_determined() {
        let m = TabularMdp::<f64>::chain(3, 0.9, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let tuples = collect_transitions(&m, &|_| vec![0.0, 1.0], |s, a| (s * 2 + a) as f64, 4, 4, &mut rng).unwrap();
        let got: Vec<_> = tuples.iter().map(|t| (t.s, t.a, t.r, t.s_next)).collect();
        assert_eq!(got, vec![(0, 1, 1.0, 1), (1, 1, 3.0, 2), (2, 1, 5.0, 2), (2, 1, 5.0, 2)]);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let m = two_state();
        let a = sample_trajectory(&m, &policy2, 20, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_trajectory(&m, &policy2, 20, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }
}
