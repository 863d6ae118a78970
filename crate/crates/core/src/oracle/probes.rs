use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::eval::{exact_policy_eval, grad_lambda_from_eval, value_iteration};
use super::linalg::sym_eigen;
use crate::diffcore::ParamVec;
use crate::env::TabularMdp;
use crate::error::Result;
use crate::models::{PolicyModel, RewardModel};
use crate::preference::ScoreTable;
use crate::scalar::Scalar;

/// Number of random policies the gradient-domination check visits.
pub const LEMMA_SAMPLES: usize = 100;

/// Empirical stand-ins for the analysis constants, measured at one policy
/// and reward plus a batch of random policies.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    /// Smallest eigenvalue of the Fisher matrix at the probed policy.
    pub fisher_min_eig: f64,
    /// Largest score norm at the probed policy.
    pub max_score_norm: f64,
    /// Weighted least-squares error of fitting advantages with scores.
    pub eps_bias: f64,
    /// Constants over the probed policy and all samples: min Fisher
    /// eigenvalue, max score norm, max `eps_bias`.
    pub mu_f_hat: f64,
    pub m_g_hat: f64,
    pub eps_bias_hat: f64,
    pub eps_prime: f64,
    pub mu3_hat: f64,
    /// Optimal value under the learned reward.
    pub j_star: f64,
    pub lemma_samples: usize,
    pub lemma_violations: usize,
    /// Largest `lhs − rhs` over the samples; nonpositive when all hold.
    pub lemma_worst_margin: f64,
}

impl fmt::Display for ProbeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: [(&str, String); 12] = [
            ("fisher_min_eig", format!("{:e}", self.fisher_min_eig)),
            ("max_score_norm", format!("{:e}", self.max_score_norm)),
            ("eps_bias", format!("{:e}", self.eps_bias)),
            ("mu_f_hat", format!("{:e}", self.mu_f_hat)),
            ("m_g_hat", format!("{:e}", self.m_g_hat)),
            ("eps_bias_hat", format!("{:e}", self.eps_bias_hat)),
            ("eps_prime", format!("{:e}", self.eps_prime)),
            ("mu3_hat", format!("{:e}", self.mu3_hat)),
            ("j_star", format!("{:e}", self.j_star)),
            ("lemma_samples", self.lemma_samples.to_string()),
            ("lemma_violations", self.lemma_violations.to_string()),
            ("lemma_worst_margin", format!("{:e}", self.lemma_worst_margin)),
        ];
        for (k, v) in rows {
            writeln!(f, "{k}: {v}")?;
        }
        Ok(())
    }
}

/// Fisher matrix, score bound, advantage-fit error, `J` and `‖∇J‖` of one
/// policy.
struct PolicyProbe {
    fisher_min_eig: f64,
    max_score_norm: f64,
    eps_bias: f64,
    j: f64,
    grad_norm: f64,
}

fn probe_policy<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &PolicyModel<T>,
    reward_table: &[T],
    optimal_visitation: &[T],
) -> Result<PolicyProbe> {
    let na = mdp.n_actions();
    let n_pairs = mdp.n_pairs();
    let dim = policy.params.len();
    let eval = exact_policy_eval(mdp, |s| policy.probs(s), |s, a| reward_table[s * na + a])?;
    let scores = ScoreTable::new(policy);
    let score_at = |i: usize| scores.get(i / na, i % na);

    let mut fisher = vec![T::zero(); dim * dim];
    let mut max_score_norm = T::zero();
    for i in 0..n_pairs {
        let g = score_at(i);
        max_score_norm = max_score_norm.max(g.norm());
        add_outer(&mut fisher, g, eval.visitation[i]);
    }
    let (eigs, _) = sym_eigen(&fisher, dim);

    // advantages A(s, a) = Q(s, a) − V(s)
    let probs = policy.table();
    let adv: Vec<T> = (0..n_pairs)
        .map(|i| {
            let s = i / na;
            let v: T = (0..na).map(|b| probs[s][b] * eval.q_table[s * na + b]).sum();
            eval.q_table[i] - v
        })
        .collect();
    let scale = T::one() - mdp.gamma();
    let features: Vec<ParamVec<T>> = (0..n_pairs).map(|i| score_at(i).scaled(scale)).collect();
    let eps_bias = weighted_least_squares_error(&features, &adv, optimal_visitation, dim);

    let grad = grad_lambda_from_eval(mdp, policy, &scores, &eval);
    Ok(PolicyProbe {
        fisher_min_eig: eigs[0].as_f64(),
        max_score_norm: max_score_norm.as_f64(),
        eps_bias: eps_bias.as_f64(),
        j: eval.j_value.as_f64(),
        grad_norm: grad.norm().as_f64(),
    })
}

fn add_outer<T: Scalar>(m: &mut [T], g: &ParamVec<T>, w: T) {
    let n = g.len();
    for r in 0..n {
        for c in 0..n {
            m[r * n + c] += w * g[r] * g[c];
        }
    }
}

/// `min_w Σ_i d_i (y_i − x_iᵀ w)²` solved in the row space of the weighted
/// Gram matrix.
pub(crate) fn weighted_least_squares_error<T: Scalar>(x: &[ParamVec<T>], y: &[T], d: &[T], dim: usize) -> T {
    let mut gram = vec![T::zero(); dim * dim];
    let mut rhs = vec![T::zero(); dim];
    for ((xi, &yi), &di) in x.iter().zip(y).zip(d) {
        add_outer(&mut gram, xi, di);
        for k in 0..dim {
            rhs[k] += di * yi * xi[k];
        }
    }
    let (vals, vecs) = sym_eigen(&gram, dim);
    let top = vals.iter().copied().fold(T::zero(), T::max);
    let cutoff = top * T::epsilon() * T::lit(1e3 * dim as f64);
    let mut w = vec![T::zero(); dim];
    for k in 0..dim {
        if vals[k] <= cutoff {
            continue;
        }
        let proj: T = (0..dim).map(|r| vecs[r * dim + k] * rhs[r]).sum();
        for r in 0..dim {
            w[r] += vecs[r * dim + k] * proj / vals[k];
        }
    }
    x.iter()
        .zip(y)
        .zip(d)
        .map(|((xi, &yi), &di)| {
            let fit: T = (0..dim).map(|k| xi[k] * w[k]).sum();
            di * (yi - fit) * (yi - fit)
        })
        .sum()
}

/// Probes the Fisher lower bound, the score bound, the compatible
/// approximation error and the gradient-domination inequality
/// `√μ3 (J* − J(λ)) ≤ ε′ + ‖∇J(λ)‖` under the learned reward.
/// Random policies are standard Gaussian parameter draws from `seed`.
pub fn assumption_probes<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &PolicyModel<T>,
    reward: &RewardModel<T>,
    seed: u64,
) -> Result<ProbeReport> {
    let table = reward.table();
    let na = mdp.n_actions();
    let optimum = value_iteration(mdp, |s, a| table[s * na + a])?;
    let optimal_visitation = exact_policy_eval(mdp, optimum.greedy_dist(na), |s, a| table[s * na + a])?.visitation;

    let base = probe_policy(mdp, policy, &table, &optimal_visitation)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(LEMMA_SAMPLES);
    for _ in 0..LEMMA_SAMPLES {
        let params: Vec<T> = (0..policy.params.len())
            .map(|_| T::lit(StandardNormal.sample(&mut rng)))
            .collect();
        let sampled = policy.with_params(ParamVec::from_vec(params));
        samples.push(probe_policy(mdp, &sampled, &table, &optimal_visitation)?);
    }

    let all = || std::iter::once(&base).chain(&samples);
    let mu_f_hat = all().map(|p| p.fisher_min_eig.max(0.0)).fold(f64::INFINITY, f64::min);
    let m_g_hat = all().map(|p| p.max_score_norm).fold(0.0, f64::max);
    let eps_bias_hat = all().map(|p| p.eps_bias).fold(0.0, f64::max);
    let one_minus_gamma = 1.0 - mdp.gamma().as_f64();
    let (eps_prime, mu3_hat) = if m_g_hat > 0.0 {
        (
            mu_f_hat * eps_bias_hat.sqrt() / (m_g_hat * one_minus_gamma),
            mu_f_hat.powi(3) / (2.0 * m_g_hat * m_g_hat),
        )
    } else {
        (0.0, 0.0)
    };
    let j_star = optimum.j_star.as_f64();
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for p in &samples {
        let margin = mu3_hat.sqrt() * (j_star - p.j) - (eps_prime + p.grad_norm);
        worst = worst.max(margin);
        if margin > 0.0 {
            violations += 1;
        }
    }
    Ok(ProbeReport {
        fisher_min_eig: base.fisher_min_eig,
        max_score_norm: base.max_score_norm,
        eps_bias: base.eps_bias,
        mu_f_hat,
        m_g_hat,
        eps_bias_hat,
        eps_prime,
        mu3_hat,
        j_star,
        lemma_samples: samples.len(),
        lemma_violations: violations,
        lemma_worst_margin: worst,
    })
}
