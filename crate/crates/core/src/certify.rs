//! Oracle certification suite behind `verify`.
//!
//! `fast` runs the finite-difference and identity checks; `full` adds the
//! Monte-Carlo estimator-versus-oracle checks, the tabular critic fit and
//! the hyper-gradient comparison. [`Faults`] lets tests corrupt a component
//! on purpose and confirm the suite notices.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bilevel::{grad_phi_j_estimate, hyper_grad_estimate, ChainState, TrainConfig};
use crate::critic_fit::{fit_q_traced, CriticFitConfig, ReplayBuffer};
use crate::diffcore::{backward, finite_diff_grad, mlp_eval, mlp_forward, Activation, MlpSpec, OutputTransform, ParamVec, Tensor};
use crate::env::{collect_transitions, sample_trajectory, TabularMdp, Trajectory};
use crate::error::Result;
use crate::models::{Architecture, CriticModel, PolicyModel, RewardModel};
use crate::oracle::{
    bellman_residual_max, exact_grad_lambda_j, exact_grad_phi_j, exact_inner_solve, exact_policy_eval,
    exact_pref_objective, fd_hyper_grad, j_value, richardson_ratio,
};
use crate::preference::{bt_prob, pref_grad_lambda, pref_objective_and_grad_phi, sample_labeled_batch, PrefBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyLevel {
    Fast,
    Full,
}

/// Deliberate corruptions for mutation-testing the suite.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Faults {
    /// Negate every reverse-mode gradient seen by the autodiff check.
    pub flip_backward_sign: bool,
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{tag}  {:<width$}  {:>7.2}s  {}", c.name, c.seconds, c.detail)?;
        }
        Ok(())
    }
}

type Outcome = Result<(bool, String)>;
type NamedCheck = (&'static str, Box<dyn Fn() -> Outcome>);

/// Runs every check of `level`. Errors inside a check count as failures.
pub fn verify(level: VerifyLevel, faults: Faults) -> VerifyReport {
    let mut checks: Vec<NamedCheck> = vec![
        ("autodiff_vs_fd", Box::new(move || check_autodiff(100, faults))),
        ("policy_eval_bellman", Box::new(check_policy_eval)),
        ("grad_lambda_j_vs_fd", Box::new(check_grad_lambda_j)),
        ("grad_phi_j_vs_fd", Box::new(check_grad_phi_j)),
        ("pref_complement", Box::new(check_complement)),
        ("pref_batch_grad_vs_fd", Box::new(check_batch_pref_grad)),
        ("pref_exact_grads_vs_fd", Box::new(check_exact_pref_grads)),
        ("hyper_fd_richardson", Box::new(check_richardson)),
    ];
    if level == VerifyLevel::Full {
        checks.push(("policy_grad_monte_carlo", Box::new(check_policy_grad_mc)));
        checks.push(("grad_phi_j_truncation", Box::new(check_truncation)));
        checks.push(("pref_lambda_monte_carlo", Box::new(check_pref_lambda_mc)));
        checks.push(("fit_q_tabular", Box::new(check_fit_q)));
        checks.push(("hyper_grad_vs_fd", Box::new(check_hyper_grad)));
    }
    let checks = checks
        .into_iter()
        .map(|(name, run)| {
            let start = Instant::now();
            let (passed, detail) = match run() {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            CheckResult { name, passed, detail, seconds: start.elapsed().as_secs_f64() }
        })
        .collect();
    VerifyReport { checks }
}

/// Random network with depth ≤ 3 and widths ≤ 16.
pub(crate) fn random_spec<R: Rng + ?Sized>(rng: &mut R) -> MlpSpec {
    let depth = rng.random_range(0..=3);
    let hidden = (0..depth).map(|_| rng.random_range(1..=16)).collect();
    let input = rng.random_range(1..=16);
    let (transform, output) = match rng.random_range(0..3) {
        0 => (OutputTransform::Identity, rng.random_range(1..=16)),
        1 => (OutputTransform::Sigmoid, 1),
        _ => (OutputTransform::LogSoftmax, rng.random_range(2..=16)),
    };
    MlpSpec::new(input, hidden, Activation::Tanh, output, transform).expect("valid random spec")
}

fn check_autodiff(count: usize, faults: Faults) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA11D);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let spec = random_spec(&mut rng);
        let p = ParamVec::from_vec((0..spec.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect());
        let x: Vec<f64> = (0..spec.input_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cot: Vec<f64> = (0..spec.output_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, tape) = mlp_forward(&spec, &p, &Tensor::vector(x.clone())?)?;
        let mut g = backward(tape, &Tensor::vector(cot.clone())?)?;
        if faults.flip_backward_sign {
            g.scale(-1.0);
        }
        let fd = finite_diff_grad(
            |q| mlp_eval(&spec, q, &x).expect("shapes").iter().zip(&cot).map(|(a, b)| a * b).sum(),
            &p,
            1e-5,
        )?;
        worst = worst.max(g.relative_error(&fd, 1e-12));
    }
    Ok((worst <= 1e-5, format!("{count} networks, worst relative error {worst:.2e} (limit 1e-5)")))
}

fn random_mdp(seed: u64, ns: usize, na: usize) -> Result<TabularMdp<f64>> {
    TabularMdp::random(seed, ns, na, 0.9)
}

fn seeded_policy(mdp: &TabularMdp<f64>, arch: &Architecture, seed: u64) -> Result<PolicyModel<f64>> {
    PolicyModel::init(mdp.n_states(), mdp.n_actions(), arch, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn seeded_reward(mdp: &TabularMdp<f64>, arch: &Architecture, seed: u64) -> Result<RewardModel<f64>> {
    RewardModel::init(mdp.n_states(), mdp.n_actions(), arch, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn check_policy_eval() -> Outcome {
    let mdp = random_mdp(1, 3, 2)?;
    let policy = seeded_policy(&mdp, &Architecture::Tabular, 2)?;
    let eval = exact_policy_eval(&mdp, |s| policy.probs(s), |s, a| mdp.true_reward(s, a))?;
    let resid = bellman_residual_max(&mdp, |s| policy.probs(s), |s, a| mdp.true_reward(s, a), &eval.q_table);
    let mass: f64 = eval.visitation.iter().sum();
    let ok = resid <= 1e-10 && (mass - 1.0).abs() <= 1e-10 && eval.visitation.iter().all(|&d| d >= 0.0);
    Ok((ok, format!("Bellman residual {resid:.2e}, visitation mass {mass:.15}")))
}

fn check_grad_lambda_j() -> Outcome {
    let mdp = random_mdp(2, 3, 2)?;
    let mut worst = 0.0f64;
    for (i, arch) in [Architecture::Tabular, Architecture::mlp(vec![5])].iter().enumerate() {
        let policy = seeded_policy(&mdp, arch, 10 + i as u64)?;
        let exact = exact_grad_lambda_j(&mdp, &policy, |s, a| mdp.true_reward(s, a))?;
        let fd = finite_diff_grad(
            |p| {
                let pol = policy.with_params(p.clone());
                exact_policy_eval(&mdp, |s| pol.probs(s), |s, a| mdp.true_reward(s, a)).expect("solve").j_value
            },
            &policy.params,
            1e-5,
        )?;
        worst = worst.max(exact.relative_error(&fd, 1e-12));
    }
    Ok((worst <= 1e-5, format!("worst relative error {worst:.2e} (limit 1e-5)")))
}

fn check_grad_phi_j() -> Outcome {
    let mdp = random_mdp(3, 3, 2)?;
    let policy = seeded_policy(&mdp, &Architecture::Tabular, 4)?;
    let mut worst = 0.0f64;
    for (i, arch) in [Architecture::Tabular, Architecture::mlp(vec![6])].iter().enumerate() {
        let reward = seeded_reward(&mdp, arch, 20 + i as u64)?;
        let exact = exact_grad_phi_j(&mdp, |s| policy.probs(s), &reward)?;
        let fd = finite_diff_grad(
            |p| j_value(&mdp, &policy, &reward.with_params(p.clone())).expect("solve"),
            &reward.params,
            1e-5,
        )?;
        worst = worst.max(exact.relative_error(&fd, 1e-12));
    }
    Ok((worst <= 1e-6, format!("worst relative error {worst:.2e} (limit 1e-6)")))
}

fn random_trajectories(mdp: &TabularMdp<f64>, count: usize, h: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Trajectory>> {
    let uniform = vec![1.0 / mdp.n_actions() as f64; mdp.n_actions()];
    (0..count).map(|_| sample_trajectory(mdp, &|_| uniform.clone(), h, rng)).collect()
}

fn check_complement() -> Outcome {
    let mdp = random_mdp(4, 4, 3)?;
    let reward = seeded_reward(&mdp, &Architecture::mlp(vec![8]), 5)?;
    let table = reward.table();
    let r = |s: usize, a: usize| table[s * 3 + a];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let h = rng.random_range(1..=6);
        let t = random_trajectories(&mdp, 2, h, &mut rng)?;
        let sum = bt_prob(r, &t[0], &t[1])? + bt_prob(r, &t[1], &t[0])?;
        worst = worst.max((sum - 1.0).abs());
    }
    Ok((worst <= 1e-12, format!("1000 pairs, worst |P01 + P10 - 1| = {worst:.2e} (limit 1e-12)")))
}

fn check_batch_pref_grad() -> Outcome {
    let mdp = random_mdp(5, 3, 2)?;
    let policy = seeded_policy(&mdp, &Architecture::Tabular, 6)?;
    let mut worst = 0.0f64;
    for (i, arch) in [Architecture::Tabular, Architecture::mlp(vec![4])].iter().enumerate() {
        let reward = seeded_reward(&mdp, arch, 30 + i as u64)?;
        let batch = sample_labeled_batch(&mdp, &policy, 32, 4, &mut ChaCha8Rng::seed_from_u64(7))?;
        let (_, g) = pref_objective_and_grad_phi(&reward, &batch);
        let fd = finite_diff_grad(|p| pref_objective_and_grad_phi(&reward.with_params(p.clone()), &batch).0, &reward.params, 1e-5)?;
        worst = worst.max(g.relative_error(&fd, 1e-12));
    }
    Ok((worst <= 1e-6, format!("worst relative error {worst:.2e} (limit 1e-6)")))
}

fn check_exact_pref_grads() -> Outcome {
    let mdp = random_mdp(6, 2, 2)?;
    let policy = seeded_policy(&mdp, &Architecture::Tabular, 7)?;
    let reward = seeded_reward(&mdp, &Architecture::Tabular, 8)?;
    let exact = exact_pref_objective(&mdp, &policy, &reward, 2)?;
    let fd_phi = finite_diff_grad(
        |p| exact_pref_objective(&mdp, &policy, &reward.with_params(p.clone()), 2).expect("enumeration").value,
        &reward.params,
        1e-5,
    )?;
    let fd_lambda = finite_diff_grad(
        |p| exact_pref_objective(&mdp, &policy.with_params(p.clone()), &reward, 2).expect("enumeration").value,
        &policy.params,
        1e-5,
    )?;
    let e_phi = exact.grad_phi.relative_error(&fd_phi, 1e-12);
    let e_lambda = exact.grad_lambda.relative_error(&fd_lambda, 1e-12);
    Ok((
        e_phi <= 1e-6 && e_lambda <= 1e-6,
        format!("grad_phi {e_phi:.2e}, grad_lambda {e_lambda:.2e} (limit 1e-6)"),
    ))
}

/// The 2-state 2-action hyper-gradient fixture.
pub fn hyper_fixture() -> Result<(TabularMdp<f64>, RewardModel<f64>, PolicyModel<f64>)> {
    let mdp = TabularMdp::random(0, 2, 2, 0.9)?;
    let reward = RewardModel::init(2, 2, &Architecture::Tabular, &mut ChaCha8Rng::seed_from_u64(100))?;
    let init = PolicyModel::zeros(2, 2, &Architecture::Tabular)?;
    Ok((mdp, reward, init))
}

fn check_richardson() -> Outcome {
    let (mdp, reward, init) = hyper_fixture()?;
    let ratio = richardson_ratio(&mdp, &reward, 0.5, 2, 1e-8, 1e-3, &init)?;
    Ok(((3.5..=4.5).contains(&ratio), format!("ratio {ratio:.3} (range [3.5, 4.5])")))
}

/// Per-coordinate mean and standard error.
fn mean_se(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let m = samples.len() as f64;
    let dim = samples[0].len();
    let mean: Vec<f64> = (0..dim).map(|i| samples.iter().map(|s| s[i]).sum::<f64>() / m).collect();
    let se = (0..dim)
        .map(|i| (samples.iter().map(|s| (s[i] - mean[i]).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt())
        .collect();
    (mean, se)
}

/// Largest `|mean - target| / se` over coordinates with nonzero spread;
/// coordinates without spread must match to 1e-12.
fn worst_z(mean: &[f64], se: &[f64], target: &[f64]) -> f64 {
    mean.iter()
        .zip(se)
        .zip(target)
        .map(|((m, s), t)| {
            let gap = (m - t).abs();
            if *s > 0.0 {
                gap / s
            } else if gap <= 1e-12 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

fn check_policy_grad_mc() -> Outcome {
    let mdp = random_mdp(7, 3, 2)?;
    let policy = seeded_policy(&mdp, &Architecture::Tabular, 8)?;
    let reward = |s: usize, a: usize| mdp.true_reward(s, a);
    let eval = exact_policy_eval(&mdp, |s| policy.probs(s), reward)?;
    let critic = CriticModel::from_table(3, 2, &eval.q_table)?;
    let exact = exact_grad_lambda_j(&mdp, &policy, reward)?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pairs = crate::bilevel::draw_visitation_pairs(&mdp, &policy, 50_000, 400, &mut rng)?;
    let samples: Vec<Vec<f64>> = pairs
        .iter()
        .map(|&(s, a)| policy.score(s, a).scaled(critic.value(s, a) / (1.0 - mdp.gamma())).into_vec())
        .collect();
    let (mean, se) = mean_se(&samples);
    let z = worst_z(&mean, &se, exact.as_slice());
    Ok((z <= 3.0, format!("n = 50000, worst |mean - exact| / SE = {z:.2} (limit 3)")))
}

/// `Σ_{i<H} γ^i E[∇_φ r(s_i, a_i)]` by propagating state-action marginals.
fn truncated_grad_phi_j(mdp: &TabularMdp<f64>, policy: &PolicyModel<f64>, reward: &RewardModel<f64>, h: usize) -> ParamVec<f64> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let pi = policy.table();
    let mut states = mdp.start_dist().to_vec();
    let mut g = ParamVec::zeros(reward.params.len());
    let mut w = 1.0;
    for _ in 0..h {
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            for a in 0..na {
                let m = states[s] * pi[s][a];
                g.axpy(w * m, &reward.eval_grad(s, a).1);
                for (s2, p) in mdp.transition_row(s, a).iter().enumerate() {
                    next[s2] += m * p;
                }
            }
        }
        states = next;
        w *= mdp.gamma();
    }
    g
}

fn check_truncation() -> Outcome {
    let mdp = random_mdp(8, 3, 2)?;
    let policy = seeded_policy(&mdp, &Architecture::Tabular, 9)?;
    let reward = seeded_reward(&mdp, &Architecture::mlp(vec![4]), 10)?;
    let exact = exact_grad_phi_j(&mdp, |s| policy.probs(s), &reward)?;
    let m_hat = (0..3)
        .flat_map(|s| (0..2).map(move |a| (s, a)))
        .map(|(s, a)| reward.eval_grad(s, a).1.norm())
        .fold(0.0, f64::max);
    let gamma = mdp.gamma();
    let pi = policy.table();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut ok = true;
    let mut detail = Vec::new();
    for h in [3usize, 10] {
        let truncated = truncated_grad_phi_j(&mdp, &policy, &reward, h);
        let gap = truncated.distance(&exact);
        let bound = 2.0 * gamma.powi(h as i32) * m_hat / (1.0 - gamma);
        let samples: Vec<Vec<f64>> = (0..4000)
            .map(|_| {
                let t = sample_trajectory(&mdp, &|s| pi[s].clone(), h, &mut rng).expect("rollout");
                grad_phi_j_estimate(&reward, &[t], gamma).expect("estimate").into_vec()
            })
            .collect();
        let (mean, se) = mean_se(&samples);
        let z = worst_z(&mean, &se, truncated.as_slice());
        ok &= gap <= bound && z <= 3.0;
        detail.push(format!("H={h}: gap {gap:.3e} <= bound {bound:.3e}, z {z:.2}"));
    }
    Ok((ok, detail.join("; ")))
}

fn check_pref_lambda_mc() -> Outcome {
    let mdp = TabularMdp::new(1, 2, vec![1.0, 1.0], vec![0.2, 0.9], 0.9, vec![1.0])?;
    let policy = seeded_policy(&mdp, &Architecture::Tabular, 12)?;
    let reward = seeded_reward(&mdp, &Architecture::Tabular, 13)?;
    let exact = exact_pref_objective(&mdp, &policy, &reward, 1)?.grad_lambda;
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let batch = sample_labeled_batch(&mdp, &policy, 20_000, 1, &mut rng)?;
    let samples: Vec<Vec<f64>> = batch
        .pairs
        .iter()
        .map(|p| pref_grad_lambda(&reward, &policy, &PrefBatch::new(vec![p.clone()]).expect("one pair")).into_vec())
        .collect();
    let (mean, se) = mean_se(&samples);
    let z = worst_z(&mean, &se, exact.as_slice());
    Ok((z <= 3.0, format!("B = 20000, worst |mean - exact| / SE = {z:.2} (limit 3)")))
}

fn check_fit_q() -> Outcome {
    let mdp = TabularMdp::random(0, 5, 2, 0.9)?;
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let policy = PolicyModel::init(5, 2, &Architecture::Tabular, &mut rng)?;
    let reward = RewardModel::init(5, 2, &Architecture::Tabular, &mut rng)?;
    let critic0 = CriticModel::init(5, 2, &Architecture::Tabular, &mut rng)?;
    let table = reward.table();
    let pi = policy.table();
    let buffer = ReplayBuffer::new(collect_transitions(&mdp, &|s| pi[s].clone(), |s, a| table[s * 2 + a], 10_000, 10, &mut rng)?);
    let cfg = CriticFitConfig::new(20, 2000);
    let (fit, trace) = fit_q_traced(0.9, &buffer, &policy, &critic0, &cfg, &mut rng)?;
    let exact = exact_policy_eval(&mdp, |s| pi[s].clone(), |s, a| table[s * 2 + a])?;
    let err = fit.table().iter().zip(&exact.q_table).map(|(a, b): (&f64, &f64)| (a - b).abs()).fold(0.0, f64::max);
    let limit = 0.1 / (1.0 - 0.9);
    let radius = cfg.radius_for(0.9);
    let ok = err <= limit && trace.max_anchor_distance <= radius + 1e-9;
    Ok((
        ok,
        format!("max |Q - Q_exact| {err:.3} (limit {limit:.3}), max anchor distance {:.3} (radius {radius:.3})", trace.max_anchor_distance),
    ))
}

fn check_hyper_grad() -> Outcome {
    let (mdp, reward, init) = hyper_fixture()?;
    let sigma = 0.5;
    let fd = fd_hyper_grad(&mdp, &reward, sigma, 2, 1e-8, 1e-4, &init)?;
    let critic = CriticModel::zeros(2, 2, &Architecture::Tabular)?;
    let plain = ChainState { policy: exact_inner_solve(&mdp, &reward, 0.0, 2, 1e-8, &init)?, critic: critic.clone() };
    let pen = ChainState { policy: exact_inner_solve(&mdp, &reward, sigma, 2, 1e-8, &init)?, critic };
    let mut cfg = TrainConfig::new(1, 1, 20_000, 1, 2, sigma, CriticFitConfig::new(1, 1));
    cfg.j_horizon = Some(300);
    let h = hyper_grad_estimate(
        &reward,
        &plain,
        &pen,
        &mdp,
        &cfg,
        &mut ChaCha8Rng::seed_from_u64(16),
        &mut ChaCha8Rng::seed_from_u64(17),
    )?;
    let cos = h.d.cosine(&fd);
    let rel = h.d.distance(&fd) / fd.norm();
    Ok((cos >= 0.99 && rel <= 0.05, format!("cosine {cos:.4} (>= 0.99), relative norm error {rel:.4} (<= 0.05)")))
}
