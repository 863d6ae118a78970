use super::eval::{exact_grad_lambda_j, j_value};
use super::pref::exact_pref_objective;
use crate::diffcore::ParamVec;
use crate::env::TabularMdp;
use crate::error::{Error, Result};
use crate::models::{PolicyModel, RewardModel};
use crate::scalar::Scalar;

/// Iteration cap for [`exact_inner_solve`].
pub const INNER_MAX_ITERS: usize = 100_000;

/// `J(λ, φ) + σ G⁺(λ, φ)` and its gradient in `λ`. With `σ = 0` the
/// preference enumeration is skipped.
pub fn inner_objective<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &PolicyModel<T>,
    reward: &RewardModel<T>,
    sigma: T,
    h: usize,
) -> Result<(T, ParamVec<T>)> {
    let table = reward.table();
    let na = mdp.n_actions();
    let mut value = j_value(mdp, policy, reward)?;
    let mut grad = exact_grad_lambda_j(mdp, policy, |s, a| table[s * na + a])?;
    if sigma != T::zero() {
        let pref = exact_pref_objective(mdp, policy, reward, h)?;
        value += sigma * pref.value;
        grad.axpy(sigma, &pref.grad_lambda);
    }
    Ok((value, grad))
}

/// Maximizes `J + σ G⁺` over the policy parameters by exact-gradient ascent
/// with backtracking, starting from `init`.
///
/// The loop first drives the gradient norm below `tol`, then keeps taking
/// improving steps until the objective stops increasing in floating point,
/// so the returned value is accurate well beyond `tol`. Softmax maximizers
/// frequently sit at infinity, where a fixed gradient tolerance alone leaves
/// an objective error of the same order as `tol`.
pub fn exact_inner_solve<T: Scalar>(
    mdp: &TabularMdp<T>,
    reward: &RewardModel<T>,
    sigma: T,
    h: usize,
    tol: T,
    init: &PolicyModel<T>,
) -> Result<PolicyModel<T>> {
    if !(tol > T::zero()) {
        return Err(Error::Usage("inner tolerance must be positive".into()));
    }
    if sigma < T::zero() {
        return Err(Error::Usage("sigma must be nonnegative".into()));
    }
    let mut policy = init.clone();
    let (mut value, mut grad) = inner_objective(mdp, &policy, reward, sigma, h)?;
    let mut step = T::one();
    let min_step = T::lit(1e-30);
    for _ in 0..INNER_MAX_ITERS {
        let gnorm = grad.norm();
        if gnorm == T::zero() {
            return Ok(policy);
        }
        let g2 = gnorm * gnorm;
        let mut accepted = None;
        while step >= min_step {
            let candidate = policy.with_params(policy.params.add(&grad.scaled(step)));
            let (v, g) = inner_objective(mdp, &candidate, reward, sigma, h)?;
            // Armijo; once the decrease is below round-off only strict
            // improvement counts
            let armijo = T::lit(1e-4) * step * g2;
            if v.is_finite() && v - value >= armijo && v > value {
                accepted = Some((candidate, v, g));
                break;
            }
            step *= T::lit(0.5);
        }
        match accepted {
            Some((p, v, g)) => {
                policy = p;
                value = v;
                grad = g;
                step *= T::lit(2.0);
            }
            None if gnorm <= tol => {
                let polished = polish(mdp, reward, sigma, h, policy.clone(), grad)?;
                let (_, g) = inner_objective(mdp, &polished, reward, sigma, h)?;
                return Ok(if g.norm() <= tol { polished } else { policy });
            }
            None => {
                return Err(Error::Convergence(format!(
                    "line search stalled at gradient norm {gnorm:e} above tolerance {tol:e}"
                )))
            }
        }
    }
    if grad.norm() <= tol {
        return Ok(policy);
    }
    Err(Error::Convergence(format!("inner solve hit {INNER_MAX_ITERS} iterations")))
}

/// Continues from a point where objective values no longer resolve progress,
/// using only the sign of the directional derivative: a step is accepted
/// while the objective is still increasing along it at the far end. This
/// pushes saturating softmax logits out until the gradient underflows, and
/// otherwise brackets the maximizer along each search line.
fn polish<T: Scalar>(
    mdp: &TabularMdp<T>,
    reward: &RewardModel<T>,
    sigma: T,
    h: usize,
    mut policy: PolicyModel<T>,
    mut grad: ParamVec<T>,
) -> Result<PolicyModel<T>> {
    const POLISH_ITERS: usize = 2_000;
    let mut step = T::one() / grad.norm().max(T::min_positive_value());
    for _ in 0..POLISH_ITERS {
        if grad.norm() == T::zero() {
            break;
        }
        let mut accepted = None;
        let mut trial = step;
        for _ in 0..60 {
            let candidate = policy.with_params(policy.params.add(&grad.scaled(trial)));
            let (_, g) = inner_objective(mdp, &candidate, reward, sigma, h)?;
            if g.is_finite() && g.dot(&grad) >= T::zero() {
                accepted = Some((candidate, g));
                break;
            }
            trial *= T::lit(0.5);
        }
        let Some((candidate, g)) = accepted else { break };
        if candidate.params == policy.params {
            break;
        }
        policy = candidate;
        grad = g;
        step = trial * T::lit(2.0);
    }
    Ok(policy)
}

/// `Φ_σ(φ) = [max_λ (J + σ G⁺) − max_λ J] / σ` with both maxima from
/// [`exact_inner_solve`] started at `init`.
pub fn phi_sigma<T: Scalar>(
    mdp: &TabularMdp<T>,
    reward: &RewardModel<T>,
    sigma: T,
    h: usize,
    tol: T,
    init: &PolicyModel<T>,
) -> Result<T> {
    if !(sigma > T::zero()) {
        return Err(Error::Config("sigma must be positive".into()));
    }
    let pen = exact_inner_solve(mdp, reward, sigma, h, tol, init)?;
    let plain = exact_inner_solve(mdp, reward, T::zero(), h, tol, init)?;
    let v_pen = inner_objective(mdp, &pen, reward, sigma, h)?.0;
    let v_plain = j_value(mdp, &plain, reward)?;
    Ok((v_pen - v_plain) / sigma)
}

/// Central-difference gradient of [`phi_sigma`] in the reward parameters.
pub fn fd_hyper_grad<T: Scalar>(
    mdp: &TabularMdp<T>,
    reward: &RewardModel<T>,
    sigma: T,
    h: usize,
    tol: T,
    step: T,
    init: &PolicyModel<T>,
) -> Result<ParamVec<T>> {
    if tol > T::lit(1e-8) {
        return Err(Error::Usage("fd_hyper_grad needs an inner tolerance of at most 1e-8".into()));
    }
    if step < T::lit(1e-5) || step > T::lit(1e-3) {
        return Err(Error::Usage("finite-difference step must lie in [1e-5, 1e-3]".into()));
    }
    fd_hyper_grad_unchecked(mdp, reward, sigma, h, tol, step, init)
}

/// Ratio `‖D(s) − D(s/2)‖ / ‖D(s/2) − D(s/4)‖` of successive
/// central-difference gradients; close to 4 for a second-order scheme.
pub fn richardson_ratio<T: Scalar>(
    mdp: &TabularMdp<T>,
    reward: &RewardModel<T>,
    sigma: T,
    h: usize,
    tol: T,
    step: T,
    init: &PolicyModel<T>,
) -> Result<T> {
    let half = step * T::lit(0.5);
    let d1 = fd_hyper_grad(mdp, reward, sigma, h, tol, step, init)?;
    let d2 = fd_hyper_grad(mdp, reward, sigma, h, tol, half, init)?;
    let d3 = fd_hyper_grad_unchecked(mdp, reward, sigma, h, tol, half * T::lit(0.5), init)?;
    Ok(d1.distance(&d2) / d2.distance(&d3))
}

fn fd_hyper_grad_unchecked<T: Scalar>(
    mdp: &TabularMdp<T>,
    reward: &RewardModel<T>,
    sigma: T,
    h: usize,
    tol: T,
    step: T,
    init: &PolicyModel<T>,
) -> Result<ParamVec<T>> {
    let f = |p: &ParamVec<T>| phi_sigma(mdp, &reward.with_params(p.clone()), sigma, h, tol, init);
    crate::diffcore::try_finite_diff_grad(f, &reward.params, step)
}
