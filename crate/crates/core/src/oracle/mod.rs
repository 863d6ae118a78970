//! Exact tabular ground truth for every stochastic estimator: closed-form
//! policy evaluation and visitation, exact gradients of `J`, the enumerated
//! preference objective, nested-optimization finite differences of the
//! penalty proxy, and probes of the analysis constants.
//!
//! Everything here scales with `n_states * n_actions` (dense solves) or
//! with `(n_states * n_actions)^H` (enumeration), so it is meant for small
//! fixtures only.

mod eval;
pub mod linalg;
mod inner;
mod pref;
mod probes;

pub use eval::{
    bellman_residual_max, exact_grad_lambda_j, exact_grad_phi_j, exact_policy_eval, j_true, j_value,
    value_iteration, ExactPolicyEval, OptimalValues,
};
pub use inner::{exact_inner_solve, fd_hyper_grad, inner_objective, phi_sigma, richardson_ratio, INNER_MAX_ITERS};
pub use pref::{exact_pref_objective, ExactPref, MAX_ENUMERATED_TRAJECTORIES};
pub use probes::{assumption_probes, ProbeReport, LEMMA_SAMPLES};
