//! The bilevel loop: two inner policy chains (plain ascent on `J`, and a
//! penalized chain), each with its own critic fit per inner step, and an
//! outer normalized ascent on the reward parameters driven by the penalty
//! hyper-gradient.
//!
//! All three updates are ascents. The lower level maximizes `J` and the
//! upper level maximizes the label likelihood, so ascent is the only
//! reading under which either level improves.
//!
//! The penalized chain follows `σJ + G⁺` under [`HyperVariant::PaperLiteral`]
//! and `J + σG⁺` under [`HyperVariant::PenaltyConsistent`], the objective
//! whose maximizer that variant's hyper-gradient is taken at.

mod config;
mod estimators;
mod train;

pub use config::{step_sizes, ChainStart, HyperVariant, RunRecord, SamplingMode, TrainConfig};
pub use estimators::{
    grad_phi_j_estimate, hyper_grad_estimate, normalized_update, penalized_policy_grad_estimate,
    policy_grad_estimate, proxy_policy_grad_estimate, ChainState, Direction, HyperGrad,
};
pub(crate) use estimators::draw_visitation_pairs;
pub use train::{train, train_with, HeldoutSet, TrainOutput};

#[cfg(test)]
mod tests;
