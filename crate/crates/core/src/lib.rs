//! First-order penalty-based bilevel RLHF on small tabular MDPs, together
//! with exact oracles for every stochastic estimator it uses.
//!
//! Numeric code is generic over [`Scalar`]; the aliases below fix `f64`,
//! which the training loop, metrics and CLI use throughout.

pub mod bilevel;
pub mod certify;
pub mod critic_fit;
pub mod diffcore;
pub mod env;
pub mod error;
pub mod metrics;
pub mod models;
pub mod oracle;
pub mod preference;
pub mod scalar;
pub mod seeds;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ParamVec = diffcore::ParamVec<f64>;
pub type TabularMdp = env::TabularMdp<f64>;
pub type PolicyModel = models::PolicyModel<f64>;
pub type RewardModel = models::RewardModel<f64>;
pub type CriticModel = models::CriticModel<f64>;
pub type ChainState = bilevel::ChainState<f64>;
pub type TrainOutput = bilevel::TrainOutput<f64>;
