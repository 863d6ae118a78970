//! Dense reverse-mode differentiation for small fully connected networks.
//!
//! Networks are described by an [`MlpSpec`] and evaluated against a flat
//! [`ParamVec`]. [`mlp_forward`] records a [`Tape`] that [`backward`]
//! consumes to produce the parameter gradient of `<cotangent, output>`.
//! [`finite_diff_grad`] is the independent central-difference oracle used to
//! certify every analytic gradient in the crate.

mod fd;
mod mlp;
mod params;
mod tensor;

pub use fd::{finite_diff_grad, try_finite_diff_grad};
pub use mlp::{backward, mlp_eval, mlp_forward, Activation, MlpSpec, OutputTransform, Tape};
pub use params::ParamVec;
pub use tensor::Tensor;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Scalar;

/// Draws parameters with i.i.d. `N(0, 1/fan_in)` weights and zero biases.
pub fn init_scaled_gaussian<T: Scalar, R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> ParamVec<T> {
    let mut values = Vec::with_capacity(spec.param_count());
    for (fan_in, fan_out) in spec.layer_dims() {
        let std = 1.0 / (fan_in as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            let z: f64 = StandardNormal.sample(rng);
            values.push(T::lit(std * z));
        }
        values.extend(std::iter::repeat_n(T::zero(), fan_out));
    }
    ParamVec::from_vec(values)
}

/// Draws every parameter (weights and biases) from a standard Gaussian.
pub fn init_standard_gaussian<T: Scalar, R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> ParamVec<T> {
    ParamVec::from_vec(
        (0..spec.param_count())
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                T::lit(z)
            })
            .collect(),
    )
}
