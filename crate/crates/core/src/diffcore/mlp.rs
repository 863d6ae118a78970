use serde::{Deserialize, Serialize};

use super::params::ParamVec;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    /// Subgradient 0 is used at the kink.
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputTransform {
    Identity,
    Sigmoid,
    LogSoftmax,
}

/// Shape of a fully connected network: `hidden_widths.len()` hidden layers
/// followed by a linear output layer and an output transform.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
    pub output_dim: usize,
    pub output_transform: OutputTransform,
}

impl MlpSpec {
    pub fn new(
        input_dim: usize,
        hidden_widths: Vec<usize>,
        activation: Activation,
        output_dim: usize,
        output_transform: OutputTransform,
    ) -> Result<Self> {
        let spec = Self { input_dim, hidden_widths, activation, output_dim, output_transform };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_widths.contains(&0) {
            return Err(Error::Dimension(format!("all layer sizes must be >= 1: {self:?}")));
        }
        if self.output_transform == OutputTransform::LogSoftmax && self.output_dim < 2 {
            return Err(Error::Dimension("log_softmax output needs output_dim >= 2".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every linear layer, input side first.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_widths.len() + 1);
        let mut fan_in = self.input_dim;
        for &w in &self.hidden_widths {
            dims.push((fan_in, w));
            fan_in = w;
        }
        dims.push((fan_in, self.output_dim));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|&(i, o)| i * o + o).sum()
    }

    /// Offset of each layer's weight block inside the packed parameters.
    fn layer_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::new();
        let mut at = 0;
        for (i, o) in self.layer_dims() {
            offsets.push(at);
            at += i * o + o;
        }
        offsets
    }

    /// Index of weight `(row, col)` of layer `layer` in the packed vector.
    pub fn weight_index(&self, layer: usize, row: usize, col: usize) -> usize {
        let (fan_in, _) = self.layer_dims()[layer];
        self.layer_offsets()[layer] + row * fan_in + col
    }

    /// Index of bias `row` of layer `layer` in the packed vector.
    pub fn bias_index(&self, layer: usize, row: usize) -> usize {
        let (fan_in, fan_out) = self.layer_dims()[layer];
        self.layer_offsets()[layer] + fan_out * fan_in + row
    }

    fn check_params<T: Scalar>(&self, params: &ParamVec<T>) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "parameter vector has {} entries, spec needs {}",
                params.len(),
                self.param_count()
            )));
        }
        Ok(())
    }
}

/// Intermediate values of one forward pass, enough for exactly one backward
/// pass. Borrowing the parameters means they cannot change between the two
/// passes, and `backward` consumes the tape.
#[derive(Debug)]
pub struct Tape<'a, T> {
    spec: &'a MlpSpec,
    params: &'a ParamVec<T>,
    /// Input of every linear layer.
    inputs: Vec<Vec<T>>,
    /// Output after the transform.
    output: Vec<T>,
}

/// Logistic function clamped below the largest float under one, so outputs
/// stay strictly inside (0, 1) even for saturated logits.
#[inline]
fn sigmoid<T: Scalar>(z: T) -> T {
    let y = if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    };
    y.min(T::one() - T::epsilon() / T::lit(2.0)).max(T::min_positive_value())
}

/// Shifts by the max before `ln_1p`, so a dominant entry keeps full relative
/// precision in `1 - p` even when the logits are large.
fn log_softmax<T: Scalar>(z: &[T]) -> Vec<T> {
    let (top, max) = z
        .iter()
        .copied()
        .enumerate()
        .fold((0, T::neg_infinity()), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    let rest: T = z
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, &v)| (v - max).exp())
        .sum();
    let log_norm = rest.ln_1p();
    z.iter().map(|&v| (v - max) - log_norm).collect()
}

fn affine<T: Scalar>(w: &[T], b: &[T], x: &[T], fan_out: usize) -> Vec<T> {
    let fan_in = x.len();
    (0..fan_out)
        .map(|r| {
            let row = &w[r * fan_in..(r + 1) * fan_in];
            row.iter().zip(x).fold(b[r], |acc, (&wi, &xi)| acc + wi * xi)
        })
        .collect()
}

fn forward_impl<T: Scalar>(spec: &MlpSpec, params: &[T], input: &[T], keep: bool) -> (Vec<T>, Vec<Vec<T>>) {
    let dims = spec.layer_dims();
    let last = dims.len() - 1;
    let mut inputs = Vec::with_capacity(if keep { dims.len() } else { 0 });
    let mut x = input.to_vec();
    let mut at = 0;
    for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
        let w = &params[at..at + fan_in * fan_out];
        let b = &params[at + fan_in * fan_out..at + fan_in * fan_out + fan_out];
        at += fan_in * fan_out + fan_out;
        let mut z = affine(w, b, &x, fan_out);
        if l < last {
            match spec.activation {
                Activation::Tanh => z.iter_mut().for_each(|v| *v = v.tanh()),
                Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(T::zero())),
            }
        }
        if keep {
            inputs.push(std::mem::replace(&mut x, z));
        } else {
            x = z;
        }
    }
    let out = match spec.output_transform {
        OutputTransform::Identity => x,
        OutputTransform::Sigmoid => x.into_iter().map(sigmoid).collect(),
        OutputTransform::LogSoftmax => log_softmax(&x),
    };
    (out, inputs)
}

fn check_input<T: Scalar>(spec: &MlpSpec, input: &Tensor<T>) -> Result<()> {
    if input.shape() != [spec.input_dim] {
        return Err(Error::Dimension(format!(
            "input shape {:?}, expected [{}]",
            input.shape(),
            spec.input_dim
        )));
    }
    Ok(())
}

/// Forward pass recording a tape for [`backward`].
pub fn mlp_forward<'a, T: Scalar>(
    spec: &'a MlpSpec,
    params: &'a ParamVec<T>,
    input: &Tensor<T>,
) -> Result<(Tensor<T>, Tape<'a, T>)> {
    spec.check_params(params)?;
    check_input(spec, input)?;
    let (out, inputs) = forward_impl(spec, params.as_slice(), input.data(), true);
    let tensor = Tensor::from_parts_unchecked(vec![spec.output_dim], out.clone());
    Ok((tensor, Tape { spec, params, inputs, output: out }))
}

/// Forward pass without a tape.
pub fn mlp_eval<T: Scalar>(spec: &MlpSpec, params: &ParamVec<T>, input: &[T]) -> Result<Vec<T>> {
    spec.check_params(params)?;
    if input.len() != spec.input_dim {
        return Err(Error::Dimension(format!(
            "input length {}, expected {}",
            input.len(),
            spec.input_dim
        )));
    }
    Ok(forward_impl(spec, params.as_slice(), input, false).0)
}

/// Reverse pass: gradient of `<cotangent, output>` with respect to the
/// parameters, packed like the parameters themselves.
pub fn backward<T: Scalar>(tape: Tape<'_, T>, output_cotangent: &Tensor<T>) -> Result<ParamVec<T>> {
    let spec = tape.spec;
    if output_cotangent.shape() != [spec.output_dim] {
        return Err(Error::Dimension(format!(
            "cotangent shape {:?}, expected [{}]",
            output_cotangent.shape(),
            spec.output_dim
        )));
    }
    let cot = output_cotangent.data();
    // Gradient w.r.t. the pre-transform logits.
    let mut g: Vec<T> = match spec.output_transform {
        OutputTransform::Identity => cot.to_vec(),
        OutputTransform::Sigmoid => {
            cot.iter().zip(&tape.output).map(|(&c, &y)| c * y * (T::one() - y)).collect()
        }
        OutputTransform::LogSoftmax => {
            let total: T = cot.iter().copied().sum();
            cot.iter().zip(&tape.output).map(|(&c, &y)| c - y.exp() * total).collect()
        }
    };

    let dims = spec.layer_dims();
    let params = tape.params.as_slice();
    let mut grad = vec![T::zero(); params.len()];
    let mut offsets = Vec::with_capacity(dims.len());
    let mut at = 0;
    for &(i, o) in &dims {
        offsets.push(at);
        at += i * o + o;
    }
    for l in (0..dims.len()).rev() {
        let (fan_in, fan_out) = dims[l];
        let off = offsets[l];
        let x = &tape.inputs[l];
        for r in 0..fan_out {
            let gr = g[r];
            let row = &mut grad[off + r * fan_in..off + (r + 1) * fan_in];
            for (gw, &xi) in row.iter_mut().zip(x) {
                *gw = gr * xi;
            }
            grad[off + fan_in * fan_out + r] = gr;
        }
        if l == 0 {
            break;
        }
        let w = &params[off..off + fan_in * fan_out];
        let mut gx = vec![T::zero(); fan_in];
        for r in 0..fan_out {
            let gr = g[r];
            if gr == T::zero() {
                continue;
            }
            for (gxi, &wi) in gx.iter_mut().zip(&w[r * fan_in..(r + 1) * fan_in]) {
                *gxi += gr * wi;
            }
        }
        // x here is the activation output of layer l-1.
        match spec.activation {
            Activation::Tanh => {
                for (gxi, &a) in gx.iter_mut().zip(x) {
                    *gxi *= T::one() - a * a;
                }
            }
            Activation::Relu => {
                for (gxi, &a) in gx.iter_mut().zip(x) {
                    if a <= T::zero() {
                        *gxi = T::zero();
                    }
                }
            }
        }
        g = gx;
    }
    Ok(ParamVec::from_vec(grad))
}
