use super::params::ParamVec;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Central finite differences `(f(x + h e_i) - f(x - h e_i)) / 2h`, one
/// coordinate at a time.
pub fn finite_diff_grad<T, F>(mut f: F, x: &ParamVec<T>, h: T) -> Result<ParamVec<T>>
where
    T: Scalar,
    F: FnMut(&ParamVec<T>) -> T,
{
    if !(h > T::zero()) {
        return Err(Error::Usage(format!("finite-difference step must be positive, got {h}")));
    }
    let mut probe = x.clone();
    let mut grad = ParamVec::zeros(x.len());
    for i in 0..x.len() {
        let xi = x[i];
        probe[i] = xi + h;
        let up = f(&probe);
        probe[i] = xi - h;
        let down = f(&probe);
        probe[i] = xi;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numeric(format!("non-finite function value at coordinate {i}")));
        }
        grad[i] = (up - down) / (h + h);
    }
    Ok(grad)
}

/// Fallible variant for objectives that can themselves fail (inner solves).
pub fn try_finite_diff_grad<T, F>(mut f: F, x: &ParamVec<T>, h: T) -> Result<ParamVec<T>>
where
    T: Scalar,
    F: FnMut(&ParamVec<T>) -> Result<T>,
{
    if !(h > T::zero()) {
        return Err(Error::Usage(format!("finite-difference step must be positive, got {h}")));
    }
    let mut probe = x.clone();
    let mut grad = ParamVec::zeros(x.len());
    for i in 0..x.len() {
        let xi = x[i];
        probe[i] = xi + h;
        let up = f(&probe)?;
        probe[i] = xi - h;
        let down = f(&probe)?;
        probe[i] = xi;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numeric(format!("non-finite function value at coordinate {i}")));
        }
        grad[i] = (up - down) / (h + h);
    }
    Ok(grad)
}
