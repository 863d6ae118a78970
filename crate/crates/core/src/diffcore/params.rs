use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Flat parameter vector of one network.
///
/// Packing is layer-major; within a layer the `out x in` weight matrix comes
/// first (row-major, one row per output unit), followed by the `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVec<T>(Vec<T>);

impl<T: Scalar> ParamVec<T> {
    pub fn from_vec(values: Vec<T>) -> Self {
        Self(values)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![T::zero(); len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn dot(&self, other: &Self) -> T {
        assert_eq!(self.len(), other.len(), "parameter length mismatch");
        self.0.iter().zip(&other.0).map(|(&a, &b)| a * b).sum()
    }

    pub fn norm(&self) -> T {
        self.0.iter().map(|&a| a * a).sum::<T>().sqrt()
    }

    /// `self += alpha * x`
    pub fn axpy(&mut self, alpha: T, x: &Self) {
        assert_eq!(self.len(), x.len(), "parameter length mismatch");
        for (a, &b) in self.0.iter_mut().zip(&x.0) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: T) {
        for a in &mut self.0 {
            *a *= alpha;
        }
    }

    pub fn scaled(&self, alpha: T) -> Self {
        Self(self.0.iter().map(|&a| a * alpha).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.len(), other.len(), "parameter length mismatch");
        Self(self.0.iter().zip(&other.0).map(|(&a, &b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.len(), other.len(), "parameter length mismatch");
        Self(self.0.iter().zip(&other.0).map(|(&a, &b)| a - b).collect())
    }

    pub fn distance(&self, other: &Self) -> T {
        self.sub(other).norm()
    }

    /// `‖self - other‖ / max(‖other‖, floor)`
    pub fn relative_error(&self, reference: &Self, floor: T) -> T {
        self.distance(reference) / reference.norm().max(floor)
    }

    pub fn cosine(&self, other: &Self) -> T {
        let denom = self.norm() * other.norm();
        if denom == T::zero() {
            T::zero()
        } else {
            self.dot(other) / denom
        }
    }

    /// Componentwise mean of a nonempty collection.
    pub fn mean<'a, I>(items: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a Self>,
    {
        let mut iter = items.into_iter();
        let first = iter.next()?;
        let mut acc = first.clone();
        let mut count = 1usize;
        for p in iter {
            acc.axpy(T::one(), p);
            count += 1;
        }
        acc.scale(T::one() / T::lit(count as f64));
        Some(acc)
    }

    /// Converts element type, e.g. for running the same network in `f32`.
    pub fn cast<U: Scalar>(&self) -> ParamVec<U> {
        ParamVec(self.0.iter().map(|&a| U::lit(a.as_f64())).collect())
    }
}

impl<T> Index<usize> for ParamVec<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T> IndexMut<usize> for ParamVec<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.0[i]
    }
}
