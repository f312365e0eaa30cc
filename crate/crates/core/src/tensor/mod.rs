//! Dense tensors with a reverse-mode autodiff tape.
//!
//! [`Tensor`] is plain row-major storage. Differentiable computation happens
//! on a [`Graph`]: inputs and parameters are registered as leaves, every op
//! appends a node that remembers its parents, and [`Graph::backward`] walks the
//! nodes in reverse to accumulate exact gradients. Reductions accumulate in
//! `f64` regardless of the storage type.

mod adam;
mod gemm;
pub mod gradcheck;
mod graph;

use std::fmt::{Debug, Display};

use num_traits::Float;

pub use adam::{Adam, AdamConfig};
pub use graph::{Graph, Var};

use crate::error::{Error, Result};

/// Scalar storage type. Implemented for `f32` (training) and `f64`
/// (gradient checks).
pub trait Element: Float + Debug + Display + Default + Send + Sync + std::iter::Sum + 'static {
    const NAME: &'static str;
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Element for f32 {
    const NAME: &'static str = "f32";
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Element for f64 {
    const NAME: &'static str = "f64";
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

pub(crate) fn numel(dims: &[usize]) -> usize {
    dims.iter().product()
}

impl<T: Element> Tensor<T> {
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::shape("tensor", &dims, &[]));
        }
        if numel(&dims) != data.len() {
            return Err(Error::shape("tensor", &dims, &[data.len()]));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self {
            dims: dims.to_vec(),
            data: vec![T::zero(); numel(dims)],
        }
    }

    pub fn full(dims: &[usize], value: T) -> Self {
        Self {
            dims: dims.to_vec(),
            data: vec![value; numel(dims)],
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            dims: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_f64_slice(dims: &[usize], values: &[f64]) -> Result<Self> {
        Self::new(dims.to_vec(), values.iter().map(|&v| T::from_f64(v)).collect())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.data.len() != 1 {
            return Err(Error::shape("item", &self.dims, &[]));
        }
        Ok(self.data[0])
    }

    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }

    pub fn reshaped(mut self, dims: &[usize]) -> Result<Self> {
        if numel(dims) != self.data.len() {
            return Err(Error::shape("reshape", &self.dims, dims));
        }
        self.dims = dims.to_vec();
        Ok(self)
    }
}
