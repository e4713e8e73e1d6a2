//! Dense row-major tensor value type.
//!
//! `Tensor` is a plain (shape, buffer) pair used for parameters, gradients
//! read back from a [`crate::graph::Graph`], and checkpoint payloads. All
//! differentiable computation happens on graph nodes, not here.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::elem::Elem;
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<E: Elem> {
    shape: Vec<usize>,
    data: Vec<E>,
}

impl<E: Elem> Tensor<E> {
    /// Builds a tensor, checking that the buffer length matches the shape
    /// product. A scalar has shape `[]` and one element.
    pub fn new(shape: Vec<usize>, data: Vec<E>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(CoreError::Contract(alloc::format!(
                "tensor shape {shape:?} implies {numel} elements, buffer has {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor { shape, data: vec![E::zero(); numel] }
    }

    pub fn full(shape: Vec<usize>, value: E) -> Self {
        let numel: usize = shape.iter().product();
        Tensor { shape, data: vec![value; numel] }
    }

    pub fn scalar(value: E) -> Self {
        Tensor { shape: Vec::new(), data: vec![value] }
    }

    /// Gaussian init with the given standard deviation; values are drawn in
    /// f64 and narrowed, so the stream is identical across precisions.
    pub fn randn<R: Rng>(shape: Vec<usize>, std_dev: f64, rng: &mut R) -> Self {
        let numel: usize = shape.iter().product();
        let normal = Normal::new(0.0f64, std_dev).expect("std_dev must be finite and positive");
        let data = (0..numel).map(|_| E::of_f64(normal.sample(rng))).collect();
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [E] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.is_empty()
    }

    /// Scalar extraction; contract error when the tensor is not scalar.
    pub fn item(&self) -> Result<E> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(CoreError::Contract(alloc::format!(
                "item() on tensor of shape {:?}",
                self.shape
            )))
        }
    }

    /// Rows × cols view of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        if self.shape.len() == 2 {
            Ok((self.shape[0], self.shape[1]))
        } else {
            Err(CoreError::Contract(alloc::format!(
                "expected rank-2 tensor, got shape {:?}",
                self.shape
            )))
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| Elem::as_f64(*v)).collect()
    }
}
