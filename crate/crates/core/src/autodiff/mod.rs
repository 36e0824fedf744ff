//! Small reverse-mode network core with explicit per-layer backward rules.
//!
//! Networks are sequential stacks of [`LayerSpec`]s. Gradients live outside
//! the network in plain tensor lists so several workers can run backward on
//! one shared parameter snapshot.

mod adam;
mod check;
mod checkpoint;
mod layers;
mod network;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use thiserror::Error;

pub use adam::{Adam, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use check::{central_differences, grad_check, max_relative_error, relative_error};
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layers::LayerSpec;
pub use network::{Cache, Network};

/// Float type the network runs in: f32 for training, f64 for verification.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static
{
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable")
    }
    fn f64(self) -> f64 {
        self.to_f64().expect("finite cast")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    Shape { expected: Vec<usize>, got: Vec<usize> },
    #[error("invalid layer {index}: {message}")]
    Layer { index: usize, message: String },
    #[error("cache was produced by different parameters")]
    StaleCache,
    #[error("checkpoint i/o: {0}")]
    Io(String),
    #[error("checkpoint format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self, AdError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(AdError::Shape { expected: shape, got: vec![data.len()] });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn vector(data: Vec<T>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|v| U::lit(v.f64())).collect() }
    }

    pub fn sum_squares(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }
}

/// Zeroed gradient buffers matching `params`.
pub fn zeros_like<T: Real>(params: &[Tensor<T>]) -> Vec<Tensor<T>> {
    params.iter().map(|p| Tensor::zeros(&p.shape)).collect()
}

/// `acc += src`, tensor by tensor.
pub fn add_into<T: Real>(acc: &mut [Tensor<T>], src: &[Tensor<T>]) {
    assert_eq!(acc.len(), src.len());
    for (a, s) in acc.iter_mut().zip(src) {
        assert_eq!(a.shape, s.shape);
        a.data.iter_mut().zip(&s.data).for_each(|(x, y)| *x += *y);
    }
}

pub fn scale<T: Real>(g: &mut [Tensor<T>], k: T) {
    g.iter_mut().for_each(|t| t.data.iter_mut().for_each(|v| *v *= k));
}

#[cfg(test)]
mod tests;
