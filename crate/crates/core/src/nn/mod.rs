//! Layers of the segmentation network, each with an exact analytic backward.
//!
//! Every layer is available both as a pair of free functions
//! (`*_forward` / `*_backward`) and as a small stateful struct that caches
//! what its backward pass needs and accumulates parameter gradients.

mod adam;
mod batchnorm;
mod concat;
mod conv;
mod init;
mod loss;
mod pool;
mod relu;
mod tconv;

pub use adam::{AdamConfig, AdamState};
pub use batchnorm::{batchnorm_backward, batchnorm_forward, BatchNorm, BatchNormCache, BatchNormGrads, BatchNormParams};
pub use concat::{concat_backward, concat_channels};
pub use conv::{conv2d_backward, conv2d_forward, Conv2d, ConvGrads, ConvParams};
pub use init::{xavier_bound, xavier_init, xavier_uniform};
pub use loss::{softmax, softmax_weighted_ce, LossOutput};
pub use pool::{maxpool2x2_backward, maxpool2x2_forward, MaxPool2x2};
pub use relu::{relu_backward, relu_forward, Relu};
pub use tconv::{transposed_conv2x2_backward, transposed_conv2x2_forward, TransposedConv2x2, TransposedConvParams};

use crate::tensor::Real;

/// Whether batch statistics or running statistics drive batch norm.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// A learnable array and its gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Real> Param<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            value: vec![T::zero(); n],
            grad: vec![T::zero(); n],
        }
    }

    pub fn filled(shape: &[usize], v: T) -> Self {
        let mut p = Self::zeros(shape);
        p.value.fill(v);
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub(crate) fn accumulate(&mut self, g: &[T]) {
        for (a, &b) in self.grad.iter_mut().zip(g) {
            *a += b;
        }
    }
}
