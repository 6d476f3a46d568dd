//! Real, quaternion and dual-quaternion layers with hand-derived backward
//! rules.
//!
//! Each layer records what it needs during `forward` and consumes it in
//! `backward`, so a network composes into a tape simply by calling
//! `backward` on its layers in reverse order. Parameter gradients accumulate
//! into [`Param::grad`] until [`Module::zero_grad`] is called.

mod activation;
mod dropout;
pub mod functional;
pub mod gradcheck;
mod kernel;
mod mixing;
mod norm;
mod pool;
mod tensor;
mod weight;

pub use activation::{Activation, Gtu, Pointwise};
pub use dropout::Dropout;
pub use kernel::Geometry;
pub use mixing::Mixing;
pub use norm::BatchNorm;
pub use pool::{MaxPool, PoolRounding};
pub use tensor::{DType, Real, Tensor};
pub use weight::{Algebra, DualQWeight, MixingWeight, Pathway, QWeight};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A tensor with its gradient accumulator. Non-trainable buffers (batch-norm
/// running statistics) are stored the same way with `trainable = false`.
#[derive(Clone, Debug)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub trainable: bool,
}

impl<T: Real> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            value,
            grad,
            trainable: true,
        }
    }

    pub fn buffer(value: Tensor<T>) -> Self {
        Self {
            trainable: false,
            ..Self::new(value)
        }
    }
}

pub trait Module<T: Real> {
    /// Short label used in reports and error messages.
    fn kind(&self) -> &'static str;

    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>>;

    /// Consumes the tape entry of the last `forward` call.
    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>>;

    fn params(&self) -> Vec<(String, &Param<T>)> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        Vec::new()
    }

    /// Free trainable real parameters.
    fn param_count(&self) -> usize {
        self.params()
            .iter()
            .filter(|(_, p)| p.trainable)
            .map(|(_, p)| p.value.len())
            .sum()
    }

    fn zero_grad(&mut self) {
        for (_, p) in self.params_mut() {
            p.grad.fill(T::zero());
        }
    }
}

/// Gradients produced by one backward pass through a single layer.
#[derive(Clone, Debug)]
pub struct LayerGrad<T> {
    pub input: Tensor<T>,
    pub params: Vec<(String, Tensor<T>)>,
}

/// Run `layer.backward` from freshly zeroed accumulators and collect the
/// trainable parameter gradients.
pub fn backward<T: Real, M: Module<T> + ?Sized>(
    layer: &mut M,
    upstream: &Tensor<T>,
) -> Result<LayerGrad<T>> {
    layer.zero_grad();
    let input = layer.backward(upstream)?;
    let params = layer
        .params()
        .into_iter()
        .filter(|(_, p)| p.trainable)
        .map(|(n, p)| (n, p.grad.clone()))
        .collect();
    Ok(LayerGrad { input, params })
}

pub fn param_count<T: Real, M: Module<T> + ?Sized>(layer: &M) -> usize {
    layer.param_count()
}
