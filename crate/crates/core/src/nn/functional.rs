//! Stateless forms of the layers, for callers that hold their own weights.
//!
//! Unbatched inputs are accepted where noted: `[n_in]` for fully connected
//! layers, `[t, f, c]` for 2D convolution and `[t, c]` for 1D convolution.

use super::activation::{Activation, Gtu};
use super::kernel::Geometry;
use super::mixing::Mixing;
use super::norm::BatchNorm;
use super::pool::MaxPool;
use super::tensor::{Real, Tensor};
use super::weight::{DualQWeight, MixingWeight, Pathway, QWeight};
use super::{Mode, Module};
use crate::error::{Error, Result};

fn apply_act<T: Real>(y: Tensor<T>, act: Activation) -> Tensor<T> {
    if act == Activation::Identity {
        y
    } else {
        y.map(|v| act.apply(v))
    }
}

fn run_mixing<T: Real>(
    weight: MixingWeight<T>,
    bias: Option<&[T]>,
    geom: Geometry,
    pathway: Pathway,
    x: &Tensor<T>,
    batched_rank: usize,
) -> Result<(Tensor<T>, u64)> {
    if let Some(b) = bias {
        if b.len() != weight.out_channels() {
            return Err(Error::Shape(format!(
                "bias has {} entries, layer has {} outputs",
                b.len(),
                weight.out_channels()
            )));
        }
    }
    let bias_t = bias.map(|b| Tensor::from_vec(&[b.len()], b.to_vec()).unwrap());
    let mut layer = Mixing::from_weight(weight, bias_t, geom, pathway);
    let unbatched = x.rank() + 1 == batched_rank;
    let input = if unbatched {
        let mut s = vec![1];
        s.extend_from_slice(x.shape());
        x.clone().reshape(&s)?
    } else {
        x.clone()
    };
    let y = layer.forward(&input, Mode::Eval)?;
    let y = if unbatched {
        let s = y.shape()[1..].to_vec();
        y.reshape(&s)?
    } else {
        y
    };
    Ok((y, layer.last_mults()))
}

/// `σ(W x + b)` with `W` shaped `[n_out, n_in]`.
pub fn fc_forward<T: Real>(
    w: &Tensor<T>,
    b: &[T],
    x: &Tensor<T>,
    act: Activation,
) -> Result<Tensor<T>> {
    let (y, _) = run_mixing(
        MixingWeight::real(w)?,
        Some(b),
        Geometry::POINTWISE,
        Pathway::Split,
        x,
        2,
    )?;
    Ok(apply_act(y, act))
}

/// `σ(W ⊗ x + b)` with the Hamilton-product block matrix.
pub fn qfc_forward<T: Real>(
    w: &QWeight<T>,
    b: &[T],
    x: &Tensor<T>,
    act: Activation,
) -> Result<Tensor<T>> {
    let (y, _) = run_mixing(
        MixingWeight::quaternion(w)?,
        Some(b),
        Geometry::POINTWISE,
        Pathway::Split,
        x,
        2,
    )?;
    Ok(apply_act(y, act))
}

pub fn dualqfc_forward<T: Real>(
    w: &DualQWeight<T>,
    b: &[T],
    x: &Tensor<T>,
    pathway: Pathway,
) -> Result<Tensor<T>> {
    Ok(dualqfc_forward_counted(w, b, x, pathway)?.0)
}

/// Like [`dualqfc_forward`], also returning the number of scalar
/// multiplications in the mixing loops.
pub fn dualqfc_forward_counted<T: Real>(
    w: &DualQWeight<T>,
    b: &[T],
    x: &Tensor<T>,
    pathway: Pathway,
) -> Result<(Tensor<T>, u64)> {
    run_mixing(
        MixingWeight::dual_quaternion(w)?,
        Some(b),
        Geometry::POINTWISE,
        pathway,
        x,
        2,
    )
}

/// 'Same'-padded 2D cross-correlation over `[t, f, c]` or `[n, t, f, c]`.
pub fn conv2d_forward<T: Real>(
    weights: &MixingWeight<T>,
    bias: Option<&[T]>,
    x: &Tensor<T>,
    kernel: (usize, usize),
    pathway: Pathway,
) -> Result<Tensor<T>> {
    if kernel.0 * kernel.1 != weights.taps() {
        return Err(Error::Shape(format!(
            "kernel {kernel:?} does not match {} weight taps",
            weights.taps()
        )));
    }
    let geom = Geometry {
        kt: kernel.0,
        kf: kernel.1,
        dilation: 1,
    };
    if x.rank() == 3 {
        let s: Vec<usize> = [1].iter().chain(x.shape()).copied().collect();
        let y = run_mixing(
            weights.clone(),
            bias,
            geom,
            pathway,
            &x.clone().reshape(&s)?,
            4,
        )?
        .0;
        let s = y.shape()[1..].to_vec();
        return y.reshape(&s);
    }
    Ok(run_mixing(weights.clone(), bias, geom, pathway, x, 4)?.0)
}

/// Non-causal dilated convolution over `[t, c]` or `[n, t, c]`; taps sit at
/// offsets `{−k/2·d, …, 0, …, +k/2·d}`.
pub fn dilated_conv1d_forward<T: Real>(
    weights: &MixingWeight<T>,
    bias: Option<&[T]>,
    x: &Tensor<T>,
    dilation: usize,
    pathway: Pathway,
) -> Result<Tensor<T>> {
    if dilation < 1 {
        return Err(Error::Config("dilation must be >= 1".into()));
    }
    let geom = Geometry {
        kt: weights.taps(),
        kf: 1,
        dilation,
    };
    if geom.kt.is_multiple_of(2) {
        return Err(Error::Config("dilated kernel length must be odd".into()));
    }
    Ok(run_mixing(weights.clone(), bias, geom, pathway, x, 3)?.0)
}

pub fn gtu<T: Real>(xf: &Tensor<T>, xg: &Tensor<T>) -> Result<Tensor<T>> {
    Gtu::new().gate(xf, xg)
}

/// Running statistics for [`batch_norm_forward`].
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

pub fn batch_norm_forward<T: Real>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    running: &mut RunningStats,
    mode: Mode,
) -> Result<Tensor<T>> {
    let c = x.channels();
    if gamma.len() != c || beta.len() != c || running.mean.len() != c || running.var.len() != c {
        return Err(Error::Shape(format!(
            "batch norm affine parameters must have {c} entries"
        )));
    }
    let mut bn = BatchNorm::new(c);
    bn.gamma_mut().data_mut().copy_from_slice(gamma);
    bn.beta_mut().data_mut().copy_from_slice(beta);
    for (d, s) in bn
        .running_mean_mut()
        .data_mut()
        .iter_mut()
        .zip(&running.mean)
    {
        *d = T::of_f64(*s);
    }
    for (d, s) in bn.running_var_mut().data_mut().iter_mut().zip(&running.var) {
        *d = T::of_f64(*s);
    }
    let y = bn.forward(x, mode)?;
    running.mean = bn.running_mean().to_f64_vec();
    running.var = bn.running_var().to_f64_vec();
    Ok(y)
}

/// Max pooling of the frequency axis of `[t, f, c]` or `[n, t, f, c]`.
pub fn max_pool_freq<T: Real>(x: &Tensor<T>, width: usize) -> Result<Tensor<T>> {
    let axis = match x.rank() {
        3 => 1,
        4 => 2,
        _ => {
            return Err(Error::Shape(format!(
                "expected rank 3 or 4, got {:?}",
                x.shape()
            )))
        }
    };
    MaxPool::new(axis, width, super::pool::PoolRounding::Ceil)?.forward(x, Mode::Eval)
}
