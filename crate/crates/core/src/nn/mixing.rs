use rand::Rng;

use super::kernel::{self, Dims, Geometry};
use super::tensor::{Real, Tensor};
use super::weight::{Algebra, MixingWeight, Pathway};
use super::{Mode, Module, Param};
use crate::error::{Error, Result};

struct Tape<T> {
    input: Vec<T>,
    dims: Dims,
    in_shape: Vec<usize>,
    realized: Vec<T>,
}

/// Fully connected or convolutional layer over any [`Algebra`].
///
/// Accepts `[n, c]`, `[n, t, c]` or `[n, t, f, c]` inputs. A 2D kernel
/// (`kf > 1`) requires the rank-4 form.
pub struct Mixing<T: Real> {
    weight: MixingWeight<T>,
    bias: Option<Param<T>>,
    geom: Geometry,
    pathway: Pathway,
    tape: Option<Tape<T>>,
    last_mults: u64,
}

impl<T: Real> Mixing<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        algebra: Algebra,
        in_channels: usize,
        out_channels: usize,
        geom: Geometry,
        bias: bool,
        pathway: Pathway,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if geom.kt.is_multiple_of(2) || geom.kf.is_multiple_of(2) || geom.dilation == 0 {
            return Err(Error::Config(format!(
                "kernel must be odd with dilation >= 1, got {geom:?}"
            )));
        }
        let in_units = algebra.units(in_channels)?;
        let out_units = algebra.units(out_channels)?;
        let weight = MixingWeight::init(algebra, geom.taps(), in_units, out_units, rng);
        Ok(Self::from_weight(
            weight,
            bias.then(|| Tensor::zeros(&[out_channels])),
            geom,
            pathway,
        ))
    }

    pub fn fc(algebra: Algebra, n_in: usize, n_out: usize, rng: &mut impl Rng) -> Result<Self> {
        Self::new(
            algebra,
            n_in,
            n_out,
            Geometry::POINTWISE,
            true,
            Pathway::Split,
            rng,
        )
    }

    pub fn from_weight(
        weight: MixingWeight<T>,
        bias: Option<Tensor<T>>,
        geom: Geometry,
        pathway: Pathway,
    ) -> Self {
        Self {
            weight,
            bias: bias.map(Param::new),
            geom,
            pathway,
            tape: None,
            last_mults: 0,
        }
    }

    pub fn weight(&self) -> &MixingWeight<T> {
        &self.weight
    }

    pub fn weight_mut(&mut self) -> &mut MixingWeight<T> {
        &mut self.weight
    }

    pub fn bias(&self) -> Option<&Param<T>> {
        self.bias.as_ref()
    }

    pub fn bias_mut(&mut self) -> Option<&mut Param<T>> {
        self.bias.as_mut()
    }

    pub fn geometry(&self) -> Geometry {
        self.geom
    }

    pub fn pathway(&self) -> Pathway {
        self.pathway
    }

    pub fn set_pathway(&mut self, p: Pathway) {
        self.pathway = p;
    }

    pub fn out_channels(&self) -> usize {
        self.weight.out_channels()
    }

    pub fn in_channels(&self) -> usize {
        self.weight.in_channels()
    }

    /// Scalar multiplications performed by the most recent forward pass.
    pub fn last_mults(&self) -> u64 {
        self.last_mults
    }

    fn skip_zero_block(&self) -> bool {
        self.weight.algebra() == Algebra::DualQuaternion && self.pathway == Pathway::Split
    }

    fn dims(&self, shape: &[usize]) -> Result<Dims> {
        let cin = self.weight.in_channels();
        let cout = self.weight.out_channels();
        let (n, t, f, c) = match *shape {
            [n, c] => (n, 1, 1, c),
            [n, t, c] => (n, t, 1, c),
            [n, t, f, c] => (n, t, f, c),
            _ => {
                return Err(Error::Shape(format!(
                    "mixing layer expects rank 2-4 input, got {shape:?}"
                )))
            }
        };
        if c != cin {
            return Err(Error::Shape(format!(
                "{} layer expects {cin} input channels, got {c}",
                self.kind()
            )));
        }
        if self.geom.kf > 1 && shape.len() != 4 {
            return Err(Error::Shape(format!(
                "2D kernel needs [n, t, f, c] input, got {shape:?}"
            )));
        }
        Ok(Dims { n, t, f, cin, cout })
    }
}

impl<T: Real> Module<T> for Mixing<T> {
    fn kind(&self) -> &'static str {
        let conv2d = self.geom.kf > 1;
        let conv1d = !conv2d && self.geom.kt > 1;
        match (self.weight.algebra(), conv2d, conv1d) {
            (Algebra::Real, true, _) => "conv2d",
            (Algebra::Real, _, true) => "conv1d",
            (Algebra::Real, _, _) => "fc",
            (Algebra::Quaternion, true, _) => "q_conv2d",
            (Algebra::Quaternion, _, true) => "q_conv1d",
            (Algebra::Quaternion, _, _) => "q_fc",
            (Algebra::DualQuaternion, true, _) => "dualq_conv2d",
            (Algebra::DualQuaternion, _, true) => "dualq_conv1d",
            (Algebra::DualQuaternion, _, _) => "dualq_fc",
        }
    }

    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let dims = self.dims(x.shape())?;
        let realized = self.weight.realize();
        let bias = self.bias.as_ref().map(|b| b.value.data());
        let (y, mults) = kernel::forward(
            x.data(),
            &dims,
            &self.geom,
            &realized,
            bias,
            self.skip_zero_block(),
        );
        self.last_mults = mults;
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = dims.cout;
        self.tape = Some(Tape {
            input: x.data().to_vec(),
            dims,
            in_shape: x.shape().to_vec(),
            realized,
        });
        Tensor::from_vec(&shape, y)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let skip = self.skip_zero_block();
        let kind = self.kind();
        let tape = self
            .tape
            .as_ref()
            .ok_or_else(|| Error::NoForward(kind.into()))?;
        let d = tape.dims;
        if dy.len() != d.n * d.t * d.f * d.cout {
            return Err(Error::Shape(format!(
                "{kind} upstream gradient has {} elements, expected {}",
                dy.len(),
                d.n * d.t * d.f * d.cout
            )));
        }
        let mut dw = vec![T::zero(); tape.realized.len()];
        let dx = kernel::backward(
            &tape.input,
            dy.data(),
            &d,
            &self.geom,
            &tape.realized,
            skip,
            &mut dw,
        );
        let in_shape = tape.in_shape.clone();
        self.weight.fold_grad(&dw);
        if let Some(b) = self.bias.as_mut() {
            let g = b.grad.data_mut();
            for row in dy.data().chunks_exact(d.cout) {
                for (gv, &v) in g.iter_mut().zip(row) {
                    *gv += v;
                }
            }
        }
        Tensor::from_vec(&in_shape, dx)
    }

    fn params(&self) -> Vec<(String, &Param<T>)> {
        let mut v = self.weight.named_params();
        if let Some(b) = &self.bias {
            v.push(("bias".into(), b));
        }
        v
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut v = self.weight.named_params_mut();
        if let Some(b) = &mut self.bias {
            v.push(("bias".into(), b));
        }
        v
    }
}
