use serde::{Deserialize, Serialize};

use super::tensor::{Real, Tensor};
use super::{Mode, Module};
use crate::error::{Error, Result};

/// Split activations: applied independently to every real component, also
/// inside quaternion and dual-quaternion layers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

pub(crate) fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

impl Activation {
    pub fn apply<T: Real>(self, v: T) -> T {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.max(T::zero()),
            Activation::Tanh => v.tanh(),
            Activation::Sigmoid => sigmoid(v),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    fn derivative_from_output<T: Real>(self, y: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
            Activation::Sigmoid => y * (T::one() - y),
        }
    }
}

/// Elementwise activation layer.
pub struct Pointwise<T> {
    act: Activation,
    out: Option<Tensor<T>>,
}

impl<T: Real> Pointwise<T> {
    pub fn new(act: Activation) -> Self {
        Self { act, out: None }
    }

    pub fn activation(&self) -> Activation {
        self.act
    }
}

impl<T: Real> Module<T> for Pointwise<T> {
    fn kind(&self) -> &'static str {
        match self.act {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }

    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let act = self.act;
        let y = x.map(|v| act.apply(v));
        self.out = Some(y.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let act = self.act;
        let y = self
            .out
            .as_ref()
            .ok_or_else(|| Error::NoForward(self.kind().into()))?;
        dy.zip_map(y, |g, o| g * act.derivative_from_output(o))
    }
}

/// Gated tanh unit `tanh(x_f) ⊙ σ(x_g)`.
///
/// As a [`Module`] it takes the two operands concatenated along the channel
/// axis (`x_f` first) and returns half as many channels.
#[derive(Default)]
pub struct Gtu<T> {
    tape: Option<(Tensor<T>, Tensor<T>)>,
}

impl<T: Real> Gtu<T> {
    pub fn new() -> Self {
        Self { tape: None }
    }

    pub fn gate(&mut self, xf: &Tensor<T>, xg: &Tensor<T>) -> Result<Tensor<T>> {
        xf.expect_same_shape(xg)?;
        let tf = xf.map(|v| v.tanh());
        let sg = xg.map(sigmoid);
        let y = tf.zip_map(&sg, |a, b| a * b)?;
        self.tape = Some((tf, sg));
        Ok(y)
    }

    /// Returns `(dL/dx_f, dL/dx_g)`.
    pub fn gate_backward(&mut self, dy: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let (tf, sg) = self
            .tape
            .as_ref()
            .ok_or_else(|| Error::NoForward("gtu".into()))?;
        dy.expect_same_shape(tf)?;
        let mut dxf = Vec::with_capacity(dy.len());
        let mut dxg = Vec::with_capacity(dy.len());
        for ((&g, &t), &s) in dy.data().iter().zip(tf.data()).zip(sg.data()) {
            dxf.push(g * s * (T::one() - t * t));
            dxg.push(g * t * s * (T::one() - s));
        }
        Ok((
            Tensor::from_vec(dy.shape(), dxf)?,
            Tensor::from_vec(dy.shape(), dxg)?,
        ))
    }
}

impl<T: Real> Module<T> for Gtu<T> {
    fn kind(&self) -> &'static str {
        "gtu"
    }

    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let c = x.channels();
        if !c.is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "gtu needs an even channel count, got {c}"
            )));
        }
        let halves = x.split_channels(&[c / 2, c / 2])?;
        self.gate(&halves[0], &halves[1])
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (a, b) = self.gate_backward(dy)?;
        Tensor::concat_channels(&[&a, &b])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gtu_values() {
        let mut g = Gtu::<f64>::new();
        let z = Tensor::zeros(&[3]);
        assert!(g.gate(&z, &z).unwrap().data().iter().all(|&v| v == 0.0));
        let xf = Tensor::from_f64(&[3], &[-2.0, 0.4, 3.0]).unwrap();
        let xg = Tensor::full(&[3], 30.0);
        let y = g.gate(&xf, &xg).unwrap();
        for (a, b) in y.data().iter().zip(xf.data()) {
            assert!((a - b.tanh()).abs() < 1e-6);
        }
        let big = Tensor::from_f64(&[4], &[-50.0, -3.0, 7.0, 90.0]).unwrap();
        assert!(g
            .gate(&big, &big.map(|v| -v))
            .unwrap()
            .data()
            .iter()
            .all(|v| v.abs() <= 1.0));
        assert!(g.gate(&big, &z).is_err());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert_eq!(sigmoid(1000.0f64), 1.0);
        assert!((sigmoid(0.0f32) - 0.5).abs() < 1e-7);
    }
}
