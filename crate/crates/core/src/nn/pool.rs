use super::tensor::{Real, Tensor};
use super::{Mode, Module};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolRounding {
    /// Pad the axis on the right with −∞ up to a multiple of the width.
    Ceil,
    /// Drop trailing elements that do not fill a window.
    Floor,
}

/// Non-overlapping max pooling along one axis.
pub struct MaxPool {
    axis: usize,
    width: usize,
    rounding: PoolRounding,
    tape: Option<(Vec<usize>, Vec<u32>)>,
}

impl MaxPool {
    pub fn new(axis: usize, width: usize, rounding: PoolRounding) -> Result<Self> {
        if width == 0 {
            return Err(Error::Config("pool width must be positive".into()));
        }
        Ok(Self {
            axis,
            width,
            rounding,
            tape: None,
        })
    }

    /// Pool the frequency axis of `[n, t, f, c]` tensors.
    pub fn freq(width: usize) -> Self {
        Self::new(2, width.max(1), PoolRounding::Ceil).unwrap()
    }

    /// Pool the time axis of `[n, t, c]` tensors, dropping the remainder.
    pub fn time(width: usize) -> Self {
        Self::new(1, width.max(1), PoolRounding::Floor).unwrap()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn out_len(&self, len: usize) -> usize {
        match self.rounding {
            PoolRounding::Ceil => len.div_ceil(self.width),
            PoolRounding::Floor => len / self.width,
        }
    }
}

impl<T: Real> Module<T> for MaxPool {
    fn kind(&self) -> &'static str {
        "max_pool"
    }

    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let shape = x.shape();
        if self.axis >= shape.len() {
            return Err(Error::Shape(format!(
                "pool axis {} out of range for {shape:?}",
                self.axis
            )));
        }
        let outer: usize = shape[..self.axis].iter().product();
        let len = shape[self.axis];
        let inner: usize = shape[self.axis + 1..].iter().product();
        let out_len = self.out_len(len);
        let mut y = Vec::with_capacity(outer * out_len * inner);
        let mut arg = Vec::with_capacity(outer * out_len * inner);
        let data = x.data();
        for o in 0..outer {
            for l in 0..out_len {
                let start = l * self.width;
                let stop = (start + self.width).min(len);
                for i in 0..inner {
                    let mut best_idx = (o * len + start) * inner + i;
                    let mut best = data[best_idx];
                    for k in start + 1..stop {
                        let idx = (o * len + k) * inner + i;
                        if data[idx] > best {
                            best = data[idx];
                            best_idx = idx;
                        }
                    }
                    y.push(best);
                    arg.push(best_idx as u32);
                }
            }
        }
        let mut out_shape = shape.to_vec();
        out_shape[self.axis] = out_len;
        self.tape = Some((shape.to_vec(), arg));
        Tensor::from_vec(&out_shape, y)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (in_shape, arg) = self
            .tape
            .as_ref()
            .ok_or_else(|| Error::NoForward("max_pool".into()))?;
        if dy.len() != arg.len() {
            return Err(Error::Shape("max pool upstream gradient size".into()));
        }
        let mut dx = Tensor::zeros(in_shape);
        let d = dx.data_mut();
        for (&g, &i) in dy.data().iter().zip(arg) {
            d[i as usize] += g;
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_one_is_identity() {
        let x = Tensor::<f64>::from_f64(&[1, 2, 3, 1], &[1., 5., 2., 0., -1., 4.]).unwrap();
        let mut p = MaxPool::freq(1);
        assert_eq!(p.forward(&x, Mode::Eval).unwrap(), x);
    }

    #[test]
    fn monotone_axis_keeps_last() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 16, 1], (0..16).map(f64::from).collect()).unwrap();
        let mut p = MaxPool::freq(8);
        assert_eq!(p.forward(&x, Mode::Eval).unwrap().data(), &[7.0, 15.0]);
    }

    #[test]
    fn ceil_pads_with_neg_infinity() {
        let x = Tensor::<f64>::from_f64(&[1, 1, 3, 1], &[-5., -6., -7.]).unwrap();
        let mut p = MaxPool::freq(2);
        assert_eq!(p.forward(&x, Mode::Eval).unwrap().data(), &[-5.0, -7.0]);
        let mut t = MaxPool::time(2);
        let x = Tensor::<f64>::from_f64(&[1, 5, 1], &[1., 2., 3., 4., 5.]).unwrap();
        assert_eq!(t.forward(&x, Mode::Eval).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn paper_frequency_pooling_sizes() {
        let mut f = 256;
        let mut sizes = vec![];
        for w in [8, 8, 2] {
            let mut p = MaxPool::freq(w);
            let x = Tensor::<f32>::zeros(&[1, 1, f, 1]);
            f = p.forward(&x, Mode::Eval).unwrap().shape()[2];
            sizes.push(f);
        }
        assert_eq!(sizes, vec![32, 4, 2]);
    }

    #[test]
    fn backward_routes_to_argmax() {
        let x = Tensor::<f64>::from_f64(&[1, 1, 4, 1], &[1., 3., 2., 0.]).unwrap();
        let mut p = MaxPool::freq(2);
        p.forward(&x, Mode::Train).unwrap();
        let dx = Module::<f64>::backward(
            &mut p,
            &Tensor::from_f64(&[1, 1, 2, 1], &[10., 20.]).unwrap(),
        )
        .unwrap();
        assert_eq!(dx.data(), &[0., 10., 20., 0.]);
    }
}
