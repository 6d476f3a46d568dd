use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Param, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates of one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments<T> {
    pub name: String,
    pub m: Tensor<T>,
    pub v: Tensor<T>,
}

/// Adam over the trainable entries of a named parameter list. State is
/// created on the first step and keyed by parameter order and name.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub moments: Vec<Moments<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    fn sync(&mut self, params: &[(String, &mut Param<T>)]) -> Result<()> {
        let trainable = params.iter().filter(|(_, p)| p.trainable);
        if self.moments.is_empty() {
            self.moments = trainable
                .map(|(n, p)| Moments {
                    name: n.clone(),
                    m: Tensor::zeros(p.value.shape()),
                    v: Tensor::zeros(p.value.shape()),
                })
                .collect();
            return Ok(());
        }
        let mut count = 0;
        for ((n, p), s) in trainable.zip(&self.moments) {
            count += 1;
            if *n != s.name || p.value.shape() != s.m.shape() {
                return Err(Error::Shape(format!(
                    "optimizer state for `{}` {:?} does not fit `{n}` {:?}",
                    s.name,
                    s.m.shape(),
                    p.value.shape()
                )));
            }
        }
        if count != self.moments.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, network has {count}",
                self.moments.len()
            )));
        }
        Ok(())
    }

    /// One update from the accumulated gradients.
    pub fn update(&mut self, params: &mut [(String, &mut Param<T>)]) -> Result<()> {
        self.sync(params)?;
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powf(self.step as f64);
        let c2 = 1.0 - beta2.powf(self.step as f64);
        let trainable = params.iter_mut().filter(|(_, p)| p.trainable);
        for ((_, p), s) in trainable.zip(&mut self.moments) {
            let value = p.value.data_mut();
            let grad = p.grad.data();
            let (m, v) = (s.m.data_mut(), s.v.data_mut());
            for i in 0..value.len() {
                let g = grad[i].to_f64().unwrap_or(f64::NAN);
                let mi = beta1 * m[i].to_f64().unwrap_or(0.0) + (1.0 - beta1) * g;
                let vi = beta2 * v[i].to_f64().unwrap_or(0.0) + (1.0 - beta2) * g * g;
                m[i] = T::of_f64(mi);
                v[i] = T::of_f64(vi);
                let delta = lr * (mi / c1) / ((vi / c2).sqrt() + eps);
                value[i] = T::of_f64(value[i].to_f64().unwrap_or(f64::NAN) - delta);
            }
        }
        Ok(())
    }
}

/// Global L2 norm of the trainable gradients.
pub fn grad_norm<T: Real>(params: &[(String, &mut Param<T>)]) -> f64 {
    params
        .iter()
        .filter(|(_, p)| p.trainable)
        .flat_map(|(_, p)| p.grad.data())
        .map(|g| g.to_f64().unwrap_or(f64::NAN).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Rescales gradients so their global norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_grad_norm<T: Real>(params: &mut [(String, &mut Param<T>)], max_norm: f64) -> f64 {
    let norm = grad_norm(params);
    if norm > max_norm && norm.is_finite() {
        let s = T::of_f64(max_norm / norm);
        for (_, p) in params.iter_mut().filter(|(_, p)| p.trainable) {
            for g in p.grad.data_mut() {
                *g *= s;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Param<f64> {
        Param::new(Tensor::from_vec(&[1], vec![v]).unwrap())
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar(1.0);
        p.grad.data_mut()[0] = 0.3;
        let mut opt = Adam::new(AdamConfig::default());
        opt.update(&mut [("w".into(), &mut p)]).unwrap();
        let expect = 1.0 - 1e-4 * 0.3 / (0.3 + 1e-8);
        assert!((p.value.data()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn zero_rate_leaves_values() {
        let mut p = scalar(0.7);
        let mut opt = Adam::new(AdamConfig {
            lr: 0.0,
            ..Default::default()
        });
        for i in 0..5 {
            p.grad.data_mut()[0] = i as f64 - 2.0;
            opt.update(&mut [("w".into(), &mut p)]).unwrap();
        }
        assert_eq!(p.value.data()[0], 0.7);
    }

    #[test]
    fn buffers_are_skipped_and_state_checked() {
        let mut p = scalar(1.0);
        let mut b = Param::buffer(Tensor::from_vec(&[1], vec![2.0]).unwrap());
        b.grad.data_mut()[0] = 1.0;
        p.grad.data_mut()[0] = 1.0;
        let mut opt = Adam::new(AdamConfig::default());
        opt.update(&mut [("w".into(), &mut p), ("b".into(), &mut b)])
            .unwrap();
        assert_eq!(b.value.data()[0], 2.0);
        assert_eq!(opt.moments.len(), 1);
        assert!(opt.update(&mut [("other".into(), &mut p)]).is_err());
    }

    #[test]
    fn clipping_caps_the_norm() {
        let mut a = scalar(0.0);
        let mut b = scalar(0.0);
        a.grad.data_mut()[0] = 3.0;
        b.grad.data_mut()[0] = 4.0;
        let mut ps = [("a".to_string(), &mut a), ("b".to_string(), &mut b)];
        assert_eq!(clip_grad_norm(&mut ps, 1.0), 5.0);
        assert!((grad_norm(&ps) - 1.0).abs() < 1e-12);
    }
}
