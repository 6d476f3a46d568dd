use super::tensor::{Real, Tensor};
use super::{Mode, Module, Param};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

struct Tape<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    mode: Mode,
}

/// Per-channel batch normalization over every axis but the last.
///
/// Train mode normalizes with the biased batch variance and updates
/// `running = 0.9 * running + 0.1 * batch`. Eval mode uses the running
/// statistics.
pub struct BatchNorm<T: Real> {
    gamma: Param<T>,
    beta: Param<T>,
    running_mean: Param<T>,
    running_var: Param<T>,
    tape: Option<Tape<T>>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(Tensor::full(&[channels], T::one())),
            beta: Param::new(Tensor::zeros(&[channels])),
            running_mean: Param::buffer(Tensor::zeros(&[channels])),
            running_var: Param::buffer(Tensor::full(&[channels], T::one())),
            tape: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    pub fn gamma_mut(&mut self) -> &mut Tensor<T> {
        &mut self.gamma.value
    }

    pub fn beta_mut(&mut self) -> &mut Tensor<T> {
        &mut self.beta.value
    }

    pub fn running_mean(&self) -> &Tensor<T> {
        &self.running_mean.value
    }

    pub fn running_var(&self) -> &Tensor<T> {
        &self.running_var.value
    }

    pub fn running_var_mut(&mut self) -> &mut Tensor<T> {
        &mut self.running_var.value
    }

    pub fn running_mean_mut(&mut self) -> &mut Tensor<T> {
        &mut self.running_mean.value
    }
}

impl<T: Real> Module<T> for BatchNorm<T> {
    fn kind(&self) -> &'static str {
        "batch_norm"
    }

    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let c = self.channels();
        if x.channels() != c || x.is_empty() {
            return Err(Error::Shape(format!(
                "batch norm over {c} channels got shape {:?}",
                x.shape()
            )));
        }
        let rows = x.len() / c;
        let (mean, var): (Vec<f64>, Vec<f64>) = match mode {
            Mode::Train => {
                let mut sum = vec![0.0f64; c];
                for row in x.data().chunks_exact(c) {
                    for (s, v) in sum.iter_mut().zip(row) {
                        *s += v.to_f64().unwrap();
                    }
                }
                let mean: Vec<f64> = sum.iter().map(|s| s / rows as f64).collect();
                let mut sq = vec![0.0f64; c];
                for row in x.data().chunks_exact(c) {
                    for ((s, v), m) in sq.iter_mut().zip(row).zip(&mean) {
                        let d = v.to_f64().unwrap() - m;
                        *s += d * d;
                    }
                }
                let var: Vec<f64> = sq.iter().map(|s| s / rows as f64).collect();
                let mom = BN_MOMENTUM;
                for (r, m) in self.running_mean.value.data_mut().iter_mut().zip(&mean) {
                    *r = T::of_f64(mom * r.to_f64().unwrap() + (1.0 - mom) * m);
                }
                for (r, v) in self.running_var.value.data_mut().iter_mut().zip(&var) {
                    *r = T::of_f64(mom * r.to_f64().unwrap() + (1.0 - mom) * v);
                }
                (mean, var)
            }
            Mode::Eval => (
                self.running_mean.value.to_f64_vec(),
                self.running_var.value.to_f64_vec(),
            ),
        };
        let inv_std: Vec<T> = var
            .iter()
            .map(|v| T::of_f64(1.0 / (v + BN_EPS).sqrt()))
            .collect();
        let mean: Vec<T> = mean.into_iter().map(T::of_f64).collect();
        let gamma = self.gamma.value.data();
        let beta = self.beta.value.data();
        let mut xhat = Vec::with_capacity(x.len());
        let mut y = Vec::with_capacity(x.len());
        for row in x.data().chunks_exact(c) {
            for ch in 0..c {
                let h = (row[ch] - mean[ch]) * inv_std[ch];
                xhat.push(h);
                y.push(gamma[ch] * h + beta[ch]);
            }
        }
        self.tape = Some(Tape {
            xhat,
            inv_std,
            mode,
        });
        Tensor::from_vec(x.shape(), y)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let tape = self
            .tape
            .as_ref()
            .ok_or_else(|| Error::NoForward("batch_norm".into()))?;
        let c = self.channels();
        if dy.len() != tape.xhat.len() {
            return Err(Error::Shape("batch norm upstream gradient size".into()));
        }
        let rows = dy.len() / c;
        let mut sum_dy = vec![T::zero(); c];
        let mut sum_dy_xhat = vec![T::zero(); c];
        for (g, h) in dy.data().chunks_exact(c).zip(tape.xhat.chunks_exact(c)) {
            for ch in 0..c {
                sum_dy[ch] += g[ch];
                sum_dy_xhat[ch] += g[ch] * h[ch];
            }
        }
        for ch in 0..c {
            self.gamma.grad.data_mut()[ch] += sum_dy_xhat[ch];
            self.beta.grad.data_mut()[ch] += sum_dy[ch];
        }
        let gamma = self.gamma.value.data();
        let mut dx = Vec::with_capacity(dy.len());
        match tape.mode {
            Mode::Train => {
                let r = T::from_usize(rows).unwrap();
                for (g, h) in dy.data().chunks_exact(c).zip(tape.xhat.chunks_exact(c)) {
                    for ch in 0..c {
                        let k = gamma[ch] * tape.inv_std[ch] / r;
                        dx.push(k * (r * g[ch] - sum_dy[ch] - h[ch] * sum_dy_xhat[ch]));
                    }
                }
            }
            Mode::Eval => {
                for g in dy.data().chunks_exact(c) {
                    for ch in 0..c {
                        dx.push(g[ch] * gamma[ch] * tape.inv_std[ch]);
                    }
                }
            }
        }
        Tensor::from_vec(dy.shape(), dx)
    }

    fn params(&self) -> Vec<(String, &Param<T>)> {
        vec![
            ("gamma".into(), &self.gamma),
            ("beta".into(), &self.beta),
            ("running_mean".into(), &self.running_mean),
            ("running_var".into(), &self.running_var),
        ]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        vec![
            ("gamma".into(), &mut self.gamma),
            ("beta".into(), &mut self.beta),
            ("running_mean".into(), &mut self.running_mean),
            ("running_var".into(), &mut self.running_var),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_mode_statistics() {
        let data: Vec<f64> = (0..60)
            .map(|i| ((i * 37 % 11) as f64) * 0.7 - 2.0 + (i % 3) as f64)
            .collect();
        let x = Tensor::from_vec(&[20, 3], data).unwrap();
        let mut bn = BatchNorm::new(3);
        let y = bn.forward(&x, Mode::Train).unwrap();
        for ch in 0..3 {
            let col: Vec<f64> = y.data().iter().skip(ch).step_by(3).copied().collect();
            let m = col.iter().sum::<f64>() / 20.0;
            let v = col.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 20.0;
            assert!(m.abs() < 1e-6);
            assert!((v - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn constant_channel_maps_to_beta() {
        let x = Tensor::from_vec(&[4, 1], vec![3.0f64; 4]).unwrap();
        let mut bn = BatchNorm::new(1);
        bn.beta_mut().data_mut()[0] = 0.25;
        let y = bn.forward(&x, Mode::Train).unwrap();
        assert!(y.data().iter().all(|&v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn normalized_batch_is_fixed_point() {
        let x = Tensor::from_vec(&[4, 1], vec![1.0f64, -1.0, 1.0, -1.0]).unwrap();
        let mut bn = BatchNorm::new(1);
        let y = bn.forward(&x, Mode::Train).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn eval_uses_running_stats() {
        let mut bn = BatchNorm::<f64>::new(1);
        bn.running_mean_mut().data_mut()[0] = 2.0;
        bn.running_var_mut().data_mut()[0] = 4.0;
        let x = Tensor::from_vec(&[1, 1], vec![4.0]).unwrap();
        let y = bn.forward(&x, Mode::Eval).unwrap();
        assert!((y.data()[0] - 2.0 / (4.0 + BN_EPS).sqrt()).abs() < 1e-12);
        // eval must not touch the running statistics
        assert_eq!(bn.running_mean().data()[0], 2.0);
    }

    #[test]
    fn running_stats_momentum() {
        let x = Tensor::from_vec(&[2, 1], vec![1.0f64, 3.0]).unwrap();
        let mut bn = BatchNorm::new(1);
        bn.forward(&x, Mode::Train).unwrap();
        assert!((bn.running_mean().data()[0] - 0.2).abs() < 1e-12);
        assert!((bn.running_var().data()[0] - (0.9 + 0.1)).abs() < 1e-12);
    }
}
