use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{Real, Tensor};
use super::{Mode, Module};
use crate::error::{Error, Result};

/// Inverted dropout. In train mode each element (or, for spatial dropout,
/// each `(sample, channel)` pair) is kept with probability `1 − p` and scaled
/// by `1 / (1 − p)`. Eval mode is the identity.
pub struct Dropout<T> {
    p: f64,
    spatial: bool,
    rng: ChaCha8Rng,
    mask: Option<Vec<T>>,
}

impl<T: Real> Dropout<T> {
    pub fn new(p: f64, spatial: bool, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!(
                "dropout probability {p} not in [0, 1)"
            )));
        }
        Ok(Self {
            p,
            spatial,
            rng: ChaCha8Rng::seed_from_u64(seed),
            mask: None,
        })
    }

    pub fn probability(&self) -> f64 {
        self.p
    }
}

impl<T: Real> Module<T> for Dropout<T> {
    fn kind(&self) -> &'static str {
        if self.spatial {
            "spatial_dropout"
        } else {
            "dropout"
        }
    }

    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if mode == Mode::Eval || self.p == 0.0 {
            self.mask = Some(vec![T::one(); x.len()]);
            return Ok(x.clone());
        }
        let keep = 1.0 - self.p;
        let scale = T::of_f64(1.0 / keep);
        let mask: Vec<T> = if self.spatial {
            let c = x.channels();
            let n = x.shape()[0];
            let per_sample = x.len() / n.max(1);
            let channel_mask: Vec<T> = (0..n * c)
                .map(|_| {
                    if self.rng.random_bool(keep) {
                        scale
                    } else {
                        T::zero()
                    }
                })
                .collect();
            (0..x.len())
                .map(|i| channel_mask[(i / per_sample) * c + i % c])
                .collect()
        } else {
            (0..x.len())
                .map(|_| {
                    if self.rng.random_bool(keep) {
                        scale
                    } else {
                        T::zero()
                    }
                })
                .collect()
        };
        let y = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        self.mask = Some(mask);
        Tensor::from_vec(x.shape(), y)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let mask = self
            .mask
            .as_ref()
            .ok_or_else(|| Error::NoForward(self.kind().into()))?;
        if mask.len() != dy.len() {
            return Err(Error::Shape("dropout upstream gradient size".into()));
        }
        Tensor::from_vec(
            dy.shape(),
            dy.data().iter().zip(mask).map(|(&g, &m)| g * m).collect(),
        )
    }
}
