//! Parameter sets for real, quaternion and dual-quaternion mixing layers.
//!
//! Channels are laid out component-major: a tensor with `units` hypercomplex
//! units of dimension `dim` stores component `c` of unit `u` at channel
//! `c * units + u`. For a single unit this is simply `(w, x, y, z)` for
//! quaternions and `(w, x, y, z, w_ε, x_ε, y_ε, z_ε)` for dual quaternions,
//! which is also the channel order of the two-microphone feature tensors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{Real, Tensor};
use super::Param;
use crate::error::{Error, Result};
use crate::hypercomplex::HAMILTON_BLOCKS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algebra {
    Real,
    Quaternion,
    DualQuaternion,
}

impl Algebra {
    /// Real dimension of one unit.
    pub fn dim(self) -> usize {
        match self {
            Algebra::Real => 1,
            Algebra::Quaternion => 4,
            Algebra::DualQuaternion => 8,
        }
    }

    /// Number of shared real submatrices.
    pub fn n_components(self) -> usize {
        match self {
            Algebra::Real => 1,
            Algebra::Quaternion => 4,
            Algebra::DualQuaternion => 8,
        }
    }

    fn component_names(self) -> &'static [&'static str] {
        match self {
            Algebra::Real => &["w"],
            Algebra::Quaternion => &["w_w", "w_x", "w_y", "w_z"],
            Algebra::DualQuaternion => {
                &["q_w", "q_x", "q_y", "q_z", "qe_w", "qe_x", "qe_y", "qe_z"]
            }
        }
    }

    pub fn units(self, channels: usize) -> Result<usize> {
        if channels == 0 || !channels.is_multiple_of(self.dim()) {
            return Err(Error::Shape(format!(
                "{channels} channels is not a positive multiple of {} ({self:?})",
                self.dim()
            )));
        }
        Ok(channels / self.dim())
    }
}

/// How a dual-quaternion product is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pathway {
    /// Multiply by the materialized block matrix, zero block included.
    FullMatrix,
    /// Two quaternion products per half; the zero block is never touched.
    #[default]
    Split,
}

/// One entry of the realized block matrix: real block `(out_comp, in_comp)`
/// equals `sign * component[param]`.
#[derive(Clone, Copy, Debug)]
struct Block {
    out_comp: usize,
    in_comp: usize,
    param: usize,
    sign: f64,
}

fn block_layout(algebra: Algebra) -> Vec<Block> {
    let hamilton = |out_off: usize, in_off: usize, param_off: usize, v: &mut Vec<Block>| {
        for (r, row) in HAMILTON_BLOCKS.iter().enumerate() {
            for (c, &(comp, sign)) in row.iter().enumerate() {
                v.push(Block {
                    out_comp: out_off + r,
                    in_comp: in_off + c,
                    param: param_off + comp,
                    sign,
                });
            }
        }
    };
    let mut v = Vec::new();
    match algebra {
        Algebra::Real => v.push(Block {
            out_comp: 0,
            in_comp: 0,
            param: 0,
            sign: 1.0,
        }),
        Algebra::Quaternion => hamilton(0, 0, 0, &mut v),
        Algebra::DualQuaternion => {
            // [[Q, 0], [Q_eps, Q]]
            hamilton(0, 0, 0, &mut v);
            hamilton(4, 0, 4, &mut v);
            hamilton(4, 4, 0, &mut v);
        }
    }
    v
}

/// Four real submatrices `W_W, W_X, W_Y, W_Z`, each `[taps, n_out, n_in]`
/// (or `[n_out, n_in]` for a fully connected layer).
#[derive(Clone, Debug)]
pub struct QWeight<T> {
    pub w: Tensor<T>,
    pub x: Tensor<T>,
    pub y: Tensor<T>,
    pub z: Tensor<T>,
}

impl<T: Real> QWeight<T> {
    /// Weight whose product is the identity on every unit (`W_W = I`).
    pub fn identity(units: usize) -> Self {
        let mut w = Tensor::zeros(&[units, units]);
        for i in 0..units {
            w.data_mut()[i * units + i] = T::one();
        }
        let z = Tensor::zeros(&[units, units]);
        Self {
            w,
            x: z.clone(),
            y: z.clone(),
            z,
        }
    }

    pub fn zeros(out_units: usize, in_units: usize) -> Self {
        let z = Tensor::zeros(&[out_units, in_units]);
        Self {
            w: z.clone(),
            x: z.clone(),
            y: z.clone(),
            z,
        }
    }

    /// A single-unit weight encoding the quaternion `(w, x, y, z)`.
    pub fn from_quaternion(q: [f64; 4]) -> Self {
        let s = |v: f64| Tensor::from_f64(&[1, 1], &[v]).unwrap();
        Self {
            w: s(q[0]),
            x: s(q[1]),
            y: s(q[2]),
            z: s(q[3]),
        }
    }

    fn parts(&self) -> [&Tensor<T>; 4] {
        [&self.w, &self.x, &self.y, &self.z]
    }
}

#[derive(Clone, Debug)]
pub struct DualQWeight<T> {
    pub q: QWeight<T>,
    pub q_eps: QWeight<T>,
}

impl<T: Real> DualQWeight<T> {
    pub fn identity(units: usize) -> Self {
        Self {
            q: QWeight::identity(units),
            q_eps: QWeight::zeros(units, units),
        }
    }
}

fn as_taps(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [o, i] => Ok((1, o, i)),
        [k, o, i] => Ok((k, o, i)),
        ref s => Err(Error::Shape(format!(
            "weight component must be rank 2 or 3, got {s:?}"
        ))),
    }
}

/// Shared real submatrices of a mixing layer together with the rule that
/// assembles them into a real `[taps, c_in, c_out]` matrix.
#[derive(Clone, Debug)]
pub struct MixingWeight<T> {
    algebra: Algebra,
    taps: usize,
    in_units: usize,
    out_units: usize,
    components: Vec<Param<T>>,
}

impl<T: Real> MixingWeight<T> {
    pub fn zeros(algebra: Algebra, taps: usize, in_units: usize, out_units: usize) -> Self {
        let components = (0..algebra.n_components())
            .map(|_| Param::new(Tensor::zeros(&[taps, out_units, in_units])))
            .collect();
        Self {
            algebra,
            taps,
            in_units,
            out_units,
            components,
        }
    }

    /// Uniform init with bound `sqrt(3 / fan_in)`, where `fan_in` counts real
    /// inputs (taps × units × algebra dimension).
    pub fn init(
        algebra: Algebra,
        taps: usize,
        in_units: usize,
        out_units: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let mut w = Self::zeros(algebra, taps, in_units, out_units);
        let fan_in = (taps * in_units * algebra.dim()) as f64;
        let bound = (3.0 / fan_in).sqrt();
        for p in &mut w.components {
            for v in p.value.data_mut() {
                *v = T::of_f64(rng.random_range(-bound..bound));
            }
        }
        w
    }

    fn from_components(algebra: Algebra, parts: &[&Tensor<T>]) -> Result<Self> {
        let (taps, out_units, in_units) = as_taps(parts[0].shape())?;
        let mut components = Vec::with_capacity(parts.len());
        for p in parts {
            if as_taps(p.shape())? != (taps, out_units, in_units) {
                return Err(Error::Shape(format!(
                    "weight components disagree: {:?} vs {:?}",
                    p.shape(),
                    parts[0].shape()
                )));
            }
            let v = (*p).clone().reshape(&[taps, out_units, in_units])?;
            components.push(Param::new(v));
        }
        Ok(Self {
            algebra,
            taps,
            in_units,
            out_units,
            components,
        })
    }

    /// Real weight `[n_out, n_in]` or `[taps, n_out, n_in]`.
    pub fn real(w: &Tensor<T>) -> Result<Self> {
        Self::from_components(Algebra::Real, &[w])
    }

    pub fn quaternion(w: &QWeight<T>) -> Result<Self> {
        Self::from_components(Algebra::Quaternion, &w.parts())
    }

    pub fn dual_quaternion(w: &DualQWeight<T>) -> Result<Self> {
        let mut parts = w.q.parts().to_vec();
        parts.extend(w.q_eps.parts());
        Self::from_components(Algebra::DualQuaternion, &parts)
    }

    pub fn algebra(&self) -> Algebra {
        self.algebra
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    pub fn in_channels(&self) -> usize {
        self.in_units * self.algebra.dim()
    }

    pub fn out_channels(&self) -> usize {
        self.out_units * self.algebra.dim()
    }

    /// Free real parameters; shared submatrices are counted once.
    pub fn param_count(&self) -> usize {
        self.components.iter().map(|p| p.value.len()).sum()
    }

    pub fn components(&self) -> &[Param<T>] {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut [Param<T>] {
        &mut self.components
    }

    pub(crate) fn named_params(&self) -> Vec<(String, &Param<T>)> {
        self.algebra
            .component_names()
            .iter()
            .map(|n| n.to_string())
            .zip(&self.components)
            .collect()
    }

    pub(crate) fn named_params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        self.algebra
            .component_names()
            .iter()
            .map(|n| n.to_string())
            .zip(self.components.iter_mut())
            .collect()
    }

    /// Assemble the real `[taps, c_in, c_out]` matrix. For dual quaternions
    /// the (primal-out, dual-in) block is left at zero.
    pub fn realize(&self) -> Vec<T> {
        let (m, n) = (self.in_units, self.out_units);
        let (cin, cout) = (self.in_channels(), self.out_channels());
        let mut out = vec![T::zero(); self.taps * cin * cout];
        for b in block_layout(self.algebra) {
            let src = self.components[b.param].value.data();
            let sign = T::of_f64(b.sign);
            for tap in 0..self.taps {
                for o in 0..n {
                    let co = b.out_comp * n + o;
                    for i in 0..m {
                        let ci = b.in_comp * m + i;
                        out[(tap * cin + ci) * cout + co] = sign * src[(tap * n + o) * m + i];
                    }
                }
            }
        }
        out
    }

    /// Realized fully connected matrix in `[n_out, n_in]` orientation
    /// (first tap only).
    pub fn realized_fc_matrix(&self) -> Tensor<T> {
        let (cin, cout) = (self.in_channels(), self.out_channels());
        let r = self.realize();
        let mut out = Tensor::zeros(&[cout, cin]);
        for ci in 0..cin {
            for co in 0..cout {
                out.data_mut()[co * cin + ci] = r[ci * cout + co];
            }
        }
        out
    }

    /// Accumulate the gradient with respect to the realized matrix into the
    /// shared components. Entries of the structural zero block are ignored.
    pub fn fold_grad(&mut self, realized_grad: &[T]) {
        let (m, n) = (self.in_units, self.out_units);
        let (cin, cout) = (self.in_channels(), self.out_channels());
        for b in block_layout(self.algebra) {
            let sign = T::of_f64(b.sign);
            let dst = self.components[b.param].grad.data_mut();
            for tap in 0..self.taps {
                for o in 0..n {
                    let co = b.out_comp * n + o;
                    for i in 0..m {
                        let ci = b.in_comp * m + i;
                        dst[(tap * n + o) * m + i] +=
                            sign * realized_grad[(tap * cin + ci) * cout + co];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dual_block_upper_right_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = MixingWeight::<f64>::init(Algebra::DualQuaternion, 2, 3, 2, &mut rng);
        let r = w.realize();
        let (cin, cout) = (w.in_channels(), w.out_channels());
        for tap in 0..2 {
            for ci in cin / 2..cin {
                for co in 0..cout / 2 {
                    assert_eq!(r[(tap * cin + ci) * cout + co], 0.0);
                }
            }
        }
    }

    #[test]
    fn parameter_counts_share_submatrices() {
        let real = MixingWeight::<f32>::zeros(Algebra::Real, 1, 64, 64);
        let quat = MixingWeight::<f32>::zeros(Algebra::Quaternion, 1, 16, 16);
        let dual = MixingWeight::<f32>::zeros(Algebra::DualQuaternion, 1, 8, 8);
        assert_eq!(real.param_count(), 4096);
        assert_eq!(quat.param_count(), 1024);
        assert_eq!(dual.param_count(), 512);
        assert_eq!(quat.in_channels(), 64);
        assert_eq!(dual.out_channels(), 64);
    }

    #[test]
    fn fold_is_adjoint_of_realize() {
        // <realize(w), g> == <w, fold(g)> because realize is linear
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for algebra in [Algebra::Real, Algebra::Quaternion, Algebra::DualQuaternion] {
            let mut w = MixingWeight::<f64>::init(algebra, 3, 2, 3, &mut rng);
            let g: Vec<f64> = (0..w.realize().len())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let lhs: f64 = w.realize().iter().zip(&g).map(|(a, b)| a * b).sum();
            w.fold_grad(&g);
            let rhs: f64 = w
                .components()
                .iter()
                .map(|p| {
                    p.value
                        .data()
                        .iter()
                        .zip(p.grad.data())
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                })
                .sum();
            assert!((lhs - rhs).abs() < 1e-12, "{algebra:?}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn channel_divisibility() {
        assert!(Algebra::Quaternion.units(6).is_err());
        assert!(Algebra::DualQuaternion.units(12).is_err());
        assert_eq!(Algebra::DualQuaternion.units(16).unwrap(), 2);
    }
}
