use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{ModelConfig, ModelKind};
use crate::ambisonics::N_BINS;
use crate::error::{Error, Result};
use crate::nn::{
    Activation, Algebra, BatchNorm, Dropout, Geometry, Gtu, MaxPool, Mixing, Mode, Module, Param,
    Pointwise, Real, Tensor,
};

/// Network outputs: SED probabilities `[B, n, 42]` and DOA coordinates
/// `[B, n, 126]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeldOutput<T> {
    pub sed: Tensor<T>,
    pub doa: Tensor<T>,
}

impl<T: Real> SeldOutput<T> {
    pub fn batch(&self) -> usize {
        self.sed.shape()[0]
    }

    pub fn frames(&self) -> usize {
        self.sed.shape()[1]
    }

    /// Rows of example `b` as `([n, 42], [n, 126])`.
    pub fn example(&self, b: usize) -> (Tensor<T>, Tensor<T>) {
        let take = |t: &Tensor<T>| {
            let (n, w) = (t.shape()[1], t.shape()[2]);
            Tensor::from_vec(&[n, w], t.data()[b * n * w..(b + 1) * n * w].to_vec()).unwrap()
        };
        (take(&self.sed), take(&self.doa))
    }
}

type Named<'a, T> = Vec<(String, &'a Param<T>)>;
type NamedMut<'a, T> = Vec<(String, &'a mut Param<T>)>;

fn named<'a, T: Real>(out: &mut Named<'a, T>, prefix: &str, m: &'a dyn Module<T>) {
    out.extend(
        m.params()
            .into_iter()
            .map(|(n, p)| (format!("{prefix}.{n}"), p)),
    );
}

fn named_mut<'a, T: Real>(out: &mut NamedMut<'a, T>, prefix: &str, m: &'a mut dyn Module<T>) {
    out.extend(
        m.params_mut()
            .into_iter()
            .map(|(n, p)| (format!("{prefix}.{n}"), p)),
    );
}

/// One row of the structure report.
#[derive(Clone, Debug, Serialize)]
pub struct LayerInfo {
    pub name: String,
    pub kind: &'static str,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 2],
    pub dilation: usize,
    pub params: usize,
}

fn mixing_info<T: Real>(name: String, m: &Mixing<T>) -> LayerInfo {
    let g = m.geometry();
    LayerInfo {
        name,
        kind: m.kind(),
        in_channels: m.in_channels(),
        out_channels: m.out_channels(),
        kernel: [g.kt, g.kf],
        dilation: g.dilation,
        params: m.param_count(),
    }
}

fn bn_info<T: Real>(name: String, b: &BatchNorm<T>) -> LayerInfo {
    LayerInfo {
        name,
        kind: "batch_norm",
        in_channels: b.channels(),
        out_channels: b.channels(),
        kernel: [1, 1],
        dilation: 1,
        params: b.param_count(),
    }
}

struct Seeds(u64);

impl Seeds {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        self.0
    }
}

struct ConvBlock<T: Real> {
    conv: Mixing<T>,
    bn: BatchNorm<T>,
    relu: Pointwise<T>,
    pool: MaxPool,
    drop: Dropout<T>,
}

impl<T: Real> ConvBlock<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let h = self.conv.forward(x, mode)?;
        let h = self.bn.forward(&h, mode)?;
        let h = self.relu.forward(&h, mode)?;
        let h = self.pool.forward(&h, mode)?;
        self.drop.forward(&h, mode)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let d = self.drop.backward(dy)?;
        let d = Module::<T>::backward(&mut self.pool, &d)?;
        let d = self.relu.backward(&d)?;
        let d = self.bn.backward(&d)?;
        self.conv.backward(&d)
    }
}

struct ResBlock<T: Real> {
    filter: Mixing<T>,
    filter_bn: BatchNorm<T>,
    gate: Mixing<T>,
    gate_bn: BatchNorm<T>,
    gtu: Gtu<T>,
    drop: Dropout<T>,
    skip: Mixing<T>,
    /// Absent in the last block, whose residual output has no consumer.
    residual: Option<Mixing<T>>,
}

impl<T: Real> ResBlock<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, Option<Tensor<T>>)> {
        let f = self.filter.forward(x, mode)?;
        let f = self.filter_bn.forward(&f, mode)?;
        let g = self.gate.forward(x, mode)?;
        let g = self.gate_bn.forward(&g, mode)?;
        let z = self.gtu.gate(&f, &g)?;
        let z = self.drop.forward(&z, mode)?;
        let s = self.skip.forward(&z, mode)?;
        let r = match &mut self.residual {
            Some(m) => Some(m.forward(&z, mode)?),
            None => None,
        };
        Ok((s, r))
    }

    /// Gradient with respect to the block input through the gated branch.
    fn backward(&mut self, d_skip: &Tensor<T>, d_res: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        let mut dz = self.skip.backward(d_skip)?;
        if let (Some(m), Some(d)) = (&mut self.residual, d_res) {
            dz.add_assign(&m.backward(d)?)?;
        }
        let dz = self.drop.backward(&dz)?;
        let (df, dg) = self.gtu.gate_backward(&dz)?;
        let df = self.filter_bn.backward(&df)?;
        let mut dx = self.filter.backward(&df)?;
        let dg = self.gate_bn.backward(&dg)?;
        dx.add_assign(&self.gate.backward(&dg)?)?;
        Ok(dx)
    }
}

/// One Conv-TC stack: three 2D convolution blocks, frequency stacked into
/// channels, dilated residual blocks, and the two output convolutions.
struct Stack<T: Real> {
    input_map: Vec<usize>,
    convs: Vec<ConvBlock<T>>,
    /// Component-major reorder of `(bin, channel)` pairs after stacking.
    stack_map: Vec<usize>,
    blocks: Vec<ResBlock<T>>,
    skip_relu: Pointwise<T>,
    out_a: Mixing<T>,
    relu_a: Pointwise<T>,
    pool_a: MaxPool,
    out_b: Mixing<T>,
    tanh_b: Pointwise<T>,
    pool_b: MaxPool,
    shapes: Option<(Vec<usize>, Vec<usize>)>,
}

impl<T: Real> Stack<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut h = x.gather_channels(&self.input_map)?;
        for c in &mut self.convs {
            h = c.forward(&h, mode)?;
        }
        let conv_shape = h.shape().to_vec();
        let (b, t, f, p) = (conv_shape[0], conv_shape[1], conv_shape[2], conv_shape[3]);
        let mut res = h
            .reshape(&[b, t, f * p])?
            .gather_channels(&self.stack_map)?;
        let in_channels = res.channels();
        let mut skip_sum: Option<Tensor<T>> = None;
        for blk in &mut self.blocks {
            let (s, r) = blk.forward(&res, mode)?;
            match &mut skip_sum {
                Some(acc) => acc.add_assign(&s)?,
                None => skip_sum = Some(s),
            }
            if let Some(r) = r {
                res.add_assign(&r)?;
            }
        }
        self.shapes = Some((conv_shape, vec![b, t, in_channels]));
        let h = self.skip_relu.forward(&skip_sum.unwrap(), mode)?;
        let h = self.out_a.forward(&h, mode)?;
        let h = self.relu_a.forward(&h, mode)?;
        let h = self.pool_a.forward(&h, mode)?;
        let h = self.out_b.forward(&h, mode)?;
        let h = self.tanh_b.forward(&h, mode)?;
        self.pool_b.forward(&h, mode)
    }

    fn backward(&mut self, dy: &Tensor<T>, n_input_channels: usize) -> Result<Tensor<T>> {
        let (conv_shape, tc_shape) = self
            .shapes
            .clone()
            .ok_or_else(|| Error::NoForward("stack".into()))?;
        let d = Module::<T>::backward(&mut self.pool_b, dy)?;
        let d = self.tanh_b.backward(&d)?;
        let d = self.out_b.backward(&d)?;
        let d = Module::<T>::backward(&mut self.pool_a, &d)?;
        let d = self.relu_a.backward(&d)?;
        let d = self.out_a.backward(&d)?;
        let d_skip = self.skip_relu.backward(&d)?;
        // gradient of the loss with respect to the residual stream entering
        // each block, walked from the last block back to the first
        let mut d_res = Tensor::zeros(&tc_shape);
        let n = self.blocks.len();
        for (i, blk) in self.blocks.iter_mut().enumerate().rev() {
            let carried = (i + 1 < n).then_some(&d_res);
            let dx = blk.backward(&d_skip, carried)?;
            d_res.add_assign(&dx)?;
        }
        let mut d = d_res
            .scatter_channels(&self.stack_map, tc_shape[2])?
            .reshape(&conv_shape)?;
        for c in self.convs.iter_mut().rev() {
            d = c.backward(&d)?;
        }
        d.scatter_channels(&self.input_map, n_input_channels)
    }

    fn params<'a>(&'a self, prefix: &str, out: &mut Named<'a, T>) {
        for (i, c) in self.convs.iter().enumerate() {
            named(out, &format!("{prefix}.conv{i}"), &c.conv);
            named(out, &format!("{prefix}.conv{i}_bn"), &c.bn);
        }
        for (i, b) in self.blocks.iter().enumerate() {
            named(out, &format!("{prefix}.block{i}.filter"), &b.filter);
            named(out, &format!("{prefix}.block{i}.filter_bn"), &b.filter_bn);
            named(out, &format!("{prefix}.block{i}.gate"), &b.gate);
            named(out, &format!("{prefix}.block{i}.gate_bn"), &b.gate_bn);
            named(out, &format!("{prefix}.block{i}.skip"), &b.skip);
            if let Some(r) = &b.residual {
                named(out, &format!("{prefix}.block{i}.residual"), r);
            }
        }
        named(out, &format!("{prefix}.out_a"), &self.out_a);
        named(out, &format!("{prefix}.out_b"), &self.out_b);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut NamedMut<'a, T>) {
        for (i, c) in self.convs.iter_mut().enumerate() {
            named_mut(out, &format!("{prefix}.conv{i}"), &mut c.conv);
            named_mut(out, &format!("{prefix}.conv{i}_bn"), &mut c.bn);
        }
        for (i, b) in self.blocks.iter_mut().enumerate() {
            named_mut(out, &format!("{prefix}.block{i}.filter"), &mut b.filter);
            named_mut(
                out,
                &format!("{prefix}.block{i}.filter_bn"),
                &mut b.filter_bn,
            );
            named_mut(out, &format!("{prefix}.block{i}.gate"), &mut b.gate);
            named_mut(out, &format!("{prefix}.block{i}.gate_bn"), &mut b.gate_bn);
            named_mut(out, &format!("{prefix}.block{i}.skip"), &mut b.skip);
            if let Some(r) = &mut b.residual {
                named_mut(out, &format!("{prefix}.block{i}.residual"), r);
            }
        }
        named_mut(out, &format!("{prefix}.out_a"), &mut self.out_a);
        named_mut(out, &format!("{prefix}.out_b"), &mut self.out_b);
    }

    fn layers(&self, prefix: &str, out: &mut Vec<LayerInfo>) {
        for (i, c) in self.convs.iter().enumerate() {
            out.push(mixing_info(format!("{prefix}.conv{i}"), &c.conv));
            out.push(bn_info(format!("{prefix}.conv{i}_bn"), &c.bn));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            out.push(mixing_info(format!("{prefix}.block{i}.filter"), &b.filter));
            out.push(bn_info(
                format!("{prefix}.block{i}.filter_bn"),
                &b.filter_bn,
            ));
            out.push(mixing_info(format!("{prefix}.block{i}.gate"), &b.gate));
            out.push(bn_info(format!("{prefix}.block{i}.gate_bn"), &b.gate_bn));
            out.push(mixing_info(format!("{prefix}.block{i}.skip"), &b.skip));
            if let Some(r) = &b.residual {
                out.push(mixing_info(format!("{prefix}.block{i}.residual"), r));
            }
        }
        out.push(mixing_info(format!("{prefix}.out_a"), &self.out_a));
        out.push(mixing_info(format!("{prefix}.out_b"), &self.out_b));
    }
}

struct Head<T: Real> {
    hidden: Mixing<T>,
    relu: Pointwise<T>,
    drop: Dropout<T>,
    out: Mixing<T>,
}

impl<T: Real> Head<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let h = self.hidden.forward(x, mode)?;
        let h = self.relu.forward(&h, mode)?;
        let h = self.drop.forward(&h, mode)?;
        self.out.forward(&h, mode)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let d = self.out.backward(dy)?;
        let d = self.drop.backward(&d)?;
        let d = self.relu.backward(&d)?;
        self.hidden.backward(&d)
    }
}

/// Comp-major channel index: component `comp` of unit `u` out of `units`.
fn cm(comp: usize, u: usize, units: usize) -> usize {
    comp * units + u
}

/// For each stack, the input channels it reads, listed in the
/// component-major order its first layer expects.
fn input_maps(config: &ModelConfig) -> Vec<Vec<usize>> {
    let phase = config.include_phase;
    match config.kind {
        ModelKind::Real => vec![(0..config.input_channels()).collect()],
        ModelKind::Dualq if !phase => vec![(0..8).collect()],
        // unit 0 = magnitudes, unit 1 = phases
        ModelKind::Dualq => vec![interleave(&[(0..8).collect(), (8..16).collect()])],
        ModelKind::DualqParallel => vec![(0..8).collect(), (8..16).collect()],
        ModelKind::Quaternion if !phase => vec![(0..4).collect(), (4..8).collect()],
        ModelKind::Quaternion => vec![
            interleave(&[(0..4).collect(), (8..12).collect()]),
            interleave(&[(4..8).collect(), (12..16).collect()]),
        ],
    }
}

/// Component-major layout of several units given as component lists.
fn interleave(units: &[Vec<usize>]) -> Vec<usize> {
    let comps = units[0].len();
    let mut out = vec![0; comps * units.len()];
    for (u, unit) in units.iter().enumerate() {
        for (c, &ch) in unit.iter().enumerate() {
            out[cm(c, u, units.len())] = ch;
        }
    }
    out
}

/// Reorders `[bin][channel]` flattening into component-major units of the
/// stacked axis.
fn stacking_map(bins: usize, channels: usize, algebra: Algebra) -> Vec<usize> {
    let comps = algebra.n_components();
    let units = channels / comps;
    let mut map = vec![0; bins * channels];
    for f in 0..bins {
        for comp in 0..comps {
            for u in 0..units {
                map[cm(comp, f * units + u, bins * units)] = f * channels + cm(comp, u, units);
            }
        }
    }
    map
}

/// The assembled network with its parameter registry.
pub struct Network<T: Real> {
    config: ModelConfig,
    stacks: Vec<Stack<T>>,
    sed: Head<T>,
    doa: Head<T>,
    sed_act: Pointwise<T>,
    stack_widths: Vec<usize>,
}

/// Constructs a network with weights drawn from `seed`.
pub fn build<T: Real>(config: &ModelConfig, seed: u64) -> Result<Network<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seeds = Seeds(seed);
    let algebra = config.kind.algebra();
    let pathway = config.pathway;
    let conv2d = Geometry {
        kt: 3,
        kf: 3,
        dilation: 1,
    };
    let [pool_a, pool_b] = config.time_pooling();
    let mut stacks = Vec::new();
    for map in input_maps(config) {
        let mut convs = Vec::new();
        let mut cin = map.len();
        for &w in &config.conv_pooling {
            convs.push(ConvBlock {
                conv: Mixing::new(
                    algebra,
                    cin,
                    config.conv_filters,
                    conv2d,
                    false,
                    pathway,
                    &mut rng,
                )?,
                bn: BatchNorm::new(config.conv_filters),
                relu: Pointwise::new(Activation::Relu),
                pool: MaxPool::freq(w),
                drop: Dropout::new(config.conv_dropout, false, seeds.next())?,
            });
            cin = config.conv_filters;
        }
        let tc_in = config.tc_input_channels();
        let mut blocks = Vec::new();
        for (i, &d) in config.dilations.iter().enumerate() {
            let geom = Geometry {
                kt: config.tc_kernel,
                kf: 1,
                dilation: d,
            };
            let last = i + 1 == config.dilations.len();
            blocks.push(ResBlock {
                filter: Mixing::new(
                    algebra,
                    tc_in,
                    config.tc_filters,
                    geom,
                    false,
                    pathway,
                    &mut rng,
                )?,
                filter_bn: BatchNorm::new(config.tc_filters),
                gate: Mixing::new(
                    algebra,
                    tc_in,
                    config.tc_filters,
                    geom,
                    false,
                    pathway,
                    &mut rng,
                )?,
                gate_bn: BatchNorm::new(config.tc_filters),
                gtu: Gtu::new(),
                drop: Dropout::new(config.spatial_dropout, true, seeds.next())?,
                skip: Mixing::new(
                    algebra,
                    config.tc_filters,
                    config.skip_filters,
                    Geometry::POINTWISE,
                    true,
                    pathway,
                    &mut rng,
                )?,
                residual: if last {
                    None
                } else {
                    Some(Mixing::new(
                        algebra,
                        config.tc_filters,
                        config.residual_filters,
                        Geometry::POINTWISE,
                        true,
                        pathway,
                        &mut rng,
                    )?)
                },
            });
        }
        let out_geom = Geometry {
            kt: config.tc_kernel,
            kf: 1,
            dilation: 1,
        };
        stacks.push(Stack {
            input_map: map,
            convs,
            stack_map: stacking_map(config.pooled_bins(), config.conv_filters, algebra),
            blocks,
            skip_relu: Pointwise::new(Activation::Relu),
            out_a: Mixing::new(
                algebra,
                config.skip_filters,
                config.final_filters,
                out_geom,
                true,
                pathway,
                &mut rng,
            )?,
            relu_a: Pointwise::new(Activation::Relu),
            pool_a: MaxPool::time(pool_a),
            out_b: Mixing::new(
                algebra,
                config.final_filters,
                config.final_filters,
                out_geom,
                true,
                pathway,
                &mut rng,
            )?,
            tanh_b: Pointwise::new(Activation::Tanh),
            pool_b: MaxPool::time(pool_b),
            shapes: None,
        });
    }
    let stack_widths = vec![config.final_filters; stacks.len()];
    let head_in: usize = stack_widths.iter().sum();
    let head_algebra = config.kind.head_algebra();
    let sed_width = config.n_class * config.n_overlap;
    let head = |n_out: usize, rng: &mut ChaCha8Rng, seeds: &mut Seeds| -> Result<Head<T>> {
        Ok(Head {
            hidden: Mixing::new(
                head_algebra,
                head_in,
                config.head_width,
                Geometry::POINTWISE,
                true,
                pathway,
                rng,
            )?,
            relu: Pointwise::new(Activation::Relu),
            drop: Dropout::new(config.head_dropout, false, seeds.next())?,
            out: Mixing::fc(Algebra::Real, config.head_width, n_out, rng)?,
        })
    };
    let sed = head(sed_width, &mut rng, &mut seeds)?;
    let doa = head(sed_width * 3, &mut rng, &mut seeds)?;
    Ok(Network {
        config: config.clone(),
        stacks,
        sed,
        doa,
        sed_act: Pointwise::new(Activation::Sigmoid),
        stack_widths,
    })
}

impl<T: Real> Network<T> {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let want = self.config.input_channels();
        let s = x.shape();
        if s.len() != 4 || s[2] != N_BINS || s[3] != want {
            return Err(Error::Shape(format!(
                "{} model expects [batch, frames, {N_BINS}, {want}] input, got {s:?}",
                self.config.kind.name()
            )));
        }
        let [a, b] = self.config.time_pooling();
        if s[1] < a * b {
            return Err(Error::Shape(format!(
                "{} frames is fewer than the temporal pooling factor {}",
                s[1],
                a * b
            )));
        }
        Ok(())
    }

    /// Features `[B, T, 256, C]` to SED probabilities and DOA coordinates.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<SeldOutput<T>> {
        self.check_input(x)?;
        let mut outs = Vec::with_capacity(self.stacks.len());
        for s in &mut self.stacks {
            outs.push(s.forward(x, mode)?);
        }
        let h = if outs.len() == 1 {
            outs.pop().unwrap()
        } else {
            Tensor::concat_channels(&outs.iter().collect::<Vec<_>>())?
        };
        let logits = self.sed.forward(&h, mode)?;
        let sed = self.sed_act.forward(&logits, mode)?;
        let doa = self.doa.forward(&h, mode)?;
        Ok(SeldOutput { sed, doa })
    }

    /// Backpropagate from gradients with respect to the SED logits (before
    /// the sigmoid) and the DOA outputs. Returns the input gradient.
    /// Parameter gradients accumulate; call [`Network::zero_grad`] first.
    pub fn backward(&mut self, d_sed_logits: &Tensor<T>, d_doa: &Tensor<T>) -> Result<Tensor<T>> {
        let mut dh = self.sed.backward(d_sed_logits)?;
        dh.add_assign(&self.doa.backward(d_doa)?)?;
        let parts = if self.stacks.len() == 1 {
            vec![dh]
        } else {
            dh.split_channels(&self.stack_widths)?
        };
        let c = self.config.input_channels();
        let mut dx: Option<Tensor<T>> = None;
        for (s, d) in self.stacks.iter_mut().zip(&parts) {
            let g = s.backward(d, c)?;
            match &mut dx {
                Some(acc) => acc.add_assign(&g)?,
                None => dx = Some(g),
            }
        }
        Ok(dx.unwrap())
    }

    /// Every parameter and buffer, uniquely named.
    pub fn params(&self) -> Vec<(String, &Param<T>)> {
        let mut out = Vec::new();
        for (i, s) in self.stacks.iter().enumerate() {
            s.params(&format!("stack{i}"), &mut out);
        }
        named(&mut out, "sed.hidden", &self.sed.hidden);
        named(&mut out, "sed.out", &self.sed.out);
        named(&mut out, "doa.hidden", &self.doa.hidden);
        named(&mut out, "doa.out", &self.doa.out);
        out
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out = Vec::new();
        for (i, s) in self.stacks.iter_mut().enumerate() {
            s.params_mut(&format!("stack{i}"), &mut out);
        }
        named_mut(&mut out, "sed.hidden", &mut self.sed.hidden);
        named_mut(&mut out, "sed.out", &mut self.sed.out);
        named_mut(&mut out, "doa.hidden", &mut self.doa.hidden);
        named_mut(&mut out, "doa.out", &mut self.doa.out);
        out
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.params_mut() {
            p.grad.fill(T::zero());
        }
    }

    /// Trainable scalar parameters.
    pub fn param_count(&self) -> usize {
        self.params()
            .iter()
            .filter(|(_, p)| p.trainable)
            .map(|(_, p)| p.value.len())
            .sum()
    }

    pub fn layers(&self) -> Vec<LayerInfo> {
        let mut out = Vec::new();
        for (i, s) in self.stacks.iter().enumerate() {
            s.layers(&format!("stack{i}"), &mut out);
        }
        out.push(mixing_info("sed.hidden".into(), &self.sed.hidden));
        out.push(mixing_info("sed.out".into(), &self.sed.out));
        out.push(mixing_info("doa.hidden".into(), &self.doa.hidden));
        out.push(mixing_info("doa.out".into(), &self.doa.out));
        out
    }

    /// Weight entries of the FC and convolution layers (no biases or
    /// normalization).
    pub fn mixing_weight_count(&self) -> usize {
        self.params()
            .iter()
            .filter(|(n, p)| p.trainable && !n.ends_with(".bias") && !n.contains("_bn."))
            .map(|(_, p)| p.value.len())
            .sum()
    }

    pub fn describe(&self) -> NetworkDescription {
        let layers = self.layers();
        NetworkDescription {
            kind: self.config.kind,
            total_params: self.param_count(),
            mixing_weights: self.mixing_weight_count(),
            receptive_field: self.config.receptive_field(),
            dilations: self.config.dilations.clone(),
            conv_pooling: self.config.conv_pooling.clone(),
            time_pooling: self.config.time_pooling(),
            output_frames_for_input: self.config.frames_out(self.config.input_frames),
            layers,
            config: self.config.clone(),
        }
    }
}

/// Serializable structure report.
#[derive(Clone, Debug, Serialize)]
pub struct NetworkDescription {
    pub kind: ModelKind,
    pub total_params: usize,
    pub mixing_weights: usize,
    pub receptive_field: usize,
    pub dilations: Vec<usize>,
    pub conv_pooling: Vec<usize>,
    pub time_pooling: [usize; 2],
    pub output_frames_for_input: usize,
    pub layers: Vec<LayerInfo>,
    pub config: ModelConfig,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maps_are_permutations() {
        for k in ModelKind::ALL {
            for phase in [false, true] {
                let mut c = ModelConfig::desk(k);
                c.include_phase = phase || k == ModelKind::DualqParallel;
                let mut all: Vec<usize> = input_maps(&c).concat();
                all.sort();
                assert_eq!(all, (0..c.input_channels()).collect::<Vec<_>>(), "{k:?}");
            }
        }
        let m = stacking_map(2, 16, Algebra::DualQuaternion);
        let mut sorted = m.clone();
        sorted.sort();
        assert_eq!(sorted, (0..32).collect::<Vec<_>>());
        // component 0 of bin 1, unit 0 lands right after bin 0's two units
        assert_eq!(m[2], 16);
        assert_eq!(stacking_map(2, 3, Algebra::Real), vec![0, 1, 2, 3, 4, 5]);
    }

    fn count(c: &ModelConfig) -> usize {
        build::<f32>(c, 0).unwrap().param_count()
    }

    #[test]
    fn paper_parameter_totals() {
        let cases = [
            (ModelConfig::paper(ModelKind::Real), 1.6e6),
            (ModelConfig::paper(ModelKind::Quaternion), 0.8e6),
            (ModelConfig::quaternion_wide(), 1.6e6),
            (ModelConfig::paper(ModelKind::Dualq), 1.8e6),
            (ModelConfig::paper(ModelKind::DualqParallel), 3.6e6),
        ];
        for (c, target) in cases {
            let n = count(&c) as f64;
            println!("{:?}: {n}", c.kind);
            assert!(
                (n / target - 1.0).abs() <= 0.1,
                "{:?}: {n} vs {target}",
                c.kind
            );
        }
    }

    fn tiny(kind: ModelKind) -> ModelConfig {
        ModelConfig::tiny(kind)
    }

    fn random_input(c: &ModelConfig, b: usize, t: usize, seed: u64) -> Tensor<f64> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = [b, t, N_BINS, c.input_channels()];
        let n = shape.iter().product();
        Tensor::from_vec(&shape, (0..n).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn desk_forward_shapes_and_ranges() {
        for k in ModelKind::ALL {
            let c = ModelConfig::desk(k);
            let mut net = build::<f32>(&c, 1).unwrap();
            let x = random_input(&c, 1, 32, 2).cast::<f32>();
            let y = net.forward(&x, Mode::Eval).unwrap();
            assert_eq!(y.sed.shape(), &[1, 2, 42]);
            assert_eq!(y.doa.shape(), &[1, 2, 126]);
            assert!(y.sed.data().iter().all(|&p| p > 0.0 && p < 1.0));
            assert!(y.doa.is_finite());
            assert_eq!(net.forward(&x, Mode::Eval).unwrap(), y);
            let wrong = Tensor::<f32>::zeros(&[1, 32, N_BINS, 12]);
            assert!(net.forward(&wrong, Mode::Eval).is_err());
        }
    }

    #[test]
    fn names_are_unique() {
        let net = build::<f32>(&ModelConfig::desk(ModelKind::DualqParallel), 0).unwrap();
        let mut names: Vec<String> = net.params().into_iter().map(|(n, _)| n).collect();
        let len = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), len);
    }

    /// Finite differences on the loss `Σ r_s ⊙ logits + Σ r_d ⊙ doa`; the
    /// absolute floor absorbs round-off on near-zero entries.
    #[test]
    fn whole_network_gradients() {
        use rand::Rng;
        for k in ModelKind::ALL {
            let c = tiny(k);
            let mut net = build::<f64>(&c, 3).unwrap();
            let x = random_input(&c, 2, 8, 4);
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let y = net.forward(&x, Mode::Train).unwrap();
            let rand_like = |t: &Tensor<f64>, rng: &mut ChaCha8Rng| {
                Tensor::from_vec(
                    t.shape(),
                    (0..t.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
                )
                .unwrap()
            };
            let rs = rand_like(&y.sed, &mut rng);
            let rd = rand_like(&y.doa, &mut rng);
            let loss = |net: &mut Network<f64>, x: &Tensor<f64>| {
                let y = net.forward(x, Mode::Train).unwrap();
                let logit = |p: f64| (p / (1.0 - p)).ln();
                y.sed
                    .data()
                    .iter()
                    .zip(rs.data())
                    .map(|(p, r)| logit(*p) * r)
                    .sum::<f64>()
                    + y.doa
                        .data()
                        .iter()
                        .zip(rd.data())
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            };
            net.zero_grad();
            let dx = net.backward(&rs, &rd).unwrap();
            let h = 1e-5;
            let mut worst: f64 = 0.0;
            let mut xp = x.clone();
            for i in (0..x.len()).step_by(97) {
                let o = xp.data()[i];
                xp.data_mut()[i] = o + h;
                let lp = loss(&mut net, &xp);
                xp.data_mut()[i] = o - h;
                let lm = loss(&mut net, &xp);
                xp.data_mut()[i] = o;
                let num = (lp - lm) / (2.0 * h);
                worst = worst
                    .max((num - dx.data()[i]).abs() / num.abs().max(dx.data()[i].abs()).max(1e-5));
            }
            let grads: Vec<(String, Vec<f64>)> = net
                .params()
                .into_iter()
                .filter(|(_, p)| p.trainable)
                .map(|(n, p)| (n, p.grad.data().to_vec()))
                .collect();
            for (name, g) in &grads {
                assert!(
                    g.iter().any(|&v| v != 0.0),
                    "{k:?}: no gradient reaches {name}"
                );
                for i in (0..g.len()).step_by(g.len() / 3 + 1) {
                    let set = |net: &mut Network<f64>, v: Option<f64>| -> f64 {
                        let mut ps = net.params_mut();
                        let p = &mut ps.iter_mut().find(|(n, _)| n == name).unwrap().1;
                        let o = p.value.data()[i];
                        p.value.data_mut()[i] = v.unwrap_or(o);
                        o
                    };
                    let o = set(&mut net, None);
                    set(&mut net, Some(o + h));
                    let lp = loss(&mut net, &x);
                    set(&mut net, Some(o - h));
                    let lm = loss(&mut net, &x);
                    set(&mut net, Some(o));
                    let num = (lp - lm) / (2.0 * h);
                    let err = (num - g[i]).abs() / num.abs().max(g[i].abs()).max(1e-5);
                    assert!(
                        err < 1e-4,
                        "{k:?} {name}[{i}]: analytic {} numeric {num}",
                        g[i]
                    );
                }
            }
            assert!(worst < 1e-4, "{k:?}: input gradient error {worst}");
        }
    }

    #[test]
    fn quaternion_and_dualq_ratios_at_equal_width() {
        let real = build::<f32>(&ModelConfig::desk(ModelKind::Real), 0).unwrap();
        let dq = build::<f32>(&ModelConfig::desk(ModelKind::Dualq), 0).unwrap();
        // heads end in a real layer in every kind, so compare the stacks only
        let stack = |n: &Network<f32>| -> usize {
            n.params()
                .iter()
                .filter(|(name, p)| {
                    p.trainable
                        && name.starts_with("stack")
                        && !name.ends_with(".bias")
                        && !name.contains("_bn.")
                })
                .map(|(_, p)| p.value.len())
                .sum()
        };
        assert_eq!(stack(&real), 8 * stack(&dq));
    }
}
