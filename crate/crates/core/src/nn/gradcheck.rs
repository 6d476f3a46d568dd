//! Central finite-difference verification of layer backward rules at `f64`.
//!
//! The scalar loss is `L = Σ r ⊙ y` for a fixed random `r`, so the analytic
//! upstream gradient is `r` itself.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::activation::Gtu;
use super::kernel::Geometry;
use super::mixing::Mixing;
use super::norm::BatchNorm;
use super::tensor::Tensor;
use super::weight::{Algebra, Pathway};
use super::{Mode, Module, Param};
use crate::error::Result;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Upper bound on checked entries per tensor; larger tensors are strided.
    pub max_entries: usize,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            tolerance: DEFAULT_TOLERANCE,
            max_entries: 400,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub layer: String,
    pub max_rel_error: f64,
    /// Tensor (`input` or a parameter name) where the worst error occurred.
    pub worst: String,
    pub checked: usize,
    pub passed: bool,
}

fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

fn loss(layer: &mut dyn Module<f64>, x: &Tensor<f64>, r: &Tensor<f64>, mode: Mode) -> Result<f64> {
    let y = layer.forward(x, mode)?;
    Ok(y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum())
}

fn strided(len: usize, max: usize) -> impl Iterator<Item = usize> {
    let stride = len.div_ceil(max.max(1)).max(1);
    (0..len).step_by(stride)
}

/// Compare analytic and numeric gradients for the input and every trainable
/// parameter of `layer`.
pub fn check_module(
    label: &str,
    layer: &mut dyn Module<f64>,
    x: &Tensor<f64>,
    mode: Mode,
    seed: u64,
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = layer.forward(x, mode)?;
    let r = Tensor::from_vec(
        y.shape(),
        (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )?;
    layer.zero_grad();
    let dx = layer.backward(&r)?;
    let analytic: Vec<(String, Vec<f64>)> = layer
        .params()
        .into_iter()
        .filter(|(_, p)| p.trainable)
        .map(|(n, p)| (n, p.grad.data().to_vec()))
        .collect();

    let h = opts.step;
    let mut worst = (0.0f64, String::from("input"));
    let mut checked = 0;
    let mut note = |err: f64, name: &str, worst: &mut (f64, String)| {
        checked += 1;
        if err > worst.0 || err.is_nan() {
            *worst = (err, name.to_string());
        }
    };

    let mut xp = x.clone();
    for i in strided(x.len(), opts.max_entries) {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + h;
        let lp = loss(layer, &xp, &r, mode)?;
        xp.data_mut()[i] = orig - h;
        let lm = loss(layer, &xp, &r, mode)?;
        xp.data_mut()[i] = orig;
        note(
            rel_error(dx.data()[i], (lp - lm) / (2.0 * h)),
            "input",
            &mut worst,
        );
    }

    for (name, grad) in &analytic {
        for i in strided(grad.len(), opts.max_entries) {
            let lp = perturbed_loss(layer, name, i, h, x, &r, mode)?;
            let lm = perturbed_loss(layer, name, i, -h, x, &r, mode)?;
            note(rel_error(grad[i], (lp - lm) / (2.0 * h)), name, &mut worst);
        }
    }

    Ok(GradCheckReport {
        layer: label.to_string(),
        max_rel_error: worst.0,
        worst: worst.1,
        checked,
        passed: worst.0 < opts.tolerance,
    })
}

fn with_param<R>(
    layer: &mut dyn Module<f64>,
    name: &str,
    f: impl FnOnce(&mut Param<f64>) -> R,
) -> R {
    let mut params = layer.params_mut();
    let (_, p) = params
        .iter_mut()
        .find(|(n, _)| n == name)
        .expect("parameter disappeared between calls");
    f(p)
}

fn perturbed_loss(
    layer: &mut dyn Module<f64>,
    name: &str,
    i: usize,
    delta: f64,
    x: &Tensor<f64>,
    r: &Tensor<f64>,
    mode: Mode,
) -> Result<f64> {
    let orig = with_param(layer, name, |p| {
        let o = p.value.data()[i];
        p.value.data_mut()[i] = o + delta;
        o
    });
    let l = loss(layer, x, r, mode);
    with_param(layer, name, |p| p.value.data_mut()[i] = orig);
    l
}

/// Wraps a layer and scales its input gradient by 1.1. Exists only as a
/// negative control for the checker.
pub struct CorruptedBackward<M>(pub M);

impl<M: Module<f64>> Module<f64> for CorruptedBackward<M> {
    fn kind(&self) -> &'static str {
        self.0.kind()
    }
    fn forward(&mut self, x: &Tensor<f64>, mode: Mode) -> Result<Tensor<f64>> {
        self.0.forward(x, mode)
    }
    fn backward(&mut self, dy: &Tensor<f64>) -> Result<Tensor<f64>> {
        Ok(self.0.backward(dy)?.map(|v| v * 1.1))
    }
    fn params(&self) -> Vec<(String, &Param<f64>)> {
        self.0.params()
    }
    fn params_mut(&mut self) -> Vec<(String, &mut Param<f64>)> {
        self.0.params_mut()
    }
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn randomize_params(layer: &mut dyn Module<f64>, rng: &mut ChaCha8Rng) {
    for (_, p) in layer.params_mut() {
        if p.trainable {
            for v in p.value.data_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
        }
    }
}

/// One named case of the standard suite.
pub struct Case {
    pub label: String,
    pub layer: Box<dyn Module<f64>>,
    pub input: Tensor<f64>,
    pub mode: Mode,
}

/// Every trainable layer kind used by the networks: real, quaternion and
/// dual-quaternion FC / 2D convolution / dilated 1D convolution (both
/// dual-quaternion pathways), GTU, and batch norm in both modes.
pub fn standard_cases(seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::new();
    let algebras = [
        (Algebra::Real, "real", 3usize),
        (Algebra::Quaternion, "q", 4),
        (Algebra::DualQuaternion, "dualq", 8),
    ];
    for &(algebra, tag, dim) in &algebras {
        let pathways: &[Pathway] = if algebra == Algebra::DualQuaternion {
            &[Pathway::Split, Pathway::FullMatrix]
        } else {
            &[Pathway::Split]
        };
        for &pathway in pathways {
            let suffix = match (algebra, pathway) {
                (Algebra::DualQuaternion, Pathway::FullMatrix) => "/full_matrix",
                (Algebra::DualQuaternion, Pathway::Split) => "/split",
                _ => "",
            };
            // 5 units in, 2 units out for FC
            let (cin, cout) = (5 * dim, 2 * dim);
            let mut fc = Mixing::new(
                algebra,
                cin,
                cout,
                Geometry::POINTWISE,
                true,
                pathway,
                &mut rng,
            )
            .unwrap();
            randomize_params(&mut fc, &mut rng);
            cases.push(Case {
                label: format!("{tag}_fc{suffix}"),
                layer: Box::new(fc),
                input: random_tensor(&[3, cin], &mut rng),
                mode: Mode::Train,
            });

            let geom = Geometry {
                kt: 3,
                kf: 3,
                dilation: 1,
            };
            let mut conv =
                Mixing::new(algebra, dim, 2 * dim, geom, true, pathway, &mut rng).unwrap();
            randomize_params(&mut conv, &mut rng);
            cases.push(Case {
                label: format!("{tag}_conv2d{suffix}"),
                layer: Box::new(conv),
                input: random_tensor(&[2, 4, 5, dim], &mut rng),
                mode: Mode::Train,
            });

            let geom = Geometry {
                kt: 3,
                kf: 1,
                dilation: 2,
            };
            let mut dconv =
                Mixing::new(algebra, 2 * dim, dim, geom, true, pathway, &mut rng).unwrap();
            randomize_params(&mut dconv, &mut rng);
            cases.push(Case {
                label: format!("{tag}_dilated_conv1d{suffix}"),
                layer: Box::new(dconv),
                input: random_tensor(&[2, 7, 2 * dim], &mut rng),
                mode: Mode::Train,
            });
        }
    }
    cases.push(Case {
        label: "gtu".into(),
        layer: Box::new(Gtu::<f64>::new()),
        input: random_tensor(&[2, 5, 6], &mut rng).map(|v| 2.0 * v),
        mode: Mode::Train,
    });
    for (mode, tag) in [(Mode::Train, "train"), (Mode::Eval, "eval")] {
        let mut bn = BatchNorm::<f64>::new(3);
        randomize_params(&mut bn, &mut rng);
        for v in bn.running_var_mut().data_mut() {
            *v = rng.random_range(0.5..2.0);
        }
        cases.push(Case {
            label: format!("batch_norm/{tag}"),
            layer: Box::new(bn),
            input: random_tensor(&[4, 6, 3], &mut rng),
            mode,
        });
    }
    cases
}

/// Run [`standard_cases`]. When `corrupt` names a case label, that case's
/// backward rule is wrapped in [`CorruptedBackward`].
pub fn run_suite(
    seed: u64,
    opts: GradCheckOptions,
    corrupt: Option<&str>,
) -> Result<Vec<GradCheckReport>> {
    standard_cases(seed)
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let mut layer = c.layer;
            if corrupt == Some(c.label.as_str()) {
                let mut wrapped = CorruptedBackward(BoxedModule(layer));
                return check_module(
                    &c.label,
                    &mut wrapped,
                    &c.input,
                    c.mode,
                    seed + i as u64,
                    opts,
                );
            }
            check_module(
                &c.label,
                layer.as_mut(),
                &c.input,
                c.mode,
                seed + i as u64,
                opts,
            )
        })
        .collect()
}

struct BoxedModule(Box<dyn Module<f64>>);

impl Module<f64> for BoxedModule {
    fn kind(&self) -> &'static str {
        self.0.kind()
    }
    fn forward(&mut self, x: &Tensor<f64>, mode: Mode) -> Result<Tensor<f64>> {
        self.0.forward(x, mode)
    }
    fn backward(&mut self, dy: &Tensor<f64>) -> Result<Tensor<f64>> {
        self.0.backward(dy)
    }
    fn params(&self) -> Vec<(String, &Param<f64>)> {
        self.0.params()
    }
    fn params_mut(&mut self) -> Vec<(String, &mut Param<f64>)> {
        self.0.params_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_layer_kind_passes() {
        let reports = run_suite(3, GradCheckOptions::default(), None).unwrap();
        assert!(reports.len() >= 14);
        for r in &reports {
            assert!(
                r.passed,
                "{} failed: {} at {}",
                r.layer, r.max_rel_error, r.worst
            );
            assert!(r.checked > 0);
        }
    }

    #[test]
    fn corrupted_backward_is_caught() {
        let reports = run_suite(3, GradCheckOptions::default(), Some("q_conv2d")).unwrap();
        let bad: Vec<_> = reports
            .iter()
            .filter(|r| !r.passed)
            .map(|r| r.layer.as_str())
            .collect();
        assert_eq!(bad, ["q_conv2d"]);
    }
}
