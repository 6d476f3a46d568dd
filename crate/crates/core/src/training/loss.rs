use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SeldOutput;
use crate::nn::{Real, Tensor};

/// Probabilities are clamped to `[EPS, 1 − EPS]` before taking logs.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossOptions {
    pub doa_weight: f64,
    /// Average the DOA error over active slots only.
    pub masked_doa: bool,
}

impl Default for LossOptions {
    fn default() -> Self {
        Self {
            doa_weight: 5.0,
            masked_doa: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub sed: f64,
    /// Unweighted DOA mean squared error.
    pub doa: f64,
}

/// Gradients with respect to the SED logits and the DOA outputs.
#[derive(Clone, Debug)]
pub struct LossGrad<T> {
    pub sed_logits: Tensor<T>,
    pub doa: Tensor<T>,
}

fn check<T: Real>(pred: &Tensor<T>, target: &Tensor<f64>, what: &str) -> Result<()> {
    let (p, t) = (pred.shape(), target.shape());
    let leading_one = p.len() == t.len() + 1 && p[0] == 1 && &p[1..] == t;
    if p != t && !leading_one {
        return Err(Error::Shape(format!(
            "{what} prediction {p:?} vs target {t:?}"
        )));
    }
    Ok(())
}

/// Loss terms only; see [`seld_loss_grad`].
pub fn seld_loss<T: Real>(
    pred: &SeldOutput<T>,
    sed_target: &Tensor<f64>,
    doa_target: &Tensor<f64>,
    opts: &LossOptions,
) -> Result<LossTerms> {
    seld_loss_impl(pred, sed_target, doa_target, opts, false).map(|(terms, _)| terms)
}

/// `total = BCE(sed) + w · MSE(doa)`, each a mean over its elements, with
/// the gradient of `total`. The SED gradient is taken through the sigmoid
/// as `(p − y) / N`.
pub fn seld_loss_grad<T: Real>(
    pred: &SeldOutput<T>,
    sed_target: &Tensor<f64>,
    doa_target: &Tensor<f64>,
    opts: &LossOptions,
) -> Result<(LossTerms, LossGrad<T>)> {
    seld_loss_impl(pred, sed_target, doa_target, opts, true).map(|(terms, g)| (terms, g.unwrap()))
}

fn seld_loss_impl<T: Real>(
    pred: &SeldOutput<T>,
    sed_target: &Tensor<f64>,
    doa_target: &Tensor<f64>,
    opts: &LossOptions,
    grad: bool,
) -> Result<(LossTerms, Option<LossGrad<T>>)> {
    check(&pred.sed, sed_target, "sed")?;
    check(&pred.doa, doa_target, "doa")?;
    if pred.doa.len() != 3 * pred.sed.len() {
        return Err(Error::Shape(
            "doa must hold three coordinates per sed slot".into(),
        ));
    }
    let n_sed = pred.sed.len() as f64;
    let mut bce = 0.0;
    for (&p, &y) in pred.sed.data().iter().zip(sed_target.data()) {
        let p = p.to_f64().unwrap_or(f64::NAN).clamp(BCE_EPS, 1.0 - BCE_EPS);
        bce -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    bce /= n_sed;

    let active = |i: usize| sed_target.data()[i / 3] > 0.5;
    let count = if opts.masked_doa {
        ((0..pred.doa.len()).filter(|&i| active(i)).count() as f64).max(1.0)
    } else {
        pred.doa.len() as f64
    };
    let mut sq = 0.0;
    for (i, (&d, &t)) in pred.doa.data().iter().zip(doa_target.data()).enumerate() {
        if !opts.masked_doa || active(i) {
            sq += (d.to_f64().unwrap_or(f64::NAN) - t).powi(2);
        }
    }
    let mse = sq / count;
    let terms = LossTerms {
        total: bce + opts.doa_weight * mse,
        sed: bce,
        doa: mse,
    };
    if !grad {
        return Ok((terms, None));
    }
    let sed_logits = pred.sed.zip_map(
        &Tensor::from_f64(pred.sed.shape(), sed_target.data())?,
        |p, y| (p - y) / T::of_f64(n_sed),
    )?;
    let scale = 2.0 * opts.doa_weight / count;
    let doa_grad = pred
        .doa
        .data()
        .iter()
        .zip(doa_target.data())
        .enumerate()
        .map(|(i, (&d, &t))| {
            if !opts.masked_doa || active(i) {
                T::of_f64(scale * (d.to_f64().unwrap_or(f64::NAN) - t))
            } else {
                T::zero()
            }
        })
        .collect();
    let doa = Tensor::from_vec(pred.doa.shape(), doa_grad)?;
    Ok((terms, Some(LossGrad { sed_logits, doa })))
}
