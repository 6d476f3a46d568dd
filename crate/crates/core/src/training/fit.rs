use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::adam::{clip_grad_norm, grad_norm, Adam};
use super::data::{make_batch, Example};
use super::loss::{seld_loss_grad, LossTerms};
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::metrics::{decode_predictions, Evaluator, FrameEvents, MetricConfig, SeldScores};
use crate::model::Network;
use crate::nn::{Mode, Real, Tensor};

pub const HISTORY_COLUMNS: [&str; 7] = [
    "epoch",
    "train_loss",
    "sed_loss",
    "doa_loss",
    "val_LSD",
    "val_CSL",
    "val_GSELD",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Means over the epoch's batches, each measured before its update.
    pub train: LossTerms,
    pub val: SeldScores,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut out = HISTORY_COLUMNS.join(",");
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.epoch, r.train.total, r.train.sed, r.train.doa, r.val.lsd, r.val.csl, r.val.gseld
            );
        }
        out
    }
}

pub struct FitResult<T> {
    pub history: History,
    /// Optimizer state matching the returned parameters.
    pub optimizer: Adam<T>,
    pub best_epoch: usize,
    pub best_score: f64,
    /// Epoch whose parameters the network holds on return.
    pub kept_epoch: usize,
}

/// Eval-mode predictions per example, `([n, 42], [n, 126])`.
pub fn predict<T: Real>(
    net: &mut Network<T>,
    examples: &[Example<T>],
    batch_size: usize,
) -> Result<Vec<(Tensor<T>, Tensor<T>)>> {
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(batch_size.max(1)) {
        let refs: Vec<_> = chunk.iter().collect();
        let batch = make_batch(&refs)?;
        let y = net.forward(&batch.input, Mode::Eval)?;
        out.extend((0..chunk.len()).map(|b| y.example(b)));
    }
    Ok(out)
}

/// Scores eval-mode predictions against the examples' targets.
pub fn evaluate<T: Real>(
    net: &mut Network<T>,
    examples: &[Example<T>],
    metric: &MetricConfig,
    batch_size: usize,
) -> Result<SeldScores> {
    let mut ev = Evaluator::new(*metric);
    for (ex, (sed, doa)) in examples.iter().zip(predict(net, examples, batch_size)?) {
        let pred = decode_predictions(&sed, &doa, metric.sed_threshold, &ex.frame_times)?;
        ev.add(&pred, &FrameEvents::from_target(&ex.target)?)?;
    }
    Ok(ev.scores())
}

fn snapshot<T: Real>(net: &Network<T>) -> Vec<Tensor<T>> {
    net.params()
        .into_iter()
        .map(|(_, p)| p.value.clone())
        .collect()
}

fn restore<T: Real>(net: &mut Network<T>, values: Vec<Tensor<T>>) {
    for ((_, p), v) in net.params_mut().into_iter().zip(values) {
        p.value = v;
    }
}

pub fn fit<T: Real>(
    net: &mut Network<T>,
    train: &[Example<T>],
    val: &[Example<T>],
    config: &TrainConfig,
    metric: &MetricConfig,
) -> Result<FitResult<T>> {
    fit_with(net, train, val, config, metric, |_| {})
}

/// Trains with Adam, scoring the validation set after every epoch. With
/// `restore_best` the network ends holding the parameters of the
/// best-scoring epoch.
pub fn fit_with<T: Real>(
    net: &mut Network<T>,
    train: &[Example<T>],
    val: &[Example<T>],
    config: &TrainConfig,
    metric: &MetricConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FitResult<T>> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Validation(format!(
            "need training and validation examples, got {} and {}",
            train.len(),
            val.len()
        )));
    }
    let loss_opts = config.loss();
    let mut opt = Adam::new(config.adam());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = History::default();
    let mut best: Option<(usize, f64, Vec<Tensor<T>>, Adam<T>)> = None;

    for epoch in 1..=config.max_epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut sum = LossTerms::default();
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let refs: Vec<_> = chunk.iter().map(|&i| &train[i]).collect();
            let batch = make_batch(&refs)?;
            net.zero_grad();
            let out = net.forward(&batch.input, Mode::Train)?;
            let (terms, grad) = seld_loss_grad(&out, &batch.sed, &batch.doa, &loss_opts)?;
            let non_finite = |term| Error::NonFinite {
                epoch,
                batch: bi,
                term,
            };
            if !terms.sed.is_finite() {
                return Err(non_finite("sed_loss"));
            }
            if !terms.doa.is_finite() {
                return Err(non_finite("doa_loss"));
            }
            net.backward(&grad.sed_logits, &grad.doa)?;
            let mut params = net.params_mut();
            let norm = match config.grad_clip {
                Some(c) => clip_grad_norm(&mut params, c),
                None => grad_norm(&params),
            };
            if !norm.is_finite() {
                return Err(non_finite("gradient"));
            }
            opt.update(&mut params)?;
            let w = chunk.len() as f64;
            sum.total += terms.total * w;
            sum.sed += terms.sed * w;
            sum.doa += terms.doa * w;
        }
        let n = train.len() as f64;
        let record = EpochRecord {
            epoch,
            train: LossTerms {
                total: sum.total / n,
                sed: sum.sed / n,
                doa: sum.doa / n,
            },
            val: evaluate(net, val, metric, config.batch_size)?,
        };
        on_epoch(&record);
        let score = record.val.gseld;
        history.records.push(record);
        let improved = best.as_ref().is_none_or(|b| score < b.1 - config.min_delta);
        if improved {
            best = Some((epoch, score, snapshot(net), opt.clone()));
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.0);
        if config.should_stop(epoch, best_epoch) {
            break;
        }
    }
    let (best_epoch, best_score, values, best_opt) = best.expect("at least one epoch ran");
    let (optimizer, kept_epoch) = if config.restore_best {
        restore(net, values);
        (best_opt, best_epoch)
    } else {
        (opt, history.records.len())
    };
    Ok(FitResult {
        history,
        optimizer,
        best_epoch,
        best_score,
        kept_epoch,
    })
}
