use std::path::Path;

use crate::ambisonics::{
    list_samples, make_targets_at, pack_dual_quaternion, read_capture, stft_features,
    DualMicCapture, SeldTarget,
};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::nn::{Algebra, Real, Tensor};

/// One prepared scene: network input `[T, 256, C]` and targets at the
/// network's output frames.
#[derive(Clone, Debug)]
pub struct Example<T> {
    pub name: String,
    pub input: Tensor<T>,
    pub target: SeldTarget,
    /// Center time of each output frame.
    pub frame_times: Vec<f64>,
}

/// Whether `config` consumes 6DOF-normalized magnitudes by default.
pub fn default_normalization(config: &ModelConfig) -> bool {
    config.kind.algebra() == Algebra::DualQuaternion
}

/// Center times of the output frames: each one pools `a·b` consecutive
/// STFT frames.
pub fn output_frame_times(config: &ModelConfig, stft_times: &[f64]) -> Vec<f64> {
    let [a, b] = config.time_pooling();
    let span = a * b;
    (0..config.frames_out(stft_times.len()))
        .map(|i| 0.5 * (stft_times[i * span] + stft_times[(i + 1) * span - 1]))
        .collect()
}

pub fn prepare_example<T: Real>(
    name: &str,
    capture: &DualMicCapture,
    config: &ModelConfig,
    normalize_6dof: bool,
) -> Result<Example<T>> {
    let raw = stft_features(capture, config.include_phase)?;
    let features = pack_dual_quaternion(&raw, normalize_6dof)?;
    let times = output_frame_times(config, &features.frame_times);
    if times.is_empty() {
        return Err(Error::Shape(format!(
            "{name}: {} STFT frames give no output frames",
            features.n_frames()
        )));
    }
    Ok(Example {
        name: name.to_string(),
        input: features.data.cast(),
        target: make_targets_at(capture, &times)?,
        frame_times: times,
    })
}

/// Reads every sample under `root/samples`.
pub fn load_examples<T: Real>(
    root: &Path,
    config: &ModelConfig,
    normalize_6dof: bool,
) -> Result<Vec<Example<T>>> {
    list_samples(root)?
        .iter()
        .map(|dir| {
            let name = dir
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            prepare_example(&name, &read_capture(dir)?, config, normalize_6dof)
        })
        .collect()
}

/// Stacked inputs and targets of several same-length examples.
pub struct Batch<T> {
    pub input: Tensor<T>,
    pub sed: Tensor<f64>,
    pub doa: Tensor<f64>,
}

fn stack<U: Real>(parts: &[&Tensor<U>]) -> Result<Tensor<U>> {
    let shape = parts[0].shape().to_vec();
    let mut data = Vec::with_capacity(parts.len() * parts[0].len());
    for p in parts {
        if p.shape() != shape {
            return Err(Error::Shape(format!(
                "cannot batch examples of shape {:?} and {:?}",
                shape,
                p.shape()
            )));
        }
        data.extend_from_slice(p.data());
    }
    let mut full = vec![parts.len()];
    full.extend(shape);
    Tensor::from_vec(&full, data)
}

pub fn make_batch<T: Real>(examples: &[&Example<T>]) -> Result<Batch<T>> {
    if examples.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    let inputs: Vec<_> = examples.iter().map(|e| &e.input).collect();
    let sed: Vec<_> = examples.iter().map(|e| &e.target.sed).collect();
    let doa: Vec<_> = examples.iter().map(|e| &e.target.doa).collect();
    Ok(Batch {
        input: stack(&inputs)?,
        sed: stack(&sed)?,
        doa: stack(&doa)?,
    })
}
