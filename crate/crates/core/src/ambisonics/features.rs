use std::f64::consts::TAU;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::DualMicCapture;
use crate::error::{Error, Result};
use crate::hypercomplex::{dq_normalize_6dof, DualQuaternion, DEGENERATE_NORM};
use crate::nn::Tensor;

pub const WINDOW: usize = 512;
pub const HOP: usize = 256;
/// One-sided bins kept from each frame; the Nyquist bin is dropped.
pub const N_BINS: usize = 256;

/// Time-frequency features `[T, 256, C]`. Channels are mic A W,X,Y,Z then
/// mic B W,X,Y,Z; with 16 channels the phases follow in the same order.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensor {
    pub data: Tensor<f64>,
    /// Center of each frame, seconds.
    pub frame_times: Vec<f64>,
}

impl FeatureTensor {
    pub fn n_frames(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.data.channels()
    }
}

pub fn n_frames(n_samples: usize) -> usize {
    if n_samples < WINDOW {
        0
    } else {
        (n_samples - WINDOW) / HOP + 1
    }
}

/// Periodic Hamming window.
fn hamming() -> Vec<f64> {
    (0..WINDOW)
        .map(|n| 0.54 - 0.46 * (TAU * n as f64 / WINDOW as f64).cos())
        .collect()
}

pub fn stft_features(capture: &DualMicCapture, include_phase: bool) -> Result<FeatureTensor> {
    capture.check()?;
    let len = capture.len();
    if len < WINDOW {
        return Err(Error::Precondition(format!(
            "signal has {len} samples, STFT needs at least {WINDOW}"
        )));
    }
    let t_frames = n_frames(len);
    let c = if include_phase { 16 } else { 8 };
    let window = hamming();
    let fft = FftPlanner::new().plan_fft_forward(WINDOW);
    let mut data = vec![0.0; t_frames * N_BINS * c];
    let mut buf = vec![Complex::new(0.0, 0.0); WINDOW];
    let channels = capture.mic_a.iter().chain(&capture.mic_b);
    for (ch, sig) in channels.enumerate() {
        for t in 0..t_frames {
            let frame = &sig[t * HOP..t * HOP + WINDOW];
            for ((b, &s), &w) in buf.iter_mut().zip(frame).zip(&window) {
                *b = Complex::new(s * w, 0.0);
            }
            fft.process(&mut buf);
            for (f, z) in buf[..N_BINS].iter().enumerate() {
                let base = (t * N_BINS + f) * c;
                data[base + ch] = z.norm();
                if include_phase {
                    data[base + 8 + ch] = z.arg();
                }
            }
        }
    }
    let sr = capture.sample_rate as f64;
    Ok(FeatureTensor {
        data: Tensor::from_vec(&[t_frames, N_BINS, c], data)?,
        frame_times: (0..t_frames)
            .map(|t| (t * HOP + WINDOW / 2) as f64 / sr)
            .collect(),
    })
}

/// The features already carry the dual-quaternion layout (mic A primal,
/// mic B dual). With `normalize_6dof`, each time-frequency bin of the
/// magnitude block is mapped onto the unit constraint surface; bins whose
/// primal norm is below the degeneracy threshold pass through unchanged.
pub fn pack_dual_quaternion(
    features: &FeatureTensor,
    normalize_6dof: bool,
) -> Result<FeatureTensor> {
    let c = features.channels();
    if c != 8 && c != 16 {
        return Err(Error::Shape(format!(
            "expected 8 or 16 feature channels, got {c}"
        )));
    }
    let mut out = features.clone();
    if !normalize_6dof {
        return Ok(out);
    }
    for cell in out.data.data_mut().chunks_exact_mut(c) {
        let mut v = [0.0; 8];
        v.copy_from_slice(&cell[..8]);
        let dq = DualQuaternion::from_array(v);
        if dq.primal.norm() < DEGENERATE_NORM {
            continue;
        }
        cell[..8].copy_from_slice(&dq_normalize_6dof(dq)?.to_array());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_and_shape() {
        let cap = DualMicCapture::silent(32000, 32000);
        let f = stft_features(&cap, false).unwrap();
        assert_eq!(f.data.shape(), &[124, 256, 8]);
        assert!(f.data.data().iter().all(|&v| v == 0.0));
        assert_eq!(
            stft_features(&cap, true).unwrap().data.shape(),
            &[124, 256, 16]
        );
        assert!(stft_features(&DualMicCapture::silent(511, 32000), false).is_err());
    }

    #[test]
    fn bin_centered_sinusoid() {
        let k = 40;
        let mut cap = DualMicCapture::silent(4096, 32000);
        for (i, v) in cap.mic_a[0].iter_mut().enumerate() {
            *v = (TAU * k as f64 * i as f64 / WINDOW as f64).sin();
        }
        let f = stft_features(&cap, false).unwrap();
        for t in 0..f.n_frames() {
            let at = |bin: usize, ch: usize| f.data.data()[(t * N_BINS + bin) * 8 + ch];
            let peak = at(k, 0);
            // window sum is 0.54·512, halved for a real sinusoid
            assert!((peak - 0.27 * WINDOW as f64).abs() < 1e-6 * peak);
            for bin in 0..N_BINS {
                if bin.abs_diff(k) > 1 {
                    assert!(at(bin, 0) < 0.05 * peak, "bin {bin}");
                }
                for ch in 1..8 {
                    assert_eq!(at(bin, ch), 0.0);
                }
            }
        }
    }

    #[test]
    fn packing_guard_and_constraints() {
        let mut data = Tensor::<f64>::zeros(&[1, 2, 8]);
        data.data_mut()[..8].copy_from_slice(&[0., 0., 0., 0., 1., 2., 3., 4.]);
        data.data_mut()[8..].copy_from_slice(&[1., 2., 0., 1., 0.5, 0.5, 3., 1.]);
        let feats = FeatureTensor {
            data,
            frame_times: vec![0.0],
        };
        assert_eq!(pack_dual_quaternion(&feats, false).unwrap(), feats);
        let packed = pack_dual_quaternion(&feats, true).unwrap();
        assert_eq!(&packed.data.data()[..8], &feats.data.data()[..8]);
        let dq = DualQuaternion::from_array(packed.data.data()[8..].try_into().unwrap());
        assert!((dq.primal.norm() - 1.0).abs() < 1e-12);
        assert!(dq.primal.dot(dq.dual).abs() < 1e-12);
        let bad = FeatureTensor {
            data: Tensor::zeros(&[1, 2, 4]),
            frame_times: vec![0.0],
        };
        assert!(pack_dual_quaternion(&bad, true).is_err());
    }
}
