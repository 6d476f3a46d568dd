//! Two-microphone first-order ambisonic scenes: synthesis, STFT features,
//! dual-quaternion packing and SED/DOA targets.

mod dataset;
mod features;
mod scene;
mod targets;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypercomplex::Vec3;

pub use dataset::{list_samples, read_capture, read_wav, write_capture, write_wav, Labels};
pub use features::{
    n_frames, pack_dual_quaternion, stft_features, FeatureTensor, HOP, N_BINS, WINDOW,
};
pub use scene::{class_waveform, synthesize_scene, SceneSampler};
pub use targets::{
    assign_slots, frame_centers, make_targets, make_targets_at, SeldTarget, DOA_WIDTH, SED_WIDTH,
};

pub const N_CLASS: usize = 14;
pub const N_OVERLAP: usize = 3;
pub const SAMPLE_RATE: u32 = 32_000;
pub const SPEED_OF_SOUND: f64 = 343.0;

/// Four channels in W, X, Y, Z order.
pub type BFormat = [Vec<f64>; 4];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceEvent {
    pub class_id: usize,
    pub onset: f64,
    pub offset: f64,
    /// Meters, in the array frame (microphones straddle the origin).
    pub position: Vec3,
    /// Level offset in dB, within `[−20, 0]`.
    pub gain: f64,
    #[serde(default)]
    pub waveform_seed: u64,
}

impl SourceEvent {
    /// `(azimuth, elevation, distance)` of the source as seen from `mic`.
    pub fn direction_from(&self, mic: Vec3) -> (f64, f64, f64) {
        let d = [
            self.position[0] - mic[0],
            self.position[1] - mic[1],
            self.position[2] - mic[2],
        ];
        let horiz = d[0].hypot(d[1]);
        (d[1].atan2(d[0]), d[2].atan2(horiz), horiz.hypot(d[2]))
    }

    pub fn is_active(&self, t: f64) -> bool {
        self.onset <= t && t < self.offset
    }

    fn validate(&self) -> Result<()> {
        if self.class_id >= N_CLASS {
            return Err(Error::Validation(format!(
                "class_id {} outside 0..{N_CLASS}",
                self.class_id
            )));
        }
        if !(self.onset < self.offset) || !self.onset.is_finite() || !self.offset.is_finite() {
            return Err(Error::Validation(format!(
                "event onset {} must precede offset {}",
                self.onset, self.offset
            )));
        }
        if !(-20.0..=0.0).contains(&self.gain) {
            return Err(Error::Validation(format!(
                "gain {} dB outside [-20, 0]",
                self.gain
            )));
        }
        if self.position.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("event position is not finite".into()));
        }
        Ok(())
    }
}

/// Largest number of events simultaneously active, treating each event as
/// the half-open interval `[onset, offset)`.
pub fn max_overlap<'a>(events: impl IntoIterator<Item = &'a SourceEvent>) -> usize {
    let mut edges: Vec<(f64, i32)> = Vec::new();
    for e in events {
        edges.push((e.onset, 1));
        edges.push((e.offset, -1));
    }
    // ends sort before starts at the same instant
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let (mut cur, mut best) = (0i32, 0i32);
    for (_, d) in edges {
        cur += d;
        best = best.max(cur);
    }
    best as usize
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub duration: f64,
    pub sample_rate: u32,
    pub events: Vec<SourceEvent>,
    pub mic_positions: [Vec3; 2],
    /// Standard deviation of additive Gaussian noise in dBFS; `−∞` disables it.
    pub noise_floor: f64,
}

impl SceneSpec {
    pub const DEFAULT_MICS: [Vec3; 2] = [[-0.1, 0.0, 0.0], [0.1, 0.0, 0.0]];

    pub fn new(duration: f64, events: Vec<SourceEvent>) -> Self {
        Self {
            duration,
            sample_rate: SAMPLE_RATE,
            events,
            mic_positions: Self::DEFAULT_MICS,
            noise_floor: f64::NEG_INFINITY,
        }
    }

    pub fn n_samples(&self) -> usize {
        (self.duration * self.sample_rate as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::Validation("sample_rate must be positive".into()));
        }
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::Validation(format!(
                "duration {} must be positive",
                self.duration
            )));
        }
        if self.noise_floor.is_nan() || self.noise_floor == f64::INFINITY {
            return Err(Error::Validation(
                "noise_floor must be finite or -inf".into(),
            ));
        }
        for e in &self.events {
            e.validate()?;
        }
        let overlap = max_overlap(&self.events);
        if overlap > N_OVERLAP {
            return Err(Error::Validation(format!(
                "{overlap} events overlap, at most {N_OVERLAP} allowed"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualMicCapture {
    pub sample_rate: u32,
    pub mic_a: BFormat,
    pub mic_b: BFormat,
    pub labels: Vec<SourceEvent>,
}

impl DualMicCapture {
    pub fn silent(n_samples: usize, sample_rate: u32) -> Self {
        let z = || std::array::from_fn(|_| vec![0.0; n_samples]);
        Self {
            sample_rate,
            mic_a: z(),
            mic_b: z(),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.mic_a[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub(crate) fn check(&self) -> Result<()> {
        let n = self.len();
        if self.mic_a.iter().chain(&self.mic_b).any(|c| c.len() != n) {
            return Err(Error::Shape("capture channels differ in length".into()));
        }
        Ok(())
    }
}

/// First-order B-format encoding of a mono signal arriving from azimuth
/// `theta` and elevation `phi`.
pub fn encode_bformat(s: &[f64], theta: f64, phi: f64) -> BFormat {
    let w = 1.0 / 3f64.sqrt();
    let gains = [
        w,
        theta.cos() * phi.cos(),
        theta.sin() * phi.cos(),
        phi.sin(),
    ];
    gains.map(|g| s.iter().map(|v| v * g).collect())
}
