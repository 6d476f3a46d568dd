use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    encode_bformat, max_overlap, DualMicCapture, SceneSpec, SourceEvent, N_CLASS, N_OVERLAP,
    SPEED_OF_SOUND,
};
use crate::error::{Error, Result};

const PARTIALS: usize = 8;
const RAMP_SECONDS: f64 = 0.01;
const MIN_DISTANCE: f64 = 0.1;

/// Center frequency of a class, log-spaced from 250 Hz to 8 kHz.
fn class_center(class_id: usize) -> f64 {
    250.0 * 32f64.powf(class_id as f64 / (N_CLASS - 1) as f64)
}

/// Mono burst for one event: a cluster of randomly detuned partials within
/// a quarter octave of the class center, amplitude-modulated at a
/// class-specific rate, with short linear ramps and unit peak.
pub fn class_waveform(class_id: usize, seed: u64, n_samples: usize, sample_rate: u32) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((class_id as u64) << 32));
    let sr = sample_rate as f64;
    let center = class_center(class_id);
    let nyquist = 0.45 * sr;
    let partials: Vec<(f64, f64)> = (0..PARTIALS)
        .map(|_| {
            let f = (center * 2f64.powf(rng.random_range(-0.25..0.25))).min(nyquist);
            (TAU * f / sr, rng.random_range(0.0..TAU))
        })
        .collect();
    let am_rate = 1.5 + 0.75 * class_id as f64;
    let am_phase = rng.random_range(0.0..TAU);
    let ramp = ((RAMP_SECONDS * sr) as usize).max(1);
    let mut out: Vec<f64> = (0..n_samples)
        .map(|i| {
            let t = i as f64;
            let tone: f64 = partials.iter().map(|&(w, p)| (w * t + p).sin()).sum();
            let am = 0.6 + 0.4 * (TAU * am_rate * t / sr + am_phase).cos();
            let edge = (i.min(n_samples - 1 - i) as f64 / ramp as f64).min(1.0);
            tone * am * edge
        })
        .collect();
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v /= peak);
    }
    out
}

fn to_sample(t: f64, sr: u32) -> usize {
    (t * sr as f64).round().max(0.0) as usize
}

/// Anechoic rendering of `spec` at both microphones. `rng_seed` drives the
/// additive noise only; event waveforms depend on their own seeds.
pub fn synthesize_scene(spec: &SceneSpec, rng_seed: u64) -> Result<DualMicCapture> {
    spec.validate()?;
    let n = spec.n_samples();
    let sr = spec.sample_rate;
    let mut capture = DualMicCapture::silent(n, sr);
    for ev in &spec.events {
        let start = to_sample(ev.onset, sr);
        let stop = to_sample(ev.offset, sr).min(n);
        if stop <= start {
            continue;
        }
        let burst = class_waveform(ev.class_id, ev.waveform_seed, stop - start, sr);
        let level = 10f64.powf(ev.gain / 20.0);
        for (mic, out) in spec
            .mic_positions
            .iter()
            .zip([&mut capture.mic_a, &mut capture.mic_b])
        {
            let (theta, phi, dist) = ev.direction_from(*mic);
            let dist = dist.max(MIN_DISTANCE);
            let delay = (dist / SPEED_OF_SOUND * sr as f64).round() as usize;
            let scaled: Vec<f64> = burst.iter().map(|v| v * level / dist).collect();
            let enc = encode_bformat(&scaled, theta, phi);
            for (ch, sig) in out.iter_mut().zip(&enc) {
                for (i, &v) in sig.iter().enumerate() {
                    match ch.get_mut(start + delay + i) {
                        Some(dst) => *dst += v,
                        None => break,
                    }
                }
            }
        }
    }
    if spec.noise_floor > f64::NEG_INFINITY {
        let sigma = 10f64.powf(spec.noise_floor / 20.0);
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Validation(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        for ch in capture.mic_a.iter_mut().chain(capture.mic_b.iter_mut()) {
            for v in ch.iter_mut() {
                *v += normal.sample(&mut rng);
            }
        }
    }
    capture.labels = spec.events.clone();
    Ok(capture)
}

/// Random scene generator used for synthetic datasets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSampler {
    pub duration: f64,
    pub sample_rate: u32,
    pub min_events: usize,
    pub max_events: usize,
    /// Classes are drawn from `0..n_class`.
    pub n_class: usize,
    pub min_event_len: f64,
    pub max_event_len: f64,
    pub max_overlap: usize,
    pub min_distance: f64,
    pub max_distance: f64,
    /// Largest absolute source elevation, radians.
    pub max_elevation: f64,
    pub noise_floor: f64,
}

impl Default for SceneSampler {
    fn default() -> Self {
        Self {
            duration: 2.0,
            sample_rate: super::SAMPLE_RATE,
            min_events: 1,
            max_events: 3,
            n_class: N_CLASS,
            min_event_len: 0.5,
            max_event_len: 1.5,
            max_overlap: N_OVERLAP,
            min_distance: 1.0,
            max_distance: 2.5,
            max_elevation: 0.6,
            noise_floor: -60.0,
        }
    }
}

impl SceneSampler {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("scene sampler: {m}")));
        if !(self.duration > 0.0) {
            return bad("duration must be positive");
        }
        if self.min_events > self.max_events {
            return bad("min_events exceeds max_events");
        }
        if self.n_class == 0 || self.n_class > N_CLASS {
            return bad("n_class must be in 1..=14");
        }
        if !(0.0 < self.min_event_len && self.min_event_len <= self.max_event_len) {
            return bad("event length range is empty");
        }
        if self.max_overlap == 0 || self.max_overlap > N_OVERLAP {
            return bad("max_overlap must be in 1..=3");
        }
        if !(0.0 < self.min_distance && self.min_distance <= self.max_distance) {
            return bad("distance range is empty");
        }
        if !(0.0..=PI / 2.0).contains(&self.max_elevation) {
            return bad("max_elevation must be in [0, pi/2]");
        }
        Ok(())
    }

    /// Draw a scene; events that would break the overlap limit are redrawn a
    /// bounded number of times and then dropped.
    pub fn sample(&self, seed: u64) -> Result<SceneSpec> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_events = rng.random_range(self.min_events..=self.max_events);
        let max_len = self.max_event_len.min(self.duration);
        let min_len = self.min_event_len.min(max_len);
        let mut events: Vec<SourceEvent> = Vec::with_capacity(n_events);
        for _ in 0..n_events {
            for _attempt in 0..32 {
                let len = rng.random_range(min_len..=max_len);
                let onset = rng.random_range(0.0..=(self.duration - len).max(0.0));
                let az = rng.random_range(-PI..PI);
                let el = rng.random_range(-self.max_elevation..=self.max_elevation);
                let r = rng.random_range(self.min_distance..=self.max_distance);
                let ev = SourceEvent {
                    class_id: rng.random_range(0..self.n_class),
                    onset,
                    offset: onset + len,
                    position: [
                        r * el.cos() * az.cos(),
                        r * el.cos() * az.sin(),
                        r * el.sin(),
                    ],
                    gain: rng.random_range(-20.0..=0.0),
                    waveform_seed: rng.random(),
                };
                if max_overlap(events.iter().chain([&ev])) <= self.max_overlap {
                    events.push(ev);
                    break;
                }
            }
        }
        events.sort_by(|a, b| a.onset.total_cmp(&b.onset));
        Ok(SceneSpec {
            duration: self.duration,
            sample_rate: self.sample_rate,
            events,
            mic_positions: SceneSpec::DEFAULT_MICS,
            noise_floor: self.noise_floor,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event(position: [f64; 3]) -> SourceEvent {
        SourceEvent {
            class_id: 4,
            onset: 0.1,
            offset: 0.6,
            position,
            gain: -3.0,
            waveform_seed: 9,
        }
    }

    #[test]
    fn empty_silent_scene_is_zero() {
        let cap = synthesize_scene(&SceneSpec::new(0.5, vec![]), 1).unwrap();
        assert_eq!(cap.len(), 16000);
        assert!(cap
            .mic_a
            .iter()
            .chain(&cap.mic_b)
            .all(|c| c.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn symmetric_source_gives_equal_omni() {
        let spec = SceneSpec::new(1.0, vec![event([0.0, 1.5, 0.3])]);
        let cap = synthesize_scene(&spec, 1).unwrap();
        for (a, b) in cap.mic_a[0].iter().zip(&cap.mic_b[0]) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(cap.mic_a[0].iter().any(|v| v.abs() > 1e-3));
    }

    #[test]
    fn deterministic() {
        let mut spec = SceneSpec::new(1.0, vec![event([1.0, 1.0, 0.0])]);
        spec.noise_floor = -40.0;
        assert_eq!(
            synthesize_scene(&spec, 5).unwrap(),
            synthesize_scene(&spec, 5).unwrap()
        );
        assert_ne!(
            synthesize_scene(&spec, 5).unwrap(),
            synthesize_scene(&spec, 6).unwrap()
        );
    }

    #[test]
    fn sampler_respects_overlap() {
        let s = SceneSampler {
            min_events: 6,
            max_events: 6,
            max_overlap: 2,
            ..Default::default()
        };
        for seed in 0..20 {
            let spec = s.sample(seed).unwrap();
            spec.validate().unwrap();
            assert!(max_overlap(&spec.events) <= 2);
            assert!(spec.events.iter().all(|e| e.offset <= s.duration + 1e-12));
        }
    }

    #[test]
    fn waveform_peak_is_one() {
        let w = class_waveform(13, 2, 4000, 32000);
        let peak = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 1.0).abs() < 1e-12);
    }
}
