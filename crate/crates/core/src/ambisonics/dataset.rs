//! On-disk layout: `samples/<id>/audio_a.wav`, `samples/<id>/audio_b.wav`
//! (4-channel 32-bit float, W,X,Y,Z) and `samples/<id>/labels.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BFormat, DualMicCapture, SourceEvent};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    pub sample_rate: u32,
    pub n_samples: usize,
    pub events: Vec<SourceEvent>,
}

fn wav_err(path: &Path) -> impl FnOnce(hound::Error) -> Error + '_ {
    move |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_wav(path: &Path, signal: &BFormat, sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 4,
        sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(wav_err(path))?;
    for i in 0..signal[0].len() {
        for ch in signal {
            w.write_sample(ch[i] as f32).map_err(wav_err(path))?;
        }
    }
    w.finalize().map_err(wav_err(path))
}

pub fn read_wav(path: &Path) -> Result<(BFormat, u32)> {
    let mut r = hound::WavReader::open(path).map_err(wav_err(path))?;
    let spec = r.spec();
    if spec.channels != 4 {
        return Err(Error::Validation(format!(
            "{}: expected 4 channels, found {}",
            path.display(),
            spec.channels
        )));
    }
    let samples: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => r
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        hound::SampleFormat::Int => {
            let scale = 2f64.powi(spec.bits_per_sample as i32 - 1);
            r.samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
        }
    }
    .map_err(wav_err(path))?;
    let mut out: BFormat = Default::default();
    for frame in samples.chunks_exact(4) {
        for (ch, &v) in out.iter_mut().zip(frame) {
            ch.push(v);
        }
    }
    Ok((out, spec.sample_rate))
}

pub fn write_capture(sample_dir: &Path, capture: &DualMicCapture) -> Result<()> {
    fs::create_dir_all(sample_dir).map_err(|e| Error::io(sample_dir, e))?;
    write_wav(
        &sample_dir.join("audio_a.wav"),
        &capture.mic_a,
        capture.sample_rate,
    )?;
    write_wav(
        &sample_dir.join("audio_b.wav"),
        &capture.mic_b,
        capture.sample_rate,
    )?;
    let labels = Labels {
        sample_rate: capture.sample_rate,
        n_samples: capture.len(),
        events: capture.labels.clone(),
    };
    let path = sample_dir.join("labels.json");
    fs::write(&path, serde_json::to_vec_pretty(&labels)?).map_err(|e| Error::io(path, e))
}

pub fn read_capture(sample_dir: &Path) -> Result<DualMicCapture> {
    let (mic_a, sr_a) = read_wav(&sample_dir.join("audio_a.wav"))?;
    let (mic_b, sr_b) = read_wav(&sample_dir.join("audio_b.wav"))?;
    let path = sample_dir.join("labels.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let labels: Labels = serde_json::from_str(&text)?;
    if sr_a != sr_b || sr_a != labels.sample_rate {
        return Err(Error::Validation(format!(
            "{}: sample rates disagree ({sr_a}, {sr_b}, {})",
            sample_dir.display(),
            labels.sample_rate
        )));
    }
    let capture = DualMicCapture {
        sample_rate: sr_a,
        mic_a,
        mic_b,
        labels: labels.events,
    };
    capture.check()?;
    Ok(capture)
}

/// Sample directories under `root/samples`, sorted by name.
pub fn list_samples(root: &Path) -> Result<Vec<PathBuf>> {
    let dir = root.join("samples");
    let mut out = Vec::new();
    for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
        let entry = entry.map_err(|e| Error::io(&dir, e))?;
        if entry.path().join("labels.json").is_file() {
            out.push(entry.path());
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::{synthesize_scene, SceneSampler};
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SceneSampler {
            duration: 0.5,
            ..Default::default()
        }
        .sample(3)
        .unwrap();
        let cap = synthesize_scene(&spec, 3).unwrap();
        let sample = dir.path().join("samples").join("0000");
        write_capture(&sample, &cap).unwrap();
        let back = read_capture(&sample).unwrap();
        assert_eq!(back.labels, cap.labels);
        assert_eq!(back.len(), cap.len());
        for (a, b) in back.mic_b.iter().zip(&cap.mic_b) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
        assert_eq!(list_samples(dir.path()).unwrap(), vec![sample]);
    }
}
