use super::{DualMicCapture, SourceEvent, N_CLASS, N_OVERLAP};
use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const SED_WIDTH: usize = N_CLASS * N_OVERLAP;
pub const DOA_WIDTH: usize = SED_WIDTH * 3;

/// Frame-level targets. Column `class·3 + slot` of `sed` is set while an
/// event occupies that slot; `doa` holds its (x, y, z) in columns
/// `(class·3 + slot)·3 ..+3` and is zero elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct SeldTarget {
    pub sed: Tensor<f64>,
    pub doa: Tensor<f64>,
}

impl SeldTarget {
    pub fn n_frames(&self) -> usize {
        self.sed.shape()[0]
    }
}

/// Centers of `n_frames` equal-width frames spanning `duration`.
pub fn frame_centers(duration: f64, n_frames: usize) -> Vec<f64> {
    let w = duration / n_frames.max(1) as f64;
    (0..n_frames).map(|i| (i as f64 + 0.5) * w).collect()
}

/// Overlap slot of every event: the lowest slot of its class not held by an
/// earlier-starting event still active at its onset.
pub fn assign_slots(events: &[SourceEvent]) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by(|&a, &b| events[a].onset.total_cmp(&events[b].onset).then(a.cmp(&b)));
    let mut slots = vec![0; events.len()];
    let mut held: Vec<[Option<f64>; N_OVERLAP]> = vec![[None; N_OVERLAP]; N_CLASS];
    for i in order {
        let e = &events[i];
        if e.class_id >= N_CLASS {
            return Err(Error::Validation(format!(
                "class_id {} out of range",
                e.class_id
            )));
        }
        let class = &mut held[e.class_id];
        let free = class
            .iter()
            .position(|s| s.is_none_or(|until| until <= e.onset))
            .ok_or_else(|| {
                Error::Validation(format!(
                    "more than {N_OVERLAP} simultaneous events of class {} at {:.3} s",
                    e.class_id, e.onset
                ))
            })?;
        class[free] = Some(e.offset);
        slots[i] = free;
    }
    Ok(slots)
}

/// Targets sampled at explicit frame center times.
pub fn make_targets_at(capture: &DualMicCapture, centers: &[f64]) -> Result<SeldTarget> {
    let slots = assign_slots(&capture.labels)?;
    let n = centers.len();
    let mut sed = vec![0.0; n * SED_WIDTH];
    let mut doa = vec![0.0; n * DOA_WIDTH];
    for (e, &slot) in capture.labels.iter().zip(&slots) {
        let col = e.class_id * N_OVERLAP + slot;
        for (f, &t) in centers.iter().enumerate() {
            if e.is_active(t) {
                sed[f * SED_WIDTH + col] = 1.0;
                doa[f * DOA_WIDTH + col * 3..f * DOA_WIDTH + col * 3 + 3]
                    .copy_from_slice(&e.position);
            }
        }
    }
    Ok(SeldTarget {
        sed: Tensor::from_vec(&[n, SED_WIDTH], sed)?,
        doa: Tensor::from_vec(&[n, DOA_WIDTH], doa)?,
    })
}

/// Targets for `n_frames` uniform frames over the capture.
pub fn make_targets(capture: &DualMicCapture, n_frames: usize) -> Result<SeldTarget> {
    make_targets_at(capture, &frame_centers(capture.duration(), n_frames))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn capture(events: Vec<SourceEvent>) -> DualMicCapture {
        let mut c = DualMicCapture::silent(32000, 32000);
        c.labels = events;
        c
    }

    fn ev(class_id: usize, onset: f64, offset: f64, position: [f64; 3]) -> SourceEvent {
        SourceEvent {
            class_id,
            onset,
            offset,
            position,
            gain: 0.0,
            waveform_seed: 0,
        }
    }

    #[test]
    fn empty_scene() {
        let t = make_targets(&capture(vec![]), 10).unwrap();
        assert_eq!(t.sed.shape(), &[10, 42]);
        assert_eq!(t.doa.shape(), &[10, 126]);
        assert!(t.sed.data().iter().chain(t.doa.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn single_full_event() {
        let t = make_targets(&capture(vec![ev(5, 0.0, 1.0, [1.0, 2.0, 0.0])]), 10).unwrap();
        for f in 0..10 {
            let sed = &t.sed.data()[f * 42..(f + 1) * 42];
            assert_eq!(sed.iter().sum::<f64>(), 1.0);
            assert_eq!(sed[15], 1.0);
            assert_eq!(&t.doa.data()[f * 126 + 45..f * 126 + 48], &[1.0, 2.0, 0.0]);
        }
    }

    #[test]
    fn same_class_overlap_uses_next_slots() {
        let events = vec![
            ev(2, 0.0, 0.8, [1.0, 0.0, 0.0]),
            ev(2, 0.2, 1.0, [0.0, 1.0, 0.0]),
            ev(2, 0.85, 1.0, [0.0, 0.0, 1.0]),
        ];
        assert_eq!(assign_slots(&events).unwrap(), vec![0, 1, 0]);
        let t = make_targets_at(&capture(events.clone()), &[0.5]).unwrap();
        assert_eq!(&t.sed.data()[6..9], &[1.0, 1.0, 0.0]);
        let mut four = events;
        four.truncate(2);
        four.push(ev(2, 0.3, 0.9, [1.0; 3]));
        four.push(ev(2, 0.4, 0.9, [1.0; 3]));
        assert!(assign_slots(&four).is_err());
    }
}
