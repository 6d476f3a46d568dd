//! Frame-wise SELD metrics: location-sensitive detection (ER, F),
//! class-sensitive localization (LE, LR) and the composite scores.

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::ambisonics::{SeldTarget, N_CLASS, N_OVERLAP};
use crate::error::{Error, Result};
use crate::hypercomplex::Vec3;
use crate::nn::{Real, Tensor};

pub const DEFAULT_DIST_THRESHOLD: f64 = 2.0;
pub const DEFAULT_SED_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub class_id: usize,
    pub position: Vec3,
}

/// Events active in each frame.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameEvents {
    pub frames: Vec<Vec<Event>>,
    /// Frame times in seconds; empty when unknown.
    pub times: Vec<f64>,
}

impl FrameEvents {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn n_events(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }

    pub fn from_target(target: &SeldTarget) -> Result<Self> {
        decode_predictions(&target.sed, &target.doa, DEFAULT_SED_THRESHOLD, &[])
    }

    pub fn validate(&self) -> Result<()> {
        for e in self.frames.iter().flatten() {
            if e.class_id >= N_CLASS || e.position.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("invalid frame event {e:?}")));
            }
        }
        Ok(())
    }
}

/// Threshold per-slot activities `[n, 42]` and attach the matching DOA
/// triples from `[n, 126]`.
pub fn decode_predictions<T: Real>(
    sed: &Tensor<T>,
    doa: &Tensor<T>,
    sed_threshold: f64,
    frame_times: &[f64],
) -> Result<FrameEvents> {
    let width = N_CLASS * N_OVERLAP;
    if sed.rank() != 2 || sed.shape()[1] != width || doa.shape() != [sed.shape()[0], width * 3] {
        return Err(Error::Shape(format!(
            "expected sed [n, {width}] and doa [n, {}], got {:?} and {:?}",
            width * 3,
            sed.shape(),
            doa.shape()
        )));
    }
    let n = sed.shape()[0];
    if !frame_times.is_empty() && frame_times.len() != n {
        return Err(Error::Shape(format!(
            "{} frame times for {n} frames",
            frame_times.len()
        )));
    }
    let frames = (0..n)
        .map(|f| {
            let s = &sed.data()[f * width..(f + 1) * width];
            let d = &doa.data()[f * width * 3..(f + 1) * width * 3];
            s.iter()
                .enumerate()
                .filter(|(_, &v)| v.to_f64().unwrap_or(0.0) >= sed_threshold)
                .map(|(col, _)| Event {
                    class_id: col / N_OVERLAP,
                    position: std::array::from_fn(|k| d[col * 3 + k].to_f64().unwrap_or(f64::NAN)),
                })
                .collect()
        })
        .collect();
    Ok(FrameEvents {
        frames,
        times: frame_times.to_vec(),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matching {
    /// Repeatedly pair the closest remaining prediction and reference.
    #[default]
    Greedy,
    /// Minimum-cost assignment.
    Hungarian,
}

fn euclidean(a: Vec3, b: Vec3) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Angle between two directions seen from the origin, in degrees; 180 when
/// either vector is zero.
pub fn angular_distance(a: Vec3, b: Vec3) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return 180.0;
    }
    let dot = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    let sin = cross.iter().map(|v| v * v).sum::<f64>().sqrt();
    sin.atan2(dot).to_degrees()
}

fn greedy(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(f64, usize, usize)> = cost
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, &c)| (c, i, j)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    let (mut used_r, mut used_c) = (vec![false; rows], vec![false; cols]);
    let mut out = Vec::new();
    for (_, i, j) in pairs {
        if !used_r[i] && !used_c[j] {
            used_r[i] = true;
            used_c[j] = true;
            out.push((i, j));
        }
    }
    out
}

/// Minimum-cost assignment (shortest augmenting paths with potentials).
/// Pairs every row when rows ≤ columns and vice versa.
fn hungarian(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    if rows > cols {
        let t: Vec<Vec<f64>> = (0..cols)
            .map(|j| (0..rows).map(|i| cost[i][j]).collect())
            .collect();
        return hungarian(&t).into_iter().map(|(j, i)| (i, j)).collect();
    }
    let (n, m) = (rows, cols);
    let (mut u, mut v) = (vec![0.0; n + 1], vec![0.0; m + 1]);
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=m)
        .filter(|&j| p[j] != 0)
        .map(|j| (p[j] - 1, j - 1))
        .collect()
}

/// Class-matched pairs `(pred_index, ref_index, cost)` for one frame.
fn match_frame(
    pred: &[Event],
    refs: &[Event],
    metric: impl Fn(Vec3, Vec3) -> f64,
    assign_cost: impl Fn(f64) -> f64,
    matching: Matching,
) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for class in 0..N_CLASS {
        let pi: Vec<usize> = (0..pred.len())
            .filter(|&i| pred[i].class_id == class)
            .collect();
        let ri: Vec<usize> = (0..refs.len())
            .filter(|&i| refs[i].class_id == class)
            .collect();
        if pi.is_empty() || ri.is_empty() {
            continue;
        }
        let raw: Vec<Vec<f64>> = pi
            .iter()
            .map(|&p| {
                ri.iter()
                    .map(|&r| metric(pred[p].position, refs[r].position))
                    .collect()
            })
            .collect();
        let pairs = match matching {
            Matching::Greedy => greedy(&raw),
            Matching::Hungarian => {
                let c: Vec<Vec<f64>> = raw
                    .iter()
                    .map(|row| row.iter().map(|&d| assign_cost(d)).collect())
                    .collect();
                hungarian(&c)
            }
        };
        out.extend(pairs.into_iter().map(|(a, b)| (pi[a], ri[b], raw[a][b])));
    }
    out
}

fn check_aligned(pred: &FrameEvents, refs: &FrameEvents) -> Result<()> {
    if pred.n_frames() != refs.n_frames() {
        return Err(Error::Shape(format!(
            "{} predicted frames vs {} reference frames",
            pred.n_frames(),
            refs.n_frames()
        )));
    }
    Ok(())
}

/// Summable detection counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub n_ref: usize,
}

impl AddAssign for DetectionCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.substitutions += o.substitutions;
        self.deletions += o.deletions;
        self.insertions += o.insertions;
        self.n_ref += o.n_ref;
    }
}

impl DetectionCounts {
    pub fn error_rate(&self) -> f64 {
        (self.substitutions + self.deletions + self.insertions) as f64 / self.n_ref.max(1) as f64
    }

    /// F-score; 1 when there was nothing to detect and nothing was predicted.
    pub fn f_score(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

pub fn detection_counts(
    pred: &FrameEvents,
    refs: &FrameEvents,
    dist_threshold: f64,
    matching: Matching,
) -> Result<DetectionCounts> {
    check_aligned(pred, refs)?;
    let mut acc = DetectionCounts::default();
    // beyond-threshold pairs cost more than any TP set they could displace
    let penalty = |d: f64| if d <= dist_threshold { d } else { 1e9 };
    for (p, r) in pred.frames.iter().zip(&refs.frames) {
        let tp = match_frame(p, r, euclidean, penalty, matching)
            .into_iter()
            .filter(|&(_, _, d)| d <= dist_threshold)
            .count();
        let fp = p.len() - tp;
        let fn_ = r.len() - tp;
        acc += DetectionCounts {
            tp,
            fp,
            fn_,
            substitutions: fp.min(fn_),
            deletions: fn_.saturating_sub(fp),
            insertions: fp.saturating_sub(fn_),
            n_ref: r.len(),
        };
    }
    Ok(acc)
}

/// `(ER, F)` with greedy pairing.
pub fn location_sensitive_detection(
    pred: &FrameEvents,
    refs: &FrameEvents,
    dist_threshold: f64,
) -> Result<(f64, f64)> {
    let c = detection_counts(pred, refs, dist_threshold, Matching::Greedy)?;
    Ok((c.error_rate(), c.f_score()))
}

/// Summable localization counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LocalizationCounts {
    pub angle_sum: f64,
    pub matches: usize,
    pub n_ref: usize,
}

impl AddAssign for LocalizationCounts {
    fn add_assign(&mut self, o: Self) {
        self.angle_sum += o.angle_sum;
        self.matches += o.matches;
        self.n_ref += o.n_ref;
    }
}

impl LocalizationCounts {
    /// Mean angular error in degrees; 180 when nothing was matched.
    pub fn localization_error(&self) -> f64 {
        if self.matches == 0 {
            180.0
        } else {
            self.angle_sum / self.matches as f64
        }
    }

    pub fn localization_recall(&self) -> f64 {
        if self.n_ref == 0 {
            1.0
        } else {
            self.matches as f64 / self.n_ref as f64
        }
    }
}

pub fn localization_counts(
    pred: &FrameEvents,
    refs: &FrameEvents,
    matching: Matching,
) -> Result<LocalizationCounts> {
    check_aligned(pred, refs)?;
    let mut acc = LocalizationCounts::default();
    for (p, r) in pred.frames.iter().zip(&refs.frames) {
        let pairs = match_frame(p, r, angular_distance, |d| d, matching);
        acc += LocalizationCounts {
            angle_sum: pairs.iter().map(|x| x.2).sum(),
            matches: pairs.len(),
            n_ref: r.len(),
        };
    }
    Ok(acc)
}

/// `(LE in degrees, LR)` with greedy pairing.
pub fn class_sensitive_localization(pred: &FrameEvents, refs: &FrameEvents) -> Result<(f64, f64)> {
    let c = localization_counts(pred, refs, Matching::Greedy)?;
    Ok((c.localization_error(), c.localization_recall()))
}

/// `(LSD, CSL, G-SELD)`.
pub fn scores(er: f64, f: f64, le_degrees: f64, lr: f64) -> (f64, f64, f64) {
    let lsd = (er + (1.0 - f)) / 2.0;
    let csl = (le_degrees / 180.0 + (1.0 - lr)) / 2.0;
    (lsd, csl, gseld(lsd, csl))
}

pub fn gseld(lsd: f64, csl: f64) -> f64 {
    (lsd + csl) / 2.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeldScores {
    pub er: f64,
    pub f: f64,
    pub le_degrees: f64,
    pub lr: f64,
    pub lsd: f64,
    pub csl: f64,
    pub gseld: f64,
}

impl SeldScores {
    pub fn new(er: f64, f: f64, le_degrees: f64, lr: f64) -> Self {
        let (lsd, csl, gseld) = scores(er, f, le_degrees, lr);
        Self {
            er,
            f,
            le_degrees,
            lr,
            lsd,
            csl,
            gseld,
        }
    }

    pub fn from_counts(det: &DetectionCounts, loc: &LocalizationCounts) -> Self {
        Self::new(
            det.error_rate(),
            det.f_score(),
            loc.localization_error(),
            loc.localization_recall(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub sed_threshold: f64,
    pub dist_threshold: f64,
    pub matching: Matching,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            sed_threshold: DEFAULT_SED_THRESHOLD,
            dist_threshold: DEFAULT_DIST_THRESHOLD,
            matching: Matching::Greedy,
        }
    }
}

/// Accumulates counters over many `(prediction, reference)` samples.
#[derive(Clone, Debug, Default)]
pub struct Evaluator {
    pub config: MetricConfig,
    pub detection: DetectionCounts,
    pub localization: LocalizationCounts,
}

impl Evaluator {
    pub fn new(config: MetricConfig) -> Self {
        Self {
            config,
            ..Default::default()
        }
    }

    pub fn add(&mut self, pred: &FrameEvents, refs: &FrameEvents) -> Result<()> {
        pred.validate()?;
        refs.validate()?;
        self.detection +=
            detection_counts(pred, refs, self.config.dist_threshold, self.config.matching)?;
        self.localization += localization_counts(pred, refs, self.config.matching)?;
        Ok(())
    }

    pub fn scores(&self) -> SeldScores {
        SeldScores::from_counts(&self.detection, &self.localization)
    }
}
