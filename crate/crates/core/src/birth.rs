//! Track birth from clutter-assigned detections.
//!
//! For every clutter detection in the newest frame a candidate sequence is
//! chained backwards through the previous `window` frames by nearest
//! neighbour. The candidate becomes a track when its marginal likelihood
//! under the target model (a flat Gaussian prior pushed through the dynamics
//! and observation models) beats the likelihood of independent uniform
//! clutter.

use std::collections::{HashSet, VecDeque};

use log::warn;

use crate::dynamics::transition_matrix;
use crate::error::{Error, Result};
use crate::linalg;
use crate::types::{BoundingBox, Detection, GaussianBelief, Mat4, Mat6, ModelParams, Track, Vec4, Vec6};

#[derive(Debug, Clone, PartialEq)]
pub struct BirthParams {
    /// Number of past frames `L` chained behind the newest detection.
    pub window: usize,
    pub flat_mean: Vec6,
    pub flat_covariance: Mat6,
    /// Initial covariance of spawned tracks.
    pub birth_covariance: Mat6,
    /// A detection counts as clutter when its clutter responsibility is at
    /// least this.
    pub clutter_threshold: f64,
    /// Chaining gate, in multiples of the current box diagonal.
    pub gate_factor: f64,
    /// Accepted chains whose spawn box overlaps a box already spawned in the
    /// same scan by more than this IoU are absorbed instead of spawning (one
    /// object seen by several detectors).
    pub merge_iou: f64,
}

impl BirthParams {
    /// Flat prior centred on the image with standard deviations equal to the
    /// image dimensions for position and size.
    pub fn for_image(width: f64, height: f64, velocity_std: f64, birth_covariance: Mat6) -> Self {
        Self {
            window: 2,
            flat_mean: Vec6::new(width / 2.0, height / 2.0, width / 2.0, height / 2.0, 0.0, 0.0),
            flat_covariance: Mat6::from_diagonal(&Vec6::new(
                width * width,
                height * height,
                width * width,
                height * height,
                velocity_std * velocity_std,
                velocity_std * velocity_std,
            )),
            birth_covariance,
            clutter_threshold: 0.5,
            gate_factor: 2.0,
            merge_iou: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 1 {
            return Err(Error::Config("birth window must be at least 1".into()));
        }
        if !linalg::is_spd(&self.flat_covariance) || !linalg::is_spd(&self.birth_covariance) {
            return Err(Error::Config("birth covariances must be SPD".into()));
        }
        if !(0.0..=1.0).contains(&self.clutter_threshold) {
            return Err(Error::Config("birth clutter threshold must be in [0, 1]".into()));
        }
        if !(self.gate_factor > 0.0) {
            return Err(Error::Config("birth gate factor must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.merge_iou) {
            return Err(Error::Config("birth merge IoU must be in [0, 1]".into()));
        }
        Ok(())
    }
}

impl Default for BirthParams {
    fn default() -> Self {
        Self::for_image(
            640.0,
            480.0,
            10.0,
            Mat6::from_diagonal(&Vec6::new(9.0, 9.0, 9.0, 9.0, 4.0, 4.0)),
        )
    }
}

/// `L + 1` detections of one detector in consecutive frames, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSequence {
    detections: Vec<Detection>,
}

impl CandidateSequence {
    pub fn new(detections: Vec<Detection>) -> Result<Self> {
        let first = detections
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty candidate sequence".into()))?;
        for (j, d) in detections.iter().enumerate() {
            if d.detector != first.detector {
                return Err(Error::InvalidArgument("candidate mixes detectors".into()));
            }
            if d.frame != first.frame + j as u64 {
                return Err(Error::InvalidArgument("candidate frames are not consecutive".into()));
            }
        }
        Ok(Self { detections })
    }

    pub fn detections(&self) -> &[Detection] {
        &self.detections
    }

    pub fn newest(&self) -> &Detection {
        self.detections.last().expect("non-empty by construction")
    }

    /// `L`, the number of frames behind the newest one.
    pub fn window(&self) -> usize {
        self.detections.len() - 1
    }
}

/// `ln tau0`: log marginal likelihood of the sequence under the target
/// hypothesis, accumulated by sequential Kalman prediction and update from
/// the flat prior at the oldest frame.
pub fn log_tau0(candidate: &CandidateSequence, params: &ModelParams) -> Result<f64> {
    let detector = params
        .detectors
        .get(candidate.newest().detector)
        .ok_or_else(|| Error::InvalidArgument("candidate detector is not configured".into()))?;
    let d = transition_matrix();
    let p = detector.projection();
    let mut mean = params.birth.flat_mean;
    let mut cov = params.birth.flat_covariance;
    let mut total = 0.0;
    for (j, det) in candidate.detections().iter().enumerate() {
        if j > 0 {
            mean = d * mean;
            cov = linalg::symmetrize(&(d * cov * d.transpose() + params.dynamics_covariance));
        }
        let innovation_cov: Mat4 = linalg::symmetrize(&(p * cov * p.transpose() + detector.obs_covariance()));
        let innovation_precision = linalg::spd_inverse(&innovation_cov)?;
        let residual: Vec4 = det.bbox.to_vector() - p * mean - detector.offset();
        total += linalg::gaussian_log_density(&residual, &innovation_precision, linalg::spd_log_det(&innovation_cov)?);
        let gain = cov * p.transpose() * innovation_precision;
        mean += gain * residual;
        // Joseph form: the flat prior is huge next to the observation noise
        let ikp = Mat6::identity() - gain * p;
        cov = linalg::symmetrize(&(ikp * cov * ikp.transpose() + gain * detector.obs_covariance() * gain.transpose()));
    }
    Ok(total)
}

pub fn tau0(candidate: &CandidateSequence, params: &ModelParams) -> Result<f64> {
    Ok(log_tau0(candidate, params)?.exp())
}

/// `ln tau1`: independent uniform clutter, `(L + 1) ln u(y)`.
pub fn log_tau1(candidate: &CandidateSequence, params: &ModelParams) -> Result<f64> {
    let detector = params
        .detectors
        .get(candidate.newest().detector)
        .ok_or_else(|| Error::InvalidArgument("candidate detector is not configured".into()))?;
    Ok(candidate.detections().len() as f64 * detector.clutter_density().ln())
}

pub fn tau1(candidate: &CandidateSequence, params: &ModelParams) -> Result<f64> {
    Ok(log_tau1(candidate, params)?.exp())
}

/// Clutter-assigned detections of the most recent `L + 1` frames.
#[derive(Debug, Clone, Default)]
pub struct ClutterHistory {
    frames: VecDeque<(u64, Vec<Detection>)>,
}

impl ClutterHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records the clutter detections of `frame`, dropping frames older than
    /// `window` frames behind it.
    pub fn push(&mut self, frame: u64, detections: Vec<Detection>, window: usize) {
        self.frames.push_back((frame, detections));
        while let Some((oldest, _)) = self.frames.front() {
            if *oldest + (window as u64) < frame {
                self.frames.pop_front();
            } else {
                break;
            }
        }
    }

    pub fn frame(&self, frame: u64) -> Option<&[Detection]> {
        self.frames
            .iter()
            .find(|(f, _)| *f == frame)
            .map(|(_, d)| d.as_slice())
    }

    pub fn latest_frame(&self) -> Option<u64> {
        self.frames.back().map(|(f, _)| *f)
    }

    pub fn is_empty(&self) -> bool {
        self.frames.iter().all(|(_, d)| d.is_empty())
    }

    fn remove(&mut self, consumed: &HashSet<(u64, usize)>) {
        for (frame, dets) in self.frames.iter_mut() {
            let mut idx = 0;
            dets.retain(|_| {
                let keep = !consumed.contains(&(*frame, idx));
                idx += 1;
                keep
            });
        }
    }
}

/// Candidate with the `(frame, index-in-history)` keys of its detections.
struct Chain {
    candidate: CandidateSequence,
    keys: Vec<(u64, usize)>,
    log_ratio: f64,
}

/// Enumerates nearest-neighbour chains ending in the newest history frame.
pub fn enumerate_candidates(history: &ClutterHistory, window: usize, gate_factor: f64) -> Vec<CandidateSequence> {
    chains(history, window, gate_factor)
        .into_iter()
        .map(|(c, _)| c)
        .collect()
}

fn chains(history: &ClutterHistory, window: usize, gate_factor: f64) -> Vec<(CandidateSequence, Vec<(u64, usize)>)> {
    let Some(t) = history.latest_frame() else {
        return Vec::new();
    };
    if t < window as u64 {
        return Vec::new();
    }
    let Some(newest) = history.frame(t) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    'seeds: for (k0, seed) in newest.iter().enumerate() {
        let mut seq = vec![seed.clone()];
        let mut keys = vec![(t, k0)];
        let mut current = seed;
        for l in 1..=window as u64 {
            let Some(previous) = history.frame(t - l) else {
                continue 'seeds;
            };
            let gate = gate_factor * current.bbox.diagonal();
            let (cx, cy) = current.bbox.center();
            let nearest = previous
                .iter()
                .enumerate()
                .filter(|(_, d)| d.detector == seed.detector)
                .map(|(k, d)| {
                    let (x, y) = d.bbox.center();
                    (k, d, (x - cx).hypot(y - cy))
                })
                .filter(|(_, _, dist)| *dist <= gate)
                .min_by(|a, b| a.2.total_cmp(&b.2));
            let Some((k, d, _)) = nearest else {
                continue 'seeds;
            };
            seq.push(d.clone());
            keys.push((t - l, k));
            current = d;
        }
        seq.reverse();
        keys.reverse();
        if let Ok(candidate) = CandidateSequence::new(seq) {
            out.push((candidate, keys));
        }
    }
    out
}

/// Runs the birth test on the clutter history and returns the new tracks.
/// Detections used by a birth are removed from the history so each seeds at
/// most one track.
pub fn scan_and_spawn(
    history: &mut ClutterHistory,
    existing_tracks: usize,
    params: &ModelParams,
    next_id: &mut u32,
) -> Result<Vec<Track>> {
    let birth = &params.birth;
    let mut accepted: Vec<Chain> = Vec::new();
    for (candidate, keys) in chains(history, birth.window, birth.gate_factor) {
        let log_ratio = log_tau0(&candidate, params)? - log_tau1(&candidate, params)?;
        if log_ratio > 0.0 {
            accepted.push(Chain {
                candidate,
                keys,
                log_ratio,
            });
        }
    }
    accepted.sort_by(|a, b| b.log_ratio.total_cmp(&a.log_ratio).then(a.keys.cmp(&b.keys)));

    let mut consumed: HashSet<(u64, usize)> = HashSet::new();
    let mut spawned = Vec::new();
    for chain in accepted {
        if chain.keys.iter().any(|k| consumed.contains(k)) {
            continue;
        }
        if existing_tracks + spawned.len() >= params.max_tracks {
            warn!("track capacity {} reached, skipping birth", params.max_tracks);
            break;
        }
        consumed.extend(chain.keys.iter().copied());
        let newest = chain.candidate.newest();
        let detector = &params.detectors[newest.detector];
        let bbox = state_box(detector.projection(), detector.offset(), &newest.bbox.to_vector());
        let spawn_box = BoundingBox::from_vector_clamped(&bbox);
        if spawned
            .iter()
            .any(|t: &Track| t.belief.bbox().iou(&spawn_box) > birth.merge_iou)
        {
            continue;
        }
        let mean = Vec6::new(bbox[0], bbox[1], bbox[2], bbox[3], 0.0, 0.0);
        let belief = GaussianBelief::new(mean, birth.birth_covariance)?;
        spawned.push(Track::new(*next_id, belief, newest.appearance.clone(), newest.frame));
        *next_id += 1;
    }
    history.remove(&consumed);
    Ok(spawned)
}

/// Maps an observed box back into the state's box coordinates by inverting
/// the detector's affine map (identity for plain box detectors).
fn state_box(projection: &crate::types::Mat46, offset: &Vec4, y: &Vec4) -> Vec4 {
    let a: Mat4 = projection.fixed_view::<4, 4>(0, 0).into_owned();
    if a == Mat4::identity() && *offset == Vec4::zeros() {
        return *y;
    }
    a.try_inverse().map_or(*y, |inv| inv * (y - offset))
}
