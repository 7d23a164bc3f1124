//! The causal per-frame pipeline: predict, variational EM, birth scan,
//! visibility update, report.

use log::debug;

use crate::birth::{scan_and_spawn, ClutterHistory};
use crate::error::{Error, Result};
use crate::io::TrackRecord;
use crate::types::{BoundingBox, Detection, ModelParams, Track};
use crate::vem::{run_frame, AssignmentPriors};
use crate::visibility::{is_reported, visibility_observation, visibility_update, VisibilityState};

/// What happened in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub frame: u64,
    pub reported: Vec<TrackRecord>,
    pub iterations_used: usize,
    pub converged: bool,
    /// Ids of tracks born in this frame.
    pub births: Vec<u32>,
    /// Detections whose responsibility row had a zero denominator and were
    /// assigned to clutter.
    pub flagged: usize,
}

#[derive(Debug, Clone)]
pub struct Tracker {
    params: ModelParams,
    tracks: Vec<Track>,
    priors: AssignmentPriors,
    history: ClutterHistory,
    next_id: u32,
    last_frame: u64,
}

impl Tracker {
    pub fn new(params: ModelParams) -> Result<Self> {
        params.validate()?;
        let priors = AssignmentPriors::uniform(params.detectors.len(), &[]);
        Ok(Self {
            params,
            tracks: Vec::new(),
            priors,
            history: ClutterHistory::new(),
            next_id: 1,
            last_frame: 0,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Processes frame `frame` (must follow the previous frame directly).
    pub fn step(&mut self, frame: u64, detections: &[Detection]) -> Result<FrameOutput> {
        if frame != self.last_frame + 1 {
            return Err(Error::InvalidArgument(format!(
                "frame {frame} does not follow frame {}",
                self.last_frame
            )));
        }
        self.last_frame = frame;
        let detections: Vec<Detection> = detections
            .iter()
            .map(|d| Detection { frame, ..d.clone() })
            .collect();

        let result = run_frame(&self.tracks, &detections, &self.params, &self.priors)?;
        for (track, belief) in self.tracks.iter_mut().zip(&result.beliefs) {
            track.belief = *belief;
        }
        for (i, estimate) in result.sigma_estimates.iter().enumerate() {
            if estimate.accepted {
                self.params.detectors[i].set_obs_covariance(estimate.matrix)?;
            }
        }
        for (track, estimate) in self.tracks.iter_mut().zip(&result.lambda_estimates) {
            if let Some(lambda) = estimate {
                if crate::linalg::is_spd(lambda) {
                    track.dynamics_covariance = Some(*lambda);
                }
            }
        }
        self.priors = result.assignment_priors;

        let threshold = self.params.birth.clutter_threshold;
        let mut clutter = Vec::new();
        for (i, dets) in result.detections.iter().enumerate() {
            for (k, det) in dets.iter().enumerate() {
                if result.responsibilities.get(i, k, 0) >= threshold {
                    clutter.push(det.clone());
                }
            }
        }
        self.history.push(frame, clutter, self.params.birth.window);

        let existing = self.tracks.len();
        for (n, track) in self.tracks.iter_mut().enumerate() {
            let nu = visibility_observation(n + 1, &self.priors, track.existence);
            let state = visibility_update(
                VisibilityState::new(track.visibility_posterior),
                nu,
                self.params.pi_v,
                self.params.lambda_visibility,
                self.params.visibility_likelihood,
            );
            track.visibility_posterior = state.posterior_visible;
        }

        let born = scan_and_spawn(&mut self.history, existing, &self.params, &mut self.next_id)?;
        let births: Vec<u32> = born.iter().map(|t| t.id).collect();
        self.tracks.extend(born);

        let reported = self
            .tracks
            .iter()
            .filter(|t| t.existence && is_reported(t, self.params.report_threshold))
            .map(|t| TrackRecord {
                frame,
                id: t.id,
                bbox: t.belief.bbox(),
                visibility: t.visibility_posterior,
            })
            .collect();
        debug!(
            "frame {frame}: {} detections, {} tracks, {} iterations",
            detections.len(),
            self.tracks.len(),
            result.iterations_used
        );
        Ok(FrameOutput {
            frame,
            reported,
            iterations_used: result.iterations_used,
            converged: result.converged,
            births,
            flagged: result.responsibilities.flagged.len(),
        })
    }
}

/// Runs a tracker over a whole stream (`stream[t - 1]` = frame `t`).
pub fn track_stream(params: ModelParams, stream: &[Vec<Detection>]) -> Result<Vec<FrameOutput>> {
    let mut tracker = Tracker::new(params)?;
    stream
        .iter()
        .enumerate()
        .map(|(t, dets)| tracker.step(t as u64 + 1, dets))
        .collect()
}

/// Flattens per-frame outputs into track-file records.
pub fn records(outputs: &[FrameOutput]) -> Vec<TrackRecord> {
    outputs.iter().flat_map(|o| o.reported.iter().cloned()).collect()
}

/// Reported boxes per frame, for evaluation.
pub fn frame_sets(outputs: &[FrameOutput]) -> Vec<Vec<(u32, BoundingBox)>> {
    outputs
        .iter()
        .map(|o| o.reported.iter().map(|r| (r.id, r.bbox)).collect())
        .collect()
}
