//! Per-frame variational EM: soft assignment (E-Z), Gaussian state update
//! (E-X) and assignment-prior re-estimation (M), plus the optional
//! covariance M-steps.

use log::debug;

use crate::dynamics::{predict_belief, transition_matrix};
use crate::error::{Error, Result};
use crate::linalg;
use crate::observation::{epsilon_table, EpsilonTable};
use crate::types::{Detection, GaussianBelief, Mat4, Mat6, ModelParams, Track, Vec6};

/// Prior probability that an observation of detector `i` comes from target
/// `n` (0 = clutter). Each detector's vector sums to one over clutter and the
/// existing tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentPriors {
    per_detector: Vec<Vec<f64>>,
}

impl AssignmentPriors {
    /// Uniform over clutter and the existing tracks.
    pub fn uniform(detectors: usize, existence: &[bool]) -> Self {
        let active = 1 + existence.iter().filter(|e| **e).count();
        let row: Vec<f64> = std::iter::once(1.0 / active as f64)
            .chain(existence.iter().map(|e| if *e { 1.0 / active as f64 } else { 0.0 }))
            .collect();
        Self {
            per_detector: vec![row; detectors],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.windows(2).any(|w| w[0].len() != w[1].len()) || rows.iter().any(|r| r.is_empty()) {
            return Err(Error::InvalidArgument("ragged assignment priors".into()));
        }
        if rows.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("assignment priors must be non-negative".into()));
        }
        Ok(Self { per_detector: rows })
    }

    pub fn detectors(&self) -> usize {
        self.per_detector.len()
    }

    /// Number of targets including clutter.
    pub fn targets(&self) -> usize {
        self.per_detector.first().map_or(1, Vec::len)
    }

    pub fn get(&self, detector: usize, target: usize) -> f64 {
        self.per_detector[detector][target]
    }

    pub fn row(&self, detector: usize) -> &[f64] {
        &self.per_detector[detector]
    }

    /// Resizes to the current track set, zeroes non-existing tracks,
    /// renormalizes, and mixes in `blend` of the uniform distribution so a
    /// track whose prior collapsed to zero can be re-acquired.
    pub fn carry_over(&self, detectors: usize, existence: &[bool], blend: f64) -> Self {
        let uniform = Self::uniform(detectors, existence);
        let mut rows = Vec::with_capacity(detectors);
        for i in 0..detectors {
            let prev = self.per_detector.get(i);
            let mut row: Vec<f64> = (0..=existence.len())
                .map(|n| {
                    let active = n == 0 || existence[n - 1];
                    let v = prev.and_then(|r| r.get(n)).copied().unwrap_or(0.0);
                    if active { v } else { 0.0 }
                })
                .collect();
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                row.iter_mut().for_each(|v| *v /= total);
            } else {
                row.clone_from(&uniform.per_detector[i]);
            }
            for (v, u) in row.iter_mut().zip(&uniform.per_detector[i]) {
                *v = (1.0 - blend) * *v + blend * u;
            }
            rows.push(row);
        }
        Self { per_detector: rows }
    }
}

/// Posterior assignment probabilities `alpha[i][k][n]`, target 0 = clutter.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    targets: usize,
    blocks: Vec<Vec<f64>>,
    /// Detections whose evidence vanished for every target; their mass went
    /// to clutter.
    pub flagged: Vec<(usize, usize)>,
}

impl Responsibilities {
    /// `targets` counts the clutter target.
    pub fn zeros(detections_per_detector: &[usize], targets: usize) -> Self {
        Self {
            targets,
            blocks: detections_per_detector.iter().map(|k| vec![0.0; k * targets]).collect(),
            flagged: Vec::new(),
        }
    }

    pub fn detectors(&self) -> usize {
        self.blocks.len()
    }

    pub fn detections(&self, detector: usize) -> usize {
        self.blocks[detector].len() / self.targets
    }

    pub fn targets(&self) -> usize {
        self.targets
    }

    pub fn get(&self, detector: usize, detection: usize, target: usize) -> f64 {
        self.blocks[detector][detection * self.targets + target]
    }

    pub fn set(&mut self, detector: usize, detection: usize, target: usize, value: f64) {
        self.blocks[detector][detection * self.targets + target] = value;
    }

    pub fn row(&self, detector: usize, detection: usize) -> &[f64] {
        let t = self.targets;
        &self.blocks[detector][detection * t..(detection + 1) * t]
    }

    /// Total responsibility of `target` over all detections of `detector`.
    pub fn column_sum(&self, detector: usize, target: usize) -> f64 {
        (0..self.detections(detector)).map(|k| self.get(detector, k, target)).sum()
    }

    pub fn max_abs_diff(&self, other: &Responsibilities) -> f64 {
        self.blocks
            .iter()
            .flatten()
            .zip(other.blocks.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `alpha_kn = e_n eps_kn a_n / sum_m e_m eps_km a_m`, clutter always exists.
pub fn e_z_step(epsilons: &EpsilonTable, priors: &AssignmentPriors, existence: &[bool]) -> Responsibilities {
    let targets = epsilons.targets();
    debug_assert_eq!(targets, existence.len() + 1);
    let counts: Vec<usize> = (0..epsilons.detectors()).map(|i| epsilons.detections(i)).collect();
    let mut out = Responsibilities::zeros(&counts, targets);
    let mut logs = vec![f64::NEG_INFINITY; targets];
    for (i, &count) in counts.iter().enumerate() {
        for k in 0..count {
            let row = epsilons.log_row(i, k);
            for n in 0..targets {
                let active = n == 0 || existence[n - 1];
                let a = priors.get(i, n);
                logs[n] = if active && a > 0.0 { row[n] + a.ln() } else { f64::NEG_INFINITY };
            }
            let norm = linalg::log_sum_exp(logs.iter().copied());
            if !norm.is_finite() {
                out.set(i, k, 0, 1.0);
                out.flagged.push((i, k));
                continue;
            }
            for (n, l) in logs.iter().enumerate() {
                out.set(i, k, n, (l - norm).exp());
            }
        }
    }
    out
}

/// Responsibility-weighted Kalman-like update of target `target` (1-based
/// target index; 0 is clutter and has no state).
pub fn e_x_step(
    prediction: &GaussianBelief,
    detections: &[Vec<Detection>],
    responsibilities: &Responsibilities,
    params: &ModelParams,
    target: usize,
) -> Result<GaussianBelief> {
    let mut info = Mat6::zeros();
    let mut info_vec = Vec6::zeros();
    let mut weight = 0.0;
    for (i, dets) in detections.iter().enumerate() {
        let detector = &params.detectors[i];
        let p = detector.projection();
        let pt_prec = p.transpose() * detector.obs_precision();
        let pt_prec_p = pt_prec * p;
        for (k, det) in dets.iter().enumerate() {
            let alpha = responsibilities.get(i, k, target);
            if alpha == 0.0 {
                continue;
            }
            weight += alpha;
            info += pt_prec_p * alpha;
            info_vec += pt_prec * (det.bbox.to_vector() - detector.offset()) * alpha;
        }
    }
    if weight == 0.0 {
        return Ok(*prediction);
    }
    let pred_precision = linalg::spd_inverse(&prediction.covariance)?;
    let covariance = linalg::spd_inverse(&(info + pred_precision))?;
    let mean = covariance * (info_vec + pred_precision * prediction.mean);
    GaussianBelief::new(mean, covariance)
}

/// `a_n = e_n sum_k alpha_kn / sum_m e_m sum_k alpha_km`; detectors without
/// detections keep their previous priors.
pub fn m_step_priors(
    responsibilities: &Responsibilities,
    existence: &[bool],
    previous: &AssignmentPriors,
) -> AssignmentPriors {
    let targets = responsibilities.targets();
    let rows = (0..responsibilities.detectors())
        .map(|i| {
            if responsibilities.detections(i) == 0 {
                return previous.row(i).to_vec();
            }
            let mut row: Vec<f64> = (0..targets)
                .map(|n| {
                    if n == 0 || existence[n - 1] {
                        responsibilities.column_sum(i, n)
                    } else {
                        0.0
                    }
                })
                .collect();
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                row.iter_mut().for_each(|v| *v /= total);
                row
            } else {
                previous.row(i).to_vec()
            }
        })
        .collect();
    AssignmentPriors { per_detector: rows }
}

/// Instantaneous observation-covariance estimate for one detector.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaEstimate {
    pub matrix: Mat4,
    /// False when the estimate is rank-deficient (or there was nothing to
    /// estimate from); the previous covariance should then be kept.
    pub accepted: bool,
}

pub fn m_step_sigma(
    detector_index: usize,
    responsibilities: &Responsibilities,
    beliefs: &[GaussianBelief],
    existence: &[bool],
    detections: &[Vec<Detection>],
    params: &ModelParams,
) -> SigmaEstimate {
    let detector = &params.detectors[detector_index];
    let dets = &detections[detector_index];
    let p = detector.projection();
    let mut sum = Mat4::zeros();
    let mut weight = 0.0;
    for (k, det) in dets.iter().enumerate() {
        for (n, belief) in beliefs.iter().enumerate() {
            if !existence[n] {
                continue;
            }
            let alpha = responsibilities.get(detector_index, k, n + 1);
            if alpha == 0.0 {
                continue;
            }
            let r = det.bbox.to_vector() - p * belief.mean - detector.offset();
            sum += (p * belief.covariance * p.transpose() + r * r.transpose()) * alpha;
            weight += alpha;
        }
    }
    let scale = (dets.len() * beliefs.len()) as f64;
    if weight == 0.0 || scale == 0.0 {
        return SigmaEstimate {
            matrix: Mat4::zeros(),
            accepted: false,
        };
    }
    let matrix = linalg::symmetrize(&(sum / scale));
    let accepted = linalg::min_eigenvalue(&matrix) > linalg::EIGEN_FLOOR * matrix.trace().max(1.0);
    SigmaEstimate { matrix, accepted }
}

/// Instantaneous dynamics-covariance estimate
/// `D Gamma_{t-1} D^T + Gamma_t + r r^T` with `r = mu_t - D mu_{t-1}`.
pub fn m_step_lambda(prev: &GaussianBelief, new: &GaussianBelief) -> Mat6 {
    let d = transition_matrix();
    let r = new.mean - d * prev.mean;
    linalg::symmetrize(&(d * prev.covariance * d.transpose() + new.covariance + r * r.transpose()))
}

/// Splits a frame's detections by detector, keeping their relative order.
/// Also returns, for each input detection, its `(detector, index)` slot.
pub fn group_by_detector(
    detections: &[Detection],
    detectors: usize,
) -> Result<(Vec<Vec<Detection>>, Vec<(usize, usize)>)> {
    let mut grouped = vec![Vec::new(); detectors];
    let mut slots = Vec::with_capacity(detections.len());
    for det in detections {
        let group = grouped.get_mut(det.detector).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "detection from detector {} but only {} detectors are configured",
                det.detector + 1,
                detectors
            ))
        })?;
        slots.push((det.detector, group.len()));
        group.push(det.clone());
    }
    Ok((grouped, slots))
}

#[derive(Debug, Clone)]
pub struct FrameResult {
    /// One-step predictions, one per input track.
    pub predictions: Vec<GaussianBelief>,
    /// Posterior beliefs, one per input track (non-existing tracks are passed
    /// through unchanged).
    pub beliefs: Vec<GaussianBelief>,
    /// Detections grouped by detector, the layout `responsibilities` uses.
    pub detections: Vec<Vec<Detection>>,
    pub responsibilities: Responsibilities,
    pub assignment_priors: AssignmentPriors,
    pub iterations_used: usize,
    pub converged: bool,
    /// Observation-covariance estimates per detector, only when learning is
    /// enabled.
    pub sigma_estimates: Vec<SigmaEstimate>,
    /// Dynamics-covariance estimates per track, only when learning is enabled.
    pub lambda_estimates: Vec<Option<Mat6>>,
}

/// One variational EM pass for a frame.
///
/// Beliefs are predicted, responsibilities are initialized from the carried
/// priors and the predictions, and then each iteration runs E-X for every
/// existing track, the prior M-step and E-Z, until the largest change in any
/// responsibility drops below the tolerance.
pub fn run_frame(
    tracks: &[Track],
    detections: &[Detection],
    params: &ModelParams,
    priors: &AssignmentPriors,
) -> Result<FrameResult> {
    let existence: Vec<bool> = tracks.iter().map(|t| t.existence).collect();
    let predictions = tracks
        .iter()
        .map(|t| {
            if t.existence {
                predict_belief(&t.belief, t.dynamics(&params.dynamics_covariance))
            } else {
                Ok(t.belief)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let references: Vec<_> = tracks.iter().map(|t| t.reference_appearance.clone()).collect();
    let (grouped, _) = group_by_detector(detections, params.detectors.len())?;

    let mut priors = priors.carry_over(params.detectors.len(), &existence, params.vem.prior_blend);
    let eps = epsilon_table(&grouped, &predictions, &references, params)?;
    let mut alpha = e_z_step(&eps, &priors, &existence);
    let mut beliefs = predictions.clone();
    let mut iterations_used = 0;
    let mut converged = false;

    while iterations_used < params.vem.max_iterations {
        iterations_used += 1;
        for (n, belief) in beliefs.iter_mut().enumerate() {
            if existence[n] {
                *belief = e_x_step(&predictions[n], &grouped, &alpha, params, n + 1)?;
            }
        }
        priors = m_step_priors(&alpha, &existence, &priors);
        let eps = epsilon_table(&grouped, &beliefs, &references, params)?;
        let next = e_z_step(&eps, &priors, &existence);
        let delta = next.max_abs_diff(&alpha);
        if delta < params.vem.tolerance {
            converged = true;
            break;
        }
        alpha = next;
    }
    debug!("vem: {iterations_used} iterations, converged={converged}");

    let sigma_estimates = if params.vem.learn_observation_covariance {
        (0..params.detectors.len())
            .map(|i| m_step_sigma(i, &alpha, &beliefs, &existence, &grouped, params))
            .collect()
    } else {
        Vec::new()
    };
    let lambda_estimates = if params.vem.learn_dynamics_covariance {
        tracks
            .iter()
            .zip(&beliefs)
            .map(|(t, b)| t.existence.then(|| m_step_lambda(&t.belief, b)))
            .collect()
    } else {
        Vec::new()
    };

    Ok(FrameResult {
        predictions,
        beliefs,
        detections: grouped,
        responsibilities: alpha,
        assignment_priors: priors,
        iterations_used,
        converged,
        sigma_estimates,
        lambda_estimates,
    })
}
