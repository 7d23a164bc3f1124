//! Observation likelihoods: Gaussian box likelihood, uniform clutter,
//! Bhattacharyya appearance model and the per-detection assignment
//! evidence table used by the E-Z step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::dynamics::project;
use crate::error::{Error, Result};
use crate::linalg;
use crate::types::{AppearanceHistogram, Detection, DetectorModel, GaussianBelief, ModelParams, Vec4, Vec6};

/// `ln g(y; P x, Sigma)` for the detector's projection and noise.
pub fn log_localization_likelihood(detector: &DetectorModel, y: &Vec4, state: &Vec6) -> f64 {
    let residual = y - project(detector, state);
    linalg::gaussian_log_density(&residual, detector.obs_precision(), detector.obs_log_det())
}

pub fn localization_likelihood(detector: &DetectorModel, y: &Vec4, state: &Vec6) -> f64 {
    log_localization_likelihood(detector, y, state).exp()
}

/// `sqrt(1 - BC(a, b))` with the Bhattacharyya coefficient `BC`, clamped to
/// `[0, 1]`.
pub fn bhattacharyya_distance(a: &AppearanceHistogram, b: &AppearanceHistogram) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::InvalidArgument(format!(
            "histogram dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(distance_from_bins(a.bins(), b.bins()))
}

fn distance_from_bins(a: &[f64], b: &[f64]) -> f64 {
    let coefficient: f64 = a.iter().zip(b).map(|(x, y)| (x * y).sqrt()).sum();
    (1.0 - coefficient).clamp(0.0, 1.0).sqrt()
}

/// `exp(-lambda d_B(h, ref)) / w_lambda`.
pub fn appearance_likelihood(
    h: &AppearanceHistogram,
    reference: &AppearanceHistogram,
    lambda: f64,
    w_lambda: f64,
) -> Result<f64> {
    Ok(log_appearance_likelihood(h, reference, lambda, w_lambda)?.exp())
}

pub fn log_appearance_likelihood(
    h: &AppearanceHistogram,
    reference: &AppearanceHistogram,
    lambda: f64,
    w_lambda: f64,
) -> Result<f64> {
    Ok(-lambda * bhattacharyya_distance(h, reference)? - w_lambda.ln())
}

/// `ln` of the Lebesgue volume of the probability simplex in `bins - 1`
/// free coordinates, `1 / (bins - 1)!`.
pub fn ln_simplex_volume(bins: usize) -> f64 {
    assert!(bins > 0, "histogram dimension must be positive");
    -(1..bins).map(|k| (k as f64).ln()).sum::<f64>()
}

pub fn simplex_volume(bins: usize) -> f64 {
    ln_simplex_volume(bins).exp()
}

/// Uniform appearance clutter density `u(h)`: the inverse simplex volume.
pub fn appearance_clutter_density(bins: usize) -> f64 {
    (-ln_simplex_volume(bins)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Monte Carlo estimate of the appearance normalizer
/// `W = integral over the simplex of exp(-lambda d_B(h, reference)) dh`,
/// using uniform Dirichlet draws scaled by the simplex volume.
pub fn estimate_w_lambda_with_reference(
    lambda: f64,
    reference: &AppearanceHistogram,
    samples: usize,
    seed: u64,
) -> MonteCarloEstimate {
    let bins = reference.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = vec![0.0; bins];
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let mut total = 0.0;
        for d in draw.iter_mut() {
            let e: f64 = Exp1.sample(&mut rng);
            *d = e;
            total += e;
        }
        draw.iter_mut().for_each(|d| *d /= total);
        let value = (-lambda * distance_from_bins(&draw, reference.bins())).exp();
        sum += value;
        sum_sq += value * value;
    }
    let n = samples.max(1) as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    let volume = simplex_volume(bins);
    MonteCarloEstimate {
        value: mean * volume,
        std_error: (var / n).sqrt() * volume,
    }
}

/// Appearance normalizer for `bins`-dimensional histograms around the uniform
/// reference histogram. Deterministic given `seed`.
pub fn estimate_w_lambda(lambda: f64, bins: usize, samples: usize, seed: u64) -> f64 {
    estimate_w_lambda_with_reference(lambda, &AppearanceHistogram::uniform(bins), samples, seed).value
}

/// `ln eps` for a detection and a real target: Gaussian box term evaluated at
/// the posterior mean, the `exp(-tr(P^T Sigma^-1 P Gamma) / 2)` uncertainty
/// penalty, and the appearance likelihood.
pub fn log_epsilon(
    detector: &DetectorModel,
    detection: &Detection,
    belief: &GaussianBelief,
    reference: &AppearanceHistogram,
    lambda: f64,
    w_lambda: f64,
) -> Result<f64> {
    let y = detection.bbox.to_vector();
    let loc = log_localization_likelihood(detector, &y, &belief.mean);
    let p = detector.projection();
    let info = p.transpose() * detector.obs_precision() * p;
    let trace = (info * belief.covariance).trace();
    let app = log_appearance_likelihood(&detection.appearance, reference, lambda, w_lambda)?;
    Ok(loc - 0.5 * trace + app)
}

pub fn epsilon(
    detector: &DetectorModel,
    detection: &Detection,
    belief: &GaussianBelief,
    reference: &AppearanceHistogram,
    lambda: f64,
    w_lambda: f64,
) -> Result<f64> {
    Ok(log_epsilon(detector, detection, belief, reference, lambda, w_lambda)?.exp())
}

/// Clutter evidence `u(y) u(h)`.
pub fn epsilon_clutter(detector: &DetectorModel) -> f64 {
    detector.clutter_density() * detector.appearance_clutter_density()
}

pub fn log_epsilon_clutter(detector: &DetectorModel) -> f64 {
    detector.clutter_density().ln() + detector.appearance_clutter_density().ln()
}

/// Assignment evidence indexed by (detector, detection, target), target 0
/// being clutter. Stored as natural logs; `value` exponentiates.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonTable {
    targets: usize,
    blocks: Vec<Vec<f64>>,
}

impl EpsilonTable {
    /// Empty table for `detections_per_detector[i]` detections of detector `i`
    /// and `tracks` real targets.
    pub fn new(detections_per_detector: &[usize], tracks: usize) -> Self {
        Self {
            targets: tracks + 1,
            blocks: detections_per_detector
                .iter()
                .map(|k| vec![f64::NEG_INFINITY; k * (tracks + 1)])
                .collect(),
        }
    }

    /// Builds a table from linear-domain values `values[i][k][n]`.
    pub fn from_values(values: &[Vec<Vec<f64>>]) -> Result<Self> {
        let targets = values
            .iter()
            .flat_map(|d| d.iter().map(Vec::len))
            .next()
            .unwrap_or(1);
        let counts: Vec<usize> = values.iter().map(Vec::len).collect();
        let mut table = Self::new(&counts, targets.saturating_sub(1));
        for (i, det) in values.iter().enumerate() {
            for (k, row) in det.iter().enumerate() {
                if row.len() != targets {
                    return Err(Error::InvalidArgument("ragged epsilon table".into()));
                }
                for (n, v) in row.iter().enumerate() {
                    if !(v.is_finite() && *v >= 0.0) {
                        return Err(Error::InvalidArgument(format!("invalid epsilon {v}")));
                    }
                    table.set_log(i, k, n, v.ln());
                }
            }
        }
        Ok(table)
    }

    pub fn detectors(&self) -> usize {
        self.blocks.len()
    }

    pub fn detections(&self, detector: usize) -> usize {
        self.blocks[detector].len() / self.targets
    }

    /// Number of targets including clutter.
    pub fn targets(&self) -> usize {
        self.targets
    }

    pub fn log_value(&self, detector: usize, detection: usize, target: usize) -> f64 {
        self.blocks[detector][detection * self.targets + target]
    }

    pub fn value(&self, detector: usize, detection: usize, target: usize) -> f64 {
        self.log_value(detector, detection, target).exp()
    }

    pub fn log_row(&self, detector: usize, detection: usize) -> &[f64] {
        let t = self.targets;
        &self.blocks[detector][detection * t..(detection + 1) * t]
    }

    pub fn set_log(&mut self, detector: usize, detection: usize, target: usize, log_value: f64) {
        self.blocks[detector][detection * self.targets + target] = log_value;
    }
}

/// Evaluates the full evidence table for detections grouped by detector.
pub fn epsilon_table(
    detections: &[Vec<Detection>],
    beliefs: &[GaussianBelief],
    references: &[AppearanceHistogram],
    params: &ModelParams,
) -> Result<EpsilonTable> {
    let counts: Vec<usize> = detections.iter().map(Vec::len).collect();
    let mut table = EpsilonTable::new(&counts, beliefs.len());
    for (i, dets) in detections.iter().enumerate() {
        let detector = &params.detectors[i];
        let clutter = log_epsilon_clutter(detector);
        for (k, det) in dets.iter().enumerate() {
            table.set_log(i, k, 0, clutter);
            for (n, (belief, reference)) in beliefs.iter().zip(references).enumerate() {
                let v = log_epsilon(
                    detector,
                    det,
                    belief,
                    reference,
                    params.lambda_appearance,
                    params.w_lambda,
                )?;
                table.set_log(i, k, n + 1, v);
            }
        }
    }
    Ok(table)
}
