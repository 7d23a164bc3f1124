//! Domain types shared by every stage of the tracker.

use nalgebra::{SMatrix, SVector};

use crate::birth::BirthParams;
use crate::error::{Error, Result};
use crate::linalg;
use crate::visibility::LikelihoodOrientation;

pub type Vec4 = SVector<f64, 4>;
pub type Vec6 = SVector<f64, 6>;
pub type Mat4 = SMatrix<f64, 4, 4>;
pub type Mat6 = SMatrix<f64, 6, 6>;
pub type Mat46 = SMatrix<f64, 4, 6>;

/// Axis-aligned box: top-left corner plus width and height, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite box ({x}, {y}, {w}, {h})"
            )));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "box width and height must be positive, got w={w} h={h}"
            )));
        }
        Ok(Self { x, y, w, h })
    }

    /// Builds a box from a 4-vector, clamping width and height to a small
    /// positive floor. Used when reading boxes back out of a Gaussian mean.
    pub fn from_vector_clamped(v: &Vec4) -> Self {
        Self {
            x: v[0],
            y: v[1],
            w: v[2].max(1e-6),
            h: v[3].max(1e-6),
        }
    }

    pub fn to_vector(&self) -> Vec4 {
        Vec4::new(self.x, self.y, self.w, self.h)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn diagonal(&self) -> f64 {
        self.w.hypot(self.h)
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let ix = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let iy = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        if ix <= 0.0 || iy <= 0.0 {
            return 0.0;
        }
        let inter = ix * iy;
        inter / (self.area() + other.area() - inter)
    }
}

/// Box plus image-plane velocity; stacks as `(x, y, w, h, vx, vy)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicState {
    pub bbox: BoundingBox,
    pub velocity: [f64; 2],
}

impl KinematicState {
    pub fn new(bbox: BoundingBox, velocity: [f64; 2]) -> Result<Self> {
        if !velocity.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite velocity".into()));
        }
        Ok(Self { bbox, velocity })
    }

    pub fn to_vector(&self) -> Vec6 {
        let b = &self.bbox;
        Vec6::new(b.x, b.y, b.w, b.h, self.velocity[0], self.velocity[1])
    }

    pub fn from_vector(v: &Vec6) -> Result<Self> {
        Self::new(
            BoundingBox::new(v[0], v[1], v[2], v[3])?,
            [v[4], v[5]],
        )
    }
}

/// Gaussian posterior over a 6-D kinematic state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBelief {
    pub mean: Vec6,
    pub covariance: Mat6,
}

impl GaussianBelief {
    /// Builds a belief, symmetrizing the covariance and adding jitter when its
    /// smallest eigenvalue is below the floor.
    pub fn new(mean: Vec6, covariance: Mat6) -> Result<Self> {
        if !mean.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("non-finite belief mean".into()));
        }
        if !covariance.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("non-finite belief covariance".into()));
        }
        Ok(Self {
            mean,
            covariance: linalg::stabilize(&covariance),
        })
    }

    pub fn bbox(&self) -> BoundingBox {
        BoundingBox::from_vector_clamped(&self.mean.fixed_rows::<4>(0).into_owned())
    }
}

/// Normalized histogram of appearance features.
#[derive(Debug, Clone, PartialEq)]
pub struct AppearanceHistogram {
    bins: Vec<f64>,
}

impl AppearanceHistogram {
    /// Normalizes `bins` to unit sum (input already summing to 1 within
    /// 1e-12 is kept as is). Fails on empty input, negative or non-finite
    /// bins, or an all-zero histogram.
    pub fn new(bins: Vec<f64>) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::InvalidArgument("empty histogram".into()));
        }
        if bins.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::InvalidArgument(
                "histogram bins must be finite and non-negative".into(),
            ));
        }
        let total: f64 = bins.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument("histogram has zero mass".into()));
        }
        if (total - 1.0).abs() <= 1e-12 {
            return Ok(Self { bins });
        }
        Ok(Self {
            bins: bins.into_iter().map(|b| b / total).collect(),
        })
    }

    pub fn uniform(dim: usize) -> Self {
        assert!(dim > 0, "histogram dimension must be positive");
        Self {
            bins: vec![1.0 / dim as f64; dim],
        }
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn dim(&self) -> usize {
        self.bins.len()
    }
}

/// One observation: a box and an appearance histogram from detector
/// `detector` (0-based) at `frame`.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub detector: usize,
    pub bbox: BoundingBox,
    pub appearance: AppearanceHistogram,
    pub frame: u64,
}

impl Detection {
    pub fn new(detector: usize, bbox: BoundingBox, appearance: AppearanceHistogram, frame: u64) -> Self {
        Self {
            detector,
            bbox,
            appearance,
            frame,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u32,
    /// Once set, never cleared: unobserved tracks sleep rather than die.
    pub existence: bool,
    pub belief: GaussianBelief,
    pub reference_appearance: AppearanceHistogram,
    pub visibility_posterior: f64,
    pub birth_frame: u64,
    /// Per-track override of the shared dynamics covariance.
    pub dynamics_covariance: Option<Mat6>,
}

impl Track {
    pub fn new(id: u32, belief: GaussianBelief, reference_appearance: AppearanceHistogram, birth_frame: u64) -> Self {
        Self {
            id,
            existence: true,
            belief,
            reference_appearance,
            visibility_posterior: 1.0,
            birth_frame,
            dynamics_covariance: None,
        }
    }

    pub fn dynamics<'a>(&'a self, shared: &'a Mat6) -> &'a Mat6 {
        self.dynamics_covariance.as_ref().unwrap_or(shared)
    }
}

/// Linear-affine observation operator plus noise and clutter densities for
/// one detector: `y = A [I4 0] x + offset + noise(obs_covariance)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    projection: Mat46,
    offset: Vec4,
    obs_covariance: Mat4,
    obs_precision: Mat4,
    obs_log_det: f64,
    clutter_density: f64,
    appearance_clutter_density: f64,
}

impl DetectorModel {
    pub fn new(
        projection: Mat46,
        offset: Vec4,
        obs_covariance: Mat4,
        clutter_density: f64,
        appearance_clutter_density: f64,
    ) -> Result<Self> {
        if !(clutter_density > 0.0 && clutter_density.is_finite()) {
            return Err(Error::Config(format!(
                "clutter density must be positive, got {clutter_density}"
            )));
        }
        if !(appearance_clutter_density > 0.0 && appearance_clutter_density.is_finite()) {
            return Err(Error::Config(format!(
                "appearance clutter density must be positive, got {appearance_clutter_density}"
            )));
        }
        if !projection.iter().chain(offset.iter()).all(|v| v.is_finite()) {
            return Err(Error::Config("non-finite projection".into()));
        }
        let obs_covariance = linalg::symmetrize(&obs_covariance);
        if !linalg::is_spd(&obs_covariance) {
            return Err(Error::Config(format!(
                "observation covariance is not SPD: {obs_covariance}"
            )));
        }
        let obs_precision = linalg::spd_inverse(&obs_covariance)?;
        let obs_log_det = linalg::spd_log_det(&obs_covariance)?;
        Ok(Self {
            projection,
            offset,
            obs_covariance,
            obs_precision,
            obs_log_det,
            clutter_density,
            appearance_clutter_density,
        })
    }

    /// Plain box detector: `P = [I4 0]`.
    pub fn identity(obs_covariance: Mat4, clutter_density: f64, appearance_clutter_density: f64) -> Result<Self> {
        Self::affine(Mat4::identity(), Vec4::zeros(), obs_covariance, clutter_density, appearance_clutter_density)
    }

    /// Detector whose boxes are an affine image `A b + offset` of the state
    /// box `b` (e.g. a face box derived from an upper-body box).
    pub fn affine(
        transform: Mat4,
        offset: Vec4,
        obs_covariance: Mat4,
        clutter_density: f64,
        appearance_clutter_density: f64,
    ) -> Result<Self> {
        let mut selector = Mat46::zeros();
        selector.fixed_view_mut::<4, 4>(0, 0).copy_from(&Mat4::identity());
        Self::new(transform * selector, offset, obs_covariance, clutter_density, appearance_clutter_density)
    }

    pub fn projection(&self) -> &Mat46 {
        &self.projection
    }

    pub fn offset(&self) -> &Vec4 {
        &self.offset
    }

    pub fn obs_covariance(&self) -> &Mat4 {
        &self.obs_covariance
    }

    pub fn obs_precision(&self) -> &Mat4 {
        &self.obs_precision
    }

    pub fn obs_log_det(&self) -> f64 {
        self.obs_log_det
    }

    pub fn clutter_density(&self) -> f64 {
        self.clutter_density
    }

    pub fn appearance_clutter_density(&self) -> f64 {
        self.appearance_clutter_density
    }

    /// Replaces the observation covariance (used when covariance learning is
    /// enabled).
    pub fn set_obs_covariance(&mut self, cov: Mat4) -> Result<()> {
        let updated = Self::new(
            self.projection,
            self.offset,
            cov,
            self.clutter_density,
            self.appearance_clutter_density,
        )?;
        *self = updated;
        Ok(())
    }
}

/// Settings for the per-frame variational EM loop.
#[derive(Debug, Clone, PartialEq)]
pub struct VemSettings {
    pub max_iterations: usize,
    /// Stop once the largest responsibility change is below this.
    pub tolerance: f64,
    /// Weight of the uniform distribution mixed into the carried assignment
    /// priors at the start of each frame.
    pub prior_blend: f64,
    pub learn_observation_covariance: bool,
    pub learn_dynamics_covariance: bool,
}

impl Default for VemSettings {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            tolerance: 1e-4,
            prior_blend: 0.5,
            learn_observation_covariance: false,
            learn_dynamics_covariance: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub detectors: Vec<DetectorModel>,
    /// Shared dynamics covariance; tracks may override it.
    pub dynamics_covariance: Mat6,
    pub lambda_appearance: f64,
    /// Normalizer of the appearance likelihood.
    pub w_lambda: f64,
    pub pi_v: f64,
    pub lambda_visibility: f64,
    pub visibility_likelihood: LikelihoodOrientation,
    pub report_threshold: f64,
    pub birth: BirthParams,
    pub max_tracks: usize,
    pub vem: VemSettings,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.detectors.is_empty() {
            return Err(Error::Config("at least one detector is required".into()));
        }
        if !linalg::is_spd(&self.dynamics_covariance) {
            return Err(Error::Config("dynamics covariance is not SPD".into()));
        }
        if !(self.lambda_appearance >= 0.0) || !(self.w_lambda > 0.0) {
            return Err(Error::Config("appearance parameters must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.pi_v) {
            return Err(Error::Config(format!("pi_v must be a probability, got {}", self.pi_v)));
        }
        if !(self.lambda_visibility > 0.0) {
            return Err(Error::Config("lambda_visibility must be positive".into()));
        }
        if self.vem.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        self.birth.validate()
    }
}
