//! Synthetic scenes drawn from the tracker's own generative model: linear
//! constant-velocity targets, noisy per-detector boxes with misses, Poisson
//! clutter, and Dirichlet appearance histograms.
//!
//! Frames are numbered from 1.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

use crate::dynamics::apply_dynamics;
use crate::error::{Error, Result};
use crate::metrics::FrameSet;
use crate::types::{AppearanceHistogram, BoundingBox, Detection, Mat4, Vec4, Vec6};

#[derive(Debug, Clone, PartialEq)]
pub struct TargetScript {
    /// First frame the target exists (>= 1).
    pub start: u64,
    /// Last frame the target exists, inclusive.
    pub end: u64,
    /// State at `start`.
    pub initial: Vec6,
    /// Per-component standard deviation of the dynamics noise.
    pub dynamics_std: Vec6,
    /// Inclusive frame intervals during which every detector misses it.
    pub occlusions: Vec<(u64, u64)>,
    /// Appearance reference; drawn from a flat Dirichlet when absent.
    pub reference: Option<AppearanceHistogram>,
}

impl TargetScript {
    pub fn alive(&self, frame: u64) -> bool {
        (self.start..=self.end).contains(&frame)
    }

    pub fn occluded(&self, frame: u64) -> bool {
        self.occlusions.iter().any(|(a, b)| (*a..=*b).contains(&frame))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDetector {
    /// Affine map from the state box to this detector's box.
    pub transform: Mat4,
    pub offset: Vec4,
    /// Per-coordinate standard deviation of the box noise.
    pub noise_std: Vec4,
    pub miss_probability: f64,
    /// Mean number of clutter boxes per frame.
    pub clutter_rate: f64,
}

impl SimDetector {
    pub fn boxes(noise_std: Vec4, miss_probability: f64, clutter_rate: f64) -> Self {
        Self {
            transform: Mat4::identity(),
            offset: Vec4::zeros(),
            noise_std,
            miss_probability,
            clutter_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub image_width: f64,
    pub image_height: f64,
    /// Clutter box sizes are uniform on `(0, max]`.
    pub max_box_width: f64,
    pub max_box_height: f64,
    pub frames: u64,
    pub targets: Vec<TargetScript>,
    pub detectors: Vec<SimDetector>,
    pub appearance_bins: usize,
    /// Dirichlet concentration of observed histograms around the reference.
    pub kappa: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.image_width > 0.0 && self.image_height > 0.0) {
            return bad("image size must be positive".into());
        }
        if !(self.max_box_width > 0.0 && self.max_box_height > 0.0) {
            return bad("maximum box size must be positive".into());
        }
        if self.appearance_bins < 2 {
            return bad("appearance histograms need at least 2 bins".into());
        }
        if !(self.kappa > 0.0) {
            return bad("kappa must be positive".into());
        }
        for (i, d) in self.detectors.iter().enumerate() {
            if !(0.0..=1.0).contains(&d.miss_probability) {
                return bad(format!("detector {}: miss probability must be in [0, 1]", i + 1));
            }
            if !(d.clutter_rate >= 0.0 && d.clutter_rate.is_finite()) {
                return bad(format!("detector {}: clutter rate must be >= 0", i + 1));
            }
            if d.noise_std.iter().any(|s| !(*s >= 0.0)) {
                return bad(format!("detector {}: noise std must be >= 0", i + 1));
            }
        }
        for (n, t) in self.targets.iter().enumerate() {
            if t.start < 1 || t.start > t.end {
                return bad(format!("target {}: need 1 <= start <= end", n + 1));
            }
            if t.dynamics_std.iter().any(|s| !(*s >= 0.0)) {
                return bad(format!("target {}: dynamics std must be >= 0", n + 1));
            }
            if t.occlusions.iter().any(|(a, b)| a > b) {
                return bad(format!("target {}: empty occlusion interval", n + 1));
            }
            if let Some(r) = &t.reference {
                if r.dim() != self.appearance_bins {
                    return bad(format!("target {}: reference has {} bins", n + 1, r.dim()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `frames[t - 1]` holds `(target id, true box)` for frame `t`.
    pub frames: Vec<FrameSet>,
    /// Reference histogram per target, indexed by id - 1.
    pub references: Vec<AppearanceHistogram>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub truth: GroundTruth,
    /// `detections[t - 1]` holds the detections of frame `t`, detector by
    /// detector, target detections before clutter.
    pub detections: Vec<Vec<Detection>>,
    /// Parallel to `detections`: the target id behind each detection, `None`
    /// for clutter.
    pub sources: Vec<Vec<Option<u32>>>,
}

fn dirichlet(rng: &mut ChaCha8Rng, alpha: &[f64]) -> AppearanceHistogram {
    let mut draw: Vec<f64> = alpha
        .iter()
        .map(|a| Gamma::new(a.max(1e-3), 1.0).expect("valid gamma shape").sample(rng))
        .collect();
    if draw.iter().sum::<f64>() <= 0.0 {
        draw = vec![1.0; alpha.len()];
    }
    AppearanceHistogram::new(draw).expect("positive draw normalizes")
}

fn gaussian<const N: usize>(rng: &mut ChaCha8Rng, std: &nalgebra::SVector<f64, N>) -> nalgebra::SVector<f64, N> {
    nalgebra::SVector::<f64, N>::from_fn(|i, _| {
        let z: f64 = StandardNormal.sample(rng);
        z * std[i]
    })
}

/// Draws a scene. Identical configs (including the seed) give identical
/// output.
pub fn simulate(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bins = config.appearance_bins;
    let flat = vec![1.0; bins];

    let references: Vec<AppearanceHistogram> = config
        .targets
        .iter()
        .map(|t| t.reference.clone().unwrap_or_else(|| dirichlet(&mut rng, &flat)))
        .collect();
    let concentration: Vec<Vec<f64>> = references
        .iter()
        .map(|r| r.bins().iter().map(|b| b * config.kappa).collect())
        .collect();

    let mut states: Vec<Option<Vec6>> = vec![None; config.targets.len()];
    let mut truth_frames = Vec::with_capacity(config.frames as usize);
    let mut detections = Vec::with_capacity(config.frames as usize);
    let mut sources = Vec::with_capacity(config.frames as usize);

    for frame in 1..=config.frames {
        let mut truth = FrameSet::new();
        for (n, script) in config.targets.iter().enumerate() {
            states[n] = if !script.alive(frame) {
                None
            } else if frame == script.start {
                Some(script.initial)
            } else {
                let prev = states[n].expect("alive target has a state");
                Some(apply_dynamics(&prev) + gaussian(&mut rng, &script.dynamics_std))
            };
            if let Some(x) = &states[n] {
                truth.push((n as u32 + 1, BoundingBox::from_vector_clamped(&x.fixed_rows::<4>(0).into_owned())));
            }
        }

        let mut dets = Vec::new();
        let mut from = Vec::new();
        for (i, det) in config.detectors.iter().enumerate() {
            for (n, script) in config.targets.iter().enumerate() {
                let Some(x) = &states[n] else { continue };
                // always draw, so the random stream does not depend on outcomes
                let missed = rng.random::<f64>() < det.miss_probability;
                let noise = gaussian(&mut rng, &det.noise_std);
                let hist = dirichlet(&mut rng, &concentration[n]);
                if missed || script.occluded(frame) {
                    continue;
                }
                let y = det.transform * x.fixed_rows::<4>(0) + det.offset + noise;
                dets.push(Detection::new(i, BoundingBox::from_vector_clamped(&y), hist, frame));
                from.push(Some(n as u32 + 1));
            }
            let count = if det.clutter_rate > 0.0 {
                let c: f64 = Poisson::new(det.clutter_rate).expect("positive rate").sample(&mut rng);
                c as usize
            } else {
                0
            };
            for _ in 0..count {
                let w = rng.random::<f64>() * config.max_box_width;
                let h = rng.random::<f64>() * config.max_box_height;
                let x = rng.random::<f64>() * (config.image_width - w).max(0.0);
                let y = rng.random::<f64>() * (config.image_height - h).max(0.0);
                let hist = dirichlet(&mut rng, &flat);
                let bbox = BoundingBox::from_vector_clamped(&Vec4::new(x, y, w, h));
                dets.push(Detection::new(i, bbox, hist, frame));
                from.push(None);
            }
        }
        truth_frames.push(truth);
        detections.push(dets);
        sources.push(from);
    }

    Ok(Scenario {
        truth: GroundTruth {
            frames: truth_frames,
            references,
        },
        detections,
        sources,
    })
}

pub const PRESET_NAMES: [&str; 2] = ["cpd-like", "pets-like"];

/// Face box as an affine image of an upper-body box:
/// `(x + w/4, y, w/2, 0.4 h)`.
pub fn face_transform() -> Mat4 {
    Mat4::new(
        1.0, 0.0, 0.25, 0.0, //
        0.0, 1.0, 0.0, 0.0, //
        0.0, 0.0, 0.5, 0.0, //
        0.0, 0.0, 0.0, 0.4,
    )
}

/// Named desk-scale scenes.
///
/// * `cpd-like`: a meeting room, 640x480, 400 frames, three near-stationary
///   people (the third enters at frame 150), an upper-body and a face
///   detector, person 1 occluded during frames 200-249.
/// * `pets-like`: a far-field view, 768x576, 600 frames, twelve small people
///   walking in parallel lanes, one detector with misses and clutter.
pub fn scenario_preset(name: &str) -> Result<ScenarioConfig> {
    match name {
        "cpd-like" => Ok(cpd_like()),
        "pets-like" => Ok(pets_like()),
        other => Err(Error::InvalidArgument(format!(
            "unknown preset '{other}' (known: {})",
            PRESET_NAMES.join(", ")
        ))),
    }
}

fn cpd_like() -> ScenarioConfig {
    let still = Vec6::new(0.3, 0.3, 0.05, 0.05, 0.0, 0.0);
    let person = |start: u64, x: f64, y: f64, occlusions: Vec<(u64, u64)>| TargetScript {
        start,
        end: 400,
        initial: Vec6::new(x, y, 80.0, 160.0, 0.0, 0.0),
        dynamics_std: still,
        occlusions,
        reference: None,
    };
    ScenarioConfig {
        image_width: 640.0,
        image_height: 480.0,
        max_box_width: 200.0,
        max_box_height: 300.0,
        frames: 400,
        targets: vec![
            person(1, 80.0, 150.0, vec![(200, 249)]),
            person(1, 280.0, 140.0, Vec::new()),
            person(150, 460.0, 160.0, Vec::new()),
        ],
        detectors: vec![
            SimDetector::boxes(Vec4::new(2.0, 2.0, 2.0, 2.0), 0.05, 0.3),
            SimDetector {
                transform: face_transform(),
                offset: Vec4::zeros(),
                noise_std: Vec4::new(1.5, 1.5, 1.0, 1.0),
                miss_probability: 0.1,
                clutter_rate: 0.3,
            },
        ],
        appearance_bins: 16,
        kappa: 200.0,
        seed: 7,
    }
}

fn pets_like() -> ScenarioConfig {
    let walk = Vec6::new(0.3, 0.3, 0.05, 0.05, 0.002, 0.002);
    let mut targets = Vec::new();
    for lane in 0..6u64 {
        let y = 30.0 + 90.0 * lane as f64;
        let rightward = lane % 2 == 0;
        for k in 0..2u64 {
            let (x, vx) = if rightward {
                (50.0 + 300.0 * k as f64, 0.5)
            } else {
                (693.0 - 300.0 * k as f64, -0.5)
            };
            let id = lane * 2 + k;
            // the last two people arrive later, and one of them leaves early
            let start = if id >= 10 { 60 } else { 1 };
            let end = if id == 11 { 540 } else { 600 };
            targets.push(TargetScript {
                start,
                end,
                initial: Vec6::new(x + vx * (start - 1) as f64, y, 25.0, 60.0, vx, 0.0),
                dynamics_std: walk,
                occlusions: Vec::new(),
                reference: None,
            });
        }
    }
    ScenarioConfig {
        image_width: 768.0,
        image_height: 576.0,
        max_box_width: 80.0,
        max_box_height: 160.0,
        frames: 600,
        targets,
        detectors: vec![SimDetector::boxes(Vec4::new(1.5, 1.5, 1.0, 1.0), 0.1, 2.0)],
        appearance_bins: 16,
        kappa: 200.0,
        seed: 11,
    }
}
