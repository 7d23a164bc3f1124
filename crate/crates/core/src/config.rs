//! Flat `key = value` configuration covering the tracker, the birth test,
//! visibility, evaluation and the simulator.
//!
//! Lines are `key = value`; `#` starts a comment. Vector values are
//! whitespace separated. Per-detector and per-target keys carry a 1-based
//! index (`detector.2.sigma`, `sim.target.3.start`); naming an index creates
//! that entry (and any missing lower ones) with default values. Unknown keys
//! are rejected. [`Config::to_text`] writes every key, so its output is a
//! complete, re-loadable description.

use std::fmt::Write as _;
use std::path::Path;

use crate::birth::BirthParams;
use crate::error::{Error, Result};
use crate::metrics::{GroundDistance, MetricsConfig};
use crate::observation::{appearance_clutter_density, estimate_w_lambda};
use crate::simulator::{scenario_preset, ScenarioConfig, SimDetector, TargetScript, PRESET_NAMES};
use crate::types::{DetectorModel, Mat4, Mat6, ModelParams, Vec4, Vec6, VemSettings};
use crate::visibility::LikelihoodOrientation;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSettings {
    /// Row-major 4x4 map from the state box to the detector box.
    pub affine: Mat4,
    pub offset: Vec4,
    /// Standard deviations of the tracker's observation noise (diagonal).
    pub sigma: Vec4,
    /// Clutter density `u(y)`; `None` means uniform over the image and box
    /// sizes.
    pub clutter_density: Option<f64>,
    pub sim_sigma: Vec4,
    pub sim_miss: f64,
    pub sim_clutter_rate: f64,
}

impl Default for DetectorSettings {
    fn default() -> Self {
        Self {
            affine: Mat4::identity(),
            offset: Vec4::zeros(),
            sigma: Vec4::repeat(3.0),
            clutter_density: None,
            sim_sigma: Vec4::repeat(2.0),
            sim_miss: 0.05,
            sim_clutter_rate: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSettings {
    pub start: u64,
    /// Last frame; `None` lasts until the end of the scene.
    pub end: Option<u64>,
    pub state: Vec6,
    pub dynamics_std: Vec6,
    pub occlusions: Vec<(u64, u64)>,
}

impl Default for TargetSettings {
    fn default() -> Self {
        Self {
            start: 1,
            end: None,
            state: Vec6::new(100.0, 100.0, 50.0, 100.0, 0.0, 0.0),
            dynamics_std: Vec6::new(0.3, 0.3, 0.05, 0.05, 0.0, 0.0),
            occlusions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub image_width: f64,
    pub image_height: f64,
    pub max_box_width: f64,
    pub max_box_height: f64,
    pub appearance_bins: usize,
    pub detectors: Vec<DetectorSettings>,
    /// Standard deviations of the tracker's dynamics noise (diagonal).
    pub dynamics_std: Vec6,
    pub lambda_appearance: f64,
    /// `None` estimates it by Monte Carlo.
    pub w_lambda: Option<f64>,
    pub w_lambda_samples: usize,
    pub w_lambda_seed: u64,
    pub pi_v: f64,
    pub lambda_visibility: f64,
    pub visibility_likelihood: LikelihoodOrientation,
    pub report_threshold: f64,
    pub max_tracks: usize,
    pub vem: VemSettings,
    pub birth_window: usize,
    pub birth_flat_velocity_std: f64,
    pub birth_covariance_std: Vec6,
    pub birth_clutter_threshold: f64,
    pub birth_gate_factor: f64,
    pub birth_merge_iou: f64,
    pub metrics: MetricsConfig,
    pub sim_frames: u64,
    pub sim_seed: u64,
    pub sim_kappa: f64,
    pub targets: Vec<TargetSettings>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            image_width: 640.0,
            image_height: 480.0,
            max_box_width: 200.0,
            max_box_height: 300.0,
            appearance_bins: 16,
            detectors: vec![DetectorSettings::default()],
            dynamics_std: Vec6::new(1.0, 1.0, 0.5, 0.5, 0.1, 0.1),
            lambda_appearance: 20.0,
            w_lambda: None,
            w_lambda_samples: 100_000,
            w_lambda_seed: 0,
            pi_v: 0.9,
            lambda_visibility: 5.0,
            visibility_likelihood: LikelihoodOrientation::Swapped,
            report_threshold: 0.5,
            max_tracks: 50,
            vem: VemSettings::default(),
            birth_window: 2,
            birth_flat_velocity_std: 10.0,
            birth_covariance_std: Vec6::new(3.0, 3.0, 3.0, 3.0, 2.0, 2.0),
            birth_clutter_threshold: 0.5,
            birth_gate_factor: 2.0,
            birth_merge_iou: 0.5,
            metrics: MetricsConfig::default(),
            sim_frames: 100,
            sim_seed: 0,
            sim_kappa: 200.0,
            targets: Vec::new(),
        }
    }
}

fn bad(key: &str, value: &str, why: &str) -> Error {
    Error::Config(format!("{key} = {value}: {why}"))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse::<T>().map_err(|_| bad(key, value, "not a valid number"))
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    let v: f64 = parse_num(key, value)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad(key, value, "not finite"))
    }
}

fn parse_vec<const N: usize>(key: &str, value: &str) -> Result<nalgebra::SVector<f64, N>> {
    let items: Vec<f64> = value
        .split_whitespace()
        .map(|v| parse_f64(key, v))
        .collect::<Result<_>>()?;
    if items.len() != N {
        return Err(bad(key, value, &format!("expected {N} numbers")));
    }
    Ok(nalgebra::SVector::<f64, N>::from_column_slice(&items))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

fn parse_auto(key: &str, value: &str) -> Result<Option<f64>> {
    if value == "auto" {
        Ok(None)
    } else {
        let v = parse_f64(key, value)?;
        if v > 0.0 {
            Ok(Some(v))
        } else {
            Err(bad(key, value, "must be positive or auto"))
        }
    }
}

fn parse_intervals(key: &str, value: &str) -> Result<Vec<(u64, u64)>> {
    if value == "none" {
        return Ok(Vec::new());
    }
    value
        .split_whitespace()
        .map(|item| {
            let (a, b) = item.split_once('-').ok_or_else(|| bad(key, value, "expected first-last"))?;
            let (a, b) = (parse_num::<u64>(key, a)?, parse_num::<u64>(key, b)?);
            if a > b {
                return Err(bad(key, value, "interval ends before it starts"));
            }
            Ok((a, b))
        })
        .collect()
}

fn fmt_vec(v: impl IntoIterator<Item = f64>) -> String {
    v.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn fmt_auto(v: Option<f64>) -> String {
    v.map_or_else(|| "auto".to_string(), |x| x.to_string())
}

fn row_major(m: &Mat4) -> Vec<f64> {
    (0..4).flat_map(|r| (0..4).map(move |c| m[(r, c)])).collect()
}

/// Splits `prefix.N.rest` into `(N - 1, rest)`.
fn indexed<'a>(key: &'a str, prefix: &str) -> Result<Option<(usize, &'a str)>> {
    let Some(rest) = key.strip_prefix(prefix) else {
        return Ok(None);
    };
    let (index, field) = rest
        .split_once('.')
        .ok_or_else(|| Error::Config(format!("unknown key '{key}'")))?;
    let n: usize = index
        .parse()
        .ok()
        .filter(|n| *n >= 1 && *n <= 1000)
        .ok_or_else(|| Error::Config(format!("bad index in key '{key}'")))?;
    Ok(Some((n - 1, field)))
}

fn slot<T: Default>(items: &mut Vec<T>, i: usize) -> &mut T {
    if items.len() <= i {
        items.resize_with(i + 1, T::default);
    }
    &mut items[i]
}

impl Config {
    /// Tracker settings matched to one of the simulator presets.
    pub fn preset(name: &str) -> Result<Self> {
        let scenario = scenario_preset(name)?;
        let mut c = Self::from_scenario(&scenario);
        match name {
            "cpd-like" => {
                c.dynamics_std = Vec6::new(0.7, 0.7, 0.3, 0.3, 0.02, 0.02);
                for (d, s) in c.detectors.iter_mut().zip(&scenario.detectors) {
                    d.sigma = s.noise_std * 1.5;
                }
                c.lambda_visibility = 10.0;
            }
            "pets-like" => {
                c.dynamics_std = Vec6::new(0.5, 0.5, 0.2, 0.2, 0.05, 0.05);
                for (d, s) in c.detectors.iter_mut().zip(&scenario.detectors) {
                    d.sigma = s.noise_std * 1.5;
                }
                c.lambda_visibility = 50.0;
                c.metrics.ospa_cutoff = 100.0;
            }
            _ => unreachable!("scenario_preset accepted the name"),
        }
        Ok(c)
    }

    pub fn preset_names() -> &'static [&'static str] {
        &PRESET_NAMES
    }

    /// Defaults with the scene (and the detector geometry) taken from a
    /// simulator configuration.
    pub fn from_scenario(s: &ScenarioConfig) -> Self {
        Self {
            image_width: s.image_width,
            image_height: s.image_height,
            max_box_width: s.max_box_width,
            max_box_height: s.max_box_height,
            appearance_bins: s.appearance_bins,
            detectors: s
                .detectors
                .iter()
                .map(|d| DetectorSettings {
                    affine: d.transform,
                    offset: d.offset,
                    sim_sigma: d.noise_std,
                    sim_miss: d.miss_probability,
                    sim_clutter_rate: d.clutter_rate,
                    ..DetectorSettings::default()
                })
                .collect(),
            sim_frames: s.frames,
            sim_seed: s.seed,
            sim_kappa: s.kappa,
            targets: s
                .targets
                .iter()
                .map(|t| TargetSettings {
                    start: t.start,
                    end: (t.end != s.frames).then_some(t.end),
                    state: t.initial,
                    dynamics_std: t.dynamics_std,
                    occlusions: t.occlusions.clone(),
                })
                .collect(),
            ..Self::default()
        }
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        if let Some((i, field)) = indexed(key, "detector.")? {
            let d = slot(&mut self.detectors, i);
            match field {
                "affine" => {
                    let v = parse_vec::<16>(key, value)?;
                    d.affine = Mat4::from_row_slice(v.as_slice());
                }
                "offset" => d.offset = parse_vec(key, value)?,
                "sigma" => d.sigma = parse_vec(key, value)?,
                "clutter_density" => d.clutter_density = parse_auto(key, value)?,
                _ => return Err(Error::Config(format!("unknown key '{key}'"))),
            }
            return Ok(());
        }
        if let Some((i, field)) = indexed(key, "sim.detector.")? {
            let d = slot(&mut self.detectors, i);
            match field {
                "sigma" => d.sim_sigma = parse_vec(key, value)?,
                "miss" => d.sim_miss = parse_f64(key, value)?,
                "clutter_rate" => d.sim_clutter_rate = parse_f64(key, value)?,
                _ => return Err(Error::Config(format!("unknown key '{key}'"))),
            }
            return Ok(());
        }
        if let Some((i, field)) = indexed(key, "sim.target.")? {
            let t = slot(&mut self.targets, i);
            match field {
                "start" => t.start = parse_num(key, value)?,
                "end" => t.end = if value == "last" { None } else { Some(parse_num(key, value)?) },
                "state" => t.state = parse_vec(key, value)?,
                "dynamics_std" => t.dynamics_std = parse_vec(key, value)?,
                "occlusion" => t.occlusions = parse_intervals(key, value)?,
                _ => return Err(Error::Config(format!("unknown key '{key}'"))),
            }
            return Ok(());
        }
        match key {
            "image_width" => self.image_width = parse_f64(key, value)?,
            "image_height" => self.image_height = parse_f64(key, value)?,
            "max_box_width" => self.max_box_width = parse_f64(key, value)?,
            "max_box_height" => self.max_box_height = parse_f64(key, value)?,
            "appearance_bins" => self.appearance_bins = parse_num(key, value)?,
            "dynamics_std" => self.dynamics_std = parse_vec(key, value)?,
            "lambda_appearance" => self.lambda_appearance = parse_f64(key, value)?,
            "w_lambda" => self.w_lambda = parse_auto(key, value)?,
            "w_lambda_samples" => self.w_lambda_samples = parse_num(key, value)?,
            "w_lambda_seed" => self.w_lambda_seed = parse_num(key, value)?,
            "pi_v" => self.pi_v = parse_f64(key, value)?,
            "lambda_visibility" => self.lambda_visibility = parse_f64(key, value)?,
            "visibility_likelihood" => self.visibility_likelihood = value.parse()?,
            "report_threshold" => self.report_threshold = parse_f64(key, value)?,
            "max_tracks" => self.max_tracks = parse_num(key, value)?,
            "max_iterations" => self.vem.max_iterations = parse_num(key, value)?,
            "convergence_tolerance" => self.vem.tolerance = parse_f64(key, value)?,
            "prior_blend" => self.vem.prior_blend = parse_f64(key, value)?,
            "learn_observation_covariance" => self.vem.learn_observation_covariance = parse_bool(key, value)?,
            "learn_dynamics_covariance" => self.vem.learn_dynamics_covariance = parse_bool(key, value)?,
            "birth.window" => self.birth_window = parse_num(key, value)?,
            "birth.flat_velocity_std" => self.birth_flat_velocity_std = parse_f64(key, value)?,
            "birth.covariance_std" => self.birth_covariance_std = parse_vec(key, value)?,
            "birth.clutter_threshold" => self.birth_clutter_threshold = parse_f64(key, value)?,
            "birth.gate_factor" => self.birth_gate_factor = parse_f64(key, value)?,
            "birth.merge_iou" => self.birth_merge_iou = parse_f64(key, value)?,
            "metrics.iou_threshold" => self.metrics.iou_threshold = parse_f64(key, value)?,
            "metrics.ospa_cutoff" => self.metrics.ospa_cutoff = parse_f64(key, value)?,
            "metrics.ospa_order" => self.metrics.ospa_order = parse_f64(key, value)?,
            "metrics.ground_distance" => self.metrics.ground_distance = value.parse::<GroundDistance>()?,
            "sim.frames" => self.sim_frames = parse_num(key, value)?,
            "sim.seed" => self.sim_seed = parse_num(key, value)?,
            "sim.kappa" => self.sim_kappa = parse_f64(key, value)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Applies `key=value` (as given to `--set`).
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got '{pair}'")))?;
        self.set(key.trim(), value)
    }

    /// Applies every setting in `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err("expected key = value".into()))?;
            self.set(key.trim(), value).map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(())
    }

    /// Applies a config file on top of `self`.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, path)
    }

    /// Every key with its current value, in a fixed order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut e: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| e.push((k.to_string(), v));
        put("image_width", self.image_width.to_string());
        put("image_height", self.image_height.to_string());
        put("max_box_width", self.max_box_width.to_string());
        put("max_box_height", self.max_box_height.to_string());
        put("appearance_bins", self.appearance_bins.to_string());
        for (i, d) in self.detectors.iter().enumerate() {
            let n = i + 1;
            put(&format!("detector.{n}.affine"), fmt_vec(row_major(&d.affine)));
            put(&format!("detector.{n}.offset"), fmt_vec(d.offset.iter().copied()));
            put(&format!("detector.{n}.sigma"), fmt_vec(d.sigma.iter().copied()));
            put(&format!("detector.{n}.clutter_density"), fmt_auto(d.clutter_density));
        }
        put("dynamics_std", fmt_vec(self.dynamics_std.iter().copied()));
        put("lambda_appearance", self.lambda_appearance.to_string());
        put("w_lambda", fmt_auto(self.w_lambda));
        put("w_lambda_samples", self.w_lambda_samples.to_string());
        put("w_lambda_seed", self.w_lambda_seed.to_string());
        put("pi_v", self.pi_v.to_string());
        put("lambda_visibility", self.lambda_visibility.to_string());
        put("visibility_likelihood", self.visibility_likelihood.to_string());
        put("report_threshold", self.report_threshold.to_string());
        put("max_tracks", self.max_tracks.to_string());
        put("max_iterations", self.vem.max_iterations.to_string());
        put("convergence_tolerance", self.vem.tolerance.to_string());
        put("prior_blend", self.vem.prior_blend.to_string());
        put("learn_observation_covariance", self.vem.learn_observation_covariance.to_string());
        put("learn_dynamics_covariance", self.vem.learn_dynamics_covariance.to_string());
        put("birth.window", self.birth_window.to_string());
        put("birth.flat_velocity_std", self.birth_flat_velocity_std.to_string());
        put("birth.covariance_std", fmt_vec(self.birth_covariance_std.iter().copied()));
        put("birth.clutter_threshold", self.birth_clutter_threshold.to_string());
        put("birth.gate_factor", self.birth_gate_factor.to_string());
        put("birth.merge_iou", self.birth_merge_iou.to_string());
        put("metrics.iou_threshold", self.metrics.iou_threshold.to_string());
        put("metrics.ospa_cutoff", self.metrics.ospa_cutoff.to_string());
        put("metrics.ospa_order", self.metrics.ospa_order.to_string());
        put("metrics.ground_distance", self.metrics.ground_distance.to_string());
        put("sim.frames", self.sim_frames.to_string());
        put("sim.seed", self.sim_seed.to_string());
        put("sim.kappa", self.sim_kappa.to_string());
        for (i, d) in self.detectors.iter().enumerate() {
            let n = i + 1;
            put(&format!("sim.detector.{n}.sigma"), fmt_vec(d.sim_sigma.iter().copied()));
            put(&format!("sim.detector.{n}.miss"), d.sim_miss.to_string());
            put(&format!("sim.detector.{n}.clutter_rate"), d.sim_clutter_rate.to_string());
        }
        for (i, t) in self.targets.iter().enumerate() {
            let n = i + 1;
            put(&format!("sim.target.{n}.start"), t.start.to_string());
            put(&format!("sim.target.{n}.end"), t.end.map_or_else(|| "last".into(), |e| e.to_string()));
            put(&format!("sim.target.{n}.state"), fmt_vec(t.state.iter().copied()));
            put(&format!("sim.target.{n}.dynamics_std"), fmt_vec(t.dynamics_std.iter().copied()));
            let occ = if t.occlusions.is_empty() {
                "none".to_string()
            } else {
                t.occlusions.iter().map(|(a, b)| format!("{a}-{b}")).collect::<Vec<_>>().join(" ")
            };
            put(&format!("sim.target.{n}.occlusion"), occ);
        }
        e
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Clutter density used when a detector's is `auto`: uniform over box
    /// positions in the image and sizes up to the maximum box size.
    pub fn auto_clutter_density(&self) -> f64 {
        1.0 / (self.image_width * self.image_height * self.max_box_width * self.max_box_height)
    }

    /// The appearance normalizer, estimating it when set to `auto`.
    pub fn resolved_w_lambda(&self) -> f64 {
        self.w_lambda.unwrap_or_else(|| {
            estimate_w_lambda(
                self.lambda_appearance,
                self.appearance_bins,
                self.w_lambda_samples,
                self.w_lambda_seed,
            )
        })
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        if !(self.image_width > 0.0 && self.image_height > 0.0 && self.max_box_width > 0.0 && self.max_box_height > 0.0) {
            return Err(Error::Config("image and box sizes must be positive".into()));
        }
        if self.appearance_bins < 2 {
            return Err(Error::Config("appearance_bins must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.vem.prior_blend) {
            return Err(Error::Config("prior_blend must be in [0, 1]".into()));
        }
        let u_h = appearance_clutter_density(self.appearance_bins);
        let detectors = self
            .detectors
            .iter()
            .enumerate()
            .map(|(i, d)| {
                if d.sigma.iter().any(|s| !(*s > 0.0)) {
                    return Err(Error::Config(format!("detector.{}.sigma must be positive", i + 1)));
                }
                let cov = Mat4::from_diagonal(&d.sigma.component_mul(&d.sigma));
                let u_y = d.clutter_density.unwrap_or_else(|| self.auto_clutter_density());
                DetectorModel::affine(d.affine, d.offset, cov, u_y, u_h)
            })
            .collect::<Result<Vec<_>>>()?;
        if self.dynamics_std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("dynamics_std must be positive".into()));
        }
        let birth_cov = Mat6::from_diagonal(&self.birth_covariance_std.component_mul(&self.birth_covariance_std));
        let mut birth = BirthParams::for_image(self.image_width, self.image_height, self.birth_flat_velocity_std, birth_cov);
        birth.window = self.birth_window;
        birth.clutter_threshold = self.birth_clutter_threshold;
        birth.gate_factor = self.birth_gate_factor;
        birth.merge_iou = self.birth_merge_iou;
        if !(0.0..=1.0).contains(&self.report_threshold) {
            return Err(Error::Config("report_threshold must be in [0, 1]".into()));
        }
        let params = ModelParams {
            detectors,
            dynamics_covariance: Mat6::from_diagonal(&self.dynamics_std.component_mul(&self.dynamics_std)),
            lambda_appearance: self.lambda_appearance,
            w_lambda: self.resolved_w_lambda(),
            pi_v: self.pi_v,
            lambda_visibility: self.lambda_visibility,
            visibility_likelihood: self.visibility_likelihood,
            report_threshold: self.report_threshold,
            birth,
            max_tracks: self.max_tracks,
            vem: self.vem.clone(),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn metrics_config(&self) -> Result<MetricsConfig> {
        let m = &self.metrics;
        if !(m.ospa_cutoff > 0.0) || !(m.ospa_order >= 1.0) {
            return Err(Error::Config("OSPA needs cutoff > 0 and order >= 1".into()));
        }
        if !(0.0..=1.0).contains(&m.iou_threshold) {
            return Err(Error::Config("iou_threshold must be in [0, 1]".into()));
        }
        Ok(m.clone())
    }

    pub fn scenario(&self) -> Result<ScenarioConfig> {
        let s = ScenarioConfig {
            image_width: self.image_width,
            image_height: self.image_height,
            max_box_width: self.max_box_width,
            max_box_height: self.max_box_height,
            frames: self.sim_frames,
            targets: self
                .targets
                .iter()
                .map(|t| TargetScript {
                    start: t.start,
                    end: t.end.unwrap_or(self.sim_frames),
                    initial: t.state,
                    dynamics_std: t.dynamics_std,
                    occlusions: t.occlusions.clone(),
                    reference: None,
                })
                .collect(),
            detectors: self
                .detectors
                .iter()
                .map(|d| SimDetector {
                    transform: d.affine,
                    offset: d.offset,
                    noise_std: d.sim_sigma,
                    miss_probability: d.sim_miss,
                    clutter_rate: d.sim_clutter_rate,
                })
                .collect(),
            appearance_bins: self.appearance_bins,
            kappa: self.sim_kappa,
            seed: self.sim_seed,
        };
        s.validate()?;
        Ok(s)
    }
}

/// Loads a config file on top of the defaults.
pub fn load_config(path: &Path) -> Result<Config> {
    let mut c = Config::default();
    c.apply_file(path)?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Config> {
        let mut c = Config::default();
        c.apply_text(text, Path::new("test.cfg"))?;
        Ok(c)
    }

    #[test]
    fn text_round_trips_for_defaults_and_presets() {
        for c in [Config::default(), Config::preset("cpd-like").unwrap(), Config::preset("pets-like").unwrap()] {
            let back = parse(&c.to_text()).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn unknown_keys_rejected_with_line() {
        match parse("pi_v = 0.8\n\nflux_capacitor = 1\n") {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("flux_capacitor"));
            }
            other => panic!("{other:?}"),
        }
        assert!(parse("detector.1.colour = red").is_err());
        assert!(parse("detector.0.sigma = 1 1 1 1").is_err());
        assert!(parse("sim.target.x.start = 1").is_err());
    }

    #[test]
    fn values_are_checked() {
        assert!(parse("dynamics_std = 1 2 3").is_err());
        assert!(parse("learn_dynamics_covariance = yes").is_err());
        assert!(parse("w_lambda = -1").is_err());
        assert!(parse("pi_v = nan").is_err());
        assert!(parse("sim.target.1.occlusion = 30-20").is_err());
        assert!(parse("visibility_likelihood = inverted").is_err());
    }

    #[test]
    fn indexed_keys_grow_lists() {
        let c = parse("detector.2.sigma = 1 1 1 1 # face\nsim.target.2.start = 5\nsim.target.2.occlusion = 10-20 30-31").unwrap();
        assert_eq!(c.detectors.len(), 2);
        assert_eq!(c.detectors[1].sigma, Vec4::repeat(1.0));
        assert_eq!(c.targets.len(), 2);
        assert_eq!(c.targets[1].occlusions, vec![(10, 20), (30, 31)]);
        assert_eq!(c.targets[0], TargetSettings::default());
    }

    #[test]
    fn model_params_from_defaults() {
        let mut c = Config::default();
        c.w_lambda = Some(0.5);
        let p = c.model_params().unwrap();
        assert_eq!(p.detectors.len(), 1);
        assert!((p.detectors[0].clutter_density() - 1.0 / (640.0 * 480.0 * 200.0 * 300.0)).abs() < 1e-25);
        assert_eq!(p.w_lambda, 0.5);
        assert_eq!(p.dynamics_covariance[(4, 4)], 0.1 * 0.1);
        assert_eq!(p.birth.window, 2);
        c.detectors[0].sigma[0] = 0.0;
        assert!(c.model_params().is_err());
    }

    #[test]
    fn preset_scenario_matches_simulator_preset() {
        for name in Config::preset_names() {
            let c = Config::preset(name).unwrap();
            assert_eq!(c.scenario().unwrap(), scenario_preset(name).unwrap());
        }
        assert!(Config::preset("nope").is_err());
    }

    #[test]
    fn set_pair_parses_cli_form() {
        let mut c = Config::default();
        c.set_pair("max_iterations=3").unwrap();
        assert_eq!(c.vem.max_iterations, 3);
        assert!(c.set_pair("max_iterations").is_err());
    }
}
