//! On-line multi-object tracking with a variational Bayesian filter.
//!
//! Each frame runs a variational EM pass that alternates soft
//! detection-to-track assignment (with an explicit clutter target) and
//! Kalman-like Gaussian state updates. New tracks are spawned by a
//! likelihood-ratio test on clutter-assigned detection sequences, and a
//! per-track two-state HMM decides which tracks are visible and which sleep.
//!
//! Around the filter sit a synthetic scene simulator, CSV-style file formats,
//! and CLEAR-MOT / set-distance evaluation.
//!
//! Box convention everywhere: `(x, y)` is the top-left corner, `w`/`h` are
//! width and height, all in pixels. One frame is one time step.

pub mod assignment;
pub mod birth;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod observation;
pub mod simulator;
pub mod tracker;
pub mod types;
pub mod vem;
pub mod visibility;

pub use error::{Error, Result};
pub use types::{
    AppearanceHistogram, BoundingBox, Detection, DetectorModel, GaussianBelief, KinematicState,
    Mat4, Mat46, Mat6, ModelParams, Track, Vec4, Vec6,
};
