//! Python bindings for the vbtrack engine.
//!
//! Boxes cross the boundary as `(x, y, w, h)` floats; frame sets as lists of
//! `(id, x, y, w, h)`; detections as `(detector, x, y, w, h, histogram)` with
//! the histogram optional (uniform when `None`).

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use vbtrack::config::Config as CoreConfig;
use vbtrack::metrics::{self, EvaluationReport, FrameSet};
use vbtrack::types::{AppearanceHistogram, BoundingBox, Detection, Vec6};
use vbtrack::Error;

type PyBox = (f64, f64, f64, f64);
type PyDetection = (usize, f64, f64, f64, f64, Option<Vec<f64>>);
type PyFrameEntry = (u32, f64, f64, f64, f64);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn bbox((x, y, w, h): PyBox) -> PyResult<BoundingBox> {
    BoundingBox::new(x, y, w, h).map_err(to_py)
}

fn frame_sets(frames: Vec<Vec<PyFrameEntry>>) -> PyResult<Vec<FrameSet>> {
    frames
        .into_iter()
        .map(|f| f.into_iter().map(|(id, x, y, w, h)| Ok((id, bbox((x, y, w, h))?))).collect())
        .collect()
}

fn py_frame_sets(frames: &[FrameSet]) -> Vec<Vec<PyFrameEntry>> {
    frames
        .iter()
        .map(|f| f.iter().map(|(id, b)| (*id, b.x, b.y, b.w, b.h)).collect())
        .collect()
}

fn histogram(bins: Option<Vec<f64>>, dim: usize) -> PyResult<AppearanceHistogram> {
    match bins {
        Some(b) => AppearanceHistogram::new(b).map_err(to_py),
        None => Ok(AppearanceHistogram::uniform(dim)),
    }
}

/// Settings, built from defaults or a named preset and edited by key.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: CoreConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (preset=None))]
    fn new(preset: Option<&str>) -> PyResult<Self> {
        let inner = match preset {
            Some(name) => CoreConfig::preset(name).map_err(to_py)?,
            None => CoreConfig::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn preset_names() -> Vec<&'static str> {
        CoreConfig::preset_names().to_vec()
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner.set(key, value).map_err(to_py)
    }

    fn get(&self, key: &str) -> PyResult<String> {
        self.inner
            .entries()
            .into_iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v)
            .ok_or_else(|| PyValueError::new_err(format!("unknown key {key}")))
    }

    fn entries(&self) -> Vec<(String, String)> {
        self.inner.entries()
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __repr__(&self) -> String {
        format!("Config({} keys)", self.inner.entries().len())
    }
}

/// A simulated scene.
#[pyclass(name = "Scene")]
struct PyScene {
    #[pyo3(get)]
    detections: Vec<Vec<(usize, f64, f64, f64, f64, Vec<f64>)>>,
    #[pyo3(get)]
    truth: Vec<Vec<PyFrameEntry>>,
    /// Target id behind each detection, `None` for clutter.
    #[pyo3(get)]
    sources: Vec<Vec<Option<u32>>>,
}

#[pyfunction]
fn simulate(config: &PyConfig) -> PyResult<PyScene> {
    let scene = vbtrack::simulator::simulate(&config.inner.scenario().map_err(to_py)?).map_err(to_py)?;
    Ok(PyScene {
        detections: scene
            .detections
            .iter()
            .map(|f| {
                f.iter()
                    .map(|d| (d.detector, d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h, d.appearance.bins().to_vec()))
                    .collect()
            })
            .collect(),
        truth: py_frame_sets(&scene.truth.frames),
        sources: scene.sources,
    })
}

/// On-line tracker; call `step` once per frame, in order.
#[pyclass(name = "Tracker")]
struct PyTracker {
    inner: vbtrack::tracker::Tracker,
    bins: usize,
    frame: u64,
}

#[pymethods]
impl PyTracker {
    #[new]
    fn new(config: &PyConfig) -> PyResult<Self> {
        let params = config.inner.model_params().map_err(to_py)?;
        Ok(Self {
            inner: vbtrack::tracker::Tracker::new(params).map_err(to_py)?,
            bins: config.inner.appearance_bins,
            frame: 0,
        })
    }

    /// Processes the next frame and returns the reported tracks as
    /// `(id, x, y, w, h, visibility)`.
    fn step(&mut self, detections: Vec<PyDetection>) -> PyResult<Vec<(u32, f64, f64, f64, f64, f64)>> {
        let frame = self.frame + 1;
        let dets = detections
            .into_iter()
            .map(|(i, x, y, w, h, hist)| Ok(Detection::new(i, bbox((x, y, w, h))?, histogram(hist, self.bins)?, frame)))
            .collect::<PyResult<Vec<_>>>()?;
        let out = self.inner.step(frame, &dets).map_err(to_py)?;
        self.frame = frame;
        Ok(out
            .reported
            .iter()
            .map(|r| (r.id, r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h, r.visibility))
            .collect())
    }

    #[getter]
    fn frame(&self) -> u64 {
        self.frame
    }

    /// All tracks as `(id, mean state, visibility)`, reported or not.
    #[getter]
    fn tracks(&self) -> Vec<(u32, [f64; 6], f64)> {
        self.inner
            .tracks()
            .iter()
            .map(|t| {
                let m = t.belief.mean;
                (t.id, [m[0], m[1], m[2], m[3], m[4], m[5]], t.visibility_posterior)
            })
            .collect()
    }
}

/// Evaluation results.
#[pyclass(name = "Report")]
struct PyReport {
    inner: EvaluationReport,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn frames(&self) -> usize {
        self.inner.frames
    }
    #[getter]
    fn mota(&self) -> f64 {
        self.inner.clear.mota
    }
    #[getter]
    fn motp(&self) -> f64 {
        self.inner.clear.motp
    }
    #[getter]
    fn precision(&self) -> f64 {
        self.inner.clear.precision
    }
    #[getter]
    fn recall(&self) -> f64 {
        self.inner.clear.recall
    }
    #[getter]
    fn false_positives(&self) -> usize {
        self.inner.clear.false_positives
    }
    #[getter]
    fn false_negatives(&self) -> usize {
        self.inner.clear.false_negatives
    }
    #[getter]
    fn id_switches(&self) -> usize {
        self.inner.clear.id_switches
    }
    #[getter]
    fn mean_ospa(&self) -> f64 {
        self.inner.sets.mean_ospa
    }
    #[getter]
    fn mean_omat(&self) -> f64 {
        self.inner.sets.mean_omat
    }
    #[getter]
    fn mean_hausdorff(&self) -> f64 {
        self.inner.sets.mean_hausdorff
    }
    #[getter]
    fn count_exact_fraction(&self) -> f64 {
        self.inner.counts.fraction_exact
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }
}

#[pyfunction]
#[pyo3(signature = (truth, hypotheses, config=None))]
fn evaluate(truth: Vec<Vec<PyFrameEntry>>, hypotheses: Vec<Vec<PyFrameEntry>>, config: Option<&PyConfig>) -> PyResult<PyReport> {
    let metrics_config = match config {
        Some(c) => c.inner.metrics_config().map_err(to_py)?,
        None => metrics::MetricsConfig::default(),
    };
    let inner = metrics::evaluate(&frame_sets(truth)?, &frame_sets(hypotheses)?, &metrics_config).map_err(to_py)?;
    Ok(PyReport { inner })
}

#[pyfunction]
#[pyo3(signature = (truth, hypotheses, iou_threshold=0.5))]
fn clear_mot<'py>(
    py: Python<'py>,
    truth: Vec<Vec<PyFrameEntry>>,
    hypotheses: Vec<Vec<PyFrameEntry>>,
    iou_threshold: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = metrics::clear_mot(&frame_sets(truth)?, &frame_sets(hypotheses)?, iou_threshold).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("mota", r.mota)?;
    d.set_item("motp", r.motp)?;
    d.set_item("precision", r.precision)?;
    d.set_item("recall", r.recall)?;
    d.set_item("ground_truth", r.ground_truth)?;
    d.set_item("matches", r.matches)?;
    d.set_item("false_positives", r.false_positives)?;
    d.set_item("false_negatives", r.false_negatives)?;
    d.set_item("id_switches", r.id_switches)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (a, b, cutoff=100.0, order=1.0))]
fn ospa(a: Vec<(f64, f64)>, b: Vec<(f64, f64)>, cutoff: f64, order: f64) -> PyResult<f64> {
    metrics::ospa(&a, &b, cutoff, order).map_err(to_py)
}

#[pyfunction]
fn hausdorff(a: Vec<(f64, f64)>, b: Vec<(f64, f64)>) -> Option<f64> {
    metrics::hausdorff(&a, &b)
}

#[pyfunction]
#[pyo3(signature = (a, b, order=1.0))]
fn omat(a: Vec<(f64, f64)>, b: Vec<(f64, f64)>, order: f64) -> Option<f64> {
    metrics::omat(&a, &b, order)
}

#[pyfunction]
fn bhattacharyya(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    let a = AppearanceHistogram::new(a).map_err(to_py)?;
    let b = AppearanceHistogram::new(b).map_err(to_py)?;
    vbtrack::observation::bhattacharyya_distance(&a, &b).map_err(to_py)
}

/// One step of the constant-velocity model on `(x, y, w, h, vx, vy)`.
#[pyfunction]
fn apply_dynamics(state: [f64; 6]) -> [f64; 6] {
    let next = vbtrack::dynamics::apply_dynamics(&Vec6::from_column_slice(&state));
    [next[0], next[1], next[2], next[3], next[4], next[5]]
}

#[pyfunction]
fn transition_matrix() -> Vec<Vec<f64>> {
    let d = vbtrack::dynamics::transition_matrix();
    (0..6).map(|r| (0..6).map(|c| d[(r, c)]).collect()).collect()
}

#[pymodule]
fn vbtrack_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyScene>()?;
    m.add_class::<PyTracker>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(clear_mot, m)?)?;
    m.add_function(wrap_pyfunction!(ospa, m)?)?;
    m.add_function(wrap_pyfunction!(hausdorff, m)?)?;
    m.add_function(wrap_pyfunction!(omat, m)?)?;
    m.add_function(wrap_pyfunction!(bhattacharyya, m)?)?;
    m.add_function(wrap_pyfunction!(apply_dynamics, m)?)?;
    m.add_function(wrap_pyfunction!(transition_matrix, m)?)?;
    Ok(())
}
