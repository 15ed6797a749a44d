//! Python bindings. Maps are exchanged as nested lists (row-major, origin
//! top-left) so callers can wrap them with `numpy.asarray`.

use std::path::PathBuf;

use ndarray::Array2;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use railscope::config::PipelineConfig;
use railscope::pipeline::{self, AnalysisReport};
use railscope::{FrameStack, ScanPlan};

create_exception!(railscope, RailscopeError, PyException);

fn py_err(e: railscope::Error) -> PyErr {
    RailscopeError::new_err(format!("{}: {e}", e.category()))
}

fn to_rows<T: Copy>(map: &Array2<T>) -> Vec<Vec<T>> {
    map.rows().into_iter().map(|r| r.to_vec()).collect()
}

#[pyclass(name = "Floorplan", frozen)]
struct PyFloorplan {
    inner: railscope::Floorplan,
}

#[pymethods]
impl PyFloorplan {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        let inner = railscope::parse_floorplan(text).map_err(py_err)?;
        Ok(PyFloorplan { inner })
    }

    #[staticmethod]
    fn from_path(path: PathBuf) -> PyResult<Self> {
        let inner = railscope::Floorplan::from_path(path).map_err(py_err)?;
        Ok(PyFloorplan { inner })
    }

    /// `(rows, cols)` of the raster.
    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.inner.shape()
    }

    #[getter]
    fn pitch_um(&self) -> f64 {
        self.inner.die.grid_pitch_um
    }

    #[getter]
    fn rail_ids(&self) -> Vec<String> {
        self.inner.rails.iter().map(|r| r.id.clone()).collect()
    }

    fn footprint_fraction(&self, rail_id: &str) -> PyResult<f64> {
        self.inner.footprint_fraction(rail_id).map_err(py_err)
    }

    fn footprint(&self, rail_id: &str) -> PyResult<Vec<Vec<bool>>> {
        Ok(to_rows(&self.inner.rasterize_rail_footprint(rail_id).map_err(py_err)?))
    }

    fn emissivity_map(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.render_emissivity_map())
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    fn __repr__(&self) -> String {
        let (rows, cols) = self.inner.shape();
        format!("Floorplan({} rails, {cols}x{rows} px)", self.inner.rails.len())
    }
}

#[pyclass(name = "ScanPlan", frozen)]
struct PyScanPlan {
    inner: ScanPlan,
}

#[pymethods]
impl PyScanPlan {
    #[new]
    #[pyo3(signature = (width_um, height_um, step_x_um=1.0, step_y_um=1.0, attempts=1, t_attempt_s=0.1, comb=1))]
    fn new(
        width_um: f64,
        height_um: f64,
        step_x_um: f64,
        step_y_um: f64,
        attempts: u64,
        t_attempt_s: f64,
        comb: u64,
    ) -> PyResult<Self> {
        let plan = ScanPlan::new(width_um, height_um, step_x_um, step_y_um, attempts, t_attempt_s, comb);
        let inner = railscope::scan_time(&plan).map_err(py_err)?;
        Ok(PyScanPlan { inner })
    }

    #[getter]
    fn positions(&self) -> u64 {
        self.inner.positions
    }

    #[getter]
    fn t_scan_s(&self) -> f64 {
        self.inner.t_scan_s
    }

    #[getter]
    fn t_scan_days(&self) -> f64 {
        self.inner.t_scan_days()
    }

    fn masked_speedup(&self, fraction: f64) -> PyResult<f64> {
        self.inner.masked_speedup(fraction).map_err(py_err)
    }

    /// TOML plan report, optionally restricted to an affected fraction.
    #[pyo3(signature = (affected_fraction=None))]
    fn report(&self, affected_fraction: Option<f64>) -> PyResult<String> {
        Ok(pipeline::plan_report(&self.inner, affected_fraction).map_err(py_err)?.to_toml())
    }
}

#[pyclass(name = "AnalysisReport", frozen)]
struct PyAnalysisReport {
    inner: AnalysisReport,
}

#[pymethods]
impl PyAnalysisReport {
    #[getter]
    fn rail_id(&self) -> &str {
        &self.inner.rail_id
    }

    #[getter]
    fn technique(&self) -> &'static str {
        self.inner.technique.as_str()
    }

    #[getter]
    fn affected_fraction(&self) -> f64 {
        self.inner.affected_fraction
    }

    #[getter]
    fn search_space_reduction(&self) -> f64 {
        self.inner.search_space_reduction
    }

    #[getter]
    fn refined_fraction(&self) -> f64 {
        self.inner.refined_fraction
    }

    #[getter]
    fn threshold_value(&self) -> f64 {
        self.inner.threshold_value
    }

    #[getter]
    fn n_components(&self) -> usize {
        self.inner.n_components
    }

    #[getter]
    fn iou(&self) -> Option<f64> {
        self.inner.ground_truth.map(|g| g.iou)
    }

    #[getter]
    fn false_positive_rate(&self) -> Option<f64> {
        self.inner.ground_truth.map(|g| g.false_positive_rate)
    }

    fn to_toml(&self) -> String {
        toml::to_string(&self.inner).unwrap_or_default()
    }
}

/// Runs the acquisition described by a scan config and returns the output directory.
#[pyfunction]
#[pyo3(signature = (config_path, output=None))]
fn simulate(py: Python<'_>, config_path: PathBuf, output: Option<PathBuf>) -> PyResult<PathBuf> {
    let mut cfg = PipelineConfig::from_path(&config_path).map_err(py_err)?;
    if let Some(out) = output {
        cfg.output = out;
    }
    py.detach(|| pipeline::simulate(&cfg)).map_err(py_err)?;
    Ok(cfg.output)
}

/// Demodulates and classifies a simulation directory.
#[pyfunction]
#[pyo3(signature = (sim_dir, output=None))]
fn analyze(py: Python<'_>, sim_dir: PathBuf, output: Option<PathBuf>) -> PyResult<PyAnalysisReport> {
    let analysis = py
        .detach(|| pipeline::analyze(&sim_dir, None, output.as_deref()))
        .map_err(py_err)?;
    Ok(PyAnalysisReport { inner: analysis.report })
}

/// Lock-in demodulation of a frame stack `frames[k][row][col]`. Returns `(amplitude, phase)` maps.
#[pyfunction]
#[pyo3(signature = (frames, fps, ref_frequency_hz, ref_phase_rad=0.0))]
fn lockin(
    frames: Vec<Vec<Vec<f64>>>,
    fps: f64,
    ref_frequency_hz: f64,
    ref_phase_rad: f64,
) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let height = frames.first().map_or(0, Vec::len);
    let width = frames.first().and_then(|f| f.first()).map_or(0, Vec::len);
    if frames.iter().flatten().any(|row| row.len() != width) || frames.iter().any(|f| f.len() != height) {
        return Err(RailscopeError::new_err("dimension: frames are not rectangular"));
    }
    let data: Vec<f64> = frames.into_iter().flatten().flatten().collect();
    let stack = FrameStack::new(width, height, fps, 0.0, data).map_err(py_err)?;
    let r = railscope::lockin_demodulate(&stack, ref_frequency_hz, ref_phase_rad).map_err(py_err)?;
    Ok((to_rows(&r.amplitude), to_rows(&r.phase)))
}

/// Point-mode lock-in of one time series. Returns `(amplitude, phase)`.
#[pyfunction]
#[pyo3(signature = (samples, fps, ref_frequency_hz, ref_phase_rad=0.0))]
fn demodulate_series(samples: Vec<f64>, fps: f64, ref_frequency_hz: f64, ref_phase_rad: f64) -> PyResult<(f64, f64)> {
    railscope::lockin::demodulate_series(&samples, fps, ref_frequency_hz, ref_phase_rad).map_err(py_err)
}

#[pyfunction]
fn masked_speedup(fraction: f64) -> PyResult<f64> {
    railscope::masked_speedup(fraction).map_err(py_err)
}

/// Fraction of set pixels in a mask file written by `analyze`.
#[pyfunction]
fn mask_fraction(path: PathBuf) -> PyResult<f64> {
    pipeline::mask_fraction(&path).map_err(py_err)
}

#[pymodule]
#[pyo3(name = "railscope")]
fn railscope_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RailscopeError", m.py().get_type::<RailscopeError>())?;
    m.add_class::<PyFloorplan>()?;
    m.add_class::<PyScanPlan>()?;
    m.add_class::<PyAnalysisReport>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(lockin, m)?)?;
    m.add_function(wrap_pyfunction!(demodulate_series, m)?)?;
    m.add_function(wrap_pyfunction!(masked_speedup, m)?)?;
    m.add_function(wrap_pyfunction!(mask_fraction, m)?)?;
    Ok(())
}
