//! Python bindings. Tensors cross the boundary as a shape tuple plus a flat
//! row-major list, so the module has no numpy dependency.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use tore_core::baselines::{self, WindowSpec};
use tore_core::io::{self, Dtype};
use tore_core::simulator::{self, IntensitySignal, NoiseConfig, SignalField, SignalKind, SimConfig, Step};
use tore_core::{
    render_patch, render_unclamped, render_volume, validate_stream, Error, Event, Polarity, PolarityConvention,
    SensorGeometry, ToreConfig,
};

fn to_py(err: Error) -> PyErr {
    match err.root() {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

fn polarity(p: i64) -> PyResult<Polarity> {
    match p {
        1 => Ok(Polarity::On),
        0 | -1 => Ok(Polarity::Off),
        _ => Err(PyValueError::new_err(format!("polarity must be 1, 0 or -1, got {p}"))),
    }
}

fn dtype(name: &str) -> PyResult<Dtype> {
    match name {
        "f64" => Ok(Dtype::F64),
        "f32" => Ok(Dtype::F32),
        _ => Err(PyValueError::new_err(format!("dtype must be f64 or f32, got {name}"))),
    }
}

/// Dense row-major tensor.
#[pyclass(name = "Tensor", module = "tore", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyTensor {
    inner: tore_core::Tensor,
}

impl From<tore_core::Tensor> for PyTensor {
    fn from(inner: tore_core::Tensor) -> Self {
        PyTensor { inner }
    }
}

#[pymethods]
impl PyTensor {
    #[new]
    fn new(shape: Vec<usize>, data: Vec<f64>) -> PyResult<Self> {
        Ok(tore_core::Tensor::new(shape, data).map_err(to_py)?.into())
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.dims().to_vec()
    }

    /// Flat row-major values.
    fn tolist(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn get(&self, index: Vec<usize>) -> PyResult<f64> {
        let dims = self.inner.dims();
        if index.len() != dims.len() || index.iter().zip(dims).any(|(i, d)| i >= d) {
            return Err(PyValueError::new_err(format!("index {index:?} outside shape {dims:?}")));
        }
        Ok(self.inner.get(&index))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Tensor(shape={:?})", self.inner.dims())
    }
}

/// Validated, time-ordered events on a fixed sensor.
#[pyclass(name = "EventStream", module = "tore", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyEventStream {
    inner: tore_core::EventStream,
}

#[pymethods]
impl PyEventStream {
    /// `events` is a list of `(x, y, t_us, p)` with `p` in {1, 0, -1}.
    #[new]
    #[pyo3(signature = (events, width, height, policy = "reject"))]
    fn new(events: Vec<(u16, u16, u64, i64)>, width: u16, height: u16, policy: &str) -> PyResult<Self> {
        let geometry = SensorGeometry::new(width, height).map_err(to_py)?;
        let events = events
            .into_iter()
            .map(|(x, y, t, p)| Ok(Event::new(x, y, t, polarity(p)?)))
            .collect::<PyResult<Vec<_>>>()?;
        let inner = validate_stream(events, geometry, parse(policy)?).map_err(to_py)?;
        Ok(PyEventStream { inner })
    }

    #[getter]
    fn width(&self) -> u16 {
        self.inner.geometry().width()
    }

    #[getter]
    fn height(&self) -> u16 {
        self.inner.geometry().height()
    }

    /// Events as `(x, y, t_us, p)` with signed polarity.
    fn tolist(&self) -> Vec<(u16, u16, u64, i8)> {
        self.inner
            .events()
            .iter()
            .map(|e| (e.x, e.y, e.t, e.p.sign()))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("EventStream(len={}, size={})", self.inner.len(), self.inner.geometry())
    }
}

/// Per-pixel, per-polarity FIFO of the K most recent timestamps.
#[pyclass(name = "SensorState", module = "tore")]
pub struct PySensorState {
    inner: tore_core::SensorState,
}

#[pymethods]
impl PySensorState {
    #[new]
    #[pyo3(signature = (width, height, depth = 4, tau_us = 5_000_000, tau_prime_us = 150, policy = "reject"))]
    fn new(width: u16, height: u16, depth: usize, tau_us: u64, tau_prime_us: u64, policy: &str) -> PyResult<Self> {
        let config = ToreConfig {
            depth,
            tau_us,
            tau_prime_us,
            policy: parse(policy)?,
        };
        let geometry = SensorGeometry::new(width, height).map_err(to_py)?;
        let inner = tore_core::SensorState::new(geometry, config).map_err(to_py)?;
        Ok(PySensorState { inner })
    }

    #[getter]
    fn depth(&self) -> usize {
        self.inner.depth()
    }

    #[getter]
    fn last_event_time(&self) -> Option<u64> {
        self.inner.last_event_time()
    }

    fn insert(&mut self, x: u16, y: u16, t: u64, p: i64) -> PyResult<()> {
        self.inner.insert(Event::new(x, y, t, polarity(p)?)).map_err(to_py)
    }

    /// Inserts every event in order; returns the ingestion rate in events/s.
    fn ingest(&mut self, stream: &PyEventStream) -> PyResult<f64> {
        Ok(self.inner.ingest(&stream.inner).map_err(to_py)?.events_per_sec())
    }

    /// Newest-first timestamps of one cell, `None` for empty slots.
    fn snapshot_cell(&self, x: u16, y: u16, p: i64) -> PyResult<Vec<Option<u64>>> {
        self.inner.snapshot_cell(x, y, polarity(p)?).map_err(to_py)
    }

    /// Volume of shape `(2, K, H, W)` at query time `t`.
    #[pyo3(signature = (t, unclamped = false))]
    fn render(&self, t: u64, unclamped: bool) -> PyResult<PyTensor> {
        let volume = if unclamped {
            render_unclamped(&self.inner, t)
        } else {
            render_volume(&self.inner, t)
        };
        Ok(volume.map_err(to_py)?.into_tensor().into())
    }

    /// `(2, K, m, m)` patch around an already inserted event.
    fn render_patch(&self, x: u16, y: u16, t: u64, p: i64, m: usize) -> PyResult<PyTensor> {
        let patch = render_patch(&self.inner, &Event::new(x, y, t, polarity(p)?), m).map_err(to_py)?;
        Ok(patch.to_tensor().into())
    }

    fn save(&self, path: &str) -> PyResult<()> {
        io::checkpoint_state(&self.inner, path).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PySensorState {
            inner: io::restore_state(path).map_err(to_py)?,
        })
    }
}

/// Events from an analytic log-intensity signal shared by every pixel.
#[pyfunction]
#[pyo3(signature = (
    signal = "ramp", *, eps = 0.1, t_start_us = 0, t_end_us = 1_000_000, width = 1, height = 1,
    tick_us = 1, offset = 0.0, slope = 0.001, amplitude = 1.0, period_us = 1000.0, phase = 0.0,
    steps = None, noise_events = 0, seed = 0
))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    signal: &str,
    eps: f64,
    t_start_us: u64,
    t_end_us: u64,
    width: u16,
    height: u16,
    tick_us: u64,
    offset: f64,
    slope: f64,
    amplitude: f64,
    period_us: f64,
    phase: f64,
    steps: Option<Vec<(u64, f64)>>,
    noise_events: usize,
    seed: u64,
) -> PyResult<PyEventStream> {
    let signal = if signal == "constant" {
        IntensitySignal::constant(offset)
    } else {
        match parse::<SignalKind>(signal)? {
            SignalKind::LinearRamp => IntensitySignal::LinearRamp { offset, slope },
            SignalKind::Sinusoid => IntensitySignal::Sinusoid {
                offset,
                amplitude,
                period_us,
                phase,
            },
            SignalKind::StepTrain => {
                let steps = steps
                    .unwrap_or_default()
                    .into_iter()
                    .map(|(t, height)| Step { t, height });
                IntensitySignal::step_train(offset, steps.collect())
            }
        }
    };
    let mut config = SimConfig::new(
        eps,
        t_start_us,
        t_end_us,
        SensorGeometry::new(width, height).map_err(to_py)?,
    );
    config.tick_us = tick_us;
    config.noise = (noise_events > 0).then_some(NoiseConfig {
        events: noise_events,
        seed,
    });
    let inner = simulator::simulate(&SignalField::Uniform(signal), &config).map_err(to_py)?;
    Ok(PyEventStream { inner })
}

/// Reads `.csv` (t,x,y,p) or binary event files.
#[pyfunction]
#[pyo3(signature = (path, polarity = "binary", size = None, policy = "reject"))]
fn read_events(path: &str, polarity: &str, size: Option<(u16, u16)>, policy: &str) -> PyResult<PyEventStream> {
    let policy = parse(policy)?;
    let inner = if path.to_ascii_lowercase().ends_with(".csv") {
        let geometry = size
            .map(|(w, h)| SensorGeometry::new(w, h))
            .transpose()
            .map_err(to_py)?;
        io::read_events_csv(path, parse::<PolarityConvention>(polarity)?, geometry, policy)
    } else {
        io::read_events_binary_with_policy(path, policy)
    }
    .map_err(to_py)?;
    Ok(PyEventStream { inner })
}

#[pyfunction]
fn write_events(stream: &PyEventStream, path: &str) -> PyResult<()> {
    if path.to_ascii_lowercase().ends_with(".csv") {
        io::write_events_csv(&stream.inner, path, PolarityConvention::Binary)
    } else {
        io::write_events_binary(&stream.inner, path)
    }
    .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (tensor, path, dtype = "f64"))]
fn write_tensor(tensor: &PyTensor, path: &str, dtype: &str) -> PyResult<()> {
    io::write_tensor(&tensor.inner, path, self::dtype(dtype)?).map_err(to_py)
}

#[pyfunction]
fn read_tensor(path: &str) -> PyResult<PyTensor> {
    Ok(io::read_tensor(path).map_err(to_py)?.into())
}

/// Signed event sum per pixel over `(end_us - window_us, end_us]`.
#[pyfunction]
fn event_frame(stream: &PyEventStream, end_us: u64, window_us: u64) -> PyResult<PyTensor> {
    let window = WindowSpec::new(end_us, window_us).map_err(to_py)?;
    Ok(baselines::event_frame(&stream.inner, window).into())
}

#[pyfunction]
fn event_count(stream: &PyEventStream, end_us: u64, window_us: u64) -> PyResult<PyTensor> {
    let window = WindowSpec::new(end_us, window_us).map_err(to_py)?;
    Ok(baselines::event_count(&stream.inner, window).into())
}

/// Surface of active events and its validity mask, both `(2, H, W)`.
#[pyfunction]
#[pyo3(signature = (stream, end_us, sentinel = 0))]
fn sae(stream: &PyEventStream, end_us: u64, sentinel: u64) -> (PyTensor, PyTensor) {
    let surface = baselines::sae_with_sentinel(&stream.inner, end_us, sentinel);
    (surface.to_tensor().into(), surface.mask_tensor().into())
}

#[pyfunction]
#[pyo3(signature = (stream, end_us, window_us, bins = 5))]
fn voxel_grid(stream: &PyEventStream, end_us: u64, window_us: u64, bins: usize) -> PyResult<PyTensor> {
    let window = WindowSpec::new(end_us, window_us).map_err(to_py)?;
    Ok(baselines::voxel_grid(&stream.inner, window, bins)
        .map_err(to_py)?
        .into())
}

#[pymodule]
fn tore(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor>()?;
    m.add_class::<PyEventStream>()?;
    m.add_class::<PySensorState>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(read_events, m)?)?;
    m.add_function(wrap_pyfunction!(write_events, m)?)?;
    m.add_function(wrap_pyfunction!(read_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(write_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(event_frame, m)?)?;
    m.add_function(wrap_pyfunction!(event_count, m)?)?;
    m.add_function(wrap_pyfunction!(sae, m)?)?;
    m.add_function(wrap_pyfunction!(voxel_grid, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
