//! Python bindings. Rolls cross the boundary as lists of rows; heavy calls
//! release the interpreter lock.

use std::path::PathBuf;

use crbm_core::constraints::{extract_template, ConstraintWeights, TemplateConfig};
use crbm_core::crbm::TrainConfig;
use crbm_core::pianoroll::{midi_to_pianoroll, pianoroll_to_midi, IngestConfig};
use crbm_core::sampler::SamplerConfig;
use crbm_core::synth::SynthConfig;
use crbm_core::Error;
use ndarray::Array2;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        Error::NotCalibrated => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait OrPy<T> {
    fn or_py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for crbm_core::Result<T> {
    fn or_py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// A `T x P` roll of note probabilities in `[0, 1]`.
#[pyclass(name = "PianoRoll", module = "crbm", from_py_object)]
#[derive(Clone)]
struct PyPianoRoll {
    inner: crbm_core::pianoroll::PianoRoll,
}

#[pymethods]
impl PyPianoRoll {
    #[new]
    #[pyo3(signature = (rows, pitch_base = 28))]
    fn new(rows: Vec<Vec<f64>>, pitch_base: i32) -> PyResult<Self> {
        let t = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(PyValueError::new_err("rows differ in length"));
        }
        let data = Array2::from_shape_vec((t, p), rows.into_iter().flatten().collect())
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let inner = crbm_core::pianoroll::PianoRoll::new(data, pitch_base).or_py()?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn zeros(t_steps: usize, pitch_count: usize, pitch_base: i32) -> Self {
        Self {
            inner: crbm_core::pianoroll::PianoRoll::zeros(t_steps, pitch_count, pitch_base),
        }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: crbm_core::pianoroll::load_roll(path).or_py()?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        crbm_core::pianoroll::save_roll(&self.inner, path).or_py()
    }

    /// Ingests a MIDI file; `t_steps=None` sizes the roll to the piece.
    #[staticmethod]
    #[pyo3(signature = (path, pitch_base = 28, pitch_count = 64, t_steps = None))]
    fn from_midi(path: PathBuf, pitch_base: i32, pitch_count: usize, t_steps: Option<usize>) -> PyResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        let cfg = IngestConfig {
            pitch_base,
            pitch_count,
            t_steps,
            ..IngestConfig::default()
        };
        let (inner, _) = midi_to_pianoroll(&bytes, &cfg).or_py()?;
        Ok(Self { inner })
    }

    #[pyo3(signature = (path, threshold = 0.5))]
    fn to_midi(&self, path: PathBuf, threshold: f64) -> PyResult<()> {
        let bytes = pianoroll_to_midi(&self.inner, threshold).or_py()?;
        std::fs::write(path, bytes).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        self.inner.view().rows().into_iter().map(|r| r.to_vec()).collect()
    }

    fn binarize(&self, threshold: f64) -> Self {
        Self {
            inner: self.inner.binarize(threshold),
        }
    }

    #[getter]
    fn t_steps(&self) -> usize {
        self.inner.t_steps()
    }

    #[getter]
    fn pitch_count(&self) -> usize {
        self.inner.pitch_count()
    }

    #[getter]
    fn pitch_base(&self) -> i32 {
        self.inner.pitch_base()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "PianoRoll(t_steps={}, pitch_count={}, pitch_base={})",
            self.inner.t_steps(),
            self.inner.pitch_count(),
            self.inner.pitch_base()
        )
    }
}

#[pyclass(name = "CrbmModel", module = "crbm", from_py_object)]
#[derive(Clone)]
struct PyCrbmModel {
    inner: crbm_core::crbm::CrbmParams,
}

#[pymethods]
impl PyCrbmModel {
    #[staticmethod]
    fn random(n_filters: usize, filter_width: usize, pitch_count: usize, stride: usize, seed: u64) -> PyResult<Self> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            inner: crbm_core::crbm::CrbmParams::random(n_filters, filter_width, pitch_count, stride, &mut rng).or_py()?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: crbm_core::crbm::CrbmParams::load(path).or_py()?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).or_py()
    }

    fn free_energy(&self, roll: &PyPianoRoll) -> PyResult<f64> {
        self.inner.free_energy(&roll.inner).or_py()
    }

    /// Runs `steps` Gibbs sweeps from `roll`; returns the final visible
    /// probabilities.
    fn gibbs_chain(&self, py: Python<'_>, roll: &PyPianoRoll, steps: usize, seed: u64) -> PyResult<PyPianoRoll> {
        use rand::SeedableRng;
        let (out, _) = py
            .detach(|| {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                self.inner.gibbs_chain(&roll.inner, steps, &mut rng)
            })
            .or_py()?;
        Ok(PyPianoRoll { inner: out })
    }

    #[getter]
    fn n_filters(&self) -> usize {
        self.inner.n_filters()
    }

    #[getter]
    fn filter_width(&self) -> usize {
        self.inner.filter_width()
    }

    #[getter]
    fn pitch_count(&self) -> usize {
        self.inner.pitch_count()
    }

    #[getter]
    fn stride(&self) -> usize {
        self.inner.stride
    }
}

#[pyclass(name = "StructureTemplate", module = "crbm", from_py_object)]
#[derive(Clone)]
struct PyStructureTemplate {
    inner: crbm_core::constraints::StructureTemplate,
}

#[pymethods]
impl PyStructureTemplate {
    #[staticmethod]
    #[pyo3(signature = (
        roll, lambda_ = 8, key_window = 4, bar_len = 16, octaves = None,
        w_selfsim = 1.5, w_tonal = 5.0, w_meter = 0.5
    ))]
    #[allow(clippy::too_many_arguments)]
    fn extract(
        roll: &PyPianoRoll,
        lambda_: usize,
        key_window: usize,
        bar_len: usize,
        octaves: Option<usize>,
        w_selfsim: f64,
        w_tonal: f64,
        w_meter: f64,
    ) -> PyResult<Self> {
        let cfg = TemplateConfig {
            lambda: lambda_,
            key_window,
            bar_len,
            octaves,
            weights: ConstraintWeights {
                selfsim: w_selfsim,
                tonal: w_tonal,
                meter: w_meter,
            },
        };
        Ok(Self {
            inner: extract_template(&roll.inner, &cfg).or_py()?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: crbm_core::constraints::StructureTemplate::load(path).or_py()?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).or_py()
    }

    /// Weighted total and the three unweighted terms.
    fn cost<'py>(&self, py: Python<'py>, roll: &PyPianoRoll) -> PyResult<Bound<'py, PyDict>> {
        let c = self.inner.cost(&roll.inner).or_py()?;
        let d = PyDict::new(py);
        d.set_item("total", c.total)?;
        d.set_item("selfsim", c.selfsim)?;
        d.set_item("tonal", c.tonal)?;
        d.set_item("meter", c.meter)?;
        Ok(d)
    }

    #[getter]
    fn t_steps(&self) -> usize {
        self.inner.t_steps
    }

    #[getter]
    fn pitch_count(&self) -> usize {
        self.inner.pitch_count
    }
}

/// Trains a model; returns it with one dict per epoch.
#[pyfunction]
#[pyo3(signature = (
    rolls, seed, n_filters = 2048, filter_width = 17, stride = 4, instance_len = 512,
    learning_rate = 15e-4, epochs = 100, particles = 10
))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    rolls: Vec<PyPianoRoll>,
    seed: u64,
    n_filters: usize,
    filter_width: usize,
    stride: usize,
    instance_len: usize,
    learning_rate: f64,
    epochs: usize,
    particles: usize,
) -> PyResult<(PyCrbmModel, Vec<Bound<'py, PyDict>>)> {
    let cfg = TrainConfig {
        n_filters,
        filter_width,
        stride,
        instance_len,
        learning_rate,
        epochs,
        particles,
        rng_seed: seed,
        ..TrainConfig::default()
    };
    let corpus: Vec<_> = rolls.into_iter().map(|r| r.inner).collect();
    let (model, log) = py.detach(|| crbm_core::crbm::train(&corpus, &cfg)).or_py()?;
    let rows = log
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("epoch", r.epoch)?;
            d.set_item("mean_free_energy", r.mean_free_energy)?;
            d.set_item("mean_hidden_activation", r.mean_hidden_activation)?;
            d.set_item("units_reset", r.units_reset)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok((PyCrbmModel { inner: model }, rows))
}

/// Runs `n_solutions` annealed chains and returns the best `select_k`, each
/// as a dict with `roll`, `best_score`, `seed` and per-iteration `trace`.
#[pyfunction]
#[pyo3(signature = (
    model, template, seed, n_solutions = 1, select_k = 1, outer_iters = 250, inner_iters = 15,
    gd_phase_steps = 20, gd_phase_lr = 10.0, gs_block_steps = 100, interleaved_gd_lr = 5.0,
    warmup_iters = 30, pitch_base = 28
))]
#[allow(clippy::too_many_arguments)]
fn constrained_sample<'py>(
    py: Python<'py>,
    model: &PyCrbmModel,
    template: &PyStructureTemplate,
    seed: u64,
    n_solutions: usize,
    select_k: usize,
    outer_iters: usize,
    inner_iters: usize,
    gd_phase_steps: usize,
    gd_phase_lr: f64,
    gs_block_steps: usize,
    interleaved_gd_lr: f64,
    warmup_iters: usize,
    pitch_base: i32,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = SamplerConfig {
        outer_iters,
        inner_iters,
        gd_phase_steps,
        gd_phase_lr,
        gs_block_steps,
        interleaved_gd_lr,
        warmup_iters,
        pitch_base,
        rng_seed: seed,
    };
    let (results, _) = py
        .detach(|| crbm_core::sampler::batch_sample(&model.inner, &template.inner, &cfg, n_solutions, select_k))
        .or_py()?;
    results
        .into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            let trace = r
                .trace
                .iter()
                .map(|row| {
                    let t = PyDict::new(py);
                    t.set_item("iter", row.iter)?;
                    t.set_item("free_energy", row.free_energy)?;
                    t.set_item("cost", row.cost)?;
                    t.set_item("accepted", row.accepted)?;
                    t.set_item("best_score", row.best_score)?;
                    Ok(t)
                })
                .collect::<PyResult<Vec<_>>>()?;
            d.set_item("roll", PyPianoRoll { inner: r.best })?;
            d.set_item("best_score", r.best_score)?;
            d.set_item("seed", r.seed)?;
            d.set_item("trace", trace)?;
            Ok(d)
        })
        .collect()
}

/// Average Information Rate in bits of the roll binarized at `threshold`.
#[pyfunction]
#[pyo3(signature = (roll, threshold = 0.5))]
fn information_rate(roll: &PyPianoRoll, threshold: f64) -> PyResult<f64> {
    Ok(crbm_core::eval::information_rate(&roll.inner, threshold).or_py()?.average_ir)
}

/// Key name such as `"G major"`, or `None` when the pitch-class histogram is
/// flat.
#[pyfunction]
fn ks_key_estimate(roll: &PyPianoRoll) -> Option<String> {
    crbm_core::eval::ks_key_estimate(&roll.inner).map(|k| k.to_string())
}

/// A seeded toy piece: a two-bar phrase repeated to fill `t_steps`.
#[pyfunction]
#[pyo3(signature = (seed, t_steps = 64, pitch_count = 12, pitch_base = 60, bar_len = 16, accompaniment = false))]
fn repeating_piece(
    seed: u64,
    t_steps: usize,
    pitch_count: usize,
    pitch_base: i32,
    bar_len: usize,
    accompaniment: bool,
) -> PyResult<PyPianoRoll> {
    let cfg = SynthConfig {
        t_steps,
        pitch_count,
        pitch_base,
        bar_len,
        accompaniment,
    };
    Ok(PyPianoRoll {
        inner: crbm_core::synth::repeating_piece(&cfg, seed).or_py()?,
    })
}

#[pymodule]
fn crbm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPianoRoll>()?;
    m.add_class::<PyCrbmModel>()?;
    m.add_class::<PyStructureTemplate>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(constrained_sample, m)?)?;
    m.add_function(wrap_pyfunction!(information_rate, m)?)?;
    m.add_function(wrap_pyfunction!(ks_key_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(repeating_piece, m)?)?;
    Ok(())
}
