//! Python bindings: exact oracle, dataset generation, surrogate training,
//! checkpoint I/O, and evaluation.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use std::path::PathBuf;

use fieldamort::checkpoint;
use fieldamort::data;
use fieldamort::models::{infer_collection, ModelKind, SurrogateModel};
use fieldamort::oracle;
use fieldamort::training;
use fieldamort::FieldError;

fn to_py(err: FieldError) -> PyErr {
    match &err {
        FieldError::Io(_) | FieldError::Truncated(_) | FieldError::Checksum(_) => {
            PyIOError::new_err(err.to_string())
        }
        _ => PyValueError::new_err(err.to_string()),
    }
}

/// A circular dipole source in the plane.
#[pyclass(name = "Source", from_py_object)]
#[derive(Clone)]
struct PySource {
    inner: oracle::Source,
}

#[pymethods]
impl PySource {
    #[new]
    #[pyo3(signature = (position, moment, radius = 1.0))]
    fn new(position: [f64; 2], moment: [f64; 2], radius: f64) -> PyResult<Self> {
        let inner = oracle::Source {
            position,
            moment,
            radius,
        };
        inner.validate().map_err(to_py)?;
        Ok(PySource { inner })
    }

    #[getter]
    fn position(&self) -> [f64; 2] {
        self.inner.position
    }

    #[getter]
    fn moment(&self) -> [f64; 2] {
        self.inner.moment
    }

    #[getter]
    fn radius(&self) -> f64 {
        self.inner.radius
    }

    fn __repr__(&self) -> String {
        format!(
            "Source(position={:?}, moment={:?}, radius={})",
            self.inner.position, self.inner.moment, self.inner.radius
        )
    }
}

/// A set of sources inside a shared rectangular domain.
#[pyclass(name = "SourceCollection", skip_from_py_object)]
#[derive(Clone)]
struct PyCollection {
    inner: oracle::SourceCollection,
}

#[pymethods]
impl PyCollection {
    #[new]
    #[pyo3(signature = (sources, lo = [-3.0, -3.0], hi = [3.0, 3.0]))]
    fn new(sources: Vec<PySource>, lo: [f64; 2], hi: [f64; 2]) -> PyResult<Self> {
        let domain = oracle::Domain::new(lo, hi).map_err(to_py)?;
        let inner =
            oracle::SourceCollection::new(sources.into_iter().map(|s| s.inner).collect(), domain)
                .map_err(to_py)?;
        Ok(PyCollection { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.sources.len()
    }

    /// Exact superposition potential at each point.
    fn potential(&self, points: Vec<[f64; 2]>) -> Vec<f64> {
        oracle::collection_potential(&self.inner, &points)
    }

    /// Exact superposition field H = -grad(phi) at each point.
    fn field(&self, points: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
        oracle::collection_field(&self.inner, &points)
    }
}

/// A generated labeled dataset held in memory.
#[pyclass(name = "Dataset")]
struct PyDataset {
    inner: data::Dataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    #[pyo3(signature = (n_collections, points_per_collection = 256, multi_source = false, grid = false, seed = 0))]
    fn generate(
        n_collections: usize,
        points_per_collection: usize,
        multi_source: bool,
        grid: bool,
        seed: u64,
    ) -> PyResult<Self> {
        let mut cfg = if multi_source {
            data::DataGenConfig::multi_source_validation(seed)
        } else {
            data::DataGenConfig::default()
        };
        cfg.n_collections = n_collections;
        cfg.points_per_collection = points_per_collection;
        if grid {
            cfg.sampling = data::Sampling::RegularGrid;
        }
        cfg.seed = seed;
        cfg.validate().map_err(to_py)?;
        Ok(PyDataset {
            inner: data::generate(&cfg).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyDataset {
            inner: data::load(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        data::save(&self.inner, &path).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.collections.len()
    }

    #[getter]
    fn total_samples(&self) -> usize {
        self.inner.total_samples()
    }

    #[getter]
    fn checksum(&self) -> String {
        self.inner.checksum()
    }
}

/// A trained (or freshly initialized) additive surrogate.
#[pyclass(name = "Model")]
struct PyModel {
    inner: SurrogateModel,
}

#[pymethods]
impl PyModel {
    /// Train a surrogate of the given kind ("fourier", "fcilr", "fcinr",
    /// "linear") on a dataset with the staged desk-scale schedule.
    #[staticmethod]
    #[pyo3(signature = (kind, dataset, epochs_per_stage = None, seed = 0))]
    fn train(
        kind: &str,
        dataset: &PyDataset,
        epochs_per_stage: Option<usize>,
        seed: u64,
    ) -> PyResult<(Self, Vec<f64>)> {
        let kind = ModelKind::parse(kind).map_err(to_py)?;
        let mut cfg = training::TrainConfig::desk_scale(kind);
        if let Some(e) = epochs_per_stage {
            cfg.epochs_per_stage = e;
        }
        cfg.seed = seed;
        let (model, report) = training::train(&cfg, &dataset.inner).map_err(to_py)?;
        Ok((PyModel { inner: model }, report.loss_curve))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        match checkpoint::load(&path).map_err(to_py)? {
            checkpoint::Checkpoint::TwoD(m) => Ok(PyModel { inner: m }),
            checkpoint::Checkpoint::OneD(_) => {
                Err(PyValueError::new_err("1D checkpoints are not exposed here"))
            }
        }
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        checkpoint::save_model(&self.inner, None, &path).map_err(to_py)
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind().name().to_string()
    }

    /// Amortized surrogate potential at each point.
    fn potential(&self, collection: &PyCollection, points: Vec<[f64; 2]>) -> PyResult<Vec<f64>> {
        let samples = infer_collection(&self.inner, &collection.inner, &points).map_err(to_py)?;
        Ok(samples.into_iter().map(|s| s.potential).collect())
    }

    /// Amortized surrogate field at each point.
    fn field(&self, collection: &PyCollection, points: Vec<[f64; 2]>) -> PyResult<Vec<[f64; 2]>> {
        let samples = infer_collection(&self.inner, &collection.inner, &points).map_err(to_py)?;
        Ok(samples.into_iter().map(|s| s.field).collect())
    }

    /// Pooled median relative errors (delta_phi, delta_h) over a dataset.
    fn evaluate(&self, dataset: &PyDataset) -> PyResult<(f64, f64)> {
        let m = training::evaluate(&self.inner, &dataset.inner).map_err(to_py)?;
        Ok((m.delta_phi, m.delta_h))
    }
}

/// Median relative errors between truth and prediction sample sets.
#[pyfunction]
fn relative_errors(
    truth_phi: Vec<f64>,
    truth_h: Vec<[f64; 2]>,
    pred_phi: Vec<f64>,
    pred_h: Vec<[f64; 2]>,
) -> PyResult<(f64, f64)> {
    if truth_phi.len() != truth_h.len() || pred_phi.len() != pred_h.len() {
        return Err(PyValueError::new_err("mismatched sample lengths"));
    }
    let pack = |phi: &[f64], h: &[[f64; 2]]| {
        phi.iter()
            .zip(h)
            .map(|(&potential, &field)| oracle::FieldSample {
                location: [0.0, 0.0],
                potential,
                field,
            })
            .collect::<Vec<_>>()
    };
    let m = oracle::relative_errors(&pack(&pred_phi, &pred_h), &pack(&truth_phi, &truth_h))
        .map_err(to_py)?;
    Ok((m.delta_phi, m.delta_h))
}

#[pymodule]
fn fieldamort_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySource>()?;
    m.add_class::<PyCollection>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(relative_errors, m)?)?;
    Ok(())
}
