//! Python bindings: `import pystrokescreen`.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde_json::Value;

use strokescreen::bundle::ModelBundle;
use strokescreen::cohort::{cleanse, ingest_csv, split_stratified, CleanseConfig};
use strokescreen::cspp::{label_cohort, label_risk as rule, CsppConfig};
use strokescreen::evaluation::evaluate;
use strokescreen::logit::{relabel_binary, select_features, SelectionConfig};
use strokescreen::model::{ModelKind, ModelSpec};
use strokescreen::service::{Service, ServiceError};
use strokescreen::synth::{generate_cohort, CalibrationTargets};
use strokescreen::{FeatureSchema, Model, RiskFactors};

fn err(e: strokescreen::Error) -> PyErr {
    match e {
        strokescreen::Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn service_err(e: ServiceError) -> PyErr {
    PyValueError::new_err(e.to_json())
}

/// Round-trip through the stdlib `json` module.
fn to_py(py: Python<'_>, v: &impl serde::Serialize) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_py(obj: &Bound<'_, PyAny>) -> PyResult<Value> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Risk level for the ten "8+2" factors, in order: hypertension, diabetes,
/// heart disease, hyperlipidemia, family history, overweight, smoking,
/// physical inactivity, prior stroke, prior TIA.
#[pyfunction]
fn label_risk(factors: [bool; 10]) -> &'static str {
    rule(&RiskFactors::from_array(factors)).as_str()
}

#[pyclass(name = "Cohort", module = "pystrokescreen")]
struct PyCohort {
    inner: strokescreen::Cohort,
}

#[pymethods]
impl PyCohort {
    /// Read a CSV laid out with the resident survey schema.
    #[staticmethod]
    fn read_csv(path: PathBuf) -> PyResult<Self> {
        let (inner, _) = ingest_csv(&path, &FeatureSchema::resident_survey()).map_err(err)?;
        Ok(PyCohort { inner })
    }

    fn save_csv(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_csv(&path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn columns(&self) -> Vec<String> {
        self.inner.schema().names().into_iter().map(str::to_string).collect()
    }

    fn row(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= self.inner.n_rows() {
            return Err(PyValueError::new_err(format!("row {i} out of range")));
        }
        Ok(self.inner.row(i).to_vec())
    }

    /// Class names per row, or `None` for an unlabeled cohort.
    fn labels(&self) -> Option<Vec<String>> {
        self.inner
            .labels()
            .map(|l| l.values.iter().map(|&v| l.class_name(v)).collect())
    }

    /// Cleansed copy and the cleansing report.
    fn cleanse(&self, py: Python<'_>) -> PyResult<(Self, Py<PyAny>)> {
        let (inner, report) = cleanse(&self.inner, &CleanseConfig::default());
        Ok((PyCohort { inner }, to_py(py, &report)?))
    }

    /// Copy labeled by the "8+2" rule.
    fn label(&self) -> PyResult<Self> {
        Ok(PyCohort {
            inner: label_cohort(&self.inner, &CsppConfig::default()).map_err(err)?,
        })
    }

    #[pyo3(signature = (test_fraction = 0.2, seed = 0))]
    fn split(&self, test_fraction: f64, seed: u64) -> PyResult<(Self, Self)> {
        let (a, b) = split_stratified(&self.inner, test_fraction, seed).map_err(err)?;
        Ok((PyCohort { inner: a }, PyCohort { inner: b }))
    }
}

/// Synthetic resident cohort labeled by risk level, or by stroke outcome
/// when `outcome="stroke"`.
#[pyfunction]
#[pyo3(signature = (n, seed = 0, outcome = "risk"))]
fn synth(n: usize, seed: u64, outcome: &str) -> PyResult<PyCohort> {
    let s = generate_cohort(&CalibrationTargets::default(), n, seed).map_err(err)?;
    let inner = match outcome {
        "risk" => s.cohort,
        "stroke" => s.stroke_cohort().map_err(err)?,
        other => return Err(PyValueError::new_err(format!("unknown outcome {other:?}"))),
    };
    Ok(PyCohort { inner })
}

#[pyclass(name = "Bundle", module = "pystrokescreen")]
struct PyBundle {
    service: Service,
}

impl PyBundle {
    fn wrap(bundle: ModelBundle) -> PyResult<Self> {
        Ok(PyBundle {
            service: Service::new(bundle).map_err(err)?,
        })
    }
}

#[pymethods]
impl PyBundle {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Self::wrap(ModelBundle::load(&path).map_err(err)?)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.service.bundle().save(&path).map_err(err)
    }

    fn to_bytes(&self) -> PyResult<Vec<u8>> {
        self.service.bundle().to_bytes().map_err(err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.service.bundle().model.kind_name()
    }

    #[getter]
    fn class_names(&self) -> Vec<String> {
        self.service.bundle().class_names.clone()
    }

    #[getter]
    fn model_features(&self) -> Vec<String> {
        self.service.bundle().model_features.clone()
    }

    /// `{"risk_label", "probability", "missing_imputed"}` for a feature map.
    fn predict(&self, py: Python<'_>, features: &Bound<'_, PyDict>) -> PyResult<Py<PyAny>> {
        let r = self.service.predict(&from_py(features.as_any())?).map_err(service_err)?;
        to_py(py, &r)
    }

    /// `{"base_value", "contributions": [{"feature", "value"}]}`.
    fn explain(&self, py: Python<'_>, features: &Bound<'_, PyDict>) -> PyResult<Py<PyAny>> {
        let r = self.service.explain(&from_py(features.as_any())?).map_err(service_err)?;
        to_py(py, &r)
    }

    /// Classification report on a labeled cohort with the training columns.
    fn evaluate(&self, py: Python<'_>, cohort: &PyCohort) -> PyResult<Py<PyAny>> {
        let b = self.service.bundle();
        let names: Vec<&str> = b.model_features.iter().map(String::as_str).collect();
        let mut view = cohort.inner.select_named(&names).map_err(err)?;
        if matches!(b.model, Model::Logit(_)) {
            view = relabel_binary(&view).map_err(err)?;
        }
        to_py(py, &evaluate(&b.model, &view).map_err(err)?)
    }
}

/// Fit `kind` ("tree", "forest" or "logit") on a labeled cohort.
#[pyfunction]
#[pyo3(signature = (cohort, kind, seed = 0, n_trees = None, max_depth = None))]
fn train(
    py: Python<'_>,
    cohort: &PyCohort,
    kind: &str,
    seed: u64,
    n_trees: Option<usize>,
    max_depth: Option<usize>,
) -> PyResult<PyBundle> {
    let kind: ModelKind = kind.parse().map_err(err)?;
    let mut spec = ModelSpec::new(kind);
    spec.train.seed = seed;
    if let Some(n) = n_trees {
        spec.train.n_trees = n;
    }
    if let Some(d) = max_depth {
        spec.train.max_depth = d;
    }
    let data = &cohort.inner;
    let bundle = py
        .detach(|| -> strokescreen::Result<ModelBundle> {
            let training = if kind == ModelKind::Logit {
                select_features(&relabel_binary(data)?, &SelectionConfig::default())?.0
            } else {
                data.clone()
            };
            let model = spec.fit(&training)?;
            let background: Vec<Vec<f64>> = if kind == ModelKind::Logit {
                let n = training.n_rows();
                let k = n.min(50);
                (0..k).map(|i| training.row(i * n / k).to_vec()).collect()
            } else {
                Vec::new()
            };
            let b = ModelBundle::new(
                model,
                data.schema().clone(),
                &training,
                CleanseConfig::default(),
                CsppConfig::default(),
                spec,
                seed,
            )?;
            if background.is_empty() {
                Ok(b)
            } else {
                b.with_background(background)
            }
        })
        .map_err(err)?;
    PyBundle::wrap(bundle)
}

#[pymodule]
fn pystrokescreen(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCohort>()?;
    m.add_class::<PyBundle>()?;
    m.add_function(wrap_pyfunction!(label_risk, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
