//! Python bindings: datasets, predictors, LOO models, JAW/JAWA intervals,
//! error assessment, metrics and the experiment harness.

use jaw_core::audit::{self, ErrorCriteria};
use jaw_core::harness::{run_experiment as run, ExperimentConfig, RawConfig};
use jaw_core::iflow::approx_loo_models;
use jaw_core::infer::{self, LooModels as CoreLoo, MethodRequest};
use jaw_core::{empdist, metrics, shift, Error};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn ext(v: f64) -> PyResult<empdist::ExtReal> {
    if v.is_nan() {
        return Err(PyValueError::new_err("NaN is not an extended real"));
    }
    Ok(match v {
        f64::NEG_INFINITY => empdist::ExtReal::NegInf,
        f64::INFINITY => empdist::ExtReal::PosInf,
        v => empdist::ExtReal::Finite(v),
    })
}

/// Rows of numeric features with one label each.
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct Dataset(jaw_core::Dataset);

#[pymethods]
impl Dataset {
    #[new]
    fn new(features: Vec<Vec<f64>>, labels: Vec<f64>) -> PyResult<Self> {
        jaw_core::Dataset::from_rows(&features, labels).map(Self).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }
}

/// Model-fitting algorithm.
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct Predictor(jaw_core::Predictor);

#[pymethods]
impl Predictor {
    #[staticmethod]
    #[pyo3(signature = (lam, intercept = false))]
    fn ridge(lam: f64, intercept: bool) -> Self {
        Self(jaw_core::Predictor::Ridge(jaw_core::RidgeConfig {
            lambda: lam,
            intercept,
        }))
    }

    #[staticmethod]
    #[pyo3(signature = (hidden_units = 25, l2_lambda = 1.0, epochs = 2000, batch_size = 50, learning_rate = 1e-4))]
    fn mlp(hidden_units: usize, l2_lambda: f64, epochs: usize, batch_size: usize, learning_rate: f64) -> Self {
        Self(jaw_core::Predictor::Mlp(jaw_core::MlpConfig {
            hidden_units,
            l2_lambda,
            epochs,
            batch_size,
            learning_rate,
            seed: 0,
        }))
    }

    #[staticmethod]
    fn constant_mean() -> Self {
        Self(jaw_core::Predictor::ConstantMean)
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.0.name()
    }
}

#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PredictionInterval(empdist::PredictionInterval);

#[pymethods]
impl PredictionInterval {
    #[getter]
    fn lower(&self) -> f64 {
        self.0.lower.to_f64()
    }

    #[getter]
    fn upper(&self) -> f64 {
        self.0.upper.to_f64()
    }

    fn width(&self) -> f64 {
        self.0.width().to_f64()
    }

    fn contains(&self, y: f64) -> bool {
        self.0.contains(y)
    }

    fn __repr__(&self) -> String {
        format!("PredictionInterval({}, {})", self.lower(), self.upper())
    }
}

#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct ErrorAssessment(audit::ErrorAssessment);

#[pymethods]
impl ErrorAssessment {
    /// `None` when no level fits inside the tolerance.
    #[getter]
    fn alpha_e(&self) -> Option<f64> {
        self.0.alpha_e.map(|a| a.value)
    }

    #[getter]
    fn attained(&self) -> bool {
        self.0.alpha_e.is_some_and(|a| a.attained)
    }

    #[getter]
    fn p_no_error(&self) -> f64 {
        self.0.p_no_error
    }

    #[getter]
    fn guaranteed_lower_bound(&self) -> f64 {
        self.0.guaranteed_lower_bound
    }
}

/// Full model plus leave-one-out models, exact or influence-approximated.
#[pyclass(frozen, skip_from_py_object)]
struct LooModels(CoreLoo);

impl LooModels {
    fn artifacts(&self, x: Vec<f64>) -> PyResult<infer::LooArtifacts> {
        self.0.artifacts(&x).map_err(err)
    }
}

#[pymethods]
impl LooModels {
    /// `n + 1` exact refits.
    #[staticmethod]
    #[pyo3(signature = (predictor, data, seed = 0))]
    fn fit(py: Python<'_>, predictor: &Predictor, data: &Dataset, seed: u64) -> PyResult<Self> {
        py.detach(|| CoreLoo::fit(&predictor.0, &data.0, seed)).map(Self).map_err(err)
    }

    /// Order-`order` influence-function approximations (no refits).
    #[staticmethod]
    #[pyo3(signature = (predictor, data, order, seed = 0))]
    fn approximate(
        py: Python<'_>,
        predictor: &Predictor,
        data: &Dataset,
        order: usize,
        seed: u64,
    ) -> PyResult<Self> {
        py.detach(|| approx_loo_models(&predictor.0, &data.0, order, seed))
            .map(Self)
            .map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn loo_residuals(&self) -> Vec<f64> {
        self.0.loo_residuals.clone()
    }

    /// JAW on exact models, JAWA on approximated ones.
    fn jaw_interval(
        &self,
        x: Vec<f64>,
        alpha: f64,
        train_weights: Vec<f64>,
        test_weight: f64,
    ) -> PyResult<PredictionInterval> {
        let weights = shift::normalize(&train_weights, test_weight).map_err(err)?;
        infer::jaw_interval(&self.artifacts(x)?, &MethodRequest { alpha, weights })
            .map(PredictionInterval)
            .map_err(err)
    }

    fn jackknife_plus_interval(&self, x: Vec<f64>, alpha: f64) -> PyResult<PredictionInterval> {
        infer::jackknife_plus_interval(&self.artifacts(x)?, alpha)
            .map(PredictionInterval)
            .map_err(err)
    }

    fn jackknife_interval(&self, x: Vec<f64>, alpha: f64) -> PyResult<PredictionInterval> {
        infer::jackknife_interval(&self.artifacts(x)?, alpha)
            .map(PredictionInterval)
            .map_err(err)
    }

    /// Assessment of the no-error set `|y - μ̂(x)| ≤ tau`.
    fn jaw_error_assessment(
        &self,
        x: Vec<f64>,
        tau: f64,
        train_weights: Vec<f64>,
        test_weight: f64,
    ) -> PyResult<ErrorAssessment> {
        let weights = shift::normalize(&train_weights, test_weight).map_err(err)?;
        let crit = ErrorCriteria::absolute(tau).map_err(err)?;
        audit::jaw_error_assessment(&self.artifacts(x)?, &weights, &crit)
            .map(ErrorAssessment)
            .map_err(err)
    }
}

fn atoms(values: Vec<f64>, masses: Vec<f64>, neg_inf: f64, pos_inf: f64) -> PyResult<empdist::WeightedAtoms> {
    empdist::WeightedAtoms::from_parts(&values, &masses, neg_inf, pos_inf).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (values, masses, beta, pos_inf_mass = 0.0))]
fn quantile_plus(values: Vec<f64>, masses: Vec<f64>, beta: f64, pos_inf_mass: f64) -> PyResult<f64> {
    let d = atoms(values, masses, 0.0, pos_inf_mass)?;
    empdist::quantile_plus(&d, beta).map(|v| v.to_f64()).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (values, masses, beta, neg_inf_mass = 0.0))]
fn quantile_minus(values: Vec<f64>, masses: Vec<f64>, beta: f64, neg_inf_mass: f64) -> PyResult<f64> {
    let d = atoms(values, masses, neg_inf_mass, 0.0)?;
    empdist::quantile_minus(&d, beta).map(|v| v.to_f64()).map_err(err)
}

/// `(normalized train weights, normalized test weight)`.
#[pyfunction]
fn normalize_weights(train: Vec<f64>, test: f64) -> PyResult<(Vec<f64>, f64)> {
    shift::normalize(&train, test).map(|w| (w.train, w.test)).map_err(err)
}

#[pyfunction]
fn effective_sample_size(weights: Vec<f64>) -> PyResult<f64> {
    shift::effective_sample_size(&weights).map_err(err)
}

/// `(αE, attained)` or `None`; lower atoms carry `p_test` at `-inf`, upper
/// atoms at `+inf`.
#[pyfunction]
fn alpha_e(
    lower_values: Vec<f64>,
    upper_values: Vec<f64>,
    masses: Vec<f64>,
    test_mass: f64,
    tau_minus: f64,
    tau_plus: f64,
) -> PyResult<Option<(f64, bool)>> {
    let lo = atoms(lower_values, masses.clone(), test_mass, 0.0)?;
    let hi = atoms(upper_values, masses, 0.0, test_mass)?;
    Ok(audit::alpha_e(&lo, &hi, ext(tau_minus)?, ext(tau_plus)?)
        .map_err(err)?
        .map(|a| (a.value, a.attained)))
}

#[pyfunction]
fn auroc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    metrics::auroc(&scores, &labels).map_err(err)
}

#[pyfunction]
fn coverage(intervals: Vec<PyRef<'_, PredictionInterval>>, labels: Vec<f64>) -> PyResult<f64> {
    let ivs: Vec<_> = intervals.iter().map(|i| i.0).collect();
    let r = metrics::ReplicateResult::from_intervals(&ivs, &labels).map_err(err)?;
    metrics::coverage(&r).map_err(err)
}

/// Runs a `key=value` experiment config and returns the result CSV.
#[pyfunction]
fn run_experiment(py: Python<'_>, config: &str) -> PyResult<String> {
    let cfg = RawConfig::parse(config)
        .and_then(|r| ExperimentConfig::from_raw(&r))
        .map_err(err)?;
    let out = py.detach(|| run(&cfg)).map_err(err)?;
    if let Some(f) = out.failures.first() {
        return Err(PyValueError::new_err(f.to_string()));
    }
    out.to_csv_string().map_err(err)
}

#[pymodule]
fn jaw(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Predictor>()?;
    m.add_class::<PredictionInterval>()?;
    m.add_class::<ErrorAssessment>()?;
    m.add_class::<LooModels>()?;
    m.add_function(wrap_pyfunction!(quantile_plus, m)?)?;
    m.add_function(wrap_pyfunction!(quantile_minus, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_weights, m)?)?;
    m.add_function(wrap_pyfunction!(effective_sample_size, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_e, m)?)?;
    m.add_function(wrap_pyfunction!(auroc, m)?)?;
    m.add_function(wrap_pyfunction!(coverage, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
