//! Python bindings for `eyf-core`.
//!
//! Parameters, models and empirical curves are wrapped as classes; reports
//! (fits, merges, analysis) come back as plain dicts.

use eyf_core::analysis::{self, YearEntry};
use eyf_core::empirical::{self, IncomeSample};
use eyf_core::fitting::{self, FitConfig, Weighting};
use eyf_core::synth::{self, SynthSpec};
use eyf_core::{EyfModel, EyfParams, YearSeries};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

fn to_py_err(e: eyf_core::Error) -> PyErr {
    use eyf_core::Error::*;
    match e {
        Io { .. } => PyOSError::new_err(e.to_string()),
        InvalidParams(_) | Domain(_) | Data(_) | Parse { .. } | Json(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Round-trips a serializable value through JSON into Python objects.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

pub fn parse_weighting(name: &str) -> Option<Weighting> {
    match name {
        "inverse-variance" => Some(Weighting::InverseVariance),
        "uniform" => Some(Weighting::Uniform),
        _ => None,
    }
}

/// Distribution parameters. `T1` defaults to `m1`.
#[pyclass(name = "Params", module = "eyf", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Params(pub EyfParams);

#[pymethods]
impl Params {
    #[new]
    #[allow(non_snake_case)]
    #[pyo3(signature = (m0, m1, T, alpha, alpha1, T1=None, currency="USD".to_string()))]
    fn py_new(m0: f64, m1: f64, T: f64, alpha: f64, alpha1: f64, T1: Option<f64>, currency: String) -> PyResult<Self> {
        let p = EyfParams::new(m0, m1, T, T1.unwrap_or(m1), alpha, alpha1).with_currency(currency);
        p.validate().map_err(to_py_err)?;
        Ok(Self(p))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let p: EyfParams = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        p.validate().map_err(to_py_err)?;
        Ok(Self(p))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0)
    }

    fn scaled(&self, factor: f64) -> PyResult<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(PyValueError::new_err("scale factor must be positive"));
        }
        Ok(Self(self.0.scaled(factor)))
    }

    #[getter]
    fn m0(&self) -> f64 {
        self.0.m0
    }
    #[getter]
    fn m1(&self) -> f64 {
        self.0.m1
    }
    #[getter(T)]
    fn t(&self) -> f64 {
        self.0.t
    }
    #[getter(T1)]
    fn t1(&self) -> f64 {
        self.0.t1
    }
    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha
    }
    #[getter]
    fn alpha1(&self) -> f64 {
        self.0.alpha1
    }
    #[getter]
    fn currency(&self) -> String {
        self.0.currency.clone()
    }

    fn __eq__(&self, other: PyRef<'_, Params>) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        let p = &self.0;
        format!(
            "Params(m0={}, m1={}, T={}, alpha={}, alpha1={}, T1={}, currency={:?})",
            p.m0, p.m1, p.t, p.alpha, p.alpha1, p.t1, p.currency
        )
    }
}

/// A normalized distribution.
#[pyclass(name = "Model", module = "eyf", frozen)]
pub struct Model(EyfModel);

#[pymethods]
impl Model {
    #[new]
    fn py_new(py: Python<'_>, params: PyRef<'_, Params>) -> PyResult<Self> {
        let p = params.0.clone();
        py.detach(|| EyfModel::new(p)).map(Self).map_err(to_py_err)
    }

    #[getter]
    fn params(&self) -> Params {
        Params(self.0.params().clone())
    }
    #[getter]
    fn c_low(&self) -> f64 {
        self.0.c_low()
    }
    #[getter]
    fn c_high(&self) -> f64 {
        self.0.c_high()
    }
    #[getter]
    fn mass_error(&self) -> f64 {
        self.0.mass_error()
    }

    fn pdf(&self, m: f64) -> PyResult<f64> {
        self.0.pdf(m).map_err(to_py_err)
    }

    fn ccdf(&self, m: f64) -> PyResult<f64> {
        self.0.ccdf(m).map_err(to_py_err)
    }

    fn quantile(&self, p: f64) -> PyResult<f64> {
        self.0.quantile(p).map_err(to_py_err)
    }

    #[pyo3(signature = (n, seed=0))]
    fn sample(&self, py: Python<'_>, n: usize, seed: u64) -> PyResult<Vec<f64>> {
        py.detach(|| self.0.sample(n, seed))
            .map(|s| s.values().to_vec())
            .map_err(to_py_err)
    }

    fn class_metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let m = analysis::class_metrics(&self.0).map_err(to_py_err)?;
        to_py(py, &m)
    }
}

/// Empirical survival curve: incomes ascending, probabilities descending.
#[pyclass(name = "EmpiricalCcdf", module = "eyf", frozen)]
pub struct Ccdf(empirical::EmpiricalCcdf);

#[pymethods]
impl Ccdf {
    #[getter]
    fn incomes(&self) -> Vec<f64> {
        self.0.incomes().to_vec()
    }
    #[getter]
    fn probs(&self) -> Vec<f64> {
        self.0.probs().to_vec()
    }
    #[getter]
    fn counts(&self) -> Vec<f64> {
        self.0.counts().to_vec()
    }
    #[getter]
    fn n_effective(&self) -> f64 {
        self.0.n_effective()
    }

    fn downsample(&self, points_per_decade: usize) -> PyResult<Self> {
        empirical::log_downsample(&self.0, points_per_decade)
            .map(Self)
            .map_err(to_py_err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

fn sample_of(values: Vec<f64>, weights: Option<Vec<f64>>, source: &str) -> PyResult<IncomeSample> {
    IncomeSample::new(values, weights, source).map_err(to_py_err)
}

/// Weibull rank CCDF of a set of incomes.
#[pyfunction]
#[pyo3(signature = (incomes, weights=None))]
fn rank_ccdf(incomes: Vec<f64>, weights: Option<Vec<f64>>) -> PyResult<Ccdf> {
    Ok(Ccdf(empirical::rank_ccdf(&sample_of(incomes, weights, "python")?)))
}

/// Survey curve with the top-K of a population merged on top.
/// Returns `(ccdf, merge_report)`.
#[pyfunction]
#[pyo3(signature = (survey, population, rich_list=None))]
fn augment_tail<'py>(
    py: Python<'py>,
    survey: Vec<f64>,
    population: f64,
    rich_list: Option<Vec<f64>>,
) -> PyResult<(Ccdf, Bound<'py, PyAny>)> {
    let survey = sample_of(survey, None, "survey")?;
    let rich = rich_list.map(|r| sample_of(r, None, "rich list")).transpose()?;
    let (ccdf, report) = empirical::augment_tail(&survey, rich.as_ref(), population).map_err(to_py_err)?;
    Ok((Ccdf(ccdf), to_py(py, &report)?))
}

/// Fits the model to an empirical curve. Returns a dict whose `params`
/// entry is a `Params`.
#[pyfunction]
#[pyo3(signature = (
    ccdf,
    constrain_t1=true,
    points_per_decade=20,
    weighting="inverse-variance",
    seed=0,
    starts=5,
    max_iterations=2000,
    currency="USD",
))]
#[allow(clippy::too_many_arguments)]
fn fit<'py>(
    py: Python<'py>,
    ccdf: PyRef<'_, Ccdf>,
    constrain_t1: bool,
    points_per_decade: usize,
    weighting: &str,
    seed: u64,
    starts: usize,
    max_iterations: usize,
    currency: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let weighting =
        parse_weighting(weighting).ok_or_else(|| PyValueError::new_err(format!("unknown weighting `{weighting}`")))?;
    let config = FitConfig {
        constrain_t1_eq_m1: constrain_t1,
        points_per_decade,
        weighting,
        seed,
        starts,
        max_iterations,
        ..Default::default()
    };
    let curve = &ccdf.0;
    let result = py
        .detach(|| fitting::fit_with_currency(curve, &config, currency))
        .map_err(to_py_err)?;
    let out = to_py(py, &result)?;
    out.set_item("params", Params(result.params))?;
    Ok(out)
}

/// Survey of `n` draws plus the exact top-`rich_k` of a population.
/// Returns `(survey, rich_list)`; `rich_list` is None when `rich_k` is 0.
#[pyfunction]
#[pyo3(signature = (params, n, population, rich_k=0, seed=0))]
fn synthesize(
    py: Python<'_>,
    params: PyRef<'_, Params>,
    n: usize,
    population: u64,
    rich_k: usize,
    seed: u64,
) -> PyResult<(Vec<f64>, Option<Vec<f64>>)> {
    let p = params.0.clone();
    let spec = SynthSpec {
        n,
        population,
        rich_k,
        seed,
    };
    let data = py
        .detach(|| EyfModel::new(p).and_then(|m| synth::synthesize(&m, &spec)))
        .map_err(to_py_err)?;
    Ok((
        data.survey.values().to_vec(),
        data.rich_list.map(|r| r.values().to_vec()),
    ))
}

#[pyfunction]
#[pyo3(signature = (params, tolerance=analysis::DEFAULT_CRISIS_TOLERANCE))]
fn crisis_indicator<'py>(py: Python<'py>, params: PyRef<'_, Params>, tolerance: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &analysis::crisis_indicator(&params.0, tolerance))
}

fn series_of(entries: Vec<(i32, String, PyRef<'_, Params>)>) -> PyResult<Vec<YearSeries>> {
    let entries = entries
        .into_iter()
        .map(|(year, region, p)| YearEntry {
            year,
            region,
            params: p.0.clone(),
        })
        .collect();
    YearSeries::split_by_region(entries).map_err(to_py_err)
}

/// Years whose `m0` rose by at least `threshold` over the previous year.
/// `entries` is a list of `(year, region, Params)` for a single region.
#[pyfunction]
#[pyo3(signature = (entries, threshold=analysis::DEFAULT_WARNING_THRESHOLD))]
fn early_warning<'py>(
    py: Python<'py>,
    entries: Vec<(i32, String, PyRef<'_, Params>)>,
    threshold: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let series = series_of(entries)?;
    if series.len() != 1 {
        return Err(PyValueError::new_err("early_warning takes a single region"));
    }
    to_py(py, &analysis::early_warning(&series[0], threshold))
}

/// Full report over `(year, region, Params)` entries of one or two regions.
#[pyfunction]
#[pyo3(signature = (
    entries,
    warning_threshold=analysis::DEFAULT_WARNING_THRESHOLD,
    crisis_tolerance=analysis::DEFAULT_CRISIS_TOLERANCE,
))]
fn analyze<'py>(
    py: Python<'py>,
    entries: Vec<(i32, String, PyRef<'_, Params>)>,
    warning_threshold: f64,
    crisis_tolerance: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let series = series_of(entries)?;
    let report = py
        .detach(|| analysis::analyze(&series, warning_threshold, crisis_tolerance))
        .map_err(to_py_err)?;
    let out = to_py(py, &report)?.cast_into::<PyDict>()?;
    out.set_item("table", report.to_table())?;
    Ok(out)
}

#[pymodule]
pub fn eyf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Params>()?;
    m.add_class::<Model>()?;
    m.add_class::<Ccdf>()?;
    m.add_function(wrap_pyfunction!(rank_ccdf, m)?)?;
    m.add_function(wrap_pyfunction!(augment_tail, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(crisis_indicator, m)?)?;
    m.add_function(wrap_pyfunction!(early_warning, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    Ok(())
}
