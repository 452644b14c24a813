//! Python bindings: scenarios, single runs, suites and the metric helpers.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use cdanse::anderson::{AndersonConfig, AndersonHistory, InnerProduct, Metric};
use cdanse::bench::{self, ReferenceCache, Scenario, ScenarioRun, SuiteOptions};
use cdanse::cda::NudgingMode;
use cdanse::metrics;
use cdanse::solvers::Method;

fn err(e: cdanse::Error) -> PyErr {
    match e {
        cdanse::Error::InvalidArgument(_) | cdanse::Error::Parse(_) | cdanse::Error::DimensionMismatch { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn cache(dir: Option<PathBuf>) -> ReferenceCache {
    match dir {
        Some(d) => ReferenceCache::with_dir(d),
        None => ReferenceCache::in_memory(),
    }
}

/// One solver scenario on the lid-driven cavity.
#[pyclass(name = "Scenario", module = "cdanse", skip_from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: Scenario,
}

#[pymethods]
impl PyScenario {
    #[new]
    #[pyo3(signature = (re, n=64, method="picard", cda="off", h=None, mu=0.0, aa_depth=None, aa_beta=1.0,
                        tol=1e-8, max_iters=200, lid_speed=1.0, name=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        re: f64,
        n: usize,
        method: &str,
        cda: &str,
        h: Option<f64>,
        mu: f64,
        aa_depth: Option<usize>,
        aa_beta: f64,
        tol: f64,
        max_iters: usize,
        lid_speed: f64,
        name: Option<String>,
    ) -> PyResult<Self> {
        let method: Method = method.parse().map_err(err)?;
        let mode: NudgingMode = cda.parse().map_err(err)?;
        let mut s = Scenario::new(name.unwrap_or_else(|| "python".into()), method, re, n);
        let n_h = match h {
            Some(h) if h > 0.0 && ((1.0 / h) - (1.0 / h).round()).abs() <= 1e-9 / h => Some((1.0 / h).round() as usize),
            Some(h) => return Err(PyValueError::new_err(format!("h = {h} is not 1/m for an integer m"))),
            None => None,
        };
        match (mode, n_h) {
            (NudgingMode::Off, _) => {}
            (NudgingMode::Direct, Some(m)) => s = s.direct(m),
            (NudgingMode::Penalty, Some(m)) => s = s.penalty(m, mu),
            (_, None) => return Err(PyValueError::new_err("CDA needs the observation spacing h")),
        }
        if let Some(d) = aa_depth {
            let aa = AndersonConfig {
                depth: d,
                beta: aa_beta,
                inner_product: InnerProduct::H1,
            };
            aa.validate().map_err(err)?;
            s.anderson = Some(aa);
        }
        s.tol = tol;
        s.max_iters = max_iters;
        s.lid_speed = lid_speed;
        s.validate().map_err(err)?;
        Ok(Self { inner: s })
    }

    #[staticmethod]
    fn from_metadata(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Scenario::from_metadata(text).map_err(err)?,
        })
    }

    fn metadata(&self) -> String {
        self.inner.metadata()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn re(&self) -> f64 {
        self.inner.re
    }

    /// Runs the scenario; references are cached in `cache_dir` when given.
    #[pyo3(signature = (cache_dir=None))]
    fn run(&self, py: Python<'_>, cache_dir: Option<PathBuf>) -> PyResult<Run> {
        let s = self.inner.clone();
        let run = py
            .detach(move || bench::run_scenario(&s, &cache(cache_dir), false))
            .map_err(err)?;
        Ok(Run { inner: run })
    }

    fn __repr__(&self) -> String {
        format!("Scenario({})", self.inner.metadata().trim().replace('\n', ", "))
    }
}

/// Result of `Scenario.run`.
#[pyclass(module = "cdanse")]
struct Run {
    inner: ScenarioRun,
}

#[pymethods]
impl Run {
    #[getter]
    fn status(&self) -> String {
        self.inner.trace.status.to_string()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.trace.iterations()
    }

    #[getter]
    fn updates(&self) -> Vec<f64> {
        self.inner.trace.updates()
    }

    #[getter]
    fn residuals(&self) -> Vec<f64> {
        self.inner.trace.residuals()
    }

    #[getter]
    fn errors_h1(&self) -> Option<Vec<f64>> {
        self.inner.trace.errors_h1()
    }

    #[getter]
    fn errors_star(&self) -> Option<Vec<f64>> {
        self.inner.trace.errors_star()
    }

    #[getter]
    fn gains(&self) -> Vec<f64> {
        self.inner.trace.gains()
    }

    /// Fitted linear rate, or None when the trace is too short.
    #[getter]
    fn rate(&self) -> Option<f64> {
        self.inner.rate.map(|f| f.rate)
    }

    #[getter]
    fn velocity(&self) -> Vec<f64> {
        self.inner.state.velocity.clone()
    }

    #[getter]
    fn pressure(&self) -> Vec<f64> {
        self.inner.state.pressure.clone()
    }

    fn trace_csv(&self) -> String {
        self.inner.trace.to_csv()
    }

    fn metadata(&self) -> String {
        self.inner.metadata()
    }

    fn __repr__(&self) -> String {
        format!("Run(status={}, iterations={})", self.inner.trace.status, self.inner.trace.iterations())
    }
}

/// Runs a benchmark suite; returns `(passed, summary)`.
#[pyfunction]
#[pyo3(signature = (name, n=64, re=None, out=None, jobs=1))]
fn suite(
    py: Python<'_>,
    name: &str,
    n: usize,
    re: Option<f64>,
    out: Option<PathBuf>,
    jobs: usize,
) -> PyResult<(bool, String)> {
    let refs = cache(out.as_ref().map(|o| o.join("references")));
    let opts = SuiteOptions { jobs };
    let name = name.to_string();
    let report = py
        .detach(|| match name.as_str() {
            "table1" => bench::suite_table1(n, re.unwrap_or(bench::TABLE1_RE), &refs, &opts),
            "musweep" => bench::suite_mu_sweep(
                re.unwrap_or(bench::TABLE1_RE),
                n,
                bench::MUSWEEP_COARSE,
                &bench::MUSWEEP_GRID,
                &refs,
                &opts,
            ),
            "enablement" => bench::suite_enablement(
                &re.map_or(bench::ENABLEMENT_RE.to_vec(), |r| vec![r]),
                n,
                &bench::ENABLEMENT_COARSE,
                &refs,
                &opts,
            ),
            "newtonbasin" => bench::suite_newton_basin(
                &re.map_or(bench::NEWTON_RE.to_vec(), |r| vec![r]),
                n,
                &bench::NEWTON_COARSE,
                &refs,
                &opts,
            ),
            "aa" => bench::suite_aa(re.unwrap_or(bench::AA_RE), n, &bench::AA_COARSE, 5, 1.0, &refs, &opts),
            other => Err(cdanse::Error::InvalidArgument(format!("unknown suite '{other}'"))),
        })
        .map_err(err)?;
    if let Some(o) = out {
        report.write_to(&o).map_err(err)?;
    }
    Ok((report.passed(), report.text()))
}

/// Log-linear rate fit of an error sequence: `(rate, goodness)`.
#[pyfunction]
fn fit_linear_rate(errors: Vec<f64>) -> PyResult<(f64, f64)> {
    let f = metrics::fit_linear_rate(&errors).map_err(err)?;
    Ok((f.rate, f.goodness))
}

/// Quadratic-convergence constant of an error sequence: `(constant, spread)`.
#[pyfunction]
fn quadratic_constant(errors: Vec<f64>) -> PyResult<(f64, f64)> {
    let q = metrics::quadratic_constant(&errors).map_err(err)?;
    Ok((q.constant, q.spread))
}

#[pyfunction]
fn h_scaling_exponent(rates: Vec<(f64, f64)>) -> PyResult<Vec<f64>> {
    metrics::h_scaling_exponent(&rates).map_err(err)
}

#[pyfunction]
fn mu_min(nu: f64, h: f64) -> f64 {
    cdanse::cda::mu_min(nu, h)
}

/// Anderson-accelerated fixed-point iteration `x <- g(x)` on plain vectors
/// with the Euclidean inner product. Returns `(x, iterations, gains)`.
#[pyfunction]
#[pyo3(signature = (g, x0, depth=5, beta=1.0, tol=1e-10, max_iters=100))]
fn anderson_fixed_point(
    g: Bound<'_, PyAny>,
    x0: Vec<f64>,
    depth: usize,
    beta: f64,
    tol: f64,
    max_iters: usize,
) -> PyResult<(Vec<f64>, usize, Vec<f64>)> {
    AndersonConfig {
        depth,
        beta,
        inner_product: InnerProduct::Euclidean,
    }
    .validate()
    .map_err(err)?;
    let mut hist = AndersonHistory::new(depth, Metric::Euclidean);
    let mut x = x0;
    let mut gains = Vec::new();
    for k in 1..=max_iters {
        let gx: Vec<f64> = g.call1((x.clone(),))?.extract()?;
        if gx.len() != x.len() {
            return Err(PyValueError::new_err("g changed the vector length"));
        }
        let step = cdanse::anderson::aa_update(&mut hist, &x, &gx, beta);
        if let Some(t) = step.gain {
            gains.push(t);
        }
        let diff = step
            .x_next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        x = step.x_next;
        if diff < tol {
            return Ok((x, k, gains));
        }
    }
    Ok((x, max_iters, gains))
}

#[pymodule]
#[pyo3(name = "cdanse")]
fn cdanse_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<Run>()?;
    m.add_function(wrap_pyfunction!(suite, m)?)?;
    m.add_function(wrap_pyfunction!(fit_linear_rate, m)?)?;
    m.add_function(wrap_pyfunction!(quadratic_constant, m)?)?;
    m.add_function(wrap_pyfunction!(h_scaling_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(mu_min, m)?)?;
    m.add_function(wrap_pyfunction!(anderson_fixed_point, m)?)?;
    Ok(())
}
