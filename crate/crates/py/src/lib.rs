//! Python bindings: the main types and operations of the engine, driven
//! in-process. Model and disorder descriptions cross the boundary as the
//! same JSON used by the CLI config; results come back as native values or
//! JSON strings for the larger reports.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use animalia_core::animal_model::{ModelInstance, SizeFunction};
use animalia_core::clan::{self, ClanLimits};
use animalia_core::connectivity::{self, SpaceTimePoint};
use animalia_core::environment::{self, DisorderSpec};
use animalia_core::lattice::{Region, Site};
use animalia_core::models::ModelSpec;
use animalia_core::multiscale;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A model enumerated on a finite window.
#[pyclass(frozen)]
struct Model {
    inner: Arc<ModelInstance>,
}

#[pymethods]
impl Model {
    /// Build from a model-spec JSON object (same schema as the CLI config's
    /// `model` field) on the window `[lo, hi]`.
    #[staticmethod]
    fn from_json(spec_json: &str, lo: Vec<i32>, hi: Vec<i32>) -> PyResult<Self> {
        let spec: ModelSpec = serde_json::from_str(spec_json).map_err(err)?;
        let region = Region::new(&lo, &hi).map_err(err)?;
        Ok(Model { inner: Arc::new(spec.instantiate(region).map_err(err)?) })
    }

    /// Single-site self-exclusion model.
    #[staticmethod]
    fn single_site(d: usize, lo: Vec<i32>, hi: Vec<i32>) -> PyResult<Self> {
        let region = Region::new(&lo, &hi).map_err(err)?;
        let spec = animalia_core::models::single_site_model(d);
        Ok(Model { inner: Arc::new(spec.instantiate(region).map_err(err)?) })
    }

    fn n_animals(&self) -> usize {
        self.inner.n_animals()
    }

    fn d(&self) -> usize {
        self.inner.d()
    }

    /// Animal ids containing the site.
    fn animals_containing(&self, x: Vec<i32>) -> Vec<u32> {
        self.inner.enumerate_containing(Site::new(&x)).to_vec()
    }

    fn support(&self, id: u32) -> PyResult<Vec<Vec<i32>>> {
        if id as usize >= self.inner.n_animals() {
            return Err(PyValueError::new_err(format!("no animal {id}")));
        }
        let d = self.inner.d();
        Ok(self
            .inner
            .support(id)
            .iter()
            .map(|s| s.coords(d).to_vec())
            .collect())
    }

    fn incompatible(&self, a: u32, b: u32) -> PyResult<bool> {
        let aa = self.inner.animal(a).map_err(err)?;
        let bb = self.inner.animal(b).map_err(err)?;
        self.inner.incompatible(aa, bb).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(d={}, animals={}, ell1={}, ell2={})",
            self.inner.d(),
            self.inner.n_animals(),
            self.inner.geometry().ell1,
            self.inner.geometry().ell2
        )
    }
}

/// One quenched rate realization over a model window.
#[pyclass(frozen)]
struct Environment {
    inner: environment::Environment,
}

#[pymethods]
impl Environment {
    /// Sample from a disorder-spec JSON object (same schema as the CLI
    /// config's `disorder` field).
    #[staticmethod]
    fn sample(model: &Model, disorder_json: &str, seed: u64) -> PyResult<Self> {
        let spec: DisorderSpec = serde_json::from_str(disorder_json).map_err(err)?;
        let env = environment::sample_environment(&model.inner, &spec, seed).map_err(err)?;
        Ok(Environment { inner: env })
    }

    /// Deterministic rate `w` for every animal.
    #[staticmethod]
    fn homogeneous(model: &Model, w: f64, seed: u64) -> PyResult<Self> {
        let env = environment::sample_environment(
            &model.inner,
            &DisorderSpec::homogeneous(w),
            seed,
        )
        .map_err(err)?;
        Ok(Environment { inner: env })
    }

    fn rate(&self, id: u32) -> PyResult<f64> {
        if id as usize >= self.inner.model().n_animals() {
            return Err(PyValueError::new_err(format!("no animal {id}")));
        }
        Ok(self.inner.rate(id))
    }

    /// Window diagnostics (upsilon, psi, xi) with the support-size weights.
    fn diagnostics(&self) -> PyResult<(f64, f64, f64)> {
        let r = *self.inner.region();
        Ok((
            environment::upsilon(&self.inner, &r).map_err(err)?,
            environment::psi(&self.inner, SizeFunction::SupportSize, &r).map_err(err)?,
            environment::xi(&self.inner, &r).map_err(err)?,
        ))
    }

    /// Versioned JSON snapshot for replay.
    fn snapshot_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.snapshot()).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Environment(seed={}, animals={}, total_rate={:.6})",
            self.inner.seed(),
            self.inner.model().n_animals(),
            self.inner.total_rate()
        )
    }
}

/// Sparse configuration plus the run status and boundary-clearance flag.
type SampleResult = (String, Vec<(u32, u32)>, bool);

/// Exact draw from the invariant measure at time zero.
/// Returns (status, [(animal_id, multiplicity)], boundary_clear).
#[pyfunction]
#[pyo3(signature = (env, seed, max_cylinders = 1_000_000))]
fn perfect_sample(env: &Environment, seed: u64, max_cylinders: usize) -> PyResult<SampleResult> {
    let region = *env.inner.region();
    let mut limits = ClanLimits::default_for(&region);
    limits.max_cylinders = max_cylinders;
    let s = clan::perfect_sample(&env.inner, &region, limits, seed)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((format!("{:?}", s.status), s.config.to_sparse(), s.boundary_clear))
}

/// Explore the ancestor clan of the space-time point (x, t); returns a dict
/// with the status and the clan statistics.
#[pyfunction]
fn clan_of_point<'py>(
    py: Python<'py>,
    env: &Environment,
    x: Vec<i32>,
    t: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let limits = ClanLimits::default_for(env.inner.region());
    let c = clan::clan_of_point(&env.inner, Site::new(&x), t, limits, seed);
    let out = PyDict::new(py);
    out.set_item("status", format!("{:?}", c.status))?;
    out.set_item("tl", c.stats.tl)?;
    out.set_item("sd", c.stats.sd)?;
    out.set_item("ss", c.stats.ss)?;
    out.set_item("n_cylinders", c.stats.n_cylinders)?;
    out.set_item("n_generations", c.stats.n_generations)?;
    Ok(out)
}

/// Monte Carlo connectivity estimate between (x, t_x) and (y, t_y);
/// returns (estimate, ci_low, ci_high).
#[pyfunction]
#[pyo3(signature = (env, x, t_x, y, t_y, replicas, seed, workers = 1, pad = 10.0))]
#[allow(clippy::too_many_arguments)]
fn estimate_g(
    env: &Environment,
    x: Vec<i32>,
    t_x: f64,
    y: Vec<i32>,
    t_y: f64,
    replicas: u32,
    seed: u64,
    workers: usize,
    pad: f64,
) -> PyResult<(f64, f64, f64)> {
    let e = connectivity::estimate_g(
        &env.inner,
        SpaceTimePoint { x: Site::new(&x), t: t_x },
        SpaceTimePoint { x: Site::new(&y), t: t_y },
        None,
        replicas,
        seed,
        workers,
        pad,
    )
    .map_err(err)?;
    let (lo, hi) = e.ci(1.96);
    Ok((e.p_hat(), lo, hi))
}

/// The strip blocking probability K_Δ(w).
#[pyfunction]
fn k_delta(w: f64, delta: f64) -> PyResult<f64> {
    if w < 0.0 || delta <= 0.0 {
        return Err(PyValueError::new_err("need w ≥ 0 and delta > 0"));
    }
    Ok(multiscale::k_delta(w, delta))
}

/// Admissible-exponent threshold 2d²(1 + √(1+1/d) + 1/(2d)).
#[pyfunction]
fn a_threshold(d: usize) -> f64 {
    environment::a_threshold(d)
}

/// Solve the multiscale parameter chain; returns the tuple as a dict.
/// Raises ValueError with the first violated inequality when infeasible.
#[pyfunction]
#[pyo3(signature = (d, a = None))]
fn feasible_parameters<'py>(py: Python<'py>, d: usize, a: Option<f64>) -> PyResult<Bound<'py, PyDict>> {
    match multiscale::feasible_parameters(d, a) {
        multiscale::Feasibility::Feasible(p) => {
            let out = PyDict::new(py);
            out.set_item("d", p.d)?;
            out.set_item("alpha", p.alpha)?;
            out.set_item("a", p.a)?;
            out.set_item("nu", p.nu)?;
            out.set_item("p", p.p)?;
            out.set_item("kappa", p.kappa)?;
            out.set_item("b", p.b)?;
            out.set_item("eta", p.eta)?;
            out.set_item("tau", p.tau)?;
            out.set_item("theta", p.theta)?;
            out.set_item("theta0", p.theta0)?;
            out.set_item("m0", p.m0)?;
            out.set_item("m_inf", p.m_inf)?;
            out.set_item("q", p.q)?;
            out.set_item("q0", p.q0)?;
            out.set_item("r_balls", p.r_balls)?;
            out.set_item("delta", p.delta)?;
            Ok(out)
        }
        multiscale::Feasibility::Infeasible { first_violation } => {
            Err(PyValueError::new_err(first_violation))
        }
    }
}

/// Disorder hypothesis report as a JSON string.
#[pyfunction]
#[pyo3(signature = (env, epsilon, replicas, seed, workers = 1))]
fn check_hypotheses_json(
    env: &Environment,
    epsilon: f64,
    replicas: u32,
    seed: u64,
    workers: usize,
) -> PyResult<String> {
    let report = environment::check_hypotheses(
        env.inner.model(),
        env.inner.spec(),
        SizeFunction::SupportSize,
        epsilon,
        None,
        replicas,
        seed,
        workers,
    )
    .map_err(err)?;
    serde_json::to_string(&report).map_err(err)
}

#[pymodule]
fn animalia(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Model>()?;
    m.add_class::<Environment>()?;
    m.add_function(wrap_pyfunction!(perfect_sample, m)?)?;
    m.add_function(wrap_pyfunction!(clan_of_point, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_g, m)?)?;
    m.add_function(wrap_pyfunction!(k_delta, m)?)?;
    m.add_function(wrap_pyfunction!(a_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(feasible_parameters, m)?)?;
    m.add_function(wrap_pyfunction!(check_hypotheses_json, m)?)?;
    Ok(())
}
