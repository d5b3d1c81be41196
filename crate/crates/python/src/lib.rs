//! Python bindings: chains, exact variance quantities, simulation, limit
//! references and the acceptance criteria.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use revclt_core::experiments::{self, Lab};
use revclt_core::limits::{self, HoldingLaw as CoreHoldingLaw, StableRef as CoreStableRef};
use revclt_core::rng::Purpose;
use revclt_core::simulate::{run_replicates, simulate_sn};
use revclt_core::{diagnostics, Analyzer as CoreAnalyzer, BuiltinChain, ChainSpec, Error, Kappa, Mode};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Parameter(_) | Error::Config(_) | Error::Validation(_) | Error::Horizon(_) | Error::Sample(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn parse_mode(mode: Option<&str>, n: u64) -> PyResult<Mode> {
    match mode {
        None => Ok(Mode::default_for(n)),
        Some(s) => s.parse().map_err(to_py),
    }
}

/// A validated built-in chain.
#[pyclass(frozen, module = "revclt")]
pub struct Chain {
    spec: ChainSpec,
}

#[pymethods]
impl Chain {
    #[staticmethod]
    fn example1() -> PyResult<Self> {
        Self::build(BuiltinChain::Example1)
    }

    #[staticmethod]
    fn stable(alpha: f64) -> PyResult<Self> {
        Self::build(BuiltinChain::StableExample { alpha })
    }

    #[staticmethod]
    fn constant_p(c: f64) -> PyResult<Self> {
        Self::build(BuiltinChain::ConstantP { c })
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(Self { spec: ChainSpec::from_json(s).map_err(to_py)? })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.spec.variant().name()
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.spec.theta()
    }

    fn p(&self, w: f64) -> f64 {
        self.spec.p(w)
    }

    fn g(&self, w: f64) -> f64 {
        self.spec.g(w)
    }

    fn pi_density(&self, w: f64) -> f64 {
        self.spec.pi_density(w)
    }

    fn nu_density(&self, w: f64) -> f64 {
        self.spec.nu_density(w)
    }

    fn to_json(&self) -> PyResult<String> {
        self.spec.to_json().map_err(to_py)
    }

    fn checksum(&self) -> String {
        self.spec.checksum()
    }

    fn __repr__(&self) -> String {
        format!("Chain({:?})", self.spec.variant())
    }
}

impl Chain {
    fn build(v: BuiltinChain) -> PyResult<Self> {
        Ok(Self { spec: revclt_core::build_chain(v).map_err(to_py)? })
    }
}

/// Exact autocovariances and everything derived from them.
#[pyclass(module = "revclt")]
pub struct Analyzer {
    inner: CoreAnalyzer,
}

#[pymethods]
impl Analyzer {
    #[new]
    fn new(chain: &Chain) -> Self {
        Self { inner: CoreAnalyzer::new(&chain.spec) }
    }

    fn autocovariance(&mut self, k: u64) -> PyResult<f64> {
        self.inner.autocovariance(k).map_err(to_py)
    }

    fn sigma_sq(&mut self, n: u64) -> PyResult<f64> {
        self.inner.sigma_sq(n).map_err(to_py)
    }

    fn ell(&mut self, n: u64) -> PyResult<f64> {
        self.inner.ell(n).map_err(to_py)
    }

    /// `κ`, or `None` when the series diverges.
    fn kappa(&mut self) -> PyResult<Option<f64>> {
        Ok(match self.inner.kappa().map_err(to_py)? {
            Kappa::Finite(v) => Some(v),
            Kappa::Divergent { .. } => None,
        })
    }

    fn d_norm_sq(&mut self, n: u64) -> PyResult<f64> {
        self.inner.d_norm_sq(n).map_err(to_py)
    }

    fn remark3_distance(&mut self, m: u64, n: u64) -> PyResult<f64> {
        self.inner.remark3_distance(m, n).map_err(to_py)
    }

    /// `σ_n²` of the functional `Q^j g`.
    fn sigma_shifted(&mut self, j: u64, n: u64) -> PyResult<f64> {
        self.inner.sigma_shifted(j, n).map_err(to_py)
    }
}

/// Law of the per-block sum for `|g| = 1` chains.
#[pyclass(frozen, module = "revclt")]
pub struct HoldingLaw {
    inner: CoreHoldingLaw,
}

#[pymethods]
impl HoldingLaw {
    #[new]
    fn new(py: Python<'_>, chain: &Chain) -> PyResult<Self> {
        let spec = chain.spec.clone();
        Ok(Self { inner: py.detach(move || CoreHoldingLaw::new(&spec)).map_err(to_py)? })
    }

    /// `P(|Y| ≥ k)`.
    fn survival(&self, k: u64) -> PyResult<f64> {
        self.inner.survival(k).map_err(to_py)
    }

    /// Truncated second moment `H(y)`.
    fn h(&self, y: f64) -> f64 {
        self.inner.h_interp(y)
    }

    fn gamma_m(&self, m: u64) -> PyResult<f64> {
        self.inner.gamma_m(m).map_err(to_py)
    }
}

/// Symmetric α-stable law with characteristic function `exp(-c|t|^α)`.
#[pyclass(frozen, module = "revclt")]
pub struct StableRef {
    inner: CoreStableRef,
}

#[pymethods]
impl StableRef {
    #[new]
    #[pyo3(signature = (alpha, c=None))]
    fn new(alpha: f64, c: Option<f64>) -> PyResult<Self> {
        let inner = match c {
            Some(c) => CoreStableRef::new(alpha, c),
            None => CoreStableRef::for_chain(alpha),
        };
        Ok(Self { inner: inner.map_err(to_py)? })
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn c(&self) -> f64 {
        self.inner.c
    }

    fn cdf(&self, x: f64) -> PyResult<f64> {
        self.inner.cdf(x).map_err(to_py)
    }
}

/// `reps` seeded replicates of `S_n`.
#[pyfunction]
#[pyo3(signature = (chain, n, reps, seed=42, mode=None))]
fn simulate(py: Python<'_>, chain: &Chain, n: u64, reps: u64, seed: u64, mode: Option<&str>) -> PyResult<Vec<f64>> {
    let mode = parse_mode(mode, n)?;
    let spec = chain.spec.clone();
    let paths = py
        .detach(move || run_replicates(reps, seed, Purpose::Path, 0, |_, rng| simulate_sn(&spec, n, mode, rng)))
        .map_err(to_py)?;
    Ok(paths.iter().map(|p| p.s_n).collect())
}

#[pyfunction]
fn normal_cdf(mean: f64, var: f64, x: f64) -> PyResult<f64> {
    limits::normal_cdf(mean, var, x).map_err(to_py)
}

/// KS distance of `sample` to `N(0, var)`.
#[pyfunction]
fn ks_normal(sample: Vec<f64>, var: f64) -> PyResult<f64> {
    limits::normal_cdf(0.0, var, 0.0).map_err(to_py)?;
    diagnostics::ks_one_sample(&sample, |x| limits::normal_cdf(0.0, var, x).unwrap_or(f64::NAN)).map_err(to_py)
}

/// Evaluate one acceptance criterion; returns a dict with its checks.
#[pyfunction]
#[pyo3(signature = (id, seed=42))]
fn evaluate_criterion<'py>(py: Python<'py>, id: u32, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let r = py.detach(move || experiments::evaluate(id, &Lab::new(seed))).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("id", r.id)?;
    d.set_item("title", &r.title)?;
    d.set_item("pass", r.pass)?;
    let checks: Vec<(String, f64, String, bool)> =
        r.checks.into_iter().map(|c| (c.name, c.value, c.window, c.pass)).collect();
    d.set_item("checks", checks)?;
    Ok(d)
}

/// Populate a module object; used by the extension entry point and by tests.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Chain>()?;
    m.add_class::<Analyzer>()?;
    m.add_class::<HoldingLaw>()?;
    m.add_class::<StableRef>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(normal_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(ks_normal, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_criterion, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[pymodule]
#[pyo3(name = "revclt")]
fn revclt_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
