//! Python bindings for `fbmvar-core`.

use fbmvar_core::limitlaws::{self, cache_dir, reference_sample_in, ReferenceSpec};
use fbmvar_core::series::{self, SeriesConfig};
use fbmvar_core::{fgn, hermite, variations, Error, HermiteOrder, Hurst, PathSpec, SeriesKind};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter { .. } | Error::Regime { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_json()),
    }
}

fn order(q: u32) -> PyResult<HermiteOrder> {
    HermiteOrder::new(q).map_err(py_err)
}

fn hurst(h: f64) -> PyResult<Hurst> {
    Hurst::new(h).map_err(py_err)
}

fn kind(name: &str) -> PyResult<SeriesKind> {
    name.parse().map_err(py_err)
}

/// Probabilists' Hermite polynomial `H_q(x)`.
#[pyfunction]
fn hermite_eval(q: u32, x: f64) -> f64 {
    hermite::hermite_eval(q, x)
}

/// `E[X_0 X_k]` for unit-variance fractional Gaussian noise.
#[pyfunction]
fn fgn_autocovariance(h: f64, k: u64) -> PyResult<f64> {
    Ok(fgn::fgn_autocovariance(hurst(h)?, k))
}

/// `n` increments of unit-variance fractional Gaussian noise.
#[pyfunction]
fn sample_fgn(py: Python<'_>, h: f64, n: usize, seed: u64) -> PyResult<Vec<f64>> {
    let spec = PathSpec::new(n, hurst(h)?, seed).map_err(py_err)?;
    py.detach(|| fgn::sample_fgn(&spec))
        .map(|s| s.increments)
        .map_err(py_err)
}

/// `B_{k/n}` for `k = 0..=n`: the running sum of the same increments times `n^{-H}`.
#[pyfunction]
fn sample_fbm(py: Python<'_>, h: f64, n: usize, seed: u64) -> PyResult<Vec<f64>> {
    let spec = PathSpec::new(n, hurst(h)?, seed).map_err(py_err)?;
    py.detach(|| fgn::sample_fbm(&spec)).map_err(py_err)
}

/// `V_n = sum_k H_q(X_k)` of the given increments.
#[pyfunction]
fn compute_vn(q: u32, h: f64, increments: Vec<f64>) -> PyResult<f64> {
    let sample = fgn::FgnSample {
        hurst: hurst(h)?,
        increments,
    };
    Ok(variations::compute_vn(order(q)?, &sample).value)
}

/// Exact `E[V_n^2]`.
#[pyfunction]
fn exact_second_moment(q: u32, h: f64, n: u64) -> PyResult<f64> {
    variations::exact_second_moment(order(q)?, hurst(h)?, n).map_err(py_err)
}

/// `f1` or `g1` of a centred normal with standard deviation `c`.
#[pyfunction]
fn normal_series_exact(kind_name: &str, c: f64, epsilon: f64) -> PyResult<f64> {
    series::normal_series_exact(kind(kind_name)?, c, epsilon).map_err(py_err)
}

/// Berry-Esseen (CLT) or Kolmogorov (Hermite) rate exponent of `Z_n`.
#[pyfunction]
fn rate_exponent(q: u32, h: f64) -> PyResult<f64> {
    limitlaws::rate_exponent(order(q)?, hurst(h)?).map_err(py_err)
}

/// `P(|N(0,1)| > z)`.
#[pyfunction]
fn phi_normal(z: f64) -> f64 {
    limitlaws::phi_normal(z)
}

#[pyclass(name = "NormalizationConstants", frozen, get_all)]
struct PyNormalizationConstants {
    q: u32,
    hurst: f64,
    regime: String,
    c1: Option<f64>,
    c2: Option<f64>,
    err1: Option<f64>,
    err2: Option<f64>,
}

#[pymethods]
impl PyNormalizationConstants {
    fn __repr__(&self) -> String {
        format!(
            "NormalizationConstants(q={}, hurst={}, regime={}, c1={:?}, c2={:?})",
            self.q, self.hurst, self.regime, self.c1, self.c2
        )
    }
}

/// `c1` (CLT regime) or `c2` (Hermite regime) with a certified error.
#[pyfunction]
fn normalization_constants(q: u32, h: f64) -> PyResult<PyNormalizationConstants> {
    let c = variations::normalization_constants(order(q)?, hurst(h)?).map_err(py_err)?;
    Ok(PyNormalizationConstants {
        q,
        hurst: h,
        regime: c.regime.as_str().to_owned(),
        c1: c.c1,
        c2: c.c2,
        err1: c.err1,
        err2: c.err2,
    })
}

#[pyclass(name = "SeriesEstimate", frozen, get_all)]
struct PySeriesEstimate {
    kind: String,
    q: u32,
    hurst: f64,
    epsilon: f64,
    value: f64,
    mc_stderr: f64,
    n_trunc: u64,
    remainder_bound: f64,
    normalized_ratio: f64,
}

#[pymethods]
impl PySeriesEstimate {
    fn __repr__(&self) -> String {
        format!(
            "SeriesEstimate(kind={}, epsilon={}, value={}, mc_stderr={}, n_trunc={})",
            self.kind, self.epsilon, self.value, self.mc_stderr, self.n_trunc
        )
    }
}

/// Truncated Monte Carlo estimate of `f1`, `f2`, `g1` or `g2` at `epsilon`.
#[pyfunction]
#[pyo3(signature = (kind_name, q, h, epsilon, tol=0.02, budget=10_000_000, max_n=1 << 20, seed=0))]
#[allow(clippy::too_many_arguments)]
fn estimate_series(
    py: Python<'_>,
    kind_name: &str,
    q: u32,
    h: f64,
    epsilon: f64,
    tol: f64,
    budget: u64,
    max_n: u64,
    seed: u64,
) -> PyResult<PySeriesEstimate> {
    let (k, qo, ho) = (kind(kind_name)?, order(q)?, hurst(h)?);
    let config = SeriesConfig {
        tol,
        budget,
        max_n,
        seed,
        ..SeriesConfig::default()
    };
    let est = py
        .detach(|| series::estimate_series(k, qo, ho, epsilon, &config))
        .map_err(py_err)?;
    Ok(PySeriesEstimate {
        kind: k.as_str().to_owned(),
        q,
        hurst: h,
        epsilon,
        value: est.value,
        mc_stderr: est.mc_stderr,
        n_trunc: est.n_trunc,
        remainder_bound: est.remainder_bound,
        normalized_ratio: series::normalized_ratio(k, qo, ho, epsilon, est.value)
            .map_err(py_err)?,
    })
}

/// Predicted small-epsilon limit of the normalised series. `g2` loads (or
/// builds, which takes minutes) the cached Hermite-limit reference sample.
#[pyfunction]
fn predicted_limit(py: Python<'_>, kind_name: &str, q: u32, h: f64) -> PyResult<(f64, f64)> {
    let (k, qo, ho) = (kind(kind_name)?, order(q)?, hurst(h)?);
    py.detach(|| {
        let reference = match k {
            SeriesKind::G2 => Some(reference_sample_in(
                &cache_dir(),
                &ReferenceSpec {
                    q,
                    hurst: h,
                    ..ReferenceSpec::default()
                },
            )?),
            _ => None,
        };
        series::predicted_limit(k, qo, ho, reference.as_deref())
    })
    .map(|p| (p.value, p.stderr))
    .map_err(py_err)
}

#[pymodule]
fn fbmvar(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(hermite_eval, m)?)?;
    m.add_function(wrap_pyfunction!(fgn_autocovariance, m)?)?;
    m.add_function(wrap_pyfunction!(sample_fgn, m)?)?;
    m.add_function(wrap_pyfunction!(sample_fbm, m)?)?;
    m.add_function(wrap_pyfunction!(compute_vn, m)?)?;
    m.add_function(wrap_pyfunction!(exact_second_moment, m)?)?;
    m.add_function(wrap_pyfunction!(normal_series_exact, m)?)?;
    m.add_function(wrap_pyfunction!(rate_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(phi_normal, m)?)?;
    m.add_function(wrap_pyfunction!(normalization_constants, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_series, m)?)?;
    m.add_function(wrap_pyfunction!(predicted_limit, m)?)?;
    m.add_class::<PyNormalizationConstants>()?;
    m.add_class::<PySeriesEstimate>()?;
    Ok(())
}
