//! Python module `blockmax`: GEV distribution, block maxima, MCMC fits,
//! return-level reports, maximum likelihood and panel simulation.

use std::fs::File;
use std::io::BufReader;

use bm::blocks::{read_block_csv, write_block_csv, Observation};
use bm::mcmc::{diagnostics, run_chain, summarize};
use bm::report::{build_report, coverage_check, return_level_posterior};
use bm::{BlockRule, ExtremumKind, LocationMode, McmcConfig, ModelSpec, RawSeries, Scope};
use chrono::NaiveDate;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(err: bm::Error) -> PyErr {
    match err {
        bm::Error::Io { .. } => PyOSError::new_err(err.to_string()),
        e if e.is_numerical() => PyRuntimeError::new_err(e.to_string()),
        bm::Error::Summary(m) => PyRuntimeError::new_err(m),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn parse_scope(scope: &str) -> Scope {
    match scope {
        "population" => Scope::Population,
        g => Scope::Group(g.trim_start_matches("group:").to_string()),
    }
}

fn parse_mode(mode: &str, group_tag: Option<String>) -> Result<LocationMode, String> {
    match (mode, group_tag) {
        ("fixed", _) => Ok(LocationMode::Fixed),
        ("random", Some(tag)) => Ok(LocationMode::Random(tag)),
        ("random", None) => Err("random mode needs group_tag".into()),
        (other, _) => Err(format!("mode must be 'fixed' or 'random', got '{other}'")),
    }
}

/// GEV(mu, sigma, eps) distribution.
#[pyclass(name = "GevParams", module = "blockmax", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGev(bm::GevParams);

#[pymethods]
impl PyGev {
    #[new]
    fn new(mu: f64, sigma: f64, eps: f64) -> PyResult<Self> {
        bm::GevParams::new(mu, sigma, eps).map(PyGev).map_err(to_py)
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.0.mu()
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.0.sigma()
    }

    #[getter]
    fn eps(&self) -> f64 {
        self.0.eps()
    }

    fn cdf(&self, x: f64) -> f64 {
        self.0.cdf(x)
    }

    fn pdf(&self, x: f64) -> f64 {
        self.0.pdf(x)
    }

    fn log_pdf(&self, x: f64) -> f64 {
        self.0.log_pdf(x)
    }

    fn quantile(&self, p: f64) -> PyResult<f64> {
        self.0.quantile(p).map_err(to_py)
    }

    /// Level exceeded by a block maximum with probability 1/k.
    fn return_level(&self, k: f64) -> PyResult<f64> {
        self.0.return_level(k).map_err(to_py)
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    /// `(lower, upper)` support bounds, infinite where unbounded.
    fn support(&self) -> (f64, f64) {
        let s = self.0.support();
        (s.lower, s.upper)
    }

    #[pyo3(signature = (n, seed=1))]
    fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        self.0.sample(n, &mut bm::rng::stream_rng(seed, 0))
    }

    fn __repr__(&self) -> String {
        format!("GevParams(mu={}, sigma={}, eps={})", self.0.mu(), self.0.sigma(), self.0.eps())
    }
}

/// Block maxima (or minima) with their labels and tags.
#[pyclass(name = "BlockSeries", module = "blockmax", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyBlocks(bm::BlockSeries);

#[pymethods]
impl PyBlocks {
    #[staticmethod]
    fn from_values(values: Vec<f64>) -> PyResult<Self> {
        bm::BlockSeries::from_values(&values).map(PyBlocks).map_err(to_py)
    }

    #[staticmethod]
    fn read_csv(path: &str) -> PyResult<Self> {
        let f = File::open(path).map_err(|e| PyOSError::new_err(format!("{path}: {e}")))?;
        read_block_csv(BufReader::new(f)).map(PyBlocks).map_err(to_py)
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        let f = File::create(path).map_err(|e| PyOSError::new_err(format!("{path}: {e}")))?;
        write_block_csv(&self.0, f).map_err(to_py)
    }

    fn values(&self) -> Vec<f64> {
        self.0.values()
    }

    fn labels(&self) -> Vec<String> {
        self.0.records().iter().map(|r| r.label.clone()).collect()
    }

    fn tag_names(&self) -> Vec<String> {
        self.0.tag_names()
    }

    fn tag_values(&self, tag: &str) -> PyResult<Vec<String>> {
        if !self.0.has_tag(tag) {
            return Err(PyValueError::new_err(format!("no tag '{tag}'")));
        }
        Ok(self.0.records().iter().map(|r| r.tags[tag].clone()).collect())
    }

    #[getter]
    fn kind(&self) -> String {
        self.0.kind().to_string()
    }

    fn empirical_percentile(&self, value: f64) -> f64 {
        self.0.empirical_percentile(value)
    }

    /// Per-group count, mean and sd; `None` sd for single-record groups.
    #[pyo3(signature = (tag=None))]
    fn summary<'py>(&self, py: Python<'py>, tag: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
        let s = bm::blocks::summarize(&self.0, tag).map_err(to_py)?;
        let out = PyDict::new(py);
        for (name, g) in s.groups.iter().chain(std::iter::once(&("overall".to_string(), s.overall.clone()))) {
            out.set_item(name, (g.count, g.mean, g.sd))?;
        }
        Ok(out)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Retained MCMC draws, one column per parameter.
#[pyclass(name = "ChainDraws", module = "blockmax", frozen)]
struct PyDraws(bm::ChainDraws);

#[pymethods]
impl PyDraws {
    #[staticmethod]
    fn read_csv(path: &str) -> PyResult<Self> {
        let f = File::open(path).map_err(|e| PyOSError::new_err(format!("{path}: {e}")))?;
        bm::ChainDraws::read_csv(BufReader::new(f)).map(PyDraws).map_err(to_py)
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        let f = File::create(path).map_err(|e| PyOSError::new_err(format!("{path}: {e}")))?;
        self.0.write_csv(f).map_err(to_py)
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.0.parameter_names.clone()
    }

    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        self.0
            .column(name)
            .map(<[f64]>::to_vec)
            .ok_or_else(|| PyValueError::new_err(format!("no column '{name}'")))
    }

    fn acceptance_rates(&self) -> Vec<(String, f64)> {
        self.0.acceptance_rates.clone()
    }

    /// `{name: (mean, sd, lower95, upper95, ess)}`.
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = summarize(&self.0).map_err(to_py)?;
        let out = PyDict::new(py);
        for p in s.parameters {
            out.set_item(&p.name, (p.mean, p.sd, p.lower95, p.upper95, p.ess))?;
        }
        Ok(out)
    }

    /// `(warnings, {name: (ess, geweke_z, flagged)})`.
    fn diagnostics<'py>(&self, py: Python<'py>) -> PyResult<(Vec<String>, Bound<'py, PyDict>)> {
        let d = diagnostics(&self.0);
        let out = PyDict::new(py);
        for p in d.parameters {
            out.set_item(&p.name, (p.ess, p.geweke_z, p.flagged))?;
        }
        Ok((d.warnings, out))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Block maxima of one dated series. `dates` are ISO-8601 strings.
#[pyfunction]
#[pyo3(signature = (dates, values, rule="year", kind="max", label="series", drop_partial=false))]
fn extract_block_maxima(
    dates: Vec<String>,
    values: Vec<f64>,
    rule: &str,
    kind: &str,
    label: &str,
    drop_partial: bool,
) -> PyResult<PyBlocks> {
    if dates.len() != values.len() {
        return Err(PyValueError::new_err("dates and values differ in length"));
    }
    let obs = dates
        .iter()
        .zip(&values)
        .map(|(d, &value)| {
            let date = NaiveDate::parse_from_str(d.get(..10).unwrap_or(d), "%Y-%m-%d")
                .map_err(|e| PyValueError::new_err(format!("bad date '{d}': {e}")))?;
            Ok(Observation { date, value })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let series = RawSeries::new(label, obs).map_err(to_py)?;
    let rule: BlockRule = rule.parse().map_err(to_py)?;
    let kind: ExtremumKind = kind.parse().map_err(to_py)?;
    let mut ex = bm::extract_block_maxima(&series, rule, kind).map_err(to_py)?;
    if drop_partial {
        ex = ex.drop_partial();
    }
    Ok(PyBlocks(ex.blocks))
}

/// 100 x share of `data` at or below `value`.
#[pyfunction]
fn empirical_percentile(value: f64, data: Vec<f64>) -> f64 {
    bm::blocks::empirical_percentile(value, &data)
}

/// MCMC fit of the fixed- or random-location model.
#[pyfunction]
#[pyo3(signature = (blocks, mode="fixed", group_tag=None, iterations=20000, burn_in=4000, thin=5, seed=1))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    blocks: &PyBlocks,
    mode: &str,
    group_tag: Option<String>,
    iterations: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
) -> PyResult<PyDraws> {
    let mode = parse_mode(mode, group_tag).map_err(PyValueError::new_err)?;
    let spec = ModelSpec::new(blocks.0.clone(), mode).map_err(to_py)?;
    let config = McmcConfig {
        iterations,
        burn_in,
        thin,
        seed,
        ..McmcConfig::default()
    };
    py.detach(|| run_chain(&spec, &config))
        .map(PyDraws)
        .map_err(to_py)
}

/// Posterior return-level report for one scope (`"population"` or a group label).
#[pyfunction]
#[pyo3(signature = (draws, blocks, k, scope="population"))]
fn return_level_report<'py>(
    py: Python<'py>,
    draws: &PyDraws,
    blocks: &PyBlocks,
    k: f64,
    scope: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let scope = parse_scope(scope);
    let rk = return_level_posterior(&draws.0, k, &scope).map_err(to_py)?;
    let r = build_report(&rk, &blocks.0, k, scope).map_err(to_py)?;
    let c = coverage_check(&r, &blocks.0, 100.0 * (1.0 - 1.0 / k)).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("k", r.k)?;
    out.set_item("scope", r.scope.to_string())?;
    out.set_item("estimate", r.estimate)?;
    out.set_item("sd", r.sd)?;
    out.set_item("lower95", r.lower95)?;
    out.set_item("upper95", r.upper95)?;
    out.set_item(
        "percentiles",
        (r.percentile_of.lower, r.percentile_of.estimate, r.percentile_of.upper),
    )?;
    out.set_item("extrapolation_warning", r.extrapolation_warning)?;
    out.set_item("covered", c.covered)?;
    out.set_item("narrative", c.narrative)?;
    Ok(out)
}

/// Maximum-likelihood fit: `{"params", "loglik", "converged", "ci95", "covariance"}`.
#[pyfunction]
#[pyo3(signature = (values, k=None))]
fn mle_fit<'py>(py: Python<'py>, values: Vec<f64>, k: Option<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
    let fit = bm::oracle::mle_fit_values(&values).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("params", PyGev(fit.params))?;
    out.set_item("loglik", fit.log_likelihood_at_max)?;
    out.set_item("converged", fit.converged)?;
    out.set_item("at_boundary", fit.at_boundary)?;
    out.set_item("covariance", fit.covariance.map(|r| r.to_vec()).to_vec())?;
    let ci = PyDict::new(py);
    for (name, w) in [("mu", fit.ci95.mu), ("sigma", fit.ci95.sigma), ("eps", fit.ci95.eps)] {
        ci.set_item(name, (w.lower, w.upper))?;
    }
    for k in k.unwrap_or_default() {
        let w = fit.return_level_ci(k).map_err(to_py)?;
        ci.set_item(format!("R^{k}"), (w.lower, w.upper))?;
    }
    out.set_item("ci95", ci)?;
    Ok(out)
}

/// Grouped GEV panel; returns `(blocks, deltas)`.
#[pyfunction]
#[pyo3(signature = (mu, sigma, eps, tau=0.0, groups=1, per_group=100, seed=1))]
fn simulate_panel(
    mu: f64,
    sigma: f64,
    eps: f64,
    tau: f64,
    groups: usize,
    per_group: usize,
    seed: u64,
) -> PyResult<(PyBlocks, Vec<f64>)> {
    let truth = bm::SimulationTruth { mu, sigma, eps, tau };
    let p = bm::simulate_panel(truth, groups, per_group, seed).map_err(to_py)?;
    Ok((PyBlocks(p.data), p.deltas))
}

#[pymodule]
#[pyo3(name = "blockmax")]
fn blockmax_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGev>()?;
    m.add_class::<PyBlocks>()?;
    m.add_class::<PyDraws>()?;
    m.add_function(wrap_pyfunction!(extract_block_maxima, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_percentile, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(return_level_report, m)?)?;
    m.add_function(wrap_pyfunction!(mle_fit, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_panel, m)?)?;
    m.add("GUMBEL_TOL", bm::GUMBEL_TOL)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scopes() {
        assert_eq!(parse_scope("population"), Scope::Population);
        assert_eq!(parse_scope("group:g01"), Scope::Group("g01".into()));
        assert_eq!(parse_scope("March"), Scope::Group("March".into()));
    }

    #[test]
    fn modes() {
        assert_eq!(parse_mode("fixed", None), Ok(LocationMode::Fixed));
        assert_eq!(parse_mode("random", Some("year".into())), Ok(LocationMode::Random("year".into())));
        assert!(parse_mode("random", None).is_err());
        assert!(parse_mode("mixed", None).is_err());
    }
}
