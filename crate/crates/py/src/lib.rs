//! Python bindings. Results that are records on the Rust side come back as
//! plain dicts and lists, built through the JSON schema the service uses.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use robbins_core::exact_dp::{optimal_value_with, secretary_rule, truncated_value as truncated};
use robbins_core::memoryless::{
    expected_rank_exact, optimize_c as opt_c, optimize_free as opt_free, phi_family as family, CFamilySpec,
    ThresholdVector,
};
use robbins_core::namur::{
    fit_distribution as fit, new_session, CompatibilityLedger, DecisionTrace, DistributionBasket, Objective, Session,
    TableSet,
};
use robbins_core::poisson_ode::{
    ode_solve, simulate_threshold_play, value_w as w_value, ContinuousThreshold, HModel, OdeProblem, Penalty,
    QuadratureSpec, WFormula,
};
use robbins_core::{correlation_check, evaluate_policy, Decision, Error, Loss};
use serde::Serialize;

create_exception!(robbins, ResourceBoundError, PyException);
create_exception!(robbins, ConflictError, PyException);
create_exception!(robbins, NumericalError, PyException);

fn err(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(m) | Error::UndefinedFit(m) => PyValueError::new_err(m),
        Error::ResourceBound(m) => ResourceBoundError::new_err(m),
        Error::Conflict(m) => ConflictError::new_err(m),
        Error::Numerical(m) => NumericalError::new_err(m),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Accepts the labels the library prints: `EXACT_RANK(r)` or `TOP_PERCENT(q)`.
fn parse_objective(label: &str) -> PyResult<Objective> {
    let bad = || PyValueError::new_err(format!("expected EXACT_RANK(r) or TOP_PERCENT(q), got {label:?}"));
    let (kind, rest) = label.trim().split_once('(').ok_or_else(bad)?;
    let v: u32 = rest.strip_suffix(')').ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
    let o = match kind.trim() {
        "EXACT_RANK" => Objective::ExactRank { rank: v },
        "TOP_PERCENT" => Objective::TopPercent { q: v },
        _ => return Err(bad()),
    };
    o.validate().map_err(err)?;
    Ok(o)
}

fn parse_decision(d: &str) -> PyResult<Decision> {
    match d.to_ascii_uppercase().as_str() {
        "ACCEPT" => Ok(Decision::Accept),
        "PASS" => Ok(Decision::Pass),
        _ => Err(PyValueError::new_err(format!("decision must be ACCEPT or PASS, got {d:?}"))),
    }
}

fn basket_from(json: Option<&str>) -> PyResult<DistributionBasket> {
    match json {
        None => Ok(DistributionBasket::default()),
        Some(text) => DistributionBasket::from_json(text).map_err(err),
    }
}

/// Full-history optimal expected rank for n ≤ 4.
#[pyfunction]
#[pyo3(signature = (n, tol = 1e-4))]
fn exact_value(py: Python<'_>, n: usize, tol: f64) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &optimal_value_with(n, Loss::Rank, tol).map_err(err)?)
}

#[pyfunction]
fn secretary(py: Python<'_>, n: usize) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &secretary_rule(n).map_err(err)?)
}

#[pyfunction]
fn truncated_value(py: Python<'_>, n: usize, j: usize) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &truncated(n, j).map_err(err)?)
}

/// Thresholds φ_j = c / (n − j + c).
#[pyfunction]
fn phi_family(c: f64, n: usize) -> PyResult<Vec<f64>> {
    Ok(family(CFamilySpec { c, n }).map_err(err)?.phi().to_vec())
}

/// Exact expected final rank of the memoryless rule with thresholds `phi`.
#[pyfunction]
fn expected_rank(phi: Vec<f64>) -> PyResult<f64> {
    Ok(expected_rank_exact(&ThresholdVector::new(phi).map_err(err)?))
}

/// Monte Carlo mean final rank of the memoryless rule with thresholds `phi`.
#[pyfunction]
#[pyo3(signature = (phi, replications, seed = 1))]
fn simulate_thresholds(py: Python<'_>, phi: Vec<f64>, replications: u64, seed: u64) -> PyResult<Bound<'_, PyAny>> {
    let tv = ThresholdVector::new(phi).map_err(err)?;
    let n = tv.n();
    to_py(py, &evaluate_policy(&tv, n, replications, seed, Loss::Rank).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (n, lo = 1.2, hi = 4.0))]
fn optimize_c(py: Python<'_>, n: usize, lo: f64, hi: f64) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &opt_c(n, (lo, hi)).map_err(err)?)
}

#[pyfunction]
fn optimize_free(py: Python<'_>, n: usize) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &opt_free(n).map_err(err)?)
}

/// Sample correlation of X_k and its final rank; k defaults to n.
#[pyfunction]
#[pyo3(signature = (n, replications, k = None, seed = 1))]
fn correlation(py: Python<'_>, n: usize, replications: u64, k: Option<usize>, seed: u64) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &correlation_check(n, replications, k.unwrap_or(n), seed).map_err(err)?)
}

/// Value of continuous threshold play with horizon t.
#[pyfunction]
#[pyo3(signature = (c, t, formula = "thinned"))]
fn value_w(c: f64, t: f64, formula: &str) -> PyResult<f64> {
    let formula = match formula {
        "thinned" => WFormula::Thinned,
        "printed" => WFormula::AsPrinted,
        _ => return Err(PyValueError::new_err("formula is 'thinned' or 'printed'")),
    };
    let ct = ContinuousThreshold::new(c, t).map_err(err)?;
    let spec = QuadratureSpec { formula, ..QuadratureSpec::default() };
    Ok(w_value(&ct, &Penalty::RandomPick, &spec).map_err(err)?.value)
}

#[pyfunction]
#[pyo3(signature = (c, t, replications, seed = 1))]
fn simulate_w(py: Python<'_>, c: f64, t: f64, replications: u64, seed: u64) -> PyResult<Bound<'_, PyAny>> {
    let ct = ContinuousThreshold::new(c, t).map_err(err)?;
    to_py(py, &simulate_threshold_play(&ct, &Penalty::RandomPick, replications, seed).map_err(err)?)
}

/// Limit of the value ODE with a constant gap `kappa` (0 for none).
#[pyfunction]
#[pyo3(signature = (kappa = 0.0, t_max = 1000.0))]
fn ode_limit(py: Python<'_>, kappa: f64, t_max: f64) -> PyResult<Bound<'_, PyAny>> {
    let model = if kappa == 0.0 { HModel::Zero } else { HModel::Constant(kappa) };
    let sol = ode_solve(&OdeProblem::new(model, t_max)).map_err(err)?;
    let summary = serde_json::json!({
        "limit": sol.limit,
        "error_estimate": sol.error_estimate,
        "steps": sol.steps,
        "rejected": sol.rejected,
    });
    to_py(py, &summary)
}

/// Index of the basket entry closest to the arrivals' empirical CDF.
#[pyfunction]
#[pyo3(signature = (arrivals, basket_json = None))]
fn fit_distribution(arrivals: Vec<f64>, basket_json: Option<&str>) -> PyResult<usize> {
    fit(&arrivals, &basket_from(basket_json)?).map_err(err)
}

/// One game of the timed selection game.
#[pyclass(name = "Session", module = "robbins")]
struct PySession {
    inner: Session,
}

#[pymethods]
impl PySession {
    #[new]
    #[pyo3(signature = (m, seed, objective = None, secret = false, basket_json = None))]
    fn new(m: u32, seed: u64, objective: Option<&str>, secret: bool, basket_json: Option<&str>) -> PyResult<Self> {
        let objective = objective.map(parse_objective).transpose()?;
        let inner = new_session(m, &basket_from(basket_json)?, seed)
            .and_then(|s| s.with_objective(objective, secret))
            .map_err(err)?;
        Ok(PySession { inner })
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id.clone()
    }

    #[getter]
    fn is_open(&self) -> bool {
        self.inner.is_open()
    }

    #[getter]
    fn pending(&self) -> bool {
        self.inner.pending()
    }

    /// Reveals the next arrival and returns the events it caused.
    fn advance<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.advance().map_err(err)?)
    }

    fn decide<'py>(&mut self, py: Python<'py>, decision: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.decide(parse_decision(decision)?).map_err(err)?)
    }

    /// The machine's call on the newest arrival, as "ACCEPT" or "PASS".
    fn machine_decide(&self, objective: &str) -> PyResult<&'static str> {
        let d = self.inner.machine_decide(parse_objective(objective)?, TableSet::shipped()).map_err(err)?;
        Ok(if d == Decision::Accept { "ACCEPT" } else { "PASS" })
    }

    /// Redacted player view.
    fn view<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.view())
    }

    /// Full record; the hidden instance is included once closed.
    fn record<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.record())
    }

    fn event_log<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.event_log())
    }
}

/// Belief over a player's secret objective.
#[pyclass(name = "Ledger", module = "robbins")]
struct PyLedger {
    inner: CompatibilityLedger,
}

#[pymethods]
impl PyLedger {
    #[new]
    #[pyo3(signature = (beta = 0.5))]
    fn new(beta: f64) -> PyResult<Self> {
        let inner = CompatibilityLedger::new(robbins_core::namur::objective_grid(), beta).map_err(err)?;
        Ok(PyLedger { inner })
    }

    /// Adds the decision and outcome evidence of a closed session.
    fn update(&mut self, session: &PySession) -> PyResult<()> {
        let s = &session.inner;
        let out = s.outcome().ok_or_else(|| ConflictError::new_err("session is still open"))?;
        let trace = DecisionTrace::from_parts(s.m, s.revealed(), s.belief_trace(), s.decisions(), out.forced);
        self.inner.update_from_decisions(&s.id, &trace, TableSet::shipped());
        self.inner.update_compatibility(&s.id, out.final_rank, out.n);
        Ok(())
    }

    fn argmax(&self) -> String {
        self.inner.argmax().label()
    }

    /// (label, weight) pairs over the hypothesis grid.
    fn weights(&self) -> Vec<(String, f64)> {
        self.inner.grid.iter().zip(&self.inner.weights).map(|(o, &w)| (o.label(), w)).collect()
    }
}

#[pymodule]
fn robbins(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(exact_value, m)?)?;
    m.add_function(wrap_pyfunction!(secretary, m)?)?;
    m.add_function(wrap_pyfunction!(truncated_value, m)?)?;
    m.add_function(wrap_pyfunction!(phi_family, m)?)?;
    m.add_function(wrap_pyfunction!(expected_rank, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_thresholds, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_c, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_free, m)?)?;
    m.add_function(wrap_pyfunction!(correlation, m)?)?;
    m.add_function(wrap_pyfunction!(value_w, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_w, m)?)?;
    m.add_function(wrap_pyfunction!(ode_limit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_distribution, m)?)?;
    m.add_class::<PySession>()?;
    m.add_class::<PyLedger>()?;
    m.add("ResourceBoundError", m.py().get_type::<ResourceBoundError>())?;
    m.add("ConflictError", m.py().get_type::<ConflictError>())?;
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    Ok(())
}
