//! Python bindings: instances, bounds, solvers and heuristics.

use std::time::Duration;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scrp::bay::{Configuration, Geometry};
use scrp::bounds::{lookahead_bound_with, BoundKind};
use scrp::error::Error;
use scrp::exact::solve_exact;
use scrp::heuristics::{exact_policy_value, simulate_policy, Policy};
use scrp::instance::{Instance, InstanceOrder, Model};
use scrp::io::{generate, merge_batches, parse_instance, write_instance, BatchLaw, GenRecipe};
use scrp::solver::{brute_force_expectimax, pbfs, pbfsa, Value};

fn err(e: Error) -> PyErr {
    match e {
        Error::Timeout | Error::BudgetExceeded(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_model(name: &str) -> PyResult<Model> {
    match name {
        "batch" => Ok(Model::Batch),
        "online" => Ok(Model::Online),
        _ => Err(PyValueError::new_err(format!("unknown model `{name}`"))),
    }
}

fn parse_bound(name: &str) -> PyResult<BoundKind> {
    name.parse().map_err(err)
}

fn parse_policy(name: &str) -> PyResult<Policy> {
    name.parse().map_err(err)
}

#[pyclass(name = "Instance", module = "pyscrp", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyInstance {
    inner: Instance,
}

#[pymethods]
impl PyInstance {
    /// Instance whose batches are read off per-stack labels (bottom to top).
    #[staticmethod]
    fn from_labels(tiers: usize, stacks: Vec<Vec<u32>>) -> PyResult<Self> {
        let g = Geometry::new(tiers, stacks.len()).map_err(err)?;
        Ok(PyInstance {
            inner: Instance::from_labels(g, &stacks).map_err(err)?,
        })
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PyInstance {
            inner: parse_instance(text).map_err(err)?,
        })
    }

    fn write(&self) -> String {
        write_instance(&self.inner)
    }

    #[getter]
    fn tiers(&self) -> usize {
        self.inner.geometry.tiers()
    }

    #[getter]
    fn stacks(&self) -> usize {
        self.inner.geometry.stacks()
    }

    #[getter]
    fn batch_sizes(&self) -> Vec<usize> {
        self.inner.batch_sizes.clone()
    }

    /// Labels per stack, bottom to top.
    fn labels(&self) -> Vec<Vec<u32>> {
        self.inner
            .initial
            .stacks()
            .iter()
            .map(|s| s.iter().map(|c| c.label.0).collect())
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.container_count()
    }

    fn __repr__(&self) -> String {
        format!("Instance({})", self.inner.initial)
    }

    fn merge_batches(&self, gamma: usize) -> Self {
        PyInstance {
            inner: merge_batches(&self.inner, gamma),
        }
    }
}

#[pyclass(name = "Value", module = "pyscrp", frozen, get_all)]
struct PyValue {
    expected_relocations: f64,
    status: String,
    nodes: u64,
    pruned: u64,
    samples: u64,
}

#[pymethods]
impl PyValue {
    fn __repr__(&self) -> String {
        format!("Value({:.10}, {})", self.expected_relocations, self.status)
    }

    fn __float__(&self) -> f64 {
        self.expected_relocations
    }
}

impl From<Value> for PyValue {
    fn from(v: Value) -> Self {
        PyValue {
            expected_relocations: v.expected_relocations,
            status: v.status.name().to_string(),
            nodes: v.stats.expanded,
            pruned: v.stats.pruned,
            samples: v.stats.samples,
        }
    }
}

/// Lower bound `b`, `b1` or `b2` at the initial bay.
#[pyfunction]
#[pyo3(signature = (instance, bound = "b1"))]
fn lower_bound(instance: &PyInstance, bound: &str) -> PyResult<f64> {
    let order = InstanceOrder::new(&instance.inner);
    Ok(lookahead_bound_with(&instance.inner.initial, parse_bound(bound)?, &order))
}

#[pyfunction(name = "pbfs")]
#[pyo3(signature = (instance, model = "batch", bound = "b1", time_limit = None))]
fn py_pbfs(
    py: Python<'_>,
    instance: &PyInstance,
    model: &str,
    bound: &str,
    time_limit: Option<f64>,
) -> PyResult<PyValue> {
    let (m, k) = (parse_model(model)?, parse_bound(bound)?);
    let inst = &instance.inner;
    py.detach(|| pbfs(inst, k, m, time_limit.map(Duration::from_secs_f64)))
        .map(PyValue::from)
        .map_err(err)
}

#[pyfunction(name = "pbfsa")]
#[pyo3(signature = (instance, epsilon, seed = 0, model = "batch", bound = "b1", time_limit = None))]
fn py_pbfsa(
    py: Python<'_>,
    instance: &PyInstance,
    epsilon: f64,
    seed: u64,
    model: &str,
    bound: &str,
    time_limit: Option<f64>,
) -> PyResult<PyValue> {
    let (m, k) = (parse_model(model)?, parse_bound(bound)?);
    let inst = &instance.inner;
    py.detach(|| pbfsa(inst, k, epsilon, m, seed, time_limit.map(Duration::from_secs_f64)))
        .map(PyValue::from)
        .map_err(err)
}

/// Exhaustive expectimax; only for small instances.
#[pyfunction]
#[pyo3(signature = (instance, model = "batch"))]
fn oracle(instance: &PyInstance, model: &str) -> PyResult<PyValue> {
    brute_force_expectimax(&instance.inner, parse_model(model)?)
        .map(PyValue::from)
        .map_err(err)
}

/// Monte Carlo mean and standard error of a heuristic.
#[pyfunction]
#[pyo3(signature = (instance, policy, model = "batch", samples = 5000, seed = 0))]
fn simulate(
    instance: &PyInstance,
    policy: &str,
    model: &str,
    samples: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = simulate_policy(&instance.inner, parse_policy(policy)?, parse_model(model)?, samples, &mut rng, true)
        .map_err(err)?;
    Ok((r.mean, r.std_error))
}

#[pyfunction]
#[pyo3(signature = (instance, policy, model = "batch"))]
fn policy_value(instance: &PyInstance, policy: &str, model: &str) -> PyResult<PyValue> {
    exact_policy_value(&instance.inner, parse_policy(policy)?, parse_model(model)?)
        .map(PyValue::from)
        .map_err(err)
}

/// Minimum relocations and the moves `(label, from, to)` for a fully known order.
/// `to` is `None` for a retrieval.
#[pyfunction]
fn solve_crp(tiers: usize, stacks: Vec<Vec<u32>>) -> PyResult<(usize, Vec<(u32, usize, Option<usize>)>)> {
    let g = Geometry::new(tiers, stacks.len()).map_err(err)?;
    let config = Configuration::from_labels(g, &stacks).map_err(err)?;
    let sol = solve_exact(&config).map_err(err)?;
    let moves = sol.moves.iter().map(|m| (m.container.label.0, m.from, m.to)).collect();
    Ok((sol.relocations, moves))
}

#[pyfunction(name = "generate")]
#[pyo3(signature = (tiers, stacks, fill, count, seed = 0, batch_size = None))]
fn py_generate(
    tiers: usize,
    stacks: usize,
    fill: f64,
    count: usize,
    seed: u64,
    batch_size: Option<usize>,
) -> PyResult<Vec<PyInstance>> {
    let recipe = GenRecipe {
        tiers,
        stacks,
        fill,
        batch_law: batch_size.map_or_else(BatchLaw::default, BatchLaw::Fixed),
        count,
        seed,
    };
    Ok(generate(&recipe)
        .map_err(err)?
        .into_iter()
        .map(|inner| PyInstance { inner })
        .collect())
}

#[pymodule]
fn pyscrp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_class::<PyValue>()?;
    m.add_function(wrap_pyfunction!(lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(py_pbfs, m)?)?;
    m.add_function(wrap_pyfunction!(py_pbfsa, m)?)?;
    m.add_function(wrap_pyfunction!(oracle, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(policy_value, m)?)?;
    m.add_function(wrap_pyfunction!(solve_crp, m)?)?;
    m.add_function(wrap_pyfunction!(py_generate, m)?)?;
    Ok(())
}
