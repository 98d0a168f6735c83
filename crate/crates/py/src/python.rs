//! pyo3 glue: `carbonsim_py.make(...)` returns an `EnvHandle`.

use std::collections::BTreeMap;
use std::sync::Mutex;

use carbonsim::{run_episode, EngineError, EpisodeSpec, SimConfig};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use crate::env::{recorded_actions, AgentAction, AgentId, Env, EnvError, EnvOptions, Observation};

fn to_py_err(e: EnvError) -> PyErr {
    match e {
        EnvError::NotReset | EnvError::Terminated | EnvError::Engine(EngineError::Finished(_)) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_config(config: Option<&str>) -> PyResult<SimConfig> {
    match config {
        None => Ok(SimConfig::default()),
        Some(text) => SimConfig::from_json(text).map_err(|e| PyValueError::new_err(e.to_string())),
    }
}

fn observation<'py>(py: Python<'py>, obs: &Observation) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (name, values) in &obs.arrays {
        d.set_item(*name, PyList::new(py, values)?)?;
    }
    d.set_item("action_mask", PyList::new(py, &obs.action_mask)?)?;
    Ok(d)
}

fn observations<'py>(py: Python<'py>, map: &BTreeMap<AgentId, Observation>) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (agent, obs) in map {
        d.set_item(agent.to_string(), observation(py, obs)?)?;
    }
    Ok(d)
}

fn action_to_py<'py>(py: Python<'py>, a: &AgentAction) -> PyResult<Bound<'py, PyAny>> {
    Ok(match a {
        AgentAction::Discrete(k) => k.into_pyobject(py)?.into_any(),
        AgentAction::MultiDiscrete(raw) => PyList::new(py, raw)?.into_any(),
    })
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// The four maps `step` returns.
type StepTuple<'py> = (
    Bound<'py, PyDict>,
    Bound<'py, PyDict>,
    Bound<'py, PyDict>,
    Bound<'py, PyDict>,
);

/// One environment handle; all state lives on the native side.
#[pyclass(name = "EnvHandle", module = "carbonsim_py")]
pub struct EnvHandle {
    env: Mutex<Env>,
}

impl EnvHandle {
    fn with<T>(&self, f: impl FnOnce(&mut Env) -> Result<T, EnvError>) -> PyResult<T> {
        let mut env = self
            .env
            .lock()
            .map_err(|_| PyRuntimeError::new_err("environment poisoned by an earlier panic"))?;
        f(&mut env).map_err(to_py_err)
    }
}

#[pymethods]
impl EnvHandle {
    #[new]
    #[pyo3(signature = (config=None, controlled=Vec::new(), gov_policy="flat-si", ent_policy="scripted", punishment=None, discount=1.0))]
    fn new(
        config: Option<&str>,
        controlled: Vec<String>,
        gov_policy: &str,
        ent_policy: &str,
        punishment: Option<f64>,
        discount: f64,
    ) -> PyResult<Self> {
        let mut options = EnvOptions::new(parse_config(config)?);
        options.controlled = controlled
            .iter()
            .map(|s| s.parse())
            .collect::<Result<_, _>>()
            .map_err(to_py_err)?;
        options.gov_policy = gov_policy
            .parse()
            .map_err(|e: carbonsim::policies::PolicyError| PyValueError::new_err(e.to_string()))?;
        options.ent_policy = ent_policy
            .parse()
            .map_err(|e: carbonsim::policies::PolicyError| PyValueError::new_err(e.to_string()))?;
        if let Some(p) = punishment {
            options.punishment = p;
        }
        options.discount = discount;
        let env = Env::new(options).map_err(to_py_err)?;
        Ok(Self { env: Mutex::new(env) })
    }

    /// Names of the externally controlled agents.
    #[getter]
    fn agents(&self) -> PyResult<Vec<String>> {
        self.with(|env| Ok(env.controlled().iter().map(|a| a.to_string()).collect()))
    }

    /// Observation and action schemas of the controlled agents.
    fn spaces<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let text = self.with(|env| Ok(serde_json::to_string(&env.spaces()).expect("spaces serialize")))?;
        json_to_py(py, &text)
    }

    fn reset<'py>(&self, py: Python<'py>, seed: u64) -> PyResult<Bound<'py, PyDict>> {
        let obs = py.detach(|| self.with(|env| env.reset(seed)))?;
        observations(py, &obs)
    }

    /// Returns `(observations, rewards, terminated, info)`.
    fn step<'py>(&self, py: Python<'py>, actions: &Bound<'py, PyDict>) -> PyResult<StepTuple<'py>> {
        let mut parsed = BTreeMap::new();
        for (k, v) in actions.iter() {
            let agent: AgentId = k.extract::<String>()?.parse().map_err(to_py_err)?;
            let action = match v.extract::<usize>() {
                Ok(i) => AgentAction::Discrete(i),
                Err(_) => AgentAction::MultiDiscrete(v.extract::<Vec<u32>>()?),
            };
            parsed.insert(agent, action);
        }
        let result = py.detach(|| self.with(|env| env.step(&parsed)))?;
        let rewards = PyDict::new(py);
        let terminated = PyDict::new(py);
        for (agent, r) in &result.rewards {
            rewards.set_item(agent.to_string(), r)?;
            terminated.set_item(agent.to_string(), result.terminated)?;
        }
        terminated.set_item("__all__", result.terminated)?;
        let info = PyDict::new(py);
        info.set_item("t", result.t)?;
        info.set_item("events", result.events)?;
        Ok((observations(py, &result.observations)?, rewards, terminated, info))
    }

    /// The episode's trace in line-delimited form.
    fn trace_jsonl(&self) -> PyResult<String> {
        self.with(|env| Ok(env.trace()?.to_jsonl()))
    }

    fn trace_digest(&self) -> PyResult<String> {
        self.with(|env| Ok(env.trace()?.digest()))
    }

    fn close(&self) -> PyResult<()> {
        self.with(|env| {
            env.close();
            Ok(())
        })
    }
}

/// `make(config_json=None, controlled=[...], ...)`, the same as `EnvHandle(...)`.
#[pyfunction]
#[pyo3(signature = (config=None, controlled=Vec::new(), gov_policy="flat-si", ent_policy="scripted", punishment=None, discount=1.0))]
fn make(
    config: Option<&str>,
    controlled: Vec<String>,
    gov_policy: &str,
    ent_policy: &str,
    punishment: Option<f64>,
    discount: f64,
) -> PyResult<EnvHandle> {
    EnvHandle::new(config, controlled, gov_policy, ent_policy, punishment, discount)
}

#[pyfunction]
fn default_config() -> String {
    SimConfig::default().to_json_pretty()
}

/// Runs an episode natively with named policies. Returns its digest, its
/// trace and the per-step actions it recorded.
#[pyfunction]
#[pyo3(signature = (seed, gov_policy="flat-si", ent_policy="scripted", punishment=None, config=None))]
fn native_episode<'py>(
    py: Python<'py>,
    seed: u64,
    gov_policy: &str,
    ent_policy: &str,
    punishment: Option<f64>,
    config: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let config = parse_config(config)?;
    let spec = EpisodeSpec {
        punishment: punishment.unwrap_or(config.default_punishment),
        config,
        seed,
        gov: gov_policy
            .parse()
            .map_err(|e: carbonsim::policies::PolicyError| PyValueError::new_err(e.to_string()))?,
        ent: ent_policy
            .parse()
            .map_err(|e: carbonsim::policies::PolicyError| PyValueError::new_err(e.to_string()))?,
    };
    let trace = py
        .detach(|| run_episode(&spec))
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let steps = PyList::empty(py);
    for step in recorded_actions(&trace) {
        let d = PyDict::new(py);
        for (agent, a) in &step {
            d.set_item(agent.to_string(), action_to_py(py, a)?)?;
        }
        steps.append(d)?;
    }
    let out = PyDict::new(py);
    out.set_item("digest", trace.digest())?;
    out.set_item("jsonl", trace.to_jsonl())?;
    out.set_item("actions", steps)?;
    Ok(out)
}

#[pymodule]
fn carbonsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<EnvHandle>()?;
    m.add_function(wrap_pyfunction!(make, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(native_episode, m)?)?;
    m.add("TRACE_FORMAT_VERSION", carbonsim::trace::TRACE_FORMAT_VERSION)?;
    Ok(())
}
