//! Python bindings: the simulator, sensor corruption, and trained agents.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use depthnav::agent::{Agent, AgentConfig, NetworkPreset, Variant};
use depthnav::rng::{stream_rng, stream};
use depthnav::sensor::{corrupt_scan, CorruptionConfig, Observation};
use depthnav::sim::{ActionPair, Env, EnvConfig, TerminalCause, WorldMap};
use depthnav::trainer::{load_checkpoint, save_checkpoint};

fn runtime_err(e: depthnav::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Validated 2D world: obstacles, bounds, spawn regions.
#[pyclass(name = "World", frozen)]
struct PyWorld {
    inner: Arc<WorldMap>,
}

#[pymethods]
impl PyWorld {
    /// Load a `.world` JSON file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyWorld {
            inner: Arc::new(WorldMap::load(path).map_err(runtime_err)?),
        })
    }

    /// Parse a world from a JSON string.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyWorld {
            inner: Arc::new(WorldMap::from_json(text, "<python>").map_err(runtime_err)?),
        })
    }

    /// Total obstacle shapes, including the four implicit boundary walls.
    fn obstacle_count(&self) -> usize {
        self.inner.obstacles.len()
    }

    /// `((min_x, min_y), (max_x, max_y))` of the enclosing bounds.
    fn bounds(&self) -> ((f64, f64), (f64, f64)) {
        let b = self.inner.bounds;
        ((b.min.x, b.min.y), (b.max.x, b.max.y))
    }
}

/// One episode context over a world.
#[pyclass(name = "Env")]
struct PyEnv {
    inner: Env,
}

#[pymethods]
impl PyEnv {
    #[new]
    #[pyo3(signature = (world, n_rays=64, fov_deg=90.0, max_range=5.0, robot_radius=0.2, dt=0.2, max_steps=500, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        world: &PyWorld,
        n_rays: usize,
        fov_deg: f64,
        max_range: f64,
        robot_radius: f64,
        dt: f64,
        max_steps: u32,
        seed: u64,
    ) -> PyResult<Self> {
        if n_rays < 2 {
            return Err(PyValueError::new_err("n_rays must be >= 2"));
        }
        let cfg = EnvConfig {
            n_rays,
            fov: fov_deg.to_radians(),
            max_range,
            robot_radius,
            dt,
            max_steps,
        };
        Ok(PyEnv {
            inner: Env::new(Arc::clone(&world.inner), cfg, seed),
        })
    }

    /// Spawn at a collision-free pose; returns the raw depth scan.
    #[pyo3(signature = (seed=None))]
    fn reset(&mut self, seed: Option<u64>) -> PyResult<Vec<f64>> {
        self.inner.reset(seed).map_err(runtime_err)
    }

    /// Apply one discrete action. Returns
    /// `(scan, reward, terminal, step_index)` where terminal is one of
    /// "running", "collision", "step_limit".
    fn step(
        &mut self,
        linear_idx: usize,
        angular_idx: usize,
    ) -> PyResult<(Vec<f64>, f64, String, u32)> {
        let action = ActionPair::new(linear_idx, angular_idx).map_err(runtime_err)?;
        let res = self.inner.step(action).map_err(runtime_err)?;
        Ok((
            res.observation,
            res.reward,
            res.terminal.as_str().to_string(),
            res.step_index,
        ))
    }

    /// Current `(x, y, theta)` pose.
    fn state(&self) -> (f64, f64, f64) {
        let s = self.inner.state();
        (s.x, s.y, s.theta)
    }

    fn is_terminal(&self) -> bool {
        self.inner.terminal() != TerminalCause::Running
    }
}

/// Corrupt a raw scan the way training does: triangular blur, Gaussian
/// noise, dropout, clamp. Deterministic per seed.
#[pyfunction]
#[pyo3(signature = (scan, max_range, gauss_sigma=0.05, blur_radius=2, dropout_prob=0.02, seed=0))]
fn corrupt(
    scan: Vec<f64>,
    max_range: f64,
    gauss_sigma: f64,
    blur_radius: usize,
    dropout_prob: f64,
    seed: u64,
) -> PyResult<Vec<f64>> {
    let cfg = CorruptionConfig {
        gauss_sigma,
        blur_radius,
        dropout_prob,
    };
    cfg.validate()
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let mut rng = stream_rng(seed, stream::SENSOR);
    Ok(corrupt_scan(&scan, &cfg, max_range, &mut rng))
}

/// A Q-learning agent (dqn, ddqn, or d3qn).
#[pyclass(name = "Agent")]
struct PyAgent {
    inner: Agent,
}

#[pymethods]
impl PyAgent {
    /// Fresh agent with He-initialized weights.
    #[new]
    #[pyo3(signature = (variant="d3qn", preset="dense", input_len=64, seed=0))]
    fn new(variant: &str, preset: &str, input_len: usize, seed: u64) -> PyResult<Self> {
        let variant: Variant = variant.parse().map_err(runtime_err)?;
        let preset: NetworkPreset = preset.parse().map_err(runtime_err)?;
        let cfg = AgentConfig {
            variant,
            ..AgentConfig::default()
        };
        Ok(PyAgent {
            inner: Agent::new(cfg, preset, input_len, seed).map_err(runtime_err)?,
        })
    }

    /// Restore an agent from a training checkpoint.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let (agent, _meta) = load_checkpoint(path).map_err(runtime_err)?;
        Ok(PyAgent { inner: agent })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_checkpoint(&self.inner, path).map_err(runtime_err)
    }

    /// Branched Q-values: `(q_linear[2], q_angular[5])`. The observation
    /// is a normalized scan in [0, 1] of length `input_len`.
    fn q_values(&self, obs: Vec<f32>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let q = self
            .inner
            .q_values(&Observation {
                values: obs,
                stack_k: 1,
            })
            .map_err(runtime_err)?;
        Ok((q.q_linear.to_vec(), q.q_angular.to_vec()))
    }

    /// Greedy `(linear_idx, angular_idx)` for an observation.
    fn act_greedy(&mut self, obs: Vec<f32>) -> PyResult<(usize, usize)> {
        let action = self
            .inner
            .act(
                &Observation {
                    values: obs,
                    stack_k: 1,
                },
                0.0,
            )
            .map_err(runtime_err)?;
        Ok((action.linear_idx(), action.angular_idx()))
    }

    fn variant(&self) -> String {
        self.inner.variant().as_str().to_string()
    }

    fn input_len(&self) -> usize {
        self.inner.input_len()
    }
}

/// Velocity tables matching the agent's action indices.
#[pyfunction]
fn action_tables() -> (Vec<f64>, Vec<f64>) {
    (
        depthnav::sim::LINEAR_VELOCITIES.to_vec(),
        depthnav::sim::ANGULAR_VELOCITIES.to_vec(),
    )
}

#[pymodule]
fn depthnav_rs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyWorld>()?;
    m.add_class::<PyEnv>()?;
    m.add_class::<PyAgent>()?;
    m.add_function(wrap_pyfunction!(corrupt, m)?)?;
    m.add_function(wrap_pyfunction!(action_tables, m)?)?;
    Ok(())
}
