//! Python bindings: a thin scenario-level facade over the core crate.
//!
//! A `Scenario` wraps one parsed configuration (same JSON schema as the
//! CLI) and exposes the main operations; structured results come back as
//! JSON strings so the Python side can `json.loads` them without any
//! binding-side schema duplication.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use kyleq::analysis;
use kyleq::dynamics::{self, StrategySpec};
use kyleq::error::Error;
use kyleq::filter;
use kyleq::scenario::{PricingKind, ScenarioConfig};
use kyleq::value::{self, ValueFunction};

fn err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Domain(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// `(t, Z, theta, Y, xi, P, wealth)` columns of one trajectory.
type PathColumns = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, f64);

/// One configured market scenario.
#[pyclass]
struct Scenario {
    config: ScenarioConfig,
    built: kyleq::scenario::Scenario,
}

#[pymethods]
impl Scenario {
    /// Parse a JSON scenario document.
    #[new]
    fn new(config_json: &str) -> PyResult<Self> {
        let config = ScenarioConfig::from_json(config_json).map_err(err)?;
        let built = config.build().map_err(err)?;
        Ok(Scenario { config, built })
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(sigma={}, grid_nodes={}, pricing={:?})",
            self.built.params.sigma,
            self.built.grid.len(),
            self.config.pricing.kind
        )
    }

    /// Number of grid nodes after refinement.
    fn grid_nodes(&self) -> usize {
        self.built.grid.len()
    }

    /// Cumulative firm variance `Sigma_z(t)`.
    fn cumulative_variance(&self, t: f64) -> PyResult<f64> {
        self.built.params.cumulative_variance(t).map_err(err)
    }

    /// `Sigma_z(t) - t + sigma^2`.
    fn markov_denominator(&self, t: f64) -> PyResult<f64> {
        self.built.params.markov_denominator(t).map_err(err)
    }

    fn lambda_of_t(&self, t: f64) -> PyResult<f64> {
        self.built.params.lambda_of_t(t).map_err(err)
    }

    fn xi_of_t(&self, t: f64) -> PyResult<f64> {
        self.built.params.xi_of_t(t).map_err(err)
    }

    /// Feasibility report for the configured pricing kind (JSON).
    fn check(&self) -> PyResult<String> {
        match self.config.pricing.kind {
            PricingKind::Markovian => to_json(&self.built.params.check_assumptions(20)),
            PricingKind::Weighted => {
                let w = self.built.weighting.as_ref().expect("weighted scenario");
                to_json(&self.built.params.check_nonmarkovian_conditions(w, 512))
            }
        }
    }

    /// Constructed equilibrium weights for a partition.
    fn construct_weighting(&self, partition: Vec<f64>) -> PyResult<Vec<f64>> {
        let w = self.built.params.construct_weighting(&partition).map_err(err)?;
        Ok(w.weights().to_vec())
    }

    /// Pricing rule `H(y, t)`.
    fn price(&self, y: f64, t: f64) -> PyResult<f64> {
        self.built.rule.price(y, t).map_err(err)
    }

    /// Inverse of `H(., t)` at a price level.
    fn inverse_price(&self, p: f64, t: f64) -> PyResult<f64> {
        self.built.rule.inverse_price(p, t).map_err(err)
    }

    /// Fundamental value `F(z, t)`.
    fn fundamental(&self, z: f64, t: f64) -> PyResult<f64> {
        kyleq::pricing::FundamentalValue::new(&self.built.params).value(z, t).map_err(err)
    }

    /// Value function `V(y, z, t)` (composite form for weighted rules).
    fn value(&self, y: f64, z: f64, t: f64) -> PyResult<f64> {
        let vf = ValueFunction::new(self.built.rule.clone(), self.built.params.clone());
        match &self.built.weighting {
            Some(w) => value::value_nonmarkov(&vf, w, y, z, t).map_err(err),
            None => vf.value(y, z, t).map_err(err),
        }
    }

    /// Expected equilibrium profit (the admissible-strategy upper bound).
    fn profit_upper_bound(&self) -> PyResult<f64> {
        let vf = ValueFunction::new(self.built.rule.clone(), self.built.params.clone());
        match &self.built.weighting {
            Some(w) => value::nonmarkov_profit_upper_bound(&vf, w).map_err(err),
            None => vf.profit_upper_bound().map_err(err),
        }
    }

    /// One simulated trajectory as parallel lists:
    /// `(t, Z, theta, Y, xi, P, wealth)`.
    #[pyo3(signature = (strategy_index = 0, seed = None))]
    fn simulate_path(
        &self,
        strategy_index: usize,
        seed: Option<u64>,
    ) -> PyResult<PathColumns> {
        let strategy = self.strategy_at(strategy_index)?;
        let b = dynamics::simulate_path(
            &self.built.params,
            &self.built.rule,
            &strategy,
            &self.built.grid,
            seed.unwrap_or(self.built.base_seed),
        )
        .map_err(err)?;
        Ok((b.grid.nodes().to_vec(), b.z, b.theta, b.y, b.xi, b.price, b.wealth))
    }

    /// Monte Carlo profit statistics for one configured strategy (JSON).
    #[pyo3(signature = (strategy_index = 0, n_paths = None, seed = None))]
    fn monte_carlo(
        &self,
        strategy_index: usize,
        n_paths: Option<usize>,
        seed: Option<u64>,
    ) -> PyResult<String> {
        let strategy = self.strategy_at(strategy_index)?;
        let st = dynamics::monte_carlo(
            &self.built.params,
            &self.built.rule,
            &strategy,
            &self.built.grid,
            n_paths.unwrap_or(self.built.n_paths),
            seed.unwrap_or(self.built.base_seed),
        )
        .map_err(err)?;
        to_json(&st)
    }

    /// RK4 versus analytic conditional variance on `[0, t_max]` (JSON).
    #[pyo3(signature = (t_max = 0.9, steps = 2048))]
    fn gamma_path(&self, t_max: f64, steps: usize) -> PyResult<String> {
        let times: Vec<f64> =
            (0..=steps).map(|k| t_max * k as f64 / steps as f64).collect();
        to_json(&filter::gamma_ode_solve(&self.built.params, &times).map_err(err)?)
    }

    /// Efficiency curve at the configured probe times (JSON).
    #[pyo3(signature = (with_insider = true, n_paths = None))]
    fn efficiency_curve(&self, with_insider: bool, n_paths: Option<usize>) -> PyResult<String> {
        let probes: Vec<f64> = if self.built.probe_times.is_empty() {
            (0..8).map(|j| j as f64 / 8.0).collect()
        } else {
            self.built.probe_times.iter().copied().filter(|&t| t < 1.0).collect()
        };
        let pts = analysis::efficiency_curve(
            &self.built.params,
            &self.built.rule,
            with_insider,
            &self.built.grid,
            &probes,
            n_paths.unwrap_or(self.built.n_paths),
            self.built.base_seed,
        )
        .map_err(err)?;
        to_json(&pts)
    }
}

impl Scenario {
    fn strategy_at(&self, index: usize) -> PyResult<StrategySpec> {
        self.built
            .strategies
            .get(index)
            .cloned()
            .ok_or_else(|| PyValueError::new_err(format!("no strategy at index {index}")))
    }
}

#[pymodule]
fn kyleq_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
