//! Scenario configuration: a JSON-compatible document describing one
//! market, pricing rule, grid, and run plan. The CLI and the Python
//! bindings both build their working objects from this type.

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, StrategySpec};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::{ModelParams, PayoffSpec, VolatilitySpec, WeightingFunction};
use crate::pricing::{PricingRule, DEFAULT_NODES};

fn default_nodes() -> usize {
    DEFAULT_NODES
}

fn default_grid_size() -> usize {
    4096
}

fn default_paths() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolConfig {
    pub knots: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub sigma: f64,
    pub vol: VolConfig,
    pub payoff: PayoffSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PricingKind {
    Markovian,
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PricingConfig {
    pub kind: PricingKind,
    #[serde(default = "default_nodes")]
    pub quadrature_nodes: usize,
}

/// Weighting block: explicit weights, or omitted to construct the unique
/// equilibrium weighting on the partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightingConfig {
    pub partition: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    Uniform,
    Geometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub mode: GridMode,
    #[serde(default = "default_grid_size")]
    pub size: usize,
}

/// Strategy names as written in configuration; weighted variants pick up
/// the scenario's weighting at build time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategyConfig {
    EquilibriumMarkov,
    #[serde(rename = "equilibrium_nonmarkov")]
    EquilibriumNonMarkov,
    TargetChasing,
    #[serde(rename = "target_chasing_nonmarkov")]
    TargetChasingNonMarkov,
    Zero,
    BuyAndHold { quantity: f64 },
    JumpAt { time: f64, size: f64 },
    Diffusive { kappa: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub strategies: Vec<StrategyConfig>,
    #[serde(default)]
    pub probe_times: Vec<f64>,
}

/// Full scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelConfig,
    pub pricing: PricingConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weighting: Option<WeightingConfig>,
    pub grid: GridConfig,
    pub run: RunConfig,
}

/// Built working objects for one scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub params: ModelParams,
    pub rule: PricingRule,
    pub weighting: Option<WeightingFunction>,
    pub grid: TimeGrid,
    pub strategies: Vec<StrategySpec>,
    pub n_paths: usize,
    pub base_seed: u64,
    pub probe_times: Vec<f64>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Validates the document and builds the working objects.
    pub fn build(&self) -> Result<Scenario> {
        let vol = VolatilitySpec::new(self.model.vol.knots.clone())
            .map_err(|e| Error::Config(format!("model.vol.knots: {e}")))?;
        let params = ModelParams::new(self.model.sigma, vol, self.model.payoff.clone())
            .map_err(|e| Error::Config(format!("model: {e}")))?;

        let weighting = match (&self.pricing.kind, &self.weighting) {
            (PricingKind::Markovian, _) => None,
            (PricingKind::Weighted, None) => {
                return Err(Error::Config(
                    "pricing.kind = weighted requires a weighting block".into(),
                ))
            }
            (PricingKind::Weighted, Some(wc)) => Some(match &wc.weights {
                Some(ws) => WeightingFunction::new(wc.partition.clone(), ws.clone())
                    .map_err(|e| Error::Config(format!("weighting: {e}")))?,
                None => params
                    .construct_weighting(&wc.partition)
                    .map_err(|e| Error::Config(format!("weighting.partition: {e}")))?,
            }),
        };

        let rule = match &weighting {
            Some(w) => PricingRule::weighted(self.model.payoff.clone(), w.clone()),
            None => PricingRule::markovian(self.model.payoff.clone()),
        }
        .with_nodes(self.pricing.quadrature_nodes);

        let mut strategies = Vec::with_capacity(self.run.strategies.len());
        for s in &self.run.strategies {
            strategies.push(self.build_strategy(s, &weighting)?);
        }

        if self.run.probe_times.iter().any(|&t| !(0.0..=1.0).contains(&t)) {
            return Err(Error::Config("run.probe_times must lie in [0, 1]".into()));
        }

        let grid = self.build_grid(&params, &weighting)?;
        Ok(Scenario {
            params,
            rule,
            weighting,
            grid,
            strategies,
            n_paths: self.run.n_paths,
            base_seed: self.run.base_seed,
            probe_times: self.run.probe_times.clone(),
        })
    }

    fn build_strategy(
        &self,
        s: &StrategyConfig,
        weighting: &Option<WeightingFunction>,
    ) -> Result<StrategySpec> {
        let need_w = || {
            weighting.clone().ok_or_else(|| {
                Error::Config("run.strategies: weighted strategy needs weighted pricing".into())
            })
        };
        Ok(match s {
            StrategyConfig::EquilibriumMarkov => StrategySpec::EquilibriumMarkov,
            StrategyConfig::EquilibriumNonMarkov => {
                StrategySpec::EquilibriumNonMarkov { weighting: need_w()? }
            }
            StrategyConfig::TargetChasing => StrategySpec::TargetChasing,
            StrategyConfig::TargetChasingNonMarkov => {
                StrategySpec::TargetChasingNonMarkov { weighting: need_w()? }
            }
            StrategyConfig::Zero => StrategySpec::Zero,
            StrategyConfig::BuyAndHold { quantity } => {
                StrategySpec::BuyAndHold { quantity: *quantity }
            }
            StrategyConfig::JumpAt { time, size } => {
                if !(0.0..=1.0).contains(time) {
                    return Err(Error::Config("run.strategies: jump_at time outside [0,1]".into()));
                }
                StrategySpec::JumpAt { time: *time, size: *size }
            }
            StrategyConfig::Diffusive { kappa } => StrategySpec::Diffusive { kappa: *kappa },
        })
    }

    /// Builds the grid with singular-time refinement for geometric mode;
    /// probe times and weighting breakpoints are always grid nodes.
    fn build_grid(
        &self,
        params: &ModelParams,
        weighting: &Option<WeightingFunction>,
    ) -> Result<TimeGrid> {
        let mut marks: Vec<f64> = self.run.probe_times.clone();
        if let Some(w) = weighting {
            marks.extend_from_slice(w.breakpoints());
        }
        match self.grid.mode {
            GridMode::Uniform => TimeGrid::uniform_with_marks(self.grid.size, &marks)
                .map_err(|e| Error::Config(format!("grid: {e}"))),
            GridMode::Geometric => {
                let refine = match weighting {
                    Some(w) => dynamics::weighted_refine_marks(params, w),
                    None => dynamics::markov_refine_marks(params),
                };
                TimeGrid::geometric(self.grid.size, &refine, &marks)
                    .map_err(|e| Error::Config(format!("grid: {e}")))
            }
        }
    }
}
