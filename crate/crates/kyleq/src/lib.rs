//! Numerical laboratory for continuous-time insider trading equilibria.
//!
//! A market with a risk-neutral insider observing the firm value `Z`,
//! noise traders with Brownian demand `B²`, and competitive market makers
//! who price off the (weighted) total order flow. The library implements:
//!
//! - market parameters and the feasibility checks that make the Markovian
//!   equilibrium well posed ([`model`]),
//! - Gaussian-convolution pricing rules and their inverses ([`pricing`]),
//! - path simulation under equilibrium and deliberately suboptimal
//!   strategies, with exact-bridge cross-checks ([`dynamics`]),
//! - the market maker's filtering system and its closed-form variance
//!   ([`filter`]),
//! - the insider's value function, profit bound, and non-Markovian
//!   composites ([`value`]),
//! - statistical verification: inconspicuousness, bridge convergence,
//!   informational efficiency, optimality tables ([`analysis`]),
//! - scenario configuration shared with the CLI ([`scenario`]).

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod filter;
pub mod grid;
pub mod model;
pub mod pricing;
pub mod quad;
pub mod rng;
pub mod scenario;
pub mod stats;
pub mod value;

pub use error::{Error, Result};
pub use model::{
    AssumptionReport, ConditionReport, ModelParams, PayoffSpec, VolatilitySpec, WeightingFunction,
};
pub use pricing::{FundamentalValue, PricingRule};
pub use dynamics::{PathBundle, ProfitStats, StrategySpec};
pub use grid::TimeGrid;
pub use value::ValueFunction;
