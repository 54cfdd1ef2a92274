//! Market trajectory simulation.
//!
//! One path carries the firm value `Z` (exact Gaussian increments with
//! variance `Sigma_z(s_{k+1}) - Sigma_z(s_k)`), the noise-trader flow
//! `B^2`, the insider order `theta` stepped explicitly from the strategy's
//! drift read at the interval start, the total order `Y = theta + B^2`,
//! the weighted order `xi = int w dY`, prices off the rule, and the final
//! wealth
//!
//! ```text
//! X_1 = (f(Z_1) - P_1) theta_1 + sum_k theta_k (P_{k+1} - P_k)
//! ```
//!
//! (left-point accumulation against price increments). The equilibrium
//! drift is `(Z - Y)/(Sigma_z(t) - t + sigma^2)` in the Markovian case and
//! its anchor-reset weighted analogue between breakpoints. The Euler
//! engine never pins the terminal value; `exact_bridge_path` simulates the
//! closed-form representation of the equilibrium total order instead, so
//! the two engines cross-check each other.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{RefineMark, TimeGrid};
use crate::model::{Denominator, ModelParams, PayoffSpec, WeightingFunction};
use crate::pricing::PricingRule;
use crate::quad;
use crate::rng::{normal, CounterRng};
use crate::stats;

/// Insider strategy variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategySpec {
    /// Optimal drift against the Markovian rule.
    EquilibriumMarkov,
    /// Optimal drift against a weighted rule, anchors reset at breakpoints.
    #[serde(rename = "equilibrium_nonmarkov")]
    EquilibriumNonMarkov { weighting: WeightingFunction },
    /// Drives the order towards the inferred terminal target at rate 1/(1-t).
    TargetChasing,
    /// Weighted target chaser: drives `xi` to the interval target.
    #[serde(rename = "target_chasing_nonmarkov")]
    TargetChasingNonMarkov { weighting: WeightingFunction },
    /// No insider trading.
    Zero,
    /// Constant position entered at the first step.
    BuyAndHold { quantity: f64 },
    /// A single block trade at the grid node nearest to `time`.
    JumpAt { time: f64, size: f64 },
    /// Adds an independent Brownian component scaled by `kappa`.
    Diffusive { kappa: f64 },
}

impl StrategySpec {
    pub fn name(&self) -> String {
        match self {
            StrategySpec::EquilibriumMarkov => "equilibrium_markov".into(),
            StrategySpec::EquilibriumNonMarkov { .. } => "equilibrium_nonmarkov".into(),
            StrategySpec::TargetChasing => "target_chasing".into(),
            StrategySpec::TargetChasingNonMarkov { .. } => "target_chasing_nonmarkov".into(),
            StrategySpec::Zero => "zero".into(),
            StrategySpec::BuyAndHold { quantity } => format!("buy_and_hold({quantity})"),
            StrategySpec::JumpAt { time, size } => format!("jump_at({time},{size})"),
            StrategySpec::Diffusive { kappa } => format!("diffusive({kappa})"),
        }
    }

    fn weighting(&self) -> Option<&WeightingFunction> {
        match self {
            StrategySpec::EquilibriumNonMarkov { weighting }
            | StrategySpec::TargetChasingNonMarkov { weighting } => Some(weighting),
            _ => None,
        }
    }
}

/// One simulated market trajectory on a grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathBundle {
    pub grid: TimeGrid,
    /// Prior draw (initial firm value).
    pub v: f64,
    /// Cumulative standardized firm driver.
    pub b1: Vec<f64>,
    /// Cumulative noise-trader flow.
    pub b2: Vec<f64>,
    pub z: Vec<f64>,
    pub theta: Vec<f64>,
    pub y: Vec<f64>,
    pub xi: Vec<f64>,
    pub price: Vec<f64>,
    /// Realized final wealth.
    pub wealth: f64,
    /// First node where the bridge representation switched to its limit
    /// value because the integrating factor left the representable range
    /// (its inverse square enters the step covariances).
    pub lambda_floor_node: Option<usize>,
}

/// Left-point wealth accumulation over a complete bundle.
pub fn wealth(params: &ModelParams, bundle: &PathBundle) -> f64 {
    let m = bundle.price.len() - 1;
    let mut acc = 0.0;
    for k in 0..m {
        acc += bundle.theta[k] * (bundle.price[k + 1] - bundle.price[k]);
    }
    acc + (params.payoff.value(bundle.z[m]) - bundle.price[m]) * bundle.theta[m]
}

/// Discretized quadratic variation of a path.
pub fn quadratic_variation(xs: &[f64]) -> f64 {
    xs.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum()
}

// ---------------------------------------------------------------------------
// Precomputed stepping tables
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
enum PriceFast {
    Identity,
    Affine { a: f64, b: f64 },
    Cubic,
    Generic,
}

struct Tables {
    times: Vec<f64>,
    dt: Vec<f64>,
    sqrt_dt: Vec<f64>,
    /// Std dev of the exact firm-value increment per step.
    dz_sd: Vec<f64>,
    /// Remaining order-flow variance at each node.
    rho: Vec<f64>,
    /// Drift denominator at the step's left node (strategy specific).
    den: Vec<f64>,
    /// Weight over each step `(s_k, s_{k+1}]`.
    w_step: Vec<f64>,
    /// For the weighted target chaser: `w_i (t_i - s_k)` per step.
    tc_den: Vec<f64>,
    /// True when the node is a weighting breakpoint (anchor reset).
    is_anchor: Vec<bool>,
    price_fast: PriceFast,
    needs_target: bool,
    /// Node index of the block trade for `JumpAt`.
    jump_node: usize,
}

fn build_tables(
    params: &ModelParams,
    rule: &PricingRule,
    strategy: &StrategySpec,
    grid: &TimeGrid,
) -> Result<Tables> {
    // Compatibility: weighted strategies must match the rule's weighting.
    match (strategy.weighting(), rule.remaining.weighting()) {
        (Some(sw), Some(rw)) if sw == rw => {}
        (Some(_), _) => {
            return Err(Error::domain(
                "weighted strategy requires a weighted pricing rule with the same weighting",
            ))
        }
        (None, _) => {
            if matches!(
                strategy,
                StrategySpec::EquilibriumMarkov | StrategySpec::TargetChasing
            ) && rule.remaining.weighting().is_some()
            {
                return Err(Error::domain("Markovian strategy requires a Markovian rule"));
            }
        }
    }

    let times = grid.nodes().to_vec();
    let m = times.len() - 1;
    let mut dt = Vec::with_capacity(m);
    let mut sqrt_dt = Vec::with_capacity(m);
    let mut dz_sd = Vec::with_capacity(m);
    let mut rho = Vec::with_capacity(m + 1);
    for k in 0..m {
        let h = times[k + 1] - times[k];
        dt.push(h);
        sqrt_dt.push(h.sqrt());
        let dv = params.vol.cumulative(times[k + 1])? - params.vol.cumulative(times[k])?;
        dz_sd.push(dv.max(0.0).sqrt());
    }
    for &t in &times {
        rho.push(rule.rho(t));
    }

    let weighting = rule.remaining.weighting();
    let mut w_step = vec![1.0; m];
    let mut tc_den = vec![0.0; m];
    let mut is_anchor = vec![false; m + 1];
    if let Some(w) = weighting {
        for k in 0..m {
            let idx = w.interval_index(times[k + 1]);
            w_step[k] = w.weights()[idx];
            tc_den[k] = w.weights()[idx] * (w.partition()[idx + 1] - times[k]);
        }
        for &b in w.breakpoints() {
            if let Some(i) = grid.index_of(b) {
                is_anchor[i] = true;
            } else {
                return Err(Error::domain(format!("grid is missing breakpoint node {b}")));
            }
        }
    } else {
        for k in 0..m {
            tc_den[k] = 1.0 - times[k];
        }
    }

    // Drift denominator table for equilibrium strategies.
    let mut den = vec![0.0; m];
    match strategy {
        StrategySpec::EquilibriumMarkov => {
            let d = Denominator::markovian(params);
            for k in 0..m {
                den[k] = d.eval(times[k]);
            }
        }
        StrategySpec::EquilibriumNonMarkov { weighting } => {
            let d = Denominator::weighted(params, weighting);
            for k in 0..m {
                den[k] = d.eval(times[k]);
            }
        }
        _ => {}
    }

    let price_fast = match &rule.payoff {
        PayoffSpec::Identity => PriceFast::Identity,
        PayoffSpec::Affine { a, b } => PriceFast::Affine { a: *a, b: *b },
        PayoffSpec::Cubic => PriceFast::Cubic,
        _ => PriceFast::Generic,
    };
    let needs_target = matches!(
        strategy,
        StrategySpec::TargetChasing | StrategySpec::TargetChasingNonMarkov { .. }
    );
    let jump_node = match strategy {
        StrategySpec::JumpAt { time, .. } => grid.nearest(*time).max(1),
        _ => usize::MAX,
    };

    Ok(Tables {
        times,
        dt,
        sqrt_dt,
        dz_sd,
        rho,
        den,
        w_step,
        tc_den,
        is_anchor,
        price_fast,
        needs_target,
        jump_node,
    })
}

impl Tables {
    #[inline(always)]
    fn price_at(&self, rule: &PricingRule, xi: f64, k: usize) -> Result<f64> {
        match self.price_fast {
            PriceFast::Identity => Ok(xi),
            PriceFast::Affine { a, b } => Ok(a * xi + b),
            PriceFast::Cubic => Ok(xi * xi * xi + 3.0 * xi * self.rho[k]),
            PriceFast::Generic => rule.price(xi, self.times[k]),
        }
    }
}

/// Target process for the chasing strategies: the conditional expectation
/// of the level the rule must reach at the horizon. Coincides with `Z`
/// when the rule's terminal layer inverts the market payoff exactly.
struct TargetEval<'a> {
    params: &'a ModelParams,
    rule: &'a PricingRule,
    trivial: bool,
}

impl<'a> TargetEval<'a> {
    fn new(params: &'a ModelParams, rule: &'a PricingRule) -> Self {
        TargetEval { params, rule, trivial: rule.payoff == params.payoff }
    }

    /// `E[h_i^{-1}(F(Z_{t_i}, t_i)) | Z_t = z]` for the step's horizon.
    fn value(&self, z: f64, t: f64, horizon: f64) -> Result<f64> {
        if self.trivial {
            return Ok(z);
        }
        let var_h = self.params.vol.cumulative(horizon)? - self.params.vol.cumulative(t)?;
        let var_tail = self.params.vol.total() - self.params.vol.cumulative(horizon)?;
        let sd = var_h.max(0.0).sqrt();
        let mut err = None;
        let val = quad::expect_normal(32, |x| {
            let zh = z + sd * x;
            let fv = match crate::pricing::convolve(&self.params.payoff, zh, var_tail, 64) {
                Ok(v) => v,
                Err(e) => {
                    err = Some(e);
                    return 0.0;
                }
            };
            match self.rule.inverse_price(fv, horizon) {
                Ok(y) => y,
                Err(e) => {
                    err = Some(e);
                    0.0
                }
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(val),
        }
    }
}

// ---------------------------------------------------------------------------
// Euler engine
// ---------------------------------------------------------------------------

trait Recorder {
    fn init(&mut self, _n_nodes: usize, _v: f64) {}
    fn record(&mut self, _k: usize, _state: RecState) {}
}

#[derive(Clone, Copy)]
struct RecState {
    b1: f64,
    b2: f64,
    z: f64,
    theta: f64,
    y: f64,
    xi: f64,
    price: f64,
}

struct NullRecorder;
impl Recorder for NullRecorder {}

struct FullRecorder {
    v: f64,
    b1: Vec<f64>,
    b2: Vec<f64>,
    z: Vec<f64>,
    theta: Vec<f64>,
    y: Vec<f64>,
    xi: Vec<f64>,
    price: Vec<f64>,
}

impl Recorder for FullRecorder {
    fn init(&mut self, n: usize, v: f64) {
        self.v = v;
        for buf in [
            &mut self.b1,
            &mut self.b2,
            &mut self.z,
            &mut self.theta,
            &mut self.y,
            &mut self.xi,
            &mut self.price,
        ] {
            buf.clear();
            buf.reserve(n);
        }
    }

    fn record(&mut self, _k: usize, s: RecState) {
        self.b1.push(s.b1);
        self.b2.push(s.b2);
        self.z.push(s.z);
        self.theta.push(s.theta);
        self.y.push(s.y);
        self.xi.push(s.xi);
        self.price.push(s.price);
    }
}

/// Captures `(y, z, price)` at a fixed set of node indices.
struct ProbeRecorder<'a> {
    nodes: &'a [usize],
    next: usize,
    out: Vec<(f64, f64, f64)>,
}

impl Recorder for ProbeRecorder<'_> {
    fn init(&mut self, _n: usize, _v: f64) {
        self.next = 0;
        self.out.clear();
    }

    fn record(&mut self, k: usize, s: RecState) {
        if self.next < self.nodes.len() && self.nodes[self.next] == k {
            self.out.push((s.y, s.z, s.price));
            self.next += 1;
        }
    }
}

struct PathOutcome {
    wealth: f64,
    /// `|Y_1 - Z_1|` (Markovian) or `|xi - Z|` at each breakpoint
    /// including the terminal time (weighted).
    gaps: Vec<f64>,
}

fn euler_path<R: Recorder>(
    params: &ModelParams,
    rule: &PricingRule,
    strategy: &StrategySpec,
    tables: &Tables,
    seed_pair: (u64, u64),
    rec: &mut R,
) -> Result<PathOutcome> {
    let times = &tables.times;
    let m = times.len() - 1;
    let mut rng = CounterRng::for_path(seed_pair.0, seed_pair.1);
    let target = tables.needs_target.then(|| TargetEval::new(params, rule));

    let v = params.sigma * normal(&mut rng);
    let (mut b1, mut b2, mut z, mut theta) = (0.0f64, 0.0f64, v, 0.0f64);
    let (mut y, mut xi) = (0.0f64, 0.0f64);
    // On the first interval the weighted drift reads Z - alpha Y directly
    // (zero anchors); later intervals re-anchor at each breakpoint.
    let (mut anchor_z, mut anchor_y) = (0.0f64, 0.0f64);

    rec.init(m + 1, v);
    let mut price = tables.price_at(rule, xi, 0)?;
    let mut wealth_acc = 0.0f64;
    let mut gaps: Vec<f64> = Vec::new();
    rec.record(0, RecState { b1, b2, z, theta, y, xi, price });

    let weighting = rule.remaining.weighting();
    if let Some(w) = weighting {
        gaps.reserve(w.breakpoints().len());
    }

    for k in 0..m {
        if tables.is_anchor[k] {
            anchor_z = z;
            anchor_y = y;
            gaps.push((xi - z).abs());
        }
        let dt = tables.dt[k];
        let dtheta = match strategy {
            StrategySpec::Zero => 0.0,
            StrategySpec::BuyAndHold { quantity } => {
                if k == 0 {
                    *quantity
                } else {
                    0.0
                }
            }
            StrategySpec::JumpAt { size, .. } => {
                if k + 1 == tables.jump_node {
                    *size
                } else {
                    0.0
                }
            }
            StrategySpec::Diffusive { kappa } => kappa * tables.sqrt_dt[k] * normal(&mut rng),
            StrategySpec::EquilibriumMarkov => {
                let d = tables.den[k];
                if d <= 0.0 {
                    return Err(Error::Singularity { t: times[k], what: "pricing denominator".into() });
                }
                (z - y) / d * dt
            }
            StrategySpec::EquilibriumNonMarkov { .. } => {
                if tables.is_anchor[k] {
                    // Numerator and denominator both vanish at the anchor.
                    0.0
                } else {
                    let d = tables.den[k];
                    if d <= 0.0 {
                        return Err(Error::Singularity {
                            t: times[k],
                            what: "weighted pricing denominator".into(),
                        });
                    }
                    let alpha = tables.w_step[k];
                    ((z - anchor_z) - alpha * (y - anchor_y)) * alpha / d * dt
                }
            }
            StrategySpec::TargetChasing => {
                let x = target.as_ref().unwrap().value(z, times[k], 1.0)?;
                (x - y) / tables.tc_den[k] * dt
            }
            StrategySpec::TargetChasingNonMarkov { weighting } => {
                let idx = weighting.interval_index(times[k + 1]);
                let horizon = weighting.partition()[idx + 1];
                let x = target.as_ref().unwrap().value(z, times[k], horizon)?;
                (x - xi) / tables.tc_den[k] * dt
            }
        };
        let db2 = tables.sqrt_dt[k] * normal(&mut rng);
        let dz = if tables.dz_sd[k] > 0.0 { tables.dz_sd[k] * normal(&mut rng) } else { 0.0 };

        let theta_left = theta;
        theta += dtheta;
        b2 += db2;
        if tables.dz_sd[k] > 0.0 {
            b1 += tables.sqrt_dt[k] * dz / tables.dz_sd[k];
        }
        z += dz;
        y = theta + b2;
        xi += tables.w_step[k] * (dtheta + db2);

        let p_next = tables.price_at(rule, xi, k + 1)?;
        wealth_acc += theta_left * (p_next - price);
        price = p_next;
        if !(y.is_finite() && xi.is_finite() && price.is_finite()) {
            return Err(Error::numeric_at(k + 1, "path state not finite"));
        }
        rec.record(k + 1, RecState { b1, b2, z, theta, y, xi, price });
    }

    // Terminal term and terminal gap.
    let terminal = (params.payoff.value(z) - price) * theta;
    gaps.push(if weighting.is_some() { (xi - z).abs() } else { (y - z).abs() });
    Ok(PathOutcome { wealth: wealth_acc + terminal, gaps })
}

/// Simulates one full trajectory.
pub fn simulate_path(
    params: &ModelParams,
    rule: &PricingRule,
    strategy: &StrategySpec,
    grid: &TimeGrid,
    seed: u64,
) -> Result<PathBundle> {
    let tables = build_tables(params, rule, strategy, grid)?;
    let mut rec = FullRecorder {
        v: 0.0,
        b1: vec![],
        b2: vec![],
        z: vec![],
        theta: vec![],
        y: vec![],
        xi: vec![],
        price: vec![],
    };
    let out = euler_path(params, rule, strategy, &tables, (seed, 0), &mut rec)?;
    Ok(PathBundle {
        grid: grid.clone(),
        v: rec.v,
        b1: rec.b1,
        b2: rec.b2,
        z: rec.z,
        theta: rec.theta,
        y: rec.y,
        xi: rec.xi,
        price: rec.price,
        wealth: out.wealth,
        lambda_floor_node: None,
    })
}

// ---------------------------------------------------------------------------
// Exact bridge engine
// ---------------------------------------------------------------------------

/// Lower-triangular factor of a 2x2 covariance.
#[derive(Clone, Copy)]
struct Chol2 {
    l11: f64,
    l21: f64,
    l22: f64,
}

impl Chol2 {
    fn from_cov(v11: f64, c12: f64, v22: f64) -> Self {
        let l11 = v11.max(0.0).sqrt();
        let l21 = if l11 > 0.0 { c12 / l11 } else { 0.0 };
        let l22 = (v22 - l21 * l21).max(0.0).sqrt();
        Chol2 { l11, l21, l22 }
    }
}

struct BridgeTables {
    times: Vec<f64>,
    lambda: Vec<f64>,
    /// (B^2, M) increments factor per step, M = int lambda^{-1} dB^2.
    flow: Vec<Chol2>,
    /// (Z, N) increments factor per step, N = int sigma_z lambda^{-1} dB^1.
    firm: Vec<Chol2>,
    floor_node: Option<usize>,
}

const LAMBDA_FLOOR: f64 = 1e-120;

fn bridge_tables(params: &ModelParams, grid: &TimeGrid) -> Result<BridgeTables> {
    let den = Denominator::markovian(params);
    if let Some(&r) = den.roots_in(0.0, 1.0).first() {
        return Err(Error::Singularity { t: r, what: "pricing denominator".into() });
    }
    let times = grid.nodes().to_vec();
    let m = times.len() - 1;

    // Constant-vol fast path: lambda(t) = (1 - t)^q with q = 1/(1 - c).
    let knots = params.vol.knots();
    let const_vol = knots.iter().all(|&(_, v)| v == knots[0].1);
    let c = knots[0].1;

    let mut lambda = Vec::with_capacity(m + 1);
    let mut flow = Vec::with_capacity(m);
    let mut firm = Vec::with_capacity(m);
    let mut floor_node = None;

    if const_vol {
        let q = 1.0 / (1.0 - c);
        let pw = |t: f64, p: f64| (1.0 - t).powf(p);
        // int_a^b (1-s)^{-p} ds for p != 1.
        let int_pow = |a: f64, b: f64, p: f64| (pw(b, 1.0 - p) - pw(a, 1.0 - p)) / (p - 1.0);
        for &t in &times {
            lambda.push(pw(t, q));
        }
        for k in 0..m {
            let (a, b) = (times[k], times[k + 1]);
            let dt = b - a;
            let plain = b >= 1.0 || lambda[k + 1] < LAMBDA_FLOOR;
            if plain {
                // The weighted integrals diverge (or the factor underflowed);
                // draw plain increments and close the bridge by its limit.
                if b < 1.0 {
                    floor_node.get_or_insert(k + 1);
                }
                flow.push(Chol2 { l11: dt.sqrt(), l21: 0.0, l22: 0.0 });
                firm.push(Chol2 { l11: (c * dt).sqrt(), l21: 0.0, l22: 0.0 });
                continue;
            }
            let i1 = if q == 1.0 { ((1.0 - a) / (1.0 - b)).ln() } else { int_pow(a, b, q) };
            let i2 = int_pow(a, b, 2.0 * q);
            flow.push(Chol2::from_cov(dt, i1, i2));
            firm.push(Chol2::from_cov(c * dt, c * i1, c * i2));
        }
    } else {
        // General schedule: lambda accumulated step by step, weighted
        // integrals by per-step quadrature (lambda is smooth inside a step).
        lambda.push(1.0);
        let mut log_inv = 0.0f64; // int_0^a 1/D
        for k in 0..m {
            let (a, b) = (times[k], times[k + 1]);
            let dt = b - a;
            let dv = params.vol.cumulative(b)? - params.vol.cumulative(a)?;
            let lam_a = (-log_inv).exp();
            if b >= 1.0 || lam_a < LAMBDA_FLOOR {
                if b < 1.0 {
                    floor_node.get_or_insert(k);
                }
                flow.push(Chol2 { l11: dt.sqrt(), l21: 0.0, l22: 0.0 });
                firm.push(Chol2 { l11: dv.sqrt(), l21: 0.0, l22: 0.0 });
                lambda.push(0.0);
                continue;
            }
            // lambda(s) in absolute terms via the step-local integral.
            let local = |s: f64| -> f64 {
                let i = quad::adaptive(|u| 1.0 / den.eval(u), a, s, 1e-10, 0.0).unwrap_or(f64::NAN);
                (-(log_inv + i)).exp()
            };
            let i1 = quad::adaptive(|s| 1.0 / local(s), a, b, 1e-9, 0.0)?;
            let i2 = quad::adaptive(|s| 1.0 / (local(s) * local(s)), a, b, 1e-9, 0.0)?;
            let j1 = quad::adaptive(|s| params.vol.sigma_sq(s) / local(s), a, b, 1e-9, 0.0)?;
            let j2 =
                quad::adaptive(|s| params.vol.sigma_sq(s) / (local(s) * local(s)), a, b, 1e-9, 0.0)?;
            flow.push(Chol2::from_cov(dt, i1, i2));
            firm.push(Chol2::from_cov(dv, j1, j2));
            log_inv += quad::adaptive(|u| 1.0 / den.eval(u), a, b, 1e-10, 0.0)?;
            lambda.push((-log_inv).exp());
        }
    }
    Ok(BridgeTables { times, lambda, flow, firm, floor_node })
}

/// Simulates the equilibrium total order from its closed-form bridge
/// representation: `Y_t = Z_t + lambda(t) (-v + int lambda^{-1} dB^2 -
/// int sigma_z lambda^{-1} dB^1)`, with exact per-step Gaussian increments
/// and the terminal value closed by the vanishing-factor limit `Y_1 = Z_1`.
pub fn exact_bridge_path(
    params: &ModelParams,
    rule: &PricingRule,
    grid: &TimeGrid,
    seed: u64,
) -> Result<PathBundle> {
    let tables = bridge_tables(params, grid)?;
    bridge_path_with(params, rule, &tables, (seed, 0))
}

fn bridge_path_with(
    params: &ModelParams,
    rule: &PricingRule,
    tables: &BridgeTables,
    seed_pair: (u64, u64),
) -> Result<PathBundle> {
    if rule.remaining.weighting().is_some() {
        return Err(Error::domain("the bridge representation is Markovian"));
    }
    let times = &tables.times;
    let m = times.len() - 1;
    let mut rng = CounterRng::for_path(seed_pair.0, seed_pair.1);
    let v = params.sigma * normal(&mut rng);

    let mut b1 = vec![0.0; m + 1];
    let mut b2 = vec![0.0; m + 1];
    let mut z = vec![0.0; m + 1];
    let mut y = vec![0.0; m + 1];
    z[0] = v;
    let (mut mm, mut nn) = (0.0f64, 0.0f64);
    for k in 0..m {
        let f = tables.flow[k];
        let (e1, e2) = (normal(&mut rng), normal(&mut rng));
        let db2 = f.l11 * e1;
        let dm = f.l21 * e1 + f.l22 * e2;
        let g = tables.firm[k];
        let (dz, dn) = if g.l11 > 0.0 || g.l22 > 0.0 {
            let (u1, u2) = (normal(&mut rng), normal(&mut rng));
            (g.l11 * u1, g.l21 * u1 + g.l22 * u2)
        } else {
            (0.0, 0.0)
        };
        b2[k + 1] = b2[k] + db2;
        b1[k + 1] = b1[k]
            + if tables.firm[k].l11 > 0.0 {
                (times[k + 1] - times[k]).sqrt() * dz / tables.firm[k].l11
            } else {
                0.0
            };
        z[k + 1] = z[k] + dz;
        mm += dm;
        nn += dn;
        let lam = tables.lambda[k + 1];
        let floored = tables.floor_node.map(|f| k + 1 > f).unwrap_or(false);
        y[k + 1] = if k + 1 == m || lam == 0.0 || floored {
            z[k + 1]
        } else {
            z[k + 1] + lam * (-v + mm - nn)
        };
    }
    let theta: Vec<f64> = y.iter().zip(&b2).map(|(yy, bb)| yy - bb).collect();
    let xi = y.clone();
    let mut price = Vec::with_capacity(m + 1);
    for k in 0..=m {
        price.push(rule.price(xi[k], times[k])?);
    }
    let mut bundle = PathBundle {
        grid: TimeGrid::from_nodes(times.clone())?,
        v,
        b1,
        b2,
        z,
        theta,
        y,
        xi,
        price,
        wealth: 0.0,
        lambda_floor_node: tables.floor_node,
    };
    bundle.wealth = wealth(params, &bundle);
    Ok(bundle)
}

// ---------------------------------------------------------------------------
// Monte Carlo
// ---------------------------------------------------------------------------

/// Distribution summary of per-path absolute gaps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapStats {
    pub at_time: f64,
    pub mean: f64,
    pub q50: f64,
    pub q90: f64,
    pub max: f64,
    pub samples: usize,
}

fn gap_stats(at_time: f64, mut gaps: Vec<f64>) -> GapStats {
    gaps.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = gaps.len();
    let mean = gaps.iter().sum::<f64>() / n.max(1) as f64;
    let pick = |q: f64| gaps[(((n - 1) as f64) * q).round() as usize];
    GapStats {
        at_time,
        mean,
        q50: pick(0.5),
        q90: pick(0.9),
        max: *gaps.last().unwrap_or(&0.0),
        samples: n,
    }
}

/// Monte Carlo profit and bridge statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfitStats {
    pub strategy: String,
    pub n_paths: usize,
    pub base_seed: u64,
    pub grid_nodes: usize,
    pub mean_wealth: f64,
    pub stderr: f64,
    /// Terminal gap `|Y_1 - Z_1|` (or `|xi_1 - Z_1|`), plus one entry per
    /// interior breakpoint for weighted rules.
    pub bridge: Vec<GapStats>,
}

/// Runs `n_paths` independent paths and aggregates wealth and bridge gaps.
///
/// Per-path seeds derive from `(base_seed, path index)` through the
/// counter-based generator, and the reduction runs in index order over the
/// collected outcomes, so the result is independent of the parallel
/// execution order.
pub fn monte_carlo(
    params: &ModelParams,
    rule: &PricingRule,
    strategy: &StrategySpec,
    grid: &TimeGrid,
    n_paths: usize,
    base_seed: u64,
) -> Result<ProfitStats> {
    if n_paths < 2 {
        return Err(Error::domain("monte carlo needs at least 2 paths"));
    }
    let tables = build_tables(params, rule, strategy, grid)?;
    let outcomes: Vec<Result<PathOutcome>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            euler_path(params, rule, strategy, &tables, (base_seed, i as u64), &mut NullRecorder)
                .map_err(|e| match e {
                    Error::Numeric { what, node } => Error::Numeric {
                        what: format!("path {i}: {what}"),
                        node,
                    },
                    other => other,
                })
        })
        .collect();

    let mut wealths = Vec::with_capacity(n_paths);
    let mut gap_cols: Vec<Vec<f64>> = Vec::new();
    for out in outcomes {
        let out = out?;
        wealths.push(out.wealth);
        if gap_cols.is_empty() {
            gap_cols = vec![Vec::with_capacity(n_paths); out.gaps.len()];
        }
        for (col, g) in gap_cols.iter_mut().zip(&out.gaps) {
            col.push(*g);
        }
    }
    let (mean, se) = stats::mean_stderr(&wealths);
    let gap_times: Vec<f64> = match rule.remaining.weighting() {
        Some(w) => w.breakpoints().to_vec(),
        None => vec![1.0],
    };
    let bridge = gap_cols
        .into_iter()
        .zip(gap_times)
        .map(|(col, t)| gap_stats(t, col))
        .collect();
    Ok(ProfitStats {
        strategy: strategy.name(),
        n_paths,
        base_seed,
        grid_nodes: grid.len(),
        mean_wealth: mean,
        stderr: se,
        bridge,
    })
}

/// Per-path wealth vector (for determinism checks and custom reductions).
pub fn wealth_vector(
    params: &ModelParams,
    rule: &PricingRule,
    strategy: &StrategySpec,
    grid: &TimeGrid,
    n_paths: usize,
    base_seed: u64,
) -> Result<Vec<f64>> {
    let tables = build_tables(params, rule, strategy, grid)?;
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            euler_path(params, rule, strategy, &tables, (base_seed, i as u64), &mut NullRecorder)
                .map(|o| o.wealth)
        })
        .collect()
}

/// `(y, z, price)` snapshots at probe times across an ensemble.
#[derive(Debug, Clone)]
pub struct ProbeEnsemble {
    pub probe_times: Vec<f64>,
    /// `values[path][probe] = (y, z, price)`.
    pub values: Vec<Vec<(f64, f64, f64)>>,
}

/// Simulates an ensemble capturing state at the probe times only. The grid
/// must contain every probe time as a node.
pub fn probe_ensemble(
    params: &ModelParams,
    rule: &PricingRule,
    strategy: &StrategySpec,
    grid: &TimeGrid,
    probe_times: &[f64],
    n_paths: usize,
    base_seed: u64,
) -> Result<ProbeEnsemble> {
    let tables = build_tables(params, rule, strategy, grid)?;
    let mut nodes = Vec::with_capacity(probe_times.len());
    for &t in probe_times {
        nodes.push(
            grid.index_of(t)
                .ok_or_else(|| Error::domain(format!("probe time {t} is not a grid node")))?,
        );
    }
    nodes.sort_unstable();
    let values: Vec<Result<Vec<(f64, f64, f64)>>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rec = ProbeRecorder { nodes: &nodes, next: 0, out: Vec::new() };
            euler_path(params, rule, strategy, &tables, (base_seed, i as u64), &mut rec)?;
            Ok(rec.out)
        })
        .collect();
    let mut out = Vec::with_capacity(n_paths);
    for v in values {
        out.push(v?);
    }
    let mut times: Vec<f64> = nodes.iter().map(|&k| grid.nodes()[k]).collect();
    times.dedup();
    Ok(ProbeEnsemble { probe_times: times, values: out })
}

/// Grid refinement marks for a Markovian scenario: the terminal time with
/// the local rate `1 / |D'(1)| = 1 / (1 - sigma_z^2(1))`.
pub fn markov_refine_marks(params: &ModelParams) -> Vec<RefineMark> {
    let slope = 1.0 - params.vol.sigma_sq(1.0);
    vec![RefineMark::terminal(1.0 / slope.max(1e-6))]
}

/// Refinement marks for a weighted rule: every breakpoint, with left/right
/// rates from the local slope of the weighted denominator.
pub fn weighted_refine_marks(params: &ModelParams, w: &WeightingFunction) -> Vec<RefineMark> {
    let mut out = Vec::new();
    let n = w.n_intervals();
    for i in 1..=n {
        let t = w.partition()[i];
        let alpha_l = w.weights()[i - 1];
        let slope_l = (alpha_l * alpha_l - left_sigma_sq(params, t)).max(1e-6);
        let rate_left = alpha_l * alpha_l / slope_l;
        let rate_right = (i < n).then(|| {
            let alpha_r = w.weights()[i];
            let slope_r = (params.vol.sigma_sq(t) - alpha_r * alpha_r).max(1e-6);
            alpha_r * alpha_r / slope_r
        });
        out.push(RefineMark { time: t, rate_left, rate_right });
    }
    out
}

fn left_sigma_sq(params: &ModelParams, t: f64) -> f64 {
    params.vol.sigma_sq(t - 1e-12)
}
