//! Market primitives and feasibility checks.
//!
//! The market's exogenous data is a prior dispersion `sigma`, a firm
//! volatility schedule `sigma_z^2(t)` (piecewise linear, so its integral
//! `Sigma_z(t)` is available in closed form), and a strictly increasing
//! payoff `f`. The payoff normalization ties the prior to the schedule:
//!
//! ```text
//! sigma^2 = 1 - Sigma_z(1)
//! ```
//!
//! so the terminal firm value is standard normal. Everything downstream
//! (pricing denominators, filter variances, weighting constructions) is a
//! piecewise-quadratic function of time built from this data; this module
//! exposes those pieces exactly (roots and minima by quadratic formula,
//! not sampling) plus the quadrature-based feasibility checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{self, Improper};

/// Tolerance for the prior/schedule normalization at construction.
pub const NORMALIZATION_TOL: f64 = 1e-12;
/// Breakpoint residual tolerance for weighting constructions.
pub const BREAKPOINT_RESIDUAL_TOL: f64 = 1e-10;
/// Threshold for the terminal-limit trend check.
pub const LIMIT_TREND_TOL: f64 = 1e-3;

const RTOL: f64 = 1e-10;

// ---------------------------------------------------------------------------
// Volatility schedule
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
struct Seg {
    t0: f64,
    t1: f64,
    v0: f64,
    v1: f64,
    /// Cumulative integral up to `t0`.
    cum0: f64,
}

/// Piecewise-linear squared volatility `sigma_z^2(t)` on `[0, 1]`.
///
/// Knots are `(time, sigma_z^2)` pairs with nondecreasing times; a repeated
/// time encodes a jump (the schedule is right-continuous there). Between
/// distinct times the value is linear, so the cumulative variance is an
/// exact piecewise quadratic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct VolatilitySpec {
    knots: Vec<(f64, f64)>,
    #[serde(skip)]
    segs: Vec<Seg>,
}

impl TryFrom<Vec<(f64, f64)>> for VolatilitySpec {
    type Error = Error;
    fn try_from(knots: Vec<(f64, f64)>) -> Result<Self> {
        VolatilitySpec::new(knots)
    }
}

impl From<VolatilitySpec> for Vec<(f64, f64)> {
    fn from(v: VolatilitySpec) -> Self {
        v.knots
    }
}

impl VolatilitySpec {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::domain("volatility spec needs at least two knots"));
        }
        if knots[0].0 != 0.0 {
            return Err(Error::domain("first knot time must be 0"));
        }
        if knots[knots.len() - 1].0 != 1.0 {
            return Err(Error::domain("last knot time must be 1"));
        }
        let mut dup_run = 1usize;
        for w in knots.windows(2) {
            if w[1].0 < w[0].0 {
                return Err(Error::domain("knot times must be nondecreasing"));
            }
            if w[1].0 == w[0].0 {
                dup_run += 1;
                if dup_run > 2 {
                    return Err(Error::domain("more than two knots at the same time"));
                }
            } else {
                dup_run = 1;
            }
        }
        for &(t, v) in &knots {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::domain(format!("sigma_z^2({t}) = {v} must be >= 0")));
            }
        }
        // Build linear segments between distinct times; duplicates switch the
        // left value out for the right one (a jump).
        let mut segs = Vec::new();
        let mut cum = 0.0;
        let mut i = 0;
        while i + 1 < knots.len() {
            let (t0, v0) = knots[i];
            let (t1, v1) = knots[i + 1];
            if t1 == t0 {
                i += 1;
                continue;
            }
            segs.push(Seg { t0, t1, v0, v1, cum0: cum });
            cum += 0.5 * (v0 + v1) * (t1 - t0);
            i += 1;
        }
        if segs.is_empty() {
            return Err(Error::domain("volatility spec has no segment of positive length"));
        }
        Ok(VolatilitySpec { knots, segs })
    }

    /// Identically zero schedule (static firm value).
    pub fn zero() -> Self {
        Self::new(vec![(0.0, 0.0), (1.0, 0.0)]).unwrap()
    }

    /// Constant `sigma_z^2 = c`.
    pub fn constant(c: f64) -> Result<Self> {
        Self::new(vec![(0.0, c), (1.0, c)])
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    fn seg_index(&self, t: f64) -> usize {
        // Last segment whose start is <= t: right-continuous at jumps.
        self.segs.iter().rposition(|s| s.t0 <= t).unwrap_or(0)
    }

    /// `sigma_z^2(t)`, right-continuous at jump times.
    pub fn sigma_sq(&self, t: f64) -> f64 {
        let s = self.segs[self.seg_index(t.clamp(0.0, 1.0))];
        let u = (t.clamp(s.t0, s.t1) - s.t0) / (s.t1 - s.t0);
        s.v0 + (s.v1 - s.v0) * u
    }

    /// Cumulative variance `Sigma_z(t)` in closed form.
    pub fn cumulative(&self, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::domain(format!("time {t} outside [0, 1]")));
        }
        let s = self.segs[self.seg_index(t)];
        let u = t - s.t0;
        let slope = (s.v1 - s.v0) / (s.t1 - s.t0);
        Ok(s.cum0 + s.v0 * u + 0.5 * slope * u * u)
    }

    /// `Sigma_z(1)`.
    pub fn total(&self) -> f64 {
        self.cumulative(1.0).unwrap()
    }

    /// Times in `(0, 1]` where the schedule jumps.
    pub fn jump_times(&self) -> Vec<f64> {
        self.knots
            .windows(2)
            .filter(|w| w[1].0 == w[0].0 && w[1].1 != w[0].1)
            .map(|w| w[0].0)
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Payoff
// ---------------------------------------------------------------------------

/// Terminal payoff family `f`. All families are strictly increasing on
/// their evaluation range; the monotone table extrapolates by constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum PayoffSpec {
    Identity,
    Affine { a: f64, b: f64 },
    Cubic,
    Exp { scale: f64, rate: f64 },
    Table { points: Vec<(f64, f64)> },
}

impl PayoffSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            PayoffSpec::Identity | PayoffSpec::Cubic => Ok(()),
            PayoffSpec::Affine { a, .. } => {
                if *a > 0.0 {
                    Ok(())
                } else {
                    Err(Error::domain(format!("affine slope a = {a} must be > 0")))
                }
            }
            PayoffSpec::Exp { scale, rate } => {
                if scale * rate > 0.0 {
                    Ok(())
                } else {
                    Err(Error::domain("exp payoff needs scale * rate > 0 to be increasing"))
                }
            }
            PayoffSpec::Table { points } => {
                if points.len() < 2 {
                    return Err(Error::domain("table payoff needs at least two points"));
                }
                for w in points.windows(2) {
                    if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
                        return Err(Error::domain(
                            "table payoff must be strictly increasing in x and f(x)",
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    /// `f(x)`.
    pub fn value(&self, x: f64) -> f64 {
        match self {
            PayoffSpec::Identity => x,
            PayoffSpec::Affine { a, b } => a * x + b,
            PayoffSpec::Cubic => x * x * x,
            PayoffSpec::Exp { scale, rate } => scale * (rate * x).exp(),
            PayoffSpec::Table { points } => {
                let n = points.len();
                if x <= points[0].0 {
                    return points[0].1;
                }
                if x >= points[n - 1].0 {
                    return points[n - 1].1;
                }
                let i = points.partition_point(|p| p.0 <= x) - 1;
                let (x0, y0) = points[i];
                let (x1, y1) = points[i + 1];
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
        }
    }

    /// Closed-form inverse of `f` where available.
    pub(crate) fn inverse_closed(&self, p: f64) -> Option<f64> {
        match self {
            PayoffSpec::Identity => Some(p),
            PayoffSpec::Affine { a, b } => Some((p - b) / a),
            PayoffSpec::Cubic => Some(p.cbrt()),
            PayoffSpec::Exp { scale, rate } => {
                let r = p / scale;
                (r > 0.0).then(|| r.ln() / rate)
            }
            PayoffSpec::Table { .. } => None,
        }
    }

    /// Gaussian convolution `E[f(y + sqrt(var) N)]` in closed form where the
    /// family admits one (polynomials up to cubic).
    pub(crate) fn convolve_closed(&self, y: f64, var: f64) -> Option<f64> {
        match self {
            PayoffSpec::Identity => Some(y),
            PayoffSpec::Affine { a, b } => Some(a * y + b),
            PayoffSpec::Cubic => Some(y * y * y + 3.0 * y * var),
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Weighting function
// ---------------------------------------------------------------------------

/// Piecewise-constant order-flow weighting: weight `w_i > 0` on the
/// half-open interval `(t_{i-1}, t_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightingFunction {
    partition: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightingFunction {
    pub fn new(partition: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        validate_partition(&partition)?;
        if weights.len() != partition.len() - 1 {
            return Err(Error::domain(format!(
                "{} weights for {} intervals",
                weights.len(),
                partition.len() - 1
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::domain("weights must be strictly positive"));
        }
        Ok(WeightingFunction { partition, weights })
    }

    /// The Markovian case: a single interval with unit weight.
    pub fn markovian() -> Self {
        WeightingFunction { partition: vec![0.0, 1.0], weights: vec![1.0] }
    }

    pub fn partition(&self) -> &[f64] {
        &self.partition
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_intervals(&self) -> usize {
        self.weights.len()
    }

    /// Interior breakpoints plus the terminal time (`t_1 .. t_n`).
    pub fn breakpoints(&self) -> &[f64] {
        &self.partition[1..]
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.weights.windows(2).all(|w| w[1] > w[0])
    }

    /// Index `i` with `t` in `(t_{i-1}, t_i]`; `t = 0` maps to the first.
    pub fn interval_index(&self, t: f64) -> usize {
        if t <= self.partition[0] {
            return 0;
        }
        let i = self.partition.partition_point(|&p| p < t);
        (i - 1).min(self.weights.len() - 1)
    }

    /// `w(t)` with the half-open convention.
    pub fn weight_at(&self, t: f64) -> f64 {
        self.weights[self.interval_index(t)]
    }

    /// `int_0^t w^2(s) ds`, exact.
    pub fn integral_sq(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            let a = self.partition[i];
            let b = self.partition[i + 1];
            if t <= a {
                break;
            }
            acc += w * w * (t.min(b) - a);
        }
        acc
    }

    /// Remaining variance `int_t^1 w^2(s) ds`.
    pub fn remaining_sq(&self, t: f64) -> f64 {
        self.integral_sq(1.0) - self.integral_sq(t)
    }

    /// `sum_i w_i^2` (recorded for diagnostics; the equilibrium construction
    /// normalizes `int_0^1 w^2 = Sigma_z(1) + sigma^2` instead).
    pub fn sum_sq_weights(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }
}

fn validate_partition(partition: &[f64]) -> Result<()> {
    if partition.len() < 2 {
        return Err(Error::domain("partition needs at least {0, 1}"));
    }
    if partition[0] != 0.0 || partition[partition.len() - 1] != 1.0 {
        return Err(Error::domain("partition must start at 0 and end at 1"));
    }
    for w in partition.windows(2) {
        if w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::domain(format!(
                "partition times must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Piecewise-quadratic denominators
// ---------------------------------------------------------------------------

/// One quadratic piece `c0 + c1 u + c2 u^2`, `u = s - a`, on `[a, b]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct QuadPiece {
    pub a: f64,
    pub b: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl QuadPiece {
    fn eval(&self, s: f64) -> f64 {
        let u = s - self.a;
        self.c0 + (self.c1 + self.c2 * u) * u
    }

    /// Real roots inside `(lo, hi)` (open), in increasing order.
    fn roots_in(&self, lo: f64, hi: f64, out: &mut Vec<f64>) {
        let push = |r: f64, out: &mut Vec<f64>| {
            let s = self.a + r;
            if s > lo + ROOT_EPS && s < hi - ROOT_EPS {
                out.push(s);
            }
        };
        if self.c2.abs() < 1e-300 {
            if self.c1.abs() > 1e-300 {
                push(-self.c0 / self.c1, out);
            }
            return;
        }
        let disc = self.c1 * self.c1 - 4.0 * self.c2 * self.c0;
        if disc < 0.0 {
            return;
        }
        let sq = disc.sqrt();
        // Numerically stable pair.
        let q = -0.5 * (self.c1 + self.c1.signum() * sq);
        let mut r1 = if self.c1 == 0.0 { -sq / (2.0 * self.c2) } else { q / self.c2 };
        let mut r2 = if q.abs() > 1e-300 { self.c0 / q } else { sq / (2.0 * self.c2) };
        if r1 > r2 {
            std::mem::swap(&mut r1, &mut r2);
        }
        push(r1, out);
        if disc > 0.0 {
            push(r2, out);
        }
    }

    /// Minimum over `[lo, hi] ∩ [a, b]` and its location.
    fn min_on(&self, lo: f64, hi: f64) -> (f64, f64) {
        let lo = lo.max(self.a);
        let hi = hi.min(self.b);
        let mut best = (self.eval(lo), lo);
        let at_hi = self.eval(hi);
        if at_hi < best.0 {
            best = (at_hi, hi);
        }
        if self.c2 > 0.0 {
            let u = -self.c1 / (2.0 * self.c2);
            let s = self.a + u;
            if s > lo && s < hi {
                let v = self.eval(s);
                if v < best.0 {
                    best = (v, s);
                }
            }
        }
        best
    }
}

const ROOT_EPS: f64 = 1e-13;

/// Exact piecewise-quadratic view of `Sigma_z(s) + sigma^2 - int_0^s r(u) du`
/// for a piecewise-constant drain rate `r` (1 in the Markovian case, `w^2`
/// for weighted rules).
#[derive(Debug, Clone)]
pub(crate) struct Denominator {
    pieces: Vec<QuadPiece>,
}

impl Denominator {
    pub(crate) fn markovian(params: &ModelParams) -> Self {
        Self::build(params, &[(0.0, 1.0, 1.0)])
    }

    pub(crate) fn weighted(params: &ModelParams, w: &WeightingFunction) -> Self {
        let drain: Vec<(f64, f64, f64)> = (0..w.n_intervals())
            .map(|i| (w.partition()[i], w.partition()[i + 1], w.weights()[i] * w.weights()[i]))
            .collect();
        Self::build(params, &drain)
    }

    fn build(params: &ModelParams, drain: &[(f64, f64, f64)]) -> Self {
        let mut cuts: Vec<f64> = vec![0.0, 1.0];
        for s in &params.vol.segs {
            cuts.push(s.t0);
            cuts.push(s.t1);
        }
        for &(a, b, _) in drain {
            cuts.push(a);
            cuts.push(b);
        }
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-15);

        let sig2 = params.sigma * params.sigma;
        let mut pieces = Vec::with_capacity(cuts.len() - 1);
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let rate = drain
                .iter()
                .find(|&&(lo, hi, _)| a >= lo && a < hi)
                .map(|&(_, _, r)| r)
                .unwrap_or(0.0);
            // The piece lies inside one volatility segment (cuts include all
            // segment boundaries), so its slope is exact.
            let seg = params.vol.segs[params.vol.seg_index(a)];
            let v0 = params.vol.sigma_sq(a);
            let slope = (seg.v1 - seg.v0) / (seg.t1 - seg.t0);
            let c0 = params.vol.cumulative(a).unwrap() + sig2
                - drain
                    .iter()
                    .map(|&(lo, hi, r)| r * ((a.min(hi) - lo).max(0.0)))
                    .sum::<f64>();
            pieces.push(QuadPiece { a, b, c0, c1: v0 - rate, c2: 0.5 * slope });
        }
        Denominator { pieces }
    }

    pub(crate) fn eval(&self, s: f64) -> f64 {
        let i = self
            .pieces
            .iter()
            .rposition(|p| p.a <= s)
            .unwrap_or(0);
        self.pieces[i].eval(s)
    }

    /// Roots strictly inside `(lo, hi)`, sorted, deduplicated.
    pub(crate) fn roots_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for p in &self.pieces {
            if p.b <= lo || p.a >= hi {
                continue;
            }
            p.roots_in(lo.max(p.a) - 1e-300, hi.min(p.b) + 1e-300, &mut out);
        }
        out.retain(|&r| r > lo + ROOT_EPS && r < hi - ROOT_EPS);
        out.sort_by(|x, y| x.partial_cmp(y).unwrap());
        out.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
        out
    }

    /// Exact minimum over `[lo, hi]` and its location.
    pub(crate) fn min_on(&self, lo: f64, hi: f64) -> (f64, f64) {
        let mut best = (f64::INFINITY, lo);
        for p in &self.pieces {
            if p.b < lo || p.a > hi {
                continue;
            }
            let (v, at) = p.min_on(lo, hi);
            if v < best.0 {
                best = (v, at);
            }
        }
        best
    }
}

// ---------------------------------------------------------------------------
// Model parameters
// ---------------------------------------------------------------------------

/// Market exogenous data: prior standard deviation, volatility schedule,
/// terminal payoff. Construction enforces the normalization
/// `sigma^2 = 1 - Sigma_z(1)` and square-integrability of the payoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelParamsRaw", into = "ModelParamsRaw")]
pub struct ModelParams {
    pub sigma: f64,
    pub vol: VolatilitySpec,
    pub payoff: PayoffSpec,
}

#[derive(Serialize, Deserialize)]
struct ModelParamsRaw {
    sigma: f64,
    vol: VolatilitySpec,
    payoff: PayoffSpec,
}

impl TryFrom<ModelParamsRaw> for ModelParams {
    type Error = Error;
    fn try_from(r: ModelParamsRaw) -> Result<Self> {
        ModelParams::new(r.sigma, r.vol, r.payoff)
    }
}

impl From<ModelParams> for ModelParamsRaw {
    fn from(p: ModelParams) -> Self {
        ModelParamsRaw { sigma: p.sigma, vol: p.vol, payoff: p.payoff }
    }
}

impl ModelParams {
    pub fn new(sigma: f64, vol: VolatilitySpec, payoff: PayoffSpec) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::domain(format!("sigma = {sigma} must be > 0")));
        }
        let total = vol.total();
        if !total.is_finite() {
            return Err(Error::domain("total firm variance is not finite"));
        }
        let gap = (sigma * sigma - (1.0 - total)).abs();
        if gap > NORMALIZATION_TOL {
            return Err(Error::Construction(format!(
                "normalization sigma^2 = 1 - Sigma_z(1) violated by {gap:.3e} \
                 (sigma^2 = {}, Sigma_z(1) = {total})",
                sigma * sigma
            )));
        }
        payoff.validate()?;
        // Terminal firm value is N(0,1) under the normalization; reject
        // payoffs whose second moment does not evaluate finitely.
        let ef2 = quad::expect_normal(64, |x| {
            let f = payoff.value(x);
            f * f
        });
        if !ef2.is_finite() {
            return Err(Error::numeric("E[f^2(Z_1)] does not evaluate finitely"));
        }
        Ok(ModelParams { sigma, vol, payoff })
    }

    /// Prior variance `sigma^2`.
    pub fn sigma_sq(&self) -> f64 {
        self.sigma * self.sigma
    }

    /// `Sigma_z(t) = int_0^t sigma_z^2` (exact).
    pub fn cumulative_variance(&self, t: f64) -> Result<f64> {
        self.vol.cumulative(t)
    }

    /// `Sigma_z(t) - t + sigma^2`, the Markovian pricing denominator and the
    /// market maker's posterior variance in equilibrium.
    pub fn markov_denominator(&self, t: f64) -> Result<f64> {
        Ok(self.cumulative_variance(t)? - t + self.sigma_sq())
    }

    fn require_no_crossing(&self, den: &Denominator, t: f64) -> Result<()> {
        if let Some(&r) = den.roots_in(0.0, t).first() {
            return Err(Error::Singularity {
                t: r,
                what: "Sigma_z(s) + sigma^2 - s".into(),
            });
        }
        if den.eval(0.5 * t.max(1e-12)) <= 0.0 {
            return Err(Error::Singularity { t: 0.0, what: "Sigma_z(s) + sigma^2 - s".into() });
        }
        Ok(())
    }

    /// `lambda(t) = exp(-int_0^t ds / (Sigma_z + sigma^2 - s))`, for `t < 1`.
    pub fn lambda_of_t(&self, t: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&t) {
            return Err(Error::domain(format!("lambda requires 0 <= t < 1, got {t}")));
        }
        if t == 0.0 {
            return Ok(1.0);
        }
        let den = Denominator::markovian(self);
        self.require_no_crossing(&den, t)?;
        let integral = quad::adaptive(|s| 1.0 / den.eval(s), 0.0, t, RTOL, 0.0)?;
        Ok((-integral).exp())
    }

    /// `Xi(t) = int_0^t (1 + sigma_z^2(s)) / lambda^2(s) ds`, for `t < 1`.
    pub fn xi_of_t(&self, t: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&t) {
            return Err(Error::domain(format!("xi requires 0 <= t < 1, got {t}")));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        let den = Denominator::markovian(self);
        self.require_no_crossing(&den, t)?;
        let lambda_sq = |s: f64| -> f64 {
            if s == 0.0 {
                return 1.0;
            }
            let i = quad::adaptive(|u| 1.0 / den.eval(u), 0.0, s, RTOL, 0.0).unwrap_or(f64::NAN);
            (-2.0 * i).exp()
        };
        quad::adaptive(
            |s| (1.0 + self.vol.sigma_sq(s)) / lambda_sq(s),
            0.0,
            t,
            1e-9,
            0.0,
        )
    }

    /// Runs the full Markovian feasibility battery.
    ///
    /// `probe_resolution` bounds the dyadic sampling of the terminal limit
    /// trend (`t = 1 - 2^-k`, `k = 4..=probe_resolution`).
    pub fn check_assumptions(&self, probe_resolution: u32) -> AssumptionReport {
        let kmax = probe_resolution.clamp(6, 40);
        let den = Denominator::markovian(self);
        let sig2 = self.sigma_sq();
        let total = self.vol.total();

        // Increasing payoff and square integrability were enforced at
        // construction; re-derive the diagnostic value.
        let e_f_sq = quad::expect_normal(64, |x| {
            let f = self.payoff.value(x);
            f * f
        });
        let payoff_increasing = Verdict::Pass;
        let payoff_square_integrable = if e_f_sq.is_finite() { Verdict::Pass } else { Verdict::Fail };

        let normalization = if (sig2 - (1.0 - total)).abs() <= NORMALIZATION_TOL {
            Verdict::Pass
        } else {
            Verdict::Fail
        };

        let interior_roots = den.roots_in(0.0, 1.0);
        // Interior square integrability: with no interior crossing the
        // denominator is bounded away from zero on every [0, t], t < 1.
        let integrability_interior =
            if interior_roots.is_empty() && den.eval(0.5) > 0.0 { Verdict::Pass } else { Verdict::Fail };

        let (integrability_terminal, reciprocal_divergence) = if interior_roots.is_empty() {
            let sq = quad::improper_towards(|s| den.eval(s).powi(-2), 0.0, 1.0)
                .map(|c| c.is_convergent())
                .unwrap_or(false);
            let rec = quad::improper_towards(|s| 1.0 / den.eval(s).abs(), 0.0, 1.0)
                .map(|c| !c.is_convergent())
                .unwrap_or(false);
            (
                if sq { Verdict::Pass } else { Verdict::Fail },
                if rec { Verdict::Pass } else { Verdict::Fail },
            )
        } else {
            (Verdict::Fail, Verdict::Fail)
        };
        let assumption_filtering = Verdict::all([
            integrability_interior,
            integrability_terminal.or(reciprocal_divergence),
        ]);

        // Signal-precision time t*: remainder r(t) = (1-t) - (Sigma_z(1)-Sigma_z(t))
        // must be positive on [t*, 1). r is piecewise quadratic with r(1) = 0.
        let t_star = self.find_t_star();
        let jumps = self.vol.jump_times();
        let sigma_z_continuous_tail = match t_star {
            Some(ts) => {
                if jumps.iter().any(|&j| j > ts && j < 1.0) {
                    Verdict::Fail
                } else {
                    Verdict::Pass
                }
            }
            None => Verdict::Inapplicable,
        };

        let (min_den, argmin_den) = den.min_on(0.0, 1.0);
        let denominator_nonnegative =
            if min_den >= -NORMALIZATION_TOL { Verdict::Pass } else { Verdict::Fail };
        let assumption_precision = Verdict::all([
            if t_star.is_some() { Verdict::Pass } else { Verdict::Fail },
            sigma_z_continuous_tail.or(Verdict::Pass),
            denominator_nonnegative,
        ]);

        // Terminal limit trend lambda^2 Xi log log Xi -> 0 (the relaxed form
        // of the precision assumption). Only meaningful when Xi blows up,
        // i.e. when the terminal square integrability fails.
        let mut limit_samples = Vec::new();
        let mut limit_condition = Verdict::Inapplicable;
        if integrability_interior == Verdict::Pass && integrability_terminal == Verdict::Fail {
            for k in 4..=kmax {
                let t = 1.0 - 0.5f64.powi(k as i32);
                let lambda = match self.lambda_of_t(t) {
                    Ok(l) => l,
                    Err(_) => break,
                };
                let xi = match self.xi_of_t(t) {
                    Ok(x) => x,
                    Err(_) => break,
                };
                let loglog = (xi > std::f64::consts::E).then(|| xi.ln().ln());
                let product = loglog.map(|ll| lambda * lambda * xi * ll);
                limit_samples.push(LimitSample { k, t, lambda, xi, loglog_xi: loglog, product });
            }
            let products: Vec<f64> = limit_samples.iter().filter_map(|s| s.product).collect();
            limit_condition = if trend_decreasing_below(&products, LIMIT_TREND_TOL) {
                Verdict::Pass
            } else {
                Verdict::Fail
            };
        }

        let all_pass = [
            payoff_increasing,
            payoff_square_integrable,
            normalization,
            assumption_filtering,
            assumption_precision,
        ]
        .iter()
        .all(|v| *v == Verdict::Pass);

        AssumptionReport {
            payoff_increasing,
            payoff_square_integrable,
            e_f_squared: e_f_sq,
            total_variance: total,
            total_variance_finite: Verdict::Pass,
            normalization,
            integrability_interior,
            integrability_terminal,
            reciprocal_divergence,
            assumption_filtering,
            signal_precision_t_star: t_star,
            sigma_z_continuous_tail,
            denominator_nonnegative,
            min_denominator: min_den,
            argmin_denominator: argmin_den,
            assumption_precision,
            limit_condition,
            limit_samples,
            all_pass,
        }
    }

    fn find_t_star(&self) -> Option<f64> {
        // r(t) = (1 - t) - (Sigma_z(1) - Sigma_z(t)): piecewise quadratic,
        // r(1) = 0; we need r > 0 strictly on [t*, 1).
        let total = self.vol.total();
        let r = |t: f64| (1.0 - t) - (total - self.vol.cumulative(t).unwrap());
        // Candidate start: after the last sign change of r and the last jump.
        let mut candidates: Vec<f64> = self.vol.jump_times();
        // Roots of r per volatility segment (quadratic in u = t - t0).
        for s in &self.vol.segs {
            let slope = (s.v1 - s.v0) / (s.t1 - s.t0);
            let piece = QuadPiece {
                a: s.t0,
                b: s.t1,
                c0: r(s.t0),
                c1: s.v0 - 1.0,
                c2: 0.5 * slope,
            };
            let mut roots = Vec::new();
            piece.roots_in(s.t0 - 1e-300, s.t1 + 1e-300, &mut roots);
            candidates.extend(roots.into_iter().filter(|&x| x < 1.0 - ROOT_EPS));
        }
        candidates.retain(|&c| (0.0..1.0).contains(&c));
        candidates.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let t_star = candidates.last().copied().map(|c| c.min(1.0 - 1e-9)).unwrap_or(0.0);
        // Verify strict positivity between t* and 1 at dyadic probes.
        let mut ok = true;
        for k in 1..=30 {
            let t = 1.0 - (1.0 - t_star) * 0.5f64.powi(k);
            if r(t) <= 0.0 {
                ok = false;
                break;
            }
        }
        if ok && r(0.5 * (t_star + 1.0)) > 0.0 {
            Some(t_star)
        } else {
            None
        }
    }

    /// Builds the unique piecewise-constant weighting satisfying the
    /// breakpoint revelation identities on the given partition:
    /// `w_1^2 = (Sigma_z(t_1) + sigma^2)/t_1` and
    /// `w_i^2 = (Sigma_z(t_i) - Sigma_z(t_{i-1}))/(t_i - t_{i-1})` for `i >= 2`.
    ///
    /// Returned only if the weights come out strictly increasing.
    pub fn construct_weighting(&self, partition: &[f64]) -> Result<WeightingFunction> {
        validate_partition(partition)?;
        let n = partition.len() - 1;
        let mut weights = Vec::with_capacity(n);
        for i in 1..=n {
            let dt = partition[i] - partition[i - 1];
            if dt <= 0.0 {
                return Err(Error::domain(format!("zero-length interval at index {i}")));
            }
            let num = if i == 1 {
                self.cumulative_variance(partition[1])? + self.sigma_sq()
            } else {
                self.cumulative_variance(partition[i])? - self.cumulative_variance(partition[i - 1])?
            };
            if num <= 0.0 {
                return Err(Error::Construction(format!(
                    "nonpositive squared weight {num} on interval {i}"
                )));
            }
            weights.push(num.sqrt() / dt.sqrt());
        }
        for i in 1..n {
            if weights[i] <= weights[i - 1] {
                return Err(Error::Construction(format!(
                    "weights not strictly increasing at index {i}: {} then {}",
                    weights[i - 1],
                    weights[i]
                )));
            }
        }
        WeightingFunction::new(partition.to_vec(), weights)
    }

    /// Verifies the four equilibrium conditions of the weighted pricing rule
    /// against this market; verdicts (never errors) in the report.
    pub fn check_nonmarkovian_conditions(
        &self,
        w: &WeightingFunction,
        probe_resolution: u32,
    ) -> ConditionReport {
        let probes = probe_resolution.clamp(8, 4096) as usize;
        let den = Denominator::weighted(self, w);
        let n = w.n_intervals();
        let partition = w.partition();

        // Breakpoint residuals (t_1 .. t_n).
        let residuals: Vec<f64> = (1..=n)
            .map(|i| {
                self.cumulative_variance(partition[i]).unwrap() + self.sigma_sq()
                    - w.integral_sq(partition[i])
            })
            .collect();
        let breakpoint_zero = if residuals.iter().all(|r| r.abs() <= BREAKPOINT_RESIDUAL_TOL) {
            Verdict::Pass
        } else {
            Verdict::Fail
        };

        let mut interior_minima = Vec::new();
        let mut positivity = Vec::new();
        let mut square_integrability = Vec::new();
        let mut divergence = Vec::new();
        for i in 0..n {
            let (lo, hi) = (partition[i], partition[i + 1]);
            let roots = den.roots_in(lo, hi);
            let interior_ok = roots.is_empty() && den.eval(0.5 * (lo + hi)) > 0.0;
            positivity.push(if interior_ok { Verdict::Pass } else { Verdict::Fail });

            // Probe-grid minimum over the open interval (diagnostic).
            let mut min_v = f64::INFINITY;
            let mut min_t = lo;
            for j in 1..probes {
                let t = lo + (hi - lo) * j as f64 / probes as f64;
                let v = den.eval(t);
                if v < min_v {
                    min_v = v;
                    min_t = t;
                }
            }
            interior_minima.push(IntervalMin { interval: i + 1, t_at: min_t, min: min_v });

            // Local square integrability of D^-2 up to (not including) the
            // right endpoint. When the revelation identity forces D to
            // vanish at the left endpoint the filter restarts there with
            // zero variance, so a vanishing left layer is excluded.
            let left_singular = den.eval(lo) <= BREAKPOINT_RESIDUAL_TOL;
            let a = if left_singular { lo + (hi - lo) * 0.5f64.powi(20) } else { lo };
            let sq_ok = interior_ok && {
                let probe_t = hi - (hi - lo) * 0.5f64.powi(6);
                quad::adaptive(|s| den.eval(s).powi(-2), a, probe_t, 1e-8, 0.0)
                    .map(|v| v.is_finite())
                    .unwrap_or(false)
            };
            square_integrability.push(if sq_ok { Verdict::Pass } else { Verdict::Fail });

            // Reciprocal divergence approaching the right endpoint.
            let div_ok = interior_ok && {
                let mid = 0.5 * (lo + hi);
                matches!(
                    quad::improper_towards(|s| 1.0 / den.eval(s), mid, hi),
                    Ok(Improper::Divergent { .. })
                )
            };
            divergence.push(if div_ok { Verdict::Pass } else { Verdict::Fail });
        }

        let interior_positivity = Verdict::all(positivity.iter().copied());
        let local_square_integrability = Verdict::all(square_integrability.iter().copied());
        let reciprocal_divergence_at_breaks = Verdict::all(divergence.iter().copied());
        let weights_increasing =
            if w.is_strictly_increasing() { Verdict::Pass } else { Verdict::Fail };

        let all_pass = [
            interior_positivity,
            breakpoint_zero,
            local_square_integrability,
            reciprocal_divergence_at_breaks,
            weights_increasing,
        ]
        .iter()
        .all(|v| *v == Verdict::Pass);

        ConditionReport {
            interior_positivity,
            interior_minima,
            breakpoint_residuals: residuals,
            breakpoint_zero,
            local_square_integrability,
            square_integrability_detail: square_integrability,
            reciprocal_divergence_at_breaks,
            divergence_detail: divergence,
            weights_increasing,
            sum_sq_weights: w.sum_sq_weights(),
            integral_sq_weights: w.integral_sq(1.0),
            all_pass,
        }
    }
}

/// True when the sequence is eventually strictly decreasing and ends below
/// the tolerance.
fn trend_decreasing_below(xs: &[f64], tol: f64) -> bool {
    if xs.len() < 3 {
        return false;
    }
    let last = *xs.last().unwrap();
    if !(last.is_finite() && last <= tol) {
        return false;
    }
    // Longest strictly decreasing suffix must cover at least the last three
    // samples (an "eventual" monotone decrease).
    let mut run = 1;
    for i in (1..xs.len()).rev() {
        if xs[i] < xs[i - 1] {
            run += 1;
        } else {
            break;
        }
    }
    run >= 3
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Machine-checkable verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inapplicable,
}

impl Verdict {
    fn or(self, other: Verdict) -> Verdict {
        if self == Verdict::Pass || other == Verdict::Pass {
            Verdict::Pass
        } else if self == Verdict::Inapplicable {
            other
        } else {
            self
        }
    }

    fn all(items: impl IntoIterator<Item = Verdict>) -> Verdict {
        let mut out = Verdict::Pass;
        for v in items {
            if v == Verdict::Fail {
                return Verdict::Fail;
            }
            if v == Verdict::Inapplicable && out == Verdict::Pass {
                out = Verdict::Pass;
            }
        }
        out
    }
}

/// One dyadic sample of the terminal-limit diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitSample {
    pub k: u32,
    pub t: f64,
    pub lambda: f64,
    pub xi: f64,
    pub loglog_xi: Option<f64>,
    pub product: Option<f64>,
}

/// Verdicts for the Markovian feasibility assumptions plus diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub payoff_increasing: Verdict,
    pub payoff_square_integrable: Verdict,
    pub e_f_squared: f64,
    pub total_variance_finite: Verdict,
    pub total_variance: f64,
    pub normalization: Verdict,
    /// Interior square integrability of the inverse squared denominator.
    pub integrability_interior: Verdict,
    /// Square integrability up to the terminal time.
    pub integrability_terminal: Verdict,
    /// Divergence of the reciprocal integral at the terminal time.
    pub reciprocal_divergence: Verdict,
    /// Combined filtering assumption.
    pub assumption_filtering: Verdict,
    pub signal_precision_t_star: Option<f64>,
    pub sigma_z_continuous_tail: Verdict,
    pub denominator_nonnegative: Verdict,
    pub min_denominator: f64,
    pub argmin_denominator: f64,
    /// Combined signal-precision assumption.
    pub assumption_precision: Verdict,
    /// Numeric trend of `lambda^2 Xi log log Xi` towards zero.
    pub limit_condition: Verdict,
    pub limit_samples: Vec<LimitSample>,
    pub all_pass: bool,
}

impl AssumptionReport {
    /// Names of failed items, for CLI diagnostics.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let mut push = |v: Verdict, name: &'static str| {
            if v == Verdict::Fail {
                out.push(name);
            }
        };
        push(self.payoff_increasing, "payoff_increasing");
        push(self.payoff_square_integrable, "payoff_square_integrable");
        push(self.normalization, "normalization");
        push(self.assumption_filtering, "filtering_assumption");
        push(self.assumption_precision, "signal_precision_assumption");
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalMin {
    pub interval: usize,
    pub t_at: f64,
    pub min: f64,
}

/// Verdicts for the weighted-equilibrium conditions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionReport {
    pub interior_positivity: Verdict,
    pub interior_minima: Vec<IntervalMin>,
    pub breakpoint_residuals: Vec<f64>,
    pub breakpoint_zero: Verdict,
    pub local_square_integrability: Verdict,
    pub square_integrability_detail: Vec<Verdict>,
    pub reciprocal_divergence_at_breaks: Verdict,
    pub divergence_detail: Vec<Verdict>,
    pub weights_increasing: Verdict,
    pub sum_sq_weights: f64,
    pub integral_sq_weights: f64,
    pub all_pass: bool,
}

impl ConditionReport {
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let mut push = |v: Verdict, name: &'static str| {
            if v == Verdict::Fail {
                out.push(name);
            }
        };
        push(self.interior_positivity, "interior_positivity");
        push(self.breakpoint_zero, "breakpoint_revelation");
        push(self.local_square_integrability, "local_square_integrability");
        push(self.reciprocal_divergence_at_breaks, "reciprocal_divergence");
        push(self.weights_increasing, "weights_increasing");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params_static() -> ModelParams {
        ModelParams::new(1.0, VolatilitySpec::zero(), PayoffSpec::Identity).unwrap()
    }

    fn params_const_half() -> ModelParams {
        ModelParams::new(0.5f64.sqrt(), VolatilitySpec::constant(0.5).unwrap(), PayoffSpec::Identity)
            .unwrap()
    }

    /// Two-phase schedule with a jump at 0.5: 0.6 - 0.4 s, then 1.4 - 0.4 (s - 1/2).
    fn params_two_phase() -> ModelParams {
        let vol = VolatilitySpec::new(vec![(0.0, 0.6), (0.5, 0.4), (0.5, 1.4), (1.0, 1.2)]).unwrap();
        ModelParams::new(0.1f64.sqrt(), vol, PayoffSpec::Identity).unwrap()
    }

    #[test]
    fn cumulative_variance_closed_forms() {
        assert_eq!(params_static().cumulative_variance(0.7).unwrap(), 0.0);
        assert_relative_eq!(
            params_const_half().cumulative_variance(0.5).unwrap(),
            0.25,
            epsilon = 1e-15
        );
        assert_relative_eq!(params_two_phase().cumulative_variance(1.0).unwrap(), 0.9, epsilon = 1e-15);
        // Independent oracle: high-resolution Riemann sum of the schedule.
        let p = params_two_phase();
        let n = 400_000;
        let mut acc = 0.0;
        for i in 0..n {
            let s = (i as f64 + 0.5) / n as f64;
            acc += p.vol.sigma_sq(s) / n as f64;
        }
        assert_relative_eq!(p.cumulative_variance(1.0).unwrap(), acc, epsilon = 1e-9);
        assert!(p.cumulative_variance(1.2).is_err());
    }

    #[test]
    fn cumulative_variance_additive_and_monotone() {
        let p = params_two_phase();
        let mut prev = 0.0;
        for i in 0..=100 {
            let t = i as f64 / 100.0;
            let c = p.cumulative_variance(t).unwrap();
            assert!(c + 1e-15 >= prev);
            prev = c;
        }
        let (a, b, c) = (0.21, 0.5, 0.83);
        let left = p.cumulative_variance(b).unwrap() - p.cumulative_variance(a).unwrap();
        let right = p.cumulative_variance(c).unwrap() - p.cumulative_variance(b).unwrap();
        let whole = p.cumulative_variance(c).unwrap() - p.cumulative_variance(a).unwrap();
        assert_relative_eq!(left + right, whole, epsilon = 1e-14);
    }

    #[test]
    fn markov_denominator_values() {
        assert_relative_eq!(params_static().markov_denominator(0.3).unwrap(), 0.7, epsilon = 1e-15);
        assert_relative_eq!(
            params_const_half().markov_denominator(0.5).unwrap(),
            0.25,
            epsilon = 1e-15
        );
        for p in [params_static(), params_const_half(), params_two_phase()] {
            assert!(p.markov_denominator(1.0).unwrap().abs() <= 1e-12);
        }
    }

    #[test]
    fn lambda_closed_forms() {
        // Static: lambda(t) = 1 - t.
        let p0 = params_static();
        assert_relative_eq!(p0.lambda_of_t(0.75).unwrap(), 0.25, max_relative = 1e-9);
        assert_eq!(p0.lambda_of_t(0.0).unwrap(), 1.0);
        // Constant c: lambda(t) = (1-t)^{1/(1-c)}.
        let p1 = params_const_half();
        assert_relative_eq!(p1.lambda_of_t(0.5).unwrap(), 0.25, max_relative = 1e-9);
        for &t in &[0.1, 0.3, 0.6, 0.9] {
            assert_relative_eq!(
                p1.lambda_of_t(t).unwrap(),
                (1.0 - t).powi(2),
                max_relative = 1e-8
            );
        }
        // Strictly decreasing.
        let mut prev = 1.0 + 1e-12;
        for i in 0..20 {
            let l = p1.lambda_of_t(i as f64 / 20.0).unwrap();
            assert!(l < prev);
            prev = l;
        }
    }

    #[test]
    fn lambda_names_first_crossing() {
        let p = params_two_phase();
        // Markovian denominator crosses zero inside (0, 0.5).
        match p.lambda_of_t(0.6) {
            Err(Error::Singularity { t, .. }) => {
                // -0.2 t^2 - 0.4 t + 0.1 = 0 at t = (sqrt(6) - 2)/2.
                assert_relative_eq!(t, (6f64.sqrt() - 2.0) / 2.0, epsilon = 1e-9);
            }
            other => panic!("expected singularity, got {other:?}"),
        }
    }

    #[test]
    fn xi_closed_forms() {
        let p0 = params_static();
        assert_eq!(p0.xi_of_t(0.0).unwrap(), 0.0);
        assert_relative_eq!(p0.xi_of_t(0.5).unwrap(), 1.0, max_relative = 1e-7);
        let p1 = params_const_half();
        assert_relative_eq!(p1.xi_of_t(0.5).unwrap(), 3.5, max_relative = 1e-7);
    }

    #[test]
    fn assumptions_static_and_const() {
        let rep = params_static().check_assumptions(20);
        assert!(rep.all_pass);
        assert_eq!(rep.integrability_terminal, Verdict::Fail);
        assert_eq!(rep.reciprocal_divergence, Verdict::Pass);
        assert_eq!(rep.limit_condition, Verdict::Pass);

        let rep1 = params_const_half().check_assumptions(20);
        assert!(rep1.all_pass);
        let last = rep1.limit_samples.last().unwrap();
        assert!(last.product.unwrap() < 1e-3, "product {:?}", last.product);
    }

    #[test]
    fn assumptions_reject_two_phase_markovian() {
        let rep = params_two_phase().check_assumptions(16);
        assert!(!rep.all_pass);
        assert_eq!(rep.assumption_precision, Verdict::Fail);
        assert_eq!(rep.denominator_nonnegative, Verdict::Fail);
        assert_relative_eq!(rep.min_denominator, -0.15, epsilon = 1e-12);
        assert_relative_eq!(rep.argmin_denominator, 0.5, epsilon = 1e-9);
        assert!(rep.failures().contains(&"signal_precision_assumption"));
    }

    #[test]
    fn construct_weighting_two_phase() {
        let p = params_two_phase();
        let w = p.construct_weighting(&[0.0, 0.5, 1.0]).unwrap();
        assert_relative_eq!(w.weights()[0], 0.7f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(w.weights()[1], 1.3f64.sqrt(), epsilon = 1e-12);
        // Revelation residual is zero by construction at every breakpoint.
        for (i, &t) in w.breakpoints().iter().enumerate() {
            let r = p.cumulative_variance(t).unwrap() + p.sigma_sq() - w.integral_sq(t);
            assert!(r.abs() <= BREAKPOINT_RESIDUAL_TOL, "interval {i}: residual {r}");
        }
    }

    #[test]
    fn construct_weighting_single_interval_is_markovian() {
        let p = params_static();
        let w = p.construct_weighting(&[0.0, 1.0]).unwrap();
        assert_relative_eq!(w.weights()[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn construct_weighting_rejects_equal_weights() {
        // Sigma_z(t) = 0.9 t^2 (sigma_z^2 = 1.8 t), sigma^2 = 0.1,
        // partition {0, 1/9, 1}: both chord slopes equal 1.
        let vol = VolatilitySpec::new(vec![(0.0, 0.0), (1.0, 1.8)]).unwrap();
        let p = ModelParams::new(0.1f64.sqrt(), vol, PayoffSpec::Identity).unwrap();
        match p.construct_weighting(&[0.0, 1.0 / 9.0, 1.0]) {
            Err(Error::Construction(msg)) => assert!(msg.contains("index 1"), "{msg}"),
            other => panic!("expected construction error, got {other:?}"),
        }
    }

    #[test]
    fn nonmarkovian_conditions_two_phase() {
        let p = params_two_phase();
        let w = p.construct_weighting(&[0.0, 0.5, 1.0]).unwrap();
        let rep = p.check_nonmarkovian_conditions(&w, 256);
        assert!(rep.all_pass, "{:?}", rep.failures());
        assert_relative_eq!(rep.integral_sq_weights, 1.0, epsilon = 1e-12);
        assert_relative_eq!(rep.sum_sq_weights, 2.0, epsilon = 1e-12);
        for r in &rep.breakpoint_residuals {
            assert!(r.abs() <= BREAKPOINT_RESIDUAL_TOL);
        }
    }

    #[test]
    fn nonmarkovian_conditions_flag_flat_weighting() {
        let p = params_two_phase();
        let w = WeightingFunction::markovian();
        let rep = p.check_nonmarkovian_conditions(&w, 256);
        assert!(!rep.all_pass);
        assert_eq!(rep.interior_positivity, Verdict::Fail);
        // Terminal residual vanishes by normalization, so the breakpoint
        // identity itself passes.
        assert_eq!(rep.breakpoint_zero, Verdict::Pass);
        let worst = rep
            .interior_minima
            .iter()
            .map(|m| m.min)
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(worst, -0.15, epsilon = 1e-3);
    }

    #[test]
    fn nonmarkovian_conditions_static_market() {
        let p = params_static();
        let rep = p.check_nonmarkovian_conditions(&WeightingFunction::markovian(), 128);
        assert_eq!(rep.interior_positivity, Verdict::Pass);
        assert_eq!(rep.breakpoint_zero, Verdict::Pass);
        assert_eq!(rep.reciprocal_divergence_at_breaks, Verdict::Pass);
        assert_eq!(rep.local_square_integrability, Verdict::Pass);
    }

    #[test]
    fn normalization_enforced() {
        let err = ModelParams::new(0.9, VolatilitySpec::zero(), PayoffSpec::Identity);
        assert!(matches!(err, Err(Error::Construction(_))));
    }

    #[test]
    fn payoff_families_validate_and_evaluate() {
        assert!(PayoffSpec::Affine { a: -1.0, b: 0.0 }.validate().is_err());
        assert!(PayoffSpec::Exp { scale: 1.0, rate: -0.5 }.validate().is_err());
        let table = PayoffSpec::Table { points: vec![(-1.0, -2.0), (0.0, 0.0), (1.0, 3.0)] };
        table.validate().unwrap();
        assert_eq!(table.value(-5.0), -2.0);
        assert_eq!(table.value(0.5), 1.5);
        assert_eq!(table.value(7.0), 3.0);
    }
}
