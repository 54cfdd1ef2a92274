//! The market maker's filtering system.
//!
//! Observing the total order flow `Y` with drift `(Z - Y)/D(t)`,
//! `D(t) = Sigma_z(t) - t + sigma^2`, the conditional law of `Z` is
//! Gaussian with mean `m` and variance `gamma` satisfying
//!
//! ```text
//! gamma' = sigma_z^2(t) - gamma^2 / D(t)^2,   gamma(0) = sigma^2
//! dm     = (gamma / D) dB^Y
//! ```
//!
//! and `gamma = D(t)` solves the variance ODE exactly. `gamma_ode_solve`
//! integrates the ODE by classical RK4 and returns it next to the analytic
//! solution; `kalman_filter` runs the exact discrete conditionally-Gaussian
//! filter on a sampled path and returns the innovations for whiteness
//! testing. Weighted rules restart the filter at each breakpoint with zero
//! variance; the `*_interval` variants handle one restart interval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Denominator, ModelParams, WeightingFunction};
use crate::stats::{self, TestOutcome};

/// Default distance from the terminal time at which filtering stops
/// (the gain becomes singular as `gamma -> 0`).
pub const FILTER_EPS: f64 = 9.765625e-4; // 2^-10

/// Posterior state at one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub m: f64,
    pub gamma: f64,
}

/// RK4 and analytic conditional-variance paths on a time grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaPath {
    pub times: Vec<f64>,
    pub numeric: Vec<f64>,
    pub analytic: Vec<f64>,
    /// `max_k |numeric - analytic|`.
    pub max_gap: f64,
}

struct OdeSystem<'a> {
    den: &'a Denominator,
    params: &'a ModelParams,
    /// Weight multiplying the observation drift (1 in the Markovian case).
    alpha: f64,
}

impl OdeSystem<'_> {
    fn rhs(&self, s: f64, gamma: f64) -> Result<f64> {
        let d = self.den.eval(s);
        if d <= 0.0 {
            return Err(Error::Singularity { t: s, what: "filter denominator".into() });
        }
        let g = gamma * self.alpha / d;
        Ok(self.params.vol.sigma_sq(s) - g * g)
    }

    fn rk4(&self, times: &[f64], gamma0: f64) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(times.len());
        let mut gamma = gamma0;
        out.push(gamma);
        for w in times.windows(2) {
            let (s, h) = (w[0], w[1] - w[0]);
            let k1 = self.rhs(s, gamma)?;
            let k2 = self.rhs(s + 0.5 * h, gamma + 0.5 * h * k1)?;
            let k3 = self.rhs(s + 0.5 * h, gamma + 0.5 * h * k2)?;
            let k4 = self.rhs(s + h, gamma + h * k3)?;
            gamma += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            out.push(gamma);
        }
        Ok(out)
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::domain("filter needs at least two time points"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("filter times must be strictly increasing"));
    }
    Ok(())
}

/// RK4 integration of the Markovian variance ODE from `gamma(times[0])`
/// (the prior variance when starting at 0), next to the analytic solution
/// `Sigma_z(t) - t + sigma^2`.
pub fn gamma_ode_solve(params: &ModelParams, times: &[f64]) -> Result<GammaPath> {
    check_times(times)?;
    let den = Denominator::markovian(params);
    let gamma0 = if times[0] == 0.0 { params.sigma_sq() } else { den.eval(times[0]) };
    let sys = OdeSystem { den: &den, params, alpha: 1.0 };
    let numeric = sys.rk4(times, gamma0)?;
    let analytic: Vec<f64> = times.iter().map(|&t| den.eval(t)).collect();
    let max_gap = numeric
        .iter()
        .zip(&analytic)
        .map(|(n, a)| (n - a).abs())
        .fold(0.0, f64::max);
    Ok(GammaPath { times: times.to_vec(), numeric, analytic, max_gap })
}

/// Per-interval variance ODE for a weighted rule: starts from the prior
/// variance on the first interval and from zero at later breakpoints
/// (the revelation identity makes the restart exact).
pub fn gamma_ode_solve_interval(
    params: &ModelParams,
    weighting: &WeightingFunction,
    interval: usize,
    times: &[f64],
) -> Result<GammaPath> {
    check_times(times)?;
    let n = weighting.n_intervals();
    if interval >= n {
        return Err(Error::domain(format!("interval {interval} out of range (n = {n})")));
    }
    let (lo, hi) = (weighting.partition()[interval], weighting.partition()[interval + 1]);
    if times[0] != lo || *times.last().unwrap() >= hi {
        return Err(Error::domain(format!(
            "interval filter times must start at {lo} and stay below {hi}"
        )));
    }
    let den = Denominator::weighted(params, weighting);
    let alpha = weighting.weights()[interval];
    let sys = OdeSystem { den: &den, params, alpha };
    let numeric = if interval == 0 {
        sys.rk4(times, params.sigma_sq())?
    } else {
        // Singular restart: gamma(t_i) = 0 while D(t_i) = 0, so the ratio
        // gamma/D in the ODE is indeterminate at the left endpoint. The
        // unique nonnegative initial slope c solves
        //   (alpha^2 / D'(t_i)^2) c^2 + c - sigma_z^2(t_i+) = 0;
        // seed just inside with c * delta and integrate over a dyadically
        // graded prefix before picking up the caller's grid.
        let t0 = times[0];
        let h1 = times[1] - t0;
        let eps = h1 * 1e-7;
        let d_slope = (den.eval(t0 + eps) - den.eval(t0)) / eps;
        if d_slope <= 0.0 {
            return Err(Error::Singularity { t: t0, what: "denominator slope at restart".into() });
        }
        let a = alpha * alpha / (d_slope * d_slope);
        let sz = params.vol.sigma_sq(t0 + eps);
        let c = (-1.0 + (1.0 + 4.0 * a * sz).sqrt()) / (2.0 * a);
        // The linearized ODE has rate lambda = -kappa/u near the restart;
        // explicit RK4 needs steps h <= ~2 u / kappa, so the internal grid
        // grows geometrically until the caller's spacing becomes stable.
        let kappa = (2.0 * alpha * alpha * c / (d_slope * d_slope)).max(4.0);
        let growth = 1.0 + 2.0 / kappa;
        let h_user = times.windows(2).map(|w| w[1] - w[0]).fold(0.0f64, f64::max);
        let span = *times.last().unwrap() - t0;
        let u_stop = (0.75 * kappa * h_user).min(span);
        let delta0 = h1 * 0.5f64.powi(20);
        let mut inner_times: Vec<f64> = times[1..].to_vec();
        let mut u = delta0;
        while u < u_stop {
            inner_times.push(t0 + u);
            u *= growth;
        }
        inner_times.sort_by(|x, y| x.partial_cmp(y).unwrap());
        inner_times.dedup_by(|x, y| (*x - *y).abs() < 1e-15);
        let inner = sys.rk4(&inner_times, c * (inner_times[0] - t0))?;
        let mut numeric = Vec::with_capacity(times.len());
        numeric.push(0.0);
        for &t in &times[1..] {
            let idx = inner_times
                .iter()
                .position(|&x| (x - t).abs() < 1e-13)
                .ok_or_else(|| Error::numeric("restart grid lost a caller node"))?;
            numeric.push(inner[idx]);
        }
        numeric
    };
    let analytic: Vec<f64> = times.iter().map(|&t| den.eval(t)).collect();
    let max_gap = numeric
        .iter()
        .zip(&analytic)
        .map(|(n, a)| (n - a).abs())
        .fold(0.0, f64::max);
    Ok(GammaPath { times: times.to_vec(), numeric, analytic, max_gap })
}

/// Output of a filter pass over one observed path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KalmanOutput {
    pub times: Vec<f64>,
    /// Posterior mean/variance per node.
    pub states: Vec<FilterState>,
    /// Raw innovations per step (length `times.len() - 1`).
    pub innovations: Vec<f64>,
    pub max_mean_gap: f64,
}

/// Exact discrete conditionally-Gaussian filter for the Markovian system.
///
/// Per step: innovation `e = dY - (m - Y) dt / D`, innovation variance
/// `S = gamma (dt/D)^2 + dt`, gain `K = gamma (dt/D) / S`, then the
/// variance predicts forward by the exact firm-variance increment.
pub fn kalman_filter(params: &ModelParams, times: &[f64], y: &[f64]) -> Result<KalmanOutput> {
    check_times(times)?;
    let den = Denominator::markovian(params);
    kalman_core(params, &den, 1.0, params.sigma_sq(), times, y, |yk| yk)
}

/// Filter for one interval of a weighted rule. Observations are the raw
/// total order `y`; the drift reads the re-weighted level `alpha * y`
/// relative to the interval anchor, so callers pass `y - y(t_i)` and
/// `z`-estimates are of `Z - Z(t_i)`.
pub fn kalman_filter_interval(
    params: &ModelParams,
    weighting: &WeightingFunction,
    interval: usize,
    times: &[f64],
    y: &[f64],
) -> Result<KalmanOutput> {
    check_times(times)?;
    let den = Denominator::weighted(params, weighting);
    let alpha = weighting.weights()[interval];
    let gamma0 = if interval == 0 { params.sigma_sq() } else { 0.0 };
    kalman_core(params, &den, alpha, gamma0, times, y, move |yk| alpha * yk)
}

fn kalman_core(
    params: &ModelParams,
    den: &Denominator,
    alpha: f64,
    gamma0: f64,
    times: &[f64],
    y: &[f64],
    weighted_level: impl Fn(f64) -> f64,
) -> Result<KalmanOutput> {
    if y.len() != times.len() {
        return Err(Error::domain(format!(
            "{} observations for {} time points",
            y.len(),
            times.len()
        )));
    }
    let mut states = Vec::with_capacity(times.len());
    let mut innovations = Vec::with_capacity(times.len() - 1);
    let mut m = 0.0f64;
    let mut gamma = gamma0;
    let mut max_mean_gap = 0.0f64;
    states.push(FilterState { m, gamma });
    for k in 0..times.len() - 1 {
        let dt = times[k + 1] - times[k];
        let d = den.eval(times[k]);
        if d <= 0.0 {
            return Err(Error::Singularity { t: times[k], what: "filter denominator".into() });
        }
        let h = alpha * dt / d;
        let e = (y[k + 1] - y[k]) - (m - weighted_level(y[k])) * h;
        let s = gamma * h * h + dt;
        let gain = gamma * h / s;
        m += gain * e;
        gamma *= 1.0 - gain * h;
        gamma += params.vol.cumulative(times[k + 1])? - params.vol.cumulative(times[k])?;
        if !(m.is_finite() && gamma.is_finite()) {
            return Err(Error::numeric_at(k, "filter state not finite"));
        }
        innovations.push(e);
        states.push(FilterState { m, gamma });
        max_mean_gap = max_mean_gap.max((m - weighted_level(y[k + 1])).abs());
    }
    Ok(KalmanOutput { times: times.to_vec(), states, innovations, max_mean_gap })
}

/// Whiteness verdicts for normalized innovations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WhitenessReport {
    pub mean: TestOutcome,
    pub variance: TestOutcome,
    pub autocorr: TestOutcome,
    pub pass: bool,
}

/// Tests `innovations[k] / sqrt(dts[k])` for zero mean, unit variance, and
/// lag-1 decorrelation, each within `3/sqrt(m)`-style bands.
pub fn innovations_whiteness(innovations: &[f64], dts: &[f64]) -> Result<WhitenessReport> {
    if innovations.len() != dts.len() || innovations.len() < 8 {
        return Err(Error::domain("need matching innovation/step arrays (>= 8 entries)"));
    }
    let eps: Vec<f64> = innovations
        .iter()
        .zip(dts)
        .map(|(e, dt)| e / dt.sqrt())
        .collect();
    let m = eps.len() as f64;
    let (mean, _) = stats::mean_stderr(&eps);
    let var = stats::variance(&eps);
    let pairs: Vec<(f64, f64)> = eps.windows(2).map(|w| (w[0], w[1])).collect();
    let r1 = stats::lag1_autocorr(&pairs);

    let mean_t = TestOutcome::new("innovation_mean", mean, 3.0 / m.sqrt(), eps.len());
    let var_t = TestOutcome::new(
        "innovation_variance",
        var - 1.0,
        3.0 * (2.0 / (m - 1.0)).sqrt(),
        eps.len(),
    );
    let ac_t = TestOutcome::new("innovation_lag1_autocorr", r1, 3.0 / m.sqrt(), pairs.len());
    let pass = mean_t.pass && var_t.pass && ac_t.pass;
    Ok(WhitenessReport { mean: mean_t, variance: var_t, autocorr: ac_t, pass })
}
