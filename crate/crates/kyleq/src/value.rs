//! The insider's value function and profit bound.
//!
//! The terminal shape is
//!
//! ```text
//! J(y, z) = int_y^{y*(z)} (f(z) - H(x, 1)) dx,   H(y*(z), 1) = f(z),
//! ```
//!
//! nonnegative with a root exactly at `y = y*(z)`. The value function is
//! its Gaussian smoothing over the two independent remaining noises,
//!
//! ```text
//! V(y, z, t) = E[ J(y + sqrt(1-t) N1, z + sqrt(Sigma_z(1)-Sigma_z(t)) N2) ],
//! ```
//!
//! evaluated by tensorized Gauss–Hermite quadrature. It satisfies the
//! backward equation `V_t + V_yy/2 + (sigma_z^2/2) V_zz = 0` and the
//! first-order identity `V_y + F - H = 0`; `pde_residuals` verifies both by
//! finite differences. The expected equilibrium profit is the prior
//! average `E_v[V(0, v, 0)]`, which upper-bounds every admissible
//! strategy's expected wealth. Weighted rules use a telescoping composite
//! of per-interval values with horizons at the breakpoints.

use crate::error::Result;
use crate::model::{ModelParams, WeightingFunction};
use crate::pricing::{FundamentalValue, PricingRule};
use crate::quad;

/// Value-function evaluator tying a pricing rule to market parameters.
/// The rule's terminal layer `h = H(., 1)` may differ from the market
/// payoff `f`; both enter `J`.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    pub rule: PricingRule,
    pub params: ModelParams,
    pub quadrature_nodes: usize,
}

impl ValueFunction {
    pub fn new(rule: PricingRule, params: ModelParams) -> Self {
        ValueFunction { rule, params, quadrature_nodes: 64 }
    }

    /// Root of `H(y, 1) = f(z)`.
    pub fn ystar(&self, z: f64) -> Result<f64> {
        let target = self.params.payoff.value(z);
        self.rule.inverse_price(target, 1.0)
    }

    /// `J(y, z)`: adaptive quadrature of the terminal mispricing wedge.
    pub fn j_value(&self, y: f64, z: f64) -> Result<f64> {
        let ys = self.ystar(z)?;
        let fz = self.params.payoff.value(z);
        let h = &self.rule;
        quad::adaptive(|x| fz - h.price(x, 1.0).unwrap_or(f64::NAN), y, ys, 3e-13, 1e-15)
    }

    /// `V(y, z, t)` by double Gauss–Hermite over the remaining noises.
    pub fn value(&self, y: f64, z: f64, t: f64) -> Result<f64> {
        let var_y = self.rule.rho(t);
        let var_z = self.params.vol.total() - self.params.vol.cumulative(t)?;
        self.smoothed_j(y, z, var_y, var_z)
    }

    fn smoothed_j(&self, y: f64, z: f64, var_y: f64, var_z: f64) -> Result<f64> {
        let n = self.quadrature_nodes;
        let sy = var_y.max(0.0).sqrt();
        let sz = var_z.max(0.0).sqrt();
        let mut err = None;
        let mut eval = |yy: f64, zz: f64| -> f64 {
            match self.j_value(yy, zz) {
                Ok(v) => v,
                Err(e) => {
                    err = Some(e);
                    0.0
                }
            }
        };
        let v = match (sy > 0.0, sz > 0.0) {
            (false, false) => eval(y, z),
            (true, false) => quad::expect_normal(n, |a| eval(y + sy * a, z)),
            (false, true) => quad::expect_normal(n, |b| eval(y, z + sz * b)),
            (true, true) => {
                let rule = quad::normal_rule(n);
                let mut acc = 0.0;
                for (&a, &wa) in rule.nodes.iter().zip(&rule.weights) {
                    let mut inner = 0.0;
                    for (&b, &wb) in rule.nodes.iter().zip(&rule.weights) {
                        inner += wb * eval(y + sy * a, z + sz * b);
                    }
                    acc += wa * inner;
                }
                acc
            }
        };
        match err {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }

    /// Prior-averaged value at the origin: the expected equilibrium profit
    /// and the upper bound on any admissible strategy's expected wealth.
    pub fn profit_upper_bound(&self) -> Result<f64> {
        let sigma = self.params.sigma;
        let mut err = None;
        let v = quad::expect_normal(self.quadrature_nodes, |x| {
            match self.value(0.0, sigma * x, 0.0) {
                Ok(v) => v,
                Err(e) => {
                    err = Some(e);
                    0.0
                }
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }

    /// Finite-difference residuals of the backward equation and of the
    /// first-order identity `V_y + F - H = 0` on an interior grid.
    pub fn pde_residuals(
        &self,
        y_grid: &[f64],
        z_grid: &[f64],
        t_grid: &[f64],
        step: f64,
    ) -> Result<ValueResiduals> {
        let f = FundamentalValue::new(&self.params);
        let mut max_pde = 0.0f64;
        let mut max_gradient = 0.0f64;
        let h = step;
        for &t in t_grid {
            let sig_sq = self.params.vol.sigma_sq(t);
            for &z in z_grid {
                for &y in y_grid {
                    let v_t = (self.value(y, z, t + h)? - self.value(y, z, t - h)?) / (2.0 * h);
                    let v0 = self.value(y, z, t)?;
                    let v_yy =
                        (self.value(y + h, z, t)? - 2.0 * v0 + self.value(y - h, z, t)?) / (h * h);
                    let v_zz =
                        (self.value(y, z + h, t)? - 2.0 * v0 + self.value(y, z - h, t)?) / (h * h);
                    let pde = v_t + 0.5 * v_yy + 0.5 * sig_sq * v_zz;
                    let v_y = (self.value(y + h, z, t)? - self.value(y - h, z, t)?) / (2.0 * h);
                    let grad = v_y + f.value(z, t)? - self.rule.price(y, t)?;
                    max_pde = max_pde.max(pde.abs());
                    max_gradient = max_gradient.max(grad.abs());
                }
            }
        }
        Ok(ValueResiduals { max_pde, max_gradient })
    }
}

/// Residual maxima for the two value-function identities.
#[derive(Debug, Clone, Copy)]
pub struct ValueResiduals {
    pub max_pde: f64,
    pub max_gradient: f64,
}

/// Per-interval value for a weighted rule: horizon at the interval's right
/// breakpoint, target level `xi_i*(z)` solving `H(xi, t_i) = F(z, t_i)`.
fn interval_value(
    vf: &ValueFunction,
    w: &WeightingFunction,
    interval: usize,
    xi: f64,
    z: f64,
    t: f64,
) -> Result<f64> {
    let horizon = w.partition()[interval + 1];
    let fund = FundamentalValue::new(&vf.params);
    let var_xi = w.integral_sq(horizon) - w.integral_sq(t);
    let var_z = vf.params.vol.cumulative(horizon)? - vf.params.vol.cumulative(t)?;
    let n = vf.quadrature_nodes;
    let sy = var_xi.max(0.0).sqrt();
    let sz = var_z.max(0.0).sqrt();
    let mut err = None;
    let mut j_i = |xx: f64, zz: f64| -> f64 {
        let inner = || -> Result<f64> {
            let target = fund.value(zz, horizon)?;
            let xstar = vf.rule.inverse_price(target, horizon)?;
            quad::adaptive(
                |x| target - vf.rule.price(x, horizon).unwrap_or(f64::NAN),
                xx,
                xstar,
                3e-13,
                1e-15,
            )
        };
        match inner() {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                0.0
            }
        }
    };
    let v = match (sy > 0.0, sz > 0.0) {
        (false, false) => j_i(xi, z),
        (true, false) => quad::expect_normal(n, |a| j_i(xi + sy * a, z)),
        (false, true) => quad::expect_normal(n, |b| j_i(xi, z + sz * b)),
        (true, true) => {
            let rule = quad::normal_rule(n);
            let mut acc = 0.0;
            for (&a, &wa) in rule.nodes.iter().zip(&rule.weights) {
                let mut inner = 0.0;
                for (&b, &wb) in rule.nodes.iter().zip(&rule.weights) {
                    inner += wb * j_i(xi + sy * a, z + sz * b);
                }
                acc += wa * inner;
            }
            acc
        }
    };
    match err {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// Composite value for a weighted rule at `(xi, z, t)`: the telescoping sum
/// of per-interval values over horizons not yet passed,
/// `sum_{i<n: t <= t_i} (1/w_i - 1/w_{i+1}) V^i + (1/w_n) V^n`,
/// on the half-open interval convention.
pub fn value_nonmarkov(
    vf: &ValueFunction,
    w: &WeightingFunction,
    xi: f64,
    z: f64,
    t: f64,
) -> Result<f64> {
    let n = w.n_intervals();
    let weights = w.weights();
    let mut acc = 0.0;
    for i in 0..n - 1 {
        if t <= w.partition()[i + 1] {
            let coeff = 1.0 / weights[i] - 1.0 / weights[i + 1];
            acc += coeff * interval_value(vf, w, i, xi, z, t)?;
        }
    }
    acc += interval_value(vf, w, n - 1, xi, z, t)? / weights[n - 1];
    Ok(acc)
}

/// Prior-averaged composite value at the origin: the weighted-equilibrium
/// expected profit.
pub fn nonmarkov_profit_upper_bound(vf: &ValueFunction, w: &WeightingFunction) -> Result<f64> {
    let sigma = vf.params.sigma;
    let mut err = None;
    let v = quad::expect_normal(vf.quadrature_nodes, |x| {
        match value_nonmarkov(vf, w, 0.0, sigma * x, 0.0) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                0.0
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(v),
    }
}
