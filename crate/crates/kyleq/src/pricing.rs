//! Pricing rules and the fundamental value.
//!
//! A rule prices the (weighted) order level `y` at time `t` as the Gaussian
//! convolution of the terminal payoff with the remaining order-flow
//! variance `rho(t)`:
//!
//! ```text
//! H(y, t) = E[ f(y + sqrt(rho(t)) N) ],   N ~ N(0, 1)
//! ```
//!
//! with `rho(t) = 1 - t` in the Markovian case and `rho(t) = int_t^1 w^2`
//! for a weighted rule. `H` solves the backward heat equation
//! `H_t + (w^2/2) H_yy = 0` with `H(y, 1) = f(y)`, which `pde_residual`
//! verifies by finite differences. The fundamental value applies the same
//! convolution machinery with the firm's remaining variance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, PayoffSpec, VolatilitySpec, WeightingFunction};
use crate::quad;

/// Default Gauss–Hermite node count.
pub const DEFAULT_NODES: usize = 64;
/// Inversion tolerance on the price scale.
pub const INVERSION_TOL: f64 = 1e-10;

/// Remaining order-flow variance schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RemainingVariance {
    /// `rho(t) = 1 - t`.
    Markovian,
    /// `rho(t) = int_t^1 w^2(s) ds`.
    Weighted { weighting: WeightingFunction },
}

impl RemainingVariance {
    pub fn rho(&self, t: f64) -> f64 {
        match self {
            RemainingVariance::Markovian => 1.0 - t,
            RemainingVariance::Weighted { weighting } => weighting.remaining_sq(t),
        }
    }

    /// Squared weight at `t` (1 in the Markovian case).
    pub fn weight_sq(&self, t: f64) -> f64 {
        match self {
            RemainingVariance::Markovian => 1.0,
            RemainingVariance::Weighted { weighting } => {
                let w = weighting.weight_at(t);
                w * w
            }
        }
    }

    pub fn weighting(&self) -> Option<&WeightingFunction> {
        match self {
            RemainingVariance::Markovian => None,
            RemainingVariance::Weighted { weighting } => Some(weighting),
        }
    }
}

/// A pricing rule: terminal payoff plus remaining-variance schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingRule {
    pub payoff: PayoffSpec,
    pub remaining: RemainingVariance,
    pub quadrature_nodes: usize,
}

impl PricingRule {
    pub fn markovian(payoff: PayoffSpec) -> Self {
        PricingRule { payoff, remaining: RemainingVariance::Markovian, quadrature_nodes: DEFAULT_NODES }
    }

    pub fn weighted(payoff: PayoffSpec, weighting: WeightingFunction) -> Self {
        PricingRule {
            payoff,
            remaining: RemainingVariance::Weighted { weighting },
            quadrature_nodes: DEFAULT_NODES,
        }
    }

    pub fn with_nodes(mut self, n: usize) -> Self {
        self.quadrature_nodes = n;
        self
    }

    pub fn rho(&self, t: f64) -> f64 {
        self.remaining.rho(t)
    }

    /// `H(y, t)`. Closed forms cover the polynomial payoff families (they
    /// double as quadrature oracles in the tests); other families evaluate
    /// by Gauss–Hermite.
    pub fn price(&self, y: f64, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::domain(format!("time {t} outside [0, 1]")));
        }
        convolve(&self.payoff, y, self.rho(t), self.quadrature_nodes)
    }

    /// Inverse of `H(., t)` at price level `p`: the unique `y` with
    /// `|H(y, t) - p| <= INVERSION_TOL`.
    pub fn inverse_price(&self, p: f64, t: f64) -> Result<f64> {
        if !p.is_finite() {
            return Err(Error::domain(format!("price {p} is not finite")));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::domain(format!("time {t} outside [0, 1]")));
        }
        // Exact inverses: affine payoffs convolve to themselves at every t,
        // other families invert exactly at the terminal layer.
        match &self.payoff {
            PayoffSpec::Identity => return Ok(p),
            PayoffSpec::Affine { a, b } => return Ok((p - b) / a),
            _ => {
                if self.rho(t) == 0.0 {
                    if let Some(y) = self.payoff.inverse_closed(p) {
                        return Ok(y);
                    }
                }
            }
        }
        let h = |y: f64| self.price(y, t);
        // Doubling bracket starting from [-8, 8].
        let (mut lo, mut hi) = (-8.0f64, 8.0f64);
        let (mut flo, mut fhi) = (h(lo)?, h(hi)?);
        let mut grow = 0;
        while !(flo <= p && p <= fhi) {
            grow += 1;
            if grow > 60 {
                return Err(Error::Range(format!(
                    "price {p} outside the attainable range [{flo}, {fhi}] at t = {t}"
                )));
            }
            if p < flo {
                lo *= 2.0;
                flo = h(lo)?;
            } else {
                hi *= 2.0;
                fhi = h(hi)?;
            }
        }
        // Bisection, then a secant polish.
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let fm = h(mid)?;
            if (fm - p).abs() <= 0.1 * INVERSION_TOL {
                return Ok(mid);
            }
            if fm < p {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
                fhi = fm;
            }
            if hi - lo < 1e-15 * (1.0 + mid.abs()) {
                break;
            }
        }
        let mut y = if fhi > flo { lo + (p - flo) * (hi - lo) / (fhi - flo) } else { 0.5 * (lo + hi) };
        for _ in 0..4 {
            let fy = h(y)?;
            if (fy - p).abs() <= INVERSION_TOL {
                return Ok(y);
            }
            let dy = 1e-7 * (1.0 + y.abs());
            let slope = (h(y + dy)? - fy) / dy;
            if slope <= 0.0 {
                break;
            }
            y -= (fy - p) / slope;
        }
        let fy = h(y)?;
        if (fy - p).abs() <= INVERSION_TOL {
            Ok(y)
        } else {
            Err(Error::numeric(format!(
                "price inversion stalled: |H(y) - p| = {:.3e}",
                (fy - p).abs()
            )))
        }
    }

    /// Max/mean absolute residual of the pricing heat equation on a grid of
    /// interior points, by central finite differences with steps `(hy, ht)`.
    pub fn pde_residual(
        &self,
        y_grid: &[f64],
        t_grid: &[f64],
        hy: f64,
        ht: f64,
    ) -> Result<ResidualField> {
        let breaks: Vec<f64> = self
            .remaining
            .weighting()
            .map(|w| w.partition().to_vec())
            .unwrap_or_default();
        let mut max_abs = 0.0f64;
        let mut sum_abs = 0.0f64;
        let mut n = 0usize;
        for &t in t_grid {
            if t - ht <= 0.0 || t + ht >= 1.0 {
                return Err(Error::domain(format!(
                    "t = {t} with step {ht} touches the domain boundary (terminal layer excluded)"
                )));
            }
            if breaks
                .iter()
                .any(|&b| (t - b).abs() <= ht + 1e-12 && b > 0.0 && b < 1.0)
            {
                return Err(Error::domain(format!("t = {t} too close to a weight breakpoint")));
            }
            let wsq = self.remaining.weight_sq(t);
            for &y in y_grid {
                let h_t = (self.price(y, t + ht)? - self.price(y, t - ht)?) / (2.0 * ht);
                let h_yy = (self.price(y + hy, t)? - 2.0 * self.price(y, t)?
                    + self.price(y - hy, t)?)
                    / (hy * hy);
                let r = h_t + 0.5 * wsq * h_yy;
                max_abs = max_abs.max(r.abs());
                sum_abs += r.abs();
                n += 1;
            }
        }
        Ok(ResidualField { max_abs, mean_abs: sum_abs / n.max(1) as f64, points: n })
    }
}

/// Finite-difference residual summary.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ResidualField {
    pub max_abs: f64,
    pub mean_abs: f64,
    pub points: usize,
}

/// `E[f(y + sqrt(var) N)]` with overflow reporting.
pub(crate) fn convolve(payoff: &PayoffSpec, y: f64, var: f64, nodes: usize) -> Result<f64> {
    let var = var.max(0.0);
    if let Some(v) = payoff.convolve_closed(y, var) {
        return Ok(v);
    }
    let v = if var == 0.0 {
        payoff.value(y)
    } else {
        let sd = var.sqrt();
        quad::expect_normal(nodes, |x| payoff.value(y + sd * x))
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::numeric(format!("payoff convolution overflowed at y = {y}")))
    }
}

/// The insider's private valuation `F(z, t) = E[f(Z_1) | Z_t = z]`: the
/// payoff convolved with the firm's remaining variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundamentalValue {
    pub payoff: PayoffSpec,
    pub vol: VolatilitySpec,
    pub quadrature_nodes: usize,
}

impl FundamentalValue {
    pub fn new(params: &ModelParams) -> Self {
        FundamentalValue {
            payoff: params.payoff.clone(),
            vol: params.vol.clone(),
            quadrature_nodes: DEFAULT_NODES,
        }
    }

    pub fn value(&self, z: f64, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::domain(format!("time {t} outside [0, 1]")));
        }
        let var = self.vol.total() - self.vol.cumulative(t)?;
        convolve(&self.payoff, z, var, self.quadrature_nodes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use approx::assert_relative_eq;

    fn rule(payoff: PayoffSpec) -> PricingRule {
        PricingRule::markovian(payoff)
    }

    fn lcg(state: &mut u64) -> f64 {
        // Tiny deterministic uniform in [0,1) for test point sampling.
        *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*state >> 11) as f64 / (1u64 << 53) as f64
    }

    #[test]
    fn identity_price_is_the_order_level() {
        let r = rule(PayoffSpec::Identity);
        for &(y, t) in &[(0.0, 0.0), (1.3, 0.4), (-2.0, 1.0)] {
            assert_eq!(r.price(y, t).unwrap(), y);
        }
    }

    #[test]
    fn cubic_price_uses_gaussian_odd_moments() {
        let r = rule(PayoffSpec::Cubic);
        assert_relative_eq!(r.price(1.0, 0.0).unwrap(), 4.0, epsilon = 1e-14);
        assert_eq!(r.price(2.0, 1.0).unwrap(), 8.0);
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        // Identity and cubic through the raw Gauss–Hermite path versus the
        // closed forms, at 100 deterministic points.
        let mut st = 9u64;
        for _ in 0..100 {
            let y = 8.0 * lcg(&mut st) - 4.0;
            let t = 0.999 * lcg(&mut st);
            let var: f64 = 1.0 - t;
            let sd = var.sqrt();
            let direct = quad::expect_normal(100, |x| y + sd * x);
            assert_relative_eq!(direct, y, epsilon = 1e-12, max_relative = 1e-12);
            let cubic = quad::expect_normal(100, |x| (y + sd * x).powi(3));
            assert_relative_eq!(cubic, y.powi(3) + 3.0 * y * var, epsilon = 1e-11, max_relative = 1e-12);
        }
    }

    #[test]
    fn exp_payoff_matches_lognormal_mean() {
        // Oracle: E[a e^{b(y + sd N)}] = a e^{by + b^2 var / 2}.
        let r = rule(PayoffSpec::Exp { scale: 0.7, rate: 0.5 });
        for &(y, t) in &[(0.0, 0.0), (1.0, 0.3), (-2.0, 0.9)] {
            let var: f64 = 1.0 - t;
            let oracle = 0.7 * (0.5 * y + 0.125 * var).exp();
            assert_relative_eq!(r.price(y, t).unwrap(), oracle, max_relative = 1e-12);
        }
    }

    #[test]
    fn price_is_strictly_increasing_in_y() {
        let rules = vec![
            rule(PayoffSpec::Identity),
            rule(PayoffSpec::Cubic),
            rule(PayoffSpec::Affine { a: 2.0, b: -1.0 }),
            rule(PayoffSpec::Exp { scale: 1.0, rate: 0.4 }),
            rule(PayoffSpec::Table { points: vec![(-1.5, -1.0), (0.0, 0.2), (2.0, 3.0)] }),
        ];
        let mut st = 31u64;
        for r in &rules {
            for _ in 0..40 {
                let t = 0.98 * lcg(&mut st);
                let y1 = 6.0 * lcg(&mut st) - 3.0;
                let y2 = y1 + 1e-3 + 2.0 * lcg(&mut st);
                assert!(
                    r.price(y1, t).unwrap() < r.price(y2, t).unwrap(),
                    "monotonicity at {y1} < {y2}, t = {t}, {:?}",
                    r.payoff
                );
            }
        }
    }

    #[test]
    fn inverse_round_trips() {
        let rules = vec![
            rule(PayoffSpec::Identity),
            rule(PayoffSpec::Cubic),
            rule(PayoffSpec::Exp { scale: 1.0, rate: 0.4 }),
        ];
        let mut st = 77u64;
        for r in &rules {
            for _ in 0..30 {
                let t = 0.99 * lcg(&mut st);
                let y = 8.0 * lcg(&mut st) - 4.0;
                let p = r.price(y, t).unwrap();
                let back = r.inverse_price(p, t).unwrap();
                assert!(
                    (back - y).abs() <= 1e-9 * (1.0 + y.abs()),
                    "round trip {y} -> {p} -> {back} ({:?})",
                    r.payoff
                );
            }
        }
    }

    #[test]
    fn inverse_closed_form_cases() {
        let r = rule(PayoffSpec::Identity);
        assert_eq!(r.inverse_price(1.7, 0.35).unwrap(), 1.7);
        let c = rule(PayoffSpec::Cubic);
        assert_relative_eq!(c.inverse_price(8.0, 1.0).unwrap(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(c.inverse_price(4.0, 0.0).unwrap(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn inverse_rejects_unattainable_and_nonfinite() {
        let r = rule(PayoffSpec::Table { points: vec![(0.0, 0.0), (1.0, 1.0)] });
        assert!(matches!(r.inverse_price(5.0, 1.0), Err(Error::Range(_))));
        assert!(matches!(r.inverse_price(f64::NAN, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn terminal_price_is_the_payoff() {
        let table = PayoffSpec::Table { points: vec![(-1.0, -0.5), (0.5, 0.1), (1.0, 2.0)] };
        let r = rule(table.clone());
        for &y in &[-1.2, -0.3, 0.7, 3.0] {
            assert_eq!(r.price(y, 1.0).unwrap(), table.value(y));
        }
    }

    #[test]
    fn martingale_tower_property() {
        // E_N[H(y + sqrt(rho(t) - rho(s)) N, s)] = H(y, t) for t < s.
        let rules = vec![
            rule(PayoffSpec::Identity),
            rule(PayoffSpec::Cubic),
            rule(PayoffSpec::Exp { scale: 1.0, rate: 0.4 }),
        ];
        let mut st = 5u64;
        for r in &rules {
            for _ in 0..20 {
                let t = 0.8 * lcg(&mut st);
                let s = t + (1.0 - t) * (0.2 + 0.7 * lcg(&mut st));
                let y = 4.0 * lcg(&mut st) - 2.0;
                let gap = (r.rho(t) - r.rho(s)).sqrt();
                let tower = quad::expect_normal(64, |x| r.price(y + gap * x, s).unwrap());
                assert_relative_eq!(tower, r.price(y, t).unwrap(), epsilon = 1e-8, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn pde_residual_identity_and_cubic() {
        let y: Vec<f64> = (-12..=12).map(|i| i as f64 * 0.25).collect();
        let t: Vec<f64> = (1..=9).map(|i| i as f64 * 0.1).collect();
        let r_id = rule(PayoffSpec::Identity).pde_residual(&y, &t, 1e-3, 1e-3).unwrap();
        assert!(r_id.max_abs <= 1e-10, "identity residual {}", r_id.max_abs);
        let r_cub = rule(PayoffSpec::Cubic).pde_residual(&y, &t, 1e-3, 1e-3).unwrap();
        assert!(r_cub.max_abs <= 1e-6, "cubic residual {}", r_cub.max_abs);
    }

    #[test]
    fn pde_residual_weighted_interior() {
        let vol = VolatilitySpec::new(vec![(0.0, 0.6), (0.5, 0.4), (0.5, 1.4), (1.0, 1.2)]).unwrap();
        let p = ModelParams::new(0.1f64.sqrt(), vol, PayoffSpec::Cubic).unwrap();
        let w = p.construct_weighting(&[0.0, 0.5, 1.0]).unwrap();
        let r = PricingRule::weighted(PayoffSpec::Cubic, w);
        let y: Vec<f64> = (-6..=6).map(|i| i as f64 * 0.5).collect();
        let t1: Vec<f64> = vec![0.1, 0.25, 0.4];
        let t2: Vec<f64> = vec![0.6, 0.75, 0.9];
        let r1 = r.pde_residual(&y, &t1, 1e-3, 1e-3).unwrap();
        let r2 = r.pde_residual(&y, &t2, 1e-3, 1e-3).unwrap();
        assert!(r1.max_abs <= 1e-5 && r2.max_abs <= 1e-5, "{} {}", r1.max_abs, r2.max_abs);
        // Touching a breakpoint or the terminal layer is a domain error.
        assert!(r.pde_residual(&y, &[0.5], 1e-3, 1e-3).is_err());
        assert!(r.pde_residual(&y, &[0.9995], 1e-3, 1e-3).is_err());
    }

    #[test]
    fn fundamental_matches_conditional_expectation() {
        let vol = VolatilitySpec::constant(0.5).unwrap();
        let p = ModelParams::new(0.5f64.sqrt(), vol, PayoffSpec::Cubic).unwrap();
        let f = FundamentalValue::new(&p);
        // Remaining firm variance at t = 0.5 is 0.25.
        for &z in &[-1.0, 0.0, 0.7, 2.0] {
            assert_relative_eq!(
                f.value(z, 0.5).unwrap(),
                z.powi(3) + 0.75 * z,
                epsilon = 1e-12
            );
            assert_eq!(f.value(z, 1.0).unwrap(), z.powi(3));
        }
        let id = FundamentalValue {
            payoff: PayoffSpec::Identity,
            vol: p.vol.clone(),
            quadrature_nodes: 64,
        };
        assert_eq!(id.value(1.3, 0.2).unwrap(), 1.3);
    }
}
