//! Gaussian quadrature and adaptive integration.
//!
//! Three layers:
//!
//! 1. Fixed rules: Gauss–Legendre on `[-1, 1]` and Gauss–Hermite in the
//!    probabilists' normalization (`expect_normal` computes `E[g(N)]`,
//!    `N ~ N(0,1)`). Nodes are found by Newton iteration on the orthonormal
//!    recurrences; both rules are exact for polynomials up to degree
//!    `2n - 1`, which the tests exploit as a self-check.
//! 2. `adaptive`: h-adaptive bisection with a 15-point Gauss panel and the
//!    two-half refinement as the error estimate. Intended for integrands
//!    that are smooth on the closed interval (possibly very steep near an
//!    endpoint).
//! 3. `improper_towards`: integrals with a singular endpoint. The interval
//!    is sliced geometrically towards the singular end and each slice is
//!    integrated adaptively; the partial-sum trajectory classifies the
//!    integral as convergent or divergent.

use std::collections::HashMap;
use std::sync::{Arc, LazyLock, Mutex};

use crate::error::{Error, Result};

/// A quadrature rule: paired nodes and weights.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

const NEWTON_EPS: f64 = 3e-15;
const NEWTON_MAX_IT: usize = 100;

/// Gauss–Legendre nodes/weights on `[-1, 1]`.
fn legendre_rule(n: usize) -> Rule {
    assert!(n >= 2, "legendre rule needs n >= 2");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi-style initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..NEWTON_MAX_IT {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            // P_n'(x) = n (x P_n - P_{n-1}) / (x^2 - 1)
            pp = (n as f64) * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / pp;
            x -= dx;
            if dx.abs() <= NEWTON_EPS {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * pp * pp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

/// Gauss–Hermite nodes/weights for the weight `exp(-x^2)` (physicists').
fn hermite_rule(n: usize) -> Rule {
    assert!(n >= 2, "hermite rule needs n >= 2");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let pi4 = std::f64::consts::PI.powf(-0.25);
    let mut x = 0.0f64;
    for i in 0..m {
        // Standard asymptotic seeds for the largest roots, then extrapolation.
        x = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => x - 1.14 * nf.powf(0.426) / x,
            2 => 1.86 * x - 0.86 * nodes[n - 1],
            3 => 1.91 * x - 0.91 * nodes[n - 2],
            _ => 2.0 * x - nodes[n - i + 1],
        };
        let mut dp = 0.0;
        for _ in 0..NEWTON_MAX_IT {
            // Orthonormal recurrence keeps magnitudes tame up to large n.
            let mut p0 = pi4;
            let mut p1 = std::f64::consts::SQRT_2 * x * p0;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = x * (2.0 / kf).sqrt() * p1 - ((kf - 1.0) / kf).sqrt() * p0;
                p0 = p1;
                p1 = p2;
            }
            dp = (2.0 * nf).sqrt() * p0;
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() <= NEWTON_EPS * (1.0 + x.abs()) {
                break;
            }
        }
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        let w = 2.0 / (dp * dp);
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

static HERMITE_CACHE: LazyLock<Mutex<HashMap<usize, Arc<Rule>>>> =
    LazyLock::new(|| Mutex::new(HashMap::new()));

/// Gauss–Hermite rule transformed so that `sum_i w_i g(x_i) = E[g(N)]`
/// for `N ~ N(0, 1)`, exact for polynomial `g` of degree `< 2n`.
pub fn normal_rule(n: usize) -> Arc<Rule> {
    let mut cache = HERMITE_CACHE.lock().unwrap();
    cache
        .entry(n)
        .or_insert_with(|| {
            let raw = hermite_rule(n);
            let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
            Arc::new(Rule {
                nodes: raw.nodes.iter().map(|x| std::f64::consts::SQRT_2 * x).collect(),
                weights: raw.weights.iter().map(|w| w * inv_sqrt_pi).collect(),
            })
        })
        .clone()
}

/// `E[g(N)]` for `N ~ N(0,1)` by an `n`-node Gauss–Hermite rule.
pub fn expect_normal(n: usize, mut g: impl FnMut(f64) -> f64) -> f64 {
    let rule = normal_rule(n);
    let mut acc = 0.0;
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        acc += w * g(x);
    }
    acc
}

static GL15: LazyLock<Rule> = LazyLock::new(|| legendre_rule(15));

fn panel(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = 0.0;
    for (&x, &w) in GL15.nodes.iter().zip(&GL15.weights) {
        acc += w * f(c + h * x);
    }
    acc * h
}

const ADAPT_MAX_DEPTH: usize = 64;

fn adapt_rec(
    f: &mut impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    whole: f64,
    rtol: f64,
    atol: f64,
    depth: usize,
) -> Result<f64> {
    let mid = 0.5 * (a + b);
    let left = panel(f, a, mid);
    let right = panel(f, mid, b);
    let refined = left + right;
    if !refined.is_finite() {
        return Err(Error::numeric(format!("integrand not finite on [{a}, {b}]")));
    }
    let err = (refined - whole).abs();
    if err <= atol + rtol * refined.abs() || depth == 0 || mid <= a || mid >= b {
        return Ok(refined);
    }
    let l = adapt_rec(f, a, mid, left, rtol, 0.5 * atol, depth - 1)?;
    let r = adapt_rec(f, mid, b, right, rtol, 0.5 * atol, depth - 1)?;
    Ok(l + r)
}

/// Adaptive integral of `f` over `[a, b]` (`a > b` flips the sign).
///
/// The integrand must be finite on the closed interval; steep behavior
/// near an endpoint is resolved by bisection down to machine-width panels.
pub fn adaptive(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, rtol: f64, atol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return adaptive(f, b, a, rtol, atol).map(|v| -v);
    }
    let whole = panel(&mut f, a, b);
    adapt_rec(&mut f, a, b, whole, rtol, atol, ADAPT_MAX_DEPTH)
}

/// Outcome of an improper-integral evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Improper {
    /// Finite value (the slice contributions decayed to tolerance).
    Convergent(f64),
    /// Diverges at the singular endpoint; carries the last partial sum.
    Divergent { partial: f64 },
}

impl Improper {
    pub fn is_convergent(&self) -> bool {
        matches!(self, Improper::Convergent(_))
    }

    pub fn value(&self) -> f64 {
        match *self {
            Improper::Convergent(v) => v,
            Improper::Divergent { partial } => partial,
        }
    }
}

/// Partial-sum blowup threshold for declaring power-law divergence.
pub const DIVERGENCE_SUM_LIMIT: f64 = 1e8;
/// Relative growth per refinement that still counts as "growing".
pub const DIVERGENCE_GROWTH: f64 = 0.01;

const IMPROPER_MAX_SLICES: usize = 64;
const IMPROPER_RTOL: f64 = 1e-10;

/// Integrate `f` over `[a, b)` where `f` may blow up as `t -> b`.
///
/// Slices `[a, b - (b-a) 2^-j]` geometrically towards `b`. Classification:
///
/// - convergent once two consecutive slice contributions fall below the
///   relative tolerance;
/// - divergent when partial sums exceed [`DIVERGENCE_SUM_LIMIT`] while
///   still growing by more than [`DIVERGENCE_GROWTH`] per refinement
///   (power-law blowup), or when the slice contributions never decay
///   within the slice budget (slow, e.g. logarithmic, divergence).
pub fn improper_towards(mut f: impl FnMut(f64) -> f64, a: f64, b: f64) -> Result<Improper> {
    if b.partial_cmp(&a) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::domain(format!("improper integral needs a < b, got [{a}, {b})")));
    }
    let width = b - a;
    let mut sum = 0.0f64;
    let mut lo = a;
    let mut small_streak = 0usize;
    let mut contribs: Vec<f64> = Vec::with_capacity(IMPROPER_MAX_SLICES);
    for j in 1..=IMPROPER_MAX_SLICES {
        let hi = b - width * 0.5f64.powi(j as i32);
        // Stop well before floating-point cancellation in the integrand's
        // denominator corrupts the slice contributions.
        if hi <= lo || b - hi <= width * 0.5f64.powi(40) {
            break;
        }
        let contrib = adaptive(&mut f, lo, hi, IMPROPER_RTOL, 0.0)?;
        sum += contrib;
        contribs.push(contrib);
        if !sum.is_finite() {
            return Ok(Improper::Divergent { partial: sum });
        }
        if contrib.abs() <= IMPROPER_RTOL * (1.0 + sum.abs()) {
            small_streak += 1;
            if small_streak >= 2 {
                return Ok(Improper::Convergent(sum));
            }
        } else {
            small_streak = 0;
        }
        lo = hi;
    }
    // Slice budget (or floating-point width) exhausted: classify by the
    // tail behavior of the contributions. Power-law divergence shows up as
    // a partial sum beyond the blowup limit that is still growing;
    // logarithmic divergence as contributions that refuse to decay.
    let n = contribs.len();
    if n < 3 {
        return Ok(Improper::Convergent(sum));
    }
    let (c2, c1, c0) = (contribs[n - 1].abs(), contribs[n - 2].abs(), contribs[n - 3].abs());
    if sum.abs() > DIVERGENCE_SUM_LIMIT && c2 > DIVERGENCE_GROWTH * sum.abs() && c2 >= c1 {
        return Ok(Improper::Divergent { partial: sum });
    }
    let ratio = (c2 + c1) / (c1 + c0).max(f64::MIN_POSITIVE);
    if ratio >= 0.97 {
        return Ok(Improper::Divergent { partial: sum });
    }
    // Convergent with a geometrically decaying tail: extrapolate the
    // remaining mass past the last resolvable slice.
    let tail = contribs[n - 1] * ratio / (1.0 - ratio);
    Ok(Improper::Convergent(sum + tail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn double_factorial(k: i64) -> f64 {
        let mut acc = 1.0;
        let mut i = k;
        while i > 1 {
            acc *= i as f64;
            i -= 2;
        }
        acc
    }

    #[test]
    fn legendre_integrates_monomials_exactly() {
        // GL15 is exact through degree 29.
        for k in 0..=29u32 {
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            let got: f64 = GL15
                .nodes
                .iter()
                .zip(&GL15.weights)
                .map(|(&x, &w)| w * x.powi(k as i32))
                .sum();
            assert!((got - exact).abs() < 2e-14, "degree {k}: {got} vs {exact}");
        }
    }

    #[test]
    fn hermite_matches_normal_moments() {
        // E[N^{2k}] = (2k-1)!! up to the rule's exactness degree.
        for &n in &[20usize, 64, 96] {
            for k in 0..=15u32 {
                let exact = double_factorial(2 * k as i64 - 1);
                let got = expect_normal(n, |x| x.powi(2 * k as i32));
                assert!(
                    (got - exact).abs() <= 1e-12 * exact.max(1.0),
                    "n={n} moment {k}: {got} vs {exact}"
                );
            }
            assert_relative_eq!(expect_normal(n, |_| 1.0), 1.0, epsilon = 1e-14);
            assert!(expect_normal(n, |x| x).abs() < 1e-14);
        }
    }

    #[test]
    fn adaptive_handles_steep_integrands() {
        // int_0^t (1-s)^-2 ds = t/(1-t), steep but proper for t < 1.
        let t = 1.0 - 2f64.powi(-20);
        let got = adaptive(|s| (1.0 - s).powi(-2), 0.0, t, 1e-10, 0.0).unwrap();
        assert_relative_eq!(got, t / (1.0 - t), max_relative = 1e-9);
    }

    #[test]
    fn adaptive_is_signed() {
        let fwd = adaptive(|x| x * x, 0.0, 2.0, 1e-12, 0.0).unwrap();
        let bwd = adaptive(|x| x * x, 2.0, 0.0, 1e-12, 0.0).unwrap();
        assert_relative_eq!(fwd, 8.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(bwd, -fwd, epsilon = 1e-15);
    }

    #[test]
    fn improper_classifies_convergent_root_singularity() {
        // int_0^1 (1-s)^{-1/2} ds = 2.
        let out = improper_towards(|s| (1.0 - s).powf(-0.5), 0.0, 1.0).unwrap();
        match out {
            Improper::Convergent(v) => assert_relative_eq!(v, 2.0, max_relative = 1e-7),
            Improper::Divergent { .. } => panic!("should converge"),
        }
    }

    #[test]
    fn improper_classifies_log_divergence() {
        // int_0^1 (1-s)^-1 ds diverges logarithmically: partial sums grow
        // linearly in the slice count and never hit the blowup limit.
        let out = improper_towards(|s| 1.0 / (1.0 - s), 0.0, 1.0).unwrap();
        assert!(matches!(out, Improper::Divergent { .. }));
    }

    #[test]
    fn improper_classifies_power_divergence() {
        let out = improper_towards(|s| (1.0 - s).powi(-2), 0.0, 1.0).unwrap();
        assert!(matches!(out, Improper::Divergent { .. }));
    }

    #[test]
    fn improper_keeps_large_but_finite_integrals_convergent() {
        // Steep quartic blowup truncated just before the singularity: the
        // value exceeds the blowup limit yet the integral is proper.
        let t = 1.0 - 2f64.powi(-20);
        let exact = ((1.0 - t).powi(-3) - 1.0) / 3.0;
        let out = improper_towards(|s| (1.0 - s).powi(-4), 0.0, t).unwrap();
        match out {
            Improper::Convergent(v) => assert_relative_eq!(v, exact, max_relative = 1e-8),
            Improper::Divergent { .. } => panic!("proper integral misclassified"),
        }
    }
}
