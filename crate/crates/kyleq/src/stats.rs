//! Small statistics toolbox for the verification suites.

use serde::{Deserialize, Serialize};

/// Abramowitz & Stegun 7.1.26 rational approximation, max error ~1.5e-7.
pub fn erf(x: f64) -> f64 {
    let sign = if x >= 0.0 { 1.0 } else { -1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

/// Kolmogorov–Smirnov statistic of a sample against the standard normal.
pub fn ks_statistic_normal(sample: &mut [f64]) -> f64 {
    sample.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sample.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sample.iter().enumerate() {
        let c = norm_cdf(x);
        let lo = (c - i as f64 / n).abs();
        let hi = ((i as f64 + 1.0) / n - c).abs();
        d = d.max(lo).max(hi);
    }
    d
}

/// Asymptotic KS critical value at significance `alpha`: `c(alpha)/sqrt(n)`
/// with `c(alpha) = sqrt(-ln(alpha/2)/2)`.
pub fn ks_critical(alpha: f64, n: usize) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Two-sided z threshold: `Phi^{-1}(1 - alpha/2)` by bisection on the CDF.
pub fn z_critical(alpha: f64) -> f64 {
    let target = 1.0 - alpha / 2.0;
    let (mut lo, mut hi) = (0.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if norm_cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Mean and standard error of a sample.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Sample variance (unbiased).
pub fn variance(xs: &[f64]) -> f64 {
    let (mean, _) = mean_stderr(xs);
    let n = xs.len() as f64;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

/// Lag-1 autocorrelation estimate over consecutive pairs.
///
/// Pairs may pool several independent series; pass the pairs explicitly so
/// series boundaries are never straddled.
pub fn lag1_autocorr(pairs: &[(f64, f64)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for &(x, y) in pairs {
        num += (x - mx) * (y - my);
        dx += (x - mx) * (x - mx);
        dy += (y - my) * (y - my);
    }
    num / (dx.sqrt() * dy.sqrt()).max(f64::MIN_POSITIVE)
}

/// One named test outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestOutcome {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    pub samples: usize,
}

impl TestOutcome {
    pub fn new(name: impl Into<String>, statistic: f64, threshold: f64, samples: usize) -> Self {
        TestOutcome {
            name: name.into(),
            pass: statistic.abs() <= threshold,
            statistic,
            threshold,
            samples,
        }
    }
}
