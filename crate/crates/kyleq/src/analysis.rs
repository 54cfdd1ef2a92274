//! Statistical verification of the equilibrium claims.
//!
//! Inconspicuousness: along the equilibrium the total order is a standard
//! Brownian motion in its own filtration, so pooled normalized increments
//! across an ensemble must look exactly standard normal. The battery runs
//! per-interval KS and variance tests (Bonferroni-adjusted within each
//! component) plus a pooled lag-1 autocorrelation bound; block trades
//! break the KS test on the spanning interval, diffusive perturbations
//! break the variance band.
//!
//! Efficiency: mean squared gap between the fundamental value and the
//! price, with the insider (equilibrium paths) versus without (the same
//! rule fed pure noise flow).

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, GapStats, ProbeEnsemble, ProfitStats, StrategySpec};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::ModelParams;
use crate::pricing::{FundamentalValue, PricingRule};
use crate::stats::{self, TestOutcome};
use crate::value::{self, ValueFunction};

/// Familywise significance per test component (KS, variance, autocorr).
pub const COMPONENT_ALPHA: f64 = 0.005;

/// Verdicts for one probe interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalTest {
    pub t0: f64,
    pub t1: f64,
    pub ks: TestOutcome,
    pub variance: TestOutcome,
}

/// Increment-normality battery over an ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalityReport {
    pub intervals: Vec<IntervalTest>,
    pub autocorr: TestOutcome,
    pub n_paths: usize,
    pub pass: bool,
}

/// Tests whether per-path increments between consecutive probe times are
/// i.i.d. Gaussian with the Brownian variance. `y_paths[p][j]` is the
/// level of path `p` at `probe_times[j]`.
pub fn inconspicuousness_test(
    y_paths: &[Vec<f64>],
    probe_times: &[f64],
) -> Result<NormalityReport> {
    let n_paths = y_paths.len();
    if n_paths < 1000 {
        return Err(Error::domain("inconspicuousness test needs >= 1000 paths"));
    }
    let k = probe_times.len().saturating_sub(1);
    if k < 2 {
        return Err(Error::domain("need at least two probe intervals"));
    }
    // Normalized increments per interval, pooled across paths.
    let mut pooled: Vec<Vec<f64>> = vec![Vec::with_capacity(n_paths); k];
    for path in y_paths {
        if path.len() != probe_times.len() {
            return Err(Error::domain("path probe count mismatch"));
        }
        for j in 0..k {
            let dt = probe_times[j + 1] - probe_times[j];
            pooled[j].push((path[j + 1] - path[j]) / dt.sqrt());
        }
    }

    let ks_thresh_alpha = COMPONENT_ALPHA / k as f64;
    let var_z = stats::z_critical(COMPONENT_ALPHA / k as f64);
    let mut intervals = Vec::with_capacity(k);
    let mut pass = true;
    for j in 0..k {
        let n = pooled[j].len();
        let var = stats::variance(&pooled[j]);
        let d = stats::ks_statistic_normal(&mut pooled[j]);
        let ks = TestOutcome::new(
            format!("ks[{:.4},{:.4}]", probe_times[j], probe_times[j + 1]),
            d,
            stats::ks_critical(ks_thresh_alpha, n),
            n,
        );
        let variance = TestOutcome::new(
            format!("variance[{:.4},{:.4}]", probe_times[j], probe_times[j + 1]),
            var - 1.0,
            var_z * (2.0 / (n as f64 - 1.0)).sqrt(),
            n,
        );
        pass &= ks.pass && variance.pass;
        intervals.push(IntervalTest { t0: probe_times[j], t1: probe_times[j + 1], ks, variance });
    }

    // Pooled lag-1 autocorrelation of consecutive interval increments.
    let mut pairs = Vec::with_capacity(n_paths * (k - 1));
    for path in y_paths {
        for j in 0..k - 1 {
            let dt0 = probe_times[j + 1] - probe_times[j];
            let dt1 = probe_times[j + 2] - probe_times[j + 1];
            pairs.push((
                (path[j + 1] - path[j]) / dt0.sqrt(),
                (path[j + 2] - path[j + 1]) / dt1.sqrt(),
            ));
        }
    }
    let r1 = stats::lag1_autocorr(&pairs);
    let autocorr = TestOutcome::new(
        "lag1_autocorr",
        r1,
        stats::z_critical(COMPONENT_ALPHA) / (pairs.len() as f64).sqrt(),
        pairs.len(),
    );
    pass &= autocorr.pass;
    Ok(NormalityReport { intervals, autocorr, n_paths, pass })
}

/// Bridge-error decay across a family of grids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BridgeStudy {
    /// One entry per grid: node count and the gap summary at each target.
    pub per_grid: Vec<(usize, Vec<GapStats>)>,
    /// Mean-gap ratio between consecutive grids at the terminal target.
    pub ratios: Vec<f64>,
}

/// Runs the same ensemble on each grid and summarizes the revelation gaps.
pub fn bridge_error_study(
    params: &ModelParams,
    rule: &PricingRule,
    strategy: &StrategySpec,
    grids: &[TimeGrid],
    n_paths: usize,
    base_seed: u64,
) -> Result<BridgeStudy> {
    let mut per_grid = Vec::with_capacity(grids.len());
    for g in grids {
        let st = dynamics::monte_carlo(params, rule, strategy, g, n_paths, base_seed)?;
        per_grid.push((g.len(), st.bridge));
    }
    let mut ratios = Vec::new();
    for w in per_grid.windows(2) {
        let prev = w[0].1.last().map(|g| g.mean).unwrap_or(f64::NAN);
        let next = w[1].1.last().map(|g| g.mean).unwrap_or(f64::NAN);
        ratios.push(next / prev);
    }
    Ok(BridgeStudy { per_grid, ratios })
}

/// One probe of the pricing-error curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EfficiencyPoint {
    pub t: f64,
    pub mean_sq_error: f64,
    pub stderr: f64,
    pub n_paths: usize,
}

/// Monte Carlo estimate of `E[(F(Z_t, t) - P_t)^2]` at each probe time.
///
/// With the insider the ensemble follows the equilibrium strategy; without,
/// the same pricing rule is applied to pure noise flow.
pub fn efficiency_curve(
    params: &ModelParams,
    rule: &PricingRule,
    with_insider: bool,
    grid: &TimeGrid,
    probe_times: &[f64],
    n_paths: usize,
    base_seed: u64,
) -> Result<Vec<EfficiencyPoint>> {
    if probe_times.iter().any(|&t| !(0.0..1.0).contains(&t)) {
        return Err(Error::domain("probe times must lie in [0, 1)"));
    }
    let strategy = if with_insider {
        match rule.remaining.weighting() {
            Some(w) => StrategySpec::EquilibriumNonMarkov { weighting: w.clone() },
            None => StrategySpec::EquilibriumMarkov,
        }
    } else {
        StrategySpec::Zero
    };
    let ens = dynamics::probe_ensemble(params, rule, &strategy, grid, probe_times, n_paths, base_seed)?;
    let fund = FundamentalValue::new(params);
    let mut points = Vec::with_capacity(ens.probe_times.len());
    for (j, &t) in ens.probe_times.iter().enumerate() {
        let mut sq = Vec::with_capacity(n_paths);
        for path in &ens.values {
            let (_, z, p) = path[j];
            let gap = fund.value(z, t)? - p;
            sq.push(gap * gap);
        }
        let (mean, se) = stats::mean_stderr(&sq);
        points.push(EfficiencyPoint { t, mean_sq_error: mean, stderr: se, n_paths });
    }
    Ok(points)
}

/// Snapshot ensembles for custom statistics (re-exported convenience).
pub fn probe_ensemble(
    params: &ModelParams,
    rule: &PricingRule,
    strategy: &StrategySpec,
    grid: &TimeGrid,
    probe_times: &[f64],
    n_paths: usize,
    base_seed: u64,
) -> Result<ProbeEnsemble> {
    dynamics::probe_ensemble(params, rule, strategy, grid, probe_times, n_paths, base_seed)
}

/// Profit table row set with the theoretical bound and dominance flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimalityTable {
    pub bound: f64,
    pub rows: Vec<ProfitStats>,
    /// Human-readable violations of the expected ordering.
    pub violations: Vec<String>,
}

/// Runs each strategy and compares its mean wealth against the profit
/// bound: optimal strategies must attain it within noise, the rest must
/// fall strictly below.
pub fn optimality_table(
    params: &ModelParams,
    rule: &PricingRule,
    strategies: &[StrategySpec],
    grid: &TimeGrid,
    n_paths: usize,
    base_seed: u64,
) -> Result<OptimalityTable> {
    let vf = ValueFunction::new(rule.clone(), params.clone());
    let bound = match rule.remaining.weighting() {
        Some(w) => value::nonmarkov_profit_upper_bound(&vf, w)?,
        None => vf.profit_upper_bound()?,
    };
    let mut rows = Vec::with_capacity(strategies.len());
    for (i, s) in strategies.iter().enumerate() {
        rows.push(dynamics::monte_carlo(
            params,
            rule,
            s,
            grid,
            n_paths,
            base_seed.wrapping_add(i as u64),
        )?);
    }
    let mut violations = Vec::new();
    for row in &rows {
        let optimal = row.strategy.starts_with("equilibrium") || row.strategy.starts_with("target");
        if optimal {
            if (row.mean_wealth - bound).abs() > 3.0 * row.stderr {
                violations.push(format!(
                    "{} should attain the bound: mean {} vs bound {bound}",
                    row.strategy, row.mean_wealth
                ));
            }
        } else if row.mean_wealth > bound - 3.0 * row.stderr {
            violations.push(format!(
                "{} should fall below the bound: mean {} vs bound {bound}",
                row.strategy, row.mean_wealth
            ));
        }
    }
    Ok(OptimalityTable { bound, rows, violations })
}

/// Combined report emitted by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub normality: Option<NormalityReport>,
    pub bridge: Vec<GapStats>,
    pub efficiency_with_insider: Vec<EfficiencyPoint>,
    pub efficiency_without_insider: Vec<EfficiencyPoint>,
    pub profit: Option<OptimalityTable>,
    pub n_paths: usize,
    pub base_seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal, CounterRng};

    fn brownian_ensemble(n_paths: usize, probes: &[f64], seed: u64) -> Vec<Vec<f64>> {
        (0..n_paths)
            .map(|i| {
                let mut rng = CounterRng::for_path(seed, i as u64);
                let mut acc = 0.0;
                let mut out = vec![0.0];
                for w in probes.windows(2) {
                    acc += (w[1] - w[0]).sqrt() * normal(&mut rng);
                    out.push(acc);
                }
                out
            })
            .collect()
    }

    fn probes() -> Vec<f64> {
        (0..=16).map(|j| j as f64 / 16.0).collect()
    }

    #[test]
    fn calibration_on_brownian_ensembles() {
        // Synthetic data satisfying the null exactly: failure rate over 100
        // repetitions stays within the stated tolerance.
        let p = probes();
        let mut failures = 0;
        for rep in 0..100 {
            let ens = brownian_ensemble(1000, &p, 9000 + rep);
            let rep = inconspicuousness_test(&ens, &p).unwrap();
            if !rep.pass {
                failures += 1;
            }
        }
        assert!(failures <= 3, "{failures} calibration failures out of 100");
    }

    #[test]
    fn detects_block_trade_shift() {
        let p = probes();
        let mut ens = brownian_ensemble(2000, &p, 5);
        // Add a unit shift at t >= 0.5 on every path (a block trade).
        for path in &mut ens {
            for (j, &t) in p.iter().enumerate() {
                if t >= 0.5 {
                    path[j] += 1.0;
                }
            }
        }
        let rep = inconspicuousness_test(&ens, &p).unwrap();
        assert!(!rep.pass);
        // The interval ending at 0.5 carries the shift.
        let bad = rep
            .intervals
            .iter()
            .find(|iv| (iv.t1 - 0.5).abs() < 1e-12)
            .unwrap();
        assert!(!bad.ks.pass, "expected KS failure on the spanning interval");
    }

    #[test]
    fn detects_inflated_variance() {
        let p = probes();
        let mut ens = brownian_ensemble(2000, &p, 6);
        for path in &mut ens {
            for x in path.iter_mut() {
                *x *= (1.25f64).sqrt();
            }
        }
        let rep = inconspicuousness_test(&ens, &p).unwrap();
        assert!(!rep.pass);
        assert!(rep.intervals.iter().any(|iv| !iv.variance.pass));
    }
}
