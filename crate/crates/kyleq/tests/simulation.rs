//! Cross-module integration: filtering on simulated paths, whiteness,
//! optimality ordering, and efficiency at desk scale. The acceptance
//! suite repeats the headline numbers at full scale.

use kyleq::analysis;
use kyleq::dynamics::{self, StrategySpec};
use kyleq::filter;
use kyleq::grid::TimeGrid;
use kyleq::model::{ModelParams, PayoffSpec, VolatilitySpec};
use kyleq::pricing::PricingRule;

fn params_static() -> ModelParams {
    ModelParams::new(1.0, VolatilitySpec::zero(), PayoffSpec::Identity).unwrap()
}

fn params_const_half() -> ModelParams {
    ModelParams::new(0.5f64.sqrt(), VolatilitySpec::constant(0.5).unwrap(), PayoffSpec::Identity)
        .unwrap()
}

fn params_two_phase() -> ModelParams {
    let vol = VolatilitySpec::new(vec![(0.0, 0.6), (0.5, 0.4), (0.5, 1.4), (1.0, 1.2)]).unwrap();
    ModelParams::new(0.1f64.sqrt(), vol, PayoffSpec::Identity).unwrap()
}

fn markov_grid(p: &ModelParams, m: usize) -> TimeGrid {
    TimeGrid::geometric(m, &dynamics::markov_refine_marks(p), &[]).unwrap()
}

#[test]
fn kalman_mean_tracks_equilibrium_order_flow() {
    // Along the equilibrium the filter mean reproduces the observed flow;
    // the gap is pure discretization and shrinks with the grid.
    let p = params_const_half();
    let rule = PricingRule::markovian(PayoffSpec::Identity);
    let mut prev = f64::INFINITY;
    for m in [1024usize, 4096] {
        let grid = markov_grid(&p, m);
        let cut = grid.prefix(0.9).len();
        let mut worst = 0.0f64;
        for seed in 0..16u64 {
            let b =
                dynamics::simulate_path(&p, &rule, &StrategySpec::EquilibriumMarkov, &grid, seed)
                    .unwrap();
            let times = &grid.nodes()[..cut];
            let out = filter::kalman_filter(&p, times, &b.y[..cut]).unwrap();
            worst = worst.max(out.max_mean_gap);
        }
        assert!(worst < prev, "m={m}: {worst} !< {prev}");
        prev = worst;
    }
    assert!(prev <= 0.02, "max |m - Y| = {prev} at m=4096");
}

#[test]
fn equilibrium_innovations_are_white_per_path() {
    let p = params_const_half();
    let rule = PricingRule::markovian(PayoffSpec::Identity);
    let grid = markov_grid(&p, 1024);
    let cut = grid.prefix(0.9).len();
    let times = &grid.nodes()[..cut];
    let dts: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let n_paths = 2000;
    let mut passes = 0;
    for seed in 0..n_paths {
        let b = dynamics::simulate_path(&p, &rule, &StrategySpec::EquilibriumMarkov, &grid, seed)
            .unwrap();
        let out = filter::kalman_filter(&p, times, &b.y[..cut]).unwrap();
        if filter::innovations_whiteness(&out.innovations, &dts).unwrap().pass {
            passes += 1;
        }
    }
    let rate = passes as f64 / n_paths as f64;
    assert!(rate >= 0.97, "whiteness pass rate {rate}");
}

#[test]
fn diffusive_paths_fail_the_variance_whiteness_test() {
    let p = params_const_half();
    let rule = PricingRule::markovian(PayoffSpec::Identity);
    let grid = markov_grid(&p, 1024);
    let cut = grid.prefix(0.9).len();
    let times = &grid.nodes()[..cut];
    let dts: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let mut variance_failures = 0;
    let n_paths = 100;
    for seed in 0..n_paths {
        let b = dynamics::simulate_path(
            &p,
            &rule,
            &StrategySpec::Diffusive { kappa: 0.5 },
            &grid,
            seed,
        )
        .unwrap();
        let out = filter::kalman_filter(&p, times, &b.y[..cut]).unwrap();
        let rep = filter::innovations_whiteness(&out.innovations, &dts).unwrap();
        if !rep.variance.pass {
            variance_failures += 1;
        }
    }
    assert!(
        variance_failures >= n_paths * 9 / 10,
        "only {variance_failures}/{n_paths} paths flagged"
    );
}

#[test]
fn optimality_ordering_static_market() {
    let p = params_static();
    let rule = PricingRule::markovian(PayoffSpec::Identity);
    let grid = markov_grid(&p, 2048);
    let strategies = vec![
        StrategySpec::EquilibriumMarkov,
        StrategySpec::TargetChasing,
        StrategySpec::Zero,
        StrategySpec::JumpAt { time: 0.5, size: 1.0 },
        StrategySpec::Diffusive { kappa: 0.5 },
    ];
    let table = analysis::optimality_table(&p, &rule, &strategies, &grid, 8_000, 99).unwrap();
    assert!((table.bound - 1.0).abs() < 1e-8);
    assert!(table.violations.is_empty(), "{:?}", table.violations);
    let by_name = |n: &str| table.rows.iter().find(|r| r.strategy.starts_with(n)).unwrap();
    assert_eq!(by_name("zero").mean_wealth, 0.0);
    // The optimal pair is statistically indistinguishable at the bound.
    let eq = by_name("equilibrium");
    let tc = by_name("target");
    let joint = (eq.stderr * eq.stderr + tc.stderr * tc.stderr).sqrt();
    assert!((eq.mean_wealth - tc.mean_wealth).abs() <= 3.0 * joint);
    // Each deliberately suboptimal strategy sits strictly below the bound.
    for name in ["zero", "jump_at", "diffusive"] {
        let row = by_name(name);
        assert!(
            row.mean_wealth < table.bound - 3.0 * row.stderr,
            "{name}: {} vs bound {}",
            row.mean_wealth,
            table.bound
        );
    }
    // Empty strategy list still yields the bound.
    let empty = analysis::optimality_table(&p, &rule, &[], &grid, 8_000, 99).unwrap();
    assert!(empty.rows.is_empty());
    assert!((empty.bound - 1.0).abs() < 1e-8);
}

#[test]
fn efficiency_gain_concentrates_near_the_terminal_time() {
    let p = params_const_half();
    let rule = PricingRule::markovian(PayoffSpec::Identity);
    let probes = [0.5, 0.9, 0.99];
    let grid = TimeGrid::geometric(4096, &dynamics::markov_refine_marks(&p), &probes).unwrap();
    let n = 4_000;
    let with_ins =
        analysis::efficiency_curve(&p, &rule, true, &grid, &probes, n, 2025).unwrap();
    let without =
        analysis::efficiency_curve(&p, &rule, false, &grid, &probes, n, 2026).unwrap();
    // With the insider the squared pricing error tracks the posterior
    // variance D(t) = 0.5 (1 - t) and decreases towards the terminal time.
    assert!(with_ins[0].mean_sq_error > with_ins[1].mean_sq_error);
    assert!(with_ins[1].mean_sq_error > with_ins[2].mean_sq_error);
    let d = |t: f64| 0.5 * (1.0 - t);
    for pt in &with_ins {
        assert!(
            (pt.mean_sq_error - d(pt.t)).abs() <= 5.0 * pt.stderr.max(1e-4),
            "t={}: {} vs {}",
            pt.t,
            pt.mean_sq_error,
            d(pt.t)
        );
    }
    // Without the insider the error stays macroscopic.
    let last_w = &with_ins[2];
    let last_wo = &without[2];
    assert!(last_w.mean_sq_error <= 0.05);
    assert!(last_wo.mean_sq_error >= 0.5);
    let joint = (last_w.stderr.powi(2) + last_wo.stderr.powi(2)).sqrt();
    assert!(last_w.mean_sq_error < last_wo.mean_sq_error - 3.0 * joint);
}

#[test]
fn efficiency_at_the_open_is_insider_independent() {
    let p = params_const_half();
    let rule = PricingRule::markovian(PayoffSpec::Identity);
    let probes = [0.0, 0.5];
    let grid = TimeGrid::geometric(1024, &dynamics::markov_refine_marks(&p), &probes).unwrap();
    // Same base seed: the prior draw happens before any strategy effect,
    // so the t = 0 pricing error is identical path for path.
    let with_ins = analysis::efficiency_curve(&p, &rule, true, &grid, &probes, 4_000, 7).unwrap();
    let without = analysis::efficiency_curve(&p, &rule, false, &grid, &probes, 4_000, 7).unwrap();
    assert_eq!(with_ins[0].mean_sq_error, without[0].mean_sq_error);
    // And the sample mean sits near E[(F(v,0) - H(0,0))^2] = sigma^2.
    assert!(
        (with_ins[0].mean_sq_error - p.sigma_sq()).abs() <= 3.0 * with_ins[0].stderr,
        "{} vs {}",
        with_ins[0].mean_sq_error,
        p.sigma_sq()
    );
}

#[test]
fn weighted_equilibrium_gaps_contract_under_refinement() {
    let p = params_two_phase();
    let w = p.construct_weighting(&[0.0, 0.5, 1.0]).unwrap();
    let rule = PricingRule::weighted(PayoffSpec::Identity, w.clone());
    let strat = StrategySpec::EquilibriumNonMarkov { weighting: w.clone() };
    let marks = dynamics::weighted_refine_marks(&p, &w);
    let mut prev = [f64::INFINITY; 2];
    for m in [512usize, 2048, 8192] {
        let grid = TimeGrid::geometric(m, &marks, &[]).unwrap();
        let st = dynamics::monte_carlo(&p, &rule, &strat, &grid, 1_500, 23).unwrap();
        for (j, g) in st.bridge.iter().enumerate() {
            assert!(g.mean < prev[j], "m={m} target {}: {} !< {}", g.at_time, g.mean, prev[j]);
            prev[j] = g.mean;
        }
    }
}

#[test]
fn weighted_xi_tracks_weighted_flow_increments() {
    let p = params_two_phase();
    let w = p.construct_weighting(&[0.0, 0.5, 1.0]).unwrap();
    let rule = PricingRule::weighted(PayoffSpec::Identity, w.clone());
    let strat = StrategySpec::EquilibriumNonMarkov { weighting: w.clone() };
    let marks = dynamics::weighted_refine_marks(&p, &w);
    let grid = TimeGrid::geometric(512, &marks, &[]).unwrap();
    let b = dynamics::simulate_path(&p, &rule, &strat, &grid, 9).unwrap();
    let nodes = b.grid.nodes();
    for k in 0..nodes.len() - 1 {
        let wk = w.weight_at(nodes[k + 1]);
        let lhs = b.xi[k + 1] - b.xi[k];
        let rhs = wk * (b.y[k + 1] - b.y[k]);
        assert!((lhs - rhs).abs() <= 1e-12, "node {k}: {lhs} vs {rhs}");
        assert!((b.y[k] - (b.theta[k] + b.b2[k])).abs() <= 1e-12);
    }
}

#[test]
fn weighted_target_chaser_also_reveals_at_breakpoints() {
    let p = params_two_phase();
    let w = p.construct_weighting(&[0.0, 0.5, 1.0]).unwrap();
    let rule = PricingRule::weighted(PayoffSpec::Identity, w.clone());
    let strat = StrategySpec::TargetChasingNonMarkov { weighting: w.clone() };
    let marks = dynamics::weighted_refine_marks(&p, &w);
    let grid = TimeGrid::geometric(2048, &marks, &[]).unwrap();
    let st = dynamics::monte_carlo(&p, &rule, &strat, &grid, 1_000, 17).unwrap();
    assert!(st.bridge[0].mean < 0.05, "gap at 0.5: {}", st.bridge[0].mean);
    assert!(st.bridge[1].mean < 0.05, "gap at 1: {}", st.bridge[1].mean);
}

#[test]
fn mismatched_terminal_rule_target_chasing_still_bridges() {
    // Rule terminal layer h(y) = 2y against identity market payoff: the
    // chaser drives Y towards h^{-1}(Z_1) = Z_1 / 2.
    let p = params_static();
    let rule = PricingRule::markovian(PayoffSpec::Affine { a: 2.0, b: 0.0 });
    let grid = markov_grid(&p, 512);
    let b = dynamics::simulate_path(&p, &rule, &StrategySpec::TargetChasing, &grid, 5).unwrap();
    let m = b.y.len() - 1;
    assert!(
        (b.y[m] - b.z[m] / 2.0).abs() < 0.05,
        "Y_1 = {} vs Z_1/2 = {}",
        b.y[m],
        b.z[m] / 2.0
    );
}
