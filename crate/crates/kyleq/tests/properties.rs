//! Property-based invariants over randomized markets and payoffs.

use proptest::prelude::*;

use kyleq::model::{ModelParams, PayoffSpec, VolatilitySpec};
use kyleq::pricing::PricingRule;
use kyleq::scenario::ScenarioConfig;
use kyleq::value::ValueFunction;

/// Random normalized market with linear volatility between two knots.
/// Any such schedule keeps the Markovian denominator positive on [0, 1).
fn arb_params() -> impl Strategy<Value = ModelParams> {
    (0.0..0.9f64, 0.0..0.9f64).prop_map(|(a, b)| {
        let vol = VolatilitySpec::new(vec![(0.0, a), (1.0, b)]).unwrap();
        let sigma = (1.0 - vol.total()).sqrt();
        ModelParams::new(sigma, vol, PayoffSpec::Identity).unwrap()
    })
}

fn arb_payoff() -> impl Strategy<Value = PayoffSpec> {
    prop_oneof![
        Just(PayoffSpec::Identity),
        Just(PayoffSpec::Cubic),
        (0.1..3.0f64, -2.0..2.0f64).prop_map(|(a, b)| PayoffSpec::Affine { a, b }),
        (0.2..1.5f64, 0.1..0.8f64).prop_map(|(scale, rate)| PayoffSpec::Exp { scale, rate }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn cumulative_variance_is_additive_and_monotone(
        p in arb_params(),
        split in 0.01..0.99f64,
        t in 0.0..1.0f64,
    ) {
        let c_split = p.cumulative_variance(split).unwrap();
        let c_one = p.cumulative_variance(1.0).unwrap();
        let tail = c_one - c_split;
        // Additivity over adjacent intervals, exactly.
        prop_assert!((c_split + tail - c_one).abs() <= 1e-14);
        // Monotone in t.
        let c_t = p.cumulative_variance(t).unwrap();
        if t <= split {
            prop_assert!(c_t <= c_split + 1e-14);
        } else {
            prop_assert!(c_t + 1e-14 >= c_split);
        }
    }

    #[test]
    fn normalized_markets_have_vanishing_terminal_denominator(p in arb_params()) {
        prop_assert!(p.markov_denominator(1.0).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn lambda_is_one_at_zero_and_strictly_decreasing(
        p in arb_params(),
        t1 in 0.05..0.5f64,
        gap in 0.05..0.45f64,
    ) {
        prop_assert_eq!(p.lambda_of_t(0.0).unwrap(), 1.0);
        let t2 = t1 + gap;
        let l1 = p.lambda_of_t(t1).unwrap();
        let l2 = p.lambda_of_t(t2).unwrap();
        prop_assert!(l2 < l1, "lambda({t2}) = {l2} !< lambda({t1}) = {l1}");
        prop_assert!(l1 < 1.0 && l1 > 0.0);
    }

    #[test]
    fn constructed_weightings_satisfy_breakpoint_revelation(
        p in arb_params(),
        mid in 0.2..0.8f64,
    ) {
        // The construction may legitimately reject non-increasing weights;
        // whenever it succeeds the revelation residual is zero by build.
        if let Ok(w) = p.construct_weighting(&[0.0, mid, 1.0]) {
            for &t in w.breakpoints() {
                let r = p.cumulative_variance(t).unwrap() + p.sigma_sq() - w.integral_sq(t);
                prop_assert!(r.abs() <= 1e-10, "residual {r} at {t}");
            }
            prop_assert!(w.is_strictly_increasing());
        }
    }

    #[test]
    fn prices_are_monotone_and_invertible(
        payoff in arb_payoff(),
        t in 0.0..0.95f64,
        y in -4.0..4.0f64,
        dy in 0.01..2.0f64,
    ) {
        let rule = PricingRule::markovian(payoff);
        let p1 = rule.price(y, t).unwrap();
        let p2 = rule.price(y + dy, t).unwrap();
        prop_assert!(p2 > p1, "H({}, {t}) = {p2} !> H({y}, {t}) = {p1}", y + dy);
        let back = rule.inverse_price(p1, t).unwrap();
        prop_assert!((back - y).abs() <= 1e-9 * (1.0 + y.abs()), "{y} -> {p1} -> {back}");
    }

    #[test]
    fn terminal_wedge_is_nonnegative_with_root_at_ystar(
        payoff in arb_payoff(),
        y in -3.0..3.0f64,
        z in -2.0..2.0f64,
    ) {
        let params = ModelParams::new(
            1.0,
            VolatilitySpec::zero(),
            payoff.clone(),
        ).unwrap();
        let vf = ValueFunction::new(PricingRule::markovian(payoff), params);
        let j = vf.j_value(y, z).unwrap();
        prop_assert!(j >= -1e-10, "J({y},{z}) = {j}");
        let ys = vf.ystar(z).unwrap();
        let j0 = vf.j_value(ys, z).unwrap();
        prop_assert!(j0.abs() <= 1e-10, "J at ystar = {j0}");
        if (y - ys).abs() > 1e-3 {
            prop_assert!(j > 0.0);
        }
    }

    #[test]
    fn scenario_config_round_trips(
        size in 64..2048usize,
        n_paths in 2..5000usize,
        seed in any::<u64>(),
        c in 0.0..0.9f64,
    ) {
        let sigma = (1.0 - c / 2.0 - c / 2.0).sqrt();
        let json = format!(
            r#"{{
                "model": {{
                    "sigma": {sigma},
                    "vol": {{ "knots": [[0.0, {c}], [1.0, {c}]] }},
                    "payoff": {{ "family": "cubic" }}
                }},
                "pricing": {{ "kind": "markovian", "quadrature_nodes": 48 }},
                "grid": {{ "mode": "uniform", "size": {size} }},
                "run": {{ "n_paths": {n_paths}, "base_seed": {seed},
                          "strategies": [ {{ "kind": "diffusive", "kappa": 0.5 }} ],
                          "probe_times": [0.5] }}
            }}"#
        );
        let cfg = ScenarioConfig::from_json(&json).unwrap();
        let text = cfg.to_json();
        let back = ScenarioConfig::from_json(&text).unwrap();
        prop_assert_eq!(&cfg, &back);
        // Serialization is stable: a second round trip is byte-identical.
        prop_assert_eq!(text.clone(), back.to_json());
        let scen = cfg.build().unwrap();
        prop_assert_eq!(scen.base_seed, seed);
    }
}
