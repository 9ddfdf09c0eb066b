use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use pulsefront::model::{
    a_priori_bound, apply_harvest, bound_from_parts, harvest_slope0, validate_hypotheses, Coefficients, FrontierParams,
    HarvestRule, InitialData, Periodic, Rates,
};
use pulsefront::{Error, KernelSpec};

fn rates(b: f64, a: f64, alpha1: f64, alpha2: f64) -> Rates {
    Rates { b, a, m1: 0.5, m2: 0.5, alpha1, alpha2 }
}

fn coeffs(r: Rates) -> Coefficients {
    Coefficients::constant(1.0, 1.0, 1.0, r).unwrap()
}

#[test]
fn harvest_examples() {
    assert_eq!(apply_harvest(&HarvestRule::Linear { c: 0.5 }, 2.0).unwrap(), 1.0);
    assert_eq!(apply_harvest(&HarvestRule::BevertonHolt { m: 2.0, a: 1.0 }, 1.0).unwrap(), 1.0);
    let r = apply_harvest(&HarvestRule::Ricker { r: 0.1, b: 1.0 }, 0.5).unwrap();
    assert_abs_diff_eq!(r, 0.5 * (-0.4f64).exp(), epsilon = 1e-16);
    assert_eq!(apply_harvest(&HarvestRule::Identity, 0.0).unwrap(), 0.0);
    assert!(matches!(apply_harvest(&HarvestRule::Linear { c: 0.5 }, -1e-300), Err(Error::NegativeDensity(_))));
}

#[test]
fn slope_examples() {
    assert_eq!(harvest_slope0(&HarvestRule::Linear { c: 0.7 }), 0.7);
    assert_eq!(harvest_slope0(&HarvestRule::BevertonHolt { m: 2.0, a: 4.0 }), 0.5);
    assert_eq!(harvest_slope0(&HarvestRule::Ricker { r: 0.0, b: 3.0 }), 1.0);
    assert_eq!(harvest_slope0(&HarvestRule::Identity), 1.0);
}

#[test]
fn bound_examples() {
    let c = coeffs(rates(1.0, 1.0, 1.0, 1.0));
    assert_eq!(a_priori_bound(&c, &InitialData::bump(1.0, 0.5, 0.5)), 1.0);
    let c = coeffs(rates(4.0, 2.0, 2.0, 1.0));
    assert_eq!(a_priori_bound(&c, &InitialData::bump(1.0, 2.0, 2.0)), 2.0);
    let c = coeffs(rates(3.0, 1.0, 2.0, 4.0));
    assert_eq!(a_priori_bound(&c, &InitialData::bump(1.0, 0.1, 0.1)), 1.5);
}

#[test]
fn bound_uses_sup_and_inf_of_tables() {
    let mut c = coeffs(rates(1.0, 1.0, 1.0, 1.0));
    c.b = Periodic::Table(vec![1.0, 3.0, 2.0]);
    c.alpha1 = Periodic::Table(vec![2.0, 1.5]);
    assert_eq!(a_priori_bound(&c, &InitialData::bump(1.0, 0.1, 0.1)), 2.0);
}

#[test]
fn hypothesis_examples() {
    let k = KernelSpec::triangular(1.0).unwrap();
    let fp = FrontierParams { mu1: 1.0, mu2: 1.0, h0: 1.0 };
    let init = InitialData::bump(1.0, 1.0, 1.0);
    // A = 10 so (A) is checked on [0, 10]
    let c = coeffs(rates(10.0, 1.0, 1.0, 1.0));
    let ok = validate_hypotheses(&k, &k, &c, &HarvestRule::Linear { c: 0.5 }, &fp, &init);
    assert!(ok.all_passed());

    let ricker = validate_hypotheses(&k, &k, &c, &HarvestRule::Ricker { r: 0.5, b: 1.0 }, &fp, &init);
    assert!(!ricker.harvest.passed);
    let w = ricker.harvest.witness.unwrap();
    assert!(w > 0.0 && w < 0.5, "witness {w}");
    assert!((0.5 - w).exp() > 1.0);

    let bad = InitialData::samples(1.0, vec![0.1, 1.0, 0.0], vec![0.0, 1.0, 0.0]).unwrap();
    let report = validate_hypotheses(&k, &k, &c, &HarvestRule::Linear { c: 0.5 }, &fp, &bad);
    assert!(!report.initial.passed);
    assert!(report.kernel.passed && report.harvest.passed);
}

#[test]
fn identity_and_unit_linear_fail_strict_inequality() {
    let k = KernelSpec::triangular(1.0).unwrap();
    let fp = FrontierParams { mu1: 1.0, mu2: 1.0, h0: 1.0 };
    let init = InitialData::bump(1.0, 1.0, 1.0);
    let c = coeffs(rates(1.0, 1.0, 1.0, 1.0));
    for rule in [HarvestRule::Identity, HarvestRule::Linear { c: 1.0 }] {
        assert!(!validate_hypotheses(&k, &k, &c, &rule, &fp, &init).harvest.passed);
    }
}

#[test]
fn validation_collects_all_errors() {
    let r = Rates { b: -1.0, a: 0.0, m1: 0.5, m2: 0.5, alpha1: 1.0, alpha2: 1.0 };
    let Err(Error::InvalidParams(msg)) = Coefficients::constant(1.0, -1.0, 1.0, r) else {
        panic!("expected rejection");
    };
    for needle in ["b", "a", "d2"] {
        assert!(msg.contains(needle), "{msg}");
    }
}

fn rule_strategy() -> impl Strategy<Value = HarvestRule> {
    prop_oneof![
        (0.01f64..0.99).prop_map(|c| HarvestRule::Linear { c }),
        (0.1f64..5.0, 0.1f64..5.0).prop_map(|(m, a)| HarvestRule::BevertonHolt { m: m.min(0.99 * a), a }),
        (-2.0f64..-0.01, 0.1f64..3.0).prop_map(|(r, b)| HarvestRule::Ricker { r, b }),
    ]
}

proptest! {
    #[test]
    fn ratio_nonincreasing(rule in rule_strategy(), upper in 0.1f64..20.0) {
        let mut prev = f64::INFINITY;
        for j in 1..=200 {
            let u = upper * j as f64 / 200.0;
            let q = apply_harvest(&rule, u).unwrap() / u;
            prop_assert!(q <= prev * (1.0 + 1e-14));
            prev = q;
        }
    }

    #[test]
    fn slope_matches_finite_difference(rule in rule_strategy()) {
        // centered differences at u0 and 2 u0, extrapolated linearly to u = 0
        let u0 = 1e-6;
        let d = |u: f64| {
            let h = 0.5 * u0;
            (apply_harvest(&rule, u + h).unwrap() - apply_harvest(&rule, u - h).unwrap()) / (2.0 * h)
        };
        let estimate = 2.0 * d(u0) - d(2.0 * u0);
        let s = harvest_slope0(&rule);
        prop_assert!(((estimate - s) / s).abs() <= 1e-6, "{} vs {}", estimate, s);
    }

    #[test]
    fn bound_monotone(
        b in 0.1f64..5.0, a1 in 0.1f64..5.0, a in 0.1f64..5.0, a2 in 0.1f64..5.0,
        n1 in 0.0f64..5.0, n2 in 0.0f64..5.0, bump in 0.0f64..1.0,
    ) {
        let base = bound_from_parts(b, a1, a, a2, n1, n2);
        prop_assert!(base > 0.0);
        prop_assert!(bound_from_parts(b + bump, a1, a, a2, n1, n2) >= base);
        prop_assert!(bound_from_parts(b, a1 + bump, a, a2, n1, n2) <= base);
        prop_assert!(bound_from_parts(b, a1, a + bump, a2, n1, n2) >= base);
        prop_assert!(bound_from_parts(b, a1, a, a2 + bump, n1, n2) <= base);
        prop_assert!(bound_from_parts(b, a1, a, a2, n1 + bump, n2) >= base);
        prop_assert!(bound_from_parts(b, a1, a, a2, n1, n2 + bump) >= base);
    }
}
