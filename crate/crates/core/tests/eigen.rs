use nalgebra::{DMatrix, Matrix2, SymmetricEigen};
use proptest::prelude::*;
use pulsefront::eigen::{
    algebraic_root, characteristic_roots, closed_form_lambda, floquet_lambda, generalized_bracket, lambda0,
    lambda_sensitivity, richardson, translate_interval, EigenProblemSpec, Eigenfunctions,
};
use pulsefront::{Coefficients, Error, KernelSpec, Rates};

fn tri(s: f64) -> KernelSpec {
    KernelSpec::triangular(s).unwrap()
}

fn rates(b: f64, a: f64, m1: f64, m2: f64) -> Rates {
    Rates { b, a, m1, m2, alpha1: 1.0, alpha2: 1.0 }
}

fn default_coeffs() -> Coefficients {
    Coefficients::constant(1.0, 1.0, 1.0, rates(2.0, 1.0, 0.5, 0.5)).unwrap()
}

fn spec(interval: (f64, f64), slope: f64, n: usize) -> EigenProblemSpec {
    spec_steps(interval, slope, n, 64)
}

fn spec_steps(interval: (f64, f64), slope: f64, n: usize, steps: usize) -> EigenProblemSpec {
    EigenProblemSpec::new(interval, default_coeffs(), tri(1.0), tri(1.0), slope, n, steps).unwrap()
}

/// Largest eigenvalue of the symmetrized trapezoid discretization, minus one.
fn dense_lambda0(k: &KernelSpec, l: f64, n: usize) -> f64 {
    let dx = l / n as f64;
    let nodes = n + 1;
    let w = |j: usize| if j == 0 || j == n { 0.5 * dx } else { dx };
    let s = DMatrix::from_fn(nodes, nodes, |i, j| w(i).sqrt() * k.evaluate((i as f64 - j as f64) * dx) * w(j).sqrt());
    SymmetricEigen::new(s).eigenvalues.max() - 1.0
}

#[test]
fn lambda0_examples() {
    let k = tri(1.0);
    let r = lambda0(&k, 2.0, 256).unwrap();
    assert!((r.lambda - dense_lambda0(&k, 2.0, 256)).abs() < 1e-8);
    let tiny = lambda0(&k, 1e-4, 16).unwrap().lambda;
    assert!(tiny > -1.0 && tiny < -0.999);
    let big = lambda0(&k, 100.0, 800).unwrap().lambda;
    assert!(big > -0.05 && big < 0.0);
    assert!(lambda0(&k, 0.0, 16).is_err());
}

#[test]
fn lambda0_increasing_in_length() {
    let k = KernelSpec::truncated_gaussian(0.8).unwrap();
    let values: Vec<f64> = [0.5, 1.0, 2.0, 4.0, 8.0].iter().map(|l| lambda0(&k, *l, (32.0 * l) as usize).unwrap().lambda).collect();
    assert!(values.windows(2).all(|w| w[0] < w[1]), "{values:?}");
    assert!(values.iter().all(|v| *v > -1.0 && *v < 0.0));
}

#[test]
fn characteristic_root_examples() {
    let c = Coefficients::constant(0.0, 0.0, 1.0, rates(1.0, 1.0, 1.0, 1.0)).unwrap();
    let (c1, c2) = characteristic_roots(&c, 0.0).unwrap();
    let eig = Matrix2::<f64>::new(-2.0, 1.0, 1.0, -1.0).symmetric_eigen().eigenvalues;
    assert!((c1 - eig.max()).abs() < 1e-14 && (c2 - eig.min()).abs() < 1e-14);
    assert!((c1 - (-3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-14);
    assert!((c2 - (-3.0 - 5f64.sqrt()) / 2.0).abs() < 1e-14);
    let c = Coefficients::constant(0.0, 0.0, 1.0, rates(1e-12, 1.0, 1.0, 1.0)).unwrap();
    let (c1, c2) = characteristic_roots(&c, 0.0).unwrap();
    assert!((c1 + 1.0).abs() < 1e-11 && (c2 + 2.0).abs() < 1e-11);
}

#[test]
fn closed_form_examples() {
    let no_pulse = closed_form_lambda(&spec((-1.0, 1.0), 1.0, 64)).unwrap();
    let l0 = lambda0(&tri(1.0), 2.0, 64).unwrap().lambda;
    let (c1, _) = characteristic_roots(&default_coeffs(), l0).unwrap();
    assert!((no_pulse.lambda + c1).abs() < 1e-12);

    // zero dispersal makes lambda0 irrelevant
    let c = Coefficients::constant(0.0, 0.0, 1.0, rates(1.0, 1.0, 1.0, 1.0)).unwrap();
    let s = EigenProblemSpec::new((0.0, 1.0), c.clone(), tri(1.0), tri(1.0), 0.5, 16, 64).unwrap();
    let cf = closed_form_lambda(&s).unwrap();
    let (c1, c2) = characteristic_roots(&c, 0.0).unwrap();
    assert!(cf.lambda > -c1);
    let fl = floquet_lambda(&s).unwrap();
    assert!((cf.lambda - fl.lambda).abs() < 1e-10);
    // monodromy oracle of the 2x2 system
    let m = Matrix2::<f64>::new(-2.0, 1.0, 1.0, -1.0).exp() * Matrix2::new(1.0, 0.0, 0.0, 0.5);
    let (tr, det) = (m.trace(), m.determinant());
    let rho = 0.5 * (tr + (tr * tr - 4.0 * det).sqrt());
    assert!((cf.lambda + rho.ln()).abs() < 1e-12);

    let root = algebraic_root(0.0, 0.0, 1.0, &rates(1.0, 1.0, 1.0, 1.0), 0.0, 0.5).unwrap();
    let ceiling = 1.0 / (0.5 * ((c2 - c1) * 1.0).exp());
    assert!(root.big_lambda > 1.0 && root.big_lambda < ceiling);
}

#[test]
fn separated_eigenfunctions_positive() {
    let r = closed_form_lambda(&spec((-1.0, 1.0), 0.4, 32)).unwrap();
    let Some(Eigenfunctions::Separated { alpha, beta, profile, .. }) = r.eigenfunctions else { panic!("missing factors") };
    assert!(alpha.iter().chain(&beta).chain(&profile).all(|v| *v > 0.0));
}

#[test]
fn floquet_examples() {
    let coarse = spec((-2.0, 2.0), 0.5, 64);
    let fine = coarse.with_n(128);
    let f = richardson(floquet_lambda(&coarse).unwrap().lambda, floquet_lambda(&fine).unwrap().lambda);
    let c = richardson(closed_form_lambda(&coarse).unwrap().lambda, closed_form_lambda(&fine).unwrap().lambda);
    assert!((f - c).abs() < 1e-6);

    let s = spec((-2.0, 2.0), 1.0, 64);
    let l0 = lambda0(&tri(1.0), 4.0, 64).unwrap().lambda;
    let (c1, _) = characteristic_roots(&default_coeffs(), l0).unwrap();
    assert!((floquet_lambda(&s).unwrap().lambda + c1).abs() < 1e-6);

    let base = floquet_lambda(&coarse).unwrap();
    let doubled = spec_steps((-2.0, 2.0), 0.5, 64, 128);
    let d = floquet_lambda(&doubled).unwrap();
    assert!((base.lambda - d.lambda).abs() <= base.residual.max(d.residual).max(1e-12));
    let Some(Eigenfunctions::Periodic { phi, psi, .. }) = base.eigenfunctions else { panic!("missing eigenfunctions") };
    let nodes = coarse.grid().nodes;
    for row in phi.iter().chain(&psi) {
        assert!(row[1..nodes - 1].iter().all(|v| *v > 0.0));
    }
}

#[test]
fn floquet_and_closed_form_agree_when_refined() {
    let s = spec_steps((-2.0, 2.0), 0.5, 256, 256);
    let f = floquet_lambda(&s).unwrap().lambda;
    let c = closed_form_lambda(&s).unwrap().lambda;
    assert!((f - c).abs() <= 1e-5, "{f} vs {c}");
}

#[test]
fn lambda_star_monotone_in_length_and_slope() {
    let by_len: Vec<f64> = [1.0, 2.0, 4.0, 8.0]
        .iter()
        .map(|l| closed_form_lambda(&spec((0.0, *l), 0.5, (16.0 * l) as usize)).unwrap().lambda)
        .collect();
    assert!(by_len.windows(2).all(|w| w[0] > w[1]), "{by_len:?}");
    let s = spec((-1.0, 1.0), 0.5, 64);
    let by_slope: Vec<f64> =
        [0.2, 0.4, 0.6, 0.8, 1.0].iter().map(|h| floquet_lambda(&s.with_slope(*h)).unwrap().lambda).collect();
    assert!(by_slope.windows(2).all(|w| w[0] > w[1]), "{by_slope:?}");
}

#[test]
fn bracket_properties() {
    let same = spec((-1.0, 1.0), 0.5, 32);
    let br = generalized_bracket(&same).unwrap();
    let f = floquet_lambda(&same).unwrap().lambda;
    assert!(br.lower <= br.upper);
    assert!((br.upper - f).abs() <= 2.0 * br.tolerance && (br.lower - f).abs() <= 2.0 * br.tolerance);

    let mixed = |l: f64| {
        EigenProblemSpec::new((0.0, l), default_coeffs(), tri(1.0), KernelSpec::truncated_gaussian(0.4).unwrap(), 0.5, (16.0 * l) as usize, 64)
            .unwrap()
    };
    let brackets: Vec<_> = [1.0, 2.0, 4.0].iter().map(|l| generalized_bracket(&mixed(*l)).unwrap()).collect();
    for b in &brackets {
        assert!(b.lower <= b.upper);
        assert_eq!(b.witnesses.len(), 2);
    }
    for w in brackets.windows(2) {
        assert!(w[1].upper <= w[0].upper + w[0].tolerance && w[1].lower <= w[0].lower + w[0].tolerance);
    }
    assert!(floquet_lambda(&mixed(1.0)).unwrap().surrogate);
}

#[test]
fn sensitivity_examples() {
    let s = spec((-1.0, 1.0), 0.5, 64);
    let sens = lambda_sensitivity(&s).unwrap();
    assert!(sens < 0.0);
    let h = 1e-4;
    let plus = closed_form_lambda(&s.with_slope(0.5 + h)).unwrap().lambda;
    let minus = closed_form_lambda(&s.with_slope(0.5 - h)).unwrap().lambda;
    let fd = (plus - minus) / (2.0 * h);
    assert!(((fd - sens) / fd).abs() < 1e-4, "{fd} vs {sens}");

    let one = s.with_slope(1.0);
    let sens1 = lambda_sensitivity(&one).unwrap();
    let rise = closed_form_lambda(&one.with_slope(1.0 - 1e-3)).unwrap().lambda - closed_form_lambda(&one).unwrap().lambda;
    assert!(rise > 0.0);
    assert!(((rise - (-sens1 * 1e-3)) / rise).abs() < 1e-2, "{rise} vs {}", -sens1 * 1e-3);

    let mixed = EigenProblemSpec::new((-1.0, 1.0), default_coeffs(), tri(1.0), tri(2.0), 0.5, 64, 64).unwrap();
    assert!(matches!(lambda_sensitivity(&mixed), Err(Error::RouteUnavailable(_))));
}

#[test]
fn translation_examples() {
    let l = 3.0;
    let zero_based = spec((0.0, l), 0.6, 48);
    let centered = spec((-l / 2.0, l / 2.0), 0.6, 48);
    assert_eq!(floquet_lambda(&zero_based).unwrap().lambda, floquet_lambda(&centered).unwrap().lambda);
    assert_eq!(closed_form_lambda(&zero_based).unwrap().lambda, closed_form_lambda(&centered).unwrap().lambda);
    assert_eq!(translate_interval(&zero_based, 0.0), zero_based);
    let composed = translate_interval(&translate_interval(&zero_based, 1.25), -0.5);
    assert_eq!(composed, translate_interval(&zero_based, 0.75));
}

#[test]
fn spec_validation() {
    let c = default_coeffs();
    assert!(EigenProblemSpec::new((1.0, 1.0), c.clone(), tri(1.0), tri(1.0), 0.5, 16, 8).is_err());
    assert!(EigenProblemSpec::new((0.0, 1.0), c.clone(), tri(1.0), tri(1.0), 0.0, 16, 8).is_err());
    assert!(EigenProblemSpec::new((0.0, 1.0), c.clone(), tri(1.0), tri(1.0), 1.5, 16, 8).is_err());
    assert!(EigenProblemSpec::new((0.0, 1.0), c, tri(1.0), tri(1.0), 0.5, 4, 8).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn root_identity(
        b in 0.01f64..5.0, a in 0.01f64..5.0, m1 in 0.0f64..3.0, m2 in 0.0f64..3.0,
        d1 in 0.0f64..3.0, d2 in 0.0f64..3.0, l0 in -0.999f64..0.0,
    ) {
        let c = Coefficients::constant(d1, d2, 1.0, rates(b, a, m1, m2)).unwrap();
        let (c1, c2) = characteristic_roots(&c, l0).unwrap();
        let lhs = a + m1 - d1 * l0 + c1;
        let rhs = -(m2 - d2 * l0 + c2);
        prop_assert!(c1 > c2);
        prop_assert!(lhs > 0.0);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn window_holds(
        b in 0.1f64..4.0, a in 0.1f64..4.0, m1 in 0.0f64..2.0, m2 in 0.0f64..2.0,
        slope in 0.05f64..0.99, tau in 0.2f64..3.0,
    ) {
        let r = rates(b, a, m1, m2);
        let root = algebraic_root(1.0, 1.0, tau, &r, -0.3, slope).unwrap();
        let ceiling = 1.0 / (slope * ((root.c2 - root.c1) * tau).exp());
        prop_assert!(root.big_lambda > 1.0 && root.big_lambda < ceiling);
        prop_assert!(root.lambda > -root.c1);
    }
}
