use genmoment::error::Error;
use genmoment::flow::{stratum_label, FlowMethod, FlowOptions};
use genmoment::kempfness::*;
use genmoment::report::stream;
use genmoment::scenarios::{gaussian, point_from_z, Catalog, SampleKind, Scenario};
use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;
use serde_json::json;

fn build(id: &str, params: serde_json::Value) -> Scenario {
    Catalog::builtin().build(id, &params).unwrap()
}

fn one(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(x)
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn orbit_opts(s: &Scenario) -> FlowOptions {
    FlowOptions::from_tolerances(s.tol()).with_method(FlowMethod::Orbit)
}

#[test]
fn kn_values_on_the_line() {
    let s = build("s1-c", json!({}));
    let m = v(&[1.0, 0.0]);
    assert_eq!(kn_value(&s, &m, &one(0.0)).unwrap(), 0.0);
    // exp(-i t) . 1 = e^t, Psi = -e^{2t}/2; integral of e^{2t}/2 over [0, 1]
    let oracle = (1f64.exp().powi(2) - 1.0) / 4.0;
    assert!((kn_value(&s, &m, &one(1.0)).unwrap() - oracle).abs() < 1e-12);
    // fixed point: the integrand is constant
    let o = v(&[0.0, 0.0]);
    assert_eq!(kn_value(&s, &o, &one(2.0)).unwrap(), -s.moment.component(&o, &one(2.0)));
    assert!(matches!(kn_value(&s, &m, &v(&[1.0, 1.0])), Err(Error::DimensionMismatch(_))));
}

#[test]
fn kn_value_at_a_fixed_point_of_cp2() {
    let s = build("cp2-weights", json!({"offset": -0.5}));
    let m = s.fixed_points[2].point.clone();
    let xi = one(0.7);
    assert!((kn_value(&s, &m, &xi).unwrap() + s.moment.component(&m, &xi)).abs() < 1e-14);
}

#[test]
fn cocycle_identity() {
    let s = build("s1-c", json!({}));
    let m = v(&[0.4, -0.3]);
    assert_eq!(kn_cocycle_residual(&s, &m, &one(0.8), &one(0.0)).unwrap(), 0.0);
    assert!(kn_cocycle_residual(&s, &m, &one(0.8), &one(0.8)).unwrap() <= 1e-8);

    for (id, params) in [("cp2-weights", json!({"offset": -0.5})), ("t2-cp1xcp1", json!({})), ("s1-rotation-s2", json!({}))] {
        let s = build(id, params);
        let triples: Vec<_> = (0..20u64)
            .map(|i| {
                let mut rng = stream(21, i);
                let m = s.draw(&mut rng, SampleKind::Uniform);
                (m, gaussian(&mut rng, s.rank()), gaussian(&mut rng, s.rank()))
            })
            .collect();
        let rep = kn_cocycle_check(&s, &triples, 1e-8).unwrap();
        assert!(rep.pass, "{id}: {}", rep.max_deviation);
    }

    // the real-line action uses the same formulas
    let s = build("calabi-eckmann", json!({}));
    let triples: Vec<_> = (0..5u64)
        .map(|i| {
            let mut rng = stream(22, i);
            let m = s.draw(&mut rng, SampleKind::Uniform);
            (m, gaussian(&mut rng, 1) * 0.5, gaussian(&mut rng, 1) * 0.5)
        })
        .collect();
    let rep = kn_cocycle_check(&s, &triples, 1e-6).unwrap();
    assert!(rep.pass, "ce: {}", rep.max_deviation);
}

#[test]
fn convexity_and_second_derivative() {
    let s = build("s1-c", json!({}));
    let rep = kn_convexity_check(&s, &v(&[1.0, 0.0]), &one(1.0), 0.1, 10, 1e-8).unwrap();
    assert!(rep.pass);
    assert!((rep.field_norm_squared - 1.0).abs() < 1e-14);
    assert!((rep.second_derivative_at_zero - 1.0).abs() < 1e-6);

    // isotropy direction: second derivative vanishes
    let s = build("t2-c2", json!({}));
    let m = v(&[0.7, 0.2, 0.0, 0.0]);
    let rep = kn_convexity_check(&s, &m, &v(&[0.0, 1.0]), 0.1, 10, 1e-8).unwrap();
    assert!(rep.pass);
    assert!(rep.second_derivative_at_zero.abs() < 1e-10);
    assert!(rep.min_second_difference.abs() < 1e-12);

    let s = build("cp2-weights", json!({"offset": -0.5}));
    for i in 0..10u64 {
        let mut rng = stream(5, i);
        let m = s.draw(&mut rng, SampleKind::Uniform);
        let xi = gaussian(&mut rng, 1);
        let rep = kn_convexity_check(&s, &m, &xi, 0.25, 12, 1e-8).unwrap();
        assert!(rep.pass, "{rep:?}");
    }
}

#[test]
fn slopes_at_infinity() {
    let s = build("s1-rotation-s2", json!({}));
    let m = v(&[0.6, 0.0, 0.8]);
    // exp(-i t) drives z to -1 and the integrand -z to 1
    assert!((slope_at_infinity_strict(&s, &m, &one(1.0)).unwrap() - 1.0).abs() < 1e-6);
    assert!((slope_at_infinity_strict(&s, &m, &one(-1.0)).unwrap() - 1.0).abs() < 1e-6);
    let north = v(&[0.0, 0.0, 1.0]);
    let e = slope_at_infinity(&s, &north, &one(1.0)).unwrap();
    assert!(e.plateau);
    assert_eq!(e.slope, -1.0);

    let s = build("cp2-weights", json!({}));
    let m = point_from_z(&[c(0.6, 0.1), c(-0.3, 0.5), c(0.2, -0.4)]);
    assert!(slope_at_infinity_strict(&s, &m, &one(1.0)).unwrap().abs() < 1e-6);
    assert!((slope_at_infinity_strict(&s, &m, &one(-1.0)).unwrap() - 2.0).abs() < 1e-6);
}

#[test]
fn slowly_converging_direction_has_no_plateau() {
    // z(t) = tanh(atanh z0 - xi t) has not settled by t = 2^14 for xi ~ 1/t
    let s = build("s1-rotation-s2", json!({}));
    let m = v(&[0.6, 0.0, 0.8]);
    let xi = one(6e-5);
    let e = slope_at_infinity(&s, &m, &xi).unwrap();
    assert!(!e.plateau);
    assert!(e.bracket.0 < e.bracket.1);
    assert_eq!(slope_at_infinity_strict(&s, &m, &xi).unwrap_err(), Error::NoPlateau);
}

#[test]
fn hesselink_weights_on_the_sphere() {
    let s = build("s1-rotation-s2", json!({}));
    let w = hesselink_weight(&s, &v(&[0.0, 0.0, 1.0])).unwrap();
    assert_eq!(w.inf_slope, -1.0);
    assert_eq!(w.w_h, vec![1.0]);
    assert!(!w.semistable);
    assert!(!semistable_test(&s, &v(&[0.0, 0.0, -1.0])).unwrap());
    assert!(semistable_test(&s, &v(&[0.6, 0.0, 0.8])).unwrap());
    let js = serde_json::to_value(&w).unwrap();
    for key in ["m", "w_min", "w_h", "inf_slope", "semistable", "certificate_grid"] {
        assert!(js.get(key).is_some(), "{key}");
    }
}

#[test]
fn hesselink_weights_on_the_square() {
    let s = build("t2-cp1xcp1", json!({}));
    // first factor at its north pole: the orbit closure image is {1} x [-1, 1]
    let m = v(&[0.0, 0.0, 1.0, 0.6, 0.0, -0.8]);
    let w = hesselink_weight(&s, &m).unwrap();
    assert!((w.inf_slope + 1.0).abs() < 1e-6, "{}", w.inf_slope);
    assert!((w.w_h[0] - 1.0).abs() < 1e-5 && w.w_h[1].abs() < 1e-5, "{:?}", w.w_h);
    let corner = v(&[0.0, 0.0, 1.0, 0.0, 0.0, -1.0]);
    let w = hesselink_weight(&s, &corner).unwrap();
    assert!((w.inf_slope + 2f64.sqrt()).abs() < 1e-6);
    assert!((w.w_h[0] - 1.0).abs() < 1e-6 && (w.w_h[1] + 1.0).abs() < 1e-6);
    let generic = v(&[0.6, 0.0, 0.8, 0.0, 0.6, -0.8]);
    assert!(hesselink_weight(&s, &generic).unwrap().semistable);
}

#[test]
fn borderline_point() {
    // offset 0 puts the zero level on the boundary of the image
    let s = build("cp2-weights", json!({}));
    let m = point_from_z(&[c(0.6, 0.1), c(-0.3, 0.5), c(0.2, -0.4)]);
    assert_eq!(semistable_test(&s, &m).unwrap_err(), Error::Borderline);
}

#[test]
fn moment_weight_equality_on_unstable_points() {
    let s = build("s1-rotation-s2", json!({}));
    let rep = moment_weight_check(&s, &v(&[0.0, 0.0, 1.0]), &orbit_opts(&s), 1e-4).unwrap();
    assert!(rep.pass);
    assert!((rep.limit_norm - 1.0).abs() < 1e-12);

    let s = build("cp2-weights", json!({"offset": -0.5}));
    for i in 0..8u64 {
        let m = s.sample(31, i, SampleKind::LowerStratum);
        let rep = moment_weight_check(&s, &m, &orbit_opts(&s), 1e-4).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!((rep.lambda[0] - 0.5).abs() < 1e-6);
    }
    // semistable: both sides vanish
    let m = point_from_z(&[c(0.6, 0.1), c(-0.3, 0.5), c(0.2, -0.4)]);
    let rep = moment_weight_check(&s, &m, &orbit_opts(&s), 1e-4).unwrap();
    assert!(rep.pass && rep.limit_norm < 1e-6 && rep.w_h == vec![0.0]);
}

#[test]
fn semistability_agrees_with_flow_labels() {
    for (id, params) in [("cp2-weights", json!({"offset": -0.5})), ("s1-rotation-s2", json!({})), ("t2-cp1xcp1", json!({}))] {
        let s = build(id, params);
        let opts = orbit_opts(&s);
        let mut checked = 0;
        for (i, m) in s.stratified(41, 30).iter().enumerate() {
            let Ok(label) = stratum_label(&s, m, &opts) else { continue };
            match semistable_test(&s, m) {
                Ok(ss) => {
                    assert_eq!(ss, label.norm <= s.tol().r_cluster, "{id} sample {i}");
                    checked += 1;
                }
                Err(Error::Borderline) => assert!(label.norm <= s.tol().r_cluster),
                Err(e) => panic!("{id}: {e}"),
            }
        }
        assert!(checked >= 20, "{id}: {checked}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn profiles_are_convex(seed in 0u64..1000, scale in 0.1f64..3.0) {
        let s = build("cp2-weights", json!({"offset": -0.5}));
        let mut rng = stream(seed, 0);
        let m = s.draw(&mut rng, SampleKind::Uniform);
        let xi = gaussian(&mut rng, 1) * scale;
        let p = kn_profile(&s, &m, &xi, 0.2, 10).unwrap();
        prop_assert_eq!(p.values[0], 0.0);
        prop_assert!(p.min_second_difference() >= -1e-8);
        prop_assert!(p.max_derivative_drop() <= 1e-12);
    }
}
