use std::f64::consts::PI;
use std::sync::Arc;

use genmoment::error::Error;
use genmoment::manifold::TwoForm;
use genmoment::reduction::*;
use genmoment::scenarios::{hopf_bundle, trivial_bundle, CalabiEckmannParams, Catalog, Scenario};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use serde_json::json;

fn build(id: &str, params: serde_json::Value) -> Scenario {
    Catalog::builtin().build(id, &params).unwrap()
}

fn one(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}

fn omega_std() -> DMatrix<f64> {
    genmoment::linalg::complex_structure(2) * -1.0
}

#[test]
fn diag_c2_level_set_is_the_unit_sphere() {
    let s = build("diag-c2", json!({}));
    let smp = sample_level_set(&s, &one(-0.5), 25, 3).unwrap();
    assert_eq!(smp.points.len(), 25);
    for lp in &smp.points {
        // Psi = -|z|^2 / 2 = -1/2
        assert!((lp.point.norm_squared() - 1.0).abs() <= 2e-11);
        assert!(lp.residual <= s.tol().eps_lvl);
        assert_eq!(lp.horizontal.ncols(), 2);
        let iz = genmoment::linalg::complex_structure(2) * &lp.point;
        // H is orthogonal to the orbit and to the normal direction
        assert!((lp.horizontal.transpose() * &iz).amax() < 1e-12);
        assert!((lp.horizontal.transpose() * &lp.point).amax() < 1e-9);
        assert!((lp.horizontal.transpose() * &lp.horizontal - DMatrix::identity(2, 2)).amax() < 1e-12);
    }
}

#[test]
fn level_outside_the_image_exhausts_seeds() {
    let s = build("diag-c2", json!({}));
    assert_eq!(sample_level_set(&s, &one(0.5), 3, 1).unwrap_err(), Error::SeedExhausted);
    assert!(matches!(sample_level_set(&s, &DVector::zeros(2), 3, 1), Err(Error::DimensionMismatch(_))));
    let s = build("cp2-weights", json!({}));
    assert_eq!(sample_level_set(&s, &one(2.5), 2, 1).unwrap_err(), Error::SeedExhausted);
}

#[test]
fn calabi_eckmann_level_zero() {
    // tau = i: Psi = -s2
    let s = build("calabi-eckmann", json!({}));
    let smp = sample_level_set(&s, &one(0.0), 20, 5).unwrap();
    let l = s.manifold.ambient_dim();
    for lp in &smp.points {
        assert!(lp.point[l - 1].abs() <= 1e-11);
    }
    let s = build("calabi-eckmann", json!({"tau": [0.5, 2.0]}));
    let smp = sample_level_set(&s, &one(1.5), 10, 5).unwrap();
    for lp in &smp.points {
        let (s1, s2) = (lp.point[4], lp.point[9]);
        assert!((0.5 * 2.0 * s1 - 2.0 * s2 - 1.5).abs() <= 1e-11);
    }
}

#[test]
fn reduced_form_values_and_transport() {
    let s = build("diag-c2", json!({}));
    let smp = sample_level_set(&s, &one(-0.8), 10, 7).unwrap();
    let lp = &smp.points[0];
    let u = lp.horizontal.column(0).into_owned();
    let v = lp.horizontal.column(1).into_owned();
    let uu = reduced_form_at(&s, lp, &u, &u).unwrap();
    assert_eq!(uu.value, 0.0);
    let uv = reduced_form_at(&s, lp, &u, &v).unwrap();
    // H is a complex line of C^2 with its standard area form
    assert!((uv.value.abs() - 1.0).abs() < 1e-12);
    assert!(uv.transport <= 1e-8);
    let iz = genmoment::linalg::complex_structure(2) * &lp.point;
    assert!(matches!(reduced_form_at(&s, lp, &iz, &u), Err(Error::NotTangent(_))));
    for (id, params, p) in [
        ("diag-c2", json!({}), -0.3),
        ("calabi-eckmann", json!({"tau": [1.0, 1.0]}), 0.7),
        ("hopf-s3", json!({}), 0.1),
        ("cp2-weights", json!({"offset": -0.5}), 0.2),
    ] {
        let s = build(id, params);
        let smp = sample_level_set(&s, &one(p), 30, 9).unwrap();
        let rep = transport_audit(&s, &smp, 4, 1e-8);
        assert!(rep.pass, "{id}: {}", rep.max_deviation);
    }
}

#[test]
fn reduced_complex_structure() {
    for (id, params, p) in [
        ("diag-c2", json!({}), -0.5),
        ("calabi-eckmann", json!({}), 0.0),
        ("calabi-eckmann", json!({"tau": [1.0, 1.0], "n": 2, "m": 1}), -0.4),
        ("cp2-weights", json!({"offset": -0.5}), 0.2),
        ("hopf-s3", json!({}), -0.1),
    ] {
        let s = build(id, params);
        let smp = sample_level_set(&s, &one(p), 20, 2).unwrap();
        let rep = check_reduced_complex_structure(&s, &smp, 1e-8).unwrap();
        assert!(rep.pass, "{id}: {rep:?}");
        assert!(rep.min_metric_eigenvalue > 0.0);
    }
    // negative control: the unorthogonalized kernel directions are not J-invariant
    for (id, params, p) in [("diag-c2", json!({}), -0.5), ("calabi-eckmann", json!({"tau": [1.0, 1.0]}), 0.0)] {
        let s = build(id, params);
        let smp = sample_level_set_with(&s, &one(p), 20, 2, HorizontalChoice::Unorthogonalized).unwrap();
        let rep = check_reduced_complex_structure(&s, &smp, 1e-8).unwrap();
        assert!(!rep.j_invariance.pass, "{id}: {}", rep.j_invariance.max_deviation);
        assert!(rep.j_invariance.max_deviation > 1e-3);
    }
}

#[test]
fn reduced_form_csv_matches_baselines() {
    for (file, id, params, p) in [
        ("diag_c2_reduced.csv", "diag-c2", json!({}), -0.5),
        ("ce_n0m0_reduced.csv", "calabi-eckmann", json!({"n": 0, "m": 0, "tau": [1.0, 1.0]}), 0.5),
    ] {
        let s = build(id, params);
        let smp = sample_level_set(&s, &one(p), 6, 11).unwrap();
        let red: Vec<_> = smp.points.iter().map(|lp| reduced_form_sample(&s, lp).unwrap()).collect();
        let mut buf = Vec::new();
        write_reduced_csv(&mut buf, &red).unwrap();
        let path = format!("{}/tests/data/{file}", env!("CARGO_MANIFEST_DIR"));
        let baseline = std::fs::read_to_string(path).unwrap();
        let fresh = String::from_utf8(buf).unwrap();
        let parse = |t: &str| -> (Vec<String>, Vec<Vec<f64>>) {
            let mut lines = t.lines();
            let header = lines.next().unwrap().split(',').map(String::from).collect();
            (header, lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect())
        };
        let (hb, rb) = parse(&baseline);
        let (hf, rf) = parse(&fresh);
        assert_eq!(hb, hf);
        assert_eq!(rb.len(), rf.len());
        let n = s.manifold.ambient_dim();
        let r = red[0].basis.ncols();
        for (b, f) in rb.iter().zip(&rf) {
            for i in 0..n {
                assert!((b[i] - f[i]).abs() <= 1e-9, "{file}: point");
            }
            // the basis is compared through its span
            let hb = DMatrix::from_column_slice(n, r, &b[n..n + n * r]);
            let hf = DMatrix::from_column_slice(n, r, &f[n..n + n * r]);
            let pb = &hb * hb.transpose();
            let pf = &hf * hf.transpose();
            assert!((pb - pf).amax() <= 1e-8, "{file}: span");
            for k in n + n * r..b.len() {
                assert!((b[k].abs() - f[k].abs()).abs() <= 1e-9, "{file}: omega");
            }
        }
    }
}

/// (1 / 2 pi) times the line integral of theta = <iz, v> / |z|^2 along
/// |w| = R for the section (1, w) / sqrt(1 + |w|^2).
fn hopf_degree_by_stokes(radius: f64, n: usize) -> f64 {
    let mut total = 0.0;
    for k in 0..n {
        let phi = 2.0 * PI * k as f64 / n as f64;
        let w = Complex64::from_polar(radius, phi);
        let d = (1.0 + radius * radius).sqrt();
        let z = [Complex64::new(1.0 / d, 0.0), w / d];
        let dz = [Complex64::new(0.0, 0.0), Complex64::new(0.0, 1.0) * w / d];
        // <iz, dz> = Re(conj(i z) dz)
        let theta: f64 = z.iter().zip(&dz).map(|(a, b)| ((Complex64::i() * a).conj() * b).re).sum();
        total += theta * 2.0 * PI / n as f64;
    }
    total / (2.0 * PI)
}

#[test]
fn duistermaat_heckman_on_diag_c2() {
    let s = build("diag-c2", json!({}));
    let grid: Vec<f64> = (0..9).map(|i| -1.0 + 0.1 * i as f64).collect();
    let rep = dh_variation(&s, &grid, 1e-3).unwrap();
    for (p, a) in grid.iter().zip(&rep.areas) {
        // the reduced space is CP^1 of radius sqrt(-2p): area pi r^2
        assert!((a - (-2.0 * PI * p)).abs() <= 1e-8, "{p}: {a}");
    }
    let stokes = hopf_degree_by_stokes(1e4, 64);
    assert!((stokes - 1.0).abs() < 1e-7);
    assert!((rep.degree - stokes).abs() < 1e-5);
    assert!((rep.slope.abs() - 2.0 * PI * stokes.abs()).abs() <= 0.01 * 2.0 * PI);
    assert!(rep.relative_residual <= 1e-3);
    assert!(rep.pass);
    let js = serde_json::to_value(&rep).unwrap();
    assert!(js.get("slope").is_some() && js.get("areas").is_some());
}

#[test]
fn duistermaat_heckman_guards_and_trivial_bundle() {
    let s = build("diag-c2", json!({}));
    assert!(matches!(dh_variation(&s, &[-0.5], 1e-3), Err(Error::Config(_))));
    assert!(matches!(dh_variation(&s, &[-0.5, -0.5], 1e-3), Err(Error::Config(_))));
    let grid: Vec<f64> = (0..9).map(|i| -1.0 + 0.1 * i as f64).collect();
    assert!(matches!(dh_variation(&s, &grid, 1e-14), Err(Error::FitResidualTooLarge(_))));

    let s = build("trivial-coupling", json!({}));
    let rep = dh_variation(&s, &[-0.1, 0.0, 0.1], 1e-3).unwrap();
    assert!(rep.slope.abs() < 1e-9 && rep.degree.abs() < 1e-9);
    for a in &rep.areas {
        assert!((a - 4.0 * PI).abs() < 1e-8);
    }
    assert!(rep.pass);

    // Hopf coupling: area (1 + 2p) pi
    let s = build("hopf-s3", json!({}));
    let rep = dh_variation(&s, &[-0.1, 0.0, 0.1], 1e-3).unwrap();
    for (p, a) in [-0.1, 0.0, 0.1].iter().zip(&rep.areas) {
        assert!((a - (1.0 + 2.0 * p) * PI).abs() < 1e-8);
    }
    assert!(rep.pass);
}

fn levels(v: &[f64]) -> Vec<DVector<f64>> {
    v.iter().map(|&x| one(x)).collect()
}

#[test]
fn good_trivialization_reports() {
    let s = build("diag-c2", json!({}));
    let rep = good_trivialization_check(&s, &levels(&[-0.8, -0.5, -0.2]), &TrivializationLift::ComplexOrbit, 5, 1, 1e-6).unwrap();
    assert!(rep.pass && rep.max_deviation == 0.0);
    assert_eq!(rep.rows.len(), 3);

    // Calabi-Eckmann, with the J k lift and with the product lift d/ds2:
    // values are recorded, not asserted.
    let s = build("calabi-eckmann", json!({"tau": [1.0, 1.0]}));
    let rep = good_trivialization_check(&s, &levels(&[-1.0, 0.0, 1.0]), &TrivializationLift::ComplexOrbit, 4, 1, 1e-6).unwrap();
    assert!(rep.rows.iter().all(|r| r.max_abs.is_finite()));
    let l = s.manifold.ambient_dim();
    let ds2 = TrivializationLift::Field(Arc::new(move |_x: &DVector<f64>| {
        let mut e = DVector::zeros(l);
        e[l - 1] = 1.0;
        e
    }));
    let rep = good_trivialization_check(&s, &levels(&[-1.0, 0.0, 1.0]), &ds2, 4, 1, 1e-6).unwrap();
    assert!(rep.rows.iter().all(|r| r.max_abs.is_finite()));

    // negative control: omega = (1 + |z1|^2) omega_std has d omega with a
    // component along the lift and the orbit.
    let mut s = build("diag-c2", json!({}));
    s.omega = TwoForm::new(|x| omega_std() * (1.0 + x[0] * x[0] + x[1] * x[1]));
    let rep = good_trivialization_check(&s, &levels(&[-0.5]), &TrivializationLift::ComplexOrbit, 5, 1, 1e-6).unwrap();
    assert!(!rep.pass);
    assert!(rep.max_deviation > 1e-2);
}

#[test]
fn moser_pairs_satisfy_the_contraction_identity() {
    let opts = MoserOptions::default();
    for pair in moser_pairs() {
        let rep = moser_flow(&pair, &opts, 1e-5).unwrap();
        assert!(rep.pass, "{}: {}", pair.name, rep.max_deviation);
        assert_eq!(rep.radius, 0.1);
        assert!(rep.fixes_origin);
    }
    let rep = moser_flow(&identical_pair(), &opts, 1e-5).unwrap();
    assert_eq!(rep.max_displacement, 0.0);
    assert!(rep.max_deviation < 1e-12);
}

#[test]
fn moser_negative_controls() {
    // without the flow the conformal pair violates the identity
    let pair = conformal_pair(0.5);
    let m = DVector::from_vec(vec![0.05, -0.03, 0.04, 0.06]);
    let id = contraction_defect(&pair, &m, |x| Ok(x.clone())).unwrap();
    assert!(id > 1e-5);
    let opts = MoserOptions::default();
    let moved = contraction_defect(&pair, &m, |x| moser_map(&pair, x, &opts)).unwrap();
    assert!(moved < 1e-10);

    // omega_1 = (1 - 400 |z1|^2) dx1 dy1 + dx2 dy2 degenerates at |z1| = 1/20
    let w0 = TwoForm::constant(omega_std());
    let w1 = TwoForm::new(|x| {
        let mut w = omega_std();
        let f = 1.0 - 400.0 * (x[0] * x[0] + x[1] * x[1]);
        w[(0, 1)] *= f;
        w[(1, 0)] *= f;
        w
    });
    let bad = MoserPair { name: "degenerate".into(), omega0: w0, omega1: w1, action: identical_pair().action };
    let rep = moser_flow(&bad, &opts, 1e-5).unwrap();
    assert!(rep.radius < 0.1);
    let strict = MoserOptions { r_min: 0.09, ..opts };
    assert!(matches!(moser_flow(&bad, &strict, 1e-5), Err(Error::DegenerateInterpolation(_))));

    // forms must agree at the fixed point
    let off = MoserPair {
        name: "offset".into(),
        omega0: TwoForm::constant(omega_std()),
        omega1: TwoForm::constant(omega_std() * 2.0),
        action: identical_pair().action,
    };
    assert!(matches!(moser_flow(&off, &opts, 1e-5), Err(Error::Config(_))));
}

#[test]
fn toric_quotient_matches_fubini_study() {
    let s = build("toric-c2-quotient", json!({}));
    let rep = quotient_scenario_check(&s, 50, 3, 1e-6).unwrap();
    assert!(rep.pass, "{rep:?}");
    assert_eq!(rep.reduced_dim, 2);
    assert!((rep.area - PI).abs() < 1e-6);
    let other = build("diag-c2", json!({}));
    assert!(matches!(quotient_scenario_check(&other, 5, 3, 1e-6), Err(Error::Config(_))));
}

#[test]
fn calabi_eckmann_reduction_matches_tsukada() {
    for (a, b) in [(0.0, 1.0), (1.0, 1.0), (-0.5, 2.0)] {
        for c in [-1.0, 0.0, 1.0] {
            let p = CalabiEckmannParams { n: 1, m: 1, a, b };
            let rep = ce_verify_reduction(p, c, 25, 8, 1e-5).unwrap();
            assert!(rep.pass, "{a} {b} {c}: {rep:?}");
            assert!((rep.u0 + c / b).abs() < 1e-15);
            if a != 0.0 {
                assert!(rep.flipped_metric_deviation > 1e-2);
            }
        }
    }
    let p = CalabiEckmannParams { n: 0, m: 0, a: 0.0, b: 1.0 };
    let rep = ce_verify_reduction(p, 0.0, 25, 8, 1e-6).unwrap();
    assert!(rep.pass);
    assert!(matches!(
        ce_verify_reduction(CalabiEckmannParams { n: 1, m: 1, a: 0.0, b: 0.0 }, 0.0, 5, 1, 1e-5),
        Err(Error::Degenerate(_))
    ));
}

#[test]
fn minimal_coupling_audits() {
    // flat connection: omega = sigma (+) canonical pairing, Psi = -a exactly
    let c = minimal_coupling_form(trivial_bundle(), 1.0);
    for r in c.bundle.check_invariants(20, 1, 1e-8) {
        assert!(r.pass, "{r:?}");
    }
    let x = DVector::from_vec(vec![0.6, 0.8, 0.0, 0.0, 1.0, 0.15]);
    assert_eq!(c.moment.eval(&x)[0], -0.15);
    let w = c.omega.matrix(&x);
    // the area block does not see a
    let y = DVector::from_vec(vec![0.6, 0.8, 0.0, 0.0, 1.0, -0.4]);
    assert_eq!(w, c.omega.matrix(&y));
    assert!(c.moment_audit(0.2, 30, 2, 1e-6).pass);

    let c = minimal_coupling_form(hopf_bundle(), 1.0);
    for r in c.bundle.check_invariants(20, 1, 1e-8) {
        assert!(r.pass, "{r:?}");
    }
    let sigma = c.slab_audit(0.2, 50, 3).unwrap();
    // omega = (1 - 2a) Omega - da ^ theta: the smallest singular value is 1 - 2 r
    assert!((sigma - 0.6).abs() < 1e-6, "{sigma}");
    assert!(c.moment_audit(0.2, 50, 3, 1e-6).pass);
    assert!(matches!(c.slab_audit(0.6, 50, 3), Err(Error::SlabTooLarge(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn diag_c2_levels(p in -2.0f64..-0.05, seed in 0u64..1000) {
        let s = build("diag-c2", json!({}));
        let smp = sample_level_set(&s, &one(p), 4, seed).unwrap();
        for lp in &smp.points {
            prop_assert!((lp.point.norm_squared() + 2.0 * p).abs() <= 1e-10);
            let r = reduced_form_sample(&s, lp).unwrap();
            prop_assert!(r.j_defect <= 1e-9);
            prop_assert!((&r.omega + r.omega.transpose()).amax() <= 1e-14);
            // g-orthonormal H: the reduced metric is the identity
            prop_assert!((&r.metric - DMatrix::identity(2, 2)).amax() <= 1e-9);
        }
    }
}
