use genmoment::action::generator_matrix;
use genmoment::manifold::compatible_triple_from_form;
use genmoment::scenarios::{CalabiEckmann, CalabiEckmannParams, Catalog, SampleKind, Scenario};
use nalgebra::{DMatrix, DVector};
use serde_json::json;

fn all() -> Vec<Scenario> {
    let c = Catalog::builtin();
    c.names().iter().map(|n| c.build(n, &json!({})).unwrap()).collect()
}

fn unit(k: usize, a: usize) -> DVector<f64> {
    let mut e = DVector::zeros(k);
    e[a] = 1.0;
    e
}

#[test]
fn samples_lie_on_manifold() {
    for s in all() {
        for kind in [SampleKind::Uniform, SampleKind::NearFixed, SampleKind::LowerStratum] {
            for x in s.samples(11, 10, kind) {
                assert!(s.manifold.residual(&x) <= 1e-10, "{} {:?}", s.id, kind);
            }
        }
    }
}

#[test]
fn moment_identity_by_finite_differences() {
    for s in all() {
        let k = s.rank();
        for x in s.samples(3, 8, SampleKind::Uniform) {
            let e = s.manifold.tangent_basis(&x).unwrap();
            let w = s.omega.matrix(&x);
            for a in 0..k {
                let xi = unit(k, a);
                let f = s.action.field(&x, &xi);
                for c in 0..e.ncols() {
                    let v = e.column(c).into_owned();
                    let h = 1e-5;
                    let p = s.manifold.curve(&x, &v, h).unwrap();
                    let m = s.manifold.curve(&x, &v, -h).unwrap();
                    let d = (s.moment.eval(&p)[a] - s.moment.eval(&m)[a]) / (2.0 * h);
                    let iw = f.dot(&(&w * &v));
                    assert!((d - iw).abs() < 1e-7, "{}: dPsi {d} vs iota omega {iw}", s.id);
                }
            }
        }
    }
}

#[test]
fn hermitian_triples_are_consistent() {
    for s in all() {
        let t = s.triple.as_ref().unwrap();
        for x in s.samples(5, 8, SampleKind::Uniform) {
            let d = t.defects(&x).unwrap();
            assert!(d.j_squared < 1e-9, "{} {:?}", s.id, d);
            assert!(d.metric_asymmetry < 1e-9, "{} {:?}", s.id, d);
            assert!(d.metric_min_eigenvalue > 1e-3, "{} {:?}", s.id, d);
            assert!(d.omega_j_invariance < 1e-9, "{} {:?}", s.id, d);
        }
    }
}

#[test]
fn real_and_imaginary_flows_have_the_right_generators() {
    for s in all() {
        let t = s.triple.as_ref().unwrap();
        let k = s.rank();
        for x in s.samples(7, 5, SampleKind::Uniform) {
            for a in 0..k {
                let xi = unit(k, a) * 0.7;
                let h = 1e-5;
                let dr = (s.action.act_real(&x, &xi, h) - s.action.act_real(&x, &xi, -h)) / (2.0 * h);
                assert!((&dr - s.action.field(&x, &xi)).amax() < 1e-8, "{}", s.id);
                let di = (s.action.act_imag(&x, &xi, h).unwrap() - s.action.act_imag(&x, &xi, -h).unwrap()) / (2.0 * h);
                let jf = t.apply_j(&x, &s.action.field(&x, &xi));
                assert!((&di - &jf).amax() < 1e-7, "{}: {} vs {}", s.id, di, jf);
                let y = s.action.act_imag(&x, &xi, 1.3).unwrap();
                assert!(s.manifold.residual(&y) < 1e-10, "{}", s.id);
            }
        }
    }
}

#[test]
fn fixed_points_and_hessian_weights() {
    for s in all() {
        let k = s.rank();
        for fp in &s.fixed_points {
            let g = generator_matrix(s.action.as_ref(), &fp.point);
            assert!(g.amax() < 1e-14, "{}", s.id);
            let e = s.manifold.tangent_basis(&fp.point).unwrap();
            assert_eq!(2 * fp.weights.len(), e.ncols());
            let xi = DVector::from_fn(k, |a, _| 0.3 + 0.5 * a as f64);
            // Hessian of Psi^xi in an orthonormal basis along projected curves.
            let d = e.ncols();
            let h = 1e-4;
            let f = |v: &DVector<f64>| s.moment.eval(&s.manifold.curve(&fp.point, v, 1.0).unwrap()).dot(&xi);
            let f0 = f(&DVector::zeros(e.nrows()));
            let mut hess = DMatrix::zeros(d, d);
            for i in 0..d {
                for j in 0..d {
                    let (u, v) = (e.column(i) * h, e.column(j) * h);
                    hess[(i, j)] = (f(&(&u + &v)) - f(&(&u - &v)) - f(&(&v - &u)) + f(&(-&u - &v))) / (4.0 * h * h);
                }
            }
            let _ = f0;
            let mut ev: Vec<f64> = hess.symmetric_eigenvalues().iter().copied().collect();
            ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut want: Vec<f64> = fp.weights.iter().flat_map(|w| [w.dot(&xi), w.dot(&xi)]).collect();
            want.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (a, b) in ev.iter().zip(&want) {
                assert!((a - b).abs() < 1e-5, "{}: hessian {:?} weights {:?}", s.id, ev, want);
            }
        }
    }
}

#[test]
fn sphere_ground_truth() {
    let s = Catalog::builtin().build("s1-rotation-s2", &json!({})).unwrap();
    let vals: Vec<f64> = s.fixed_values().iter().map(|v| v[0]).collect();
    assert_eq!(vals, vec![1.0, -1.0]);
    assert_eq!(s.moment.eval(&s.base_point)[0], 1.0);
}

#[test]
fn projective_moment_range() {
    let s = Catalog::builtin().build("cp2-weights", &json!({})).unwrap();
    for x in s.samples(1, 200, SampleKind::Uniform) {
        let v = s.moment.eval(&x)[0];
        assert!((0.0..=2.0).contains(&v));
    }
    let shifted = Catalog::builtin().build("cp2-weights", &json!({"offset": -0.5})).unwrap();
    let vals: Vec<f64> = shifted.fixed_values().iter().map(|v| v[0]).collect();
    assert_eq!(vals, vec![-0.5, 0.5, 1.5]);
}

#[test]
fn hopf_coupling_structure_matches_polar_decomposition() {
    let s = Catalog::builtin().build("hopf-s3", &json!({})).unwrap();
    let t = s.triple.as_ref().unwrap();
    let xs = s.samples(9, 20, SampleKind::Uniform);
    let polar = compatible_triple_from_form(&s.manifold, &s.omega, &xs).unwrap();
    for x in &xs {
        let e = s.manifold.tangent_basis(x).unwrap();
        let d = (t.j_matrix(x) * &e - polar.j_matrix(x) * &e).amax();
        assert!(d < 1e-9, "{d}");
    }
}

#[test]
fn calabi_eckmann_identities() {
    for (n, m, a, b) in [(1, 1, 0.0, 1.0), (0, 0, 0.0, 1.0), (1, 0, 0.4, -1.3), (0, 1, -0.7, 0.6)] {
        let ce = CalabiEckmann::new(CalabiEckmannParams { n, m, a, b }).unwrap();
        let s = ce.scenario();
        for x in s.samples(4, 20, SampleKind::Uniform) {
            let e = s.manifold.tangent_basis(&x).unwrap();
            let h = e.transpose() * ce.h(&x) * &e;
            assert!(h.clone().cholesky().is_some());
            let g = e.transpose() * ce.omega_h(&x) * ce.j(&x) * &e;
            assert!((&g - &h).amax() < 1e-12, "omega(., J.) != h");
            // iota_V omega = d Psi, with d Psi = a b ds1 - b ds2.
            let iv = ce.omega_h(&x).transpose() * ce.v(&x);
            let dpsi = ce.ds1() * (a * b) - ce.ds2() * b;
            assert!((e.transpose() * (iv - dpsi)).amax() < 1e-12);
            // Invariance of h under the flow of V.
            let xi = DVector::from_element(1, 0.9);
            let y = s.action.act_real(&x, &xi, 1.0);
            let step = 1e-6;
            let mut push = DMatrix::zeros(x.len(), e.ncols());
            for c in 0..e.ncols() {
                let u = e.column(c).into_owned();
                let d = (s.action.act_real(&(&x + &u * step), &xi, 1.0) - s.action.act_real(&(&x - &u * step), &xi, 1.0)) / (2.0 * step);
                push.set_column(c, &d);
            }
            let hy = push.transpose() * ce.h(&y) * &push;
            assert!((&hy - &h).amax() < 1e-8);
        }
    }
    let default = CalabiEckmann::new(CalabiEckmannParams::default()).unwrap();
    let mut x = default.scenario().base_point.clone();
    x[default.layout.s2()] = 0.8;
    assert!((default.psi(&x) + 0.8).abs() < 1e-15);
}

#[test]
fn tsukada_structures() {
    let ce = CalabiEckmann::new(CalabiEckmannParams { n: 1, m: 1, a: 0.3, b: 1.7 }).unwrap();
    let mm = ce.m_manifold();
    let s = ce.scenario();
    for x in s.samples(2, 10, SampleKind::Uniform) {
        let y = ce.m_point(&x);
        let e = mm.tangent_basis(&y).unwrap();
        let j = ce.tsukada_j(&y);
        let je = &j * &e;
        assert!((e.transpose() * &je - &je.transpose() * &e * 0.0 - e.transpose() * &je).amax() == 0.0);
        let jj = e.transpose() * &j * &j * &e;
        assert!((jj + DMatrix::identity(e.ncols(), e.ncols())).amax() < 1e-12);
        // The Tsukada metric equals omega_T(., J_tau .).
        let g = e.transpose() * ce.tsukada_omega(&y) * &j * &e;
        let gt = e.transpose() * ce.tsukada_metric(&y, 1.0) * &e;
        assert!((&g - &gt).amax() < 1e-12, "{}", (&g - &gt).amax());
    }
}

#[test]
fn catalog_errors_and_export() {
    let mut c = Catalog::builtin();
    assert!(matches!(c.build("nope", &json!({})), Err(genmoment::Error::UnknownScenario(_))));
    assert!(matches!(
        c.register("diag-c2", |_| unreachable!()),
        Err(genmoment::Error::DuplicateName(_))
    ));
    let v = c.export_json().unwrap();
    assert_eq!(v.as_array().unwrap().len(), c.names().len());
    assert!(c.build("calabi-eckmann", &json!({"tau": [0.0, 0.0]})).is_err());
}
