use genmoment::convexity::*;
use genmoment::error::Error;
use genmoment::scenarios::{point_from_z, Catalog, Scenario};
use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;
use serde_json::json;

fn build(id: &str, params: serde_json::Value) -> Scenario {
    Catalog::builtin().build(id, &params).unwrap()
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn sorted_vertices(p: &Polytope) -> Vec<Vec<f64>> {
    let mut v = p.vertices.clone();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// Same point sets up to order, coordinatewise within tol.
fn close(a: &[Vec<f64>], b: &[Vec<f64>], tol: f64) -> bool {
    let near = |x: &Vec<f64>, y: &Vec<f64>| x.iter().zip(y).all(|(p, q)| (p - q).abs() <= tol);
    a.len() == b.len() && a.iter().all(|x| b.iter().any(|y| near(x, y))) && b.iter().all(|y| a.iter().any(|x| near(x, y)))
}

#[test]
fn fixed_component_counts_and_weights() {
    for (id, count) in [("s1-rotation-s2", 2), ("cp2-weights", 3), ("t2-cp1xcp1", 4), ("torus-cp1", 2)] {
        let s = build(id, json!({}));
        let comps = fixed_components(&s, 12, 3).unwrap();
        assert_eq!(comps.len(), count, "{id}");
        for comp in &comps {
            assert!(comp.field_norm <= s.tol().eps_iso);
            assert_eq!(comp.weights.complex_codim() * 2, s.manifold.dim(), "{id}");
        }
    }
    // coordinate points of CP^2 with values 0, 1, 2
    let s = build("cp2-weights", json!({}));
    let comps = fixed_components(&s, 0, 0).unwrap();
    let vals: Vec<f64> = comps.iter().map(|c| c.value[0]).collect();
    assert_eq!(vals, vec![0.0, 1.0, 2.0]);
}

#[test]
fn incomplete_enumeration_is_detected() {
    let mut s = build("cp2-weights", json!({}));
    // drop the minimum; generic descending flows land on it
    s.fixed_points.remove(0);
    assert_eq!(fixed_components(&s, 12, 5).unwrap_err(), Error::IncompleteEnumeration);
}

#[test]
fn moment_polytopes_of_compact_builtins() {
    let s = build("s1-rotation-s2", json!({}));
    let mp = moment_polytope(&s, 1000, 11).unwrap();
    assert!(close(&sorted_vertices(&mp.polytope), &[vec![-1.0], vec![1.0]], 1e-12));
    assert_eq!(mp.violations, 0);
    assert!(mp.coverage_pass, "hausdorff {}", mp.hausdorff);

    let s = build("cp2-weights", json!({}));
    let mp = moment_polytope(&s, 1000, 12).unwrap();
    assert!(close(&sorted_vertices(&mp.polytope), &[vec![0.0], vec![2.0]], 1e-12));
    // the middle fixed value is interior
    assert_eq!(mp.polytope.distance(&DVector::from_element(1, 1.0)), 0.0);
    assert!(mp.coverage_pass);

    let s = build("t2-cp1xcp1", json!({}));
    let mp = moment_polytope(&s, 1000, 13).unwrap();
    let square = vec![vec![-1.0, -1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![1.0, 1.0]];
    assert!(close(&sorted_vertices(&mp.polytope), &square, 1e-12));
    assert_eq!(mp.polytope.facets.len(), 4);
    assert!(mp.coverage_pass, "hausdorff {}", mp.hausdorff);
}

#[test]
fn containment_violation_when_a_vertex_is_missing() {
    let mut s = build("s1-rotation-s2", json!({}));
    s.fixed_points.remove(1);
    assert!(matches!(moment_polytope(&s, 200, 1), Err(Error::ContainmentViolation(_))));
    assert!(matches!(moment_polytope(&build("diag-c2", json!({})), 10, 1), Err(Error::Config(_))));
}

#[test]
fn image_csv_has_header_and_rows() {
    let s = build("t2-cp1xcp1", json!({}));
    let mp = moment_polytope(&s, 20, 2).unwrap();
    let mut buf = Vec::new();
    write_image_csv(&mut buf, &mp.image).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "psi0,psi1");
    assert_eq!(text.lines().count(), 21);
    let js = mp.polytope.to_json();
    assert_eq!(js["vertices"].as_array().unwrap().len(), 4);
}

#[test]
fn orbit_closure_polytopes_on_cp2() {
    let s = build("cp2-weights", json!({}));
    let generic = point_from_z(&[c(0.6, 0.1), c(-0.3, 0.5), c(0.2, -0.4)]);
    let op = orbit_closure_polytope(&s, &generic, 40, 1).unwrap();
    assert!(close(&sorted_vertices(&op.polytope), &[vec![0.0], vec![2.0]], 1e-9));
    assert!(op.audit_max_escape <= s.tol().tol_hull);

    // vanishing middle coordinate: the sub-orbit still reaches 0 and 2
    let line = point_from_z(&[c(0.8, 0.0), c(0.0, 0.0), c(0.1, 0.6)]);
    let op = orbit_closure_polytope(&s, &line, 20, 2).unwrap();
    assert!(close(&sorted_vertices(&op.polytope), &[vec![0.0], vec![2.0]], 1e-9));
    // vanishing first coordinate: the limits are the remaining weights
    let line = point_from_z(&[c(0.0, 0.0), c(0.7, 0.2), c(0.1, 0.6)]);
    let op = orbit_closure_polytope(&s, &line, 20, 3).unwrap();
    assert!(close(&sorted_vertices(&op.polytope), &[vec![1.0], vec![2.0]], 1e-9));

    let fixed = s.fixed_points[1].point.clone();
    let op = orbit_closure_polytope(&s, &fixed, 10, 4).unwrap();
    assert_eq!(op.polytope.affine_dim, 0);
    assert!(close(&op.polytope.vertices, &[vec![1.0]], 1e-12));
}

#[test]
fn orbit_closure_polytope_of_generic_torus_point_is_the_square() {
    let s = build("t2-cp1xcp1", json!({}));
    let m = DVector::from_vec(vec![0.6, 0.0, 0.8, 0.0, 0.6, -0.8]);
    let op = orbit_closure_polytope(&s, &m, 30, 5).unwrap();
    let square = vec![vec![-1.0, -1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![1.0, 1.0]];
    assert!(close(&sorted_vertices(&op.polytope), &square, 1e-9));
    assert!(op.audit_max_escape <= 1e-9);
}

#[test]
fn noncompact_orbit_limit_is_unresolved() {
    let s = build("s1-c", json!({}));
    let m = DVector::from_vec(vec![1.0, 0.0]);
    assert_eq!(orbit_limit(&s, &m, &DVector::from_element(1, 1.0)).unwrap_err(), Error::LimitUnresolved);
}

#[test]
fn kempf_ness_derivative_is_monotone_along_orbits() {
    for id in ["cp2-weights", "t2-cp1xcp1", "s1-rotation-s2"] {
        let s = build(id, json!({}));
        for i in 0..5u64 {
            let m = s.sample(9, i, genmoment::scenarios::SampleKind::Uniform);
            let xi = genmoment::scenarios::gaussian(&mut genmoment::report::stream(10, i), s.rank());
            let mut prev = f64::NEG_INFINITY;
            for step in 0..60 {
                let t = step as f64 * 0.1;
                let y = s.action.act_imag(&m, &xi, -t).unwrap();
                let d = -s.moment.eval(&y).dot(&xi);
                assert!(d >= prev - 1e-12, "{id}: {d} < {prev}");
                prev = d;
            }
        }
    }
}

#[test]
fn local_cones_of_builtins() {
    let s = build("s1-rotation-s2", json!({}));
    let free = DVector::from_vec(vec![0.6, 0.0, 0.8]);
    assert!(local_cone(&s, &free).unwrap().is_full_space());
    let north = DVector::from_vec(vec![0.0, 0.0, 1.0]);
    let cone = local_cone(&s, &north).unwrap();
    assert_eq!(cone.apex, vec![1.0]);
    assert_eq!(cone.generators, vec![vec![-1.0]]);

    let s = build("cp2-weights", json!({}));
    let cone = local_cone(&s, &s.fixed_points[0].point).unwrap();
    assert_eq!(cone.apex, vec![0.0]);
    assert!(cone.generators.iter().all(|g| g[0] > 0.0));
    assert_eq!(cone.distance(&DVector::from_element(1, -0.5)), 0.5);
    assert_eq!(cone.distance(&DVector::from_element(1, 3.0)), 0.0);
    // the interior fixed point has weights of both signs
    assert!(local_cone(&s, &s.fixed_points[1].point).unwrap().is_full_space());

    // on a coordinate axis of C^2 one direction is free, the other a ray
    let s = build("t2-c2", json!({}));
    let axis = DVector::from_vec(vec![0.7, 0.2, 0.0, 0.0]);
    let cone = local_cone(&s, &axis).unwrap();
    assert_eq!(cone.generators.len(), 3);
    let apex = DVector::from_vec(cone.apex.clone());
    assert!(cone.distance(&(&apex + DVector::from_vec(vec![5.0, -1.0]))) < 1e-12);
    assert!((cone.distance(&(&apex + DVector::from_vec(vec![0.0, 1.0]))) - 1.0).abs() < 1e-12);
}

#[test]
fn numeric_weights_match_analytic_weights() {
    for id in ["s1-rotation-s2", "cp2-weights", "t2-cp1xcp1", "diag-c2", "t2-c2", "torus-cp1"] {
        let s = build(id, json!({}));
        for fp in &s.fixed_points {
            let (ws, _) = isotropy_weights_numeric(&s, &fp.point).unwrap();
            // each complex line contributes two real eigenvectors
            let (num, mult) = group_weights(&ws, 1e-4);
            let (ana, amult) = group_weights(&fp.weights, 1e-4);
            assert_eq!(num.len(), ana.len(), "{id}");
            for (w, m) in ana.iter().zip(&amult) {
                let i = num
                    .iter()
                    .position(|v| v.iter().zip(w).all(|(a, b)| (a - b).abs() < 1e-6))
                    .unwrap_or_else(|| panic!("{id}: weight {w:?} not found in {num:?}"));
                assert_eq!(mult[i], 2 * m);
            }
        }
    }
}

#[test]
fn local_cone_audit_containment_and_openness() {
    let cases: Vec<(&str, DVector<f64>)> = vec![
        ("s1-rotation-s2", DVector::from_vec(vec![0.0, 0.0, 1.0])),
        ("s1-rotation-s2", DVector::from_vec(vec![0.6, 0.0, 0.8])),
        ("cp2-weights", point_from_z(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)])),
        ("cp2-weights", point_from_z(&[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)])),
        ("t2-cp1xcp1", DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0, 0.0, -1.0])),
        ("t2-c2", DVector::from_vec(vec![0.7, 0.2, 0.0, 0.0])),
    ];
    for (id, m) in cases {
        let s = build(id, json!({}));
        let rep = local_cone_audit(&s, &m, 0.1, 100, 7).unwrap();
        assert!(rep.max_escape <= 1e-8, "{id}: escape {}", rep.max_escape);
        assert_eq!(rep.hits, rep.n_targets, "{id}: residual {}", rep.max_hit_residual);
    }
}

#[test]
fn local_cone_is_constant_on_orbits() {
    let s = build("t2-c2", json!({}));
    let m = DVector::from_vec(vec![0.7, 0.2, 0.0, 0.0]);
    let y = s.action.act_real(&m, &DVector::from_vec(vec![1.3, -0.4]), 1.0);
    let a = local_cone(&s, &m).unwrap();
    let b = local_cone(&s, &y).unwrap();
    assert!(a.apex.iter().zip(&b.apex).all(|(p, q)| (p - q).abs() < 1e-12));
    assert_eq!(a.generators.len(), b.generators.len());
    for g in &a.generators {
        assert!(b.distance(&(DVector::from_vec(b.apex.clone()) + DVector::from_vec(g.clone()))) < 1e-9);
    }
}

#[test]
fn model_moment_map() {
    let alpha = DVector::from_vec(vec![0.5, -1.0]);
    let zero = DVector::zeros(2);
    let w = DVector::from_vec(vec![1.0, 2.0]);
    assert_eq!(mgs_model_moment(&alpha, &zero, &[c(0.0, 0.0)], &[w.clone()]).unwrap(), alpha);
    let r = mgs_model_moment(&alpha, &zero, &[c(1.0, 1.0)], &[w.clone()]).unwrap();
    assert_eq!(r, &alpha + &w);
    assert!(matches!(mgs_model_moment(&alpha, &zero, &[], &[w]), Err(Error::DimensionMismatch(_))));

    // linear model against the closed form on C^2
    let s = build("diag-c2", json!({}));
    let fp = &s.fixed_points[0];
    let a0 = s.moment.eval(&fp.point);
    for x in [[0.3, -1.2, 0.7, 0.1], [2.0, 0.0, -0.5, 1.5]] {
        let p = DVector::from_row_slice(&x);
        let v = [c(x[0], x[1]), c(x[2], x[3])];
        let model = mgs_model_moment(&a0, &DVector::zeros(1), &v, &fp.weights).unwrap();
        assert!((model - s.moment.eval(&p)).norm() <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn planar_hull_contains_inputs_and_vertices_are_extreme(
        pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..40)
    ) {
        let pts: Vec<DVector<f64>> = pts.into_iter().map(|(x, y)| DVector::from_vec(vec![x, y])).collect();
        let hull = Polytope::hull(&pts, 1e-12).unwrap();
        for p in &pts {
            prop_assert!(hull.distance(p) <= 1e-9);
        }
        let verts = hull.vertex_vectors();
        if hull.affine_dim == 2 {
            for (i, v) in verts.iter().enumerate() {
                let others: Vec<DVector<f64>> = verts.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, w)| w.clone()).collect();
                let rest = Polytope::hull(&others, 1e-12).unwrap();
                prop_assert!(rest.distance(v) > 0.0);
            }
            for f in &hull.facets {
                prop_assert!(f.vertices.len() >= 2);
            }
        }
    }

    #[test]
    fn spatial_hull_contains_inputs(
        pts in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0), 5..25)
    ) {
        let pts: Vec<DVector<f64>> = pts.into_iter().map(|(x, y, z)| DVector::from_vec(vec![x, y, z])).collect();
        let hull = Polytope::hull(&pts, 1e-12).unwrap();
        for p in &pts {
            prop_assert!(hull.distance(p) <= 1e-9);
        }
        for f in &hull.facets {
            prop_assert!(f.vertices.len() >= 3);
            for v in hull.vertex_vectors() {
                let lhs: f64 = f.normal.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
                prop_assert!(lhs <= f.offset + 1e-9);
            }
        }
    }
}
