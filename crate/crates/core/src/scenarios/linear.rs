//! Linear circle and torus actions on C^n with the standard complex structure.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde_json::json;

use super::{gaussian, FixedPoint, SampleKind, Scenario};
use crate::action::LinearTorusAction;
use crate::linalg::complex_structure;
use crate::manifold::{EmbeddedManifold, HermitianTriple, TwoForm, Unconstrained};
use crate::moment::MomentMap;

/// Rotation of the j-th complex coordinate of C^n.
fn coordinate_rotation(n: usize, j: usize) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(2 * n, 2 * n);
    g[(2 * j + 1, 2 * j)] = 1.0;
    g[(2 * j, 2 * j + 1)] = -1.0;
    g
}

struct LinearSpec {
    id: &'static str,
    n: usize,
    generators: Vec<DMatrix<f64>>,
    weights: Vec<DVector<f64>>,
    conformal: f64,
    notes: &'static str,
}

fn build(spec: LinearSpec) -> Scenario {
    let n = spec.n;
    let dim = 2 * n;
    let j = complex_structure(n);
    let manifold = EmbeddedManifold::new(spec.id, Unconstrained(dim));
    let eps = spec.conformal;
    // omega_std(u, v) = u^T (-J) v, scaled by 1 + eps |z|^2.
    let w0 = -j.clone();
    let omega = TwoForm::new(move |x| &w0 * (1.0 + eps * x.norm_squared()));
    let jc = j.clone();
    let triple = HermitianTriple::new(manifold.clone(), omega.clone(), move |_| jc.clone());
    let gens = spec.generators.clone();
    let k = gens.len();
    // Psi_a = -sum_j c_aj |z_j|^2 / 2 with c_aj the rotation coefficients;
    // the conformal scenario uses the radial primitive instead.
    let coeffs: Vec<Vec<f64>> =
        gens.iter().map(|g| (0..n).map(|c| g[(2 * c + 1, 2 * c)]).collect()).collect();
    let moment = MomentMap::closed_form(k, move |x| {
        let r2 = x.norm_squared();
        DVector::from_fn(k, |a, _| {
            if eps != 0.0 {
                -(r2 + eps * r2 * r2 / 2.0) / 2.0
            } else {
                -(0..n).map(|c| coeffs[a][c] * (x[2 * c].powi(2) + x[2 * c + 1].powi(2)) / 2.0).sum::<f64>()
            }
        })
    });
    let origin = DVector::zeros(dim);
    let sampler = Arc::new(move |rng: &mut rand_chacha::ChaCha8Rng, kind: SampleKind| {
        let mut x = gaussian(rng, dim);
        if kind == SampleKind::LowerStratum && n > 1 {
            x[dim - 2] = 0.0;
            x[dim - 1] = 0.0;
        }
        x
    });
    Scenario {
        id: spec.id.into(),
        params: if eps != 0.0 { json!({ "epsilon": eps }) } else { json!({}) },
        manifold,
        action: Arc::new(LinearTorusAction { generators: spec.generators, complex_structure: Some(j) }),
        omega,
        triple: Some(triple),
        moment,
        compact: false,
        fixed_points: vec![FixedPoint { point: origin.clone(), weights: spec.weights }],
        base_point: origin,
        base_value: DVector::zeros(k),
        basin_label: Some(Arc::new(move |_x: &DVector<f64>| DVector::zeros(k))),
        sampler,
        notes: spec.notes.into(),
    }
}

/// The diagonal circle on C^2 acting by e^{i theta}; Psi = -|z|^2 / 2.
pub fn diag_c2() -> Scenario {
    build(LinearSpec {
        id: "diag-c2",
        n: 2,
        generators: vec![coordinate_rotation(2, 0) + coordinate_rotation(2, 1)],
        weights: vec![DVector::from_element(1, -1.0), DVector::from_element(1, -1.0)],
        conformal: 0.0,
        notes: "standard omega and J = i; circle e^{i theta} on both coordinates; Psi = -|z|^2/2; levels Psi = p < 0 are 3-spheres of radius sqrt(-2p) with quotient CP^1",
    })
}

/// The coordinate torus on C^2; Psi = -(|z_1|^2, |z_2|^2) / 2.
pub fn t2_c2() -> Scenario {
    build(LinearSpec {
        id: "t2-c2",
        n: 2,
        generators: vec![coordinate_rotation(2, 0), coordinate_rotation(2, 1)],
        weights: vec![DVector::from_vec(vec![-1.0, 0.0]), DVector::from_vec(vec![0.0, -1.0])],
        conformal: 0.0,
        notes: "coordinate torus on C^2 with the standard structure; image is the closed negative quadrant",
    })
}

/// The circle on C with Psi = -|z|^2 / 2.
pub fn s1_on_c() -> Scenario {
    build(LinearSpec {
        id: "s1-c",
        n: 1,
        generators: vec![coordinate_rotation(1, 0)],
        weights: vec![DVector::from_element(1, -1.0)],
        conformal: 0.0,
        notes: "circle e^{i theta} on C; exp(-i t) m = e^t m",
    })
}

/// omega = (1 + eps |z|^2) omega_std with the diagonal circle: momentumly
/// closed with Psi = -(r^2 + eps r^4 / 2) / 2, but d omega != 0.
pub fn conformal_c2(eps: f64) -> Scenario {
    build(LinearSpec {
        id: "conformal-c2",
        n: 2,
        generators: vec![coordinate_rotation(2, 0) + coordinate_rotation(2, 1)],
        weights: vec![DVector::from_element(1, -1.0), DVector::from_element(1, -1.0)],
        conformal: eps,
        notes: "conformally rescaled standard form; not closed, compatible with J = i",
    })
}
