//! Minimal-coupling scenarios: the Hopf bundle S^3 -> S^2 and the trivial
//! circle bundle over S^2.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde_json::json;

use super::sphere::cross_matrix;
use super::{gaussian, SampleKind, Scenario};
use crate::error::Result;
use crate::linalg::complex_structure;
use crate::manifold::{EmbeddedManifold, SphereBlocks, TwoForm};
use crate::reduction::{minimal_coupling_form, MinimalCoupling, PrincipalBundle};

pub const HOPF_QUOTIENT_ID: &str = "toric-c2-quotient";

/// Sampling half-width of the fibre coordinate a.
const SLAB: f64 = 0.2;

/// S^3 in C^2 with the circle x -> e^{i t} x, theta(v) = <i x, v>,
/// d theta = 2 Omega where Omega(u, v) = <i u, v> is the pulled-back
/// Fubini-Study form of total area pi.
pub fn hopf_bundle() -> PrincipalBundle {
    let j = complex_structure(2);
    let jt = j.transpose();
    let (j1, j2, j3, j4) = (j.clone(), j.clone(), j.clone(), j.clone());
    let jt2 = jt.clone();
    PrincipalBundle {
        name: "hopf".into(),
        total: EmbeddedManifold::new("S3", SphereBlocks::new(4, vec![(0..4, 1.0)])),
        rank: 1,
        vertical: Arc::new(move |x, xi| &j1 * x * xi[0]),
        right_action: Arc::new(move |x, xi, t| {
            let th = xi[0] * t;
            x * th.cos() + &j2 * x * th.sin()
        }),
        connection: Arc::new(move |x| DMatrix::from_row_slice(1, 4, (&j3 * x).as_slice())),
        curvature: Some(Arc::new(move |_x| vec![&jt2 * 2.0])),
        base_form: TwoForm::constant(jt),
        horizontal_j: Some(Arc::new(move |_x| j4.clone())),
        sampler: Arc::new(|rng| gaussian(rng, 4).normalize()),
    }
}

/// S^1 x S^2 in R^2 x R^3 with the flat connection d phi and sigma the
/// area form of S^2.
pub fn trivial_bundle() -> PrincipalBundle {
    let rot = |u: &DVector<f64>| DVector::from_vec(vec![-u[1], u[0], 0.0, 0.0, 0.0]);
    PrincipalBundle {
        name: "trivial".into(),
        total: EmbeddedManifold::new("S1xS2", SphereBlocks::new(5, vec![(0..2, 1.0), (2..5, 1.0)])),
        rank: 1,
        vertical: Arc::new(move |x, xi| rot(x) * xi[0]),
        right_action: Arc::new(|x, xi, t| {
            let (s, c) = (xi[0] * t).sin_cos();
            let mut y = x.clone();
            y[0] = c * x[0] - s * x[1];
            y[1] = s * x[0] + c * x[1];
            y
        }),
        connection: Arc::new(move |x| DMatrix::from_row_slice(1, 5, rot(x).as_slice())),
        curvature: Some(Arc::new(|_x| vec![DMatrix::zeros(5, 5)])),
        base_form: TwoForm::new(|x| {
            let mut w = DMatrix::zeros(5, 5);
            w.view_mut((2, 2), (3, 3)).copy_from(&(-cross_matrix(&[x[2], x[3], x[4]])));
            w
        }),
        horizontal_j: Some(Arc::new(|x| {
            let mut j = DMatrix::zeros(5, 5);
            j.view_mut((2, 2), (3, 3)).copy_from(&cross_matrix(&[x[2], x[3], x[4]]));
            j
        })),
        sampler: Arc::new(|rng| {
            let u = gaussian(rng, 2).normalize();
            let y = gaussian(rng, 3).normalize();
            DVector::from_vec(vec![u[0], u[1], y[0], y[1], y[2]])
        }),
    }
}

fn coupling_scenario(id: &str, c: MinimalCoupling, notes: &str) -> Scenario {
    let n = c.bundle.ambient_dim();
    let mut base = DVector::zeros(n + 1);
    base[0] = 1.0;
    if c.bundle.name == "trivial" {
        base[4] = 1.0;
    }
    let bundle = c.bundle.clone();
    let sampler = Arc::new(move |rng: &mut rand_chacha::ChaCha8Rng, _kind: SampleKind| {
        let p = (bundle.sampler)(rng);
        let mut x = DVector::zeros(n + 1);
        x.rows_mut(0, n).copy_from(&p);
        x[n] = rng.gen_range(-SLAB..=SLAB);
        x
    });
    Scenario {
        id: id.into(),
        params: json!({ "slab": SLAB, "orientation": c.orientation }),
        manifold: c.manifold.clone(),
        action: c.action.clone(),
        omega: c.omega.clone(),
        triple: c.triple.clone(),
        moment: c.moment.clone(),
        compact: false,
        fixed_points: vec![],
        base_point: base,
        base_value: DVector::zeros(1),
        basin_label: Some(Arc::new(|_x: &DVector<f64>| DVector::zeros(1))),
        sampler,
        notes: notes.into(),
    }
}

pub(super) fn hopf_coupling_scenario() -> Result<Scenario> {
    let c = minimal_coupling_form(hopf_bundle(), 1.0);
    Ok(coupling_scenario(
        "hopf-s3",
        c,
        "minimal coupling on S^3 x R: omega = (1 - 2a) Omega - da ^ theta; field -ix, Psi = -a; nondegenerate for a < 1/2; level Psi = p reduces to CP^1 with area (1 + 2p) pi",
    ))
}

pub(super) fn toric_quotient_scenario() -> Result<Scenario> {
    let c = minimal_coupling_form(hopf_bundle(), -1.0);
    Ok(coupling_scenario(
        HOPF_QUOTIENT_ID,
        c,
        "C^2 minus 0 as S^3 x R with the Hopf minimal coupling; field +ix, Psi = a; the level Psi = 0 reduces to CP^1 with the Fubini-Study form of area pi",
    ))
}

pub(super) fn trivial_coupling_scenario() -> Result<Scenario> {
    let c = minimal_coupling_form(trivial_bundle(), 1.0);
    Ok(coupling_scenario(
        "trivial-coupling",
        c,
        "S^1 x S^2 x R with the flat connection: omega = sigma - da ^ d phi, Psi = -a; reduced areas constant",
    ))
}
