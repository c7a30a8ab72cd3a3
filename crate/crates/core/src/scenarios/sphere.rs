//! Products of round 2-spheres with independent rotations about the z-axis.
//! Psi = (z_1, ..., z_f).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde_json::json;

use super::{clamp_zero, gaussian, FixedPoint, SampleKind, Scenario};
use crate::action::{ActionKind, GroupAction};
use crate::error::Result;
use crate::manifold::{EmbeddedManifold, HermitianTriple, SphereBlocks, TwoForm};
use crate::moment::MomentMap;

/// Rotations of each S^2 factor of (S^2)^f in R^{3f}.
#[derive(Debug, Clone)]
pub struct SphereRotations {
    pub factors: usize,
}

impl GroupAction for SphereRotations {
    fn rank(&self) -> usize {
        self.factors
    }
    fn kind(&self) -> ActionKind {
        ActionKind::Torus
    }
    fn field(&self, x: &DVector<f64>, xi: &DVector<f64>) -> DVector<f64> {
        let mut v = DVector::zeros(x.len());
        for a in 0..self.factors {
            let o = 3 * a;
            v[o] = -xi[a] * x[o + 1];
            v[o + 1] = xi[a] * x[o];
        }
        v
    }
    fn act_real(&self, x: &DVector<f64>, xi: &DVector<f64>, t: f64) -> DVector<f64> {
        let mut y = x.clone();
        for a in 0..self.factors {
            let o = 3 * a;
            let (s, c) = (xi[a] * t).sin_cos();
            y[o] = c * x[o] - s * x[o + 1];
            y[o + 1] = s * x[o] + c * x[o + 1];
        }
        y
    }
    /// Along J xi_M = xi grad z the height obeys z' = xi (1 - z^2), so
    /// z(s) = tanh(xi s + atanh z) at fixed azimuth.
    fn act_imag(&self, x: &DVector<f64>, xi: &DVector<f64>, s: f64) -> Result<DVector<f64>> {
        let mut y = x.clone();
        for a in 0..self.factors {
            let o = 3 * a;
            let rho = x[o].hypot(x[o + 1]);
            if rho == 0.0 {
                continue;
            }
            let z = x[o + 2].clamp(-1.0, 1.0);
            let u = xi[a] * s + 0.5 * ((1.0 + z) / (1.0 - z)).ln();
            let (z_new, rho_new) = if u.is_finite() { (u.tanh(), 1.0 / u.cosh()) } else { (u.signum(), 0.0) };
            y[o] = x[o] / rho * rho_new;
            y[o + 1] = x[o + 1] / rho * rho_new;
            y[o + 2] = z_new;
        }
        Ok(y)
    }
}

/// Cross-product matrix [x]_x with [x]_x v = x cross v.
pub(crate) fn cross_matrix(x: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[0.0, -x[2], x[1], x[2], 0.0, -x[0], -x[1], x[0], 0.0])
}

/// (S^2)^f with area forms omega(u, v) = x . (u x v), J v = x x v and the
/// coordinate rotations.
pub fn sphere_product(factors: usize) -> Scenario {
    let n = 3 * factors;
    let blocks = (0..factors).map(|a| (3 * a..3 * a + 3, 1.0)).collect();
    let id = if factors == 1 { "s1-rotation-s2".to_string() } else { format!("t{factors}-cp1xcp1") };
    let manifold = EmbeddedManifold::new(&id, SphereBlocks::new(n, blocks));
    let jmat = move |x: &DVector<f64>| -> DMatrix<f64> {
        let mut j = DMatrix::zeros(n, n);
        for a in 0..factors {
            let o = 3 * a;
            j.view_mut((o, o), (3, 3)).copy_from(&cross_matrix(&[x[o], x[o + 1], x[o + 2]]));
        }
        j
    };
    // omega(u, v) = x . (u x v) = -u^T [x]_x v.
    let omega = TwoForm::new(move |x| -jmat(x));
    let mf = manifold.clone();
    let triple = HermitianTriple::new(manifold.clone(), omega.clone(), move |x| {
        jmat(x) * mf.tangent_projector(x).unwrap_or_else(|_| DMatrix::identity(n, n))
    });
    let moment = MomentMap::closed_form(factors, move |x| DVector::from_fn(factors, |a, _| x[3 * a + 2]));
    let mut fixed_points = Vec::new();
    for mask in 0..(1usize << factors) {
        let mut p = DVector::zeros(n);
        let mut weights = Vec::new();
        for a in 0..factors {
            let north = mask & (1 << a) == 0;
            p[3 * a + 2] = if north { 1.0 } else { -1.0 };
            let mut w = DVector::zeros(factors);
            w[a] = if north { -1.0 } else { 1.0 };
            weights.push(w);
        }
        fixed_points.push(FixedPoint { point: p, weights });
    }
    let base_point = fixed_points[0].point.clone();
    let base_value = DVector::from_element(factors, 1.0);
    let sampler = Arc::new(move |rng: &mut rand_chacha::ChaCha8Rng, kind: SampleKind| {
        let mut x = DVector::zeros(n);
        let pinned = if kind == SampleKind::LowerStratum { rng.gen_range(0..factors) } else { usize::MAX };
        for a in 0..factors {
            let g = gaussian(rng, 3);
            let g = if a == pinned {
                DVector::from_vec(vec![0.0, 0.0, if rng.gen::<bool>() { 1.0 } else { -1.0 }])
            } else {
                g.normalize()
            };
            x.rows_mut(3 * a, 3).copy_from(&g);
        }
        x
    });
    let basin = Arc::new(move |x: &DVector<f64>| {
        DVector::from_fn(factors, |a, _| {
            let z = x[3 * a + 2];
            let at_pole = x[3 * a].hypot(x[3 * a + 1]) < 1e-12;
            if at_pole {
                z.signum()
            } else {
                clamp_zero(-1.0, 1.0)
            }
        })
    });
    Scenario {
        id,
        params: json!({ "factors": factors }),
        manifold,
        action: Arc::new(SphereRotations { factors }),
        omega,
        triple: Some(triple),
        moment,
        compact: true,
        fixed_points,
        base_point,
        base_value,
        basin_label: Some(basin),
        sampler,
        notes: "unit spheres, omega = x.(u x v), J = x cross, g Euclidean; Psi = heights, pinned to 1 at the north poles"
            .into(),
    }
}
