//! CP^{N-1} embedded as rank-one Hermitian projectors in R^{N^2} with the
//! Frobenius metric, acted on by diagonal tori.
//!
//! Coordinates of a Hermitian P: the N diagonal entries, then
//! sqrt2 Re P_ij and sqrt2 Im P_ij for i < j. The map is an isometry for
//! <A, B> = Re tr(AB).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde_json::json;

use super::{gaussian, FixedPoint, SampleKind, Scenario};
use crate::action::{ActionKind, GroupAction};
use crate::error::{Error, Result};
use crate::manifold::{Constraint, EmbeddedManifold, HermitianTriple, TwoForm};
use crate::moment::MomentMap;

const SQRT2: f64 = std::f64::consts::SQRT_2;

fn side(len: usize) -> usize {
    (len as f64).sqrt().round() as usize
}

/// Hermitian matrix from isometric coordinates.
pub fn to_herm(x: &DVector<f64>) -> DMatrix<Complex64> {
    let n = side(x.len());
    let mut p = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for i in 0..n {
        p[(i, i)] = Complex64::new(x[i], 0.0);
    }
    let mut k = n;
    for i in 0..n {
        for j in i + 1..n {
            let z = Complex64::new(x[k], x[k + 1]) / SQRT2;
            p[(i, j)] = z;
            p[(j, i)] = z.conj();
            k += 2;
        }
    }
    p
}

/// Isometric coordinates of the Hermitian part of `p`.
pub fn from_herm(p: &DMatrix<Complex64>) -> DVector<f64> {
    let n = p.nrows();
    let mut x = DVector::zeros(n * n);
    for i in 0..n {
        x[i] = p[(i, i)].re;
    }
    let mut k = n;
    for i in 0..n {
        for j in i + 1..n {
            let z = (p[(i, j)] + p[(j, i)].conj()) * 0.5;
            x[k] = SQRT2 * z.re;
            x[k + 1] = SQRT2 * z.im;
            k += 2;
        }
    }
    x
}

/// The projector onto the line through z.
pub fn point_from_z(z: &[Complex64]) -> DVector<f64> {
    let n = z.len();
    let norm2: f64 = z.iter().map(|c| c.norm_sqr()).sum();
    let p = DMatrix::from_fn(n, n, |i, j| z[i] * z[j].conj() / norm2);
    from_herm(&p)
}

/// P^2 = P and tr P = 1.
#[derive(Debug, Clone)]
pub struct RankOneProjector {
    pub n: usize,
}

impl Constraint for RankOneProjector {
    fn ambient_dim(&self) -> usize {
        self.n * self.n
    }
    fn codim(&self) -> usize {
        self.n * self.n - 2 * (self.n - 1)
    }
    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        let p = to_herm(x);
        let q = from_herm(&(&p * &p - &p));
        let tr: f64 = (0..self.n).map(|i| x[i]).sum();
        let mut r = DVector::zeros(q.len() + 1);
        r.rows_mut(0, q.len()).copy_from(&q);
        r[q.len()] = tr - 1.0;
        r
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let m = self.n * self.n;
        let p = to_herm(x);
        let mut jac = DMatrix::zeros(m + 1, m);
        for c in 0..m {
            let mut e = DVector::zeros(m);
            e[c] = 1.0;
            let d = to_herm(&e);
            let col = from_herm(&(&d * &p + &p * &d - &d));
            jac.view_mut((0, c), (m, 1)).copy_from(&col);
            jac[(m, c)] = if c < self.n { 1.0 } else { 0.0 };
        }
        jac
    }
}

/// Diagonal torus exp(t xi) P = U P U* with U = diag(exp(-i <w_j, xi> t)).
#[derive(Debug, Clone)]
pub struct ProjectiveTorusAction {
    pub weights: Vec<DVector<f64>>,
}

impl ProjectiveTorusAction {
    fn diag(&self, xi: &DVector<f64>) -> Vec<f64> {
        self.weights.iter().map(|w| w.dot(xi)).collect()
    }
}

impl GroupAction for ProjectiveTorusAction {
    fn rank(&self) -> usize {
        self.weights[0].len()
    }
    fn kind(&self) -> ActionKind {
        ActionKind::Torus
    }
    fn field(&self, x: &DVector<f64>, xi: &DVector<f64>) -> DVector<f64> {
        let p = to_herm(x);
        let d = self.diag(xi);
        let n = p.nrows();
        // -i [D, P]
        let f = DMatrix::from_fn(n, n, |i, j| Complex64::new(0.0, -(d[i] - d[j])) * p[(i, j)]);
        from_herm(&f)
    }
    fn act_real(&self, x: &DVector<f64>, xi: &DVector<f64>, t: f64) -> DVector<f64> {
        let p = to_herm(x);
        let d = self.diag(xi);
        let n = p.nrows();
        let f = DMatrix::from_fn(n, n, |i, j| Complex64::from_polar(1.0, -(d[i] - d[j]) * t) * p[(i, j)]);
        from_herm(&f)
    }
    /// P -> A P A / tr(A P A) with A = diag(exp(s <w_j, xi>)), the flow of
    /// grad Psi^xi.
    fn act_imag(&self, x: &DVector<f64>, xi: &DVector<f64>, s: f64) -> Result<DVector<f64>> {
        let p = to_herm(x);
        let d = self.diag(xi);
        let n = p.nrows();
        let support: Vec<usize> = (0..n).filter(|&i| p[(i, i)].re > 0.0).collect();
        let top = support.iter().map(|&i| d[i] * s).fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(Error::Overflow);
        }
        let a: Vec<f64> = (0..n).map(|i| if support.contains(&i) { (d[i] * s - top).exp() } else { 0.0 }).collect();
        let q = DMatrix::from_fn(n, n, |i, j| p[(i, j)] * (a[i] * a[j]));
        let tr: f64 = (0..n).map(|i| q[(i, i)].re).sum();
        if !(tr > 0.0) || !tr.is_finite() {
            return Err(Error::Overflow);
        }
        Ok(from_herm(&(q / Complex64::new(tr, 0.0))))
    }
}

/// CP^{N-1} with rank-one torus weights `w` (one entry per homogeneous
/// coordinate), Psi = sum_j w_j |z_j|^2 / |z|^2 + offset.
pub fn cp_n(id: &str, w: &[f64], offset: f64) -> Result<Scenario> {
    let weights: Vec<DVector<f64>> = w.iter().map(|&v| DVector::from_element(1, v)).collect();
    cp_n_torus(id, weights, DVector::from_element(1, offset))
}

fn raw_j(x: &DVector<f64>) -> DMatrix<f64> {
    let m = x.len();
    let p = to_herm(x);
    let i = Complex64::new(0.0, 1.0);
    let mut j = DMatrix::zeros(m, m);
    for c in 0..m {
        let mut e = DVector::zeros(m);
        e[c] = 1.0;
        let d = to_herm(&e);
        let col = from_herm(&((&d * &p - &p * &d) * i));
        j.set_column(c, &col);
    }
    j
}

pub fn cp_n_torus(id: &str, weights: Vec<DVector<f64>>, offset: DVector<f64>) -> Result<Scenario> {
    let n = weights.len();
    if n < 2 {
        return Err(Error::DimensionMismatch("projective space needs at least two weights".into()));
    }
    let k = weights[0].len();
    if weights.iter().any(|w| w.len() != k) || offset.len() != k {
        return Err(Error::DimensionMismatch("weights and offset must share one rank".into()));
    }
    let manifold = EmbeddedManifold::new(id, RankOneProjector { n });
    let mf = manifold.clone();
    let jfun = move |x: &DVector<f64>| -> DMatrix<f64> {
        let pt = mf.tangent_projector(x).unwrap_or_else(|_| DMatrix::identity(x.len(), x.len()));
        &pt * raw_j(x) * &pt
    };
    let jf = Arc::new(jfun);
    let jw = jf.clone();
    let omega = TwoForm::new(move |x| jw(x).transpose());
    let jt = jf.clone();
    let triple = HermitianTriple::new(manifold.clone(), omega.clone(), move |x| jt(x));
    let wm = weights.clone();
    let off = offset.clone();
    let moment = MomentMap::closed_form(k, move |x| {
        wm.iter().enumerate().fold(off.clone(), |acc, (j, w)| acc + w * x[j])
    });
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let fixed_points: Vec<FixedPoint> = (0..n)
        .map(|j| {
            let z: Vec<Complex64> = (0..n).map(|l| if l == j { one } else { zero }).collect();
            FixedPoint {
                point: point_from_z(&z),
                weights: (0..n).filter(|&l| l != j).map(|l| &weights[l] - &weights[j]).collect(),
            }
        })
        .collect();
    let base_point = fixed_points[0].point.clone();
    let base_value = &weights[0] + &offset;
    let sampler = Arc::new(move |rng: &mut rand_chacha::ChaCha8Rng, kind: SampleKind| {
        let g = gaussian(rng, 2 * n);
        let mut z: Vec<Complex64> = (0..n).map(|j| Complex64::new(g[2 * j], g[2 * j + 1])).collect();
        if kind == SampleKind::LowerStratum {
            z[0] = zero;
        }
        point_from_z(&z)
    });
    let basin = if k == 1 {
        let w: Vec<f64> = weights.iter().map(|v| v[0]).collect();
        let o = offset[0];
        let lab: super::Labeler = Arc::new(move |x: &DVector<f64>| {
            let supp = (0..w.len()).filter(|&j| x[j] > 1e-12);
            let (lo, hi) = supp.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), j| (a.min(w[j]), b.max(w[j])));
            DVector::from_element(1, super::clamp_zero(lo + o, hi + o))
        });
        Some(lab)
    } else {
        None
    };
    Ok(Scenario {
        id: id.into(),
        params: json!({ "weights": weights.iter().map(|v| v.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(), "offset": offset.iter().copied().collect::<Vec<_>>() }),
        manifold,
        action: Arc::new(ProjectiveTorusAction { weights }),
        omega,
        triple: Some(triple),
        moment,
        compact: true,
        fixed_points,
        base_point,
        base_value,
        basin_label: basin,
        sampler,
        notes: "rank-one projectors with the Frobenius metric; J = i[., P] on tangents; Psi = sum w_j P_jj + offset".into(),
    })
}
