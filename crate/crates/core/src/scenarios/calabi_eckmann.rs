//! Calabi-Eckmann data on Y = (S^{2n+1} x R) x (S^{2m+1} x R) with the
//! real action generated by V = d/ds1 + b X2 + a d/ds2, and the Tsukada
//! structures on S^{2n+1} x S^{2m+1}.
//!
//! Ambient coordinates: [p (2n+2), s1, q (2m+2), s2]. Each sphere carries
//! eta(v) = <ip, v>, Reeb field X = ip and Omega(u, v) = <iu, v> = d eta / 2.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{gaussian, param_f64, param_usize, SampleKind, Scenario};
use crate::action::{ActionKind, GroupAction};
use crate::error::{Error, Result};
use crate::linalg::{complex_structure, wedge};
use crate::manifold::{EmbeddedManifold, HermitianTriple, SphereBlocks, TwoForm};
use crate::moment::MomentMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalabiEckmannParams {
    pub n: usize,
    pub m: usize,
    /// tau = a + i b.
    pub a: f64,
    pub b: f64,
}

impl Default for CalabiEckmannParams {
    fn default() -> Self {
        CalabiEckmannParams { n: 1, m: 1, a: 0.0, b: 1.0 }
    }
}

impl CalabiEckmannParams {
    pub fn tau(&self) -> Complex64 {
        Complex64::new(self.a, self.b)
    }

    /// Reads n, m and tau = [a, b] (or a, b separately).
    pub fn from_json(v: &Value) -> Result<Self> {
        let d = CalabiEckmannParams::default();
        let (mut a, mut b) = (param_f64(v, "a", d.a)?, param_f64(v, "b", d.b)?);
        if let Some(t) = v.get("tau") {
            let arr = t.as_array().filter(|x| x.len() == 2).ok_or_else(|| Error::Config("tau must be [a, b]".into()))?;
            a = arr[0].as_f64().ok_or_else(|| Error::Config("tau must be numeric".into()))?;
            b = arr[1].as_f64().ok_or_else(|| Error::Config("tau must be numeric".into()))?;
        }
        let p = CalabiEckmannParams { n: param_usize(v, "n", d.n)?, m: param_usize(v, "m", d.m)?, a, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.b.abs() <= 1e-12 || !self.b.is_finite() || !self.a.is_finite() {
            return Err(Error::Degenerate(self.b));
        }
        Ok(())
    }
}

/// Index layout of Y.
#[derive(Debug, Clone, Copy)]
pub struct CeLayout {
    pub np: usize,
    pub nq: usize,
}

impl CeLayout {
    pub fn p0(&self) -> usize {
        0
    }
    pub fn s1(&self) -> usize {
        self.np
    }
    pub fn q0(&self) -> usize {
        self.np + 1
    }
    pub fn s2(&self) -> usize {
        self.np + 1 + self.nq
    }
    pub fn dim(&self) -> usize {
        self.np + self.nq + 2
    }
}

#[derive(Debug, Clone)]
pub struct CalabiEckmann {
    pub params: CalabiEckmannParams,
    pub layout: CeLayout,
}

fn block(v: &DVector<f64>, start: usize, len: usize) -> DVector<f64> {
    v.rows(start, len).into_owned()
}

fn times_i(v: &DVector<f64>) -> DVector<f64> {
    complex_structure(v.len() / 2) * v
}

/// exp(i phi) v on C^{len/2}.
fn rotate(v: &DVector<f64>, phi: f64) -> DVector<f64> {
    v * phi.cos() + times_i(v) * phi.sin()
}

impl CalabiEckmann {
    pub fn new(params: CalabiEckmannParams) -> Result<Self> {
        params.validate()?;
        Ok(CalabiEckmann { params, layout: CeLayout { np: 2 * params.n + 2, nq: 2 * params.m + 2 } })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn manifold(&self) -> EmbeddedManifold {
        let l = self.layout;
        EmbeddedManifold::new(
            "calabi-eckmann",
            SphereBlocks::new(l.dim(), vec![(l.p0()..l.p0() + l.np, 1.0), (l.q0()..l.q0() + l.nq, 1.0)]),
        )
    }

    pub fn p(&self, x: &DVector<f64>) -> DVector<f64> {
        block(x, self.layout.p0(), self.layout.np)
    }
    pub fn q(&self, x: &DVector<f64>) -> DVector<f64> {
        block(x, self.layout.q0(), self.layout.nq)
    }

    pub fn point(&self, p: &DVector<f64>, s1: f64, q: &DVector<f64>, s2: f64) -> DVector<f64> {
        let l = self.layout;
        let mut x = DVector::zeros(l.dim());
        x.rows_mut(l.p0(), l.np).copy_from(p);
        x[l.s1()] = s1;
        x.rows_mut(l.q0(), l.nq).copy_from(q);
        x[l.s2()] = s2;
        x
    }

    fn unit(&self, i: usize) -> DVector<f64> {
        let mut e = DVector::zeros(self.dim());
        e[i] = 1.0;
        e
    }

    pub fn eta1(&self, x: &DVector<f64>) -> DVector<f64> {
        self.point(&times_i(&self.p(x)), 0.0, &DVector::zeros(self.layout.nq), 0.0)
    }
    pub fn eta2(&self, x: &DVector<f64>) -> DVector<f64> {
        self.point(&DVector::zeros(self.layout.np), 0.0, &times_i(&self.q(x)), 0.0)
    }
    pub fn ds1(&self) -> DVector<f64> {
        self.unit(self.layout.s1())
    }
    pub fn ds2(&self) -> DVector<f64> {
        self.unit(self.layout.s2())
    }

    /// Reeb fields as ambient vectors (X_i = eta_i's dual).
    pub fn reeb1(&self, x: &DVector<f64>) -> DVector<f64> {
        self.eta1(x)
    }
    pub fn reeb2(&self, x: &DVector<f64>) -> DVector<f64> {
        self.eta2(x)
    }

    /// The four coframe covectors whose squares build h.
    pub fn coframe(&self, x: &DVector<f64>) -> [DVector<f64>; 4] {
        let (a, b) = (self.params.a, self.params.b);
        let (e1, e2, d1, d2) = (self.eta1(x), self.eta2(x), self.ds1(), self.ds2());
        [
            &e1 * b + &d2 - &d1 * a,
            &d2 - &d1 * a,
            &e2 - &e1 * a,
            &d1 * b - &e2 + &e1 * a,
        ]
    }

    fn block_matrix(&self, start: usize, m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        out.view_mut((start, start), (m.nrows(), m.ncols())).copy_from(m);
        out
    }

    /// Omega_1 + Omega_2 as an ambient matrix.
    pub fn omega_spheres(&self) -> DMatrix<f64> {
        let l = self.layout;
        self.block_matrix(l.p0(), &complex_structure(l.np / 2).transpose())
            + self.block_matrix(l.q0(), &complex_structure(l.nq / 2).transpose())
    }

    /// g'_1 + g'_2, the transverse round metrics.
    pub fn transverse_metrics(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let l = self.layout;
        let e1 = self.eta1(x);
        let e2 = self.eta2(x);
        self.block_matrix(l.p0(), &DMatrix::identity(l.np, l.np))
            + self.block_matrix(l.q0(), &DMatrix::identity(l.nq, l.nq))
            - &e1 * e1.transpose()
            - &e2 * e2.transpose()
    }

    /// The invariant Hermitian metric h.
    pub fn h(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let th = self.coframe(x);
        th.iter().fold(self.transverse_metrics(x), |acc, t| acc + t * t.transpose())
    }

    /// omega_h = theta4 ^ theta1 + theta2 ^ theta3 + Omega_1 + Omega_2.
    pub fn omega_h(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let [t1, t2, t3, t4] = self.coframe(x);
        wedge(&t4, &t1) + wedge(&t2, &t3) + self.omega_spheres()
    }

    /// Product complex structure of (C^{n+1} - 0) x (C^{m+1} - 0) in the
    /// coordinates (p, s) with z = e^s p.
    pub fn j(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let l = self.layout;
        let n = self.dim();
        let mut j = DMatrix::zeros(n, n);
        for (start, len, s) in [(l.p0(), l.np, l.s1()), (l.q0(), l.nq, l.s2())] {
            let p = block(x, start, len);
            let ip = times_i(&p);
            let jb = complex_structure(len / 2) + &p * ip.transpose();
            j.view_mut((start, start), (len, len)).copy_from(&jb);
            j.view_mut((start, s), (len, 1)).copy_from(&ip);
            j.view_mut((s, start), (1, len)).copy_from(&(-ip.transpose()));
        }
        j
    }

    /// V = d/ds1 + b X2 + a d/ds2.
    pub fn v(&self, x: &DVector<f64>) -> DVector<f64> {
        self.ds1() + self.reeb2(x) * self.params.b + self.ds2() * self.params.a
    }

    /// Psi = a b s1 - b s2.
    pub fn psi(&self, x: &DVector<f64>) -> f64 {
        self.params.a * self.params.b * x[self.layout.s1()] - self.params.b * x[self.layout.s2()]
    }

    pub fn action(&self) -> CeAction {
        CeAction { ce: self.clone() }
    }

    // Structures on M = S^{2n+1} x S^{2m+1} in R^{np + nq}, coordinates [p, q].

    pub fn m_dim(&self) -> usize {
        self.layout.np + self.layout.nq
    }

    pub fn m_manifold(&self) -> EmbeddedManifold {
        let l = self.layout;
        EmbeddedManifold::new("ce-quotient", SphereBlocks::new(l.np + l.nq, vec![(0..l.np, 1.0), (l.np..l.np + l.nq, 1.0)]))
    }

    pub fn m_point(&self, x: &DVector<f64>) -> DVector<f64> {
        let l = self.layout;
        let mut y = DVector::zeros(l.np + l.nq);
        y.rows_mut(0, l.np).copy_from(&self.p(x));
        y.rows_mut(l.np, l.nq).copy_from(&self.q(x));
        y
    }

    /// (delta p, delta q) components of a tangent vector of Y.
    pub fn m_vector(&self, v: &DVector<f64>) -> DVector<f64> {
        self.m_point(v)
    }

    fn m_parts(&self, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let l = self.layout;
        (block(y, 0, l.np), block(y, l.np, l.nq))
    }

    fn m_embed(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(a.len() + b.len());
        y.rows_mut(0, a.len()).copy_from(a);
        y.rows_mut(a.len(), b.len()).copy_from(b);
        y
    }

    /// eta_1, eta_2, X_1, X_2 on M.
    pub fn m_contact(&self, y: &DVector<f64>) -> [DVector<f64>; 2] {
        let (p, q) = self.m_parts(y);
        let zp = DVector::zeros(p.len());
        let zq = DVector::zeros(q.len());
        [self.m_embed(&times_i(&p), &zq), self.m_embed(&zp, &times_i(&q))]
    }

    /// Tsukada form Omega_1 + Omega_2 + b eta_1 ^ eta_2.
    pub fn tsukada_omega(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let l = self.layout;
        let [e1, e2] = self.m_contact(y);
        let mut w = DMatrix::zeros(l.np + l.nq, l.np + l.nq);
        w.view_mut((0, 0), (l.np, l.np)).copy_from(&complex_structure(l.np / 2).transpose());
        w.view_mut((l.np, l.np), (l.nq, l.nq)).copy_from(&complex_structure(l.nq / 2).transpose());
        w + wedge(&e1, &e2) * self.params.b
    }

    /// J_tau = J_1 + (a/b X_1 + (a^2+b^2)/b X_2) (x) eta_1 + J_2 - (1/b X_1 + a/b X_2) (x) eta_2.
    pub fn tsukada_j(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let (a, b) = (self.params.a, self.params.b);
        let l = self.layout;
        let (p, q) = self.m_parts(y);
        let [e1, e2] = self.m_contact(y);
        let (x1, x2) = (e1.clone(), e2.clone());
        let mut j = DMatrix::zeros(l.np + l.nq, l.np + l.nq);
        // Sasakian J_i: i on the contact distribution, X_i -> 0.
        let j1 = complex_structure(l.np / 2) + &p * times_i(&p).transpose();
        let j2 = complex_structure(l.nq / 2) + &q * times_i(&q).transpose();
        j.view_mut((0, 0), (l.np, l.np)).copy_from(&j1);
        j.view_mut((l.np, l.np), (l.nq, l.nq)).copy_from(&j2);
        j + (&x1 * (a / b) + &x2 * ((a * a + b * b) / b)) * e1.transpose()
            - (&x1 * (1.0 / b) + &x2 * (a / b)) * e2.transpose()
    }

    /// g = g_1 + g_2 - a (eta_1 eta_2 + eta_2 eta_1) + (a^2 + b^2 - 1) eta_1 eta_1.
    pub fn tsukada_metric(&self, y: &DVector<f64>, cross_sign: f64) -> DMatrix<f64> {
        let (a, b) = (self.params.a, self.params.b);
        let n = self.m_dim();
        let [e1, e2] = self.m_contact(y);
        DMatrix::identity(n, n) - (&e1 * e2.transpose() + &e2 * e1.transpose()) * (a * cross_sign)
            + &e1 * e1.transpose() * (a * a + b * b - 1.0)
    }

    /// Sample of Y with |s_i| <= 1.
    pub fn sample(&self, rng: &mut rand_chacha::ChaCha8Rng) -> DVector<f64> {
        let p = gaussian(rng, self.layout.np).normalize();
        let q = gaussian(rng, self.layout.nq).normalize();
        let s1 = rng.gen_range(-1.0..=1.0);
        let s2 = rng.gen_range(-1.0..=1.0);
        self.point(&p, s1, &q, s2)
    }

    pub fn scenario(&self) -> Scenario {
        let manifold = self.manifold();
        let ce = Arc::new(self.clone());
        let c1 = ce.clone();
        let omega = TwoForm::new(move |x| c1.omega_h(x));
        let c2 = ce.clone();
        let mf = manifold.clone();
        let triple = HermitianTriple::new(manifold.clone(), omega.clone(), move |x| {
            c2.j(x) * mf.tangent_projector(x).unwrap_or_else(|_| DMatrix::identity(x.len(), x.len()))
        });
        let c3 = ce.clone();
        let moment = MomentMap::closed_form(1, move |x| DVector::from_element(1, c3.psi(x)));
        let mut e0p = DVector::zeros(self.layout.np);
        e0p[0] = 1.0;
        let mut e0q = DVector::zeros(self.layout.nq);
        e0q[0] = 1.0;
        let base = self.point(&e0p, 0.0, &e0q, 0.0);
        let c4 = ce.clone();
        let p = self.params;
        Scenario {
            id: "calabi-eckmann".into(),
            params: json!({ "n": p.n, "m": p.m, "tau": [p.a, p.b] }),
            manifold,
            action: Arc::new(self.action()),
            omega,
            triple: Some(triple),
            moment,
            compact: false,
            fixed_points: vec![],
            base_point: base,
            base_value: DVector::zeros(1),
            basin_label: None,
            sampler: Arc::new(move |rng: &mut rand_chacha::ChaCha8Rng, _k: SampleKind| c4.sample(rng)),
            notes: "coordinates [p, s1, q, s2]; product complex structure of (C^{n+1} - 0) x (C^{m+1} - 0); V = d/ds1 + b X2 + a d/ds2; Psi = a b s1 - b s2; reduced spaces carry the Tsukada structure".into(),
        }
    }
}

/// The R-action exp(t V): s1 += t, q -> e^{i b t} q, s2 += a t.
#[derive(Debug, Clone)]
pub struct CeAction {
    pub ce: CalabiEckmann,
}

impl GroupAction for CeAction {
    fn rank(&self) -> usize {
        1
    }
    fn kind(&self) -> ActionKind {
        ActionKind::RealLine
    }
    fn field(&self, x: &DVector<f64>, xi: &DVector<f64>) -> DVector<f64> {
        self.ce.v(x) * xi[0]
    }
    fn act_real(&self, x: &DVector<f64>, xi: &DVector<f64>, t: f64) -> DVector<f64> {
        let (a, b) = (self.ce.params.a, self.ce.params.b);
        let l = self.ce.layout;
        let u = xi[0] * t;
        let q = rotate(&self.ce.q(x), b * u);
        self.ce.point(&self.ce.p(x), x[l.s1()] + u, &q, x[l.s2()] + a * u)
    }
    /// Flow of J V = X_1 - b d/ds2 + a X_2.
    fn act_imag(&self, x: &DVector<f64>, xi: &DVector<f64>, s: f64) -> Result<DVector<f64>> {
        let (a, b) = (self.ce.params.a, self.ce.params.b);
        let l = self.ce.layout;
        let u = xi[0] * s;
        let p = rotate(&self.ce.p(x), u);
        let q = rotate(&self.ce.q(x), a * u);
        Ok(self.ce.point(&p, x[l.s1()], &q, x[l.s2()] - b * u))
    }
}
