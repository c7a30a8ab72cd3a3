//! Minimal coupling on P x k*: omega = pi^* sigma - d<a, theta>, with
//! moment map -a for the left action induced by the principal action.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;

use crate::action::{generator_matrix, ActionKind, GroupAction};
use crate::error::{Error, Result};
use crate::linalg::{singular_values, wedge};
use crate::manifold::{Constraint, EmbeddedManifold, HermitianTriple, TwoForm};
use crate::moment::MomentMap;
use crate::report::{max_dev, stream, CheckReport};

pub type VecFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type FlowFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>, f64) -> DVector<f64> + Send + Sync>;
pub type MatFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type PointSampler = Arc<dyn Fn(&mut ChaCha8Rng) -> DVector<f64> + Send + Sync>;

/// A principal torus bundle P -> B with connection, given on P in R^N.
#[derive(Clone)]
pub struct PrincipalBundle {
    pub name: String,
    pub total: EmbeddedManifold,
    pub rank: usize,
    /// xi_P(x).
    pub vertical: VecFn,
    /// x . exp(t xi).
    pub right_action: FlowFn,
    /// Rows are the ambient covectors of theta^1, ..., theta^k.
    pub connection: MatFn,
    /// Matrices of d theta^a; finite differences of the connection when absent.
    pub curvature: Option<Arc<dyn Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync>>,
    /// pi^* sigma as a form on P.
    pub base_form: TwoForm,
    /// Complex structure on horizontal vectors (lift of the base J), as an
    /// ambient N x N matrix.
    pub horizontal_j: Option<MatFn>,
    pub sampler: PointSampler,
}

impl PrincipalBundle {
    pub fn ambient_dim(&self) -> usize {
        self.total.ambient_dim()
    }

    pub fn curvature_at(&self, x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        if let Some(c) = &self.curvature {
            return c(x);
        }
        let n = x.len();
        let h = 1e-6;
        let mut d = vec![DMatrix::zeros(n, n); self.rank];
        for i in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let dth = ((self.connection)(&xp) - (self.connection)(&xm)) / (2.0 * h);
            for (a, m) in d.iter_mut().enumerate() {
                for j in 0..n {
                    m[(i, j)] += dth[(a, j)];
                    m[(j, i)] -= dth[(a, j)];
                }
            }
        }
        d
    }

    /// theta(xi_P) = xi, invariance of theta under the right action and
    /// horizontality of sigma, over `n` sampled points.
    pub fn check_invariants(&self, n: usize, seed: u64, tol: f64) -> Vec<CheckReport> {
        let k = self.rank;
        let mut rep = Vec::new();
        let mut norm = Vec::new();
        let mut inv = Vec::new();
        let mut basic = Vec::new();
        for i in 0..n as u64 {
            let mut rng = stream(seed, i);
            let x = (self.sampler)(&mut rng);
            let th = (self.connection)(&x);
            let e = match self.total.tangent_basis(&x) {
                Ok(e) => e,
                Err(_) => {
                    norm.push(f64::NAN);
                    continue;
                }
            };
            for a in 0..k {
                let mut xi = DVector::zeros(k);
                xi[a] = 1.0;
                let v = (self.vertical)(&x, &xi);
                norm.push((&th * &v - &xi).amax());
                let sv = self.base_form.matrix(&x).transpose() * &v;
                basic.push((e.transpose() * sv).amax());
            }
            let xi = crate::scenarios::gaussian(&mut rng, k).normalize();
            let t = 0.7;
            let y = (self.right_action)(&x, &xi, t);
            let th_y = (self.connection)(&y);
            for c in 0..e.ncols() {
                let u = e.column(c).into_owned();
                let h = 1e-6;
                let push = ((self.right_action)(&(&x + &u * h), &xi, t) - (self.right_action)(&(&x - &u * h), &xi, t)) / (2.0 * h);
                inv.push((&th_y * push - &th * &u).amax());
            }
        }
        rep.push(CheckReport::new("connection_normalization", &self.name, n, max_dev(&norm), tol));
        rep.push(CheckReport::new("connection_invariance", &self.name, n, max_dev(&inv), tol.max(1e-7)));
        rep.push(CheckReport::new("base_form_horizontal", &self.name, n, max_dev(&basic), tol));
        rep
    }
}

/// Constraint of P x R^k: P's equations on the first N coordinates.
pub struct ProductWithFlat {
    inner: Arc<dyn Constraint>,
    extra: usize,
}

impl Constraint for ProductWithFlat {
    fn ambient_dim(&self) -> usize {
        self.inner.ambient_dim() + self.extra
    }
    fn codim(&self) -> usize {
        self.inner.codim()
    }
    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        self.inner.residual(&x.rows(0, self.inner.ambient_dim()).into_owned())
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.inner.ambient_dim();
        let j = self.inner.jacobian(&x.rows(0, n).into_owned());
        let mut out = DMatrix::zeros(j.nrows(), n + self.extra);
        out.view_mut((0, 0), (j.nrows(), n)).copy_from(&j);
        out
    }
}

/// The K-action on P x k* with field (-o xi_P, 0) and moment map -o a.
/// `orientation` o = 1 is the action induced by x -> x exp(-t xi).
#[derive(Clone)]
pub struct CouplingAction {
    pub bundle: Arc<PrincipalBundle>,
    pub orientation: f64,
}

impl CouplingAction {
    fn split(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = self.bundle.ambient_dim();
        (x.rows(0, n).into_owned(), x.rows(n, self.bundle.rank).into_owned())
    }
}

fn join(p: &DVector<f64>, a: &DVector<f64>) -> DVector<f64> {
    let mut x = DVector::zeros(p.len() + a.len());
    x.rows_mut(0, p.len()).copy_from(p);
    x.rows_mut(p.len(), a.len()).copy_from(a);
    x
}

impl GroupAction for CouplingAction {
    fn rank(&self) -> usize {
        self.bundle.rank
    }
    fn kind(&self) -> ActionKind {
        ActionKind::Torus
    }
    fn field(&self, x: &DVector<f64>, xi: &DVector<f64>) -> DVector<f64> {
        let (p, a) = self.split(x);
        join(&((self.bundle.vertical)(&p, xi) * -self.orientation), &DVector::zeros(a.len()))
    }
    fn act_real(&self, x: &DVector<f64>, xi: &DVector<f64>, t: f64) -> DVector<f64> {
        let (p, a) = self.split(x);
        join(&(self.bundle.right_action)(&p, xi, -self.orientation * t), &a)
    }
    /// The coupling structure sends xi_P to d/da_xi, so the imaginary
    /// direction only moves the fibre coordinate.
    fn act_imag(&self, x: &DVector<f64>, xi: &DVector<f64>, s: f64) -> Result<DVector<f64>> {
        let (p, a) = self.split(x);
        Ok(join(&p, &(a - xi * (self.orientation * s))))
    }
}

/// omega, J and Psi on P x k*.
#[derive(Clone)]
pub struct MinimalCoupling {
    pub bundle: Arc<PrincipalBundle>,
    pub manifold: EmbeddedManifold,
    pub omega: TwoForm,
    pub action: Arc<CouplingAction>,
    pub moment: MomentMap,
    pub triple: Option<HermitianTriple>,
    pub orientation: f64,
}

/// Build the minimal coupling form. The complex structure, when the bundle
/// has a horizontal J, is J_h on horizontal vectors, xi_P -> d/da_xi and
/// d/da_xi -> -xi_P.
pub fn minimal_coupling_form(bundle: PrincipalBundle, orientation: f64) -> MinimalCoupling {
    let bundle = Arc::new(bundle);
    let n = bundle.ambient_dim();
    let k = bundle.rank;
    let manifold = EmbeddedManifold::from_arc(
        format!("{}-coupling", bundle.name),
        Arc::new(ProductWithFlat { inner: bundle.total.constraint_arc(), extra: k }),
    );
    let b = bundle.clone();
    let omega = TwoForm::new(move |x| {
        let p = x.rows(0, n).into_owned();
        let mut w = DMatrix::zeros(n + k, n + k);
        w.view_mut((0, 0), (n, n)).copy_from(&b.base_form.matrix(&p));
        let th = (b.connection)(&p);
        let curv = b.curvature_at(&p);
        for a in 0..k {
            let mut da = DVector::zeros(n + k);
            da[n + a] = 1.0;
            let mut t = DVector::zeros(n + k);
            t.rows_mut(0, n).copy_from(&th.row(a).transpose());
            w -= wedge(&da, &t);
            let mut dth = w.view_mut((0, 0), (n, n));
            dth -= &curv[a] * x[n + a];
        }
        w
    });
    let action = Arc::new(CouplingAction { bundle: bundle.clone(), orientation });
    let moment = MomentMap::closed_form(k, move |x| x.rows(n, k).into_owned() * -orientation);
    let triple = bundle.horizontal_j.clone().map(|jh| {
        let b = bundle.clone();
        let mf = manifold.clone();
        HermitianTriple::new(manifold.clone(), omega.clone(), move |x| {
            let p = x.rows(0, n).into_owned();
            let th = (b.connection)(&p);
            let vert = generator_matrix_bundle(&b, &p);
            let hor = DMatrix::identity(n, n) - &vert * &th;
            let mut j = DMatrix::zeros(n + k, n + k);
            j.view_mut((0, 0), (n, n)).copy_from(&(jh(&p) * hor));
            // theta(dx) goes to the fibre, da goes to -xi_P.
            j.view_mut((n, 0), (k, n)).copy_from(&th);
            j.view_mut((0, n), (n, k)).copy_from(&(-&vert));
            let pt = mf.tangent_projector(x).unwrap_or_else(|_| DMatrix::identity(n + k, n + k));
            j * pt
        })
    });
    MinimalCoupling { bundle, manifold, omega, action, moment, triple, orientation }
}

/// N x k matrix of vertical fields.
fn generator_matrix_bundle(b: &PrincipalBundle, p: &DVector<f64>) -> DMatrix<f64> {
    let k = b.rank;
    let cols: Vec<DVector<f64>> = (0..k)
        .map(|a| {
            let mut e = DVector::zeros(k);
            e[a] = 1.0;
            (b.vertical)(p, &e)
        })
        .collect();
    DMatrix::from_columns(&cols)
}

impl MinimalCoupling {
    pub fn point(&self, p: &DVector<f64>, a: &DVector<f64>) -> DVector<f64> {
        join(p, a)
    }

    /// Sample of P x {|a| <= r}.
    pub fn sample(&self, rng: &mut ChaCha8Rng, r: f64) -> DVector<f64> {
        use rand::Rng;
        let p = (self.bundle.sampler)(rng);
        let a = DVector::from_fn(self.bundle.rank, |_, _| rng.gen_range(-r..=r));
        join(&p, &a)
    }

    fn omega_sigma(&self, x: &DVector<f64>) -> Result<f64> {
        let e = self.manifold.tangent_basis(x)?;
        let w = e.transpose() * self.omega.matrix(x) * &e;
        Ok(*singular_values(&w).last().unwrap_or(&0.0))
    }

    /// Smallest singular value of omega on T(P x k*) over the slab |a| <= r:
    /// random samples, plus a grid scan with golden-section refinement along
    /// each fibre axis through the first few base points.
    pub fn slab_audit(&self, r: f64, n: usize, seed: u64) -> Result<f64> {
        let mut worst = f64::INFINITY;
        for i in 0..n as u64 {
            let mut rng = stream(seed, i);
            let x = self.sample(&mut rng, r);
            worst = worst.min(self.omega_sigma(&x)?);
        }
        const GRID: usize = 41;
        for i in 0..n.min(8) as u64 {
            let mut rng = stream(seed, i);
            let p = (self.bundle.sampler)(&mut rng);
            for axis in 0..self.bundle.rank {
                let at = |t: f64| -> Result<f64> {
                    let mut a = DVector::zeros(self.bundle.rank);
                    a[axis] = t;
                    self.omega_sigma(&join(&p, &a))
                };
                let ts: Vec<f64> = (0..GRID).map(|j| -r + 2.0 * r * j as f64 / (GRID - 1) as f64).collect();
                let vals = ts.iter().map(|&t| at(t)).collect::<Result<Vec<_>>>()?;
                let j = (0..GRID).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
                let (mut lo, mut hi) = (ts[j.saturating_sub(1)], ts[(j + 1).min(GRID - 1)]);
                let g = 0.5 * (5f64.sqrt() - 1.0);
                while hi - lo > 1e-13 * (1.0 + r) {
                    let m1 = hi - g * (hi - lo);
                    let m2 = lo + g * (hi - lo);
                    if at(m1)? < at(m2)? {
                        hi = m2;
                    } else {
                        lo = m1;
                    }
                }
                worst = worst.min(vals[j]).min(at(0.5 * (lo + hi))?);
            }
        }
        if !(worst > self.manifold.tol.sigma_min) {
            return Err(Error::SlabTooLarge(worst));
        }
        Ok(worst)
    }

    /// max |d Psi^xi(v) - omega(xi_M, v)| over the slab, tangent v from a basis.
    pub fn moment_audit(&self, r: f64, n: usize, seed: u64, tol: f64) -> CheckReport {
        let k = self.bundle.rank;
        let mut devs = Vec::new();
        for i in 0..n as u64 {
            let mut rng = stream(seed, i);
            let x = self.sample(&mut rng, r);
            let e = match self.manifold.tangent_basis(&x) {
                Ok(e) => e,
                Err(_) => {
                    devs.push(f64::NAN);
                    continue;
                }
            };
            let g = generator_matrix(self.action.as_ref(), &x);
            let w = self.omega.matrix(&x);
            for a in 0..k {
                for c in 0..e.ncols() {
                    let v = e.column(c).into_owned();
                    let h = 1e-6;
                    let xp = self.manifold.curve(&x, &v, h);
                    let xm = self.manifold.curve(&x, &v, -h);
                    let d = match (xp, xm) {
                        (Ok(p), Ok(m)) => (self.moment.eval(&p)[a] - self.moment.eval(&m)[a]) / (2.0 * h),
                        _ => f64::NAN,
                    };
                    let iw = g.column(a).dot(&(&w * &v));
                    devs.push((d - iw).abs());
                }
            }
        }
        CheckReport::new("coupling_moment_identity", &self.bundle.name, n, max_dev(&devs), tol)
    }
}
