use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::EmbeddedManifold;
use crate::error::{Error, Result};
use crate::linalg::singular_values;

/// A differential k-form evaluated on ambient vectors at an ambient point.
pub trait Form: Send + Sync {
    fn degree(&self) -> usize;
    fn eval(&self, x: &DVector<f64>, vs: &[DVector<f64>]) -> f64;
}

type MatFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
type VecFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type ScalarFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type MultiFn = Arc<dyn Fn(&DVector<f64>, &[DVector<f64>]) -> f64 + Send + Sync>;

/// A 2-form given by its antisymmetric ambient matrix W(x):
/// omega(u, v) = u^T W(x) v.
#[derive(Clone)]
pub struct TwoForm {
    f: MatFn,
}

impl TwoForm {
    pub fn new(f: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        TwoForm { f: Arc::new(f) }
    }

    pub fn constant(w: DMatrix<f64>) -> Self {
        TwoForm::new(move |_| w.clone())
    }

    pub fn matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.f)(x)
    }

    pub fn eval2(&self, x: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (u.transpose() * (self.f)(x) * v)[0]
    }

    /// a * self + b * other.
    pub fn combine(&self, a: f64, other: &TwoForm, b: f64) -> TwoForm {
        let f = self.f.clone();
        let g = other.f.clone();
        TwoForm::new(move |x| f(x) * a + g(x) * b)
    }

    /// Pointwise rescaling by a function.
    pub fn scaled(&self, c: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static) -> TwoForm {
        let f = self.f.clone();
        TwoForm::new(move |x| f(x) * c(x))
    }
}

impl Form for TwoForm {
    fn degree(&self) -> usize {
        2
    }
    fn eval(&self, x: &DVector<f64>, vs: &[DVector<f64>]) -> f64 {
        self.eval2(x, &vs[0], &vs[1])
    }
}

/// A 1-form given by its ambient covector.
#[derive(Clone)]
pub struct OneForm {
    f: VecFn,
}

impl OneForm {
    pub fn new(f: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static) -> Self {
        OneForm { f: Arc::new(f) }
    }
    pub fn covector(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.f)(x)
    }
    pub fn eval1(&self, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (self.f)(x).dot(v)
    }
}

impl Form for OneForm {
    fn degree(&self) -> usize {
        1
    }
    fn eval(&self, x: &DVector<f64>, vs: &[DVector<f64>]) -> f64 {
        self.eval1(x, &vs[0])
    }
}

/// A function.
#[derive(Clone)]
pub struct ZeroForm {
    f: ScalarFn,
}

impl ZeroForm {
    pub fn new(f: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static) -> Self {
        ZeroForm { f: Arc::new(f) }
    }
}

impl Form for ZeroForm {
    fn degree(&self) -> usize {
        0
    }
    fn eval(&self, x: &DVector<f64>, _vs: &[DVector<f64>]) -> f64 {
        (self.f)(x)
    }
}

/// A k-form given by an arbitrary multilinear closure.
#[derive(Clone)]
pub struct FnForm {
    degree: usize,
    f: MultiFn,
}

impl FnForm {
    pub fn new(
        degree: usize,
        f: impl Fn(&DVector<f64>, &[DVector<f64>]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        FnForm { degree, f: Arc::new(f) }
    }
}

impl Form for FnForm {
    fn degree(&self) -> usize {
        self.degree
    }
    fn eval(&self, x: &DVector<f64>, vs: &[DVector<f64>]) -> f64 {
        (self.f)(x, vs)
    }
}

/// The 1-form u -> omega(X, u).
pub fn interior(
    field: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    omega: &TwoForm,
) -> OneForm {
    let w = omega.clone();
    OneForm::new(move |x| w.matrix(x).transpose() * field(x))
}

/// d(alpha)(v_0, ..., v_k) at x by the invariant global formula. Vector
/// fields are the tangent-projector extensions P(y) v_i; derivatives and
/// brackets are central differences along the curves project(x + t v_i).
pub fn exterior_derivative_fd(
    manifold: &EmbeddedManifold,
    alpha: &dyn Form,
    x: &DVector<f64>,
    vs: &[DVector<f64>],
) -> Result<f64> {
    let k = alpha.degree();
    if vs.len() != k + 1 {
        return Err(Error::DimensionMismatch(format!(
            "d of a {k}-form needs {} vectors, got {}",
            k + 1,
            vs.len()
        )));
    }
    for v in vs {
        if v.len() != manifold.ambient_dim() {
            return Err(Error::DimensionMismatch("vector length".into()));
        }
        manifold.check_tangent(x, v)?;
    }
    if k + 1 > manifold.dim() {
        return Ok(0.0);
    }
    let stacked = DMatrix::from_columns(vs);
    let s = singular_values(&stacked);
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 || s.len() < k + 1 || s[k] <= 1e-12 * smax {
        return Ok(0.0);
    }
    let h = manifold.tol.h_fd;
    let scale = x.amax().max(1.0);
    if !(h > 1e3 * f64::EPSILON * scale) {
        return Err(Error::StepUnderflow);
    }
    // Curve points and projectors at x +- h v_i.
    let mut plus = Vec::with_capacity(k + 1);
    let mut minus = Vec::with_capacity(k + 1);
    for v in vs {
        let yp = manifold.curve(x, v, h)?;
        let ym = manifold.curve(x, v, -h)?;
        let pp = manifold.tangent_projector(&yp)?;
        let pm = manifold.tangent_projector(&ym)?;
        plus.push((yp, pp));
        minus.push((ym, pm));
    }
    let mut total = 0.0;
    for i in 0..=k {
        let others = |p: &DMatrix<f64>| -> Vec<DVector<f64>> {
            (0..=k).filter(|&j| j != i).map(|j| p * &vs[j]).collect()
        };
        let fp = alpha.eval(&plus[i].0, &others(&plus[i].1));
        let fm = alpha.eval(&minus[i].0, &others(&minus[i].1));
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * (fp - fm) / (2.0 * h);
    }
    if k >= 1 {
        let p0 = manifold.tangent_projector(x)?;
        for i in 0..=k {
            for j in (i + 1)..=k {
                let dij = (&plus[i].1 * &vs[j] - &minus[i].1 * &vs[j]) / (2.0 * h);
                let dji = (&plus[j].1 * &vs[i] - &minus[j].1 * &vs[i]) / (2.0 * h);
                let bracket = &p0 * (dij - dji);
                let mut args = vec![bracket];
                args.extend((0..=k).filter(|&l| l != i && l != j).map(|l| vs[l].clone()));
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                total += sign * alpha.eval(x, &args);
            }
        }
    }
    Ok(total)
}
