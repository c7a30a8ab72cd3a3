//! Torus actions and the noncompact one-parameter action: fundamental
//! fields, complexified flows, isotropy and invariance audits.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{null_space, orthogonal_complement, svd_sorted};
use crate::manifold::{EmbeddedManifold, HermitianTriple, TwoForm};
use crate::report::{max_dev, stream, CheckReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ActionKind {
    /// A compact torus T^k.
    Torus,
    /// The real line acting by a flow (k = 1).
    RealLine,
}

/// Lie algebra coordinates in a fixed orthonormal basis; also used for the
/// dual via that inner product.
pub type LieAlgebraElement = DVector<f64>;

/// An action of an abelian group K with complexification G.
pub trait GroupAction: Send + Sync {
    fn rank(&self) -> usize;
    fn kind(&self) -> ActionKind;
    /// xi_M(x) = d/dt exp(t xi) x at t = 0.
    fn field(&self, x: &DVector<f64>, xi: &DVector<f64>) -> DVector<f64>;
    /// exp(t xi) x.
    fn act_real(&self, x: &DVector<f64>, xi: &DVector<f64>, t: f64) -> DVector<f64>;
    /// exp(i s xi) x, the flow of J xi_M for time s.
    fn act_imag(&self, _x: &DVector<f64>, _xi: &DVector<f64>, _s: f64) -> Result<DVector<f64>> {
        Err(Error::NoComplexification)
    }
}

fn check_rank(action: &dyn GroupAction, xi: &DVector<f64>) -> Result<()> {
    if xi.len() != action.rank() {
        return Err(Error::DimensionMismatch(format!(
            "Lie algebra element has {} coordinates, action rank is {}",
            xi.len(),
            action.rank()
        )));
    }
    Ok(())
}

/// xi_M at m.
pub fn fundamental_field(action: &dyn GroupAction, xi: &DVector<f64>, m: &DVector<f64>) -> Result<DVector<f64>> {
    check_rank(action, xi)?;
    Ok(action.field(m, xi))
}

/// The N x k matrix whose columns are the generator fields at x.
pub fn generator_matrix(action: &dyn GroupAction, x: &DVector<f64>) -> DMatrix<f64> {
    let k = action.rank();
    let cols: Vec<DVector<f64>> = (0..k)
        .map(|a| {
            let mut e = DVector::zeros(k);
            e[a] = 1.0;
            action.field(x, &e)
        })
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(x.len(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// exp(z xi) m for z = t + i s. The real and imaginary parts commute.
pub fn act_complexified(
    action: &dyn GroupAction,
    xi: &DVector<f64>,
    z: Complex64,
    m: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_rank(action, xi)?;
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::Overflow);
    }
    let y = if z.im == 0.0 { m.clone() } else { action.act_imag(m, xi, z.im)? };
    let y = if z.re == 0.0 { y } else { action.act_real(&y, xi, z.re) };
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow);
    }
    Ok(y)
}

/// Isotropy subalgebra of m and its annihilator.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotropyData {
    pub base: DVector<f64>,
    /// k x dim(k_m), orthonormal columns.
    pub algebra_basis: DMatrix<f64>,
    /// k x (k - dim(k_m)), orthonormal columns.
    pub annihilator_basis: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    /// Ratio between the threshold and the nearest singular value.
    pub gap: f64,
}

impl IsotropyData {
    pub fn dim(&self) -> usize {
        self.algebra_basis.ncols()
    }
}

/// Kernel of xi -> xi_M(m). Singular values below `tol * max(sigma_max, 1)`
/// count as zero.
pub fn isotropy_algebra(action: &dyn GroupAction, m: &DVector<f64>, tol: f64) -> IsotropyData {
    let a = generator_matrix(action, m);
    let k = action.rank();
    let (s, _) = svd_sorted(&a);
    let thresh = tol * s.first().copied().unwrap_or(0.0).max(1.0);
    let algebra_basis = null_space(&a, thresh);
    let annihilator_basis = if algebra_basis.ncols() == 0 {
        DMatrix::identity(k, k)
    } else {
        orthogonal_complement(&algebra_basis)
    };
    let (_, gap) = crate::linalg::rank_and_gap(&s, thresh);
    IsotropyData { base: m.clone(), algebra_basis, annihilator_basis, singular_values: s, gap }
}

/// d(exp(t xi))_x u, by central differences along the projected curve.
pub fn pushforward(
    action: &dyn GroupAction,
    manifold: &EmbeddedManifold,
    x: &DVector<f64>,
    xi: &DVector<f64>,
    t: f64,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    let h = manifold.tol.h_fd;
    let yp = action.act_real(&manifold.curve(x, u, h)?, xi, t);
    let ym = action.act_real(&manifold.curve(x, u, -h)?, xi, t);
    Ok((yp - ym) / (2.0 * h))
}

/// Tensors whose invariance can be audited.
#[derive(Clone, Copy)]
pub enum Tensor<'a> {
    Form(&'a TwoForm),
    Metric(&'a HermitianTriple),
    ComplexStructure(&'a HermitianTriple),
}

/// Random tangent vector at x.
pub fn random_tangent<R: Rng>(manifold: &EmbeddedManifold, x: &DVector<f64>, rng: &mut R) -> Result<DVector<f64>> {
    let p = manifold.tangent_projector(x)?;
    let g = DVector::from_fn(x.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let v = p * g;
    let n = v.norm();
    if n == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(v / n)
}

/// Max over samples and random group elements of |g^* T - T|.
pub fn check_invariance(
    tensor: Tensor<'_>,
    action: &dyn GroupAction,
    manifold: &EmbeddedManifold,
    samples: &[DVector<f64>],
    seed: u64,
    tol: f64,
    scenario: &str,
) -> CheckReport {
    use rayon::prelude::*;
    let k = action.rank();
    let devs: Vec<f64> = samples
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut rng = stream(seed, i as u64);
            let mut run = || -> Result<f64> {
                let xi = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
                let t: f64 = rng.gen_range(-3.0..3.0);
                let u = random_tangent(manifold, x, &mut rng)?;
                let v = random_tangent(manifold, x, &mut rng)?;
                let y = action.act_real(x, &xi, t);
                let gu = pushforward(action, manifold, x, &xi, t, &u)?;
                let gv = pushforward(action, manifold, x, &xi, t, &v)?;
                Ok(match tensor {
                    Tensor::Form(w) => (w.eval2(&y, &gu, &gv) - w.eval2(x, &u, &v)).abs(),
                    Tensor::Metric(tr) => (tr.metric(&y, &gu, &gv) - tr.metric(x, &u, &v)).abs(),
                    Tensor::ComplexStructure(tr) => {
                        let ju = tr.apply_j(x, &u);
                        let g_ju = pushforward(action, manifold, x, &xi, t, &ju)?;
                        (tr.apply_j(&y, &gu) - g_ju).amax()
                    }
                })
            };
            run().unwrap_or(f64::NAN)
        })
        .collect();
    let name = match tensor {
        Tensor::Form(_) => "invariance_form",
        Tensor::Metric(_) => "invariance_metric",
        Tensor::ComplexStructure(_) => "invariance_complex_structure",
    };
    CheckReport::new(name, scenario, samples.len(), max_dev(&devs), tol)
}

/// A linear torus action on R^N generated by commuting skew matrices,
/// complexified with a constant complex structure commuting with them.
#[derive(Debug, Clone)]
pub struct LinearTorusAction {
    pub generators: Vec<DMatrix<f64>>,
    pub complex_structure: Option<DMatrix<f64>>,
}

impl LinearTorusAction {
    fn generator(&self, xi: &DVector<f64>) -> DMatrix<f64> {
        let n = self.generators[0].nrows();
        self.generators.iter().zip(xi.iter()).fold(DMatrix::zeros(n, n), |acc, (g, &c)| acc + g * c)
    }
}

impl GroupAction for LinearTorusAction {
    fn rank(&self) -> usize {
        self.generators.len()
    }
    fn kind(&self) -> ActionKind {
        ActionKind::Torus
    }
    fn field(&self, x: &DVector<f64>, xi: &DVector<f64>) -> DVector<f64> {
        self.generator(xi) * x
    }
    fn act_real(&self, x: &DVector<f64>, xi: &DVector<f64>, t: f64) -> DVector<f64> {
        (self.generator(xi) * t).exp() * x
    }
    fn act_imag(&self, x: &DVector<f64>, xi: &DVector<f64>, s: f64) -> Result<DVector<f64>> {
        let j = self.complex_structure.as_ref().ok_or(Error::NoComplexification)?;
        let a = j * self.generator(xi) * s;
        let growth = crate::linalg::singular_values(&a).first().copied().unwrap_or(0.0);
        if growth > 700.0 {
            return Err(Error::Overflow);
        }
        Ok(a.exp() * x)
    }
}
