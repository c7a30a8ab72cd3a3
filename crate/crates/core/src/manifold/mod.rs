//! Embedded manifolds M = {c(x) = 0} in R^N with Newton projection,
//! tangent projectors, differential forms and Hermitian triples.

mod constraint;
mod forms;
mod hermitian;

use std::ops::Deref;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

pub use constraint::{Constraint, SphereBlocks, Unconstrained};
pub use forms::{
    exterior_derivative_fd, interior, Form, FnForm, OneForm, TwoForm, ZeroForm,
};
pub use hermitian::{compatible_triple_from_form, HermitianTriple, TripleDefects};

use crate::error::{Error, Result};
use crate::linalg::svd_sorted;
use crate::tolerances::Tolerances;

/// A point of M whose constraint residual has been checked.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPoint {
    pub coords: DVector<f64>,
    pub residual: f64,
}

impl Deref for ManifoldPoint {
    type Target = DVector<f64>;
    fn deref(&self) -> &DVector<f64> {
        &self.coords
    }
}

/// A tangent vector with its base point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: ManifoldPoint,
    pub vec: DVector<f64>,
}

#[derive(Clone)]
pub struct EmbeddedManifold {
    name: String,
    constraint: Arc<dyn Constraint>,
    pub tol: Tolerances,
}

impl std::fmt::Debug for EmbeddedManifold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EmbeddedManifold")
            .field("name", &self.name)
            .field("ambient_dim", &self.ambient_dim())
            .field("dim", &self.dim())
            .finish()
    }
}

impl EmbeddedManifold {
    pub fn new(name: impl Into<String>, constraint: impl Constraint + 'static) -> Self {
        EmbeddedManifold {
            name: name.into(),
            constraint: Arc::new(constraint),
            tol: Tolerances::default(),
        }
    }

    pub fn from_arc(name: impl Into<String>, constraint: Arc<dyn Constraint>) -> Self {
        EmbeddedManifold { name: name.into(), constraint, tol: Tolerances::default() }
    }

    pub fn constraint_arc(&self) -> Arc<dyn Constraint> {
        self.constraint.clone()
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn ambient_dim(&self) -> usize {
        self.constraint.ambient_dim()
    }

    pub fn codim(&self) -> usize {
        self.constraint.codim()
    }

    pub fn dim(&self) -> usize {
        self.ambient_dim() - self.codim()
    }

    pub fn constraint(&self) -> &dyn Constraint {
        self.constraint.as_ref()
    }

    fn check_len(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.ambient_dim() {
            return Err(Error::DimensionMismatch(format!(
                "{}: expected {} coordinates, got {}",
                self.name,
                self.ambient_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Constraint residual (max abs entry).
    pub fn residual(&self, x: &DVector<f64>) -> f64 {
        crate::linalg::max_abs(self.constraint.residual(x).iter().copied())
    }

    /// Accept `x` as a point of M if its residual is below `eps_mem`.
    pub fn point(&self, x: DVector<f64>) -> Result<ManifoldPoint> {
        self.check_len(&x)?;
        let r = self.residual(&x);
        if r > self.tol.eps_mem {
            return Err(Error::NonConvergence { residual: r });
        }
        Ok(ManifoldPoint { coords: x, residual: r })
    }

    /// Gauss-Newton projection onto M using the minimal-norm correction in
    /// the top `codim` singular directions of the constraint Jacobian.
    pub fn project(&self, x: &DVector<f64>) -> Result<ManifoldPoint> {
        self.check_len(x)?;
        let k = self.codim();
        if k == 0 {
            return Ok(ManifoldPoint { coords: x.clone(), residual: 0.0 });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonConvergence { residual: f64::INFINITY });
        }
        let mut y = x.clone();
        let mut c = self.constraint.residual(&y);
        if c.amax() > self.tol.r_basin {
            return Err(Error::NonConvergence { residual: c.amax() });
        }
        for _ in 0..self.tol.max_newton {
            if c.amax() <= 1e-15 {
                break;
            }
            let jac = self.constraint.jacobian(&y);
            let (s, v) = svd_sorted(&jac);
            if s[k - 1] < self.tol.sigma_min {
                return Err(Error::RankDeficient { sigma: s[k - 1] });
            }
            let mut dx = DVector::zeros(y.len());
            for i in 0..k {
                let vi = v.column(i);
                let ji = &jac * vi;
                let coef = ji.dot(&c) / (s[i] * s[i]);
                dx -= vi * coef;
            }
            let step = dx.amax();
            y += dx;
            let c_new = self.constraint.residual(&y);
            let stalled = c_new.amax() >= c.amax() && step < 1e-14;
            c = c_new;
            if stalled {
                break;
            }
        }
        let r = c.amax();
        if r > self.tol.eps_mem || !r.is_finite() {
            return Err(Error::NonConvergence { residual: r });
        }
        Ok(ManifoldPoint { coords: y, residual: r })
    }

    /// Orthogonal projector of R^N onto T_x M.
    pub fn tangent_projector(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_len(x)?;
        let n = self.ambient_dim();
        let k = self.codim();
        let mut p = DMatrix::identity(n, n);
        if k == 0 {
            return Ok(p);
        }
        let jac = self.constraint.jacobian(x);
        let (s, v) = svd_sorted(&jac);
        if s[k - 1] < self.tol.sigma_min {
            return Err(Error::RankDeficient { sigma: s[k - 1] });
        }
        for i in 0..k {
            let vi = v.column(i);
            p -= vi * vi.transpose();
        }
        Ok(p)
    }

    /// Orthonormal basis of T_x M as columns of an N x dim matrix.
    pub fn tangent_basis(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_len(x)?;
        let k = self.codim();
        let n = self.ambient_dim();
        if k == 0 {
            return Ok(DMatrix::identity(n, n));
        }
        let jac = self.constraint.jacobian(x);
        let (s, v) = svd_sorted(&jac);
        if s[k - 1] < self.tol.sigma_min {
            return Err(Error::RankDeficient { sigma: s[k - 1] });
        }
        Ok(v.columns(k, n - k).into_owned())
    }

    /// Validate that `v` is tangent at `m`.
    pub fn tangent(&self, m: &ManifoldPoint, v: DVector<f64>) -> Result<TangentVector> {
        self.check_len(&v)?;
        self.check_tangent(m, &v)?;
        Ok(TangentVector { base: m.clone(), vec: v })
    }

    pub fn check_tangent(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<()> {
        let p = self.tangent_projector(x)?;
        let normal = (v - &p * v).norm();
        if normal > self.tol.eps_tan * v.norm().max(1.0) {
            return Err(Error::NotTangent(normal));
        }
        Ok(())
    }

    /// The on-manifold curve t -> project(x + t v).
    pub fn curve(&self, x: &DVector<f64>, v: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        Ok(self.project(&(x + v * t))?.coords)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn s3() -> EmbeddedManifold {
        EmbeddedManifold::new("S3", SphereBlocks::new(4, vec![(0..4, 1.0)]))
    }

    #[test]
    fn projects_radially_onto_sphere() {
        let m = s3();
        let p = m.project(&DVector::from_vec(vec![2.0, 0.0, 0.0, 0.0])).unwrap();
        assert_abs_diff_eq!((p.coords - DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0])).norm(), 0.0, epsilon = 1e-14);
        let x = DVector::from_vec(vec![1.1, 0.2, 0.0, 0.05]);
        let p = m.project(&x).unwrap();
        assert_abs_diff_eq!((p.coords - &x / x.norm()).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn origin_is_rank_deficient() {
        let m = s3();
        assert!(matches!(m.project(&DVector::zeros(4)), Err(Error::RankDeficient { .. })));
        assert!(matches!(m.project(&DVector::zeros(3)), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn tangent_projector_is_orthogonal_projector() {
        let m = s3();
        let x = m.project(&DVector::from_vec(vec![0.3, -0.4, 0.5, 0.1])).unwrap();
        let p = m.tangent_projector(&x).unwrap();
        assert_abs_diff_eq!((&p * &p - &p).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((&p * &x.coords).norm(), 0.0, epsilon = 1e-12);
        assert_eq!(m.tangent_basis(&x).unwrap().ncols(), 3);
        assert!(m.tangent(&x, x.coords.clone()).is_err());
    }
}
