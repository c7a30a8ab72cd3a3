use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{EmbeddedManifold, TwoForm};
use crate::error::{Error, Result};
use crate::linalg::sym_inv_sqrt;

type MatFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// (J, omega, g) with g(u, v) = omega(u, J v), equivalently
/// omega(u, v) = g(J u, v). J is given as an ambient matrix acting on
/// tangent vectors.
#[derive(Clone)]
pub struct HermitianTriple {
    pub manifold: EmbeddedManifold,
    pub omega: TwoForm,
    j: MatFn,
}

/// Pointwise defects of a candidate triple, measured on T_x M.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripleDefects {
    pub j_squared: f64,
    pub metric_asymmetry: f64,
    pub metric_min_eigenvalue: f64,
    pub omega_j_invariance: f64,
}

impl HermitianTriple {
    pub fn new(
        manifold: EmbeddedManifold,
        omega: TwoForm,
        j: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        HermitianTriple { manifold, omega, j: Arc::new(j) }
    }

    pub fn j_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.j)(x)
    }

    pub fn apply_j(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        (self.j)(x) * v
    }

    pub fn metric(&self, x: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.omega.eval2(x, u, &self.apply_j(x, v))
    }

    /// Matrix of g in an orthonormal tangent basis E (columns), symmetrised.
    pub fn metric_in_basis(&self, x: &DVector<f64>, e: &DMatrix<f64>) -> DMatrix<f64> {
        let g = e.transpose() * self.omega.matrix(x) * self.j_matrix(x) * e;
        (&g + g.transpose()) * 0.5
    }

    /// Ambient symmetric matrix equal to g on T_x M and the identity on the
    /// normal space.
    pub fn metric_ambient(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let e = self.manifold.tangent_basis(x)?;
        let g = self.metric_in_basis(x, &e);
        let n = self.manifold.ambient_dim();
        let p = &e * e.transpose();
        Ok(&e * g * e.transpose() + (DMatrix::identity(n, n) - p))
    }

    pub fn defects(&self, x: &DVector<f64>) -> Result<TripleDefects> {
        let e = self.manifold.tangent_basis(x)?;
        let d = e.ncols();
        let je = e.transpose() * self.j_matrix(x) * &e;
        let we = e.transpose() * self.omega.matrix(x) * &e;
        let j_squared = (&je * &je + DMatrix::identity(d, d)).amax();
        let g = &we * &je;
        let metric_asymmetry = (&g - g.transpose()).amax();
        let sym = (&g + g.transpose()) * 0.5;
        let metric_min_eigenvalue = if d == 0 {
            f64::INFINITY
        } else {
            sym.symmetric_eigenvalues().min()
        };
        let omega_j_invariance = (je.transpose() * &we * &je - &we).amax();
        Ok(TripleDefects { j_squared, metric_asymmetry, metric_min_eigenvalue, omega_j_invariance })
    }
}

/// Polar decomposition of omega against the ambient Euclidean metric on
/// each tangent space: omega(u, v) = <A u, v>, J = A (A^T A)^{-1/2}.
/// Validated for nondegeneracy at the given sample points.
pub fn compatible_triple_from_form(
    manifold: &EmbeddedManifold,
    omega: &TwoForm,
    samples: &[DVector<f64>],
) -> Result<HermitianTriple> {
    if manifold.dim() % 2 == 1 {
        return Err(Error::Degenerate(0.0));
    }
    let sigma_min = manifold.tol.sigma_min;
    for x in samples {
        let e = manifold.tangent_basis(x)?;
        let a = (e.transpose() * omega.matrix(x) * &e).transpose();
        let s = crate::linalg::singular_values(&a);
        let smin = s.last().copied().unwrap_or(0.0);
        if smin < sigma_min {
            return Err(Error::Degenerate(smin));
        }
    }
    let m = manifold.clone();
    let w = omega.clone();
    let j = move |x: &DVector<f64>| -> DMatrix<f64> {
        let n = m.ambient_dim();
        let Ok(e) = m.tangent_basis(x) else {
            return DMatrix::from_element(n, n, f64::NAN);
        };
        let a = (e.transpose() * w.matrix(x) * &e).transpose();
        match sym_inv_sqrt(&(a.transpose() * &a)) {
            Some(r) => &e * (a * r) * e.transpose(),
            None => DMatrix::from_element(n, n, f64::NAN),
        }
    };
    Ok(HermitianTriple::new(manifold.clone(), omega.clone(), j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::Unconstrained;
    use approx::assert_abs_diff_eq;

    #[test]
    fn standard_plane_gives_rotation() {
        let m = EmbeddedManifold::new("R2", Unconstrained(2));
        let w = TwoForm::constant(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
        let x = DVector::zeros(2);
        let t = compatible_triple_from_form(&m, &w, &[x.clone()]).unwrap();
        let j = t.j_matrix(&x);
        assert_abs_diff_eq!((j - DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])).norm(), 0.0, epsilon = 1e-14);
        let d = t.defects(&x).unwrap();
        assert!(d.metric_min_eigenvalue > 0.99);
    }

    #[test]
    fn degenerate_and_odd_forms_rejected() {
        let m = EmbeddedManifold::new("R2", Unconstrained(2));
        let w = TwoForm::constant(DMatrix::zeros(2, 2));
        assert!(matches!(compatible_triple_from_form(&m, &w, &[DVector::zeros(2)]), Err(Error::Degenerate(_))));
        let m3 = EmbeddedManifold::new("R3", Unconstrained(3));
        assert!(compatible_triple_from_form(&m3, &TwoForm::constant(DMatrix::zeros(3, 3)), &[]).is_err());
    }
}
