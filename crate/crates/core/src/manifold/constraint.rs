use std::ops::Range;

use nalgebra::{DMatrix, DVector};

/// Defining equations c: R^N -> R^r of a submanifold. `codim` is the
/// declared codimension; r may exceed it when equations are redundant.
pub trait Constraint: Send + Sync {
    fn ambient_dim(&self) -> usize;
    fn codim(&self) -> usize;
    fn residual(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Jacobian of `residual`; the default is a central difference.
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let h = 1e-7;
        let r0 = self.residual(x);
        let mut jac = DMatrix::zeros(r0.len(), x.len());
        for j in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let d = (self.residual(&xp) - self.residual(&xm)) / (2.0 * h);
            jac.set_column(j, &d);
        }
        jac
    }
}

/// All of R^N.
#[derive(Debug, Clone)]
pub struct Unconstrained(pub usize);

impl Constraint for Unconstrained {
    fn ambient_dim(&self) -> usize {
        self.0
    }
    fn codim(&self) -> usize {
        0
    }
    fn residual(&self, _x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(0)
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(0, x.len())
    }
}

/// Product of round spheres |x_B|^2 = r^2 on disjoint coordinate blocks,
/// remaining coordinates free.
#[derive(Debug, Clone)]
pub struct SphereBlocks {
    dim: usize,
    blocks: Vec<(Range<usize>, f64)>,
}

impl SphereBlocks {
    pub fn new(dim: usize, blocks: Vec<(Range<usize>, f64)>) -> Self {
        SphereBlocks { dim, blocks }
    }
}

impl Constraint for SphereBlocks {
    fn ambient_dim(&self) -> usize {
        self.dim
    }
    fn codim(&self) -> usize {
        self.blocks.len()
    }
    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.blocks.len(),
            self.blocks
                .iter()
                .map(|(r, rad)| x.rows_range(r.clone()).norm_squared() - rad * rad),
        )
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.blocks.len(), self.dim);
        for (row, (r, _)) in self.blocks.iter().enumerate() {
            for c in r.clone() {
                j[(row, c)] = 2.0 * x[c];
            }
        }
        j
    }
}
