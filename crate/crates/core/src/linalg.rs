//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Multiplication by `i` on R^{2n} with coordinates (x1, y1, x2, y2, ...).
pub fn complex_structure(n_complex: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n_complex, 2 * n_complex);
    for k in 0..n_complex {
        j[(2 * k + 1, 2 * k)] = 1.0;
        j[(2 * k, 2 * k + 1)] = -1.0;
    }
    j
}

/// `i * v` for v in R^{2n}.
pub fn times_i(v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for k in 0..v.len() / 2 {
        out[2 * k] = -v[2 * k + 1];
        out[2 * k + 1] = v[2 * k];
    }
    out
}

/// Matrix of the bilinear form `(u, v) -> a(u) b(v) - a(v) b(u)`.
pub fn wedge(a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    a * b.transpose() - b * a.transpose()
}

/// Singular values sorted descending together with right singular vectors
/// (as columns, in the same order).
pub fn svd_sorted(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.ncols();
    if a.nrows() == 0 {
        return (vec![0.0; n], DMatrix::identity(n, n));
    }
    // Work with the Gram matrix so that the full right basis is available
    // even when a has fewer rows than columns.
    let gram = a.transpose() * a;
    let eig = gram.symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let sv = idx.iter().map(|&i| eig.eigenvalues[i].max(0.0).sqrt()).collect();
    let mut v = DMatrix::zeros(n, n);
    for (c, &i) in idx.iter().enumerate() {
        v.set_column(c, &eig.eigenvectors.column(i));
    }
    (sv, v)
}

/// Singular values of a matrix, descending.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return vec![];
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    s
}

/// Orthonormal basis (columns) of the span of the columns of `a`, keeping
/// singular directions above `thresh`.
pub fn column_space(a: &DMatrix<f64>, thresh: f64) -> DMatrix<f64> {
    if a.ncols() == 0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    let (s, v) = svd_sorted(a);
    let cols: Vec<DVector<f64>> = s
        .iter()
        .enumerate()
        .filter(|(_, &x)| x > thresh)
        .map(|(i, &x)| (a * v.column(i)) / x)
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(a.nrows(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Orthonormal basis of the kernel of `a`: right singular vectors whose
/// singular value is at most `thresh`.
pub fn null_space(a: &DMatrix<f64>, thresh: f64) -> DMatrix<f64> {
    let (s, v) = svd_sorted(a);
    let cols: Vec<DVector<f64>> = s
        .iter()
        .enumerate()
        .filter(|(_, &x)| x <= thresh)
        .map(|(i, _)| v.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(a.ncols(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Orthonormal complement of the column span of an orthonormal `q` in R^n.
pub fn orthogonal_complement(q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = q.nrows();
    let p = DMatrix::identity(n, n) - q * q.transpose();
    column_space(&p, 0.5)
}

/// Largest principal angle between two subspaces given by orthonormal
/// column bases. Subspaces of different dimension give pi/2.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols() != b.ncols() {
        return std::f64::consts::FRAC_PI_2;
    }
    if a.ncols() == 0 {
        return 0.0;
    }
    let m = a.transpose() * b;
    let s = singular_values(&m);
    let smin = s.last().copied().unwrap_or(1.0).clamp(-1.0, 1.0);
    smin.acos()
}

/// Inverse square root of a symmetric positive definite matrix.
pub fn sym_inv_sqrt(s: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = s.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return None;
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Some(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Gram-Schmidt with respect to a symmetric positive form `g`. Columns of
/// `v` that become dependent (norm below `thresh`) are dropped.
pub fn gram_schmidt(v: &DMatrix<f64>, g: &DMatrix<f64>, thresh: f64) -> DMatrix<f64> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for c in v.column_iter() {
        let mut w = c.into_owned();
        for _ in 0..2 {
            for q in &out {
                let proj = (q.transpose() * g * &w)[0];
                w -= q * proj;
            }
        }
        let n2 = (w.transpose() * g * &w)[0];
        if n2 > thresh * thresh {
            out.push(w / n2.sqrt());
        }
    }
    if out.is_empty() {
        DMatrix::zeros(v.nrows(), 0)
    } else {
        DMatrix::from_columns(&out)
    }
}

/// Numerical rank of a list of descending singular values, with the size of
/// the gap around the threshold relative to the threshold itself.
pub fn rank_and_gap(s: &[f64], thresh: f64) -> (usize, f64) {
    let r = s.iter().filter(|&&x| x > thresh).count();
    let above = if r > 0 { s[r - 1] / thresh } else { f64::INFINITY };
    let below = if r < s.len() { thresh / s[r].max(f64::MIN_POSITIVE) } else { f64::INFINITY };
    (r, above.min(below))
}

pub fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |a: f64, x| a.max(x.abs()))
}

/// Pfaffian of a skew matrix by expansion along the first row.
pub fn pfaffian(a: &DMatrix<f64>) -> f64 {
    let idx: Vec<usize> = (0..a.nrows()).collect();
    pf_rec(a, &idx)
}

fn pf_rec(a: &DMatrix<f64>, idx: &[usize]) -> f64 {
    match idx.len() {
        0 => 1.0,
        n if n % 2 == 1 => 0.0,
        _ => {
            let i = idx[0];
            let mut total = 0.0;
            for k in 1..idx.len() {
                let rest: Vec<usize> = idx[1..].iter().copied().filter(|&j| j != idx[k]).collect();
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                total += sign * a[(i, idx[k])] * pf_rec(a, &rest);
            }
            total
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pfaffian_squares_to_determinant() {
        let b = DMatrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let a = &b - b.transpose();
        assert_abs_diff_eq!(pfaffian(&a).powi(2), a.determinant(), epsilon = 1e-9);
        // block diagonal: product of the (2k, 2k+1) entries
        assert_eq!(pfaffian(&complex_structure(1)), -1.0);
        assert_eq!(pfaffian(&complex_structure(2)), 1.0);
    }

    #[test]
    fn complex_structure_squares_to_minus_one() {
        let j = complex_structure(3);
        let jj = &j * &j;
        assert_abs_diff_eq!((jj + DMatrix::identity(6, 6)).norm(), 0.0);
        assert_eq!(times_i(&[1.0, 0.0]), vec![0.0, 1.0]);
    }

    #[test]
    fn wedge_convention() {
        let dx = DVector::from_vec(vec![1.0, 0.0]);
        let dy = DVector::from_vec(vec![0.0, 1.0]);
        let w = wedge(&dx, &dy);
        assert_eq!(w[(0, 1)], 1.0);
        assert_eq!(w[(1, 0)], -1.0);
    }

    #[test]
    fn principal_angle_of_rotated_line() {
        let a = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let t: f64 = 0.3;
        let b = DMatrix::from_column_slice(2, 1, &[t.cos(), t.sin()]);
        assert_abs_diff_eq!(max_principal_angle(&a, &b), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn null_space_of_row() {
        let a = DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 2.0]);
        let n = null_space(&a, 1e-9);
        assert_eq!(n.ncols(), 2);
        assert_abs_diff_eq!((&a * &n).norm(), 0.0, epsilon = 1e-14);
    }
}
