//! Convex hulls of small point sets in R^k, k <= 3.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-space {x : normal . x <= offset} with the indices of the vertices
/// on its boundary (cyclically ordered for 2-faces in R^3).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    pub normal: Vec<f64>,
    pub offset: f64,
    pub vertices: Vec<usize>,
}

/// Convex polytope given by its extreme points. Facets are listed only when
/// the polytope is full-dimensional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polytope {
    pub dim: usize,
    pub affine_dim: usize,
    pub vertices: Vec<Vec<f64>>,
    pub facets: Vec<Facet>,
}

const MAX_BRUTE_FORCE: usize = 120;

fn cross2(o: &[f64], a: &[f64], b: &[f64]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain. Returns indices of the extreme points in
/// counter-clockwise order; points within `eps` of an edge are dropped.
pub fn convex_hull_2d(pts: &[[f64; 2]], eps: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    idx.sort_by(|&i, &j| {
        pts[i][0]
            .partial_cmp(&pts[j][0])
            .unwrap()
            .then(pts[i][1].partial_cmp(&pts[j][1]).unwrap())
    });
    idx.dedup_by(|a, b| (pts[*a][0] - pts[*b][0]).hypot(pts[*a][1] - pts[*b][1]) <= eps);
    if idx.len() < 3 {
        return idx;
    }
    let turn = |o: usize, a: usize, b: usize| {
        let l = (pts[b][0] - pts[o][0]).hypot(pts[b][1] - pts[o][1]).max(f64::MIN_POSITIVE);
        cross2(&pts[o], &pts[a], &pts[b]) / l
    };
    let mut hull: Vec<usize> = Vec::with_capacity(2 * idx.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &usize>> =
            if pass == 0 { Box::new(idx.iter()) } else { Box::new(idx.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && turn(hull[hull.len() - 2], hull[hull.len() - 1], p) <= eps {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Distance from x to the simplex spanned by `pts` (at most k + 1 points).
pub fn distance_to_simplex(x: &DVector<f64>, pts: &[&DVector<f64>]) -> f64 {
    if pts.len() == 1 {
        return (x - pts[0]).norm();
    }
    let p0 = pts[0];
    let cols: Vec<DVector<f64>> = pts[1..].iter().map(|p| *p - p0).collect();
    let d = DMatrix::from_columns(&cols);
    let gram = d.transpose() * &d;
    if let Some(ch) = gram.clone().cholesky() {
        let lam = ch.solve(&(d.transpose() * (x - p0)));
        let l0 = 1.0 - lam.sum();
        if l0 >= 0.0 && lam.iter().all(|&l| l >= 0.0) {
            return (x - p0 - &d * lam).norm();
        }
    }
    (0..pts.len())
        .map(|skip| {
            let face: Vec<&DVector<f64>> =
                pts.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, p)| *p).collect();
            distance_to_simplex(x, &face)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Principal frame of a point cloud: centroid and the axes along which the
/// points spread by more than eps.
fn principal_frame(pts: &[DVector<f64>], eps: f64) -> (DVector<f64>, DMatrix<f64>) {
    let k = pts[0].len();
    let n = pts.len() as f64;
    let c = pts.iter().fold(DVector::zeros(k), |a, p| a + p) / n;
    let centered = DMatrix::from_columns(&pts.iter().map(|p| p - &c).collect::<Vec<_>>());
    let eig = (&centered * centered.transpose()).symmetric_eigen();
    let mut axes: Vec<(f64, DVector<f64>)> = Vec::new();
    for i in 0..k {
        let u = eig.eigenvectors.column(i).into_owned();
        let spread = centered.columns(0, pts.len()).column_iter().fold(0.0f64, |a, col| a.max(col.dot(&u).abs()));
        if spread > eps {
            axes.push((eig.eigenvalues[i], u));
        }
    }
    axes.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let cols: Vec<DVector<f64>> = axes.into_iter().map(|(_, u)| u).collect();
    let u = if cols.is_empty() { DMatrix::zeros(k, 0) } else { DMatrix::from_columns(&cols) };
    (c, u)
}

impl Polytope {
    /// Convex hull of `points` in R^k, k <= 3. Points closer than `eps` are
    /// merged and `eps` is the flatness threshold for faces.
    pub fn hull(points: &[DVector<f64>], eps: f64) -> Result<Polytope> {
        if points.is_empty() {
            return Err(Error::DimensionMismatch("hull of an empty set".into()));
        }
        let k = points[0].len();
        if k == 0 || k > 3 || points.iter().any(|p| p.len() != k) {
            return Err(Error::DimensionMismatch(format!("hulls are supported for 1 <= k <= 3, got {k}")));
        }
        if points.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::DimensionMismatch("non-finite point".into()));
        }
        let (c, u) = principal_frame(points, eps);
        let a = u.ncols();
        let local: Vec<DVector<f64>> = points.iter().map(|p| u.transpose() * (p - &c)).collect();
        let pick = |ids: &[usize]| ids.iter().map(|&i| points[i].iter().copied().collect()).collect::<Vec<Vec<f64>>>();
        match a {
            0 => Ok(Polytope { dim: k, affine_dim: 0, vertices: pick(&[0]), facets: vec![] }),
            1 => {
                let (mut lo, mut hi) = (0, 0);
                for (i, l) in local.iter().enumerate() {
                    if l[0] < local[lo][0] {
                        lo = i;
                    }
                    if l[0] > local[hi][0] {
                        hi = i;
                    }
                }
                let vertices = pick(&[lo, hi]);
                let facets = if k == 1 {
                    vec![
                        Facet { normal: vec![-1.0], offset: -vertices[0][0], vertices: vec![0] },
                        Facet { normal: vec![1.0], offset: vertices[1][0], vertices: vec![1] },
                    ]
                } else {
                    vec![]
                };
                Ok(Polytope { dim: k, affine_dim: 1, vertices, facets })
            }
            2 => {
                let p2: Vec<[f64; 2]> = local.iter().map(|l| [l[0], l[1]]).collect();
                let ids = convex_hull_2d(&p2, eps);
                let vertices = pick(&ids);
                let mut facets = vec![];
                if k == 2 {
                    let nv = vertices.len();
                    for i in 0..nv {
                        let (p, q) = (&vertices[i], &vertices[(i + 1) % nv]);
                        let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
                        let l = dx.hypot(dy);
                        let mut normal = vec![dy / l, -dx / l];
                        // orientation of the chain in the principal frame may be flipped
                        let inside = vertices.iter().map(|v| normal[0] * (v[0] - p[0]) + normal[1] * (v[1] - p[1])).fold(0.0, |s, x| s + x);
                        if inside > 0.0 {
                            normal = vec![-normal[0], -normal[1]];
                        }
                        let offset = normal[0] * p[0] + normal[1] * p[1];
                        facets.push(Facet { normal, offset, vertices: vec![i, (i + 1) % nv] });
                    }
                }
                Ok(Polytope { dim: k, affine_dim: 2, vertices, facets })
            }
            _ => Self::hull_3d(points, eps),
        }
    }

    fn hull_3d(points: &[DVector<f64>], eps: f64) -> Result<Polytope> {
        let mut pts: Vec<DVector<f64>> = Vec::new();
        for p in points {
            if !pts.iter().any(|q| (q - p).norm() <= eps) {
                pts.push(p.clone());
            }
        }
        if pts.len() > MAX_BRUTE_FORCE {
            return Err(Error::Internal(format!("3-d hull limited to {MAX_BRUTE_FORCE} points, got {}", pts.len())));
        }
        let n = pts.len();
        let mut planes: Vec<(DVector<f64>, f64)> = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                for l in j + 1..n {
                    let nrm = (&pts[j] - &pts[i]).cross(&(&pts[l] - &pts[i]));
                    let len = nrm.norm();
                    if len <= eps * eps {
                        continue;
                    }
                    let nrm = nrm / len;
                    let b = nrm.dot(&pts[i]);
                    let side: Vec<f64> = pts.iter().map(|p| nrm.dot(p) - b).collect();
                    let cand = if side.iter().all(|&s| s <= eps) {
                        Some((nrm, b))
                    } else if side.iter().all(|&s| s >= -eps) {
                        Some((-nrm, -b))
                    } else {
                        None
                    };
                    if let Some((nn, bb)) = cand {
                        if !planes.iter().any(|(m, c)| (m - &nn).norm() <= 1e-9 && (c - bb).abs() <= eps) {
                            planes.push((nn, bb));
                        }
                    }
                }
            }
        }
        // extreme points of each facet polygon, ordered in the facet plane
        let mut keep: Vec<usize> = Vec::new();
        let mut faces: Vec<(DVector<f64>, f64, Vec<usize>)> = Vec::new();
        for (nrm, b) in planes {
            let on: Vec<usize> = (0..n).filter(|&i| (nrm.dot(&pts[i]) - b).abs() <= eps).collect();
            let e1 = {
                let t = if nrm[0].abs() < 0.9 { DVector::from_vec(vec![1.0, 0.0, 0.0]) } else { DVector::from_vec(vec![0.0, 1.0, 0.0]) };
                let v = &t - &nrm * nrm.dot(&t);
                v.normalize()
            };
            let e2 = nrm.cross(&e1);
            let p2: Vec<[f64; 2]> = on.iter().map(|&i| [pts[i].dot(&e1), pts[i].dot(&e2)]).collect();
            let ring: Vec<usize> = convex_hull_2d(&p2, eps).into_iter().map(|r| on[r]).collect();
            for &i in &ring {
                if !keep.contains(&i) {
                    keep.push(i);
                }
            }
            faces.push((nrm, b, ring));
        }
        keep.sort_unstable();
        let remap = |i: usize| keep.iter().position(|&k| k == i).unwrap();
        let vertices: Vec<Vec<f64>> = keep.iter().map(|&i| pts[i].iter().copied().collect()).collect();
        let facets = faces
            .into_iter()
            .map(|(nrm, b, ring)| Facet {
                normal: nrm.iter().copied().collect(),
                offset: b,
                vertices: ring.into_iter().map(remap).collect(),
            })
            .collect();
        Ok(Polytope { dim: 3, affine_dim: 3, vertices, facets })
    }

    pub fn vertex_vectors(&self) -> Vec<DVector<f64>> {
        self.vertices.iter().map(|v| DVector::from_vec(v.clone())).collect()
    }

    /// Boundary simplices for full-dimensional polytopes, a triangulation of
    /// the whole set otherwise.
    fn pieces(&self) -> Vec<Vec<usize>> {
        let fan = |ring: &[usize]| -> Vec<Vec<usize>> {
            if ring.len() < 3 {
                return vec![ring.to_vec()];
            }
            (1..ring.len() - 1).map(|i| vec![ring[0], ring[i], ring[i + 1]]).collect()
        };
        if self.affine_dim == self.dim {
            self.facets.iter().flat_map(|f| fan(&f.vertices)).collect()
        } else {
            match self.affine_dim {
                0 => vec![vec![0]],
                1 => vec![vec![0, 1]],
                _ => fan(&(0..self.vertices.len()).collect::<Vec<_>>()),
            }
        }
    }

    /// Euclidean distance from x to the polytope (0 inside).
    pub fn distance(&self, x: &DVector<f64>) -> f64 {
        if self.affine_dim == self.dim
            && self
                .facets
                .iter()
                .all(|f| f.normal.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() <= f.offset)
        {
            return 0.0;
        }
        let verts = self.vertex_vectors();
        self.pieces()
            .iter()
            .map(|piece| {
                let s: Vec<&DVector<f64>> = piece.iter().map(|&i| &verts[i]).collect();
                distance_to_simplex(x, &s)
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, x: &DVector<f64>, margin: f64) -> bool {
        self.distance(x) <= margin
    }

    /// Hausdorff distance between two convex polytopes; the distance to a
    /// convex set is convex, so vertices suffice.
    pub fn hausdorff(&self, other: &Polytope) -> f64 {
        let a = self.vertex_vectors().iter().map(|v| other.distance(v)).fold(0.0, f64::max);
        let b = other.vertex_vectors().iter().map(|v| self.distance(v)).fold(0.0, f64::max);
        a.max(b)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("polytope serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_vec(x.to_vec())
    }

    #[test]
    fn square_with_interior_points() {
        let pts = vec![v(&[0.0, 0.0]), v(&[1.0, 0.0]), v(&[1.0, 1.0]), v(&[0.0, 1.0]), v(&[0.5, 0.5]), v(&[0.5, 0.0])];
        let p = Polytope::hull(&pts, 1e-12).unwrap();
        assert_eq!(p.vertices.len(), 4);
        assert_eq!(p.facets.len(), 4);
        assert_eq!(p.distance(&v(&[0.3, 0.7])), 0.0);
        assert!((p.distance(&v(&[2.0, 0.5])) - 1.0).abs() < 1e-14);
        assert!((p.distance(&v(&[2.0, 2.0])) - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn segment_in_the_plane() {
        let p = Polytope::hull(&[v(&[0.0, 0.0]), v(&[2.0, 2.0]), v(&[1.0, 1.0])], 1e-12).unwrap();
        assert_eq!(p.affine_dim, 1);
        assert_eq!(p.vertices.len(), 2);
        assert!((p.distance(&v(&[2.0, 0.0])) - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn cube_facets() {
        let mut pts = vec![];
        for i in 0..8 {
            pts.push(v(&[(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64]));
        }
        pts.push(v(&[0.5, 0.5, 0.5]));
        let p = Polytope::hull(&pts, 1e-12).unwrap();
        assert_eq!(p.vertices.len(), 8);
        assert_eq!(p.facets.len(), 6);
        assert!(p.facets.iter().all(|f| f.vertices.len() == 4));
        assert_eq!(p.distance(&v(&[0.2, 0.9, 0.4])), 0.0);
        assert!((p.distance(&v(&[0.5, 0.5, 3.0])) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn interval() {
        let p = Polytope::hull(&[v(&[1.0]), v(&[-1.0]), v(&[0.2])], 1e-12).unwrap();
        assert_eq!(p.vertices, vec![vec![-1.0], vec![1.0]]);
        assert_eq!(p.distance(&v(&[1.5])), 0.5);
        assert_eq!(p.distance(&v(&[0.0])), 0.0);
    }
}
