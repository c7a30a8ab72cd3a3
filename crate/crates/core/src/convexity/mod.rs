//! Fixed-point enumeration, moment polytopes, orbit-closure polytopes,
//! local cones and the quadratic model moment map.

mod hull;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

pub use hull::{convex_hull_2d, distance_to_simplex, Facet, Polytope};

use crate::action::{generator_matrix, isotropy_algebra, random_tangent};
use crate::error::{Error, Result};
use crate::flow::{integrate_negative_gradient, FlowFunction, FlowMethod, FlowOptions};
use crate::linalg::sym_inv_sqrt;
use crate::report::stream;
use crate::scenarios::{gaussian, Scenario};

/// Distinct weights of the isotropy representation on the normal space of
/// a fixed component, with complex multiplicities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsotropyWeights {
    pub component: usize,
    pub weights: Vec<Vec<f64>>,
    pub multiplicities: Vec<usize>,
}

impl IsotropyWeights {
    pub fn complex_codim(&self) -> usize {
        self.multiplicities.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedComponent {
    pub id: usize,
    pub representative: Vec<f64>,
    pub value: Vec<f64>,
    pub field_norm: f64,
    pub weights: IsotropyWeights,
}

/// Group equal weights (within `tol`) and count them.
pub fn group_weights(ws: &[DVector<f64>], tol: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut reps: Vec<DVector<f64>> = Vec::new();
    let mut mult = Vec::new();
    for w in ws {
        match reps.iter().position(|r| (r - w).norm() <= tol) {
            Some(i) => mult[i] += 1,
            None => {
                reps.push(w.clone());
                mult.push(1);
            }
        }
    }
    (reps.iter().map(|r| r.iter().copied().collect()).collect(), mult)
}

fn max_field_norm(s: &Scenario, x: &DVector<f64>) -> f64 {
    generator_matrix(s.action.as_ref(), x).column_iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Generic directions used to probe a rank-k algebra.
fn generic_directions(k: usize) -> Vec<DVector<f64>> {
    let phi = 0.618_033_988_749_895;
    let mut out = Vec::new();
    for j in 0..3 {
        let v = DVector::from_iterator(k, (0..k).map(|i| ((i + 1) as f64 * (phi + 0.37 * j as f64)).sin() + 0.1 * (i as f64 + 1.0)));
        out.push(v.normalize());
    }
    let mut all = out.clone();
    all.extend(out.into_iter().map(|v| -v));
    all
}

/// Fixed components of a built-in scenario. The analytic list is audited
/// (every generator field vanishes) and cross-checked against limits of
/// Psi^xi-gradient flows for generic xi from `n_flow` random starts.
pub fn fixed_components(s: &Scenario, n_flow: usize, seed: u64) -> Result<Vec<FixedComponent>> {
    let tol = s.tol();
    let mut out = Vec::new();
    for (id, fp) in s.fixed_points.iter().enumerate() {
        let field_norm = max_field_norm(s, &fp.point);
        if field_norm > tol.eps_iso {
            return Err(Error::IncompleteEnumeration);
        }
        let (weights, multiplicities) = group_weights(&fp.weights, tol.r_cluster);
        out.push(FixedComponent {
            id,
            representative: fp.point.iter().copied().collect(),
            value: s.moment.eval(&fp.point).iter().copied().collect(),
            field_norm,
            weights: IsotropyWeights { component: id, weights, multiplicities },
        });
    }
    if n_flow == 0 || s.triple.is_none() {
        return Ok(out);
    }
    let opts = FlowOptions::from_tolerances(tol).with_method(FlowMethod::Orbit);
    let dirs = generic_directions(s.rank());
    let limits: Vec<Option<DVector<f64>>> = (0..n_flow)
        .into_par_iter()
        .flat_map_iter(|i| {
            let x0 = s.sample(seed, i as u64, crate::scenarios::SampleKind::Uniform);
            let xi = dirs[i % dirs.len()].clone();
            let traj = integrate_negative_gradient(s, &FlowFunction::PsiXi(xi.iter().copied().collect()), &x0, &opts);
            std::iter::once(match traj {
                Ok(t) if t.converged => Some(t.last_point().clone()),
                _ => None,
            })
        })
        .collect();
    let match_radius = 1e4 * tol.eps_crit.max(tol.eps_num);
    for l in limits.into_iter().flatten() {
        if max_field_norm(s, &l) > match_radius {
            continue;
        }
        if !s.fixed_points.iter().any(|fp| (&fp.point - &l).norm() <= match_radius) {
            return Err(Error::IncompleteEnumeration);
        }
    }
    Ok(out)
}

/// Moment polytope with its containment and coverage audits.
#[derive(Debug, Clone, Serialize)]
pub struct MomentPolytope {
    pub scenario: String,
    pub polytope: Polytope,
    pub n_samples: usize,
    pub max_escape: f64,
    pub violations: usize,
    pub margin: f64,
    pub hausdorff: f64,
    pub coverage_tol: f64,
    pub coverage_pass: bool,
    #[serde(skip)]
    pub image: Vec<DVector<f64>>,
}

/// Hull of the fixed values; Psi of `n` stratified samples must stay inside
/// within tol_hull and their hull must come within tol_cover of it.
pub fn moment_polytope(s: &Scenario, n: usize, seed: u64) -> Result<MomentPolytope> {
    if !s.compact {
        return Err(Error::Config(format!("moment_polytope needs a compact scenario, {} is not", s.id)));
    }
    let tol = s.tol();
    let values = s.fixed_values();
    if values.is_empty() {
        return Err(Error::IncompleteEnumeration);
    }
    let polytope = Polytope::hull(&values, tol.r_cluster * 1e-3)?;
    let image: Vec<DVector<f64>> = s.stratified(seed, n).par_iter().map(|x| s.moment.eval(x)).collect();
    let escapes: Vec<f64> = image.par_iter().map(|v| polytope.distance(v)).collect();
    let max_escape = escapes.iter().copied().fold(0.0, f64::max);
    let violations = escapes.iter().filter(|&&e| e > tol.tol_hull).count();
    if violations > 0 {
        return Err(Error::ContainmentViolation(max_escape));
    }
    let sample_hull = Polytope::hull(&image, 1e-12)?;
    let hausdorff = polytope.hausdorff(&sample_hull);
    Ok(MomentPolytope {
        scenario: s.id.clone(),
        polytope,
        n_samples: n,
        max_escape,
        violations,
        margin: tol.tol_hull,
        hausdorff,
        coverage_tol: tol.tol_cover,
        coverage_pass: hausdorff <= tol.tol_cover,
        image,
    })
}

/// Plot data: one row per sampled moment value.
pub fn write_image_csv<W: Write>(w: W, image: &[DVector<f64>]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let k = image.first().map(|v| v.len()).unwrap_or(0);
    wr.write_record((0..k).map(|i| format!("psi{i}")))
        .map_err(|e| Error::Io(e.to_string()))?;
    for v in image {
        wr.write_record(v.iter().map(|x| format!("{x:.17e}"))).map_err(|e| Error::Io(e.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct OrbitLimit {
    pub xi: Vec<f64>,
    pub t_final: f64,
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrbitPolytope {
    pub scenario: String,
    pub base: Vec<f64>,
    pub polytope: Polytope,
    pub limits: Vec<OrbitLimit>,
    pub audit_samples: usize,
    pub audit_max_escape: f64,
}

fn unresolved(e: Error) -> Error {
    match e {
        Error::Overflow => Error::LimitUnresolved,
        e => e,
    }
}

/// lim exp(-i t xi) m, stopping once Psi changes by less than tol_limit
/// over a unit time step. Times double from 1 up to t_max.
pub fn orbit_limit(s: &Scenario, m: &DVector<f64>, xi: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let tol = s.tol();
    let mut t = 1.0;
    while t <= tol.t_max {
        let a = s.action.act_imag(m, xi, -t).map_err(unresolved)?;
        let b = s.action.act_imag(m, xi, -(t + 1.0)).map_err(unresolved)?;
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::LimitUnresolved);
        }
        let (pa, pb) = (s.moment.eval(&a), s.moment.eval(&b));
        if (&pa - &pb).norm() < tol.tol_limit {
            return Ok((b, t + 1.0));
        }
        t *= 2.0;
    }
    Err(Error::LimitUnresolved)
}

/// Fan of nonzero {-1, 0, 1}^k directions plus evenly spread unit vectors.
fn fan(k: usize) -> Vec<DVector<f64>> {
    let mut out = Vec::new();
    let total = 3usize.pow(k as u32);
    for code in 0..total {
        let mut c = code;
        let v = DVector::from_iterator(
            k,
            (0..k).map(|_| {
                let d = (c % 3) as f64 - 1.0;
                c /= 3;
                d
            }),
        );
        if v.norm() > 0.0 {
            out.push(v.normalize());
        }
    }
    if k == 2 {
        for j in 0..16 {
            let a = (j as f64 + 0.318) * std::f64::consts::TAU / 16.0;
            out.push(DVector::from_vec(vec![a.cos(), a.sin()]));
        }
    }
    out
}

/// Hull of the limit values of exp(-i t xi) m over a refined fan of xi,
/// audited by Psi(exp(i xi) m) for `n_audit` random xi.
pub fn orbit_closure_polytope(s: &Scenario, m: &DVector<f64>, n_audit: usize, seed: u64) -> Result<OrbitPolytope> {
    let tol = s.tol();
    let m = s.manifold.project(m)?.coords;
    let k = s.rank();
    let mut limits = Vec::new();
    let mut values: Vec<DVector<f64>> = Vec::new();
    let probe = |xi: DVector<f64>, limits: &mut Vec<OrbitLimit>, values: &mut Vec<DVector<f64>>| -> Result<DVector<f64>> {
        let (x, t) = orbit_limit(s, &m, &xi)?;
        let v = s.moment.eval(&x);
        limits.push(OrbitLimit { xi: xi.iter().copied().collect(), t_final: t, value: v.iter().copied().collect() });
        values.push(v.clone());
        Ok(v)
    };
    for xi in fan(k) {
        probe(xi, &mut limits, &mut values)?;
    }
    let eps = tol.r_cluster * 1e-3;
    let mut polytope = Polytope::hull(&values, eps)?;
    // refinement: probe each outward facet normal until no value lands outside
    for _ in 0..20 {
        let mut grew = false;
        let facets = polytope.facets.clone();
        for f in facets {
            let n = DVector::from_vec(f.normal.clone());
            let v = probe(-n.clone(), &mut limits, &mut values)?;
            if n.dot(&v) > f.offset + tol.tol_hull {
                grew = true;
            }
        }
        if !grew {
            break;
        }
        polytope = Polytope::hull(&values, eps)?;
    }
    let escapes: Vec<f64> = (0..n_audit as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i);
            let xi = gaussian(&mut rng, k) * 2.0;
            let y = s.action.act_imag(&m, &xi, 1.0)?;
            Ok(polytope.distance(&s.moment.eval(&y)))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(OrbitPolytope {
        scenario: s.id.clone(),
        base: m.iter().copied().collect(),
        polytope,
        limits,
        audit_samples: n_audit,
        audit_max_escape: escapes.into_iter().fold(0.0, f64::max),
    })
}

/// Closed convex cone apex + cone(generators).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeAtPoint {
    pub apex: Vec<f64>,
    pub generators: Vec<Vec<f64>>,
}

impl ConeAtPoint {
    pub fn dim(&self) -> usize {
        self.apex.len()
    }

    /// Distance from y to the cone. The nearest point lies in the cone over
    /// a linearly independent subset of generators.
    pub fn distance(&self, y: &DVector<f64>) -> f64 {
        let apex = DVector::from_vec(self.apex.clone());
        let d = y - &apex;
        let gens: Vec<DVector<f64>> = self.generators.iter().map(|g| DVector::from_vec(g.clone())).collect();
        let k = self.dim();
        let mut best = d.norm();
        let n = gens.len();
        for mask in 1u32..(1u32 << n) {
            if mask.count_ones() as usize > k {
                continue;
            }
            let cols: Vec<DVector<f64>> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| gens[i].clone()).collect();
            let a = DMatrix::from_columns(&cols);
            let gram = a.transpose() * &a;
            if let Some(ch) = gram.cholesky() {
                let c = ch.solve(&(a.transpose() * &d));
                if c.iter().all(|&x| x >= 0.0) {
                    best = best.min((&d - &a * c).norm());
                }
            }
        }
        best
    }

    pub fn is_full_space(&self) -> bool {
        let apex = DVector::from_vec(self.apex.clone());
        (0..self.dim()).all(|i| {
            let mut e = DVector::zeros(self.dim());
            e[i] = 1.0;
            self.distance(&(&apex + &e)) <= 1e-12 && self.distance(&(&apex - &e)) <= 1e-12
        })
    }
}

/// Isotropy weights at m from the linearised action: for eta in k_m the
/// operator J d(eta_M) is g-symmetric on T_m M with eigenvalue <w, eta> on
/// the complex line of weight w. Returns weights in k^* and, for each, a
/// g-unit eigenvector.
pub fn isotropy_weights_numeric(s: &Scenario, m: &DVector<f64>) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    let triple = s.triple.as_ref().ok_or(Error::Degenerate(0.0))?;
    let tol = s.tol();
    let iso = isotropy_algebra(s.action.as_ref(), m, tol.eps_iso);
    let k = s.rank();
    if iso.dim() == 0 {
        return Ok((vec![], vec![]));
    }
    let e = s.manifold.tangent_basis(m)?;
    let g = triple.metric_in_basis(m, &e);
    let f = &e * sym_inv_sqrt(&g).ok_or(Error::Degenerate(0.0))?;
    let d = f.ncols();
    let h = 1e-5;
    let ops: Vec<DMatrix<f64>> = iso
        .algebra_basis
        .column_iter()
        .map(|eta| -> Result<DMatrix<f64>> {
            let eta = eta.into_owned();
            let mut c = DMatrix::zeros(d, d);
            let mut a_cols = Vec::with_capacity(d);
            for j in 0..d {
                let fj = f.column(j).into_owned();
                let xp = s.manifold.curve(m, &fj, h)?;
                let xm = s.manifold.curve(m, &fj, -h)?;
                a_cols.push((s.action.field(&xp, &eta) - s.action.field(&xm, &eta)) / (2.0 * h));
            }
            for j in 0..d {
                let ja = triple.apply_j(m, &a_cols[j]);
                for i in 0..d {
                    c[(i, j)] = triple.metric(m, &f.column(i).into_owned(), &ja);
                }
            }
            Ok((&c + c.transpose()) * 0.5)
        })
        .collect::<Result<Vec<_>>>()?;
    let mix = ops.iter().enumerate().fold(DMatrix::zeros(d, d), |acc, (a, c)| acc + c * (1.0 + 0.414_213_562 * a as f64).sqrt());
    let eig = mix.symmetric_eigen();
    let thresh = 1e3 * h * h + 1e2 * tol.eps_num;
    let mut weights = Vec::new();
    let mut vectors = Vec::new();
    for i in 0..d {
        let u = eig.eigenvectors.column(i).into_owned();
        let comps = DVector::from_iterator(ops.len(), ops.iter().map(|c| (u.transpose() * c * &u)[0]));
        if comps.norm() <= thresh.max(1e-6) {
            continue;
        }
        let w = &iso.algebra_basis * comps;
        debug_assert_eq!(w.len(), k);
        weights.push(w);
        vectors.push(&f * u);
    }
    Ok((weights, vectors))
}

/// Local cone at m: apex Psi(m), generators the isotropy weights plus
/// plus/minus a basis of the annihilator of k_m. Weights come from the
/// analytic list when m is a listed fixed point and from the linearised
/// action otherwise.
pub fn local_cone(s: &Scenario, m: &DVector<f64>) -> Result<ConeAtPoint> {
    let tol = s.tol();
    let m = s.manifold.project(m)?.coords;
    let apex: Vec<f64> = s.moment.eval(&m).iter().copied().collect();
    let iso = isotropy_algebra(s.action.as_ref(), &m, tol.eps_iso);
    let mut generators: Vec<Vec<f64>> = Vec::new();
    for c in iso.annihilator_basis.column_iter() {
        generators.push(c.iter().copied().collect());
        generators.push(c.iter().map(|x| -x).collect());
    }
    if iso.dim() > 0 {
        let analytic = s.fixed_points.iter().find(|fp| (&fp.point - &m).norm() <= 1e-8);
        let ws = match analytic {
            Some(fp) => fp.weights.clone(),
            None => isotropy_weights_numeric(s, &m)?.0,
        };
        let (distinct, _) = group_weights(&ws, tol.r_cluster);
        for w in distinct {
            // project onto k_m^*; the annihilator part is already a lineality direction
            let wv = DVector::from_vec(w);
            let p = &iso.algebra_basis * (iso.algebra_basis.transpose() * wv);
            if p.norm() > tol.eps_num {
                generators.push(p.iter().copied().collect());
            }
        }
    }
    Ok(ConeAtPoint { apex, generators })
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalConeReport {
    pub scenario: String,
    pub cone: ConeAtPoint,
    pub radius: f64,
    pub n_samples: usize,
    pub max_escape: f64,
    pub n_targets: usize,
    pub hits: usize,
    pub max_hit_residual: f64,
}

/// Psi of points within `radius` of m must lie in the cone; cone points
/// at distance ~radius^2 from the apex must be attained near m.
pub fn local_cone_audit(s: &Scenario, m: &DVector<f64>, radius: f64, n: usize, seed: u64) -> Result<LocalConeReport> {
    let m = s.manifold.project(m)?.coords;
    let cone = local_cone(s, &m)?;
    let escapes: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut rng = stream(seed, i);
            let v = random_tangent(&s.manifold, &m, &mut rng)?;
            let r: f64 = radius * rng.gen::<f64>();
            let x = s.manifold.curve(&m, &v, r)?;
            Ok(cone.distance(&s.moment.eval(&x)))
        })
        .collect::<Result<Vec<_>>>()?;
    let max_escape = escapes.into_iter().fold(0.0, f64::max);

    let tol = s.tol();
    let iso = isotropy_algebra(s.action.as_ref(), &m, tol.eps_iso);
    let (ws, vecs) = if iso.dim() > 0 { isotropy_weights_numeric(s, &m)? } else { (vec![], vec![]) };
    let triple = s.triple.as_ref().ok_or(Error::Degenerate(0.0))?;
    let apex = DVector::from_vec(cone.apex.clone());
    let eps = radius * radius / 4.0;
    let n_targets = 8;
    let mut hits = 0;
    let mut max_res: f64 = 0.0;
    for i in 0..n_targets as u64 {
        let mut rng = stream(seed ^ 0x5eed, i);
        // initial guess from the quadratic model plus the first-order lineality term
        let mut target = apex.clone();
        let mut v0 = DVector::zeros(m.len());
        let mut used: Vec<DVector<f64>> = Vec::new();
        for (w, u) in ws.iter().zip(&vecs) {
            if used.iter().any(|x| (x - w).norm() <= tol.r_cluster) {
                continue;
            }
            used.push(w.clone());
            let c = eps * rng.gen_range(0.2..1.0);
            target += w * c;
            v0 += u * (2.0 * c).sqrt();
        }
        let ann = &iso.annihilator_basis;
        if ann.ncols() > 0 {
            let l = DVector::from_iterator(ann.ncols(), (0..ann.ncols()).map(|_| eps * rng.gen_range(-1.0..1.0)));
            let dir = ann * &l;
            target += &dir;
            let fields = generator_matrix(s.action.as_ref(), &m) * ann;
            let gram = fields.transpose() * &fields;
            if let Some(ch) = gram.cholesky() {
                let c = ch.solve(&l);
                v0 += triple.apply_j(&m, &(&fields * c));
            }
        }
        let res = newton_hit(s, &m, &v0, &target)?;
        max_res = max_res.max(res);
        if res <= 1e-10 {
            hits += 1;
        }
    }
    Ok(LocalConeReport {
        scenario: s.id.clone(),
        cone,
        radius,
        n_samples: n,
        max_escape,
        n_targets,
        hits,
        max_hit_residual: max_res,
    })
}

/// Gauss-Newton for Psi(x) = target on M, minimum-norm steps.
fn newton_hit(s: &Scenario, m: &DVector<f64>, v0: &DVector<f64>, target: &DVector<f64>) -> Result<f64> {
    let mut x = s.manifold.curve(m, v0, 1.0)?;
    let h = 1e-6;
    let mut res = (s.moment.eval(&x) - target).norm();
    for _ in 0..40 {
        if res <= 1e-13 {
            break;
        }
        let e = s.manifold.tangent_basis(&x)?;
        let cols: Vec<DVector<f64>> = e
            .column_iter()
            .map(|c| -> Result<DVector<f64>> {
                let c = c.into_owned();
                Ok((s.moment.eval(&s.manifold.curve(&x, &c, h)?) - s.moment.eval(&s.manifold.curve(&x, &c, -h)?)) / (2.0 * h))
            })
            .collect::<Result<Vec<_>>>()?;
        let jac = DMatrix::from_columns(&cols);
        let r = s.moment.eval(&x) - target;
        let jjt = &jac * jac.transpose();
        let step = match jjt.clone().cholesky() {
            Some(ch) => jac.transpose() * ch.solve(&r),
            None => break,
        };
        let mut lam = 1.0;
        let mut improved = false;
        for _ in 0..12 {
            let xn = s.manifold.curve(&x, &(&e * &step), -lam)?;
            let rn = (s.moment.eval(&xn) - target).norm();
            if rn < res {
                x = xn;
                res = rn;
                improved = true;
                break;
            }
            lam *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(res)
}

/// Quadratic model moment map alpha + p + sum |v_j|^2 / 2 * w_j.
pub fn mgs_model_moment(
    alpha: &DVector<f64>,
    p: &DVector<f64>,
    v: &[Complex64],
    weights: &[DVector<f64>],
) -> Result<DVector<f64>> {
    let k = alpha.len();
    if p.len() != k || v.len() != weights.len() || weights.iter().any(|w| w.len() != k) {
        return Err(Error::DimensionMismatch(format!(
            "alpha has {k} components, p {}, {} model coordinates for {} weights",
            p.len(),
            v.len(),
            weights.len()
        )));
    }
    Ok(v.iter().zip(weights).fold(alpha + p, |acc, (z, w)| acc + w * (z.norm_sqr() / 2.0)))
}
