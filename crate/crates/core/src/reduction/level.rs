//! Level sets Psi^{-1}(p), horizontal spaces and reduced Hermitian data.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::action::{generator_matrix, pushforward};
use crate::error::{Error, Result};
use crate::linalg::{svd_sorted, sym_inv_sqrt};
use crate::moment::moment_jacobian;
use crate::report::{max_dev, stream, CheckReport};
use crate::scenarios::{gaussian, SampleKind, Scenario};

/// How the horizontal space is chosen inside T_m Psi^{-1}(p).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizontalChoice {
    /// g-orthogonal complement of k.m.
    Orthogonal,
    /// The first dim - 2k kernel directions, with no orthogonalization
    /// against the orbit. Negative control.
    Unorthogonalized,
}

/// One point of a level set with its horizontal basis (ambient columns,
/// g-orthonormal for the default choice).
#[derive(Debug, Clone)]
pub struct LevelPoint {
    pub point: DVector<f64>,
    pub residual: f64,
    pub horizontal: DMatrix<f64>,
    /// Smallest singular value of d Psi on T_m M.
    pub dpsi_sigma: f64,
}

#[derive(Debug, Clone)]
pub struct LevelSetSample {
    pub scenario: String,
    pub level: DVector<f64>,
    pub points: Vec<LevelPoint>,
    pub seeds_used: usize,
    pub choice: HorizontalChoice,
}

/// Ambient matrix of g (identity on normals). Scenarios without a triple
/// use the Euclidean metric.
pub fn ambient_metric(s: &Scenario, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    match &s.triple {
        Some(t) => t.metric_ambient(x),
        None => Ok(DMatrix::identity(x.len(), x.len())),
    }
}

fn check_level(s: &Scenario, p: &DVector<f64>) -> Result<()> {
    if p.len() != s.rank() {
        return Err(Error::DimensionMismatch(format!("level has {} components, action rank is {}", p.len(), s.rank())));
    }
    Ok(())
}

/// Newton iteration onto Psi = p along minimal-norm tangent steps, each
/// followed by projection onto M.
pub fn newton_to_level(s: &Scenario, seed: &DVector<f64>, p: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    check_level(s, p)?;
    let tol = s.tol();
    let mut x = s.manifold.project(seed)?.coords;
    for _ in 0..tol.max_newton {
        let r = s.moment.eval(&x) - p;
        let res = r.amax();
        if !res.is_finite() {
            return Err(Error::NonConvergence { residual: res });
        }
        if res <= tol.eps_lvl {
            return Ok((x, res));
        }
        let e = s.manifold.tangent_basis(&x)?;
        let d = moment_jacobian(&s.manifold, &s.moment, &x, &e)?;
        let dd = &d * d.transpose();
        let chol = dd.cholesky().ok_or(Error::NotRegular)?;
        let mut step = &e * (d.transpose() * chol.solve(&(-r)));
        let cap = 0.5 * (1.0 + x.norm());
        if step.norm() > cap {
            step *= cap / step.norm();
        }
        x = s.manifold.project(&(&x + step))?.coords;
    }
    let res = (s.moment.eval(&x) - p).amax();
    Err(Error::NonConvergence { residual: res })
}

/// Basis of T_m Psi^{-1}(p) (Euclidean-orthonormal columns) and the
/// smallest singular value of d Psi on T_m M.
pub fn level_tangent(s: &Scenario, x: &DVector<f64>) -> Result<(DMatrix<f64>, f64)> {
    let k = s.rank();
    let e = s.manifold.tangent_basis(x)?;
    let d = moment_jacobian(&s.manifold, &s.moment, x, &e)?;
    let (sv, v) = svd_sorted(&d);
    let sigma = if k == 0 { f64::INFINITY } else { sv[k - 1] };
    if !(sigma > s.tol().sigma_min) {
        return Err(Error::NotRegular);
    }
    let dim = e.ncols();
    Ok((&e * v.columns(k, dim - k), sigma))
}

/// Horizontal basis of the level set through x.
pub fn horizontal_basis(s: &Scenario, x: &DVector<f64>, choice: HorizontalChoice) -> Result<(DMatrix<f64>, f64)> {
    let k = s.rank();
    let (z, sigma) = level_tangent(s, x)?;
    let r = z.ncols();
    if r < 2 * k {
        return Err(Error::NotRegular);
    }
    if choice == HorizontalChoice::Unorthogonalized {
        return Ok((z.columns(0, r - 2 * k).into_owned(), sigma));
    }
    let g = ambient_metric(s, x)?;
    let gz = z.transpose() * &g * &z;
    let vz = z.transpose() * generator_matrix(s.action.as_ref(), x);
    let (vs, _) = svd_sorted(&vz);
    if k > 0 && !(vs[k - 1] > s.tol().sigma_min) {
        return Err(Error::NotRegular);
    }
    let c = vz.transpose() * &gz;
    let (_, basis) = svd_sorted(&c);
    let n0 = basis.columns(k, r - k).into_owned();
    let gram = n0.transpose() * &gz * &n0;
    let norm = sym_inv_sqrt(&((&gram + gram.transpose()) * 0.5)).ok_or(Error::Degenerate(0.0))?;
    Ok((z * n0 * norm, sigma))
}

/// n points of Psi^{-1}(p), each Newton-refined from a sampler draw. Draws
/// that fail to converge are skipped; after 20 n draws the sampler is
/// declared exhausted. Points where d Psi drops rank raise NotRegular.
pub fn sample_level_set(s: &Scenario, p: &DVector<f64>, n: usize, seed: u64) -> Result<LevelSetSample> {
    sample_level_set_with(s, p, n, seed, HorizontalChoice::Orthogonal)
}

pub fn sample_level_set_with(
    s: &Scenario,
    p: &DVector<f64>,
    n: usize,
    seed: u64,
    choice: HorizontalChoice,
) -> Result<LevelSetSample> {
    check_level(s, p)?;
    let budget = 20 * n.max(1);
    let mut points = Vec::with_capacity(n);
    let mut used = 0;
    while points.len() < n {
        if used >= budget {
            return Err(Error::SeedExhausted);
        }
        let start = s.sample(seed, used as u64, SampleKind::Uniform);
        used += 1;
        let Ok((x, residual)) = newton_to_level(s, &start, p) else { continue };
        let (horizontal, dpsi_sigma) = horizontal_basis(s, &x, choice)?;
        points.push(LevelPoint { point: x, residual, horizontal, dpsi_sigma });
    }
    Ok(LevelSetSample { scenario: s.id.clone(), level: p.clone(), points, seeds_used: used, choice })
}

/// omega, J and g restricted to a horizontal space, in its basis.
#[derive(Debug, Clone)]
pub struct ReducedFormSample {
    pub point: DVector<f64>,
    pub basis: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    /// Matrix of the g-orthogonal compression of J to H.
    pub j: DMatrix<f64>,
    /// omega(u, J v) on H.
    pub metric: DMatrix<f64>,
    pub omega_sigma_min: f64,
    /// max over basis vectors h of |(I - P_H) J h|.
    pub j_defect: f64,
}

pub fn reduced_form_sample(s: &Scenario, lp: &LevelPoint) -> Result<ReducedFormSample> {
    let triple = s.triple.as_ref().ok_or_else(|| Error::Config(format!("{} has no Hermitian triple", s.id)))?;
    let x = &lp.point;
    let h = &lp.horizontal;
    let w = s.omega.matrix(x);
    let jm = triple.j_matrix(x);
    let g = ambient_metric(s, x)?;
    let omega = h.transpose() * &w * h;
    let jh = &jm * h;
    let gram = h.transpose() * &g * h;
    let coeff = gram.clone().lu().solve(&(h.transpose() * &g * &jh)).ok_or(Error::Degenerate(0.0))?;
    let j_defect = (0..h.ncols()).map(|c| (jh.column(c) - h * coeff.column(c)).norm()).fold(0.0, f64::max);
    let metric = h.transpose() * &w * &jh;
    let omega_sigma_min = crate::linalg::singular_values(&omega).last().copied().unwrap_or(0.0);
    Ok(ReducedFormSample { point: x.clone(), basis: h.clone(), omega, j: coeff, metric, omega_sigma_min, j_defect })
}

/// A reduced-form value with its orbit-transport audit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedValue {
    pub value: f64,
    /// max |omega_{k m}(k_* u, k_* v) - omega_m(u, v)| over the probe elements.
    pub transport: f64,
}

const TRANSPORT_TIMES: [f64; 3] = [0.3, 1.1, 2.5];

/// omega(u, v) for u, v in the stored horizontal space, with a transport
/// audit along one-parameter subgroups of K.
pub fn reduced_form_at(s: &Scenario, lp: &LevelPoint, u: &DVector<f64>, v: &DVector<f64>) -> Result<ReducedValue> {
    let x = &lp.point;
    let g = ambient_metric(s, x)?;
    let h = &lp.horizontal;
    let gram = h.transpose() * &g * h;
    for w in [u, v] {
        let c = gram.clone().lu().solve(&(h.transpose() * &g * w)).ok_or(Error::Degenerate(0.0))?;
        let off = (w - h * c).norm();
        if off > s.tol().eps_tan * w.norm().max(1.0) {
            return Err(Error::NotTangent(off));
        }
    }
    let value = s.omega.eval2(x, u, v);
    let k = s.rank();
    let mut transport = 0.0f64;
    for a in 0..k {
        let mut xi = DVector::zeros(k);
        xi[a] = 1.0;
        for &t in &TRANSPORT_TIMES {
            let y = s.action.act_real(x, &xi, t);
            let pu = pushforward(s.action.as_ref(), &s.manifold, x, &xi, t, u)?;
            let pv = pushforward(s.action.as_ref(), &s.manifold, x, &xi, t, v)?;
            transport = transport.max((s.omega.eval2(&y, &pu, &pv) - value).abs());
        }
    }
    Ok(ReducedValue { value, transport })
}

/// Transport audit over all sample points with random horizontal pairs.
pub fn transport_audit(s: &Scenario, sample: &LevelSetSample, seed: u64, tol: f64) -> CheckReport {
    let devs: Vec<f64> = sample
        .points
        .par_iter()
        .enumerate()
        .map(|(i, lp)| {
            let mut rng = stream(seed, i as u64);
            let r = lp.horizontal.ncols();
            let u = &lp.horizontal * gaussian(&mut rng, r);
            let v = &lp.horizontal * gaussian(&mut rng, r);
            match reduced_form_at(s, lp, &u, &v) {
                Ok(rv) => rv.transport,
                Err(_) => f64::NAN,
            }
        })
        .collect();
    CheckReport::new("reduced_form_transport", &s.id, sample.points.len(), max_dev(&devs), tol)
}

/// J-invariance of H, positivity of omega(-, J-) on H and nondegeneracy
/// of omega on H.
#[derive(Debug, Clone, Serialize)]
pub struct ReducedStructureReport {
    pub j_invariance: CheckReport,
    pub positivity: CheckReport,
    pub min_metric_eigenvalue: f64,
    pub min_omega_sigma: f64,
    pub pass: bool,
}

pub fn check_reduced_complex_structure(s: &Scenario, sample: &LevelSetSample, tol: f64) -> Result<ReducedStructureReport> {
    let reduced: Vec<ReducedFormSample> =
        sample.points.par_iter().map(|lp| reduced_form_sample(s, lp)).collect::<Result<_>>()?;
    let defects: Vec<f64> = reduced.iter().map(|r| r.j_defect).collect();
    let min_eig = reduced
        .iter()
        .map(|r| {
            let sym = (&r.metric + r.metric.transpose()) * 0.5;
            if sym.nrows() == 0 {
                f64::INFINITY
            } else {
                sym.symmetric_eigenvalues().min()
            }
        })
        .fold(f64::INFINITY, f64::min);
    let min_omega_sigma = reduced.iter().map(|r| r.omega_sigma_min).fold(f64::INFINITY, f64::min);
    let j_invariance = CheckReport::new("horizontal_j_invariance", &s.id, reduced.len(), max_dev(&defects), tol);
    let shortfall = if min_eig.is_nan() { f64::NAN } else { (s.tol().sigma_min - min_eig).max(0.0) };
    let positivity = CheckReport::new("reduced_metric_positive", &s.id, reduced.len(), shortfall, 0.0);
    let pass = j_invariance.pass && positivity.pass && min_omega_sigma > s.tol().sigma_min;
    Ok(ReducedStructureReport { j_invariance, positivity, min_metric_eigenvalue: min_eig, min_omega_sigma, pass })
}

/// Rows: point coordinates, horizontal basis (column-major) and the
/// upper triangle of omega on H.
pub fn write_reduced_csv<W: Write>(w: W, samples: &[ReducedFormSample]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let Some(first) = samples.first() else {
        wr.flush()?;
        return Ok(());
    };
    let (n, r) = (first.basis.nrows(), first.basis.ncols());
    let mut header: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    for c in 0..r {
        header.extend((0..n).map(|i| format!("h{c}_{i}")));
    }
    for i in 0..r {
        header.extend((i + 1..r).map(|j| format!("w{i}_{j}")));
    }
    wr.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
    for smp in samples {
        let mut row: Vec<String> = smp.point.iter().map(|v| format!("{v:e}")).collect();
        row.extend(smp.basis.iter().map(|v| format!("{v:e}")));
        for i in 0..r {
            row.extend((i + 1..r).map(|j| format!("{:e}", smp.omega[(i, j)])));
        }
        wr.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}
