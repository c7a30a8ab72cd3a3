//! Momentumly-closed audits, moment maps from the defining equation
//! d Psi^xi = iota_{xi_M} omega, and the differential-image statements.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::action::{generator_matrix, isotropy_algebra, random_tangent, GroupAction};
use crate::error::{Error, Result};
use crate::linalg::{column_space, max_principal_angle, rank_and_gap, svd_sorted};
use crate::manifold::{exterior_derivative_fd, interior, EmbeddedManifold, HermitianTriple, TwoForm};
use crate::quadrature::integrate;
use crate::report::{max_dev, stream, CheckReport};

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    ClosedForm,
    PathIntegral { base: DVector<f64>, base_value: DVector<f64> },
}

/// Psi: M -> k^* (coordinates in the dual of the fixed Lie algebra basis).
#[derive(Clone)]
pub struct MomentMap {
    rank: usize,
    pub provenance: Provenance,
    f: Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>,
}

impl MomentMap {
    pub fn closed_form(rank: usize, f: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static) -> Self {
        MomentMap { rank, provenance: Provenance::ClosedForm, f: Arc::new(f) }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.f)(x)
    }

    /// Psi^xi(x) = <Psi(x), xi>.
    pub fn component(&self, x: &DVector<f64>, xi: &DVector<f64>) -> f64 {
        self.eval(x).dot(xi)
    }

    /// Psi + c.
    pub fn shifted(&self, c: DVector<f64>) -> MomentMap {
        let f = self.f.clone();
        MomentMap { rank: self.rank, provenance: self.provenance.clone(), f: Arc::new(move |x| f(x) + &c) }
    }
}

fn unit(k: usize, a: usize) -> DVector<f64> {
    let mut e = DVector::zeros(k);
    e[a] = 1.0;
    e
}

/// Max over samples, generators and random tangent pairs of
/// |d(iota_{xi_M} omega)(u, v)|.
pub fn check_momentumly_closed(
    manifold: &EmbeddedManifold,
    omega: &TwoForm,
    action: &Arc<dyn GroupAction>,
    samples: &[DVector<f64>],
    seed: u64,
    tol: f64,
    scenario: &str,
) -> CheckReport {
    let devs = closedness_defects(manifold, omega, action, samples, seed);
    CheckReport::new("momentumly_closed", scenario, samples.len(), max_dev(&devs), tol)
}

const PAIRS_PER_SAMPLE: usize = 3;

fn closedness_defects(
    manifold: &EmbeddedManifold,
    omega: &TwoForm,
    action: &Arc<dyn GroupAction>,
    samples: &[DVector<f64>],
    seed: u64,
) -> Vec<f64> {
    let k = action.rank();
    let alphas: Vec<_> = (0..k)
        .map(|a| {
            let act = action.clone();
            let e = unit(k, a);
            interior(move |x| act.field(x, &e), omega)
        })
        .collect();
    samples
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut rng = stream(seed, i as u64);
            let mut worst = 0.0f64;
            for alpha in &alphas {
                for _ in 0..PAIRS_PER_SAMPLE {
                    let r = (|| -> Result<f64> {
                        let u = random_tangent(manifold, x, &mut rng)?;
                        let v = random_tangent(manifold, x, &mut rng)?;
                        exterior_derivative_fd(manifold, alpha, x, &[u, v])
                    })();
                    worst = match r {
                        Ok(d) => worst.max(d.abs()),
                        Err(_) => f64::NAN,
                    };
                }
            }
            worst
        })
        .collect()
}

/// Cartan-model check: (D nu)(xi) = d(iota_xi omega) - iota_xi iota_xi omega.
/// The identity used in the proof says the extra term vanishes, so the
/// discrepancy is |omega(xi_M, xi_M)|. The report passes iff that
/// discrepancy is below `eps_num` and omega is momentumly closed to `tol`.
pub fn check_equivariant_closedness_nu(
    manifold: &EmbeddedManifold,
    omega: &TwoForm,
    action: &Arc<dyn GroupAction>,
    samples: &[DVector<f64>],
    seed: u64,
    tol: f64,
    scenario: &str,
) -> CheckReport {
    let k = action.rank();
    let discrepancy: Vec<f64> = samples
        .iter()
        .map(|x| {
            (0..k)
                .map(|a| {
                    let xi = action.field(x, &unit(k, a));
                    omega.eval2(x, &xi, &xi).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let disc = max_dev(&discrepancy);
    let closed = max_dev(&closedness_defects(manifold, omega, action, samples, seed));
    let mut r = CheckReport::new("equivariant_closedness_nu", scenario, samples.len(), closed, tol);
    r.pass = r.pass && disc <= manifold.tol.eps_num;
    r
}

/// Options for path-integral reconstruction.
#[derive(Debug, Clone)]
pub struct PathOptions {
    pub max_chord: f64,
    pub tol_quad: f64,
    pub tol_loop: f64,
}

impl Default for PathOptions {
    fn default() -> Self {
        PathOptions { max_chord: 0.25, tol_quad: 1e-11, tol_loop: 1e-7 }
    }
}

fn deflection(chord: &DVector<f64>) -> DVector<f64> {
    let n = chord.len();
    let c = chord / chord.norm();
    let mut best = 0;
    for i in 0..n {
        if c[i].abs() < c[best].abs() {
            best = i;
        }
    }
    let e = unit(n, best);
    let d = &e - &c * c.dot(&e);
    d.normalize()
}

/// Points on M joining x0 to x1 such that each straight chord projects
/// cleanly onto M.
pub fn path_waypoints(
    manifold: &EmbeddedManifold,
    x0: &DVector<f64>,
    x1: &DVector<f64>,
    max_chord: f64,
) -> Result<Vec<DVector<f64>>> {
    fn rec(
        m: &EmbeddedManifold,
        a: &DVector<f64>,
        b: &DVector<f64>,
        max_chord: f64,
        depth: usize,
        out: &mut Vec<DVector<f64>>,
    ) -> Result<()> {
        let chord = b - a;
        let len = chord.norm();
        let clean = len <= max_chord
            && [0.25, 0.5, 0.75].iter().all(|&s| {
                m.project(&(a + &chord * s))
                    .map(|p| (&p.coords - (a + &chord * s)).norm() < 0.5 * len.max(1e-12))
                    .unwrap_or(false)
            });
        if clean || len < 1e-14 {
            out.push(b.clone());
            return Ok(());
        }
        if depth > 30 {
            return Err(Error::QuadratureFailure);
        }
        let mid = a + &chord * 0.5;
        let p = match m.project(&mid) {
            Ok(p) if (&p.coords - &mid).norm() < 0.5 * len => p.coords,
            _ => {
                let d = deflection(&chord);
                let mut found = None;
                for scale in [0.5, 1.0, -0.5, -1.0, 2.0] {
                    if let Ok(p) = m.project(&(&mid + &d * (scale * len.max(1e-3)))) {
                        found = Some(p.coords);
                        break;
                    }
                }
                found.ok_or(Error::QuadratureFailure)?
            }
        };
        rec(m, a, &p, max_chord, depth + 1, out)?;
        rec(m, &p, b, max_chord, depth + 1, out)
    }
    let mut out = vec![x0.clone()];
    rec(manifold, x0, x1, max_chord, 0, &mut out)?;
    Ok(out)
}

/// Integral of iota_{xi_M} omega along the projected chord from a to b, for
/// every generator.
fn chord_integral(
    manifold: &EmbeddedManifold,
    omega: &TwoForm,
    action: &dyn GroupAction,
    a: &DVector<f64>,
    b: &DVector<f64>,
    tol: f64,
) -> Result<DVector<f64>> {
    let k = action.rank();
    let chord = b - a;
    let h = 1e-5;
    let gamma = |s: f64| -> Option<DVector<f64>> { manifold.project(&(a + &chord * s)).ok().map(|p| p.coords) };
    let mut out = DVector::zeros(k);
    for c in 0..k {
        let e = unit(k, c);
        let mut failed = false;
        let v = integrate(
            |s| {
                let (Some(y), Some(yp), Some(ym)) = (gamma(s), gamma(s + h), gamma(s - h)) else {
                    failed = true;
                    return f64::NAN;
                };
                let dy = (yp - ym) / (2.0 * h);
                omega.eval2(&y, &action.field(&y, &e), &dy)
            },
            0.0,
            1.0,
            tol,
        );
        if failed {
            return Err(Error::QuadratureFailure);
        }
        out[c] = v?;
    }
    Ok(out)
}

/// Integral of iota_{xi_M} omega along a projected piecewise-linear path.
pub fn path_integral(
    manifold: &EmbeddedManifold,
    omega: &TwoForm,
    action: &dyn GroupAction,
    x0: &DVector<f64>,
    x1: &DVector<f64>,
    opts: &PathOptions,
) -> Result<DVector<f64>> {
    let pts = path_waypoints(manifold, x0, x1, opts.max_chord)?;
    let mut total = DVector::zeros(action.rank());
    for w in pts.windows(2) {
        total += chord_integral(manifold, omega, action, &w[0], &w[1], opts.tol_quad)?;
    }
    Ok(total)
}

/// Holonomy of iota_{xi_M} omega around the triangle base -> a -> b -> base.
pub fn loop_holonomy(
    manifold: &EmbeddedManifold,
    omega: &TwoForm,
    action: &dyn GroupAction,
    base: &DVector<f64>,
    a: &DVector<f64>,
    b: &DVector<f64>,
    opts: &PathOptions,
) -> Result<f64> {
    let s = path_integral(manifold, omega, action, base, a, opts)?
        + path_integral(manifold, omega, action, a, b, opts)?
        + path_integral(manifold, omega, action, b, base, opts)?;
    Ok(s.amax())
}

/// Psi(m) = base_value + integral of iota_{xi_M} omega from base to m. Loops
/// through consecutive pairs of `loop_points` are audited first.
pub fn moment_from_form(
    manifold: &EmbeddedManifold,
    omega: &TwoForm,
    action: Arc<dyn GroupAction>,
    base: &DVector<f64>,
    base_value: &DVector<f64>,
    loop_points: &[DVector<f64>],
    opts: PathOptions,
) -> Result<MomentMap> {
    let k = action.rank();
    if base_value.len() != k {
        return Err(Error::DimensionMismatch("base value".into()));
    }
    manifold.point(base.clone())?;
    let holonomies: Vec<Result<f64>> = loop_points
        .par_chunks(2)
        .filter(|c| c.len() == 2)
        .map(|c| loop_holonomy(manifold, omega, action.as_ref(), base, &c[0], &c[1], &opts))
        .collect();
    for h in holonomies {
        let h = h?;
        if h > opts.tol_loop {
            return Err(Error::LoopHolonomy(h));
        }
    }
    let m = manifold.clone();
    let w = omega.clone();
    let b = base.clone();
    let bv = base_value.clone();
    let act = action.clone();
    let f = move |x: &DVector<f64>| -> DVector<f64> {
        match path_integral(&m, &w, act.as_ref(), &b, x, &opts) {
            Ok(v) => &bv + v,
            Err(_) => DVector::from_element(bv.len(), f64::NAN),
        }
    };
    Ok(MomentMap {
        rank: k,
        provenance: Provenance::PathIntegral { base: base.clone(), base_value: base_value.clone() },
        f: Arc::new(f),
    })
}

/// Differential of Psi on an orthonormal tangent basis E (k x dim matrix).
pub fn moment_jacobian(
    manifold: &EmbeddedManifold,
    moment: &MomentMap,
    x: &DVector<f64>,
    e: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let h = manifold.tol.h_fd;
    let mut d = DMatrix::zeros(moment.rank(), e.ncols());
    for i in 0..e.ncols() {
        let v: DVector<f64> = e.column(i).into();
        let p = moment.eval(&manifold.curve(x, &v, h)?);
        let m = moment.eval(&manifold.curve(x, &v, -h)?);
        d.set_column(i, &((p - m) / (2.0 * h)));
    }
    Ok(d)
}

/// grad_g Psi^xi at x by finite differences against g.
pub fn gradient_fd(
    triple: &HermitianTriple,
    moment: &MomentMap,
    x: &DVector<f64>,
    xi: &DVector<f64>,
) -> Result<DVector<f64>> {
    let m = &triple.manifold;
    let e = m.tangent_basis(x)?;
    let d = moment_jacobian(m, moment, x, &e)?;
    let r = d.transpose() * xi;
    let g = triple.metric_in_basis(x, &e);
    let c = g.lu().solve(&r).ok_or(Error::Degenerate(0.0))?;
    Ok(e * c)
}

/// Max over samples and generators of |grad_g Psi^xi - J xi_M|.
pub fn check_gradient_identity(
    triple: &HermitianTriple,
    action: &dyn GroupAction,
    moment: &MomentMap,
    samples: &[DVector<f64>],
    tol: f64,
    scenario: &str,
) -> CheckReport {
    let k = action.rank();
    let devs: Vec<f64> = samples
        .par_iter()
        .map(|x| {
            (0..k)
                .map(|a| {
                    let xi = unit(k, a);
                    match gradient_fd(triple, moment, x, &xi) {
                        Ok(g) => (g - triple.apply_j(x, &action.field(x, &xi))).norm(),
                        Err(_) => f64::NAN,
                    }
                })
                .fold(0.0, |acc: f64, v| if v.is_nan() { f64::NAN } else { acc.max(v) })
        })
        .collect();
    CheckReport::new("gradient_identity", scenario, samples.len(), max_dev(&devs), tol)
}

/// Image of d Psi_m compared with the annihilator of the isotropy algebra.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialImage {
    pub rank: usize,
    pub isotropy_dim: usize,
    pub max_angle: f64,
    pub singular_values: Vec<f64>,
    pub gap: f64,
}

impl DifferentialImage {
    pub fn rank_matches(&self, k: usize) -> bool {
        self.rank + self.isotropy_dim == k
    }
}

pub fn moment_differential_image(
    manifold: &EmbeddedManifold,
    action: &dyn GroupAction,
    moment: &MomentMap,
    m: &DVector<f64>,
    tol: f64,
) -> Result<DifferentialImage> {
    let e = manifold.tangent_basis(m)?;
    let d = moment_jacobian(manifold, moment, m, &e)?;
    let (s, _) = svd_sorted(&d.transpose());
    let thresh = tol * s.first().copied().unwrap_or(0.0).max(1.0);
    let (rank, gap) = rank_and_gap(&s, thresh);
    if gap < 10.0 {
        return Err(Error::BorderlineRank(gap));
    }
    let image = column_space(&d, thresh);
    let iso = isotropy_algebra(action, m, tol);
    if iso.gap < 10.0 {
        return Err(Error::BorderlineRank(iso.gap));
    }
    let max_angle = max_principal_angle(&image, &iso.annihilator_basis);
    Ok(DifferentialImage { rank, isotropy_dim: iso.dim(), max_angle, singular_values: s, gap })
}

/// Points sharing the isotropy algebra spanned by the columns of `h` must
/// map into an affine subspace p + h^0. Reports the largest component of
/// Psi - mean along h.
pub fn check_affine_image_on_stratum(
    moment: &MomentMap,
    points: &[DVector<f64>],
    h: &DMatrix<f64>,
    tol: f64,
    scenario: &str,
) -> CheckReport {
    let values: Vec<DVector<f64>> = points.iter().map(|x| moment.eval(x)).collect();
    let n = values.len().max(1) as f64;
    let mean = values.iter().fold(DVector::zeros(moment.rank()), |a, v| a + v) / n;
    let devs: Vec<f64> = values.iter().map(|v| (h.transpose() * (v - &mean)).amax()).collect();
    CheckReport::new("affine_image_on_stratum", scenario, points.len(), max_dev(&devs), tol)
}

/// d omega on triples of orbit directions xi_M and, when a complex
/// structure is supplied, their J-images.
pub fn check_domega_on_orbits(
    manifold: &EmbeddedManifold,
    omega: &TwoForm,
    action: &dyn GroupAction,
    triple: Option<&HermitianTriple>,
    samples: &[DVector<f64>],
    tol: f64,
    scenario: &str,
) -> CheckReport {
    let k = action.rank();
    let devs: Vec<f64> = samples
        .par_iter()
        .map(|x| {
            let gens = generator_matrix(action, x);
            let mut dirs: Vec<DVector<f64>> = gens.column_iter().map(|c| c.into_owned()).collect();
            let n_plain = dirs.len();
            if let Some(t) = triple {
                for a in 0..k {
                    dirs.push(t.apply_j(x, &dirs[a]));
                }
            }
            let mut worst = 0.0f64;
            for a in 0..k {
                for b in 0..k {
                    for c in 0..k {
                        let variants: &[(usize, usize, usize)] = if triple.is_some() {
                            &[(0, 0, 0), (1, 0, 0), (1, 1, 0), (1, 1, 1)]
                        } else {
                            &[(0, 0, 0)]
                        };
                        for &(ja, jb, jc) in variants {
                            let pick = |i: usize, j: usize| dirs[i + j * n_plain].clone();
                            let vs = [pick(a, ja), pick(b, jb), pick(c, jc)];
                            match exterior_derivative_fd(manifold, omega, x, &vs) {
                                Ok(d) => worst = worst.max(d.abs()),
                                Err(_) => return f64::NAN,
                            }
                        }
                    }
                }
            }
            worst
        })
        .collect();
    CheckReport::new("domega_on_orbits", scenario, samples.len(), max_dev(&devs), tol)
}
