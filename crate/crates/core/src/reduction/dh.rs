//! Reduced spaces of complex dimension one through explicit sections over
//! a chart of CP^1: total reduced area, Duistermaat-Heckman variation,
//! good-trivialization audit and the toric quotient comparison.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::level::{ambient_metric, reduced_form_sample, sample_level_set};
use crate::action::generator_matrix;
use crate::error::{Error, Result};
use crate::manifold::exterior_derivative_fd;
use crate::quadrature::rule_unit;
use crate::report::{max_dev, CheckReport};
use crate::scenarios::{Scenario, HOPF_QUOTIENT_ID};

type SectionFn = Arc<dyn Fn(f64, Complex64) -> Result<DVector<f64>> + Send + Sync>;

/// A section w -> s_p(w) of Psi^{-1}(p) -> M_p over the chart C of CP^1
/// (one point excised).
#[derive(Clone)]
pub struct QuotientChart {
    pub scenario: String,
    section: SectionFn,
}

fn unit_c2(w: Complex64) -> [f64; 4] {
    let n = (1.0 + w.norm_sqr()).sqrt();
    [1.0 / n, 0.0, w.re / n, w.im / n]
}

impl QuotientChart {
    pub fn section(&self, p: f64, w: Complex64) -> Result<DVector<f64>> {
        (self.section)(p, w)
    }

    /// d s / dx and d s / dy at w = x + i y, by central differences.
    pub fn derivatives(&self, p: f64, w: Complex64) -> Result<(DVector<f64>, DVector<f64>)> {
        let h = 1e-6 * (1.0 + w.norm());
        let dx = (self.section(p, w + h)? - self.section(p, w - h)?) / (2.0 * h);
        let i = Complex64::new(0.0, h);
        let dy = (self.section(p, w + i)? - self.section(p, w - i)?) / (2.0 * h);
        Ok((dx, dy))
    }
}

/// Built-in charts: diag-c2 (radius sqrt(-2p) spheres), the Hopf
/// couplings (S^3 x {a}) and the trivial coupling (S^2 by stereographic
/// projection).
pub fn quotient_chart(s: &Scenario) -> Result<QuotientChart> {
    let section: SectionFn = match s.id.as_str() {
        "diag-c2" => Arc::new(|p, w| {
            if !(p < 0.0) {
                return Err(Error::NotRegular);
            }
            let r = (-2.0 * p).sqrt();
            Ok(DVector::from_iterator(4, unit_c2(w).iter().map(|c| c * r)))
        }),
        "hopf-s3" | HOPF_QUOTIENT_ID => {
            let o = s.params.get("orientation").and_then(|v| v.as_f64()).unwrap_or(1.0);
            Arc::new(move |p, w| {
                let u = unit_c2(w);
                Ok(DVector::from_vec(vec![u[0], u[1], u[2], u[3], -p / o]))
            })
        }
        "trivial-coupling" => Arc::new(|p, w| {
            let d = 1.0 + w.norm_sqr();
            Ok(DVector::from_vec(vec![1.0, 0.0, 2.0 * w.re / d, -2.0 * w.im / d, (w.norm_sqr() - 1.0) / d, -p]))
        }),
        other => return Err(Error::Config(format!("no quotient chart for scenario {other}"))),
    };
    Ok(QuotientChart { scenario: s.id.clone(), section })
}

/// Polar product rule over C with rho = tan(alpha): Gauss-Legendre in
/// alpha, trapezoid in the angle.
fn chart_integral<F>(n_radial: usize, n_angle: usize, f: F) -> Result<f64>
where
    F: Fn(Complex64) -> Result<f64> + Sync,
{
    let rule = rule_unit(n_radial);
    let terms: Vec<f64> = rule
        .par_iter()
        .map(|&(u, wu)| -> Result<f64> {
            let alpha = FRAC_PI_2 * u;
            let rho = alpha.tan();
            let jac = rho / alpha.cos().powi(2) * FRAC_PI_2 * wu;
            let mut acc = 0.0;
            for k in 0..n_angle {
                let phi = 2.0 * PI * (k as f64 + 0.5) / n_angle as f64;
                acc += f(Complex64::from_polar(rho, phi))?;
            }
            Ok(acc * 2.0 * PI / n_angle as f64 * jac)
        })
        .collect::<Result<_>>()?;
    let total: f64 = terms.iter().sum();
    if !total.is_finite() {
        return Err(Error::QuadratureFailure);
    }
    Ok(total)
}

const N_RADIAL: usize = 64;
const N_ANGLE: usize = 16;

/// Total reduced area at level p: integral of omega(ds/dx, ds/dy).
pub fn reduced_area(s: &Scenario, chart: &QuotientChart, p: f64) -> Result<f64> {
    chart_integral(N_RADIAL, N_ANGLE, |w| {
        let x = chart.section(p, w)?;
        let (dx, dy) = chart.derivatives(p, w)?;
        Ok(s.omega.eval2(&x, &dx, &dy))
    })
}

/// The connection of the orbit fibration whose horizontal space is the
/// g-orthogonal complement of the orbit: theta(v) = g(V, v) / g(V, V).
fn orbit_connection(s: &Scenario, x: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    let g = ambient_metric(s, x)?;
    let vf = generator_matrix(s.action.as_ref(), x).column(0).into_owned();
    let gv = &g * &vf;
    Ok(gv.dot(v) / gv.dot(&vf))
}

/// Degree of the circle bundle Psi^{-1}(p) -> M_p: integral of the
/// pulled-back curvature d(s^* theta) over the chart, divided by 2 pi.
pub fn bundle_degree(s: &Scenario, chart: &QuotientChart, p: f64) -> Result<f64> {
    if s.rank() != 1 {
        return Err(Error::DimensionMismatch("bundle degree needs a circle action".into()));
    }
    let pull = |w: Complex64| -> Result<(f64, f64)> {
        let x = chart.section(p, w)?;
        let (dx, dy) = chart.derivatives(p, w)?;
        Ok((orbit_connection(s, &x, &dx)?, orbit_connection(s, &x, &dy)?))
    };
    let total = chart_integral(N_RADIAL, N_ANGLE, |w| {
        let h = 1e-4 * (1.0 + w.norm());
        let i = Complex64::new(0.0, h);
        let (_, ay_p) = pull(w + h)?;
        let (_, ay_m) = pull(w - h)?;
        let (ax_p, _) = pull(w + i)?;
        let (ax_m, _) = pull(w - i)?;
        Ok((ay_p - ay_m - ax_p + ax_m) / (2.0 * h))
    })?;
    Ok(total / (2.0 * PI))
}

#[derive(Debug, Clone, Serialize)]
pub struct DhReport {
    pub scenario: String,
    pub levels: Vec<f64>,
    pub areas: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub relative_residual: f64,
    pub degrees: Vec<f64>,
    pub degree: f64,
    /// -2 pi deg.
    pub expected_slope: f64,
    pub slope_error: f64,
    pub slope_tolerance: f64,
    pub pass: bool,
}

/// Reduced areas over a grid of levels, their least-squares line and the
/// comparison of its slope with 2 pi times the bundle degree. Fails with
/// FitResidualTooLarge when max |A - fit| / max |A| exceeds `fit_tol`.
pub fn dh_variation(s: &Scenario, levels: &[f64], fit_tol: f64) -> Result<DhReport> {
    let distinct = levels.iter().any(|&p| (p - levels[0]).abs() > 0.0);
    if levels.len() < 2 || !distinct {
        return Err(Error::Config("the level grid needs at least two distinct values".into()));
    }
    let chart = quotient_chart(s)?;
    let mut areas = Vec::with_capacity(levels.len());
    let mut degrees = Vec::with_capacity(levels.len());
    for &p in levels {
        let x0 = chart.section(p, Complex64::new(0.3, -0.2))?;
        let off = (s.moment.eval(&x0)[0] - p).abs();
        if off > 1e-9 {
            return Err(Error::Internal(format!("chart section misses the level by {off:.3e}")));
        }
        areas.push(reduced_area(s, &chart, p)?);
        degrees.push(bundle_degree(s, &chart, p)?);
    }
    let n = levels.len() as f64;
    let mp = levels.iter().sum::<f64>() / n;
    let ma = areas.iter().sum::<f64>() / n;
    let sxx: f64 = levels.iter().map(|p| (p - mp).powi(2)).sum();
    let sxy: f64 = levels.iter().zip(&areas).map(|(p, a)| (p - mp) * (a - ma)).sum();
    let slope = sxy / sxx;
    let intercept = ma - slope * mp;
    let scale = areas.iter().map(|a| a.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let relative_residual =
        levels.iter().zip(&areas).map(|(p, a)| (a - slope * p - intercept).abs()).fold(0.0, f64::max) / scale;
    if !(relative_residual <= fit_tol) {
        return Err(Error::FitResidualTooLarge(relative_residual));
    }
    let degree = degrees.iter().sum::<f64>() / n;
    let expected_slope = -2.0 * PI * degree;
    let slope_error = (slope.abs() - expected_slope.abs()).abs();
    let slope_tolerance = 0.01 * expected_slope.abs().max(1e-4);
    Ok(DhReport {
        scenario: s.id.clone(),
        levels: levels.to_vec(),
        areas,
        slope,
        intercept,
        relative_residual,
        degrees,
        degree,
        expected_slope,
        slope_error,
        slope_tolerance,
        pass: slope_error <= slope_tolerance,
    })
}

/// The lift of the level directions used to build the trivialization.
#[derive(Clone)]
pub enum TrivializationLift {
    /// A_tilde in J k with d Psi(A_tilde) = A.
    ComplexOrbit,
    /// A user vector field, rescaled so that d Psi(A_tilde) = 1 (rank one).
    Field(Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>),
}

#[derive(Debug, Clone, Serialize)]
pub struct GoodTrivializationRow {
    pub level: Vec<f64>,
    pub max_abs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GoodTrivializationReport {
    pub scenario: String,
    pub rows: Vec<GoodTrivializationRow>,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn lifts(s: &Scenario, x: &DVector<f64>, lift: &TrivializationLift) -> Result<Vec<DVector<f64>>> {
    let k = s.rank();
    let e = s.manifold.tangent_basis(x)?;
    let d = crate::moment::moment_jacobian(&s.manifold, &s.moment, x, &e)?;
    match lift {
        TrivializationLift::ComplexOrbit => {
            let triple = s.triple.as_ref().ok_or_else(|| Error::Config(format!("{} has no Hermitian triple", s.id)))?;
            let jg = triple.j_matrix(x) * generator_matrix(s.action.as_ref(), x);
            let m = &d * (e.transpose() * &jg);
            let inv = m.try_inverse().ok_or(Error::NotRegular)?;
            let a = jg * inv;
            Ok((0..k).map(|c| a.column(c).into_owned()).collect())
        }
        TrivializationLift::Field(f) => {
            if k != 1 {
                return Err(Error::DimensionMismatch("a single lift field needs a rank-one action".into()));
            }
            let v = s.manifold.tangent_projector(x)? * f(x);
            let dv = (&d * (e.transpose() * &v))[0];
            if dv.abs() <= s.tol().sigma_min {
                return Err(Error::NotRegular);
            }
            Ok(vec![v / dv])
        }
    }
}

/// |d omega(A_tilde, X, w)| for lifted level directions A_tilde, orbit
/// directions X and tangent basis vectors w, at level-set points over the
/// grid. Report only.
pub fn good_trivialization_check(
    s: &Scenario,
    levels: &[DVector<f64>],
    lift: &TrivializationLift,
    n_per_level: usize,
    seed: u64,
    tol: f64,
) -> Result<GoodTrivializationReport> {
    let mut rows = Vec::new();
    for (li, p) in levels.iter().enumerate() {
        let sample = sample_level_set(s, p, n_per_level, seed.wrapping_add(li as u64))?;
        let vals: Vec<f64> = sample
            .points
            .par_iter()
            .map(|lp| -> Result<f64> {
                let x = &lp.point;
                let e = s.manifold.tangent_basis(x)?;
                let gens = generator_matrix(s.action.as_ref(), x);
                let mut worst = 0.0f64;
                for a in lifts(s, x, lift)? {
                    for c in 0..gens.ncols() {
                        let xv = gens.column(c).into_owned();
                        for j in 0..e.ncols() {
                            let w = e.column(j).into_owned();
                            let v = exterior_derivative_fd(&s.manifold, &s.omega, x, &[a.clone(), xv.clone(), w])?;
                            worst = worst.max(v.abs());
                        }
                    }
                }
                Ok(worst)
            })
            .collect::<Result<_>>()?;
        rows.push(GoodTrivializationRow { level: p.iter().copied().collect(), max_abs: max_dev(&vals) });
    }
    let max_deviation = max_dev(&rows.iter().map(|r| r.max_abs).collect::<Vec<_>>());
    Ok(GoodTrivializationReport {
        scenario: s.id.clone(),
        rows,
        max_deviation,
        tolerance: tol,
        pass: max_deviation.is_finite() && max_deviation <= tol,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct QuotientReport {
    pub scenario: String,
    pub n_points: usize,
    pub reduced_dim: usize,
    pub j_deviation: f64,
    pub omega_deviation: f64,
    pub metric_deviation: f64,
    pub area: f64,
    pub fubini_study_area: f64,
    pub checks: Vec<CheckReport>,
    pub pass: bool,
}

/// Chart w = z2 / z1 of CP^1 and its differential on C^2 vectors.
fn chart_w(x: &DVector<f64>) -> (Complex64, DMatrix<f64>) {
    let z1 = Complex64::new(x[0], x[1]);
    let z2 = Complex64::new(x[2], x[3]);
    let w = z2 / z1;
    // dw = dz2 / z1 - z2 dz1 / z1^2, as a real 2 x 4 matrix.
    let a = -z2 / (z1 * z1);
    let b = 1.0 / z1;
    let mut d = DMatrix::zeros(2, x.len());
    for (col, c) in [(0, a), (2, b)] {
        d[(0, col)] = c.re;
        d[(1, col)] = c.im;
        d[(0, col + 1)] = -c.im;
        d[(1, col + 1)] = c.re;
    }
    (w, d)
}

/// Reduced (J, omega, g) of the toric scenario at level 0 against the
/// Fubini-Study data of CP^1 (area pi) in the chart w = z2 / z1.
pub fn quotient_scenario_check(s: &Scenario, n: usize, seed: u64, tol: f64) -> Result<QuotientReport> {
    if s.id != HOPF_QUOTIENT_ID {
        return Err(Error::Config(format!("quotient check runs on {HOPF_QUOTIENT_ID}, got {}", s.id)));
    }
    let sample = sample_level_set(s, &DVector::zeros(1), n, seed)?;
    let reduced_dim = sample.points.first().map(|p| p.horizontal.ncols()).unwrap_or(0);
    let jc = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
    let wstd = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    let mut jd = Vec::new();
    let mut wd = Vec::new();
    let mut gd = Vec::new();
    for lp in &sample.points {
        let r = reduced_form_sample(s, lp)?;
        let (w, d) = chart_w(&lp.point);
        let b = d * &lp.horizontal;
        let f = 1.0 / (1.0 + w.norm_sqr()).powi(2);
        jd.push((&b * &r.j - &jc * &b).amax());
        wd.push((&r.omega - b.transpose() * &wstd * &b * f).amax());
        gd.push((&r.metric - b.transpose() * &b * f).amax());
    }
    let chart = quotient_chart(s)?;
    let area = reduced_area(s, &chart, 0.0)?;
    let checks = vec![
        CheckReport::new("reduced_dimension", &s.id, 1, (reduced_dim as f64 - 2.0).abs(), 0.0),
        CheckReport::new("quotient_j_match", &s.id, n, max_dev(&jd), tol),
        CheckReport::new("quotient_omega_match", &s.id, n, max_dev(&wd), tol),
        CheckReport::new("quotient_metric_match", &s.id, n, max_dev(&gd), tol),
        CheckReport::new("quotient_area", &s.id, 1, (area - PI).abs(), 1e-6 * PI),
    ];
    let pass = checks.iter().all(|c| c.pass);
    Ok(QuotientReport {
        scenario: s.id.clone(),
        n_points: n,
        reduced_dim,
        j_deviation: max_dev(&jd),
        omega_deviation: max_dev(&wd),
        metric_deviation: max_dev(&gd),
        area,
        fubini_study_area: PI,
        checks,
        pass,
    })
}
