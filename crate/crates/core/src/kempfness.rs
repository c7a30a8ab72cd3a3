//! Kempf-Ness functions for abelian G, slopes at infinity, Hesselink
//! weights and the semistability test.
//!
//! Locked convention: d/dt phi_m(exp(i t xi)) = -<Psi(exp(-i t xi) m), xi>.
//! For abelian G the geodesics of G/K are lines in k, so
//! phi_m(exp(i xi)) is the integral of that derivative over [0, 1].

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{stratum_label, FlowOptions};
use crate::quadrature::integrate;
use crate::report::CheckReport;
use crate::scenarios::Scenario;

/// -<Psi(exp(-i t xi) m), xi>.
pub fn kn_derivative(s: &Scenario, m: &DVector<f64>, xi: &DVector<f64>, t: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(-s.moment.component(m, xi));
    }
    let y = s.action.act_imag(m, xi, -t)?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow);
    }
    Ok(-s.moment.component(&y, xi))
}

fn kn_segment(s: &Scenario, m: &DVector<f64>, xi: &DVector<f64>, a: f64, b: f64) -> Result<f64> {
    let mut err = None;
    let v = integrate(
        |t| match kn_derivative(s, m, xi, t) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                f64::NAN
            }
        },
        a,
        b,
        s.tol().tol_quad,
    );
    if let Some(e) = err {
        return Err(e);
    }
    v
}

/// phi_m(exp(i xi)).
pub fn kn_value(s: &Scenario, m: &DVector<f64>, xi: &DVector<f64>) -> Result<f64> {
    if xi.len() != s.rank() {
        return Err(Error::DimensionMismatch(format!("xi has {} components, rank is {}", xi.len(), s.rank())));
    }
    if xi.norm() == 0.0 {
        return Ok(0.0);
    }
    kn_segment(s, m, xi, 0.0, 1.0)
}

/// phi_m along the geodesic t -> exp(i t xi) on a grid, with the
/// derivative samples and the slope at infinity when it plateaus.
#[derive(Debug, Clone, Serialize)]
pub struct KempfNessProfile {
    pub base: Vec<f64>,
    pub xi: Vec<f64>,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub derivatives: Vec<f64>,
    pub slope: Option<f64>,
}

impl KempfNessProfile {
    /// Most negative second difference of the values (uniform grid).
    pub fn min_second_difference(&self) -> f64 {
        self.values.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]).fold(f64::INFINITY, f64::min)
    }

    /// Largest decrease between consecutive derivative samples.
    pub fn max_derivative_drop(&self) -> f64 {
        self.derivatives.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
    }
}

/// Profile on t = 0, h, 2h, ..., n h. Values are accumulated segment by
/// segment, so phi(0) = 0 exactly.
pub fn kn_profile(s: &Scenario, m: &DVector<f64>, xi: &DVector<f64>, h: f64, n: usize) -> Result<KempfNessProfile> {
    let times: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
    let segs: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| kn_segment(s, m, xi, times[i], times[i + 1]))
        .collect::<Result<_>>()?;
    let mut values = vec![0.0];
    for v in segs {
        values.push(values.last().unwrap() + v);
    }
    let derivatives = times.iter().map(|&t| kn_derivative(s, m, xi, t)).collect::<Result<Vec<_>>>()?;
    let slope = if s.compact {
        slope_at_infinity(s, m, xi).ok().filter(|e| e.plateau).map(|e| e.slope)
    } else {
        None
    };
    Ok(KempfNessProfile {
        base: m.iter().copied().collect(),
        xi: xi.iter().copied().collect(),
        times,
        values,
        derivatives,
        slope,
    })
}

/// phi_m(exp(i xi1)) + phi_{exp(-i xi1) m}(exp(i xi2)) - phi_m(exp(i (xi1 + xi2))).
pub fn kn_cocycle_residual(s: &Scenario, m: &DVector<f64>, xi1: &DVector<f64>, xi2: &DVector<f64>) -> Result<f64> {
    let a = kn_value(s, m, xi1)?;
    let m1 = if xi1.norm() == 0.0 { m.clone() } else { s.action.act_imag(m, xi1, -1.0)? };
    let b = kn_value(s, &m1, xi2)?;
    let c = kn_value(s, m, &(xi1 + xi2))?;
    Ok((a + b - c).abs())
}

/// Cocycle identity over a list of (m, xi1, xi2) triples.
pub fn kn_cocycle_check(
    s: &Scenario,
    triples: &[(DVector<f64>, DVector<f64>, DVector<f64>)],
    tol: f64,
) -> Result<CheckReport> {
    let res: Vec<f64> = triples
        .par_iter()
        .map(|(m, a, b)| kn_cocycle_residual(s, m, a, b))
        .collect::<Result<_>>()?;
    Ok(CheckReport::new("kn_cocycle", &s.id, triples.len(), crate::report::max_dev(&res), tol))
}

#[derive(Debug, Clone, Serialize)]
pub struct KnConvexityReport {
    pub scenario: String,
    pub min_second_difference: f64,
    pub second_derivative_at_zero: f64,
    pub field_norm_squared: f64,
    pub derivative_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Second differences of phi along exp(i t xi) on t = 0, h, ..., n h are
/// >= -tol, and d^2/dt^2 phi at 0 equals g(xi_M, xi_M) = omega(xi_M, J xi_M).
pub fn kn_convexity_check(s: &Scenario, m: &DVector<f64>, xi: &DVector<f64>, h: f64, n: usize, tol: f64) -> Result<KnConvexityReport> {
    let prof = kn_profile(s, m, xi, h, n)?;
    let triple = s.triple.as_ref().ok_or(Error::Degenerate(0.0))?;
    let field = s.action.field(m, xi);
    let expected = triple.metric(m, &field, &field);
    let d = 1e-4;
    let second = (kn_derivative(s, m, xi, d)? - kn_derivative(s, m, xi, -d)?) / (2.0 * d);
    let deviation = (second - expected).abs();
    let msd = prof.min_second_difference();
    // central differences of the derivative carry O(d^2) truncation
    let fd_tol = tol.max(1e-6 * expected.abs().max(1.0));
    Ok(KnConvexityReport {
        scenario: s.id.clone(),
        min_second_difference: msd,
        second_derivative_at_zero: second,
        field_norm_squared: expected,
        derivative_deviation: deviation,
        tolerance: tol,
        pass: msd >= -tol && deviation <= fd_tol,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeEstimate {
    pub slope: f64,
    pub t_last: f64,
    pub plateau: bool,
    /// The last two derivative samples.
    pub bracket: (f64, f64),
}

/// lim_{t -> inf} -<Psi(exp(-i t xi) m), xi> on t = 1, 2, 4, ..., 2^14.
/// The whole schedule is evaluated and the last sample returned; it is a
/// plateau when three successive samples agree within tol_slope and the
/// last sample still agrees with them. A decrease beyond eps_num is a
/// MonotonicityViolation.
pub fn slope_at_infinity(s: &Scenario, m: &DVector<f64>, xi: &DVector<f64>) -> Result<SlopeEstimate> {
    let tol = s.tol();
    let mut vals: Vec<f64> = Vec::with_capacity(15);
    let mut plateau_at: Option<usize> = None;
    let mut t = 1.0;
    for i in 0..=14 {
        let v = kn_derivative(s, m, xi, t)?;
        if let Some(&last) = vals.last() {
            if v < last - tol.eps_num {
                return Err(Error::MonotonicityViolation(last - v));
            }
        }
        vals.push(v);
        if plateau_at.is_none()
            && i >= 2
            && (vals[i] - vals[i - 1]).abs() < tol.tol_slope
            && (vals[i - 1] - vals[i - 2]).abs() < tol.tol_slope
        {
            plateau_at = Some(i);
        }
        t *= 2.0;
    }
    let n = vals.len();
    let last = vals[n - 1];
    let plateau = plateau_at.is_some_and(|i| (last - vals[i]).abs() < tol.tol_slope);
    Ok(SlopeEstimate { slope: last, t_last: t / 2.0, plateau, bracket: (vals[n - 2], last) })
}

/// Strict variant: NoPlateau when the schedule runs out.
pub fn slope_at_infinity_strict(s: &Scenario, m: &DVector<f64>, xi: &DVector<f64>) -> Result<f64> {
    let e = slope_at_infinity(s, m, xi)?;
    if e.plateau {
        Ok(e.slope)
    } else {
        Err(Error::NoPlateau)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightReport {
    pub m: Vec<f64>,
    pub w_min: Vec<f64>,
    pub w_h: Vec<f64>,
    pub inf_slope: f64,
    pub semistable: bool,
    /// Directions and slopes of the search grid.
    pub certificate_grid: Vec<(Vec<f64>, f64)>,
    pub unresolved_directions: usize,
}

pub const ANGULAR_GRID: usize = 360;
pub const THETA_SEP: f64 = 0.1;

fn direction(k: usize, theta: f64) -> DVector<f64> {
    if k == 1 {
        DVector::from_element(1, if theta.cos() >= 0.0 { 1.0 } else { -1.0 })
    } else {
        DVector::from_vec(vec![theta.cos(), theta.sin()])
    }
}

/// Minimise the slope over the unit sphere of k (k <= 2): both signs for
/// k = 1, an angular grid refined by golden-section search for k = 2.
pub fn hesselink_weight(s: &Scenario, m: &DVector<f64>) -> Result<WeightReport> {
    let k = s.rank();
    if k == 0 || k > 2 {
        return Err(Error::DimensionMismatch(format!("slope search supports rank 1 or 2, got {k}")));
    }
    if !s.compact {
        return Err(Error::Config(format!("slopes at infinity need a compact scenario, {} is not", s.id)));
    }
    let tol = s.tol();
    let m = s.manifold.project(m)?.coords;
    let thetas: Vec<f64> = if k == 1 {
        vec![0.0, std::f64::consts::PI]
    } else {
        (0..ANGULAR_GRID).map(|i| i as f64 * std::f64::consts::TAU / ANGULAR_GRID as f64).collect()
    };
    let grid: Vec<SlopeEstimate> = thetas
        .par_iter()
        .map(|&th| slope_at_infinity(s, &m, &direction(k, th)))
        .collect::<Result<_>>()?;
    let slopes: Vec<f64> = grid.iter().map(|e| e.slope).collect();
    let unresolved = grid.iter().filter(|e| !e.plateau).count();
    // unresolved samples underestimate the limit, so only certified ones
    // compete for the minimum unless nothing plateaued
    let any_certified = grid.iter().any(|e| e.plateau);
    let (mut best_i, mut best) = (0, f64::INFINITY);
    for (i, e) in grid.iter().enumerate() {
        if (e.plateau || !any_certified) && e.slope < best {
            best = e.slope;
            best_i = i;
        }
    }
    let mut theta = thetas[best_i];
    if k == 2 && best < -tol.tol_ss {
        // distinct grid local minima at the same level contradict uniqueness
        let n = slopes.len();
        let level = 10.0 * tol.tol_slope;
        let minima: Vec<usize> = (0..n)
            .filter(|&i| {
                grid[i].plateau
                    && slopes[i] <= slopes[(i + n - 1) % n]
                    && slopes[i] <= slopes[(i + 1) % n]
                    && slopes[i] <= best + level
            })
            .collect();
        for &i in &minima {
            let d = (thetas[i] - thetas[best_i]).abs();
            let d = d.min(std::f64::consts::TAU - d);
            if d > THETA_SEP {
                return Err(Error::AmbiguousMinimum);
            }
        }
        let step = std::f64::consts::TAU / ANGULAR_GRID as f64;
        let mut certified: Vec<(f64, f64)> = Vec::new();
        let mut f = |th: f64| -> Result<f64> {
            let e = slope_at_infinity(s, &m, &direction(2, th))?;
            if e.plateau {
                certified.push((th, e.slope));
            }
            Ok(e.slope)
        };
        let (mut a, mut b) = (theta - step, theta + step);
        let gr = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - gr * (b - a);
        let mut d = a + gr * (b - a);
        let (mut fc, mut fd) = (f(c)?, f(d)?);
        while b - a > 1e-9 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - gr * (b - a);
                fc = f(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + gr * (b - a);
                fd = f(d)?;
            }
        }
        f(0.5 * (a + b))?;
        for (th, v) in certified {
            if v < best {
                best = v;
                theta = th;
            }
        }
    }
    let w_min = direction(k, theta);
    let semistable = best >= -tol.tol_ss;
    let w_h = if semistable { DVector::zeros(k) } else { &w_min * (-best) };
    Ok(WeightReport {
        m: m.iter().copied().collect(),
        w_min: w_min.iter().copied().collect(),
        w_h: w_h.iter().copied().collect(),
        inf_slope: best,
        semistable,
        certificate_grid: thetas.iter().zip(&slopes).map(|(&th, &v)| (direction(k, th).iter().copied().collect(), v)).collect(),
        unresolved_directions: unresolved,
    })
}

/// True iff the minimal slope is >= -tol_ss; Borderline when it is within
/// tol_ss of zero.
pub fn semistable_test(s: &Scenario, m: &DVector<f64>) -> Result<bool> {
    let w = hesselink_weight(s, m)?;
    if w.inf_slope.abs() < s.tol().tol_ss {
        return Err(Error::Borderline);
    }
    Ok(w.semistable)
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentWeightReport {
    pub scenario: String,
    pub m: Vec<f64>,
    pub inf_slope: f64,
    pub limit_norm: f64,
    pub deviation: f64,
    pub w_h: Vec<f64>,
    pub lambda: Vec<f64>,
    pub weight_label_distance: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// |-inf slope - ||Psi(flow limit)||| <= tol and w_H = lambda within
/// r_cluster, with lambda from the norm-square flow.
pub fn moment_weight_check(s: &Scenario, m: &DVector<f64>, opts: &FlowOptions, tol: f64) -> Result<MomentWeightReport> {
    let w = hesselink_weight(s, m)?;
    let label = stratum_label(s, m, opts)?;
    let lhs = if w.semistable { 0.0 } else { -w.inf_slope };
    let deviation = (lhs - label.norm).abs();
    let w_h = DVector::from_vec(w.w_h.clone());
    let dist = (&w_h - &label.lambda).norm();
    Ok(MomentWeightReport {
        scenario: s.id.clone(),
        m: w.m.clone(),
        inf_slope: w.inf_slope,
        limit_norm: label.norm,
        deviation,
        w_h: w.w_h,
        lambda: label.lambda.iter().copied().collect(),
        weight_label_distance: dist,
        tolerance: tol,
        pass: deviation <= tol && dist <= s.tol().r_cluster,
    })
}
