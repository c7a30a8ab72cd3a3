//! Equivariant Moser flow near a fixed point: omega_0, omega_1 on R^4 with
//! the diagonal circle, agreeing at 0.
//!
//! alpha = omega_1 - omega_0, beta_x = int_0^1 s alpha_{sx}(x, -) ds (radial
//! homotopy), R_t from iota_{R_t} omega_t + beta = 0, phi = time-1 flow.
//! The report measures |iota_xi omega_0(v) - iota_xi (phi^* omega_1)(v)|.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::action::{GroupAction, LinearTorusAction};
use crate::error::{Error, Result};
use crate::linalg::{complex_structure, pfaffian, singular_values, wedge};
use crate::manifold::TwoForm;
use crate::quadrature::rule_unit;
use crate::report::stream;
use crate::scenarios::gaussian;

#[derive(Clone)]
pub struct MoserPair {
    pub name: String,
    pub omega0: TwoForm,
    pub omega1: TwoForm,
    pub action: LinearTorusAction,
}

fn diagonal_circle() -> LinearTorusAction {
    let j = complex_structure(2);
    LinearTorusAction { generators: vec![j.clone()], complex_structure: Some(j) }
}

fn omega_std() -> DMatrix<f64> {
    -complex_structure(2)
}

/// lambda_j = (x_j dy_j - y_j dx_j) / 2 as a covector.
fn lambda(x: &DVector<f64>, j: usize) -> DVector<f64> {
    let mut c = DVector::zeros(4);
    c[2 * j] = -0.5 * x[2 * j + 1];
    c[2 * j + 1] = 0.5 * x[2 * j];
    c
}

fn block_area(j: usize) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(4, 4);
    w[(2 * j, 2 * j + 1)] = 1.0;
    w[(2 * j + 1, 2 * j)] = -1.0;
    w
}

/// omega_0 = omega_1 = omega_std.
pub fn identical_pair() -> MoserPair {
    let w = TwoForm::constant(omega_std());
    MoserPair { name: "identical".into(), omega0: w.clone(), omega1: w, action: diagonal_circle() }
}

/// omega_1 = (1 + eps |x|^2) omega_std.
pub fn conformal_pair(eps: f64) -> MoserPair {
    let w0 = TwoForm::constant(omega_std());
    let w1 = TwoForm::new(move |x| omega_std() * (1.0 + eps * x.norm_squared()));
    MoserPair { name: "conformal".into(), omega0: w0, omega1: w1, action: diagonal_circle() }
}

/// omega_1 = omega_std + d alpha with alpha = e1 |z1|^2 lambda_2 + e2 |z2|^2 lambda_1,
/// which vanishes to third order at 0.
pub fn exact_pair(e1: f64, e2: f64) -> MoserPair {
    let w0 = TwoForm::constant(omega_std());
    let w1 = TwoForm::new(move |x| {
        let r1 = x[0] * x[0] + x[1] * x[1];
        let r2 = x[2] * x[2] + x[3] * x[3];
        let mut d1 = DVector::zeros(4);
        d1[0] = 2.0 * x[0];
        d1[1] = 2.0 * x[1];
        let mut d2 = DVector::zeros(4);
        d2[2] = 2.0 * x[2];
        d2[3] = 2.0 * x[3];
        // d(f lambda) = df ^ lambda + f d lambda, d lambda_j = dx_j ^ dy_j.
        omega_std()
            + (wedge(&d1, &lambda(x, 1)) + block_area(1) * r1) * e1
            + (wedge(&d2, &lambda(x, 0)) + block_area(0) * r2) * e2
    });
    MoserPair { name: "exact".into(), omega0: w0, omega1: w1, action: diagonal_circle() }
}

/// The three built-in pairs.
pub fn moser_pairs() -> Vec<MoserPair> {
    vec![identical_pair(), conformal_pair(0.5), exact_pair(0.7, -0.4)]
}

#[derive(Debug, Clone, Copy)]
pub struct MoserOptions {
    pub radius: f64,
    pub r_min: f64,
    pub n_samples: usize,
    pub steps: usize,
    pub quad_nodes: usize,
    pub seed: u64,
    pub sigma_min: f64,
}

impl Default for MoserOptions {
    fn default() -> Self {
        MoserOptions { radius: 0.1, r_min: 1e-3, n_samples: 50, steps: 64, quad_nodes: 16, seed: 0, sigma_min: 1e-8 }
    }
}

/// beta at x by Gauss-Legendre quadrature of the radial homotopy formula.
pub fn homotopy_primitive(pair: &MoserPair, x: &DVector<f64>, nodes: usize) -> DVector<f64> {
    rule_unit(nodes).iter().fold(DVector::zeros(x.len()), |acc, &(s, w)| {
        let y = x * s;
        let a = pair.omega1.matrix(&y) - pair.omega0.matrix(&y);
        acc + a.transpose() * x * (s * w)
    })
}

/// R_t(x) solving iota_R omega_t = -beta. A Pfaffian sign change against
/// omega_0 means omega_s degenerated at x for some s in [0, t].
pub fn moser_field(pair: &MoserPair, x: &DVector<f64>, t: f64, opts: &MoserOptions) -> Result<DVector<f64>> {
    let w0 = pair.omega0.matrix(x);
    let wt = &w0 * (1.0 - t) + pair.omega1.matrix(x) * t;
    let smin = singular_values(&wt).last().copied().unwrap_or(0.0);
    if !(smin > opts.sigma_min) || pfaffian(&wt) * pfaffian(&w0) <= 0.0 {
        return Err(Error::DegenerateInterpolation(smin));
    }
    let beta = homotopy_primitive(pair, x, opts.quad_nodes);
    wt.transpose().lu().solve(&(-beta)).ok_or(Error::DegenerateInterpolation(0.0))
}

/// phi(m): classical RK4 on [0, 1].
pub fn moser_map(pair: &MoserPair, m: &DVector<f64>, opts: &MoserOptions) -> Result<DVector<f64>> {
    let h = 1.0 / opts.steps as f64;
    let mut x = m.clone();
    for i in 0..opts.steps {
        let t = i as f64 * h;
        let k1 = moser_field(pair, &x, t, opts)?;
        let k2 = moser_field(pair, &(&x + &k1 * (h / 2.0)), t + h / 2.0, opts)?;
        let k3 = moser_field(pair, &(&x + &k2 * (h / 2.0)), t + h / 2.0, opts)?;
        let k4 = moser_field(pair, &(&x + &k3 * h), t + h, opts)?;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    Ok(x)
}

/// max over generators and the standard basis of
/// |omega_0(xi, v) - omega_1(D phi xi, D phi v)| at m, for any map phi.
pub fn contraction_defect<F>(pair: &MoserPair, m: &DVector<f64>, phi: F) -> Result<f64>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = m.len();
    let h = 1e-5;
    let mut dphi = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = h;
        dphi.set_column(i, &((phi(&(m + &e))? - phi(&(m - &e))?) / (2.0 * h)));
    }
    let y = phi(m)?;
    let w0 = pair.omega0.matrix(m);
    let w1 = pair.omega1.matrix(&y);
    let k = pair.action.rank();
    let mut worst = 0.0f64;
    for a in 0..k {
        let mut xi = DVector::zeros(k);
        xi[a] = 1.0;
        let f = pair.action.field(m, &xi);
        let lhs = w0.transpose() * &f;
        let rhs = dphi.transpose() * (w1.transpose() * (&dphi * &f));
        worst = worst.max((lhs - rhs).amax());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Serialize)]
pub struct MoserReport {
    pub pair: String,
    pub radius: f64,
    pub n_samples: usize,
    pub max_deviation: f64,
    pub max_displacement: f64,
    pub fixes_origin: bool,
    pub tolerance: f64,
    pub pass: bool,
}

fn ball_sample(seed: u64, i: u64, r: f64) -> DVector<f64> {
    use rand::Rng;
    let mut rng = stream(seed, i);
    let d = gaussian(&mut rng, 4).normalize();
    let u: f64 = rng.gen();
    d * (r * u.powf(0.25))
}

/// Contraction-identity report over samples in the ball of the working
/// radius. The radius halves on DegenerateInterpolation down to r_min.
pub fn moser_flow(pair: &MoserPair, opts: &MoserOptions, tol: f64) -> Result<MoserReport> {
    let z = DVector::zeros(4);
    let at_w = (pair.omega0.matrix(&z) - pair.omega1.matrix(&z)).amax();
    if at_w > 1e-12 {
        return Err(Error::Config(format!("the forms differ at the fixed point by {at_w:.3e}")));
    }
    let mut r = opts.radius;
    loop {
        let run = (0..opts.n_samples as u64)
            .into_par_iter()
            .map(|i| -> Result<(f64, f64)> {
                let m = ball_sample(opts.seed, i, r);
                let y = moser_map(pair, &m, opts)?;
                let d = contraction_defect(pair, &m, |x| moser_map(pair, x, opts))?;
                Ok((d, (y - &m).norm()))
            })
            .collect::<Result<Vec<_>>>();
        match run {
            Ok(v) => {
                let max_deviation = v.iter().map(|p| p.0).fold(0.0, f64::max);
                let max_displacement = v.iter().map(|p| p.1).fold(0.0, f64::max);
                let fixes_origin = moser_map(pair, &z, opts)?.amax() == 0.0;
                return Ok(MoserReport {
                    pair: pair.name.clone(),
                    radius: r,
                    n_samples: opts.n_samples,
                    max_deviation,
                    max_displacement,
                    fixes_origin,
                    tolerance: tol,
                    pass: max_deviation <= tol && fixes_origin,
                });
            }
            Err(Error::DegenerateInterpolation(s)) => {
                r *= 0.5;
                if r < opts.r_min {
                    return Err(Error::DegenerateInterpolation(s));
                }
            }
            Err(e) => return Err(e),
        }
    }
}
