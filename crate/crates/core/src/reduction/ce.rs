//! Reduction of the Calabi-Eckmann data at Psi = c compared with the
//! Tsukada structure on S^{2n+1} x S^{2m+1}.
//!
//! Level points are moved to the slice s1 = 0, where they equal
//! j_{u0}(p, q) = (p, 0, q, u0) with u0 = -c/b. Horizontal vectors are
//! mapped to M by the differential of pi(p, s1, q, s2) = (p, e^{-i b s1} q).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::level::{horizontal_basis, reduced_form_sample, sample_level_set, HorizontalChoice, LevelPoint};
use crate::error::{Error, Result};
use crate::linalg::complex_structure;
use crate::report::{max_dev, CheckReport};
use crate::scenarios::{CalabiEckmann, CalabiEckmannParams};

#[derive(Debug, Clone, Serialize)]
pub struct CeReductionReport {
    pub params: CalabiEckmannParams,
    pub c: f64,
    pub u0: f64,
    pub n_points: usize,
    pub slice_deviation: f64,
    pub omega_deviation: f64,
    pub metric_deviation: f64,
    pub j_deviation: f64,
    pub max_deviation: f64,
    /// Metric deviation against g with the sign of the a-cross term flipped.
    pub flipped_metric_deviation: f64,
    pub checks: Vec<CheckReport>,
    pub pass: bool,
}

/// d pi at a slice point (s1 = 0) applied to ambient vectors of Y.
fn dpi(ce: &CalabiEckmann, x: &DVector<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let l = ce.layout;
    let b = ce.params.b;
    let iq = complex_structure(l.nq / 2) * ce.q(x);
    let mut out = DMatrix::zeros(l.np + l.nq, v.ncols());
    for c in 0..v.ncols() {
        let col = v.column(c).into_owned();
        let mut y = ce.m_vector(&col);
        let ds1 = col[l.s1()];
        let mut q = y.rows_mut(l.np, l.nq);
        q -= &iq * (b * ds1);
        out.set_column(c, &y);
    }
    out
}

/// Tsukada data pulled back to H through d pi, compared with the reduced
/// (omega, g, J) on H.
pub fn ce_verify_reduction(params: CalabiEckmannParams, c: f64, n: usize, seed: u64, tol: f64) -> Result<CeReductionReport> {
    let ce = CalabiEckmann::new(params)?;
    let s = ce.scenario();
    let l = ce.layout;
    let u0 = -c / params.b;
    let sample = sample_level_set(&s, &DVector::from_element(1, c), n, seed)?;
    let rows: Vec<[f64; 5]> = sample
        .points
        .par_iter()
        .map(|lp| -> Result<[f64; 5]> {
            let xi = DVector::from_element(1, 1.0);
            let x = s.action.act_real(&lp.point, &xi, -lp.point[l.s1()]);
            let slice = (x[l.s1()]).abs().max((x[l.s2()] - u0).abs());
            let (h, sigma) = horizontal_basis(&s, &x, HorizontalChoice::Orthogonal)?;
            let r = reduced_form_sample(&s, &LevelPoint { point: x.clone(), residual: lp.residual, horizontal: h.clone(), dpsi_sigma: sigma })?;
            let b = dpi(&ce, &x, &h);
            let y = ce.m_point(&x);
            let w_t = b.transpose() * ce.tsukada_omega(&y) * &b;
            let g_t = b.transpose() * ce.tsukada_metric(&y, 1.0) * &b;
            let g_f = b.transpose() * ce.tsukada_metric(&y, -1.0) * &b;
            // J_tau b = b X in the least-squares sense; the residual counts.
            let jb = ce.tsukada_j(&y) * &b;
            let btb = b.transpose() * &b;
            let xm = btb.lu().solve(&(b.transpose() * &jb)).ok_or(Error::Degenerate(0.0))?;
            let j_dev = (&r.j - &xm).amax().max((&jb - &b * &xm).amax());
            Ok([slice, (&r.omega - w_t).amax(), (&r.metric - g_t).amax(), j_dev, (&r.metric - g_f).amax()])
        })
        .collect::<Result<_>>()?;
    let col = |i: usize| max_dev(&rows.iter().map(|r| r[i]).collect::<Vec<_>>());
    let (slice_deviation, omega_deviation, metric_deviation, j_deviation, flipped) = (col(0), col(1), col(2), col(3), col(4));
    let max_deviation = omega_deviation.max(metric_deviation).max(j_deviation);
    let checks = vec![
        CheckReport::new("ce_slice", &s.id, n, slice_deviation, 1e-9),
        CheckReport::new("ce_reduced_omega", &s.id, n, omega_deviation, tol),
        CheckReport::new("ce_reduced_metric", &s.id, n, metric_deviation, tol),
        CheckReport::new("ce_reduced_j", &s.id, n, j_deviation, tol),
    ];
    let pass = checks.iter().all(|c| c.pass);
    Ok(CeReductionReport {
        params,
        c,
        u0,
        n_points: n,
        slice_deviation,
        omega_deviation,
        metric_deviation,
        j_deviation,
        max_deviation,
        flipped_metric_deviation: flipped,
        checks,
        pass,
    })
}
