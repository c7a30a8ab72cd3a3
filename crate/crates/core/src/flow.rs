//! Negative gradient flows of Psi^xi and f = |Psi|^2 / 2, stratum labels,
//! critical values and Hessian indices.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::sym_inv_sqrt;
use crate::scenarios::{SampleKind, Scenario};

/// The function whose negative gradient is followed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FlowFunction {
    PsiXi(Vec<f64>),
    NormSquare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FlowMethod {
    Ambient,
    Orbit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowOptions {
    pub method: FlowMethod,
    pub rtol: f64,
    pub atol: f64,
    pub h0: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub eps_crit: f64,
    pub crit_hold: usize,
    pub t_max: f64,
    pub max_steps: usize,
    /// Store every n-th accepted step (the last point is always stored).
    pub record_every: usize,
}

impl FlowOptions {
    pub fn from_tolerances(tol: &crate::Tolerances) -> Self {
        FlowOptions {
            method: FlowMethod::Ambient,
            rtol: 1e-10,
            atol: 1e-12,
            h0: 1e-2,
            h_min: 1e-13,
            h_max: 50.0,
            eps_crit: tol.eps_crit,
            crit_hold: tol.crit_hold,
            t_max: tol.t_max,
            max_steps: 2_000_000,
            record_every: 1,
        }
    }

    pub fn with_method(self, method: FlowMethod) -> Self {
        FlowOptions { method, ..self }
    }

    /// Same options with both ODE tolerances halved.
    pub fn halved(&self) -> Self {
        FlowOptions { rtol: self.rtol / 2.0, atol: self.atol / 2.0, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FlowStatus {
    Converged,
    MaxTimeExceeded,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<DVector<f64>>,
    pub values: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub terminal_grad_norm: f64,
    pub converged: bool,
    pub status: FlowStatus,
    pub steps: usize,
}

impl Trajectory {
    pub fn last_point(&self) -> &DVector<f64> {
        self.points.last().expect("trajectory has its start point")
    }

    /// Largest increase of the flowed function between stored samples.
    pub fn max_increase(&self) -> f64 {
        self.values.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// CSV with columns t, x0..x{N-1}, f, grad_norm.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let n = self.points.first().map_or(0, |p| p.len());
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("x{i}")));
        header.push("f".into());
        header.push("grad_norm".into());
        wr.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
        for i in 0..self.times.len() {
            let mut row = vec![format!("{:e}", self.times[i])];
            row.extend(self.points[i].iter().map(|v| format!("{v:e}")));
            row.push(format!("{:e}", self.values[i]));
            row.push(format!("{:e}", self.grad_norms[i]));
            wr.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Value of the flowed function.
pub fn flow_value(s: &Scenario, fun: &FlowFunction, x: &DVector<f64>) -> f64 {
    let psi = s.moment.eval(x);
    match fun {
        FlowFunction::PsiXi(xi) => psi.dot(&DVector::from_column_slice(xi)),
        FlowFunction::NormSquare => psi.norm_squared() / 2.0,
    }
}

/// The closed-form gradient: J xi_M for Psi^xi, J Psi(x)_M for f.
pub fn flow_gradient(s: &Scenario, fun: &FlowFunction, x: &DVector<f64>) -> Result<DVector<f64>> {
    let triple = s.triple.as_ref().ok_or(Error::Degenerate(0.0))?;
    let xi = match fun {
        FlowFunction::PsiXi(xi) => DVector::from_column_slice(xi),
        FlowFunction::NormSquare => s.moment.eval(x),
    };
    Ok(triple.apply_j(x, &s.action.field(x, &xi)))
}

fn g_norm(s: &Scenario, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
    match s.triple.as_ref() {
        Some(t) => t.metric(x, v, v).max(0.0).sqrt(),
        None => v.norm(),
    }
}

// Dormand-Prince 5(4) tableau; the field is autonomous so the nodes are unused.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Follow -grad of `fun` from m0 with adaptive Dormand-Prince steps.
///
/// `Ambient` integrates in R^N and projects each accepted step back to M.
/// `Orbit` writes the solution as x(t) = exp(i zeta(t)) m0 with
/// zeta' = -xi (resp. -Psi(x)), which is exact for abelian actions and keeps
/// the trajectory inside the complexified orbit of m0.
pub fn integrate_negative_gradient(
    s: &Scenario,
    fun: &FlowFunction,
    m0: &DVector<f64>,
    opts: &FlowOptions,
) -> Result<Trajectory> {
    let x0 = s.manifold.project(m0)?.coords;
    match opts.method {
        FlowMethod::Ambient => {
            let rhs = |x: &DVector<f64>| -> Result<DVector<f64>> { Ok(-flow_gradient(s, fun, x)?) };
            let to_point = |y: &DVector<f64>| -> Result<DVector<f64>> { Ok(s.manifold.project(y)?.coords) };
            dormand_prince(s, fun, x0.clone(), &rhs, &to_point, true, opts)
        }
        FlowMethod::Orbit => {
            let to_point = |z: &DVector<f64>| -> Result<DVector<f64>> { s.action.act_imag(&x0, z, 1.0) };
            let rhs = |z: &DVector<f64>| -> Result<DVector<f64>> {
                Ok(match fun {
                    FlowFunction::PsiXi(xi) => -DVector::from_column_slice(xi),
                    FlowFunction::NormSquare => -s.moment.eval(&to_point(z)?),
                })
            };
            dormand_prince(s, fun, DVector::zeros(s.rank()), &rhs, &to_point, false, opts)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn dormand_prince(
    s: &Scenario,
    fun: &FlowFunction,
    mut y: DVector<f64>,
    rhs: &dyn Fn(&DVector<f64>) -> Result<DVector<f64>>,
    to_point: &dyn Fn(&DVector<f64>) -> Result<DVector<f64>>,
    replace_state: bool,
    opts: &FlowOptions,
) -> Result<Trajectory> {
    let mut x = to_point(&y)?;
    if replace_state {
        y = x.clone();
    }
    let mut t = 0.0;
    let mut h = opts.h0;
    let mut g = rhs(&y)?;
    let grad_norm = |x: &DVector<f64>| -> Result<f64> { Ok(g_norm(s, x, &flow_gradient(s, fun, x)?)) };
    let mut gn = grad_norm(&x)?;
    let mut traj = Trajectory {
        times: vec![0.0],
        points: vec![x.clone()],
        values: vec![flow_value(s, fun, &x)],
        grad_norms: vec![gn],
        terminal_grad_norm: gn,
        converged: false,
        status: FlowStatus::MaxTimeExceeded,
        steps: 0,
    };
    let hold_target = opts.crit_hold.max(1);
    let mut hold = if gn <= opts.eps_crit { 1 } else { 0 };
    let mut accepted = 0usize;
    let mut k: Vec<DVector<f64>> = vec![DVector::zeros(y.len()); 7];
    while hold < hold_target && t < opts.t_max && accepted < opts.max_steps {
        h = h.min(opts.t_max - t).min(opts.h_max);
        k[0] = g.clone();
        for st in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate().take(st) {
                if A[st][j] != 0.0 {
                    ys += kj * (h * A[st][j]);
                }
            }
            k[st] = rhs(&ys)?;
        }
        let mut y5 = y.clone();
        let mut y4 = y.clone();
        for st in 0..7 {
            y5 += &k[st] * (h * B5[st]);
            y4 += &k[st] * (h * B4[st]);
        }
        let err = (0..y.len())
            .map(|i| (y5[i] - y4[i]).abs() / (opts.atol + opts.rtol * y[i].abs().max(y5[i].abs())))
            .fold(0.0, f64::max);
        if err.is_finite() && err <= 1.0 {
            let xn = match to_point(&y5) {
                Ok(p) => p,
                Err(_) => {
                    h *= 0.25;
                    if h < opts.h_min {
                        return Err(Error::StepCollapse(h));
                    }
                    continue;
                }
            };
            t += h;
            x = xn;
            y = if replace_state { x.clone() } else { y5 };
            g = rhs(&y)?;
            gn = grad_norm(&x)?;
            accepted += 1;
            hold = if gn <= opts.eps_crit { hold + 1 } else { 0 };
            let done = hold >= hold_target || t >= opts.t_max;
            if accepted % opts.record_every.max(1) == 0 || done {
                traj.times.push(t);
                traj.points.push(x.clone());
                traj.values.push(flow_value(s, fun, &x));
                traj.grad_norms.push(gn);
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
        } else {
            let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
            h *= fac;
            if h < opts.h_min {
                return Err(Error::StepCollapse(h));
            }
        }
    }
    traj.steps = accepted;
    traj.terminal_grad_norm = gn;
    traj.converged = hold >= hold_target;
    traj.status = if traj.converged { FlowStatus::Converged } else { FlowStatus::MaxTimeExceeded };
    if *traj.times.last().unwrap() != t {
        traj.times.push(t);
        traj.points.push(x.clone());
        traj.values.push(flow_value(s, fun, &x));
        traj.grad_norms.push(gn);
    }
    Ok(traj)
}

#[derive(Debug, Clone)]
pub struct StratumLabel {
    pub lambda: DVector<f64>,
    pub norm: f64,
    pub limit_point: DVector<f64>,
    pub flow_time: f64,
}

/// lambda = Psi at the limit of the norm-square flow.
pub fn stratum_label(s: &Scenario, m0: &DVector<f64>, opts: &FlowOptions) -> Result<StratumLabel> {
    let traj = integrate_negative_gradient(s, &FlowFunction::NormSquare, m0, opts)?;
    if !traj.converged {
        return Err(Error::Unconverged);
    }
    let limit = traj.last_point().clone();
    let lambda = s.moment.eval(&limit);
    Ok(StratumLabel { norm: lambda.norm(), lambda, limit_point: limit, flow_time: *traj.times.last().unwrap() })
}

#[derive(Debug, Clone, Serialize)]
pub struct LabelRecord {
    pub index: usize,
    pub point: Vec<f64>,
    pub lambda: Option<Vec<f64>>,
    pub cluster: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalValues {
    /// Cluster representatives sorted by norm.
    pub values: Vec<Vec<f64>>,
    pub counts: Vec<usize>,
    pub min_gap: f64,
    pub unconverged: usize,
    pub records: Vec<LabelRecord>,
}

/// Greedy clustering: each label joins the first cluster whose
/// representative lies within `radius`.
pub fn cluster_labels(labels: &[DVector<f64>], radius: f64) -> (Vec<DVector<f64>>, Vec<usize>) {
    let mut reps: Vec<DVector<f64>> = Vec::new();
    let mut assign = Vec::with_capacity(labels.len());
    for l in labels {
        match reps.iter().position(|r| (r - l).norm() <= radius) {
            Some(i) => assign.push(i),
            None => {
                reps.push(l.clone());
                assign.push(reps.len() - 1);
            }
        }
    }
    (reps, assign)
}

/// Flow every point, cluster the labels with radius r_cluster and report
/// the distinct values.
pub fn enumerate_critical_values(s: &Scenario, points: &[DVector<f64>], opts: &FlowOptions) -> Result<CriticalValues> {
    let r = s.tol().r_cluster;
    let results: Vec<Result<StratumLabel>> = points.par_iter().map(|p| stratum_label(s, p, opts)).collect();
    let labels: Vec<DVector<f64>> = results.iter().filter_map(|r| r.as_ref().ok().map(|l| l.lambda.clone())).collect();
    let (reps, assign) = cluster_labels(&labels, r);
    let mut order: Vec<usize> = (0..reps.len()).collect();
    order.sort_by(|&a, &b| reps[a].norm().partial_cmp(&reps[b].norm()).unwrap().then(a.cmp(&b)));
    let rank_of: Vec<usize> = {
        let mut v = vec![0; reps.len()];
        for (pos, &c) in order.iter().enumerate() {
            v[c] = pos;
        }
        v
    };
    let mut counts = vec![0; reps.len()];
    let mut records = Vec::with_capacity(points.len());
    let mut li = 0;
    for (i, (p, res)) in points.iter().zip(&results).enumerate() {
        match res {
            Ok(l) => {
                let c = rank_of[assign[li]];
                li += 1;
                counts[c] += 1;
                records.push(LabelRecord {
                    index: i,
                    point: p.iter().copied().collect(),
                    lambda: Some(l.lambda.iter().copied().collect()),
                    cluster: Some(c),
                    error: None,
                });
            }
            Err(e) => records.push(LabelRecord {
                index: i,
                point: p.iter().copied().collect(),
                lambda: None,
                cluster: None,
                error: Some(e.to_string()),
            }),
        }
    }
    let values: Vec<DVector<f64>> = order.iter().map(|&c| reps[c].clone()).collect();
    let mut min_gap = f64::INFINITY;
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            min_gap = min_gap.min((&values[i] - &values[j]).norm());
        }
    }
    if min_gap < 3.0 * r {
        return Err(Error::ClusterAmbiguity);
    }
    Ok(CriticalValues {
        values: values.iter().map(|v| v.iter().copied().collect()).collect(),
        counts,
        min_gap,
        unconverged: results.iter().filter(|r| r.is_err()).count(),
        records,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalReport {
    pub point: Vec<f64>,
    pub hessian_index: usize,
    pub eigenvalues: Vec<f64>,
    /// Smallest |eigenvalue| among those counted as nonzero, over the
    /// largest |eigenvalue| among those counted as zero.
    pub eigenvalue_gap: f64,
}

/// Hessian of `fun` at a critical point, in a g-orthonormal frame of
/// T_x M, by central differences along projected curves.
pub fn hessian_index(s: &Scenario, fun: &FlowFunction, x: &DVector<f64>) -> Result<CriticalReport> {
    let tol = s.tol();
    let grad = flow_gradient(s, fun, x)?;
    let gn = g_norm(s, x, &grad);
    if gn > tol.eps_crit.max(1e-6) {
        return Err(Error::NotCritical(gn));
    }
    let e = s.manifold.tangent_basis(x)?;
    let d = e.ncols();
    let h = 1e-4;
    let f = |v: &DVector<f64>| -> Result<f64> { Ok(flow_value(s, fun, &s.manifold.curve(x, v, 1.0)?)) };
    let mut hess = DMatrix::zeros(d, d);
    let f0 = f(&DVector::zeros(x.len()))?;
    for i in 0..d {
        let u = e.column(i) * h;
        hess[(i, i)] = (f(&u)? - 2.0 * f0 + f(&(-&u))?) / (h * h);
        for j in 0..i {
            let v = e.column(j) * h;
            let val = (f(&(&u + &v))? - f(&(&u - &v))? - f(&(&v - &u))? + f(&(-&u - &v))?) / (4.0 * h * h);
            hess[(i, j)] = val;
            hess[(j, i)] = val;
        }
    }
    let g = match s.triple.as_ref() {
        Some(t) => t.metric_in_basis(x, &e),
        None => DMatrix::identity(d, d),
    };
    let gi = sym_inv_sqrt(&g).ok_or(Error::Degenerate(0.0))?;
    let m = &gi * hess * &gi;
    let m = (&m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let eps = tol.eps_eig;
    if let Some(&bad) = ev.iter().find(|v| v.abs() > eps / 10.0 && v.abs() < 10.0 * eps) {
        return Err(Error::SpectralGapTooSmall(bad));
    }
    let zero_max = ev.iter().filter(|v| v.abs() <= eps).map(|v| v.abs()).fold(0.0, f64::max);
    let nonzero_min = ev.iter().filter(|v| v.abs() > eps).map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    Ok(CriticalReport {
        point: x.iter().copied().collect(),
        hessian_index: ev.iter().filter(|&&v| v < -eps).count(),
        eigenvalues: ev,
        eigenvalue_gap: if zero_max > 0.0 { nonzero_min / zero_max } else { f64::INFINITY },
    })
}

/// A complexified-orbit witness: xi with |Psi(exp(-i xi) m)| small.
#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub xi: Vec<f64>,
    pub residual: f64,
    pub found: bool,
    pub iterations: usize,
}

/// Damped Newton on F(xi) = Psi(exp(-i xi) m) = 0, the critical point
/// equation of the Kempf-Ness function. Jacobian by central differences.
pub fn witness_search(s: &Scenario, m: &DVector<f64>, tol: f64, max_iter: usize) -> Witness {
    let k = s.rank();
    let eval = |xi: &DVector<f64>| -> Option<DVector<f64>> {
        s.action.act_imag(m, xi, -1.0).ok().map(|y| s.moment.eval(&y)).filter(|v| v.iter().all(|c| c.is_finite()))
    };
    let mut xi = DVector::zeros(k);
    let mut f = match eval(&xi) {
        Some(f) => f,
        None => return Witness { xi: vec![0.0; k], residual: f64::INFINITY, found: false, iterations: 0 },
    };
    let mut it = 0;
    while it < max_iter && f.norm() > tol {
        it += 1;
        let h = 1e-6;
        let mut jac = DMatrix::zeros(k, k);
        let mut ok = true;
        for a in 0..k {
            let mut e = DVector::zeros(k);
            e[a] = h;
            match (eval(&(&xi + &e)), eval(&(&xi - &e))) {
                (Some(p), Some(q)) => jac.set_column(a, &((p - q) / (2.0 * h))),
                _ => ok = false,
            }
        }
        if !ok {
            break;
        }
        // J^T J is the Gram matrix of the fields; regularise where singular.
        let jt = jac.transpose();
        let lhs = &jt * &jac + DMatrix::identity(k, k) * 1e-14;
        let step = match lhs.cholesky() {
            Some(c) => -c.solve(&(&jt * &f)),
            None => break,
        };
        let mut lam = 1.0;
        let mut improved = false;
        while lam > 1e-8 {
            let cand = &xi + &step * lam;
            if let Some(fc) = eval(&cand) {
                if fc.norm() < f.norm() {
                    xi = cand;
                    f = fc;
                    improved = true;
                    break;
                }
            }
            lam *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Witness { xi: xi.iter().copied().collect(), residual: f.norm(), found: f.norm() <= tol, iterations: it }
}

#[derive(Debug, Clone, Serialize)]
pub struct OpenStratumReport {
    pub scenario: String,
    pub n_samples: usize,
    pub n_converged: usize,
    pub open_label: Vec<f64>,
    pub open_fraction: f64,
    pub fraction_bound: f64,
    pub n_strata_with_open_fraction: usize,
    pub witnesses_tried: usize,
    pub witnesses_found: usize,
    pub max_witness_residual: f64,
    pub pass: bool,
}

/// (a) the minimal-norm label is carried by more than `fraction_bound` of
/// the converged samples; (b) label-0 samples have a complexified-orbit
/// witness reaching Psi^{-1}(0).
pub fn verify_open_stratum_properties(
    s: &Scenario,
    n: usize,
    seed: u64,
    fraction_bound: f64,
    n_witness: usize,
    opts: &FlowOptions,
) -> Result<OpenStratumReport> {
    let points = s.samples(seed, n, SampleKind::Uniform);
    let cv = enumerate_critical_values(s, &points, opts)?;
    let conv = n - cv.unconverged;
    let open = cv.values.first().cloned().unwrap_or_default();
    let open_count = cv.counts.first().copied().unwrap_or(0);
    let frac = if conv > 0 { open_count as f64 / conv as f64 } else { 0.0 };
    let dense = cv.counts.iter().filter(|&&c| conv > 0 && c as f64 / conv as f64 > 0.5).count();
    let zero_label = open.iter().all(|v| v.abs() <= s.tol().r_cluster);
    let mut tried = 0;
    let mut found = 0;
    let mut worst: f64 = 0.0;
    if zero_label {
        let picks: Vec<&DVector<f64>> = cv
            .records
            .iter()
            .filter(|r| r.cluster == Some(0))
            .take(n_witness)
            .map(|r| &points[r.index])
            .collect();
        let ws: Vec<Witness> = picks.par_iter().map(|p| witness_search(s, p, 1e-8, 100)).collect();
        tried = ws.len();
        found = ws.iter().filter(|w| w.found).count();
        worst = ws.iter().map(|w| w.residual).fold(0.0, f64::max);
    }
    Ok(OpenStratumReport {
        scenario: s.id.clone(),
        n_samples: n,
        n_converged: conv,
        open_label: open,
        open_fraction: frac,
        fraction_bound,
        n_strata_with_open_fraction: dense,
        witnesses_tried: tried,
        witnesses_found: found,
        max_witness_residual: worst,
        pass: frac > fraction_bound && dense == 1 && zero_label && found == tried,
    })
}
