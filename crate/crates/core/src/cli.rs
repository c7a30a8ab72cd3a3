//! Batch runner. A JSON configuration binds a scenario to a command; a run
//! writes `<prefix>report.json` and CSV plot data next to it.
//!
//! Exit status: 0 when every check passes, 1 on a check failure, 2 on a
//! configuration error, 3 on an internal error.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Parser;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::action::{check_invariance, GroupAction, Tensor};
use crate::convexity::{moment_polytope, orbit_closure_polytope, write_image_csv, Polytope};
use crate::error::{Error, Result};
use crate::flow::{
    cluster_labels, hessian_index, integrate_negative_gradient, stratum_label, verify_open_stratum_properties,
    FlowFunction, FlowMethod, FlowOptions,
};
use crate::kempfness::{kn_cocycle_residual, kn_convexity_check, moment_weight_check};
use crate::moment::{check_gradient_identity, check_momentumly_closed, moment_differential_image};
use crate::reduction::{
    ce_verify_reduction, check_reduced_complex_structure, conformal_pair, dh_variation, exact_pair, identical_pair,
    minimal_coupling_form, moser_flow, quotient_scenario_check, reduced_form_sample, sample_level_set_with,
    transport_audit, write_reduced_csv, HorizontalChoice, MoserOptions, MoserPair,
};
use crate::report::{max_dev, stream, CheckReport};
use crate::scenarios::{gaussian, hopf_bundle, trivial_bundle, CalabiEckmannParams, Catalog, SampleKind, Scenario, HOPF_QUOTIENT_ID};
use crate::tolerances::Tolerances;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Verify,
    Polytope,
    OrbitPolytope,
    Flow,
    Stratify,
    Kn,
    Weights,
    Reduce,
    Dh,
    Moser,
    Quotient,
    Ce,
}

/// A scenario id, optionally with construction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Id(String),
    WithParams {
        id: String,
        #[serde(default)]
        params: Value,
    },
}

impl ScenarioRef {
    pub fn id(&self) -> &str {
        match self {
            ScenarioRef::Id(id) | ScenarioRef::WithParams { id, .. } => id,
        }
    }

    fn params(&self) -> Value {
        match self {
            ScenarioRef::WithParams { params, .. } if !params.is_null() => params.clone(),
            _ => json!({}),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioSelection {
    One(ScenarioRef),
    Many(Vec<ScenarioRef>),
}

impl ScenarioSelection {
    fn refs(&self) -> Vec<ScenarioRef> {
        match self {
            ScenarioSelection::One(r) => vec![r.clone()],
            ScenarioSelection::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Required by every command except `moser`.
    #[serde(default)]
    pub scenario: Option<ScenarioSelection>,
    pub command: Command,
    #[serde(default = "empty_object")]
    pub params: Value,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub output: Option<String>,
}

fn empty_object() -> Value {
    json!({})
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("bad configuration: {e}")))
    }

    pub fn tolerances(&self) -> Result<Tolerances> {
        let mut t = Tolerances::default();
        for (k, &v) in &self.tolerances {
            if !(v > 0.0) {
                return Err(Error::Config(format!("tolerance override {k} must be positive")));
            }
            t.set(k, v)?;
        }
        Ok(t)
    }

    /// Scenarios built with the configured tolerances.
    pub fn scenarios(&self) -> Result<Vec<Scenario>> {
        let tol = self.tolerances()?;
        let catalog = Catalog::builtin();
        let refs = self.scenario.as_ref().map(|s| s.refs()).unwrap_or_default();
        refs.iter().map(|r| catalog.build_with(r.id(), &r.params(), tol)).collect()
    }
}

/// Exit status for an error raised while running a command.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::UnknownScenario(_) | Error::DuplicateName(_) | Error::DimensionMismatch(_) => 2,
        Error::ContainmentViolation(_)
        | Error::FitResidualTooLarge(_)
        | Error::SlabTooLarge(_)
        | Error::NotWellDefined(_)
        | Error::NotComplexInvariant(_)
        | Error::DegenerateInterpolation(_)
        | Error::MonotonicityViolation(_)
        | Error::IncompleteEnumeration
        | Error::LoopHolonomy(_)
        | Error::NotInvariant(_)
        | Error::SeedExhausted
        | Error::NotRegular
        | Error::InfiniteIsotropy
        | Error::ClusterAmbiguity
        | Error::AmbiguousMinimum
        | Error::LimitUnresolved
        | Error::NoPlateau
        | Error::Borderline
        | Error::Unconverged
        | Error::MaxTimeExceeded
        | Error::NotCritical(_)
        | Error::SpectralGapTooSmall(_)
        | Error::BorderlineRank(_)
        | Error::WNotPoint => 1,
        _ => 3,
    }
}

/// Report and plot data of one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: Value,
    pub pass: bool,
    /// (file name, CSV contents), written under the output prefix.
    pub files: Vec<(String, Vec<u8>)>,
}

impl RunOutput {
    pub fn report_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.report).expect("report values serialize");
        s.push('\n');
        s
    }

    pub fn write(&self, prefix: &str) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        let path = |name: &str| PathBuf::from(format!("{prefix}{name}"));
        let report = path("report.json");
        if let Some(dir) = report.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&report, self.report_text())?;
        written.push(report);
        for (name, bytes) in &self.files {
            let p = path(name);
            std::fs::write(&p, bytes)?;
            written.push(p);
        }
        Ok(written)
    }
}

struct Params<'a> {
    map: &'a Map<String, Value>,
}

impl<'a> Params<'a> {
    fn new(v: &'a Value, allowed: &[&str]) -> Result<Self> {
        let map = v.as_object().ok_or_else(|| Error::Config("params must be an object".into()))?;
        if let Some(k) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown parameter {k}; expected one of {allowed:?}")));
        }
        Ok(Params { map })
    }

    fn usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v.as_u64().map(|x| x as usize).ok_or_else(|| Error::Config(format!("{key} must be a nonnegative integer"))),
        }
    }

    fn f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v.as_f64().ok_or_else(|| Error::Config(format!("{key} must be a number"))),
        }
    }

    fn positive(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.f64(key, default)?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("{key} must be positive")));
        }
        Ok(v)
    }

    fn f64_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.map.get(key) {
            None => Ok(default.to_vec()),
            Some(Value::Number(n)) => Ok(vec![n.as_f64().unwrap_or(f64::NAN)]),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| v.as_f64().ok_or_else(|| Error::Config(format!("{key} must hold numbers"))))
                .collect(),
            Some(_) => Err(Error::Config(format!("{key} must be a number or a list of numbers"))),
        }
    }

    fn str_list(&self, key: &str) -> Result<Option<Vec<String>>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| v.as_str().map(String::from).ok_or_else(|| Error::Config(format!("{key} must hold strings"))))
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(_) => Err(Error::Config(format!("{key} must be a list of strings"))),
        }
    }

    fn str(&self, key: &str, default: &str) -> Result<String> {
        match self.map.get(key) {
            None => Ok(default.to_string()),
            Some(v) => v.as_str().map(String::from).ok_or_else(|| Error::Config(format!("{key} must be a string"))),
        }
    }

    fn get(&self, key: &str) -> Option<&Value> {
        self.map.get(key)
    }
}

fn to_value<T: Serialize>(t: &T) -> Result<Value> {
    serde_json::to_value(t).map_err(|e| Error::Internal(e.to_string()))
}

/// A per-scenario entry: check-type errors become failed entries, the rest
/// propagate.
fn entry(id: &str, res: Result<(Value, bool)>) -> Result<(Value, bool)> {
    match res {
        Ok(v) => Ok(v),
        Err(e) if exit_code(&e) == 1 => Ok((json!({"scenario": id, "error": e.to_string(), "pass": false}), false)),
        Err(e) => Err(e),
    }
}

fn checks_entry(id: &str, checks: Vec<CheckReport>, extra: Value) -> Result<(Value, bool)> {
    let pass = checks.iter().all(|c| c.pass);
    let mut v = json!({"scenario": id, "checks": to_value(&checks)?, "pass": pass});
    if let (Value::Object(m), Value::Object(e)) = (&mut v, extra) {
        m.extend(e);
    }
    Ok((v, pass))
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Run a configuration. Nothing is written to disk.
pub fn run(config: &ScenarioConfig) -> Result<RunOutput> {
    let scenarios = config.scenarios()?;
    if scenarios.is_empty() && config.command != Command::Moser {
        return Err(Error::Config(format!("command {:?} needs a scenario", config.command)));
    }
    let seed = config.seed;
    let p = &config.params;
    let sink = Sink::default();
    let (results, pass) = match config.command {
        Command::Verify => collect(&scenarios, |s| verify(s, p, seed))?,
        Command::Polytope => {
            let pr = Params::new(p, &["n"])?;
            let n = pr.usize("n", 1000)?;
            collect(&scenarios, |s| {
                let mp = moment_polytope(s, n, seed)?;
                let mut buf = Vec::new();
                write_image_csv(&mut buf, &mp.image)?;
                sink.push(format!("image_{}.csv", s.id), buf);
                let mut v = to_value(&mp)?;
                v["vertices"] = to_value(&mp.polytope.vertex_vectors().iter().map(vec_of).collect::<Vec<_>>())?;
                let pass = mp.violations == 0 && mp.coverage_pass;
                v["pass"] = json!(pass);
                Ok((v, pass))
            })?
        }
        Command::OrbitPolytope => {
            let pr = Params::new(p, &["n_points", "n_audit", "vertex_tol"])?;
            let (n, n_audit, vtol) = (pr.usize("n_points", 20)?, pr.usize("n_audit", 50)?, pr.positive("vertex_tol", 1e-4)?);
            collect(&scenarios, |s| orbit_polytopes(s, n, n_audit, vtol, seed))?
        }
        Command::Flow => collect(&scenarios, |s| flows(s, p, seed, &sink))?,
        Command::Stratify => collect(&scenarios, |s| stratify(s, p, seed))?,
        Command::Kn => collect(&scenarios, |s| kempf_ness(s, p, seed))?,
        Command::Weights => collect(&scenarios, |s| weights(s, p, seed))?,
        Command::Reduce => collect(&scenarios, |s| reduce(s, p, seed, &sink))?,
        Command::Dh => {
            let pr = Params::new(p, &["levels", "fit_tol"])?;
            let grid: Vec<f64> = (0..9).map(|i| -1.0 + 0.1 * i as f64).collect();
            let (levels, fit_tol) = (pr.f64_list("levels", &grid)?, pr.positive("fit_tol", 1e-3)?);
            collect(&scenarios, |s| {
                let rep = dh_variation(s, &levels, fit_tol)?;
                let mut buf = b"level,area\n".to_vec();
                for (l, a) in rep.levels.iter().zip(&rep.areas) {
                    buf.extend(format!("{l:e},{a:e}\n").into_bytes());
                }
                sink.push(format!("dh_{}.csv", s.id), buf);
                Ok((to_value(&rep)?, rep.pass))
            })?
        }
        Command::Moser => moser(p, seed)?,
        Command::Quotient => {
            let pr = Params::new(p, &["n", "tol"])?;
            let (n, tol) = (pr.usize("n", 50)?, pr.positive("tol", 1e-6)?);
            collect(&scenarios, |s| {
                let rep = quotient_scenario_check(s, n, seed, tol)?;
                Ok((to_value(&rep)?, rep.pass))
            })?
        }
        Command::Ce => collect(&scenarios, |s| calabi_eckmann(s, p, seed))?,
    };
    let report = json!({
        "report_version": REPORT_VERSION,
        "command": config.command,
        "config": config,
        "pass": pass,
        "results": results,
    });
    Ok(RunOutput { report, pass, files: sink.0.into_inner() })
}

/// CSV outputs collected during a run.
#[derive(Default)]
struct Sink(RefCell<Vec<(String, Vec<u8>)>>);

impl Sink {
    fn push(&self, name: String, bytes: Vec<u8>) {
        self.0.borrow_mut().push((name, bytes));
    }
}

/// Scenarios are processed in order on the calling thread; parallelism
/// lives inside the operations.
fn collect<F>(scenarios: &[Scenario], f: F) -> Result<(Vec<Value>, bool)>
where
    F: Fn(&Scenario) -> Result<(Value, bool)>,
{
    let mut out = Vec::new();
    let mut all = true;
    for s in scenarios {
        let (mut v, pass) = entry(&s.id, f(s))?;
        if let Value::Object(m) = &mut v {
            m.entry("scenario").or_insert_with(|| json!(s.id));
            m.insert("scenario_params".into(), s.params.clone());
        }
        all &= pass;
        out.push(v);
    }
    Ok((out, all))
}

const VERIFY_CHECKS: &[&str] =
    &["momentumly_closed", "gradient_identity", "hermitian_triple", "invariance", "differential_image", "minimal_coupling"];

fn coupling_of(id: &str) -> Option<(crate::reduction::PrincipalBundle, f64)> {
    match id {
        "hopf-s3" => Some((hopf_bundle(), 1.0)),
        HOPF_QUOTIENT_ID => Some((hopf_bundle(), -1.0)),
        "trivial-coupling" => Some((trivial_bundle(), 1.0)),
        _ => None,
    }
}

fn verify(s: &Scenario, p: &Value, seed: u64) -> Result<(Value, bool)> {
    let pr = Params::new(p, &["checks", "n", "n_image", "tol", "slab_radius"])?;
    let n = pr.usize("n", 1000)?;
    let n_image = pr.usize("n_image", 200)?;
    let tol = pr.positive("tol", 1e-6)?;
    let slab = pr.positive("slab_radius", 0.2)?;
    let requested = pr.str_list("checks")?;
    if let Some(r) = &requested {
        if let Some(bad) = r.iter().find(|c| !VERIFY_CHECKS.contains(&c.as_str())) {
            return Err(Error::Config(format!("unknown check {bad}; expected one of {VERIFY_CHECKS:?}")));
        }
    }
    let coupling = coupling_of(&s.id);
    let applicable = |c: &str| match c {
        "gradient_identity" | "hermitian_triple" | "invariance" => s.triple.is_some(),
        "minimal_coupling" => coupling.is_some(),
        _ => true,
    };
    let wanted: Vec<&str> = match &requested {
        Some(r) => {
            if let Some(c) = r.iter().find(|c| !applicable(c)) {
                return Err(Error::Config(format!("check {c} does not apply to {}", s.id)));
            }
            r.iter().map(|c| c.as_str()).collect()
        }
        None => VERIFY_CHECKS.iter().copied().filter(|c| applicable(c)).collect(),
    };
    let samples = s.samples(seed, n, SampleKind::Uniform);
    let mut checks = Vec::new();
    let mut extra = Map::new();
    for c in wanted {
        match c {
            "momentumly_closed" => {
                checks.push(check_momentumly_closed(&s.manifold, &s.omega, &s.action, &samples, seed, tol, &s.id));
            }
            "gradient_identity" => {
                let t = s.triple.as_ref().expect("applicable");
                checks.push(check_gradient_identity(t, s.action.as_ref(), &s.moment, &samples, tol, &s.id));
            }
            "hermitian_triple" => {
                let t = s.triple.as_ref().expect("applicable");
                let d: Vec<_> = samples.par_iter().map(|x| t.defects(x)).collect();
                let mut worst = Vec::new();
                let mut shortfall = Vec::new();
                for r in d {
                    match r {
                        Ok(d) => {
                            worst.push(d.j_squared.max(d.metric_asymmetry).max(d.omega_j_invariance));
                            shortfall.push((s.tol().sigma_min - d.metric_min_eigenvalue).max(0.0));
                        }
                        Err(_) => {
                            worst.push(f64::NAN);
                            shortfall.push(f64::NAN);
                        }
                    }
                }
                checks.push(CheckReport::new("hermitian_triple", &s.id, n, max_dev(&worst), tol));
                checks.push(CheckReport::new("metric_positive", &s.id, n, max_dev(&shortfall), 0.0));
            }
            "invariance" => {
                let t = s.triple.as_ref().expect("applicable");
                let a = s.action.as_ref();
                checks.push(check_invariance(Tensor::Form(&s.omega), a, &s.manifold, &samples, seed, tol, &s.id));
                checks.push(check_invariance(Tensor::Metric(t), a, &s.manifold, &samples, seed, tol, &s.id));
                checks.push(check_invariance(Tensor::ComplexStructure(t), a, &s.manifold, &samples, seed, tol, &s.id));
            }
            "differential_image" => {
                let mut pts = s.stratified(seed, n_image);
                pts.extend(s.fixed_points.iter().map(|f| f.point.clone()));
                let k = s.rank();
                let rows: Vec<(f64, f64, usize)> = pts
                    .par_iter()
                    .map(|x| match moment_differential_image(&s.manifold, s.action.as_ref(), &s.moment, x, s.tol().eps_iso) {
                        Ok(d) => (if d.rank_matches(k) { 0.0 } else { 1.0 }, d.max_angle, d.isotropy_dim),
                        Err(_) => (1.0, f64::NAN, 0),
                    })
                    .collect();
                let mismatches: f64 = rows.iter().map(|r| r.0).sum();
                let angle = max_dev(&rows.iter().map(|r| r.1).filter(|a| !a.is_nan()).collect::<Vec<_>>());
                checks.push(CheckReport::new("differential_image_rank", &s.id, pts.len(), mismatches, 0.0));
                checks.push(CheckReport::new("differential_image_angle", &s.id, pts.len(), angle, 1e-4));
                let with_iso = rows.iter().filter(|r| r.2 > 0).count();
                extra.insert("points_with_isotropy".into(), json!(with_iso));
            }
            "minimal_coupling" => {
                let (bundle, orientation) = coupling.clone().expect("applicable");
                let c = minimal_coupling_form(bundle, orientation);
                checks.extend(c.bundle.check_invariants(n.min(200), seed, 1e-8));
                let pts: Vec<DVector<f64>> =
                    (0..n as u64).map(|i| c.sample(&mut stream(seed, i), slab)).collect();
                let action: Arc<dyn GroupAction> = c.action.clone();
                let mut mc = check_momentumly_closed(&c.manifold, &c.omega, &action, &pts, seed, tol, &s.id);
                mc.check = "coupling_momentumly_closed".into();
                checks.push(mc);
                let sigma = match c.slab_audit(slab, n.min(200), seed) {
                    Ok(v) => v,
                    Err(Error::SlabTooLarge(v)) => v,
                    Err(e) => return Err(e),
                };
                checks.push(CheckReport::new(
                    "coupling_slab_nondegenerate",
                    &s.id,
                    n.min(200),
                    (s.tol().sigma_min - sigma).max(0.0),
                    0.0,
                ));
                extra.insert("slab_radius".into(), json!(slab));
                extra.insert("slab_min_singular_value".into(), json!(sigma));
                checks.push(c.moment_audit(slab, n.min(200), seed, tol));
            }
            _ => unreachable!("checked above"),
        }
    }
    checks_entry(&s.id, checks, Value::Object(extra))
}

/// Hull of Psi(e_j) over the coordinate lines that m does not miss, for
/// the diagonal torus actions on projective space.
fn weight_support_oracle(s: &Scenario, m: &DVector<f64>) -> Option<Vec<DVector<f64>>> {
    if !matches!(s.id.as_str(), "cp2-weights" | "torus-cp1") {
        return None;
    }
    let p = crate::scenarios::to_herm(m);
    Some(
        s.fixed_points
            .iter()
            .filter(|f| {
                let e = crate::scenarios::to_herm(&f.point);
                let j = (0..e.nrows()).find(|&j| e[(j, j)].re > 0.5).expect("coordinate projector");
                p[(j, j)].re > 1e-12
            })
            .map(|f| s.moment.eval(&f.point))
            .collect(),
    )
}

fn vertex_distance(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    let one = |x: &[DVector<f64>], y: &[DVector<f64>]| {
        x.iter().map(|u| y.iter().map(|v| (u - v).norm()).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
    };
    one(a, b).max(one(b, a))
}

fn orbit_polytopes(s: &Scenario, n: usize, n_audit: usize, vtol: f64, seed: u64) -> Result<(Value, bool)> {
    let points = s.samples(seed, n, SampleKind::Uniform);
    let mut rows = Vec::new();
    let mut worst_vertex: f64 = 0.0;
    let mut worst_escape: f64 = 0.0;
    let mut oracle_used = false;
    for (i, m) in points.iter().enumerate() {
        let op = orbit_closure_polytope(s, m, n_audit, seed.wrapping_add(i as u64 + 1))?;
        let vertices = op.polytope.vertex_vectors();
        let mut row = json!({
            "index": i,
            "vertices": vertices.iter().map(vec_of).collect::<Vec<_>>(),
            "audit_max_escape": op.audit_max_escape,
        });
        if let Some(oracle) = weight_support_oracle(s, &DVector::from_vec(op.base.clone())) {
            let hull = Polytope::hull(&oracle, s.tol().r_cluster * 1e-3)?;
            let d = vertex_distance(&vertices, &hull.vertex_vectors());
            worst_vertex = worst_vertex.max(d);
            oracle_used = true;
            row["oracle_vertices"] = to_value(&hull.vertex_vectors().iter().map(vec_of).collect::<Vec<_>>())?;
            row["vertex_error"] = json!(d);
        }
        worst_escape = worst_escape.max(op.audit_max_escape);
        rows.push(row);
    }
    let mut checks = vec![CheckReport::new("orbit_audit_containment", &s.id, n * n_audit, worst_escape, s.tol().tol_hull)];
    if oracle_used {
        checks.push(CheckReport::new("orbit_vertices_match_weight_support", &s.id, n, worst_vertex, vtol));
    }
    checks_entry(&s.id, checks, json!({"points": rows}))
}

fn flow_options(s: &Scenario, method: &str) -> Result<FlowOptions> {
    let m = match method {
        "orbit" => FlowMethod::Orbit,
        "ambient" => FlowMethod::Ambient,
        other => return Err(Error::Config(format!("unknown flow method {other}"))),
    };
    Ok(FlowOptions::from_tolerances(s.tol()).with_method(m))
}

fn flows(s: &Scenario, p: &Value, seed: u64, sink: &Sink) -> Result<(Value, bool)> {
    let pr = Params::new(p, &["function", "n", "method", "record_every"])?;
    let fun = match pr.get("function") {
        None => FlowFunction::NormSquare,
        Some(Value::String(f)) if f == "norm-square" => FlowFunction::NormSquare,
        Some(Value::Object(o)) if o.len() == 1 && o.contains_key("psi_xi") => {
            let xi: Vec<f64> = serde_json::from_value(o["psi_xi"].clone()).map_err(|e| Error::Config(format!("psi_xi: {e}")))?;
            if xi.len() != s.rank() {
                return Err(Error::Config(format!("psi_xi needs {} entries", s.rank())));
            }
            FlowFunction::PsiXi(xi)
        }
        Some(other) => return Err(Error::Config(format!("function must be \"norm-square\" or {{\"psi_xi\": [...]}}, got {other}"))),
    };
    let n = pr.usize("n", 10)?;
    let mut opts = flow_options(s, &pr.str("method", "ambient")?)?;
    opts.record_every = pr.usize("record_every", 10)?.max(1);
    let points = s.samples(seed, n, SampleKind::Uniform);
    let trajs: Vec<_> = points.par_iter().map(|x| integrate_negative_gradient(s, &fun, x, &opts)).collect();
    let mut rows = Vec::new();
    let mut all = true;
    let mut increase: f64 = 0.0;
    for (i, t) in trajs.iter().enumerate() {
        match t {
            Ok(t) => {
                all &= t.converged;
                increase = increase.max(t.max_increase());
                rows.push(json!({
                    "index": i,
                    "converged": t.converged,
                    "steps": t.steps,
                    "t_final": t.times.last(),
                    "final_value": t.values.last(),
                    "terminal_grad_norm": t.terminal_grad_norm,
                    "limit": vec_of(t.last_point()),
                    "moment_at_limit": vec_of(&s.moment.eval(t.last_point())),
                }));
                if i == 0 {
                    let mut buf = Vec::new();
                    t.write_csv(&mut buf)?;
                    sink.push(format!("flow_{}.csv", s.id), buf);
                }
            }
            Err(e) if exit_code(e) == 1 => {
                all = false;
                rows.push(json!({"index": i, "error": e.to_string()}));
            }
            Err(e) => return Err(e.clone()),
        }
    }
    let checks = vec![
        CheckReport::new("flow_monotone", &s.id, n, increase, s.tol().eps_num),
        CheckReport::new("flow_converged", &s.id, n, if all { 0.0 } else { 1.0 }, 0.0),
    ];
    checks_entry(&s.id, checks, json!({"function": fun, "trajectories": rows}))
}

fn stratify(s: &Scenario, p: &Value, seed: u64) -> Result<(Value, bool)> {
    let pr = Params::new(p, &["n", "min_agreement", "n_open", "open_fraction", "n_witness", "method"])?;
    let n = pr.usize("n", 500)?;
    let min_agreement = pr.positive("min_agreement", 0.99)?;
    let n_open = pr.usize("n_open", 100)?;
    let open_fraction = pr.positive("open_fraction", 0.9)?;
    let n_witness = pr.usize("n_witness", 10)?;
    let opts = flow_options(s, &pr.str("method", "orbit")?)?;
    let oracle = s
        .basin_label
        .clone()
        .ok_or_else(|| Error::Config(format!("{} has no analytic basin oracle", s.id)))?;
    let r = s.tol().r_cluster;
    // draw until n flows converge, at most 2n draws
    let mut labels = Vec::new();
    let mut drawn = 0;
    let mut batch = n + n / 5 + 1;
    while labels.len() < n && drawn < 2 * n.max(1) {
        let pts: Vec<DVector<f64>> = (drawn..drawn + batch)
            .map(|i| {
                let mut rng = stream(seed, i as u64);
                let kind = stratified_kind(&mut rng);
                s.draw(&mut rng, kind)
            })
            .collect();
        let res: Vec<_> = pts.par_iter().map(|x| stratum_label(s, x, &opts)).collect();
        for (x, l) in pts.into_iter().zip(res) {
            if labels.len() < n {
                if let Ok(l) = l {
                    labels.push((x, l));
                }
            }
        }
        drawn += batch;
        batch = (n - labels.len()).max(1);
    }
    let agree = labels.iter().filter(|(x, l)| (&l.lambda - oracle(x)).norm() <= r).count();
    let fraction = if labels.is_empty() { 0.0 } else { agree as f64 / labels.len() as f64 };
    let lambdas: Vec<DVector<f64>> = labels.iter().map(|(_, l)| l.lambda.clone()).collect();
    let (reps, assign) = cluster_labels(&lambdas, r);
    let mut crit_points: Vec<DVector<f64>> = s.fixed_points.iter().map(|f| f.point.clone()).collect();
    for c in 0..reps.len() {
        let first = assign.iter().position(|&a| a == c).expect("cluster has a member");
        crit_points.push(labels[first].1.limit_point.clone());
    }
    let hess: Vec<_> = crit_points.par_iter().map(|x| hessian_index(s, &FlowFunction::NormSquare, x)).collect();
    let mut indices = Vec::new();
    let mut odd_or_failed = 0usize;
    for h in &hess {
        match h {
            Ok(h) => {
                indices.push(json!(h.hessian_index));
                odd_or_failed += h.hessian_index % 2;
            }
            Err(e) => {
                indices.push(json!(e.to_string()));
                odd_or_failed += 1;
            }
        }
    }
    let open = verify_open_stratum_properties(s, n_open, seed, open_fraction, n_witness, &opts)?;
    let checks = vec![
        CheckReport::new("basin_oracle_agreement", &s.id, labels.len(), 1.0 - fraction, 1.0 - min_agreement),
        CheckReport::new("converged_samples", &s.id, drawn, (n - labels.len()) as f64, 0.0),
        CheckReport::new("hessian_indices_even", &s.id, crit_points.len(), odd_or_failed as f64, 0.0),
        CheckReport::new(
            "unique_open_stratum",
            &s.id,
            n_open,
            (open.n_strata_with_open_fraction as f64 - 1.0).abs() + if open.pass { 0.0 } else { 1.0 },
            0.0,
        ),
    ];
    let extra = json!({
        "agreement": fraction,
        "n_converged": labels.len(),
        "n_drawn": drawn,
        "critical_values": reps.iter().map(vec_of).collect::<Vec<_>>(),
        "hessian_indices": indices,
        "open_stratum": to_value(&open)?,
    });
    checks_entry(&s.id, checks, extra)
}

/// Same mixture as Scenario::stratified.
fn stratified_kind(rng: &mut rand_chacha::ChaCha8Rng) -> SampleKind {
    use rand::Rng;
    let u: f64 = rng.gen();
    if u < 0.5 {
        SampleKind::Uniform
    } else if u < 0.8 {
        SampleKind::NearFixed
    } else {
        SampleKind::LowerStratum
    }
}

fn kempf_ness(s: &Scenario, p: &Value, seed: u64) -> Result<(Value, bool)> {
    let pr = Params::new(p, &["n", "h", "steps", "tol"])?;
    let n = pr.usize("n", 100)?;
    let h = pr.positive("h", 0.25)?;
    let steps = pr.usize("steps", 12)?;
    let tol = pr.positive("tol", 1e-8)?;
    let k = s.rank();
    let rows: Vec<Result<(f64, f64)>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i);
            let m = s.draw(&mut rng, SampleKind::Uniform);
            let xi = gaussian(&mut rng, k);
            let eta = gaussian(&mut rng, k);
            let conv = kn_convexity_check(s, &m, &xi, h, steps, tol)?;
            Ok((conv.min_second_difference, kn_cocycle_residual(s, &m, &xi, &eta)?))
        })
        .collect();
    let mut msd = f64::INFINITY;
    let mut cocycle = Vec::new();
    for r in rows {
        let (a, b) = r?;
        msd = msd.min(a);
        cocycle.push(b);
    }
    let checks = vec![
        CheckReport::new("kn_second_differences", &s.id, n, (-msd).max(0.0), tol),
        CheckReport::new("kn_cocycle", &s.id, n, max_dev(&cocycle), tol),
    ];
    checks_entry(&s.id, checks, json!({"min_second_difference": msd, "h": h, "steps": steps}))
}

fn weights(s: &Scenario, p: &Value, seed: u64) -> Result<(Value, bool)> {
    let pr = Params::new(p, &["n", "tol", "kind"])?;
    let n = pr.usize("n", 100)?;
    let tol = pr.positive("tol", 1e-4)?;
    let kind = match pr.str("kind", "lower-stratum")?.as_str() {
        "lower-stratum" => SampleKind::LowerStratum,
        "uniform" => SampleKind::Uniform,
        "near-fixed" => SampleKind::NearFixed,
        other => return Err(Error::Config(format!("unknown sample kind {other}"))),
    };
    let opts = FlowOptions::from_tolerances(s.tol()).with_method(FlowMethod::Orbit);
    let reps: Vec<_> = (0..n as u64).into_par_iter().map(|i| moment_weight_check(s, &s.sample(seed, i, kind), &opts, tol)).collect();
    let reps = reps.into_iter().collect::<Result<Vec<_>>>()?;
    let dev = max_dev(&reps.iter().map(|r| r.deviation).collect::<Vec<_>>());
    let dist = max_dev(&reps.iter().map(|r| r.weight_label_distance).collect::<Vec<_>>());
    let unstable = reps.iter().filter(|r| r.limit_norm > s.tol().r_cluster).count();
    let checks = vec![
        CheckReport::new("moment_weight_equality", &s.id, n, dev, tol),
        CheckReport::new("weight_equals_label", &s.id, n, dist, s.tol().r_cluster),
    ];
    checks_entry(&s.id, checks, json!({"n_unstable": unstable, "samples": to_value(&reps)?}))
}

fn reduce(s: &Scenario, p: &Value, seed: u64, sink: &Sink) -> Result<(Value, bool)> {
    let pr = Params::new(p, &["level", "n", "tol", "choice"])?;
    let level = DVector::from_vec(pr.f64_list("level", &vec![0.0; s.rank()])?);
    let n = pr.usize("n", 50)?;
    let tol = pr.positive("tol", 1e-8)?;
    let choice = match pr.str("choice", "orthogonal")?.as_str() {
        "orthogonal" => HorizontalChoice::Orthogonal,
        "unorthogonalized" => HorizontalChoice::Unorthogonalized,
        other => return Err(Error::Config(format!("unknown horizontal choice {other}"))),
    };
    let sample = sample_level_set_with(s, &level, n, seed, choice)?;
    let structure = check_reduced_complex_structure(s, &sample, tol)?;
    let transport = transport_audit(s, &sample, seed, tol);
    let reduced: Vec<_> = sample.points.par_iter().map(|lp| reduced_form_sample(s, lp)).collect::<Result<_>>()?;
    let mut buf = Vec::new();
    write_reduced_csv(&mut buf, &reduced)?;
    sink.push(format!("reduced_{}.csv", s.id), buf);
    let pass = structure.pass && transport.pass;
    let max_residual = sample.points.iter().map(|lp| lp.residual).fold(0.0, f64::max);
    Ok((
        json!({
            "level": vec_of(&level),
            "n_points": sample.points.len(),
            "seeds_used": sample.seeds_used,
            "max_level_residual": max_residual,
            "structure": to_value(&structure)?,
            "transport": to_value(&transport)?,
            "pass": pass,
        }),
        pass,
    ))
}

fn moser(p: &Value, seed: u64) -> Result<(Vec<Value>, bool)> {
    let pr = Params::new(p, &["pairs", "radius", "r_min", "n_samples", "steps", "tol"])?;
    let d = MoserOptions::default();
    let opts = MoserOptions {
        radius: pr.positive("radius", d.radius)?,
        r_min: pr.positive("r_min", d.r_min)?,
        n_samples: pr.usize("n_samples", d.n_samples)?,
        steps: pr.usize("steps", d.steps)?.max(1),
        seed,
        ..d
    };
    let tol = pr.positive("tol", 1e-5)?;
    let names = pr.str_list("pairs")?.unwrap_or_else(|| vec!["identical".into(), "conformal".into(), "exact".into()]);
    let pairs: Vec<MoserPair> = names
        .iter()
        .map(|n| match n.as_str() {
            "identical" => Ok(identical_pair()),
            "conformal" => Ok(conformal_pair(0.5)),
            "exact" => Ok(exact_pair(0.7, -0.4)),
            other => Err(Error::Config(format!("unknown Moser pair {other}"))),
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    let mut all = true;
    for pair in &pairs {
        let (v, pass) = entry(&pair.name, moser_flow(pair, &opts, tol).and_then(|r| Ok((to_value(&r)?, r.pass))))?;
        all &= pass;
        out.push(v);
    }
    Ok((out, all))
}

fn calabi_eckmann(s: &Scenario, p: &Value, seed: u64) -> Result<(Value, bool)> {
    if s.id != "calabi-eckmann" {
        return Err(Error::Config(format!("ce runs on calabi-eckmann, got {}", s.id)));
    }
    let pr = Params::new(p, &["taus", "levels", "n", "tol"])?;
    let base = CalabiEckmannParams::from_json(&s.params)?;
    let taus: Vec<[f64; 2]> = match pr.get("taus") {
        None => vec![[base.a, base.b]],
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("taus: {e}")))?,
    };
    let levels = pr.f64_list("levels", &[-1.0, 0.0, 1.0])?;
    let n = pr.usize("n", 200)?;
    let tol = pr.positive("tol", 1e-5)?;
    let mut runs = Vec::new();
    let mut all = true;
    let mut worst: f64 = 0.0;
    for [a, b] in taus {
        for &c in &levels {
            let params = CalabiEckmannParams { a, b, ..base };
            let (v, pass) = entry("calabi-eckmann", ce_verify_reduction(params, c, n, seed, tol).and_then(|r| {
                worst = worst.max(r.max_deviation);
                Ok((to_value(&r)?, r.pass))
            }))?;
            all &= pass;
            runs.push(v);
        }
    }
    Ok((json!({"runs": runs, "max_deviation": worst, "tolerance": tol, "pass": all}), all))
}

#[derive(Debug, Parser)]
#[command(name = "genmoment", version, about = "Run moment-map experiments from a JSON configuration")]
pub struct Args {
    /// Configuration file (JSON).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output path prefix; overrides the configuration.
    #[arg(long, value_name = "PREFIX")]
    pub out: Option<String>,
    /// Seed; overrides the configuration.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Tolerance override, repeatable.
    #[arg(long = "tol", value_name = "KEY=VAL")]
    pub tol: Vec<String>,
    /// Worker threads.
    #[arg(long, value_name = "N")]
    pub jobs: Option<usize>,
    /// Print the scenario catalog as JSON and exit.
    #[arg(long)]
    pub catalog: bool,
}

/// Configuration with command-line overrides applied.
pub fn resolve(args: &Args) -> Result<ScenarioConfig> {
    let path = args.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut cfg = ScenarioConfig::from_json(&text)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    for t in &args.tol {
        let (k, v) = t.split_once('=').ok_or_else(|| Error::Config(format!("expected KEY=VAL, got {t}")))?;
        let v: f64 = v.trim().parse().map_err(|_| Error::Config(format!("bad number in {t}")))?;
        cfg.tolerances.insert(k.trim().to_string(), v);
    }
    if let Some(o) = &args.out {
        cfg.output = Some(o.clone());
    }
    cfg.tolerances()?;
    Ok(cfg)
}

fn execute(args: &Args) -> Result<(RunOutput, Vec<PathBuf>)> {
    let cfg = resolve(args)?;
    let prefix = cfg.output.clone().unwrap_or_else(|| "out/".into());
    let go = || run(&cfg);
    let out = match args.jobs {
        Some(0) => return Err(Error::Config("--jobs must be positive".into())),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| Error::Internal(e.to_string()))?
            .install(go)?,
        None => go()?,
    };
    let written = out.write(&prefix)?;
    Ok((out, written))
}

/// Entry point of the binary; returns the exit status.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if args.catalog {
        return match Catalog::builtin().export_json() {
            Ok(v) => {
                println!("{}", serde_json::to_string_pretty(&v).expect("catalog serializes"));
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                3
            }
        };
    }
    let start = std::time::Instant::now();
    match execute(&args) {
        Ok((out, written)) => {
            for p in &written {
                eprintln!("wrote {}", p.display());
            }
            println!("{} ({:.2} s)", if out.pass { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64());
            if out.pass {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Read and run a configuration file without writing anything.
pub fn run_file(path: &Path) -> Result<RunOutput> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    run(&ScenarioConfig::from_json(&text)?)
}
