//! Built-in scenarios with analytic ground truth, and the catalog that
//! names them.

mod calabi_eckmann;
mod coupling;
mod linear;
mod projective;
mod sphere;

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

pub use calabi_eckmann::{CalabiEckmann, CalabiEckmannParams, CeAction};
pub use coupling::{hopf_bundle, trivial_bundle, HOPF_QUOTIENT_ID};
pub use linear::{conformal_c2, diag_c2, s1_on_c, t2_c2};
pub use projective::{
    cp_n, from_herm, point_from_z, to_herm, ProjectiveTorusAction, RankOneProjector,
};
pub use sphere::{sphere_product, SphereRotations};

use crate::action::{random_tangent, GroupAction};
use crate::error::{Error, Result};
use crate::manifold::{EmbeddedManifold, HermitianTriple, TwoForm};
use crate::moment::MomentMap;
use crate::report::stream;
use crate::tolerances::Tolerances;

/// Which part of M a sampler should draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SampleKind {
    Uniform,
    NearFixed,
    LowerStratum,
}

pub type Sampler = Arc<dyn Fn(&mut ChaCha8Rng, SampleKind) -> DVector<f64> + Send + Sync>;
pub type Labeler = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// An isolated fixed point with the weights of the isotropy representation
/// on its tangent space. A weight w on a complex line means the circle
/// exp(t xi) acts there by exp(-i <w, xi> t) relative to J, so the local
/// model moment map is Psi(p) + sum |v_j|^2 / 2 * w_j.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub point: DVector<f64>,
    pub weights: Vec<DVector<f64>>,
}

#[derive(Clone)]
pub struct Scenario {
    pub id: String,
    pub params: Value,
    pub manifold: EmbeddedManifold,
    pub action: Arc<dyn GroupAction>,
    pub omega: TwoForm,
    pub triple: Option<HermitianTriple>,
    pub moment: MomentMap,
    pub compact: bool,
    pub fixed_points: Vec<FixedPoint>,
    pub base_point: DVector<f64>,
    pub base_value: DVector<f64>,
    /// Analytic stratum label: Psi at the limit of the norm-square flow.
    pub basin_label: Option<Labeler>,
    pub sampler: Sampler,
    pub notes: String,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario").field("id", &self.id).field("params", &self.params).finish()
    }
}

/// Catalog entry exported as JSON.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioSummary {
    pub id: String,
    pub params: Value,
    pub ambient_dim: usize,
    pub dim: usize,
    pub rank: usize,
    pub compact: bool,
    pub has_triple: bool,
    pub fixed_points: Vec<Vec<f64>>,
    pub fixed_values: Vec<Vec<f64>>,
    pub base_value: Vec<f64>,
    pub notes: String,
}

impl Scenario {
    pub fn rank(&self) -> usize {
        self.action.rank()
    }

    pub fn tol(&self) -> &Tolerances {
        &self.manifold.tol
    }

    /// One sample of the given kind from stream (seed, index). Raw draws
    /// that fail to project are redrawn from the same stream.
    pub fn sample(&self, seed: u64, index: u64, kind: SampleKind) -> DVector<f64> {
        let mut rng = stream(seed, index);
        self.draw(&mut rng, kind)
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng, kind: SampleKind) -> DVector<f64> {
        for _ in 0..100 {
            let raw = match kind {
                SampleKind::NearFixed if !self.fixed_points.is_empty() => self.near_fixed(rng),
                SampleKind::NearFixed => (self.sampler)(rng, SampleKind::Uniform),
                k => (self.sampler)(rng, k),
            };
            if let Ok(p) = self.manifold.project(&raw) {
                return p.coords;
            }
        }
        panic!("scenario {} sampler failed to produce a point", self.id);
    }

    fn near_fixed(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let fp = &self.fixed_points[rng.gen_range(0..self.fixed_points.len())];
        let r = 10f64.powf(rng.gen_range(-3.0..-0.5));
        match random_tangent(&self.manifold, &fp.point, rng) {
            Ok(v) => &fp.point + v * r,
            Err(_) => fp.point.clone(),
        }
    }

    pub fn samples(&self, seed: u64, n: usize, kind: SampleKind) -> Vec<DVector<f64>> {
        (0..n as u64).map(|i| self.sample(seed, i, kind)).collect()
    }

    /// Mixture of uniform, near-fixed-point and lower-stratum samples.
    pub fn stratified(&self, seed: u64, n: usize) -> Vec<DVector<f64>> {
        (0..n as u64)
            .map(|i| {
                let mut rng = stream(seed, i);
                let u: f64 = rng.gen();
                let kind = if u < 0.5 {
                    SampleKind::Uniform
                } else if u < 0.8 {
                    SampleKind::NearFixed
                } else {
                    SampleKind::LowerStratum
                };
                self.draw(&mut rng, kind)
            })
            .collect()
    }

    pub fn fixed_values(&self) -> Vec<DVector<f64>> {
        self.fixed_points.iter().map(|f| self.moment.eval(&f.point)).collect()
    }

    pub fn summary(&self) -> ScenarioSummary {
        ScenarioSummary {
            id: self.id.clone(),
            params: self.params.clone(),
            ambient_dim: self.manifold.ambient_dim(),
            dim: self.manifold.dim(),
            rank: self.rank(),
            compact: self.compact,
            has_triple: self.triple.is_some(),
            fixed_points: self.fixed_points.iter().map(|f| f.point.iter().copied().collect()).collect(),
            fixed_values: self.fixed_values().iter().map(|v| v.iter().copied().collect()).collect(),
            base_value: self.base_value.iter().copied().collect(),
            notes: self.notes.clone(),
        }
    }

    /// Replace the tolerances on the manifold (and on the triple's copy).
    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.manifold.tol = tol;
        if let Some(t) = self.triple.as_mut() {
            t.manifold.tol = tol;
        }
        self
    }
}

pub type Factory = Arc<dyn Fn(&Value) -> Result<Scenario> + Send + Sync>;

/// Named scenario constructors.
#[derive(Clone, Default)]
pub struct Catalog {
    entries: BTreeMap<String, Factory>,
}

pub(crate) fn param_f64(params: &Value, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        None | Some(Value::Null) => Ok(default),
        Some(v) => v.as_f64().ok_or_else(|| Error::Config(format!("parameter {key} must be a number"))),
    }
}

pub(crate) fn param_usize(params: &Value, key: &str, default: usize) -> Result<usize> {
    match params.get(key) {
        None | Some(Value::Null) => Ok(default),
        Some(v) => v
            .as_u64()
            .map(|x| x as usize)
            .ok_or_else(|| Error::Config(format!("parameter {key} must be a nonnegative integer"))),
    }
}

impl Catalog {
    pub fn empty() -> Self {
        Catalog::default()
    }

    /// All built-in scenarios.
    pub fn builtin() -> Self {
        let mut c = Catalog::empty();
        c.register_builtins().expect("built-in names are distinct");
        c
    }

    fn register_builtins(&mut self) -> Result<()> {
        self.register("s1-rotation-s2", |_p| Ok(sphere_product(1)))?;
        self.register("t2-cp1xcp1", |_p| Ok(sphere_product(2)))?;
        self.register("torus-cp1", |p| {
            let offset = param_f64(p, "offset", 0.0)?;
            cp_n("torus-cp1", &[0.0, 1.0], offset)
        })?;
        self.register("cp2-weights", |p| {
            let offset = param_f64(p, "offset", 0.0)?;
            cp_n("cp2-weights", &[0.0, 1.0, 2.0], offset)
        })?;
        self.register("diag-c2", |_p| Ok(diag_c2()))?;
        self.register("t2-c2", |_p| Ok(t2_c2()))?;
        self.register("s1-c", |_p| Ok(s1_on_c()))?;
        self.register("conformal-c2", |p| Ok(conformal_c2(param_f64(p, "epsilon", 0.5)?)))?;
        self.register("hopf-s3", |_p| coupling::hopf_coupling_scenario())?;
        self.register(HOPF_QUOTIENT_ID, |_p| coupling::toric_quotient_scenario())?;
        self.register("trivial-coupling", |_p| coupling::trivial_coupling_scenario())?;
        self.register("calabi-eckmann", |p| {
            let params = CalabiEckmannParams::from_json(p)?;
            Ok(CalabiEckmann::new(params)?.scenario())
        })?;
        Ok(())
    }

    pub fn register(
        &mut self,
        name: &str,
        factory: impl Fn(&Value) -> Result<Scenario> + Send + Sync + 'static,
    ) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(Error::DuplicateName(name.to_string()));
        }
        self.entries.insert(name.to_string(), Arc::new(factory));
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn build(&self, name: &str, params: &Value) -> Result<Scenario> {
        let f = self.entries.get(name).ok_or_else(|| Error::UnknownScenario(name.to_string()))?;
        f(params)
    }

    pub fn build_with(&self, name: &str, params: &Value, tol: Tolerances) -> Result<Scenario> {
        Ok(self.build(name, params)?.with_tolerances(tol))
    }

    /// Every scenario with default parameters, summarised.
    pub fn export_json(&self) -> Result<Value> {
        let mut out = Vec::new();
        for name in self.entries.keys() {
            out.push(serde_json::to_value(self.build(name, &json!({}))?.summary()).map_err(|e| Error::Internal(e.to_string()))?);
        }
        Ok(Value::Array(out))
    }
}

/// Standard normal vector.
pub fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    use rand_distr::StandardNormal;
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Closest point to 0 of the interval [lo, hi].
pub(crate) fn clamp_zero(lo: f64, hi: f64) -> f64 {
    0.0f64.clamp(lo, hi)
}
