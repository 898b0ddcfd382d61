//! JSON scenarios: parse, validate, run, and write reports.
//!
//! A run writes `report.json` plus task-specific CSV or JSON artifacts into
//! its output directory. The report records every check with its threshold,
//! the tolerance set and seed, sha256 digests of the other artifacts, and a
//! hash over everything except the `timings` block.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::extension::{IdentityTolerances, KreinExtension};
use crate::hilbert::{GeneratorSpec, SelfAdjointGenerator};
use crate::inclusion::SolverOptions;
use crate::point3d::{self, GreenState, PointConfig};
use crate::relations::{ConvexFunction, MonotoneRelation, SampleBox, ScalarGraph};
use crate::report::{all_pass, Check};
use crate::rng;
use crate::semigroup::{self, EvolveOptions, Trajectory};
use crate::{Error, Matrix, Result, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Verify,
    Evolve,
    LadderMoreau,
    LadderTrace,
    #[serde(rename = "point3d_evolve")]
    Point3dEvolve,
    Equilibrium,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TraceSpec {
    /// Explicit rows.
    Matrix { rows: Vec<Vec<f64>> },
    /// Rows `e_i` for the listed indices.
    PointEval { indices: Vec<usize> },
    /// One-sided difference quotients `−u_1/h` and `−u_n/h` at the two ends of
    /// a `dirichlet_1d` grid.
    #[serde(rename = "robin_1d")]
    Robin1d,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    Quadratic { matrix: Vec<Vec<f64>> },
    Separable { graphs: Vec<ScalarGraph> },
    Norm { weight: f64 },
    Moreau { base: Box<FunctionSpec>, c: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RelationSpec {
    Linear { matrix: Vec<Vec<f64>> },
    Subdifferential { function: FunctionSpec },
    Componentwise { graphs: Vec<ScalarGraph> },
    Shifted {
        base: Box<RelationSpec>,
        point: Vec<f64>,
        value: Vec<f64>,
    },
    Yosida { base: Box<RelationSpec>, c: f64 },
    Perturbed { base: Box<RelationSpec>, shift: f64 },
    /// `∂I_{0}` in every coordinate.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialSpec {
    Values(Vec<f64>),
    Random { random: f64 },
    Named(NamedInitial),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedInitial {
    Equilibrium,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveSpec {
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub shift: bool,
    pub initial: InitialSpec,
    /// `φ` for energy tracking along the shifted flow.
    #[serde(default)]
    pub energy: Option<FunctionSpec>,
    /// Extra seeded initial states evolved alongside for the contraction check.
    #[serde(default)]
    pub pairs: usize,
}

fn default_h() -> f64 {
    EvolveOptions::default().h
}

fn default_horizon() -> f64 {
    EvolveOptions::default().horizon
}

impl EvolveSpec {
    fn options(&self) -> EvolveOptions {
        EvolveOptions {
            h: self.h,
            horizon: self.horizon,
            shift: self.shift,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSpec {
    /// Moreau parameters, or trace perturbation sizes `‖τ_n − τ‖`.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumSpec {
    #[serde(default = "default_window")]
    pub window: [usize; 2],
}

fn default_window() -> [usize; 2] {
    [100, 500]
}

impl Default for EquilibriumSpec {
    fn default() -> Self {
        EquilibriumSpec {
            window: default_window(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Point3dSpec {
    pub points: Vec<[f64; 3]>,
    pub initial: GreenState,
    pub h: f64,
    #[serde(default = "default_green_steps")]
    pub steps: usize,
    /// Add `|γ₀|·I` to the relation, making it of type `γ₀`.
    #[serde(default)]
    pub type_gamma0: bool,
    #[serde(default)]
    pub probes: Vec<[f64; 3]>,
    #[serde(default)]
    pub lambda_grid: Vec<f64>,
}

fn default_green_steps() -> usize {
    2
}

/// Thresholds applied by the checks; every key can be overridden.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub resolvent_identity: f64,
    pub weyl_identity: f64,
    pub symmetry: f64,
    pub monotonicity: f64,
    pub lipschitz: f64,
    pub coercivity: f64,
    pub linear_oracle: f64,
    pub round_trip: f64,
    pub subpotential: f64,
    pub contraction: f64,
    pub energy: f64,
    pub increment: f64,
    pub stationarity: f64,
    pub decay_rate: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let id = IdentityTolerances::default();
        Tolerances {
            resolvent_identity: id.resolvent_identity,
            weyl_identity: id.weyl_identity,
            symmetry: id.symmetry,
            monotonicity: id.monotonicity,
            lipschitz: id.lipschitz,
            coercivity: id.coercivity,
            linear_oracle: 1e-9,
            round_trip: 1e-8,
            subpotential: 1e-8,
            contraction: 1e-8,
            energy: 1e-10,
            increment: 1e-8,
            stationarity: 1e-9,
            decay_rate: 0.05,
        }
    }
}

impl Tolerances {
    fn identity(&self) -> IdentityTolerances {
        IdentityTolerances {
            resolvent_identity: self.resolvent_identity,
            weyl_identity: self.weyl_identity,
            symmetry: self.symmetry,
            monotonicity: self.monotonicity,
            lipschitz: self.lipschitz,
            coercivity: self.coercivity,
        }
    }

    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        let mut map = serde_json::to_value(*self)?;
        let obj = map.as_object_mut().expect("tolerances serialize to an object");
        if !obj.contains_key(key) {
            return Err(Error::InvalidScenario(vec![format!(
                "/tolerances/{key}: unknown tolerance"
            )]));
        }
        if !(value >= 0.0) {
            return Err(Error::InvalidScenario(vec![format!(
                "/tolerances/{key}: must be nonnegative"
            )]));
        }
        obj.insert(key.to_string(), json!(value));
        *self = serde_json::from_value(map)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub task: Task,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub generator: Option<GeneratorSpec>,
    #[serde(default)]
    pub trace: Option<TraceSpec>,
    /// `λ°`; defaults to `ω + 1`.
    #[serde(default)]
    pub base_shift: Option<f64>,
    #[serde(default)]
    pub relation: Option<RelationSpec>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub verify: Option<VerifySpec>,
    #[serde(default)]
    pub evolve: Option<EvolveSpec>,
    #[serde(default)]
    pub ladder: Option<LadderSpec>,
    #[serde(default)]
    pub equilibrium: Option<EquilibriumSpec>,
    #[serde(default)]
    pub point3d: Option<Point3dSpec>,
}

fn to_matrix(rows: &[Vec<f64>], pointer: &str) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::InvalidScenario(vec![format!(
            "{pointer}: expected a non-empty rectangular matrix"
        )]));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl FunctionSpec {
    pub fn build(&self) -> Result<ConvexFunction> {
        let f = match self {
            FunctionSpec::Quadratic { matrix } => ConvexFunction::Quadratic {
                matrix: to_matrix(matrix, "/function/matrix")?,
            },
            FunctionSpec::Separable { graphs } => ConvexFunction::Separable {
                graphs: graphs.clone(),
            },
            FunctionSpec::Norm { weight } => ConvexFunction::Norm { weight: *weight },
            FunctionSpec::Moreau { base, c } => ConvexFunction::Moreau {
                base: Box::new(base.build()?),
                c: *c,
            },
        };
        f.validate()?;
        Ok(f)
    }
}

impl RelationSpec {
    /// Builds the relation on a boundary space of dimension `dim`.
    pub fn build(&self, dim: usize) -> Result<MonotoneRelation> {
        let r = match self {
            RelationSpec::Linear { matrix } => MonotoneRelation::linear(to_matrix(matrix, "/relation/matrix")?)?,
            RelationSpec::Subdifferential { function } => MonotoneRelation::subdifferential(function.build()?)?,
            RelationSpec::Componentwise { graphs } => MonotoneRelation::componentwise(graphs.clone())?,
            RelationSpec::Shifted { base, point, value } => MonotoneRelation::shifted(
                base.build(dim)?,
                Vector::from_column_slice(point),
                Vector::from_column_slice(value),
            )?,
            RelationSpec::Yosida { base, c } => MonotoneRelation::yosida(base.build(dim)?, *c)?,
            RelationSpec::Perturbed { base, shift } => MonotoneRelation::perturbed(base.build(dim)?, *shift)?,
            RelationSpec::Zero => MonotoneRelation::zero(dim),
        };
        match r.dim() {
            Some(d) if d != dim => Err(Error::DimensionMismatch {
                expected: dim,
                found: d,
            }),
            _ => Ok(r),
        }
    }
}

impl TraceSpec {
    pub fn build(&self, generator: &GeneratorSpec, dim: usize) -> Result<Matrix> {
        match self {
            TraceSpec::Matrix { rows } => to_matrix(rows, "/trace/rows"),
            TraceSpec::PointEval { indices } => {
                if indices.is_empty() {
                    return Err(Error::InvalidScenario(vec!["/trace/indices: empty".into()]));
                }
                let mut t = Matrix::zeros(indices.len(), dim);
                for (row, &i) in indices.iter().enumerate() {
                    if i >= dim {
                        return Err(Error::InvalidScenario(vec![format!(
                            "/trace/indices/{row}: index {i} out of range for dimension {dim}"
                        )]));
                    }
                    t[(row, i)] = 1.0;
                }
                Ok(t)
            }
            TraceSpec::Robin1d => match *generator {
                GeneratorSpec::Dirichlet1d { n, h } if n >= 2 => {
                    let mut t = Matrix::zeros(2, n);
                    t[(0, 0)] = -1.0 / h;
                    t[(1, n - 1)] = -1.0 / h;
                    Ok(t)
                }
                _ => Err(Error::InvalidScenario(vec![
                    "/trace: robin_1d needs a dirichlet_1d generator with n >= 2".into(),
                ])),
            },
        }
    }
}

/// Turns a serde path into a JSON pointer.
fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{key}")),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

fn find_kind(v: &Value, kind: &str, at: &str) -> Option<String> {
    match v {
        Value::Object(map) => {
            if map.get("kind").and_then(Value::as_str) == Some(kind) {
                return Some(format!("{at}/kind"));
            }
            map.iter()
                .find_map(|(k, child)| find_kind(child, kind, &format!("{at}/{k}")))
        }
        Value::Array(items) => items
            .iter()
            .enumerate()
            .find_map(|(i, child)| find_kind(child, kind, &format!("{at}/{i}"))),
        _ => None,
    }
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| Error::InvalidScenario(vec![format!("/: invalid JSON: {e}")]))?;
    let scenario: Scenario = serde_path_to_error::deserialize(value.clone()).map_err(|e| {
        let mut ptr = pointer(e.path());
        let msg = e.inner().to_string();
        // Tagged enums hide the inner path; find the offending tag instead.
        if let Some(kind) = msg.strip_prefix("unknown variant `").and_then(|m| m.split('`').next()) {
            if let Some(found) = value.pointer(&ptr).and_then(|v| find_kind(v, kind, &ptr)) {
                ptr = found;
            }
        }
        Error::InvalidScenario(vec![format!("{ptr}: {msg}")])
    })?;
    let diags = scenario.diagnostics();
    if diags.is_empty() {
        Ok(scenario)
    } else {
        Err(Error::InvalidScenario(diags))
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    parse_scenario(&std::fs::read_to_string(path)?)
}

impl Scenario {
    /// Field-level problems, as `pointer: message` strings.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut d = Vec::new();
        let mut need = |present: bool, ptr: &str| {
            if !present {
                d.push(format!("{ptr}: required for task {:?}", self.task));
            }
        };
        if self.task != Task::Point3dEvolve {
            need(self.generator.is_some(), "/generator");
            need(self.trace.is_some(), "/trace");
        }
        need(self.relation.is_some(), "/relation");
        match self.task {
            Task::Verify => {
                need(self.verify.is_some(), "/verify");
                need(self.seed.is_some(), "/seed");
            }
            Task::Evolve | Task::Equilibrium => need(self.evolve.is_some(), "/evolve"),
            Task::LadderMoreau | Task::LadderTrace => {
                need(self.evolve.is_some(), "/evolve");
                need(self.ladder.is_some(), "/ladder");
            }
            Task::Point3dEvolve => need(self.point3d.is_some(), "/point3d"),
        }
        if let Some(ev) = &self.evolve {
            if !(ev.h > 0.0) {
                d.push("/evolve/h: must be positive".into());
            }
            if !(ev.horizon >= 0.0) {
                d.push("/evolve/horizon: must be nonnegative".into());
            }
            let random = matches!(ev.initial, InitialSpec::Random { .. }) || ev.pairs > 0;
            if random && self.seed.is_none() {
                d.push("/seed: required for random initial states".into());
            }
            if ev.energy.is_some() && !ev.shift {
                d.push("/evolve/energy: energy tracking needs the shifted flow (shift = true)".into());
            }
            if matches!(ev.initial, InitialSpec::Named(NamedInitial::Equilibrium)) && self.base_shift.is_none() {
                d.push("/base_shift: required when starting from the equilibrium".into());
            }
        }
        if self.task == Task::LadderTrace && self.seed.is_none() {
            d.push("/seed: required for task LadderTrace".into());
        }
        if self.task == Task::LadderMoreau && !matches!(self.relation, Some(RelationSpec::Subdifferential { .. })) {
            d.push("/relation/kind: ladder_moreau needs a subdifferential relation".into());
        }
        if let Some(l) = &self.ladder {
            if l.values.is_empty() {
                d.push("/ladder/values: empty".into());
            }
            for (i, v) in l.values.iter().enumerate() {
                if !(*v > 0.0) {
                    d.push(format!("/ladder/values/{i}: must be positive"));
                }
            }
        }
        if self.task == Task::Equilibrium && !matches!(self.base_shift, Some(b) if b < 0.0) {
            d.push("/base_shift: equilibrium needs an explicit negative base shift".into());
        }
        if let Some(p) = &self.point3d {
            if !(p.h > 0.0) {
                d.push("/point3d/h: must be positive".into());
            }
            for (i, l) in p.lambda_grid.iter().enumerate() {
                if !(*l > 0.0) {
                    d.push(format!("/point3d/lambda_grid/{i}: must be positive"));
                }
            }
        }
        if let Some(v) = &self.verify {
            if v.lambda_grid.is_empty() {
                d.push("/verify/lambda_grid: empty".into());
            }
            if let Some(l0) = self.resolved_base_shift() {
                for (i, l) in v.lambda_grid.iter().enumerate() {
                    if !(*l > l0) {
                        d.push(format!(
                            "/verify/lambda_grid/{i}: {l} must lie strictly above λ° = {l0}"
                        ));
                    }
                }
            }
        }
        d
    }

    fn resolved_base_shift(&self) -> Option<f64> {
        self.base_shift.or_else(|| {
            let g = SelfAdjointGenerator::assemble(self.generator.as_ref()?).ok()?;
            Some(g.lower_bound() + 1.0)
        })
    }

    /// Replaces the seed and individual tolerances.
    pub fn apply_overrides(&mut self, seed: Option<u64>, tolerances: &[(String, f64)]) -> Result<()> {
        if seed.is_some() {
            self.seed = seed;
        }
        for (k, v) in tolerances {
            self.tolerances.set(k, *v)?;
        }
        Ok(())
    }

    fn extension(&self) -> Result<KreinExtension> {
        let spec = self.generator.as_ref().ok_or_else(|| missing("/generator"))?;
        let generator = SelfAdjointGenerator::assemble(spec)?;
        let trace = self
            .trace
            .as_ref()
            .ok_or_else(|| missing("/trace"))?
            .build(spec, generator.dim())?;
        let l0 = self.base_shift.unwrap_or(generator.lower_bound() + 1.0);
        Ok(KreinExtension::build(generator, trace, l0)?.with_solver(self.solver))
    }

    fn relation(&self, dim: usize) -> Result<MonotoneRelation> {
        self.relation.as_ref().ok_or_else(|| missing("/relation"))?.build(dim)
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

fn missing(ptr: &str) -> Error {
    Error::InvalidScenario(vec![format!("{ptr}: missing")])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub task: Task,
    pub seed: Option<u64>,
    pub base_shift: Option<f64>,
    pub tolerances: Tolerances,
    pub solver: SolverOptions,
    pub checks: Vec<Check>,
    pub metrics: BTreeMap<String, Value>,
    /// sha256 of each artifact written next to the report.
    pub outputs: BTreeMap<String, String>,
    pub pass: bool,
    /// sha256 of the report with `hash` and `timings` removed.
    pub hash: String,
    pub timings: Timings,
}

impl Report {
    fn compute_hash(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        let obj = v.as_object_mut().expect("report serializes to an object");
        obj.remove("hash");
        obj.remove("timings");
        Ok(hex(&Sha256::digest(serde_json::to_vec(&v)?)))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

struct Outcome {
    checks: Vec<Check>,
    metrics: BTreeMap<String, Value>,
    files: Vec<(String, Vec<u8>)>,
    base_shift: Option<f64>,
}

impl Outcome {
    fn new(base_shift: Option<f64>) -> Self {
        Outcome {
            checks: Vec::new(),
            metrics: BTreeMap::new(),
            files: Vec::new(),
            base_shift,
        }
    }

    fn metric(&mut self, key: &str, v: impl Serialize) {
        self.metrics
            .insert(key.to_string(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    fn trajectory(&mut self, name: &str, t: &Trajectory) -> Result<()> {
        let mut buf = Vec::new();
        t.write_csv(&mut buf)?;
        self.files.push((name.to_string(), buf));
        Ok(())
    }
}

/// Runs a parsed scenario and writes its artifacts into `out_dir`.
pub fn run_scenario(s: &Scenario, out_dir: &Path) -> Result<Report> {
    let start = Instant::now();
    let outcome = match s.task {
        Task::Verify => run_verify(s),
        Task::Evolve => run_evolve(s),
        Task::LadderMoreau | Task::LadderTrace => run_ladder(s),
        Task::Point3dEvolve => run_point3d(s),
        Task::Equilibrium => run_equilibrium(s),
    }?;
    std::fs::create_dir_all(out_dir)?;
    let mut outputs = BTreeMap::new();
    for (name, bytes) in &outcome.files {
        std::fs::write(out_dir.join(name), bytes)?;
        outputs.insert(name.clone(), hex(&Sha256::digest(bytes)));
    }
    let mut report = Report {
        name: s.name.clone(),
        task: s.task,
        seed: s.seed,
        base_shift: outcome.base_shift,
        tolerances: s.tolerances,
        solver: s.solver,
        pass: all_pass(&outcome.checks),
        checks: outcome.checks,
        metrics: outcome.metrics,
        outputs,
        hash: String::new(),
        timings: Timings { total_seconds: 0.0 },
    };
    report.hash = report.compute_hash()?;
    report.timings.total_seconds = start.elapsed().as_secs_f64();
    let text = serde_json::to_string_pretty(&report)?;
    std::fs::write(out_dir.join("report.json"), text + "\n")?;
    Ok(report)
}

fn initial_state(
    spec: &InitialSpec,
    ext: &KreinExtension,
    theta: &MonotoneRelation,
    r: &mut rng::SeededRng,
) -> Result<Vector> {
    match spec {
        InitialSpec::Values(v) => {
            if v.len() != ext.dim() {
                return Err(Error::InvalidScenario(vec![format!(
                    "/evolve/initial: expected {} entries, found {}",
                    ext.dim(),
                    v.len()
                )]));
            }
            Ok(Vector::from_column_slice(v))
        }
        InitialSpec::Random { random } => Ok(rng::uniform_vector(r, ext.dim(), *random)),
        InitialSpec::Named(NamedInitial::Equilibrium) => Ok(ext.equilibrium(theta)?.state),
    }
}

fn run_verify(s: &Scenario) -> Result<Outcome> {
    let ext = s.extension()?;
    let theta = s.relation(ext.boundary_dim())?;
    let spec = s.verify.as_ref().ok_or_else(|| missing("/verify"))?;
    let tol = &s.tolerances;
    let seed = s.seed();
    let mut out = Outcome::new(Some(ext.base_shift()));
    let rep = ext.verify_identities(&theta, &spec.lambda_grid, spec.samples, seed, &tol.identity())?;
    out.checks.extend(rep.checks.iter().cloned());

    // Dense oracle for linear relations.
    if let MonotoneRelation::Linear { matrix } = &theta {
        let mut r = rng::seeded(seed ^ 0x11);
        let mut worst: f64 = 0.0;
        for &l in &spec.lambda_grid {
            let g = ext.charge_map(l)?;
            let k = (matrix + ext.weyl_matrix(l)?)
                .try_inverse()
                .ok_or_else(|| Error::Internal("Θ + M°_λ is singular".into()))?;
            let dense = ext.generator().resolvent_matrix(l)? + &g * k * g.transpose();
            for _ in 0..spec.samples.max(1) {
                let u = rng::uniform_vector(&mut r, ext.dim(), 1.0);
                worst = worst.max((ext.resolvent(&theta, l, &u)? - &dense * &u).amax());
            }
        }
        out.checks.push(Check::at_most("linear_oracle", worst, tol.linear_oracle));
    }

    // Graph points: round trips at the extreme grid levels and λ-independence.
    let bounds = SampleBox::cube(ext.boundary_dim(), 1.0);
    let pairs = theta.sample_graph(spec.samples, &bounds, seed ^ 0x22)?;
    let mut r = rng::seeded(seed ^ 0x33);
    let lo = spec.lambda_grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = spec.lambda_grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut points = Vec::with_capacity(pairs.len());
    let (mut trip, mut action): (f64, f64) = (0.0, 0.0);
    for (xi, xt) in &pairs {
        let k = rng::uniform_vector(&mut r, ext.dim(), 1.0);
        let p = ext.graph_point(&theta, (xi, xt), Some(&k))?;
        let a = ext.round_trip(&theta, &p, lo)?;
        let b = ext.round_trip(&theta, &p, hi)?;
        trip = trip.max((&a.state - &p.state).amax()).max((&b.state - &p.state).amax());
        action = action.max((&a.action - &b.action).amax());
        points.push(p);
    }
    out.checks.push(Check::at_most("graph_round_trip", trip, tol.round_trip));
    out.checks.push(Check::at_most("action_lambda_independence", action, tol.round_trip));

    if let MonotoneRelation::Subdifferential { function } = &theta {
        let mut gap = f64::INFINITY;
        for p in &points {
            for q in &points {
                gap = gap.min(ext.subpotential_gap(function, p, q)?);
            }
        }
        out.checks.push(Check::at_least("subpotential", gap, -tol.subpotential));
    }
    out.metric("identities", &rep);
    out.metric("frame_constant", ext.frame_constant());
    Ok(out)
}

fn run_evolve(s: &Scenario) -> Result<Outcome> {
    let ext = s.extension()?;
    let theta = s.relation(ext.boundary_dim())?;
    let spec = s.evolve.as_ref().ok_or_else(|| missing("/evolve"))?;
    let tol = &s.tolerances;
    let opts = spec.options();
    let mut out = Outcome::new(Some(ext.base_shift()));
    let mut r = rng::seeded(s.seed());
    let u0 = initial_state(&spec.initial, &ext, &theta, &mut r)?;
    let phi = spec.energy.as_ref().map(FunctionSpec::build).transpose()?;
    let traj = semigroup::evolve(&ext, &theta, &u0, &opts, phi.as_ref())?;

    let residual = traj.diagnostics.iter().map(|d| d.residual).fold(0.0, f64::max);
    out.checks.push(Check::at_most("solver_residual", residual, s.solver.tolerance));
    if matches!(spec.initial, InitialSpec::Named(NamedInitial::Equilibrium)) {
        let drift = traj.states.iter().map(|u| (u - &u0).amax()).fold(0.0, f64::max);
        out.checks.push(Check::at_most("stationarity", drift, tol.stationarity));
    }
    if phi.is_some() {
        let e = traj.energies();
        let rise = e.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
        out.checks.push(Check::at_most("energy_nonincreasing", rise.max(0.0), tol.energy));
        out.metric("final_energy", e.last());
    }
    if spec.shift {
        let inc: Vec<f64> = traj.diagnostics.iter().map(|d| d.inc_norm).collect();
        let scale = inc.first().copied().unwrap_or(0.0).max(1.0);
        let rise = inc.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max) / scale;
        out.checks.push(Check::at_most("increments_nonincreasing", rise, tol.increment));
    }
    if spec.pairs > 0 {
        let others: Vec<Vector> = (0..spec.pairs)
            .map(|_| rng::uniform_vector(&mut r, ext.dim(), 1.0))
            .collect();
        let runs: Vec<Trajectory> = others
            .par_iter()
            .map(|v0| semigroup::evolve(&ext, &theta, v0, &opts, None))
            .collect::<Result<_>>()?;
        let rate = if spec.shift {
            1.0
        } else {
            1.0 / (1.0 - opts.h * ext.base_shift())
        };
        let mut excess = f64::NEG_INFINITY;
        for run in &runs {
            let d0 = (&run.states[0] - &u0).norm();
            for (k, (a, b)) in run.states.iter().zip(&traj.states).enumerate() {
                excess = excess.max((a - b).norm() - rate.powi(k as i32) * d0);
            }
        }
        out.checks.push(Check::at_most("contraction", excess.max(0.0), tol.contraction));
    }
    out.metric("steps", traj.diagnostics.len());
    out.metric("final_state", traj.last().as_slice());
    out.trajectory("trajectory.csv", &traj)?;
    Ok(out)
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

fn run_ladder(s: &Scenario) -> Result<Outcome> {
    let ext = s.extension()?;
    let theta = s.relation(ext.boundary_dim())?;
    let spec = s.evolve.as_ref().ok_or_else(|| missing("/evolve"))?;
    let ladder = s.ladder.as_ref().ok_or_else(|| missing("/ladder"))?;
    let opts = spec.options();
    let mut out = Outcome::new(Some(ext.base_shift()));
    let mut r = rng::seeded(s.seed());
    let u0 = initial_state(&spec.initial, &ext, &theta, &mut r)?;

    let mut exts = Vec::new();
    let mut relations = Vec::new();
    match s.task {
        Task::LadderMoreau => {
            let MonotoneRelation::Subdifferential { function } = &theta else {
                return Err(Error::InvalidScenario(vec![
                    "/relation/kind: ladder_moreau needs a subdifferential relation".into(),
                ]));
            };
            for &c in &ladder.values {
                exts.push(ext.clone());
                relations.push(MonotoneRelation::subdifferential(ConvexFunction::Moreau {
                    base: Box::new(function.clone()),
                    c,
                })?);
            }
        }
        _ => {
            let p = rng::uniform_matrix(&mut r, ext.boundary_dim(), ext.dim(), 1.0);
            let norm = p.clone().svd(false, false).singular_values.max();
            for &eps in &ladder.values {
                exts.push(ext.with_trace(ext.trace() + &p * (eps / norm))?);
                relations.push(theta.clone());
            }
        }
    }
    exts.push(ext.clone());
    relations.push(theta.clone());
    let runs: Vec<(&KreinExtension, &MonotoneRelation, &Vector)> =
        exts.iter().zip(&relations).map(|(e, t)| (e, t, &u0)).collect();
    let mut dist = semigroup::compare_runs(&runs, &opts)?;
    dist.pop();
    out.checks.push(Check::flag("ladder_strictly_decreasing", strictly_decreasing(&dist)));
    out.metric("ladder_values", &ladder.values);
    out.metric("sup_distances", &dist);

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["parameter", "sup_distance"])?;
    for (v, d) in ladder.values.iter().zip(&dist) {
        w.write_record([format!("{v:.17e}"), format!("{d:.17e}")])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
    out.files.push(("ladder.csv".into(), bytes));
    Ok(out)
}

fn run_equilibrium(s: &Scenario) -> Result<Outcome> {
    let ext = s.extension()?;
    let theta = s.relation(ext.boundary_dim())?;
    let spec = s.evolve.as_ref().ok_or_else(|| missing("/evolve"))?;
    let window = s.equilibrium.clone().unwrap_or_default().window;
    let tol = &s.tolerances;
    let opts = spec.options();
    let mut out = Outcome::new(Some(ext.base_shift()));
    let eq = ext.equilibrium(&theta)?;
    let fixed = ext.resolvent(&theta, 1.0, &eq.state)?;
    out.checks.push(Check::at_most(
        "stationarity",
        (&fixed - &eq.state).amax(),
        tol.stationarity,
    ));

    let mut r = rng::seeded(s.seed());
    let u0 = initial_state(&spec.initial, &ext, &theta, &mut r)?;
    let traj = semigroup::evolve(&ext, &theta, &u0, &opts, None)?;
    let dist: Vec<f64> = traj.states.iter().map(|u| (u - &eq.state).norm()).collect();
    let rate = 1.0 / (1.0 - opts.h * ext.base_shift());
    let excess = dist
        .iter()
        .enumerate()
        .map(|(k, d)| d - rate.powi(k as i32) * dist[0])
        .fold(0.0, f64::max);
    out.checks.push(Check::at_most("geometric_bound", excess, tol.contraction));

    let k1 = window[1].min(dist.len() - 1);
    let k0 = window[0].min(k1);
    if k1 > k0 && dist[k0] > 0.0 && dist[k1] > 0.0 {
        let measured = (dist[k1] / dist[k0]).powf(1.0 / (k1 - k0) as f64);
        out.checks.push(Check::at_most(
            "decay_rate",
            (measured - rate).abs() / rate,
            tol.decay_rate,
        ));
        out.metric("measured_rate", measured);
    } else {
        out.checks.push(Check::flag("decay_rate_window", false));
    }
    out.metric("expected_rate", rate);
    out.metric("window", [k0, k1]);
    out.metric("equilibrium", eq.state.as_slice());
    out.metric("equilibrium_charge", eq.charge.as_slice());
    out.trajectory("trajectory.csv", &traj)?;
    Ok(out)
}

fn run_point3d(s: &Scenario) -> Result<Outcome> {
    let spec = s.point3d.as_ref().ok_or_else(|| missing("/point3d"))?;
    let tol = &s.tolerances;
    let cfg = PointConfig::new(spec.points.clone())?;
    let n = cfg.len();
    let g0 = point3d::gamma0(&cfg);
    let mut theta = s.relation(n)?;
    if spec.type_gamma0 {
        theta = MonotoneRelation::perturbed(theta, -g0)?;
    }
    spec.initial.validate(n)?;
    let mut out = Outcome::new(None);
    let l = 1.0 / spec.h;
    let mut grid = spec.lambda_grid.clone();
    if grid.is_empty() {
        grid = vec![0.5 * l, l, 2.0 * l];
    }
    let (mut sym, mut weyl): (f64, f64) = (0.0, 0.0);
    for &a in &grid {
        let b = point3d::boundary_matrices(&cfg, a, l)?;
        for m in [&b.weyl, &b.weyl_shifted, &b.base] {
            sym = sym.max((m - m.transpose()).amax());
        }
        for &c in &grid {
            let lhs = point3d::weyl_function(&cfg, a)? - point3d::weyl_function(&cfg, c)?;
            weyl = weyl.max((lhs - point3d::green_gram(&cfg, a, c)? * (a - c)).amax());
        }
    }
    out.checks.push(Check::at_most("boundary_symmetry", sym, tol.symmetry));
    out.checks.push(Check::at_most("weyl_identity", weyl, tol.weyl_identity));
    out.checks.push(Check::at_most("gamma0_nonpositive", g0, 0.0));

    // Boundary-level resolvent identity, R_λ = R_μ(1 − (λ−μ)R_λ), for the
    // initial state with μ = 2λ.
    let mu = 2.0 * l;
    if !spec.initial.terms.iter().any(|t| t.mu == l || t.mu == mu) {
        let rl = point3d::resolvent_step_green(&cfg, &theta, l, &spec.initial, &s.solver)?;
        let inner = spec.initial.combine(1.0, &rl.state, -(l - mu));
        let rm = point3d::resolvent_step_green(&cfg, &theta, mu, &inner, &s.solver)?;
        let diff = rl.state.combine(1.0, &rm.state, -1.0);
        out.checks.push(Check::at_most(
            "resolvent_identity",
            diff.charge_norm(),
            tol.resolvent_identity,
        ));
    }

    let steps = point3d::evolve_green(&cfg, &theta, &spec.initial, spec.h, spec.steps, &s.solver)?;
    let residual = steps.iter().map(|st| st.error_bound).fold(0.0, f64::max);
    out.checks.push(Check::at_most("solver_residual", residual, s.solver.tolerance));

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "t", "x", "y", "z", "value"])?;
    let mut states = vec![spec.initial.clone()];
    states.extend(steps.iter().map(|st| st.state.clone()));
    for (k, st) in states.iter().enumerate() {
        for x in &spec.probes {
            let v = st.eval(&cfg, x)?;
            w.write_record([
                k.to_string(),
                format!("{:.17e}", k as f64 * spec.h),
                format!("{:.17e}", x[0]),
                format!("{:.17e}", x[1]),
                format!("{:.17e}", x[2]),
                format!("{v:.17e}"),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
    out.files.push(("probes.csv".into(), bytes));
    let record: Vec<Value> = steps
        .iter()
        .map(|st| {
            json!({
                "lambda": st.lambda,
                "charge": st.charge.as_slice(),
                "state": st.state,
            })
        })
        .collect();
    out.files.push(("green_steps.json".into(), serde_json::to_vec_pretty(&record)?));
    out.metric("gamma0", g0);
    out.metric("norms", states.iter().map(|st| st.l2_norm_sq(&cfg).sqrt()).collect::<Vec<_>>());
    Ok(out)
}

/// Result of one scenario in a suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub file: String,
    pub name: Option<String>,
    pub pass: bool,
    pub hash: Option<String>,
    pub error: Option<String>,
    /// 0 pass, 1 tolerance failure, 2 configuration error.
    pub status: i32,
}

/// Exit status for a scenario outcome.
pub fn status_of(result: &Result<Report>) -> i32 {
    match result {
        Ok(r) if r.pass => 0,
        Ok(_) | Err(Error::Tolerance { .. }) => 1,
        Err(_) => 2,
    }
}

/// Runs every `*.json` file in `dir` in parallel; each writes into
/// `out/<file stem>/`. Also writes `out/suite.json`.
pub fn run_suite(dir: &Path, out: &Path, seed: Option<u64>, tolerances: &[(String, f64)]) -> Result<Vec<SuiteEntry>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let entries: Vec<SuiteEntry> = files
        .par_iter()
        .map(|path| {
            let stem = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
            let result = load_scenario(path).and_then(|mut sc| {
                sc.apply_overrides(seed, tolerances)?;
                run_scenario(&sc, &out.join(&stem))
            });
            SuiteEntry {
                file: path.file_name().map_or_else(String::new, |s| s.to_string_lossy().into_owned()),
                name: result.as_ref().ok().map(|r| r.name.clone()),
                pass: matches!(&result, Ok(r) if r.pass),
                hash: result.as_ref().ok().map(|r| r.hash.clone()),
                status: status_of(&result),
                error: result.err().map(|e| e.to_string()),
            }
        })
        .collect();
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("suite.json"), serde_json::to_string_pretty(&entries)? + "\n")?;
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_verify() -> Value {
        json!({
            "name": "diag-linear",
            "task": "verify",
            "seed": 3,
            "generator": {"kind": "diagonal", "eigenvalues": [1.0, 2.0, 3.0]},
            "trace": {"kind": "point_eval", "indices": [0, 2]},
            "relation": {"kind": "linear", "matrix": [[2.0, 0.0], [0.0, 1.0]]},
            "verify": {"lambda_grid": [1.0, 2.0, 5.0, 10.0], "samples": 10}
        })
    }

    #[test]
    fn parses_minimal_verify() {
        let s = parse_scenario(&minimal_verify().to_string()).unwrap();
        assert_eq!(s.task, Task::Verify);
        assert_eq!(s.tolerances, Tolerances::default());
    }

    #[test]
    fn grid_entry_at_base_shift_is_named() {
        let mut v = minimal_verify();
        v["base_shift"] = json!(2.0);
        let Err(Error::InvalidScenario(d)) = parse_scenario(&v.to_string()) else {
            panic!("expected diagnostics");
        };
        assert!(d.iter().any(|m| m.starts_with("/verify/lambda_grid/0:")), "{d:?}");
        assert!(d.iter().any(|m| m.starts_with("/verify/lambda_grid/1:")), "{d:?}");
        assert!(!d.iter().any(|m| m.starts_with("/verify/lambda_grid/2:")), "{d:?}");
    }

    #[test]
    fn unknown_relation_kind_has_a_pointer() {
        let mut v = minimal_verify();
        v["relation"] = json!({"kind": "componentwise", "graphs": [{"kind": "abs"}, {"kind": "wobble"}]});
        let Err(Error::InvalidScenario(d)) = parse_scenario(&v.to_string()) else {
            panic!("expected diagnostics");
        };
        assert!(d[0].starts_with("/relation/graphs/1/kind:"), "{d:?}");
    }

    #[test]
    fn missing_knobs_are_reported() {
        let v = json!({"name": "x", "task": "ladder_trace", "relation": {"kind": "zero"}});
        let Err(Error::InvalidScenario(d)) = parse_scenario(&v.to_string()) else {
            panic!("expected diagnostics");
        };
        for ptr in ["/generator", "/trace", "/evolve", "/ladder", "/seed"] {
            assert!(d.iter().any(|m| m.starts_with(&format!("{ptr}:"))), "{ptr} in {d:?}");
        }
    }

    #[test]
    fn robin_trace_has_full_rank() {
        let g = GeneratorSpec::Dirichlet1d { n: 50, h: 1.0 / 51.0 };
        let t = TraceSpec::Robin1d.build(&g, 50).unwrap();
        assert_eq!(t.shape(), (2, 50));
        assert!(t.clone().svd(false, false).singular_values.min() > 1e-10);
        let d = GeneratorSpec::Diagonal { eigenvalues: vec![1.0; 3] };
        assert!(TraceSpec::Robin1d.build(&d, 3).is_err());
    }

    #[test]
    fn tolerance_overrides() {
        let mut t = Tolerances::default();
        t.set("decay_rate", 0.1).unwrap();
        assert_eq!(t.decay_rate, 0.1);
        assert!(t.set("nope", 1.0).is_err());
        assert!(t.set("energy", -1.0).is_err());
    }

    #[test]
    fn verify_run_passes_and_is_deterministic() {
        let s = parse_scenario(&minimal_verify().to_string()).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ra = run_scenario(&s, a.path()).unwrap();
        let rb = run_scenario(&s, b.path()).unwrap();
        assert!(ra.pass, "{:?}", ra.checks);
        assert_eq!(ra.hash, rb.hash);
        let oracle = ra.checks.iter().find(|c| c.name == "linear_oracle").unwrap();
        assert!(oracle.value <= 1e-9);
        assert_eq!(ra.hash, ra.compute_hash().unwrap());
    }

    #[test]
    fn evolve_from_equilibrium_is_constant() {
        let v = json!({
            "name": "rest",
            "task": "evolve",
            "generator": {"kind": "diagonal", "eigenvalues": [1.0, 2.0, 3.0]},
            "trace": {"kind": "matrix", "rows": [[1.0, 1.0, 0.0]]},
            "base_shift": -0.5,
            "relation": {"kind": "componentwise", "graphs": [{"kind": "abs"}]},
            "evolve": {"h": 0.1, "horizon": 1.0, "initial": "equilibrium"}
        });
        let s = parse_scenario(&v.to_string()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let r = run_scenario(&s, dir.path()).unwrap();
        assert!(r.pass, "{:?}", r.checks);
        let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
        let rows: Vec<&str> = csv.lines().skip(1).collect();
        assert_eq!(rows.len(), 11);
        for row in rows {
            let cols: Vec<f64> = row.split(',').skip(1).take(3).map(|x| x.parse().unwrap()).collect();
            assert!(cols.iter().all(|x| x.abs() < 1e-12));
        }
    }
}
