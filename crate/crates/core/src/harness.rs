//! Batch runs: configuration, dispatch to the solvers, cross-method
//! comparison and report assembly.
//!
//! A run is a pure function of its configuration. Reports carry no timings
//! or paths, so equal configurations give byte-identical JSON.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::constructions::{default_k_nodes, poincare_solve, wiener_solve, BoundaryData, BoundaryFn, ConstructionError, PoincareConfig, TensorTerm, WienerConfig};
use crate::geometry::{DistanceMode, Domain, DomainSpec, GeometryError, Point2};
use crate::grid::{Grid, GridError, GridField};
use crate::harmonic_measure::{wos_field, WosConfig, WosError};
use crate::heat::{pd_evolve, pd_resolvent, HeatError, HeatState, Scheme};
use crate::lattice::{lattice_abs_harmonic, lattice_sup_harmonic, punctured_bracketing, verify_bracket, LatticeError};
use crate::poisson::{laplacian_residual, solve_poisson, PoissonError, ScalarSource, SolverChoice, SourceField};
use crate::values::{ValueError, ValueSpace, VecValue};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// 2 for configuration and output errors, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Io(_) => 2,
            HarnessError::Numerical(_) => 3,
        }
    }
}

impl From<ValueError> for HarnessError {
    fn from(e: ValueError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

impl From<GeometryError> for HarnessError {
    fn from(e: GeometryError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

impl From<GridError> for HarnessError {
    fn from(e: GridError) -> Self {
        HarnessError::Numerical(e.to_string())
    }
}

impl From<ConstructionError> for HarnessError {
    fn from(e: ConstructionError) -> Self {
        match e {
            ConstructionError::Grid(g) => g.into(),
            e => HarnessError::Config(e.to_string()),
        }
    }
}

impl From<WosError> for HarnessError {
    fn from(e: WosError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

impl From<PoissonError> for HarnessError {
    fn from(e: PoissonError) -> Self {
        match e {
            PoissonError::Construction(c) => c.into(),
            PoissonError::Grid(g) => g.into(),
            e => HarnessError::Config(e.to_string()),
        }
    }
}

impl From<HeatError> for HarnessError {
    fn from(e: HeatError) -> Self {
        match e {
            HeatError::Grid(g) => g.into(),
            e => HarnessError::Config(e.to_string()),
        }
    }
}

impl From<LatticeError> for HarnessError {
    fn from(e: LatticeError) -> Self {
        match e {
            LatticeError::Construction(c) => c.into(),
            LatticeError::Grid(g) => g.into(),
            e => HarnessError::Config(e.to_string()),
        }
    }
}

fn missing(field: &str) -> HarnessError {
    HarnessError::Config(format!("missing field: {field}"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Wiener,
    Poincare,
    Wos,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Wiener => "wiener",
            Method::Poincare => "poincare",
            Method::Wos => "wos",
        }
    }
}

/// Scalar boundary builtins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarBoundary {
    Constant {
        value: f64,
    },
    FourierCos {
        k: u32,
        #[serde(default)]
        center: Point2,
    },
    FourierSin {
        k: u32,
        #[serde(default)]
        center: Point2,
    },
    ArcIndicator {
        a: f64,
        b: f64,
        #[serde(default)]
        center: Point2,
    },
}

impl ScalarBoundary {
    pub fn build(&self) -> BoundaryFn {
        match *self {
            ScalarBoundary::Constant { value } => BoundaryFn::constant(value),
            ScalarBoundary::FourierCos { k, center } => BoundaryFn::fourier_cos(k, center),
            ScalarBoundary::FourierSin { k, center } => BoundaryFn::fourier_sin(k, center),
            ScalarBoundary::ArcIndicator { a, b, center } => BoundaryFn::arc_indicator(a, b, center),
        }
    }
}

/// One term g ⊗ x; `value` holds the dense coordinates of x and defaults to
/// the first unit vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term<G> {
    pub g: G,
    #[serde(default)]
    pub value: Option<Vec<f64>>,
}

/// Boundary data: a single scalar builtin `g`, or a tensor list `terms`, or
/// both (summed).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(default)]
    pub g: Option<ScalarBoundary>,
    #[serde(default)]
    pub terms: Vec<Term<ScalarBoundary>>,
    /// Dense values at the punctures, overriding the continuous defaults.
    #[serde(default)]
    pub puncture_values: Option<Vec<Vec<f64>>>,
}

/// Source g, built like `DataSpec` from named scalar sources.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    #[serde(default)]
    pub g: Option<ScalarSource>,
    #[serde(default)]
    pub terms: Vec<Term<ScalarSource>>,
}

fn term_value(space: ValueSpace, v: &Option<Vec<f64>>) -> Result<VecValue, HarnessError> {
    match v {
        Some(xs) => Ok(VecValue::from_slice(space, xs)?),
        None => Ok(VecValue::new(space, [(0, 1.0)])?),
    }
}

impl DataSpec {
    pub fn build(&self, domain: &Arc<Domain>, space: ValueSpace) -> Result<BoundaryData, HarnessError> {
        let mut terms = Vec::new();
        if let Some(g) = &self.g {
            terms.push(TensorTerm { g: g.build(), x: term_value(space, &None)? });
        }
        for t in &self.terms {
            terms.push(TensorTerm { g: t.g.build(), x: term_value(space, &t.value)? });
        }
        if terms.is_empty() {
            return Err(HarnessError::Config("boundary data needs `g` or `terms`".into()));
        }
        let mut f = BoundaryData::tensor(domain.clone(), space, terms)?;
        if let Some(pv) = &self.puncture_values {
            let vals = pv.iter().map(|xs| VecValue::from_slice(space, xs)).collect::<Result<Vec<_>, _>>()?;
            f = f.with_puncture_values(&vals)?;
        }
        Ok(f)
    }
}

impl SourceSpec {
    pub fn build(&self, domain: &Arc<Domain>, space: ValueSpace) -> Result<SourceField, HarnessError> {
        let mut terms = Vec::new();
        if let Some(g) = &self.g {
            terms.push((g.clone(), term_value(space, &None)?));
        }
        for t in &self.terms {
            terms.push((t.g.clone(), term_value(space, &t.value)?));
        }
        if terms.is_empty() {
            return Err(HarnessError::Config("source needs `g` or `terms`".into()));
        }
        Ok(SourceField::tensor(domain.clone(), space, terms)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatSpec {
    pub initial: Option<SourceSpec>,
    pub t_end: f64,
    /// Defaults to h²/2.
    pub dt: Option<f64>,
    pub scheme: Scheme,
    /// Snapshot every this many steps; 0 writes only the initial state.
    pub snapshot_every: usize,
    /// Also check λ‖R(λ)u₀‖∞ ≤ ‖u₀‖∞.
    pub lambda: Option<f64>,
}

impl Default for HeatSpec {
    fn default() -> Self {
        Self { initial: None, t_end: 0.1, dt: None, scheme: Scheme::ImplicitEuler, snapshot_every: 0, lambda: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeSpec {
    /// Second operand; without it the run computes |u|_H.
    pub other: Option<DataSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSpec {
    pub tolerance: f64,
    pub stderr_factor: f64,
    /// Whether disagreement fails the run.
    pub required: bool,
}

impl Default for CompareSpec {
    fn default() -> Self {
        Self { tolerance: 5e-3, stderr_factor: 4.0, required: true }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<String>,
}

fn default_h() -> f64 {
    1.0 / 64.0
}

fn default_methods() -> Vec<Method> {
    vec![Method::Wiener]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainSpec,
    #[serde(default = "ValueSpace::scalar")]
    pub space: ValueSpace,
    #[serde(default)]
    pub data: Option<DataSpec>,
    #[serde(default)]
    pub source: Option<SourceSpec>,
    #[serde(default = "default_h")]
    pub h: f64,
    /// Replaces `wos.seed` when given.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Defaults to 12 quasi-random interior points.
    #[serde(default)]
    pub probes: Vec<Point2>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub wiener: WienerConfig,
    #[serde(default)]
    pub poincare: PoincareConfig,
    #[serde(default)]
    pub wos: WosConfig,
    #[serde(default)]
    pub heat: HeatSpec,
    #[serde(default)]
    pub lattice: LatticeSpec,
    #[serde(default)]
    pub compare: CompareSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    SolveDirichlet,
    SolvePoisson,
    HarmonicMeasure,
    Heat,
    LatticeSup,
    Bracket,
    Compare,
}

impl Command {
    pub const ALL: [Command; 7] = [Command::SolveDirichlet, Command::SolvePoisson, Command::HarmonicMeasure, Command::Heat, Command::LatticeSup, Command::Bracket, Command::Compare];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::SolveDirichlet => "solve-dirichlet",
            Command::SolvePoisson => "solve-poisson",
            Command::HarmonicMeasure => "harmonic-measure",
            Command::Heat => "heat",
            Command::LatticeSup => "lattice-sup",
            Command::Bracket => "bracket",
            Command::Compare => "compare",
        }
    }

    /// Every configuration key the command reads.
    pub fn config_keys(self) -> Vec<&'static str> {
        let mut k = vec!["domain.base", "domain.punctures", "space", "h", "output.dir"];
        let methods = ["methods", "seed", "probes", "wiener.n_levels", "wiener.k_nodes", "wiener.eps", "poincare.balls", "poincare.schedule", "poincare.lift", "poincare.max_sweeps", "poincare.eps", "poincare.k_nodes", "wos.eps_shell", "wos.max_steps", "wos.n_samples", "wos.puncture_mode"];
        let data = ["data.g", "data.terms", "data.puncture_values"];
        let cmp = ["compare.tolerance", "compare.stderr_factor", "compare.required"];
        match self {
            Command::SolveDirichlet | Command::Compare => {
                k.extend(data);
                k.extend(methods);
                k.extend(cmp);
                if self == Command::Compare {
                    k.extend(["source.g", "source.terms"]);
                }
            }
            Command::SolvePoisson => {
                k.extend(data);
                k.extend(["source.g", "source.terms"]);
                k.extend(methods);
                k.extend(cmp);
            }
            Command::HarmonicMeasure => {
                k.extend(data);
                k.extend(["seed", "probes", "wos.eps_shell", "wos.max_steps", "wos.n_samples", "wos.puncture_mode"]);
            }
            Command::Heat => k.extend(["probes", "heat.initial", "heat.t_end", "heat.dt", "heat.scheme", "heat.snapshot_every", "heat.lambda"]),
            Command::LatticeSup => {
                k.extend(data);
                k.extend(["probes", "lattice.other", "wiener.n_levels", "wiener.k_nodes", "wiener.eps"]);
            }
            Command::Bracket => {
                k.extend(data);
                k.extend(["wiener.n_levels", "wiener.k_nodes", "wiener.eps"]);
            }
        }
        k
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), HarnessError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| HarnessError::Config(format!("empty override key `{key}`")))?;
    let mut t = table;
    for p in parts {
        let entry = t.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry.as_table_mut().ok_or_else(|| HarnessError::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}

/// Parses a TOML configuration and applies `key=value` overrides, where
/// keys are dotted paths and values are TOML literals (bare words are read
/// as strings).
pub fn load_config(text: &str, overrides: &[(String, String)]) -> Result<RunConfig, HarnessError> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
    for (k, v) in overrides {
        let value = match format!("v = {v}").parse::<toml::Table>() {
            Ok(mut t) => t.remove("v").expect("parsed key"),
            Err(_) => toml::Value::String(v.clone()),
        };
        set_path(&mut table, k, value)?;
    }
    if !table.contains_key("domain") {
        return Err(missing("domain"));
    }
    let cfg: RunConfig = if overrides.is_empty() {
        toml::from_str(text)
    } else {
        toml::Value::Table(table).try_into()
    }
    .map_err(|e| HarnessError::Config(e.to_string().trim_end().to_string()))?;
    if !(cfg.h > 0.0 && cfg.h.is_finite()) {
        return Err(HarnessError::Config(format!("h must be positive, got {}", cfg.h)));
    }
    cfg.space.validate()?;
    Ok(cfg)
}

/// Hex SHA-256 of the canonical JSON form of the configuration.
pub fn config_hash(cfg: &RunConfig) -> String {
    let v = serde_json::to_value(cfg).expect("config serializes");
    hex::encode(Sha256::digest(canonical_json(&v).as_bytes()))
}

/// Pretty JSON with object keys in sorted order.
pub fn canonical_json(v: &Value) -> String {
    fn sort(v: &Value) -> Value {
        match v {
            Value::Object(m) => Value::Object(m.iter().map(|(k, x)| (k.clone(), sort(x))).collect::<BTreeMap<_, _>>().into_iter().collect()),
            Value::Array(a) => Value::Array(a.iter().map(sort).collect()),
            x => x.clone(),
        }
    }
    let mut s = serde_json::to_string_pretty(&sort(v)).expect("json value serializes");
    s.push('\n');
    s
}

/// Deterministic interior probes: Halton points in the bounding box at
/// distance ≥ 0.05·diam from ∂Ω.
pub fn default_probes(domain: &Domain, grid: &Grid, n: usize) -> Vec<Point2> {
    fn radical_inverse(mut i: u64, b: u64) -> f64 {
        let (mut r, mut f) = (0.0, 1.0 / b as f64);
        while i > 0 {
            r += f * (i % b) as f64;
            i /= b;
            f /= b as f64;
        }
        r
    }
    let (lo, hi) = domain.bbox();
    let min = 0.05 * domain.diameter();
    let mut out = Vec::new();
    for i in 1..100_000u64 {
        if out.len() == n {
            break;
        }
        let p = Point2::new(lo.x + (hi.x - lo.x) * radical_inverse(i, 2), lo.y + (hi.y - lo.y) * radical_inverse(i, 3));
        if domain.distance_unchecked(p, DistanceMode::Full) >= min.max(2.0 * grid.h) && domain.contains(p) {
            out.push(p);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Invariant {
    pub name: String,
    pub required: bool,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
}

impl Invariant {
    pub fn at_most(name: &str, required: bool, measured: f64, threshold: f64) -> Self {
        Self { name: name.into(), required, passed: measured <= threshold, measured, threshold }
    }
}

/// Values of one method at the common probes.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodEstimate {
    pub method: String,
    pub values: Vec<VecValue>,
    /// Standard-error norm per probe, for Monte Carlo methods.
    pub stderr: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairDistance {
    pub a: String,
    pub b: String,
    /// max over probes of ‖a(p) − b(p)‖
    pub sup_distance: f64,
    pub worst_probe: usize,
    /// Largest ratio of distance to allowed distance over the probes.
    pub worst_ratio: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub pairs: Vec<PairDistance>,
    pub invariants: Vec<Invariant>,
    pub provenance: Provenance,
}

/// Pairwise sup distances at the probes. A probe passes when its distance is
/// within max(tolerance, stderr_factor·(σ_a + σ_b)).
pub fn compare(estimates: &[MethodEstimate], spec: &CompareSpec, provenance: Provenance) -> Result<ComparisonReport, HarnessError> {
    let mut pairs = Vec::new();
    for (i, a) in estimates.iter().enumerate() {
        for b in &estimates[i + 1..] {
            if a.values.len() != b.values.len() {
                return Err(HarnessError::Config(format!("{} and {} were evaluated at different probes", a.method, b.method)));
            }
            let (mut sup, mut worst, mut ratio) = (0.0f64, 0, 0.0f64);
            for (k, (x, y)) in a.values.iter().zip(&b.values).enumerate() {
                let d = x.sub(y)?.norm();
                let se = a.stderr.as_ref().map_or(0.0, |s| s[k]) + b.stderr.as_ref().map_or(0.0, |s| s[k]);
                let allowed = spec.tolerance.max(spec.stderr_factor * se);
                if d > sup {
                    sup = d;
                    worst = k;
                }
                ratio = ratio.max(d / allowed);
            }
            pairs.push(PairDistance { a: a.method.clone(), b: b.method.clone(), sup_distance: sup, worst_probe: worst, worst_ratio: ratio, passed: ratio <= 1.0 });
        }
    }
    let worst = pairs.iter().map(|p| p.worst_ratio).fold(0.0, f64::max);
    let invariants = if pairs.is_empty() { Vec::new() } else { vec![Invariant::at_most("cross_method_agreement", spec.required, worst, 1.0)] };
    Ok(ComparisonReport { pairs, invariants, provenance })
}

/// Report plus the files that go next to it.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: Value,
    /// (file name, contents)
    pub artifacts: Vec<(String, Vec<u8>)>,
    pub invariants: Vec<Invariant>,
}

impl RunOutput {
    /// Whether any required invariant failed.
    pub fn failed(&self) -> bool {
        self.invariants.iter().any(|i| i.required && !i.passed)
    }

    pub fn report_json(&self) -> String {
        canonical_json(&self.report)
    }

    /// Writes `report.json` and the artifacts into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.report_json())?;
        for (name, bytes) in &self.artifacts {
            std::fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }
}

fn csv(u: &GridField) -> Vec<u8> {
    let mut b = Vec::new();
    u.write_csv(&mut b).expect("writing to memory");
    b
}

fn dense(v: &VecValue) -> Vec<f64> {
    v.to_dense()
}

struct Ctx {
    cfg: RunConfig,
    domain: Arc<Domain>,
    grid: Grid,
    probes: Vec<Point2>,
    provenance: Provenance,
}

impl Ctx {
    fn new(cfg: &RunConfig) -> Result<Self, HarnessError> {
        let mut cfg = cfg.clone();
        if let Some(s) = cfg.seed {
            cfg.wos.seed = s;
        }
        let domain = Arc::new(Domain::new(cfg.domain.base.clone(), cfg.domain.punctures.clone())?);
        let grid = Grid::covering(&domain, cfg.h)?;
        let probes = if cfg.probes.is_empty() { default_probes(&domain, &grid, 12) } else { cfg.probes.clone() };
        if probes.is_empty() {
            return Err(HarnessError::Config("no interior probe found at this grid spacing; set `probes`".into()));
        }
        for p in &probes {
            domain.dist_to_boundary(*p, DistanceMode::Full)?;
        }
        let provenance = Provenance { config_hash: config_hash(&cfg), seed: cfg.wos.seed, version: env!("CARGO_PKG_VERSION").to_string() };
        Ok(Self { cfg, domain, grid, probes, provenance })
    }

    fn data(&self) -> Result<BoundaryData, HarnessError> {
        self.cfg.data.as_ref().ok_or_else(|| missing("data"))?.build(&self.domain, self.cfg.space)
    }

    fn at_probes(&self, u: &GridField) -> Result<Vec<VecValue>, HarnessError> {
        self.probes
            .iter()
            .map(|&p| {
                let v = u.interpolate(p).ok_or_else(|| HarnessError::Config(format!("probe ({}, {}) is too close to the boundary for grid interpolation", p.x, p.y)))?;
                Ok(VecValue::from_support(u.space(), u.support(), &v)?)
            })
            .collect()
    }

    fn report(&self, cmd: Command, results: Value, invariants: &[Invariant], pairs: &[PairDistance]) -> Value {
        json!({
            "command": cmd.as_str(),
            "provenance": self.provenance,
            "probes": self.probes,
            "results": results,
            "pairs": pairs,
            "invariants": invariants,
        })
    }
}

/// Executes one subcommand.
pub fn run(cmd: Command, cfg: &RunConfig) -> Result<RunOutput, HarnessError> {
    let ctx = Ctx::new(cfg)?;
    match cmd {
        Command::SolveDirichlet => run_methods(&ctx, cmd, false),
        Command::SolvePoisson => run_methods(&ctx, cmd, true),
        Command::Compare => run_methods(&ctx, cmd, ctx.cfg.source.is_some()),
        Command::HarmonicMeasure => run_harmonic_measure(&ctx),
        Command::Heat => run_heat(&ctx),
        Command::LatticeSup => run_lattice_sup(&ctx),
        Command::Bracket => run_bracket(&ctx),
    }
}

fn run_methods(ctx: &Ctx, cmd: Command, poisson: bool) -> Result<RunOutput, HarnessError> {
    let cfg = &ctx.cfg;
    let f = ctx.data()?;
    let source = if poisson { Some(cfg.source.as_ref().ok_or_else(|| missing("source"))?.build(&ctx.domain, cfg.space)?) } else { None };
    let mut methods = cfg.methods.clone();
    if cmd == Command::Compare && methods.len() < 2 {
        methods = vec![Method::Wiener, Method::Poincare, Method::Wos];
    }
    methods.sort();
    methods.dedup();
    let mut estimates = Vec::new();
    let mut artifacts = Vec::new();
    let mut results = serde_json::Map::new();
    let mut invariants = Vec::new();
    for &m in &methods {
        let name = m.as_str();
        let (est, summary) = if let Some(g) = &source {
            let choice = match m {
                Method::Wiener => SolverChoice::Wiener(cfg.wiener.clone()),
                Method::Poincare => SolverChoice::Poincare(cfg.poincare.clone()),
                Method::Wos => SolverChoice::Wos(cfg.wos.clone()),
            };
            let s = solve_poisson(&f, g, ctx.grid, &choice, &ctx.probes)?;
            let stderr = s.probe_stderr.as_ref().map(|se| se.iter().map(|x| cfg.space.norm_of(x)).collect::<Vec<_>>());
            let mut summary = json!({ "converged": s.converged, "probe_values": s.probe_values.iter().map(dense).collect::<Vec<_>>() });
            if let Some(u) = &s.field {
                summary["residual_max"] = json!(laplacian_residual(u, g, 0.1 * ctx.domain.diameter()));
                artifacts.push((format!("{name}.csv"), csv(u)));
            }
            if let Some(se) = &stderr {
                summary["probe_stderr"] = json!(se);
            }
            (MethodEstimate { method: name.into(), values: s.probe_values, stderr }, summary)
        } else {
            match m {
                Method::Wiener => {
                    let r = wiener_solve(&f, ctx.grid, &cfg.wiener)?;
                    let vals = ctx.at_probes(&r.field)?;
                    artifacts.push((format!("{name}.csv"), csv(&r.field)));
                    let s = json!({ "converged": r.converged, "diagnostics": r.diagnostics, "n_levels": r.n_levels, "probe_values": vals.iter().map(dense).collect::<Vec<_>>() });
                    (MethodEstimate { method: name.into(), values: vals, stderr: None }, s)
                }
                Method::Poincare => {
                    let r = poincare_solve(&f, ctx.grid, &cfg.poincare)?;
                    let vals = ctx.at_probes(&r.field)?;
                    artifacts.push((format!("{name}.csv"), csv(&r.field)));
                    let s = json!({ "converged": r.converged, "n_balls": r.n_balls, "sweeps": r.sweep_changes.len(), "last_change": r.sweep_changes.last(), "probe_values": vals.iter().map(dense).collect::<Vec<_>>() });
                    (MethodEstimate { method: name.into(), values: vals, stderr: None }, s)
                }
                Method::Wos => {
                    let est = wos_field(&f, &ctx.probes, &cfg.wos)?;
                    let vals: Vec<VecValue> = est.iter().map(|e| e.mean.clone()).collect();
                    let se: Vec<f64> = est.iter().map(|e| e.stderr_norm()).collect();
                    let s = json!({ "probe_values": vals.iter().map(dense).collect::<Vec<_>>(), "probe_stderr": se, "n_capped": est.iter().map(|e| e.n_capped).sum::<usize>() });
                    (MethodEstimate { method: name.into(), values: vals, stderr: Some(se) }, s)
                }
            }
        };
        if source.is_none() {
            let bound = f.sup_norm(4 * default_k_nodes(&ctx.domain, ctx.grid.h));
            let worst = est.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
            invariants.push(Invariant::at_most(&format!("{name}_max_principle"), true, worst, bound + 1e-9 * bound.max(1.0)));
        }
        results.insert(name.into(), summary);
        estimates.push(est);
    }
    let cmp = compare(&estimates, &cfg.compare, ctx.provenance.clone())?;
    invariants.extend(cmp.invariants.iter().cloned());
    let report = ctx.report(cmd, Value::Object(results), &invariants, &cmp.pairs);
    Ok(RunOutput { report, artifacts, invariants })
}

fn run_harmonic_measure(ctx: &Ctx) -> Result<RunOutput, HarnessError> {
    let f = ctx.data()?;
    let est = wos_field(&f, &ctx.probes, &ctx.cfg.wos)?;
    let rows: Vec<Value> = est
        .iter()
        .map(|e| {
            json!({
                "mean": dense(&e.mean),
                "stderr": e.stderr,
                "n_samples": e.n_samples,
                "n_capped": e.n_capped,
                "n_puncture_captures": e.n_puncture_captures,
                "capture_fraction": e.capture_fraction(),
                "cap_heavy": e.cap_heavy,
            })
        })
        .collect();
    let capped = est.iter().filter(|e| e.cap_heavy).count();
    let invariants = vec![Invariant::at_most("capped_walks_rare", false, capped as f64, 0.0)];
    let report = ctx.report(Command::HarmonicMeasure, json!({ "estimates": rows }), &invariants, &[]);
    Ok(RunOutput { report, artifacts: Vec::new(), invariants })
}

fn run_heat(ctx: &Ctx) -> Result<RunOutput, HarnessError> {
    let hs = &ctx.cfg.heat;
    let src = hs.initial.as_ref().ok_or_else(|| missing("heat.initial"))?.build(&ctx.domain, ctx.cfg.space)?;
    let s0 = HeatState::from_fn(&ctx.domain, ctx.grid, ctx.cfg.space, src.support().to_vec(), |p| src.eval(p))?;
    let dt = hs.dt.unwrap_or(ctx.grid.h * ctx.grid.h / 2.0);
    let tr = pd_evolve(&s0.field, hs.t_end, dt, hs.scheme, &ctx.probes, hs.snapshot_every)?;
    let mut artifacts = Vec::new();
    let mut snaps = Vec::new();
    for (k, s) in tr.snapshots.iter().enumerate() {
        let name = format!("snapshot_{k:04}.csv");
        artifacts.push((name.clone(), csv(&s.field)));
        snaps.push(json!({ "file": name, "t": s.t }));
    }
    let series: Vec<Vec<Vec<f64>>> = tr.probe_series.iter().map(|s| s.iter().map(dense).collect()).collect();
    let manifest = json!({ "times": tr.times, "sup_norms": tr.sup_norms, "probe_series": series, "snapshots": snaps });
    artifacts.push(("manifest.json".into(), canonical_json(&manifest).into_bytes()));
    let rise = tr.sup_norms.windows(2).map(|w| w[1] - w[0] * (1.0 + 1e-12)).fold(0.0, f64::max);
    let mut invariants = vec![Invariant::at_most("sup_norm_nonincreasing", hs.scheme == Scheme::ImplicitEuler, rise, 0.0)];
    let mut results = json!({ "n_steps": tr.times.len() - 1, "final_sup_norm": tr.sup_norms.last(), "t_end": tr.last.t });
    if let Some(lambda) = hs.lambda {
        let r = pd_resolvent(lambda, &s0.field)?;
        let (lhs, rhs) = (lambda * r.sup_norm(), s0.field.sup_norm());
        results["resolvent"] = json!({ "lambda": lambda, "scaled_norm": lhs, "data_norm": rhs });
        invariants.push(Invariant::at_most("resolvent_dissipative", true, lhs, rhs * (1.0 + 1e-12)));
    }
    let report = ctx.report(Command::Heat, results, &invariants, &[]);
    Ok(RunOutput { report, artifacts, invariants })
}

fn run_lattice_sup(ctx: &Ctx) -> Result<RunOutput, HarnessError> {
    let cfg = &ctx.cfg;
    let u = wiener_solve(&ctx.data()?, ctx.grid, &cfg.wiener)?.field;
    let (r, v) = match &cfg.lattice.other {
        Some(o) => {
            let v = wiener_solve(&o.build(&ctx.domain, cfg.space)?, ctx.grid, &cfg.wiener)?.field;
            (lattice_sup_harmonic(&u, &v, cfg.wiener.n_levels)?, v)
        }
        None => (lattice_abs_harmonic(&u, cfg.wiener.n_levels)?, u.scale(-1.0)),
    };
    let sup = r.field.with_support(&crate::grid::union_support(u.support(), v.support()));
    let pointwise = u.pointwise_sup(&v)?;
    let deficit = pointwise.sub(&sup)?.map(|x| x.max(0.0)).interior_sup_norm();
    let tol = 1e-9 * pointwise.sup_norm().max(1.0);
    let mut invariants = vec![Invariant::at_most("dominates_pointwise_sup", true, deficit, tol)];
    if cfg.lattice.other.is_none() {
        let gap = (sup.sup_norm() - u.sup_norm()).abs();
        invariants.push(Invariant::at_most("sup_norm_identity", true, gap, 1e-6 * u.sup_norm().max(1.0)));
    }
    let vals = ctx.at_probes(&sup)?;
    let results = json!({ "converged": r.converged, "diagnostics": r.diagnostics, "sup_norm": sup.sup_norm(), "probe_values": vals.iter().map(dense).collect::<Vec<_>>() });
    let report = ctx.report(Command::LatticeSup, results, &invariants, &[]);
    Ok(RunOutput { report, artifacts: vec![("lattice_sup.csv".into(), csv(&sup))], invariants })
}

fn run_bracket(ctx: &Ctx) -> Result<RunOutput, HarnessError> {
    let f = ctx.data()?;
    let b = punctured_bracketing(&f, ctx.grid, &ctx.cfg.wiener)?;
    let rep = verify_bracket(&b)?;
    let invariants = vec![Invariant::at_most("bracket_ordered", true, rep.max_violation, rep.tau)];
    let results = json!({ "shift": dense(&b.shift), "reference_converged": b.reference_converged, "data_norm": b.data_norm, "check": rep });
    let report = ctx.report(Command::Bracket, results, &invariants, &[]);
    let artifacts = vec![("lower.csv".into(), csv(&b.lower)), ("reference.csv".into(), csv(&b.reference)), ("upper.csv".into(), csv(&b.upper))];
    Ok(RunOutput { report, artifacts, invariants })
}

#[cfg(test)]
mod tests {
    use super::*;

    const DISK: &str = r#"
h = 0.0625
probes = [[0.3, 0.1], [-0.2, -0.4]]
[domain]
base = { kind = "disk", center = [0.0, 0.0], radius = 1.0 }
[data]
g = { kind = "constant", value = 0.5 }
"#;

    #[test]
    fn config_errors() {
        let e = load_config("h = 0.1\n", &[]).unwrap_err();
        assert_eq!(e.to_string(), "missing field: domain");
        assert_eq!(e.exit_code(), 2);
        let e = load_config(&format!("{DISK}\nbogus = 1\n"), &[]).unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        let e = load_config(DISK, &[("h".into(), "-1".into())]).unwrap_err();
        assert!(e.to_string().contains("positive"));
    }

    #[test]
    fn overrides_apply() {
        let cfg = load_config(DISK, &[("h".into(), "0.125".into()), ("wos.n_samples".into(), "77".into()), ("methods".into(), "[\"wos\", \"wiener\"]".into())]).unwrap();
        assert_eq!(cfg.h, 0.125);
        assert_eq!(cfg.wos.n_samples, 77);
        assert_eq!(cfg.methods, vec![Method::Wos, Method::Wiener]);
        assert_ne!(config_hash(&cfg), config_hash(&load_config(DISK, &[]).unwrap()));
    }

    #[test]
    fn constant_data_gives_zero_distances() {
        let cfg = load_config(DISK, &[("methods".into(), "[\"wiener\", \"poincare\", \"wos\"]".into()), ("wos.n_samples".into(), "500".into())]).unwrap();
        let out = run(Command::SolveDirichlet, &cfg).unwrap();
        assert!(!out.failed());
        let pairs = out.report["pairs"].as_array().unwrap();
        assert_eq!(pairs.len(), 3);
        for p in pairs {
            assert!(p["sup_distance"].as_f64().unwrap() < 1e-14, "{p}");
        }
        assert_eq!(out.artifacts.len(), 2);
    }

    #[test]
    fn comparison_reports_shifts() {
        let prov = Provenance { config_hash: String::new(), seed: 0, version: String::new() };
        let a = MethodEstimate { method: "a".into(), values: vec![VecValue::scalar(1.0), VecValue::scalar(2.0)], stderr: None };
        let r = compare(&[a.clone(), a.clone()], &CompareSpec::default(), prov.clone()).unwrap();
        assert_eq!(r.pairs[0].sup_distance, 0.0);
        let eps = 0.25;
        let b = MethodEstimate { values: a.values.iter().map(|v| v.add(&VecValue::scalar(eps)).unwrap()).collect(), ..a.clone() };
        let r = compare(&[a.clone(), b], &CompareSpec::default(), prov.clone()).unwrap();
        assert_eq!(r.pairs[0].sup_distance, eps);
        assert!(!r.pairs[0].passed);
        // a noisy estimate within 4σ passes, the same offset with a small σ fails
        let noisy = |se: f64| MethodEstimate { method: "wos".into(), values: a.values.iter().map(|v| v.add(&VecValue::scalar(0.02)).unwrap()).collect(), stderr: Some(vec![se; 2]) };
        assert!(compare(&[a.clone(), noisy(0.01)], &CompareSpec::default(), prov.clone()).unwrap().pairs[0].passed);
        assert!(!compare(&[a.clone(), noisy(0.001)], &CompareSpec::default(), prov).unwrap().pairs[0].passed);
    }

    #[test]
    fn every_command_lists_its_keys() {
        for c in Command::ALL {
            let k = c.config_keys();
            assert!(k.contains(&"domain.base") && k.contains(&"h"));
        }
        assert!(Command::Heat.config_keys().contains(&"heat.t_end"));
    }
}
