//! Scenario files.
//!
//! A scenario is a TOML document with the tables `mesh`, `operator`,
//! `coefficient`, `propagation` and `experiment`. Parsing never stops at
//! the first problem: every invalid, missing or unknown key is reported
//! with its dotted path.
//!
//! Spatial profiles are either a bare number (a constant) or a table
//!
//! ```toml
//! { profile = "cos-kx", amplitude = 1.0, k = 3.141592653589793, axis = 0, offset = 0.0 }
//! { profile = "gaussian-bump", amplitude = 2.0, center = [0.5], width = 0.1 }
//! { profile = "const", value = 0.3 }
//! ```
//!
//! where the optional `offset` is added to the profile.

use floquet_core::{
    CoefficientField, EllipticOperator, FieldKind, HullPoint, Profile, Propagator, PropagatorConfig,
    SampleMode, Scheme, SpatialMesh,
};
use std::fmt;
use std::path::PathBuf;
use toml::{Table, Value};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_OUTPUT: &str = "floquet-out";

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Every problem found in a scenario file.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl ConfigErrors {
    pub fn paths(&self) -> Vec<&str> {
        self.0.iter().map(|e| e.path.as_str()).collect()
    }

    pub fn mentions(&self, path: &str) -> bool {
        self.0.iter().any(|e| e.path == path)
    }
}

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

/// A spatial profile plus a constant offset.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSpec {
    pub offset: f64,
    pub profile: Profile,
}

impl ProfileSpec {
    pub fn constant(value: f64) -> Self {
        Self {
            offset: 0.0,
            profile: Profile::constant(value),
        }
    }

    pub fn eval(&self, p: [f64; 2]) -> f64 {
        self.offset + self.profile.eval(p)
    }

    pub fn sample(&self, mesh: &SpatialMesh) -> Vec<f64> {
        mesh.sample(|p| self.eval(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Experiment {
    Spectrum,
    Simulate,
    Bundle,
    Separation,
    Uniqueness,
    Membership,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Spectrum,
        Experiment::Simulate,
        Experiment::Bundle,
        Experiment::Separation,
        Experiment::Uniqueness,
        Experiment::Membership,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Spectrum => "spectrum",
            Experiment::Simulate => "simulate",
            Experiment::Bundle => "bundle",
            Experiment::Separation => "separation",
            Experiment::Uniqueness => "uniqueness",
            Experiment::Membership => "membership",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshSpec {
    pub extent: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    pub a: ProfileSpec,
    pub c: ProfileSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSpec {
    pub kind: FieldKind,
    pub offset: ProfileSpec,
    pub profiles: Vec<ProfileSpec>,
    pub amplitudes: Vec<f64>,
    pub frequencies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationSpec {
    pub dt: f64,
    pub steps_per_unit: usize,
    pub scheme: Scheme,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumParams {
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateParams {
    pub t0: f64,
    pub t1: f64,
    pub stride: usize,
    pub phase: Option<Vec<f64>>,
    pub initial: ProfileSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleParams {
    pub samples: usize,
    pub sampling: SampleMode,
    pub tol: f64,
    pub max_t: usize,
    pub invariance_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationParams {
    pub samples: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub trials: usize,
    pub substeps: usize,
    pub pairs: usize,
    pub residual_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessParams {
    pub pairs: usize,
    pub ladder: Vec<f64>,
    pub t_fwd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MembershipParams {
    pub t_back: Vec<f64>,
    pub t_fwd: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub seed: u64,
    pub output: PathBuf,
    /// Experiments run by `all`; every experiment when absent.
    pub run: Option<Vec<Experiment>>,
    pub spectrum: SpectrumParams,
    pub simulate: SimulateParams,
    pub bundle: BundleParams,
    pub separation: SeparationParams,
    pub uniqueness: UniquenessParams,
    pub membership: MembershipParams,
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub mesh: MeshSpec,
    pub operator: OperatorSpec,
    pub coefficient: CoefficientSpec,
    pub propagation: PropagationSpec,
    pub experiment: ExperimentSpec,
    /// The document as parsed, echoed into the run manifest.
    pub source: Table,
}

impl ScenarioConfig {
    pub fn build_mesh(&self) -> floquet_core::Result<SpatialMesh> {
        SpatialMesh::new(&self.mesh.extent, &self.mesh.counts)
    }

    pub fn build_propagator(&self) -> floquet_core::Result<Propagator> {
        let mesh = self.build_mesh()?;
        let field = build_field(&self.coefficient, &mesh)?;
        let op = EllipticOperator::from_profiles(mesh, |p| self.operator.a.eval(p), |p| self.operator.c.eval(p))?;
        let config = PropagatorConfig::with_steps_per_unit(self.propagation.steps_per_unit).scheme(self.propagation.scheme);
        Propagator::new(op, field, config)
    }

    /// Hull point used for single-orbit experiments.
    pub fn phase(&self, modes: usize) -> HullPoint {
        match &self.experiment.simulate.phase {
            Some(p) if p.len() == modes => HullPoint::new(p.clone()),
            _ => HullPoint::origin(modes),
        }
    }
}

fn build_field(spec: &CoefficientSpec, mesh: &SpatialMesh) -> floquet_core::Result<CoefficientField> {
    let modes = spec
        .profiles
        .iter()
        .zip(&spec.amplitudes)
        .map(|(p, a)| p.sample(mesh).into_iter().map(|v| a * v).collect())
        .collect();
    CoefficientField::new(spec.kind, spec.offset.sample(mesh), modes, spec.frequencies.clone())
}

/// Error sink with the dotted-path helpers used by the parser.
struct Ctx {
    errors: Vec<ConfigError>,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

impl Ctx {
    fn error(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.errors.push(ConfigError {
            path: path.into(),
            message: message.into(),
        });
    }

    fn check_keys(&mut self, table: &Table, path: &str, allowed: &[&str]) {
        for key in table.keys() {
            if !allowed.contains(&key.as_str()) {
                self.error(join(path, key), format!("unknown key (expected one of: {})", allowed.join(", ")));
            }
        }
    }

    fn table<'a>(&mut self, parent: &'a Table, path: &str, key: &str) -> Option<&'a Table> {
        match parent.get(key) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                self.error(join(path, key), "expected a table");
                None
            }
        }
    }

    fn number(&mut self, value: &Value, path: &str) -> Option<f64> {
        match value {
            Value::Float(x) if x.is_finite() => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.error(path, "expected a finite number");
                None
            }
        }
    }

    fn f64(&mut self, t: &Table, path: &str, key: &str) -> Option<f64> {
        t.get(key).and_then(|v| self.number(v, &join(path, key)))
    }

    fn f64_or(&mut self, t: &Table, path: &str, key: &str, default: f64) -> f64 {
        if t.contains_key(key) {
            self.f64(t, path, key).unwrap_or(default)
        } else {
            default
        }
    }

    fn u64(&mut self, t: &Table, path: &str, key: &str) -> Option<u64> {
        match t.get(key)? {
            Value::Integer(i) if *i >= 0 => Some(*i as u64),
            _ => {
                self.error(join(path, key), "expected a nonnegative integer");
                None
            }
        }
    }

    fn usize_or(&mut self, t: &Table, path: &str, key: &str, default: usize) -> usize {
        if t.contains_key(key) {
            self.u64(t, path, key).map(|v| v as usize).unwrap_or(default)
        } else {
            default
        }
    }

    fn positive_usize_or(&mut self, t: &Table, path: &str, key: &str, default: usize) -> usize {
        let v = self.usize_or(t, path, key, default);
        if v == 0 {
            self.error(join(path, key), "must be at least 1");
        }
        v
    }

    fn string<'a>(&mut self, t: &'a Table, path: &str, key: &str) -> Option<&'a str> {
        match t.get(key)? {
            Value::String(s) => Some(s),
            _ => {
                self.error(join(path, key), "expected a string");
                None
            }
        }
    }

    /// A number or an array of numbers.
    fn f64_list(&mut self, t: &Table, path: &str, key: &str) -> Option<Vec<f64>> {
        let p = join(path, key);
        match t.get(key)? {
            Value::Array(items) => {
                let before = self.errors.len();
                let out: Vec<f64> = items
                    .iter()
                    .enumerate()
                    .filter_map(|(i, v)| self.number(v, &format!("{p}[{i}]")))
                    .collect();
                (self.errors.len() == before).then_some(out)
            }
            v => self.number(v, &p).map(|x| vec![x]),
        }
    }

    fn usize_list(&mut self, t: &Table, path: &str, key: &str) -> Option<Vec<usize>> {
        let p = join(path, key);
        let as_usize = |v: &Value| match v {
            Value::Integer(i) if *i >= 0 => Some(*i as usize),
            _ => None,
        };
        match t.get(key)? {
            Value::Array(items) => {
                let out: Option<Vec<usize>> = items.iter().map(as_usize).collect();
                if out.is_none() {
                    self.error(p, "expected nonnegative integers");
                }
                out
            }
            v => {
                let out = as_usize(v).map(|x| vec![x]);
                if out.is_none() {
                    self.error(p, "expected a nonnegative integer or an array of them");
                }
                out
            }
        }
    }

    fn profile(&mut self, value: &Value, path: &str) -> Option<ProfileSpec> {
        let t = match value {
            Value::Table(t) => t,
            v => return self.number(v, path).map(ProfileSpec::constant),
        };
        let offset = self.f64_or(t, path, "offset", 0.0);
        let Some(name) = self.string(t, path, "profile") else {
            if !t.contains_key("profile") {
                self.error(join(path, "profile"), "missing required key");
            }
            return None;
        };
        let required = |ctx: &mut Ctx, key: &str| {
            let v = ctx.f64(t, path, key);
            if v.is_none() && !t.contains_key(key) {
                ctx.error(join(path, key), "missing required key");
            }
            v
        };
        let profile = match name {
            "const" => {
                self.check_keys(t, path, &["profile", "value", "offset"]);
                Profile::Const {
                    value: required(self, "value")?,
                }
            }
            "cos-kx" => {
                self.check_keys(t, path, &["profile", "amplitude", "k", "axis", "offset"]);
                let amplitude = required(self, "amplitude");
                let k = required(self, "k");
                let axis = self.usize_or(t, path, "axis", 0);
                if axis > 1 {
                    self.error(join(path, "axis"), "must be 0 or 1");
                }
                Profile::CosKx {
                    amplitude: amplitude?,
                    k: k?,
                    axis,
                }
            }
            "gaussian-bump" => {
                self.check_keys(t, path, &["profile", "amplitude", "center", "width", "offset"]);
                let amplitude = required(self, "amplitude");
                let width = required(self, "width");
                if let Some(w) = width {
                    if !(w > 0.0) {
                        self.error(join(path, "width"), "must be positive");
                    }
                }
                let center = self.f64_list(t, path, "center");
                if center.is_none() && !t.contains_key("center") {
                    self.error(join(path, "center"), "missing required key");
                }
                let center = center?;
                if center.is_empty() || center.len() > 2 {
                    self.error(join(path, "center"), "expected one or two coordinates");
                    return None;
                }
                Profile::GaussianBump {
                    amplitude: amplitude?,
                    center: [center[0], center.get(1).copied().unwrap_or(0.0)],
                    width: width?,
                }
            }
            other => {
                self.error(
                    join(path, "profile"),
                    format!("unknown profile {other:?} (expected const, cos-kx or gaussian-bump)"),
                );
                return None;
            }
        };
        Some(ProfileSpec { offset, profile })
    }

    fn profile_at(&mut self, t: &Table, path: &str, key: &str) -> Option<ProfileSpec> {
        t.get(key).and_then(|v| self.profile(v, &join(path, key)))
    }
}

const TOP: &[&str] = &["mesh", "operator", "coefficient", "propagation", "experiment"];

/// Parses and validates a scenario document.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigErrors> {
    let doc: Table = text.parse().map_err(|e: toml::de::Error| {
        ConfigErrors(vec![ConfigError {
            path: "<document>".into(),
            message: e.to_string().trim().to_string(),
        }])
    })?;
    let mut ctx = Ctx { errors: Vec::new() };
    ctx.check_keys(&doc, "", TOP);
    let empty = Table::new();
    let section = |ctx: &mut Ctx, key: &str, required: bool| match ctx.table(&doc, "", key) {
        Some(t) => t,
        None => {
            if required && !doc.contains_key(key) {
                ctx.error(key, "missing required table");
            }
            &empty
        }
    };
    let mesh_t = section(&mut ctx, "mesh", true);
    let op_t = section(&mut ctx, "operator", true);
    let coef_t = section(&mut ctx, "coefficient", false);
    let prop_t = section(&mut ctx, "propagation", false);
    let exp_t = section(&mut ctx, "experiment", false);

    let mesh = parse_mesh(&mut ctx, mesh_t);
    let operator = parse_operator(&mut ctx, op_t);
    let coefficient = parse_coefficient(&mut ctx, coef_t);
    let propagation = parse_propagation(&mut ctx, prop_t);
    let experiment = parse_experiment(&mut ctx, exp_t);

    if !ctx.errors.is_empty() {
        return Err(ConfigErrors(ctx.errors));
    }
    let config = ScenarioConfig {
        mesh: mesh.unwrap(),
        operator: operator.unwrap(),
        coefficient: coefficient.unwrap(),
        propagation: propagation.unwrap(),
        experiment,
        source: doc,
    };
    check_buildable(&mut ctx, &config);
    if ctx.errors.is_empty() {
        Ok(config)
    } else {
        Err(ConfigErrors(ctx.errors))
    }
}

pub fn load_config(path: &std::path::Path) -> Result<ScenarioConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        ConfigErrors(vec![ConfigError {
            path: path.display().to_string(),
            message: e.to_string(),
        }])
    })?;
    parse_config(&text)
}

fn parse_mesh(ctx: &mut Ctx, t: &Table) -> Option<MeshSpec> {
    ctx.check_keys(t, "mesh", &["dimension", "extent", "counts"]);
    let extent = ctx.f64_list(t, "mesh", "extent");
    let counts = ctx.usize_list(t, "mesh", "counts");
    for key in ["extent", "counts"] {
        if !t.contains_key(key) {
            ctx.error(join("mesh", key), "missing required key");
        }
    }
    let dimension = ctx.u64(t, "mesh", "dimension").map(|d| d as usize);
    if let Some(d) = dimension {
        if !(1..=2).contains(&d) {
            ctx.error("mesh.dimension", "must be 1 or 2");
        }
    }
    if let Some(c) = &counts {
        if c.iter().any(|&n| n < 3) {
            ctx.error("mesh.counts", "every axis needs at least 3 nodes");
        }
        if c.is_empty() || c.len() > 2 {
            ctx.error("mesh.counts", "expected one or two axes");
        }
    }
    if let Some(e) = &extent {
        if e.iter().any(|&l| !(l > 0.0)) {
            ctx.error("mesh.extent", "lengths must be positive");
        }
        if e.is_empty() || e.len() > 2 {
            ctx.error("mesh.extent", "expected one or two axes");
        }
    }
    let (extent, counts) = (extent?, counts?);
    if extent.len() != counts.len() {
        ctx.error("mesh.counts", format!("{} axes, but mesh.extent has {}", counts.len(), extent.len()));
    }
    if let Some(d) = dimension {
        if d != counts.len() {
            ctx.error("mesh.dimension", format!("{d} does not match {} axes in mesh.counts", counts.len()));
        }
    }
    Some(MeshSpec { extent, counts })
}

fn parse_operator(ctx: &mut Ctx, t: &Table) -> Option<OperatorSpec> {
    ctx.check_keys(t, "operator", &["a", "c"]);
    let a = ctx.profile_at(t, "operator", "a");
    if !t.contains_key("a") {
        ctx.error("operator.a", "missing required key");
    }
    let c = if t.contains_key("c") {
        ctx.profile_at(t, "operator", "c")
    } else {
        Some(ProfileSpec::constant(0.0))
    };
    Some(OperatorSpec { a: a?, c: c? })
}

fn parse_coefficient(ctx: &mut Ctx, t: &Table) -> Option<CoefficientSpec> {
    let path = "coefficient";
    ctx.check_keys(t, path, &["kind", "offset", "profiles", "amplitudes", "frequencies"]);
    let kind = match ctx.string(t, path, "kind").unwrap_or("constant") {
        "constant" => Some(FieldKind::Constant),
        "periodic" => Some(FieldKind::Periodic),
        "quasi-periodic" => Some(FieldKind::QuasiPeriodic),
        other => {
            ctx.error(
                "coefficient.kind",
                format!("unknown kind {other:?} (expected constant, periodic or quasi-periodic)"),
            );
            None
        }
    };
    let offset = if t.contains_key("offset") {
        ctx.profile_at(t, path, "offset")
    } else {
        Some(ProfileSpec::constant(0.0))
    };
    let profiles = match t.get("profiles") {
        None => Some(Vec::new()),
        Some(Value::Array(items)) => {
            let before = ctx.errors.len();
            let out: Vec<ProfileSpec> = items
                .iter()
                .enumerate()
                .filter_map(|(i, v)| ctx.profile(v, &format!("coefficient.profiles[{i}]")))
                .collect();
            (ctx.errors.len() == before).then_some(out)
        }
        Some(_) => {
            ctx.error("coefficient.profiles", "expected an array of profiles");
            None
        }
    };
    let frequencies = ctx.f64_list(t, path, "frequencies").or_else(|| (!t.contains_key("frequencies")).then(Vec::new));
    let (kind, profiles, frequencies) = (kind?, profiles?, frequencies?);
    let amplitudes = if t.contains_key("amplitudes") {
        ctx.f64_list(t, path, "amplitudes")?
    } else {
        vec![1.0; profiles.len()]
    };
    let expected = match kind {
        FieldKind::Constant => "no profiles",
        FieldKind::Periodic => "exactly one profile",
        FieldKind::QuasiPeriodic => "two or three profiles",
    };
    let count_ok = match kind {
        FieldKind::Constant => profiles.is_empty(),
        FieldKind::Periodic => profiles.len() == 1,
        FieldKind::QuasiPeriodic => (2..=3).contains(&profiles.len()),
    };
    if !count_ok {
        ctx.error("coefficient.profiles", format!("{kind:?} coefficient needs {expected}, got {}", profiles.len()));
    }
    if frequencies.len() != profiles.len() {
        ctx.error(
            "coefficient.frequencies",
            format!("{} frequencies for {} profiles", frequencies.len(), profiles.len()),
        );
    }
    if frequencies.contains(&0.0) {
        ctx.error("coefficient.frequencies", "frequencies must be nonzero");
    }
    if amplitudes.len() != profiles.len() {
        ctx.error(
            "coefficient.amplitudes",
            format!("{} amplitudes for {} profiles", amplitudes.len(), profiles.len()),
        );
    }
    Some(CoefficientSpec {
        kind,
        offset: offset?,
        profiles,
        amplitudes,
        frequencies,
    })
}

fn parse_propagation(ctx: &mut Ctx, t: &Table) -> Option<PropagationSpec> {
    let path = "propagation";
    ctx.check_keys(t, path, &["dt", "scheme"]);
    let dt = ctx.f64_or(t, path, "dt", DEFAULT_DT);
    let q = (1.0 / dt).round();
    let steps_per_unit = if dt > 0.0 && dt <= 1.0 && ((1.0 / dt) - q).abs() <= 1e-9 * q {
        Some(q as usize)
    } else {
        ctx.error("propagation.dt", format!("dt = {dt} must be 1/q for a positive integer q"));
        None
    };
    let scheme = match ctx.string(t, path, "scheme").unwrap_or("strang") {
        "strang" => Some(Scheme::StrangImplicit),
        "crank-nicolson" => Some(Scheme::CrankNicolson),
        other => {
            ctx.error("propagation.scheme", format!("unknown scheme {other:?} (expected strang or crank-nicolson)"));
            None
        }
    };
    Some(PropagationSpec {
        dt,
        steps_per_unit: steps_per_unit?,
        scheme: scheme?,
    })
}

fn parse_experiment(ctx: &mut Ctx, t: &Table) -> ExperimentSpec {
    let path = "experiment";
    let mut allowed = vec!["seed", "output", "run"];
    allowed.extend(Experiment::ALL.iter().map(|e| e.name()));
    ctx.check_keys(t, path, &allowed);
    let seed = ctx.u64(t, path, "seed").unwrap_or(0);
    let output = PathBuf::from(ctx.string(t, path, "output").unwrap_or(DEFAULT_OUTPUT));
    let run = match t.get("run") {
        None => None,
        Some(Value::Array(items)) => {
            let mut out = Vec::new();
            for (i, v) in items.iter().enumerate() {
                match v.as_str().and_then(Experiment::from_name) {
                    Some(e) => out.push(e),
                    None => ctx.error(format!("experiment.run[{i}]"), "unknown experiment"),
                }
            }
            Some(out)
        }
        Some(_) => {
            ctx.error("experiment.run", "expected an array of experiment names");
            None
        }
    };
    let empty = Table::new();
    let sub = |ctx: &mut Ctx, key: &str| ctx.table(t, path, key).unwrap_or(&empty);

    let st = sub(ctx, "spectrum");
    ctx.check_keys(st, "experiment.spectrum", &["count"]);
    let spectrum = SpectrumParams {
        count: ctx.positive_usize_or(st, "experiment.spectrum", "count", 6),
    };

    let p = "experiment.simulate";
    let st = sub(ctx, "simulate");
    ctx.check_keys(st, p, &["t0", "t1", "stride", "phase", "initial"]);
    let simulate = SimulateParams {
        t0: ctx.f64_or(st, p, "t0", 0.0),
        t1: ctx.f64_or(st, p, "t1", 1.0),
        stride: ctx.positive_usize_or(st, p, "stride", 50),
        phase: ctx.f64_list(st, p, "phase"),
        initial: ctx.profile_at(st, p, "initial").unwrap_or_else(|| ProfileSpec::constant(1.0)),
    };
    if simulate.t1 < simulate.t0 {
        ctx.error("experiment.simulate.t1", "must not precede t0");
    }
    if let Some(ph) = &simulate.phase {
        if ph.iter().any(|x| !(0.0..1.0).contains(x)) {
            ctx.error("experiment.simulate.phase", "torus coordinates must lie in [0, 1)");
        }
    }

    let p = "experiment.bundle";
    let st = sub(ctx, "bundle");
    ctx.check_keys(st, p, &["samples", "sampling", "tol", "max_t", "invariance_times"]);
    let sampling = match ctx.string(st, p, "sampling").unwrap_or("grid") {
        "grid" => SampleMode::Grid,
        "random" => SampleMode::Random,
        other => {
            ctx.error("experiment.bundle.sampling", format!("unknown sampling {other:?} (expected grid or random)"));
            SampleMode::Grid
        }
    };
    let bundle = BundleParams {
        samples: ctx.positive_usize_or(st, p, "samples", 8),
        sampling,
        tol: ctx.f64_or(st, p, "tol", floquet_core::bundle::DEFAULT_TOL),
        max_t: ctx.positive_usize_or(st, p, "max_t", floquet_core::bundle::DEFAULT_MAX_T),
        invariance_times: ctx.f64_list(st, p, "invariance_times").unwrap_or_else(|| vec![0.5, 1.0, 2.0]),
    };
    if !(bundle.tol > 0.0) {
        ctx.error("experiment.bundle.tol", "must be positive");
    }
    if bundle.invariance_times.iter().any(|&t| t < 0.0) {
        ctx.error("experiment.bundle.invariance_times", "times must be nonnegative");
    }

    let p = "experiment.separation";
    let st = sub(ctx, "separation");
    ctx.check_keys(st, p, &["samples", "k_min", "k_max", "trials", "substeps", "pairs", "residual_threshold"]);
    let separation = SeparationParams {
        samples: ctx.positive_usize_or(st, p, "samples", 16),
        k_min: ctx.usize_or(st, p, "k_min", 2),
        k_max: ctx.positive_usize_or(st, p, "k_max", 12),
        trials: ctx.positive_usize_or(st, p, "trials", 4),
        substeps: ctx.positive_usize_or(st, p, "substeps", 1),
        pairs: ctx.usize_or(st, p, "pairs", 8),
        residual_threshold: ctx.f64_or(st, p, "residual_threshold", 0.05),
    };
    if separation.k_max <= separation.k_min {
        ctx.error("experiment.separation.k_max", "must exceed k_min");
    }

    let p = "experiment.uniqueness";
    let st = sub(ctx, "uniqueness");
    ctx.check_keys(st, p, &["pairs", "ladder", "t_fwd"]);
    let uniqueness = UniquenessParams {
        pairs: ctx.positive_usize_or(st, p, "pairs", 5),
        ladder: ctx.f64_list(st, p, "ladder").unwrap_or_else(|| vec![2.0, 4.0, 8.0, 16.0]),
        t_fwd: ctx.f64_or(st, p, "t_fwd", 1.0),
    };
    if uniqueness.ladder.is_empty() || uniqueness.ladder.iter().any(|&t| t < 0.0) {
        ctx.error("experiment.uniqueness.ladder", "expected nonnegative backstart times");
    }
    if uniqueness.t_fwd < 0.0 {
        ctx.error("experiment.uniqueness.t_fwd", "must be nonnegative");
    }

    let p = "experiment.membership";
    let st = sub(ctx, "membership");
    ctx.check_keys(st, p, &["t_back", "t_fwd"]);
    let membership = MembershipParams {
        t_back: ctx.f64_list(st, p, "t_back").unwrap_or_else(|| vec![4.0, 8.0]),
        t_fwd: ctx.usize_or(st, p, "t_fwd", 4),
    };
    if membership.t_back.is_empty() || membership.t_back.iter().any(|&t| t < 0.0) {
        ctx.error("experiment.membership.t_back", "expected nonnegative backstart times");
    }

    ExperimentSpec {
        seed,
        output,
        run,
        spectrum,
        simulate,
        bundle,
        separation,
        uniqueness,
        membership,
    }
}

/// Builds the discrete objects once so that sign and shape violations are
/// reported against the keys that caused them.
fn check_buildable(ctx: &mut Ctx, cfg: &ScenarioConfig) {
    let mesh = match cfg.build_mesh() {
        Ok(m) => m,
        Err(e) => {
            ctx.error("mesh", e.to_string());
            return;
        }
    };
    if let Err(e) = EllipticOperator::from_profiles(mesh.clone(), |p| cfg.operator.a.eval(p), |p| cfg.operator.c.eval(p)) {
        let path = match &e {
            floquet_core::Error::Invalid { what: "robin coefficient", .. } => "operator.c",
            _ => "operator.a",
        };
        ctx.error(path, e.to_string());
    }
    if let Err(e) = build_field(&cfg.coefficient, &mesh) {
        ctx.error("coefficient", e.to_string());
    }
    let modes = cfg.coefficient.profiles.len();
    if let Some(ph) = &cfg.experiment.simulate.phase {
        if ph.len() != modes {
            ctx.error(
                "experiment.simulate.phase",
                format!("{} coordinates for a hull with {modes}", ph.len()),
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[mesh]\nextent = 1.0\ncounts = 21\n[operator]\na = 1.0\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.propagation.dt, 1e-3);
        assert_eq!(cfg.propagation.steps_per_unit, 1000);
        assert_eq!(cfg.propagation.scheme, Scheme::StrangImplicit);
        assert_eq!(cfg.coefficient.kind, FieldKind::Constant);
        assert_eq!(cfg.experiment.uniqueness.ladder, vec![2.0, 4.0, 8.0, 16.0]);
        assert_eq!(cfg.operator.c, ProfileSpec::constant(0.0));
        assert!(cfg.build_propagator().is_ok());
    }

    #[test]
    fn profiles_parse() {
        let mut ctx = Ctx { errors: Vec::new() };
        let v: Value = toml::from_str::<Table>("p = { profile = \"cos-kx\", amplitude = 2, k = 3.0, offset = 1 }")
            .unwrap()
            .remove("p")
            .unwrap();
        let p = ctx.profile(&v, "x").unwrap();
        assert_eq!(p.eval([0.0, 0.0]), 3.0);
        let v = Value::Table(toml::from_str("profile = \"gaussian-bump\"\namplitude = 1\nwidth = -1\n").unwrap());
        assert!(ctx.profile(&v, "y").is_none());
        let paths: Vec<&str> = ctx.errors.iter().map(|e| e.path.as_str()).collect();
        assert_eq!(paths, vec!["y.width", "y.center"]);
    }

    #[test]
    fn dt_must_divide_one() {
        let e = parse_config(&format!("{MINIMAL}[propagation]\ndt = 0.3\n")).unwrap_err();
        assert_eq!(e.paths(), vec!["propagation.dt"]);
    }
}
