//! Scenario files: what to build, which constants to use and which checks to
//! run over which parameter grids.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sampler::{SamplerSpec, Transform};
use crate::error::{BenchError, Result};
use crate::inequalities::{extended_f64, KernelSource, PhiSchedule, Quadrature, Statement, Tolerance};
use crate::model_space::{SpaceKind, SpaceSpec, Stencil};
use crate::transport::MAX_SUPPORT;

/// Largest node count the dense eigensolver is allowed to take on.
pub const MAX_DENSE_NODES: usize = 4096;

/// Mesh constant used when a scenario gives no tolerance at all.
pub const DEFAULT_MESH_C: f64 = 0.01;

/// Scenarios shipped with the crate, by name.
pub const BUNDLED: [(&str, &str); 5] = [
    ("circle-flat", include_str!("../../scenarios/circle-flat.toml")),
    ("interval-ou", include_str!("../../scenarios/interval-ou.toml")),
    ("sphere-round", include_str!("../../scenarios/sphere-round.toml")),
    ("sphere-falsify", include_str!("../../scenarios/sphere-falsify.toml")),
    ("transport-sphere", include_str!("../../scenarios/transport-sphere.toml")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub space: SpaceSpec,
    pub curvature: CurvatureSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerSpec>,
    #[serde(default)]
    pub tolerance: ToleranceSpec,
    #[serde(default)]
    pub quadrature: Quadrature,
    /// Default heat-kernel source for the two-point checks.
    #[serde(default)]
    pub kernel: KernelSource,
    #[serde(default)]
    pub transport: TransportSpec,
    /// Runs with inadmissible constants: failures are expected and do not
    /// count against the exit status.
    #[serde(default)]
    pub falsification: bool,
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureMode {
    /// K from the closed form for the model space.
    Analytic,
    /// K given in the scenario.
    Explicit,
    /// K estimated from the discrete Γ₂ over the sampled functions.
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvatureSpec {
    pub mode: CurvatureMode,
    #[serde(with = "extended_f64")]
    pub n: f64,
    /// Required for, and only allowed with, the explicit mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    /// Added to the resolved K (negative values claim more curvature than
    /// the space has).
    #[serde(default)]
    pub shift: f64,
}

/// Tolerance override for one statement; unset fields fall back to the
/// scenario defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel: Option<f64>,
}

/// Absolute tolerance is `abs` if given, else `mesh_c·h²`; `rel` is relative
/// to |rhs|.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub statements: BTreeMap<String, ToleranceOverride>,
}

impl ToleranceSpec {
    /// Tolerance for `statement` on a mesh of width `h`, scaled by `scale`.
    pub fn resolve(&self, statement: Statement, h: f64, scale: f64) -> Tolerance {
        let o = self.statements.get(statement.as_str()).cloned().unwrap_or_default();
        let rel = o.rel.or(self.rel).unwrap_or(0.0);
        let tol = match (o.abs, o.mesh_c) {
            (Some(abs), _) => Tolerance::absolute(abs, format!("abs={abs}")),
            (None, Some(c)) => Tolerance::mesh(c, h),
            (None, None) => match (self.abs, self.mesh_c) {
                (Some(abs), _) => Tolerance::absolute(abs, format!("abs={abs}")),
                (None, c) => Tolerance::mesh(c.unwrap_or(DEFAULT_MESH_C), h),
            },
        };
        let note = if rel > 0.0 { format!("{} + rel={rel}", tol.note) } else { tol.note };
        Tolerance { abs: tol.abs, rel, note }.scaled(scale)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportSpec {
    /// Allow exact transport on spaces larger than the support cap by
    /// keeping the heaviest atoms and adding the trimmed-mass slack.
    #[serde(default)]
    pub subsample: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default = "all_formats")]
    pub formats: Vec<Format>,
}

fn all_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv, Format::Svg]
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: None, formats: all_formats() }
    }
}

/// Two nodes given directly or by their distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum PairSpec {
    Nodes { x: usize, y: usize },
    Distance { distance: f64 },
}

/// One check and its parameter grids. Which grids apply depends on the
/// statement; see [`CheckSpec::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub statement: Statement,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub t: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub s: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eps: Vec<f64>,
    /// Absolute HW0 radii.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub r: Vec<f64>,
    /// HW0 radii as multiples of the automatic radius.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub r_scale: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub p: Vec<f64>,
    /// Geodesic angles for the series form of the heat-kernel bound.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairs: Vec<PairSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phi: Vec<PhiSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<Transform>,
    /// Smoothing time applied to the Dirac masses of contraction checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presmooth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSource>,
}

/// Parameter grids a statement takes, and whether it consumes sampled
/// functions.
struct Shape {
    grids: &'static [&'static str],
    required: &'static [&'static str],
    functions: bool,
}

fn shape(statement: Statement) -> Shape {
    use Statement::*;
    match statement {
        GradientIntegral | GradientClosed | VarianceUpper | VarianceLower | LocalLogsob => {
            Shape { grids: &["t"], required: &["t"], functions: true }
        }
        DriftGradient => Shape { grids: &["t", "eps"], required: &["t"], functions: true },
        LogHarnack => Shape { grids: &["t", "pairs", "phi"], required: &["t", "pairs"], functions: true },
        H1 | H2 => Shape { grids: &["t", "s", "pairs"], required: &["t", "s", "pairs"], functions: true },
        H1Kernel | H2Kernel => Shape { grids: &["t", "s", "pairs"], required: &["t", "s", "pairs"], functions: false },
        HeatLower => Shape { grids: &["t", "pairs", "theta"], required: &["t"], functions: false },
        Hw0 => Shape { grids: &["r", "r_scale"], required: &[], functions: true },
        Hwi => Shape { grids: &[], required: &[], functions: true },
        Lichnerowicz => Shape { grids: &[], required: &[], functions: false },
        ContractionCtpp | ContractionCtp => {
            Shape { grids: &["t", "p", "pairs"], required: &["t", "pairs"], functions: false }
        }
    }
}

impl Statement {
    /// Whether checks of this statement run over sampled functions.
    pub fn uses_functions(&self) -> bool {
        shape(*self).functions
    }

    /// Names of the parameter grids a check of this statement accepts.
    pub fn grids(&self) -> &'static [&'static str] {
        shape(*self).grids
    }

    /// Whether the check needs strictly positive functions.
    pub fn needs_positive(&self) -> bool {
        matches!(self, Statement::LogHarnack | Statement::H1 | Statement::H2)
    }

    /// Whether the check transports measures.
    pub fn uses_transport(&self) -> bool {
        matches!(self, Statement::Hw0 | Statement::Hwi | Statement::ContractionCtpp | Statement::ContractionCtp)
    }
}

impl CheckSpec {
    pub fn new(statement: Statement) -> Self {
        Self {
            statement,
            t: Vec::new(),
            s: Vec::new(),
            eps: Vec::new(),
            r: Vec::new(),
            r_scale: Vec::new(),
            p: Vec::new(),
            theta: Vec::new(),
            pairs: Vec::new(),
            phi: Vec::new(),
            transform: None,
            presmooth: None,
            kernel: None,
        }
    }

    fn grid_len(&self, name: &str) -> usize {
        match name {
            "t" => self.t.len(),
            "s" => self.s.len(),
            "eps" => self.eps.len(),
            "r" => self.r.len(),
            "r_scale" => self.r_scale.len(),
            "p" => self.p.len(),
            "theta" => self.theta.len(),
            "pairs" => self.pairs.len(),
            "phi" => self.phi.len(),
            _ => unreachable!("unknown grid {name}"),
        }
    }

    /// Checks that the grids match the statement and their values are
    /// admissible.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let sh = shape(self.statement);
        for name in ["t", "s", "eps", "r", "r_scale", "p", "theta", "pairs", "phi"] {
            let len = self.grid_len(name);
            if len > 0 && !sh.grids.contains(&name) {
                return Err(format!("grid `{name}` does not apply to {}", self.statement));
            }
            if len == 0 && sh.required.contains(&name) {
                return Err(format!("grid `{name}` is required and must be nonempty"));
            }
        }
        if self.transform.is_some() && !sh.functions {
            return Err(format!("{} does not use sampled functions", self.statement));
        }
        if self.presmooth.is_some() && !self.statement.uses_transport() {
            return Err("`presmooth` applies to contraction checks only".into());
        }
        let finite_nonneg = |v: &f64| v.is_finite() && *v >= 0.0;
        if !self.t.iter().all(finite_nonneg) || !self.s.iter().all(finite_nonneg) {
            return Err("times must be finite and nonnegative".into());
        }
        let positive_t = matches!(
            self.statement,
            Statement::LogHarnack | Statement::H1 | Statement::H2 | Statement::H1Kernel | Statement::H2Kernel | Statement::HeatLower
        );
        if positive_t && self.t.contains(&0.0) {
            return Err(format!("{} needs t > 0", self.statement));
        }
        if !self.eps.iter().all(|&e| e > 0.0 && e.is_finite()) {
            return Err("eps must be positive".into());
        }
        if !self.r.iter().chain(&self.r_scale).all(|&r| r > 0.0 && r.is_finite()) {
            return Err("radii must be positive".into());
        }
        if !self.p.iter().all(|&p| p >= 1.0 && p.is_finite()) {
            return Err("transport exponents must be at least 1".into());
        }
        if !self.theta.iter().all(|&a| (0.0..=std::f64::consts::PI).contains(&a)) {
            return Err("angles must lie in [0, pi]".into());
        }
        if !self.theta.is_empty() && !self.pairs.is_empty() {
            return Err("give either `theta` (series form) or `pairs`, not both".into());
        }
        if self.statement == Statement::HeatLower && self.theta.is_empty() && self.pairs.is_empty() {
            return Err("heat_lower needs `theta` or `pairs`".into());
        }
        if let Some(t0) = self.presmooth {
            if !(t0 >= 0.0 && t0.is_finite()) {
                return Err("presmooth must be a nonnegative time".into());
            }
        }
        for pair in &self.pairs {
            if let PairSpec::Distance { distance } = pair {
                if !(*distance >= 0.0 && distance.is_finite()) {
                    return Err("pair distances must be nonnegative".into());
                }
            }
        }
        for phi in &self.phi {
            for &t in &self.t {
                phi.validate(t).map_err(|e| e.to_string())?;
            }
        }
        Ok(())
    }
}

fn stage_err(stage: &'static str, message: impl Into<String>) -> BenchError {
    BenchError::Scenario { stage, message: message.into() }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| stage_err("parse", e.to_string()))
    }

    /// Reads a scenario file; a bare bundled name (e.g. `circle-flat`) that
    /// is not an existing path resolves to the shipped copy.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            let name = path.to_string_lossy();
            if let Some((_, text)) = BUNDLED.iter().find(|(n, _)| *n == name) {
                return Self::from_toml(text);
            }
        }
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path.display().to_string(), e))?;
        Self::from_toml(&text)
    }

    pub fn bundled(name: &str) -> Result<Self> {
        let (_, text) = BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| stage_err("parse", format!("no bundled scenario named {name:?}")))?;
        Self::from_toml(text)
    }

    /// Static validation, run before anything is built. Enforces the node
    /// and transport-support caps.
    pub fn validate(&self) -> Result<()> {
        let v = |m: String| Err(stage_err("validate", m));
        if self.name.is_empty() {
            return v("scenario name is empty".into());
        }
        self.space.validate()?;
        let nodes = self.space.node_count()?;
        if nodes > MAX_DENSE_NODES {
            return Err(BenchError::NodeCap { requested: nodes, cap: MAX_DENSE_NODES });
        }
        let c = &self.curvature;
        match (c.mode, c.k) {
            (CurvatureMode::Explicit, None) => return v("explicit curvature needs `k`".into()),
            (CurvatureMode::Explicit, Some(k)) if !k.is_finite() => return v(format!("k = {k} is not finite")),
            (CurvatureMode::Analytic | CurvatureMode::Estimated, Some(_)) => {
                return v("`k` is only allowed with the explicit mode".into())
            }
            _ => {}
        }
        if c.n.is_nan() || c.n <= 0.0 || !c.shift.is_finite() {
            return v(format!("invalid curvature n = {}, shift = {}", c.n, c.shift));
        }
        let needs_sampler = c.mode == CurvatureMode::Estimated || self.checks.iter().any(|ch| ch.statement.uses_functions());
        match &self.sampler {
            None if needs_sampler => return v("a [sampler] section is required by the checks or the curvature mode".into()),
            Some(s) => s.validate().map_err(|m| stage_err("validate", m))?,
            None => {}
        }
        for (name, o) in &self.tolerance.statements {
            if !Statement::ALL.iter().any(|s| s.as_str() == name) {
                return v(format!("tolerance override for unknown statement {name:?}"));
            }
            if [o.abs, o.mesh_c, o.rel].iter().flatten().any(|x| !(*x >= 0.0)) {
                return v(format!("negative tolerance for {name}"));
            }
        }
        if [self.tolerance.abs, self.tolerance.mesh_c, self.tolerance.rel].iter().flatten().any(|x| !(*x >= 0.0)) {
            return v("negative tolerance".into());
        }
        let is_sphere = self.space.kind == SpaceKind::Sphere2;
        for (i, check) in self.checks.iter().enumerate() {
            check.validate().map_err(|m| stage_err("validate", format!("check #{i} ({}): {m}", check.statement)))?;
            match (check.statement, check.transform) {
                (s, Some(Transform::Raw)) if s.needs_positive() => {
                    return v(format!("check #{i}: {s} needs a positive transform"));
                }
                (Statement::Hw0 | Statement::Hwi, Some(t)) if t != Transform::NormalizedDensity => {
                    return v(format!("check #{i}: {} takes normalized_density functions", check.statement));
                }
                _ => {}
            }
            let kernel = check.kernel.unwrap_or(self.kernel);
            if (kernel == KernelSource::Legendre || !check.theta.is_empty()) && !(is_sphere && self.space.normalize_measure) {
                return v(format!("check #{i}: the Legendre series needs the normalised sphere"));
            }
            let contraction = matches!(check.statement, Statement::ContractionCtp | Statement::ContractionCtpp);
            if contraction && matches!(self.space.stencil, Some(Stencil::Harmonic { .. })) {
                return v(format!("check #{i}: harmonic collocation does not preserve positivity of evolved measures"));
            }
            if check.statement.uses_transport() {
                // W₂ on 1D spaces uses the quantile solver. Contraction costs
                // may be concave (K < 0, not known before the build), so they
                // are held to the support cap like everything on the sphere.
                let quantile = !is_sphere && matches!(check.statement, Statement::Hw0 | Statement::Hwi);
                if !quantile && nodes > MAX_SUPPORT && !self.transport.subsample {
                    return Err(BenchError::SupportCap { size: nodes, cap: MAX_SUPPORT });
                }
            }
        }
        Ok(())
    }
}
