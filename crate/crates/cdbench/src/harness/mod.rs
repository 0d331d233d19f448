//! Scenario execution: build the space once, sample test functions, run the
//! cross product of checks × grids × functions and collect the reports.
//!
//! Tasks are enumerated in a fixed order (check, grid point, function) and
//! may run in parallel; results are collected in task order, so a scenario
//! produces the same reports whatever the thread count.

pub mod emit;
pub mod sampler;
pub mod scenario;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::generator::{analytic_k, assemble_generator, estimate_k, CurvaturePair};
use crate::inequalities::*;
use crate::model_space::build_model_space;
use crate::semigroup::{cache_path, spectral_decompose, SemigroupCache};
use crate::transport::DiscreteMeasure;

pub use emit::{emit_all, emit_reports, read_json, ReportLine, SummaryLine};
pub use sampler::{apply_transform, raw_functions, sample_functions, Sample, SamplerSpec, Transform};
pub use scenario::{
    CheckSpec, CurvatureMode, CurvatureSpec, Format, OutputSpec, PairSpec, Scenario, ToleranceSpec, BUNDLED,
    MAX_DENSE_NODES,
};

/// Presmoothing time for contraction checks when the scenario gives none.
pub const DEFAULT_PRESMOOTH: f64 = 0.05;

/// Settings that change how a scenario runs but not what it checks.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Where eigendecompositions are cached between runs.
    pub cache_dir: Option<PathBuf>,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
    /// Multiplies every tolerance.
    pub tol_scale: f64,
    /// Restrict the run to these statements.
    pub only: Option<Vec<Statement>>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { cache_dir: None, jobs: None, tol_scale: 1.0, only: None }
    }
}

/// Quantities fixed by the build phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub nodes: usize,
    pub h: f64,
    pub k: f64,
    #[serde(with = "extended_f64")]
    pub n: f64,
    /// Closed-form K for the space when one exists (before any shift).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic_k: Option<f64>,
    pub spectral_gap: f64,
    pub tol_scale: f64,
    pub samples: Vec<String>,
}

/// One report and the scenario check it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportEntry {
    pub check: usize,
    pub report: CheckReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatementSummary {
    pub count: usize,
    pub passed: usize,
    pub failed: usize,
    pub degraded: usize,
    pub worst_margin: f64,
    /// Position of the worst report in the report list.
    pub worst_index: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub degraded: usize,
    pub falsification: bool,
    /// Whether a gradient or variance bound failed (the falsification target).
    pub falsified: bool,
    /// All checks pass, or the scenario is a falsification run.
    pub ok: bool,
    pub statements: BTreeMap<String, StatementSummary>,
}

impl Summary {
    pub fn from_reports(reports: &[ReportEntry], falsification: bool) -> Self {
        let mut s = Summary { falsification, ..Summary::default() };
        for (i, e) in reports.iter().enumerate() {
            let r = &e.report;
            s.total += 1;
            let st = s.statements.entry(r.statement.as_str().to_string()).or_insert(StatementSummary {
                count: 0,
                passed: 0,
                failed: 0,
                degraded: 0,
                worst_margin: f64::INFINITY,
                worst_index: i,
            });
            st.count += 1;
            if r.pass {
                s.passed += 1;
                st.passed += 1;
            } else {
                s.failed += 1;
                st.failed += 1;
                if matches!(
                    r.statement,
                    Statement::GradientIntegral
                        | Statement::GradientClosed
                        | Statement::VarianceUpper
                        | Statement::VarianceLower
                ) {
                    s.falsified = true;
                }
            }
            if r.diagnostics.degraded {
                s.degraded += 1;
                st.degraded += 1;
            }
            if r.margin < st.worst_margin {
                st.worst_margin = r.margin;
                st.worst_index = i;
            }
        }
        s.ok = falsification || s.failed == 0;
        s
    }
}

/// Wall-clock phases of a run. Kept out of the JSON reports so that they
/// stay byte-identical between runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub build_secs: f64,
    pub sample_secs: f64,
    pub check_secs: f64,
    pub cache_hit: bool,
}

#[derive(Debug, Clone)]
pub struct ReportSet {
    pub scenario: Scenario,
    pub resolved: Resolved,
    pub reports: Vec<ReportEntry>,
    pub summary: Summary,
    pub timing: Timing,
}

fn stage(stage: &'static str) -> impl Fn(BenchError) -> BenchError {
    move |e| match e {
        e @ BenchError::Scenario { .. } => e,
        e => BenchError::Scenario { stage, message: e.to_string() },
    }
}

/// Builds the generator and its eigendecomposition, through the cache
/// directory when one is given.
fn build_cache(scn: &Scenario, opts: &RunOptions) -> Result<(Arc<SemigroupCache>, bool)> {
    let space = Arc::new(build_model_space(&scn.space).map_err(stage("space"))?);
    let gen = Arc::new(assemble_generator(space).map_err(stage("generator"))?);
    let Some(dir) = &opts.cache_dir else {
        return Ok((Arc::new(spectral_decompose(gen).map_err(stage("semigroup"))?), false));
    };
    let spec_json = serde_json::to_string(&scn.space).expect("space specs serialise");
    let path = cache_path(dir, &spec_json);
    if path.exists() {
        if let Ok(cache) = SemigroupCache::load(&path, &spec_json, gen.clone()) {
            return Ok((Arc::new(cache), true));
        }
    }
    let cache = spectral_decompose(gen).map_err(stage("semigroup"))?;
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir.display().to_string(), e))?;
    cache.dump(&path, &spec_json).map_err(stage("cache"))?;
    Ok((Arc::new(cache), false))
}

/// Transform a check's functions go through.
fn effective_transform(check: &CheckSpec, default: Transform) -> Transform {
    if let Some(t) = check.transform {
        return t;
    }
    match check.statement {
        Statement::Hw0 | Statement::Hwi => Transform::NormalizedDensity,
        s if s.needs_positive() => match default {
            Transform::PositiveExp | Transform::PositiveFloor { .. } | Transform::NormalizedDensity => default,
            Transform::Raw => Transform::PositiveExp,
        },
        _ => default,
    }
}

fn transform_key(t: Transform) -> String {
    format!("{t:?}")
}

/// Node pair for a selector: explicit indices, or two nodes at roughly the
/// requested distance (from the north pole on the sphere, from θ = 0 on the
/// circle, centred on the interval).
pub fn resolve_pair(space: &crate::model_space::ModelSpace, pair: &PairSpec) -> Result<(usize, usize)> {
    use crate::model_space::SpaceKind;
    match *pair {
        PairSpec::Nodes { x, y } => {
            for i in [x, y] {
                if i >= space.len() {
                    return Err(BenchError::IndexOutOfRange { index: i, len: space.len() });
                }
            }
            Ok((x, y))
        }
        PairSpec::Distance { distance: d } => {
            if d > space.diameter + 1e-12 {
                return Err(BenchError::InvalidArgument(format!(
                    "pair distance {d} exceeds the diameter {}",
                    space.diameter
                )));
            }
            Ok(match space.kind {
                SpaceKind::Sphere2 => {
                    let x = space.nearest_node([0.0, 0.0, 1.0]);
                    let p = space.coords[x];
                    let lat = p[2].clamp(-1.0, 1.0).acos();
                    let lon = p[1].atan2(p[0]);
                    let a = lat + d;
                    let y = space.nearest_node([a.sin() * lon.cos(), a.sin() * lon.sin(), a.cos()]);
                    (x, y)
                }
                SpaceKind::Circle => (0, space.nearest_node([d, 0.0, 0.0])),
                SpaceKind::Interval => {
                    let mid = 0.5 * (space.spec.a + space.spec.b);
                    (space.nearest_node([mid - 0.5 * d, 0.0, 0.0]), space.nearest_node([mid + 0.5 * d, 0.0, 0.0]))
                }
            })
        }
    }
}

/// One point of a check's parameter grid.
#[derive(Debug, Clone, Default)]
struct GridPoint {
    t: Option<f64>,
    s: Option<f64>,
    eps: Option<f64>,
    radius: Option<HwiRadius>,
    p: Option<f64>,
    theta: Option<f64>,
    pair: Option<(usize, usize)>,
    phi: Option<usize>,
}

fn expand<T: Copy>(points: Vec<GridPoint>, values: &[T], set: impl Fn(&mut GridPoint, T)) -> Vec<GridPoint> {
    if values.is_empty() {
        return points;
    }
    points
        .into_iter()
        .flat_map(|g| {
            values.iter().map(|&v| {
                let mut g = g.clone();
                set(&mut g, v);
                g
            }).collect::<Vec<_>>()
        })
        .collect()
}

/// Grid points of a check in a fixed order, with statement defaults filled
/// in for omitted optional grids.
fn grid_points(check: &CheckSpec, pairs: &[(usize, usize)]) -> Vec<GridPoint> {
    let mut eps = check.eps.clone();
    if check.statement == Statement::DriftGradient && eps.is_empty() {
        eps.push(1e-12);
    }
    let mut radii: Vec<HwiRadius> = check.r.iter().map(|&r| HwiRadius::Value(r)).collect();
    radii.extend(check.r_scale.iter().map(|&c| HwiRadius::Scaled(c)));
    if matches!(check.statement, Statement::Hw0 | Statement::Hwi) && radii.is_empty() {
        radii.push(HwiRadius::Scaled(1.0));
    }
    let mut p = check.p.clone();
    if check.statement.uses_transport() && !matches!(check.statement, Statement::Hw0 | Statement::Hwi) && p.is_empty() {
        p.push(1.0);
    }
    let phis: Vec<usize> = if check.statement == Statement::LogHarnack { (0..check.phi.len().max(1)).collect() } else { vec![] };

    let mut pts = vec![GridPoint::default()];
    pts = expand(pts, &check.t, |g, v| g.t = Some(v));
    pts = expand(pts, &check.s, |g, v| g.s = Some(v));
    pts = expand(pts, &eps, |g, v| g.eps = Some(v));
    pts = expand(pts, &radii, |g, v| g.radius = Some(v));
    pts = expand(pts, &p, |g, v| g.p = Some(v));
    pts = expand(pts, &check.theta, |g, v| g.theta = Some(v));
    pts = expand(pts, pairs, |g, v| g.pair = Some(v));
    expand(pts, &phis, |g, v| g.phi = Some(v))
}

struct Task {
    check: usize,
    point: GridPoint,
    sample: Option<usize>,
}

struct Context<'a> {
    scn: &'a Scenario,
    cache: &'a SemigroupCache,
    kn: CurvaturePair,
    tol_scale: f64,
    samples: BTreeMap<String, Vec<Sample>>,
}

impl Context<'_> {
    fn run(&self, task: &Task) -> Result<CheckReport> {
        let check = &self.scn.checks[task.check];
        let statement = check.statement;
        let space = &self.cache.gen.space;
        let tol = self.scn.tolerance.resolve(statement, space.h, self.tol_scale);
        let env = CheckEnv::new(self.cache, self.kn, tol)
            .with_quadrature(self.scn.quadrature)
            .with_kernel(check.kernel.unwrap_or(self.scn.kernel));
        let sample = task.sample.map(|i| {
            let default = self.scn.sampler.as_ref().map(|s| s.transform).unwrap_or_default();
            &self.samples[&transform_key(effective_transform(check, default))][i]
        });
        let f = || &sample.expect("function checks have a sample").values;
        let g = &task.point;
        let t = g.t.unwrap_or(0.0);
        let (x, y) = g.pair.unwrap_or((0, 0));
        use Statement::*;
        let mut report = match statement {
            GradientIntegral => check_gradient(&env, f(), t, GradientVariant::Integral),
            GradientClosed => check_gradient(&env, f(), t, GradientVariant::Closed),
            VarianceUpper => check_variance(&env, f(), t, VarianceSide::Upper),
            VarianceLower => check_variance(&env, f(), t, VarianceSide::Lower),
            DriftGradient => check_drift_gradient(&env, f(), t, g.eps.unwrap_or(1e-12)),
            LogHarnack => {
                let identity = PhiSchedule::Identity;
                let phi = g.phi.and_then(|i| check.phi.get(i)).unwrap_or(&identity);
                check_log_harnack(&env, f(), x, y, t, phi)
            }
            H1 => check_explicit_harnack(&env, f(), x, y, t, g.s.unwrap_or(0.0), HarnackForm::H1),
            H2 => check_explicit_harnack(&env, f(), x, y, t, g.s.unwrap_or(0.0), HarnackForm::H2),
            H1Kernel => check_kernel_kl(&env, t, g.s.unwrap_or(0.0), x, y, HarnackForm::H1),
            H2Kernel => check_kernel_kl(&env, t, g.s.unwrap_or(0.0), x, y, HarnackForm::H2),
            HeatLower => match g.theta {
                Some(theta) => heat_lower_series(t, theta, self.kn.k, &env.tol),
                None => check_kernel_lower(&env, t, x, y),
            },
            LocalLogsob => check_local_logsob(&env, f(), t),
            Hw0 => check_hwi(&env, f(), g.radius.unwrap_or(HwiRadius::Auto), HwiForm::Hw0),
            Hwi => check_hwi(&env, f(), HwiRadius::Auto, HwiForm::Hwi),
            Lichnerowicz => check_lichnerowicz(&env),
            ContractionCtpp | ContractionCtp => {
                let t0 = check.presmooth.unwrap_or(DEFAULT_PRESMOOTH);
                let nu = |i: usize| DiscreteMeasure::dirac(space.clone(), i)?.evolve(self.cache, t0);
                let rate = if statement == ContractionCtp { Rate::Ctp } else { Rate::Ctpp };
                nu(x).and_then(|a| Ok((a, nu(y)?))).and_then(|(a, b)| check_contraction(&env, &a, &b, t, g.p.unwrap_or(1.0), rate))
            }
        }
        .map_err(|e| BenchError::Scenario {
            stage: "check",
            message: format!(
                "check #{} ({statement}) at {:?}{}: {e}",
                task.check,
                task.point,
                sample.map(|s| format!(" with {}", s.id)).unwrap_or_default()
            ),
        })?;
        if let Some(s) = sample {
            report.witness.f = Some(s.id.clone());
        }
        Ok(report)
    }
}

/// Runs every check of the scenario and assembles the report set.
pub fn run_scenario(scn: &Scenario, opts: &RunOptions) -> Result<ReportSet> {
    match opts.jobs {
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j.max(1))
                .build()
                .map_err(|e| BenchError::Scenario { stage: "threads", message: e.to_string() })?;
            pool.install(|| run_inner(scn, opts))
        }
        None => run_inner(scn, opts),
    }
}

fn run_inner(scn: &Scenario, opts: &RunOptions) -> Result<ReportSet> {
    scn.validate()?;
    if !(opts.tol_scale > 0.0 && opts.tol_scale.is_finite()) {
        return Err(BenchError::Scenario { stage: "validate", message: format!("tol scale {}", opts.tol_scale) });
    }
    let mut scn = scn.clone();
    if let Some(only) = &opts.only {
        scn.checks.retain(|c| only.contains(&c.statement));
    }
    let clock = Instant::now();
    let (cache, cache_hit) = build_cache(&scn, opts)?;
    let space = cache.gen.space.clone();
    let build_secs = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let n = scn.curvature.n;
    let raw = match &scn.sampler {
        Some(spec) => raw_functions(&cache, spec, n).map_err(stage("sampler"))?,
        None => Vec::new(),
    };
    let analytic = analytic_k(&space, n).ok();
    let base_k = match scn.curvature.mode {
        CurvatureMode::Analytic => analytic_k(&space, n).map_err(stage("curvature"))?,
        CurvatureMode::Explicit => scn.curvature.k.expect("validated"),
        CurvatureMode::Estimated => {
            let values: Vec<Array1<f64>> = raw.iter().map(|s| s.values.clone()).collect();
            estimate_k(&cache.gen, n, &values, None).map_err(stage("curvature"))?
        }
    };
    let kn = CurvaturePair::new(base_k + scn.curvature.shift, n);
    kn.validate(space.d).map_err(stage("curvature"))?;

    let default = scn.sampler.as_ref().map(|s| s.transform).unwrap_or_default();
    let mut samples = BTreeMap::new();
    for check in scn.checks.iter().filter(|c| c.statement.uses_functions()) {
        let tr = effective_transform(check, default);
        if let std::collections::btree_map::Entry::Vacant(v) = samples.entry(transform_key(tr)) {
            v.insert(apply_transform(&space, &raw, tr).map_err(stage("sampler"))?);
        }
    }
    let sample_secs = clock.elapsed().as_secs_f64();

    let mut tasks = Vec::new();
    for (ci, check) in scn.checks.iter().enumerate() {
        let pairs = check
            .pairs
            .iter()
            .map(|p| resolve_pair(&space, p))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| BenchError::Scenario { stage: "grid", message: format!("check #{ci}: {e}") })?;
        for point in grid_points(check, &pairs) {
            if check.statement.uses_functions() {
                for i in 0..raw.len() {
                    tasks.push(Task { check: ci, point: point.clone(), sample: Some(i) });
                }
            } else {
                tasks.push(Task { check: ci, point, sample: None });
            }
        }
    }

    let clock = Instant::now();
    let ctx = Context { scn: &scn, cache: &cache, kn, tol_scale: opts.tol_scale, samples };
    let reports: Vec<CheckReport> = tasks.par_iter().map(|t| ctx.run(t)).collect::<Result<_>>()?;
    let check_secs = clock.elapsed().as_secs_f64();

    let reports: Vec<ReportEntry> =
        tasks.iter().zip(reports).map(|(t, report)| ReportEntry { check: t.check, report }).collect();
    let summary = Summary::from_reports(&reports, scn.falsification);
    let resolved = Resolved {
        nodes: space.len(),
        h: space.h,
        k: kn.k,
        n,
        analytic_k: analytic,
        spectral_gap: cache.spectral_gap(),
        tol_scale: opts.tol_scale,
        samples: raw.iter().map(|s| s.id.clone()).collect(),
    };
    Ok(ReportSet {
        scenario: scn,
        resolved,
        reports,
        summary,
        timing: Timing { build_secs, sample_secs, check_secs, cache_hit },
    })
}

/// Number of reports a scenario will produce, computed without building
/// anything.
pub fn planned_reports(scn: &Scenario) -> Result<usize> {
    scn.validate()?;
    let functions = scn.sampler.as_ref().map(|s| s.count + s.jets).unwrap_or(0);
    Ok(scn
        .checks
        .iter()
        .map(|c| {
            let pairs = vec![(0, 0); c.pairs.len()];
            let pts = grid_points(c, &pairs).len();
            if c.statement.uses_functions() {
                pts * functions
            } else {
                pts
            }
        })
        .sum())
}
