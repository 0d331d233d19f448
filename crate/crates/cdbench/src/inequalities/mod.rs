//! Evaluators for the semigroup inequalities implied by a curvature-dimension
//! condition.
//!
//! Every check is phrased as `lhs ≤ rhs` and produces a [`CheckReport`] with
//! `margin = rhs − lhs`; it passes when `margin ≥ −tol`. Pointwise
//! inequalities are reduced to their minimum margin over the generator's
//! evaluation nodes (lowest index on ties, so the result does not depend on
//! evaluation order) and report `lhs`/`rhs` at that node.
//!
//! | statement | inequality |
//! |---|---|
//! | `gradient_integral` | `Γ(P_tf) ≤ e^{2Kt}P_tΓ(f) − (2/n)∫₀ᵗe^{2Ks}P_s(P_{t−s}Lf)² ds` |
//! | `gradient_closed` | `Γ(P_tf) ≤ e^{2Kt}P_tΓ(f) − ((e^{2Kt}−1)/(Kn))(P_tLf)²` |
//! | `variance_upper` | `P_tf² − (P_tf)² ≤ ((e^{2Kt}−1)/K)P_tΓ(f) − ((e^{2Kt}−1−2Kt)/(K²n))(P_tLf)²` |
//! | `variance_lower` | `((1−e^{−2Kt})/K)Γ(P_tf) + ((e^{−2Kt}−1+2Kt)/(K²n))(P_tLf)² ≤ P_tf² − (P_tf)²` |
//! | `drift_gradient` | `|∇P_tf| + (1/(n−d))∫₀ᵗe^{Ks}P_s(⟨Z,∇P_{t−s}f⟩²/|∇P_{t−s}f|) ds ≤ e^{Kt}P_t|∇f|` |
//! | `log_harnack` | `P_{φ(t)}log f(y) ≤ log P_tf(x) + ρ²/(4∫₀ᵗe^{−2Kφ}) + (Kn/4)∫₀ᵗ(φ′−1)²/(1−e^{−2Kφ})` |
//! | `h1`, `h2` | explicit log-Harnack inequalities with two times `t`, `t + s` |
//! | `h1_kernel`, `h2_kernel` | the equivalent relative-entropy bounds between heat kernels |
//! | `heat_lower` | `exp(−Kρ²/(2(1−e^{−Kt}))) ≤ p_t(x, y)` |
//! | `local_logsob` | `P_t(f²log f²) ≤ P_tf²·log P_tf² + (2(e^{2Kt}−1)/K)P_tΓ(f)` |
//! | `hw0`, `hwi` | entropy–transport–information inequalities |
//! | `lichnerowicz` | `n(−K)/(n−1) ≤ λ₁` |
//! | `contraction_ctpp`, `contraction_ctp` | `W^{ρ̃}_p(ν₁P_t, ν₂P_t) ≤ rate·W^{ρ̃}_p(ν₁, ν₂)` |
//!
//! The sign convention is the one of [`crate::generator`]: the round unit
//! sphere has K = −1.

pub mod constants;
mod global;
mod harnack;
pub mod phi;
mod pointwise;
pub mod quadrature;

use std::collections::BTreeMap;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::generator::{CurvaturePair, Generator};
use crate::model_space::SpaceKind;
use crate::semigroup::{sphere_kernel_series, SemigroupCache};

pub use global::{check_contraction, check_hwi, check_lichnerowicz, HwiForm, HwiRadius, Rate};
pub use harnack::{
    check_explicit_harnack, check_kernel_kl, check_kernel_lower, check_log_harnack, heat_lower_series, HarnackForm,
};
pub use phi::PhiSchedule;
pub use pointwise::{
    check_drift_gradient, check_gradient, check_local_logsob, check_variance, drift_gradient_terms, gradient_terms,
    variance_terms, GradientVariant, NodeTerms, VarianceSide,
};
pub use quadrature::Quadrature;

/// Floor applied to arguments of logarithms; every use is counted.
pub const LOG_FLOOR: f64 = 1e-300;

/// Identifier of the inequality a report belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statement {
    GradientIntegral,
    GradientClosed,
    VarianceUpper,
    VarianceLower,
    DriftGradient,
    LogHarnack,
    H1,
    H2,
    H1Kernel,
    H2Kernel,
    HeatLower,
    LocalLogsob,
    Hw0,
    Hwi,
    Lichnerowicz,
    ContractionCtpp,
    ContractionCtp,
}

impl Statement {
    pub const ALL: [Statement; 17] = [
        Statement::GradientIntegral,
        Statement::GradientClosed,
        Statement::VarianceUpper,
        Statement::VarianceLower,
        Statement::DriftGradient,
        Statement::LogHarnack,
        Statement::H1,
        Statement::H2,
        Statement::H1Kernel,
        Statement::H2Kernel,
        Statement::HeatLower,
        Statement::LocalLogsob,
        Statement::Hw0,
        Statement::Hwi,
        Statement::Lichnerowicz,
        Statement::ContractionCtpp,
        Statement::ContractionCtp,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Statement::GradientIntegral => "gradient_integral",
            Statement::GradientClosed => "gradient_closed",
            Statement::VarianceUpper => "variance_upper",
            Statement::VarianceLower => "variance_lower",
            Statement::DriftGradient => "drift_gradient",
            Statement::LogHarnack => "log_harnack",
            Statement::H1 => "h1",
            Statement::H2 => "h2",
            Statement::H1Kernel => "h1_kernel",
            Statement::H2Kernel => "h2_kernel",
            Statement::HeatLower => "heat_lower",
            Statement::LocalLogsob => "local_logsob",
            Statement::Hw0 => "hw0",
            Statement::Hwi => "hwi",
            Statement::Lichnerowicz => "lichnerowicz",
            Statement::ContractionCtpp => "contraction_ctpp",
            Statement::ContractionCtp => "contraction_ctp",
        }
    }
}

impl std::fmt::Display for Statement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Pass threshold: `abs + rel·|rhs| + slack`, with a note on where it came
/// from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub note: String,
}

impl Tolerance {
    pub fn absolute(abs: f64, note: impl Into<String>) -> Self {
        Self { abs, rel: 0.0, note: note.into() }
    }

    pub fn relative(rel: f64, note: impl Into<String>) -> Self {
        Self { abs: 0.0, rel, note: note.into() }
    }

    /// Discretisation tolerance `c·h²` for mesh width `h`.
    pub fn mesh(c: f64, h: f64) -> Self {
        Self { abs: c * h * h, rel: 0.0, note: format!("c*h^2 with c={c}, h={h}") }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let note = if factor == 1.0 { self.note.clone() } else { format!("{} (scaled by {factor})", self.note) };
        Self { abs: self.abs * factor, rel: self.rel * factor, note }
    }

    pub fn resolve(&self, rhs: f64, slack: f64) -> f64 {
        self.abs + self.rel * rhs.abs() + slack
    }
}

/// Parameters that produced a report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Witness {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Node where the minimum margin was attained.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node: Option<usize>,
    pub k: f64,
    #[serde(with = "extended_f64")]
    pub n: f64,
}

/// Serde for reals that may be infinite (dimension bounds): finite values
/// are plain numbers, `±∞` the strings `"inf"` and `"-inf"`.
pub mod extended_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else if *v < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                other => Err(de::Error::custom(format!("expected a number or \"inf\", got {other:?}"))),
            },
        }
    }
}

/// Numerical side information attached to a report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Diagnostics {
    /// Number of log arguments raised to [`LOG_FLOOR`].
    pub clamps: usize,
    /// Gauss–Legendre nodes per piece used by the last converged integral.
    pub quad_nodes: usize,
    /// Transport trimming slack folded into the tolerance.
    pub slack: f64,
    pub degraded: bool,
    /// Further named quantities (mean margins, sensitivities, rates, …).
    pub extra: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub statement: Statement,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub tol: f64,
    pub tol_note: String,
    pub pass: bool,
    pub witness: Witness,
    pub diagnostics: Diagnostics,
}

impl CheckReport {
    pub fn new(
        statement: Statement,
        lhs: f64,
        rhs: f64,
        tol: &Tolerance,
        witness: Witness,
        mut diagnostics: Diagnostics,
    ) -> Result<Self> {
        if !lhs.is_finite() || !rhs.is_finite() {
            return Err(BenchError::InvalidArgument(format!(
                "{statement}: non-finite sides (lhs = {lhs}, rhs = {rhs})"
            )));
        }
        let margin = rhs - lhs;
        let tol_value = tol.resolve(rhs, diagnostics.slack);
        diagnostics.degraded = diagnostics.degraded || diagnostics.clamps > 0;
        Ok(Self {
            statement,
            lhs,
            rhs,
            margin,
            tol: tol_value,
            tol_note: tol.note.clone(),
            pass: margin >= -tol_value,
            witness,
            diagnostics,
        })
    }

    /// Compact `key=value` rendering of the witness, in a fixed order.
    pub fn witness_string(&self) -> String {
        let w = &self.witness;
        let mut parts = Vec::new();
        if let Some(f) = &w.f {
            parts.push(format!("f={f}"));
        }
        let mut num = |k: &str, v: Option<f64>| {
            if let Some(v) = v {
                parts.push(format!("{k}={v}"));
            }
        };
        num("t", w.t);
        num("s", w.s);
        num("theta", w.theta);
        num("r", w.r);
        num("p", w.p);
        num("eps", w.eps);
        for (k, v) in [("x", w.x), ("y", w.y), ("node", w.node)] {
            if let Some(v) = v {
                parts.push(format!("{k}={v}"));
            }
        }
        if let Some(phi) = &w.phi {
            parts.push(format!("phi={phi}"));
        }
        parts.push(format!("K={}", w.k));
        parts.push(format!("n={}", w.n));
        parts.join(";")
    }
}

/// Where heat-kernel values come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSource {
    /// The spectral decomposition of the discrete generator.
    #[default]
    Discrete,
    /// The Legendre series of the round sphere, integrated against the node
    /// weights (normalised sphere only).
    Legendre,
}

/// Everything a check needs besides its own parameters.
#[derive(Debug, Clone)]
pub struct CheckEnv<'a> {
    pub cache: &'a SemigroupCache,
    pub kn: CurvaturePair,
    pub tol: Tolerance,
    pub quad: Quadrature,
    pub kernel: KernelSource,
}

impl<'a> CheckEnv<'a> {
    pub fn new(cache: &'a SemigroupCache, kn: CurvaturePair, tol: Tolerance) -> Self {
        Self { cache, kn, tol, quad: Quadrature::default(), kernel: KernelSource::Discrete }
    }

    pub fn with_quadrature(mut self, quad: Quadrature) -> Self {
        self.quad = quad;
        self
    }

    pub fn with_kernel(mut self, kernel: KernelSource) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn gen(&self) -> &Generator {
        &self.cache.gen
    }

    fn witness(&self) -> Witness {
        Witness { k: self.kn.k, n: self.kn.n, ..Witness::default() }
    }

    fn validate_kn(&self) -> Result<()> {
        self.kn.validate(self.gen().space.d)
    }

    fn check_fn(&self, f: &Array1<f64>) -> Result<()> {
        if f.len() != self.cache.len() {
            return Err(BenchError::ShapeMismatch { expected: self.cache.len(), got: f.len() });
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(BenchError::InvalidArgument("test function has non-finite values".into()));
        }
        Ok(())
    }

    fn check_node(&self, i: usize) -> Result<()> {
        if i >= self.cache.len() {
            return Err(BenchError::IndexOutOfRange { index: i, len: self.cache.len() });
        }
        Ok(())
    }

    fn check_legendre(&self) -> Result<()> {
        let space = &self.gen().space;
        if self.kernel == KernelSource::Legendre
            && (space.kind != SpaceKind::Sphere2 || (space.weights.sum() - 1.0).abs() > 1e-12)
        {
            return Err(BenchError::Precondition("the Legendre kernel needs the normalised sphere".into()));
        }
        Ok(())
    }

    /// The row `z ↦ p_t(x, z)` from the configured source.
    fn kernel_row(&self, t: f64, x: usize) -> Result<Array1<f64>> {
        self.check_legendre()?;
        match self.kernel {
            KernelSource::Discrete => self.cache.heat_kernel_row(t, x),
            KernelSource::Legendre => {
                let space = &self.gen().space;
                let mut row = Array1::zeros(space.len());
                for z in 0..space.len() {
                    row[z] = sphere_kernel_series(t, space.dist(x, z), None)?.value;
                }
                Ok(row)
            }
        }
    }

    fn kernel(&self, t: f64, x: usize, y: usize) -> Result<f64> {
        self.check_legendre()?;
        match self.kernel {
            KernelSource::Discrete => self.cache.heat_kernel(t, x, y),
            KernelSource::Legendre => Ok(sphere_kernel_series(t, self.gen().space.dist(x, y), None)?.value),
        }
    }

    /// `P_t g(x)` from the configured kernel source.
    fn semigroup_at(&self, g: &Array1<f64>, t: f64, x: usize) -> Result<f64> {
        if t == 0.0 {
            return Ok(g[x]);
        }
        match self.kernel {
            KernelSource::Discrete => Ok(self.cache.apply_semigroup(g, t)?[x]),
            KernelSource::Legendre => {
                let row = self.kernel_row(t, x)?;
                Ok(self.gen().space.integrate(&(row * g)))
            }
        }
    }
}

/// `log(max(v, LOG_FLOOR))`, counting floored values.
fn floored_ln(v: f64, clamps: &mut usize) -> f64 {
    if v < LOG_FLOOR {
        *clamps += 1;
        LOG_FLOOR.ln()
    } else {
        v.ln()
    }
}

fn check_time(t: f64, allow_zero: bool) -> Result<()> {
    if !t.is_finite() || t < 0.0 || (!allow_zero && t == 0.0) {
        return Err(BenchError::InvalidTime(format!("t = {t}")));
    }
    Ok(())
}

/// Columns `P_{τ_q} g` for the function with spectral coefficients `c`.
fn evolve_many(cache: &SemigroupCache, c: &Array1<f64>, times: &[f64]) -> ndarray::Array2<f64> {
    let n = cache.len();
    let mut coeffs = ndarray::Array2::zeros((n, times.len()));
    for (q, &tau) in times.iter().enumerate() {
        for k in 0..n {
            coeffs[[k, q]] = c[k] * (-cache.eigenvalues[k] * tau).exp();
        }
    }
    cache.synthesize_many(&coeffs)
}

/// `Σ_q weights[q]·P_{times[q]} g_q` for the columns `g_q` of `g`.
fn weighted_semigroup_sum(cache: &SemigroupCache, g: &ndarray::Array2<f64>, times: &[f64], weights: &[f64]) -> Array1<f64> {
    let coeffs = cache.coefficients_many(g);
    let n = cache.len();
    let mut acc = Array1::zeros(n);
    for (q, (&tau, &w)) in times.iter().zip(weights.iter()).enumerate() {
        for k in 0..n {
            acc[k] += w * (-cache.eigenvalues[k] * tau).exp() * coeffs[[k, q]];
        }
    }
    cache.synthesize(&acc)
}
