//! Global inequalities: entropy–transport–information bounds, the spectral
//! gap bound and Wasserstein contraction.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::{check_time, constants, CheckEnv, CheckReport, Diagnostics, Statement, Witness};
use crate::error::{BenchError, Result};
use crate::transport::{fisher_information, wasserstein_on_space, DiscreteMeasure, TransportCost};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HwiForm {
    /// One-parameter family indexed by `r ∈ (0, 2/K⁻]`.
    Hw0,
    /// The family evaluated at its optimising `r`.
    Hwi,
}

/// Choice of the free parameter of the HW0 family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HwiRadius {
    /// `r = W₂/√I`, clamped to the admissible range.
    Auto,
    /// A multiple of the automatic radius, clamped to the admissible range.
    Scaled(f64),
    Value(f64),
}

/// Largest admissible `r`, `2/K⁻` (infinite when K ≥ 0).
fn r_cap(k: f64) -> f64 {
    if k < 0.0 {
        2.0 / -k
    } else {
        f64::INFINITY
    }
}

fn hw0_rhs(k: f64, n: f64, r: f64, w: f64, info: f64) -> f64 {
    let a = k * r + 2.0;
    if n.is_infinite() {
        return r * info + a * w * w / (2.0 * r);
    }
    let knee = (r * n).sqrt() / (2.0 * 2f64.sqrt());
    r * info + a * w / (2.0 * r) * w.min(knee) + n.sqrt() * a / (4.0 * (2.0 * r).sqrt()) * (w - knee).max(0.0)
}

/// HWI right side and its correction term.
fn hwi_rhs(k: f64, n: f64, w: f64, info: f64) -> (f64, f64) {
    let root_i = info.sqrt();
    let base = 2.0 * w * root_i + 0.5 * k * w * w;
    if n.is_infinite() || info == 0.0 {
        return (base, 0.0);
    }
    let gap = (w.sqrt() - n.sqrt() / (2.0 * 2f64.sqrt() * info.powf(0.25))).max(0.0);
    let correction = -0.5 * (k * w + 2.0 * root_i) * gap * gap;
    (base + correction, correction)
}

/// Entropy–transport–information inequality for the density `f²` with
/// `μ(f²) = 1`.
pub fn check_hwi(env: &CheckEnv, f: &Array1<f64>, radius: HwiRadius, form: HwiForm) -> Result<CheckReport> {
    env.validate_kn()?;
    env.check_fn(f)?;
    let gen = env.gen();
    let space = gen.space.clone();
    if (space.weights.sum() - 1.0).abs() > 1e-12 {
        return Err(BenchError::Precondition("HWI needs a probability reference measure".into()));
    }
    let f2 = f.mapv(|v| v * v);
    let mass = space.integrate(&f2);
    if (mass - 1.0).abs() > 1e-10 {
        return Err(BenchError::Precondition(format!("HWI needs mu(f^2) = 1, got {mass}")));
    }
    let (k, n) = (env.kn.k, env.kn.n);
    let entropy = space.integrate(&f2.mapv(|v| if v > 0.0 { v * v.ln() } else { 0.0 }));
    let info = fisher_information(gen, f)?.max(0.0);
    let nu = DiscreteMeasure::from_density(space.clone(), &f2)?.normalized()?;
    let mu = DiscreteMeasure::reference(space.clone());
    let transport = wasserstein_on_space(&nu, &mu, 2.0, TransportCost::Rho)?;
    let w = transport.distance;
    let cap = r_cap(k);

    let mut diag = Diagnostics::default();
    diag.extra.insert("entropy".into(), entropy);
    diag.extra.insert("fisher".into(), info);
    diag.extra.insert("w2".into(), w);
    let mut witness = Witness { p: Some(2.0), ..env.witness() };
    let (rhs, statement) = match form {
        HwiForm::Hw0 => {
            let auto = if w > 0.0 && info > 0.0 { w / info.sqrt() } else { 1.0 };
            let r = match radius {
                HwiRadius::Auto => auto.min(cap),
                HwiRadius::Scaled(c) => {
                    if !(c > 0.0) || !c.is_finite() {
                        return Err(BenchError::InvalidArgument(format!("radius scale must be positive, got {c}")));
                    }
                    if c * auto > cap {
                        diag.notes.push(format!("radius {c}*auto clamped to {cap}"));
                    }
                    (c * auto).min(cap)
                }
                HwiRadius::Value(r) => {
                    if !(r > 0.0) || r > cap * (1.0 + 1e-12) {
                        return Err(BenchError::InvalidArgument(format!("r = {r} outside (0, {cap}]")));
                    }
                    r
                }
            };
            witness.r = Some(r);
            let rhs = hw0_rhs(k, n, r, w, info);
            if transport.slack > 0.0 {
                diag.slack = hw0_rhs(k, n, r, w + transport.slack, info) - rhs;
            }
            (rhs, Statement::Hw0)
        }
        HwiForm::Hwi => {
            let (rhs, correction) = hwi_rhs(k, n, w, info);
            let sign_condition = k * w + 2.0 * info.sqrt() >= 0.0;
            diag.extra.insert("correction".into(), correction);
            diag.extra.insert("sign_condition".into(), if sign_condition { 1.0 } else { 0.0 });
            if sign_condition && correction > 0.0 {
                diag.notes.push("correction term positive despite the sign condition".into());
            }
            if transport.slack > 0.0 {
                diag.slack = (hwi_rhs(k, n, w + transport.slack, info).0 - rhs).abs();
            }
            (rhs, Statement::Hwi)
        }
    };
    if transport.slack > 0.0 {
        diag.extra.insert("transport_slack".into(), transport.slack);
    }
    CheckReport::new(statement, entropy, rhs, &env.tol, witness, diag)
}

/// Spectral gap against `n(−K)/(n−1)`.
pub fn check_lichnerowicz(env: &CheckEnv) -> Result<CheckReport> {
    let (k, n) = (env.kn.k, env.kn.n);
    if !(k < 0.0) || !(n > 1.0) {
        return Err(BenchError::Precondition(format!("the gap bound needs K < 0 and n > 1 (K = {k}, n = {n})")));
    }
    env.validate_kn()?;
    let bound = if n.is_infinite() { -k } else { n * -k / (n - 1.0) };
    let gap = env.cache.spectral_gap();
    CheckReport::new(Statement::Lichnerowicz, bound, gap, &env.tol, env.witness(), Diagnostics::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rate {
    /// `e^{Kt}` for any `p ≥ 1`.
    Ctpp,
    /// `e^{nKt/(n−1)}`, for `p = 1` and K < 0.
    Ctp,
}

/// Wasserstein contraction of the semigroup under the modified distance.
pub fn check_contraction(
    env: &CheckEnv,
    nu1: &DiscreteMeasure,
    nu2: &DiscreteMeasure,
    t: f64,
    p: f64,
    rate: Rate,
) -> Result<CheckReport> {
    env.validate_kn()?;
    check_time(t, true)?;
    let (k, n) = (env.kn.k, env.kn.n);
    if rate == Rate::Ctp && (!(k < 0.0) || p != 1.0) {
        return Err(BenchError::Precondition(format!(
            "the dimension-improved rate needs K < 0 and p = 1 (K = {k}, p = {p})"
        )));
    }
    let cost = TransportCost::RhoTilde { k, n };
    let before = wasserstein_on_space(nu1, nu2, p, cost)?;
    let after = wasserstein_on_space(&nu1.evolve(env.cache, t)?, &nu2.evolve(env.cache, t)?, p, cost)?;
    let (ctpp, ctp) = (constants::rate_ctpp(k, t), constants::rate_ctp(k, t, n));
    let factor = match rate {
        Rate::Ctpp => ctpp,
        Rate::Ctp => ctp,
    };
    let mut diag = Diagnostics { slack: factor * before.slack + after.slack, ..Diagnostics::default() };
    diag.extra.insert("rate_ctpp".into(), ctpp);
    if k < 0.0 {
        diag.extra.insert("rate_ctp".into(), ctp);
    }
    diag.extra.insert("w_before".into(), before.distance);
    let statement = match rate {
        Rate::Ctpp => Statement::ContractionCtpp,
        Rate::Ctp => Statement::ContractionCtp,
    };
    let witness = Witness { t: Some(t), p: Some(p), ..env.witness() };
    CheckReport::new(statement, after.distance, factor * before.distance, &env.tol, witness, diag)
}
