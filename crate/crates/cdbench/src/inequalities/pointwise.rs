//! Inequalities that hold at every point: gradient, variance, drift-gradient
//! and local log-Sobolev bounds.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::quadrature::integrate;
use super::{
    check_time, constants, evolve_many, floored_ln, weighted_semigroup_sum, CheckEnv, CheckReport, Diagnostics,
    Statement, Witness,
};
use crate::error::{BenchError, Result};

/// Per-node sides of a pointwise inequality `lhs ≤ rhs`.
#[derive(Debug, Clone)]
pub struct NodeTerms {
    pub lhs: Array1<f64>,
    pub rhs: Array1<f64>,
    pub quad_nodes: usize,
    pub clamps: usize,
}

impl NodeTerms {
    pub fn margins(&self) -> Array1<f64> {
        &self.rhs - &self.lhs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientVariant {
    /// Keeps the time integral of `P_s(P_{t−s}Lf)²`.
    Integral,
    /// Closed form after Jensen's inequality.
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceSide {
    Upper,
    Lower,
}

/// Reduce node terms to the report at the worst evaluation node.
fn reduce(
    env: &CheckEnv,
    statement: Statement,
    terms: &NodeTerms,
    mut witness: Witness,
    mut diag: Diagnostics,
) -> Result<CheckReport> {
    let gen = env.gen();
    let margins = terms.margins();
    let (_, node) = gen.masked_min(&margins);
    let (mut sum, mut count) = (0.0, 0usize);
    for (i, m) in margins.iter().enumerate() {
        if gen.eval_mask[i] {
            sum += m;
            count += 1;
        }
    }
    diag.extra.insert("mean_margin".into(), sum / count.max(1) as f64);
    diag.quad_nodes = terms.quad_nodes;
    diag.clamps += terms.clamps;
    witness.node = Some(node);
    CheckReport::new(statement, terms.lhs[node], terms.rhs[node], &env.tol, witness, diag)
}

/// Node terms of the gradient bounds.
pub fn gradient_terms(env: &CheckEnv, f: &Array1<f64>, t: f64, variant: GradientVariant) -> Result<NodeTerms> {
    env.validate_kn()?;
    env.check_fn(f)?;
    check_time(t, true)?;
    let (cache, gen) = (env.cache, env.gen());
    let (k, inv_n) = (env.kn.k, env.kn.inv_n());
    let lf = gen.apply(f);
    let ptf = cache.apply_semigroup(f, t)?;
    let lhs = gen.gamma(&ptf);
    let pt_gamma = cache.apply_semigroup(&gen.gamma(f), t)?;
    let mut rhs = (2.0 * k * t).exp() * pt_gamma;
    let mut quad_nodes = 0;
    match variant {
        GradientVariant::Closed => {
            let ptlf = cache.apply_semigroup(&lf, t)?;
            rhs = rhs - constants::gradient_closed(k, t, env.kn.n) * &ptlf * &ptlf;
        }
        GradientVariant::Integral if inv_n > 0.0 && t > 0.0 => {
            let c = cache.coefficients(&lf);
            let (integral, nodes) = integrate(&env.quad, &[(0.0, t)], |s, w| {
                let lag: Vec<f64> = s.iter().map(|s| t - s).collect();
                let mut g = evolve_many(cache, &c, &lag);
                g.mapv_inplace(|v| v * v);
                let wts: Vec<f64> = s.iter().zip(w).map(|(s, w)| w * (2.0 * k * s).exp()).collect();
                Ok(weighted_semigroup_sum(cache, &g, s, &wts))
            })?;
            quad_nodes = nodes;
            rhs = rhs - 2.0 * inv_n * integral;
        }
        GradientVariant::Integral => {}
    }
    Ok(NodeTerms { lhs, rhs, quad_nodes, clamps: 0 })
}

pub fn check_gradient(env: &CheckEnv, f: &Array1<f64>, t: f64, variant: GradientVariant) -> Result<CheckReport> {
    let terms = gradient_terms(env, f, t, variant)?;
    let statement = match variant {
        GradientVariant::Integral => Statement::GradientIntegral,
        GradientVariant::Closed => Statement::GradientClosed,
    };
    let witness = Witness { t: Some(t), ..env.witness() };
    reduce(env, statement, &terms, witness, Diagnostics::default())
}

/// Node terms of the variance bounds. For the lower bound the roles are
/// swapped so that `lhs` is the bound and `rhs` the variance.
pub fn variance_terms(env: &CheckEnv, f: &Array1<f64>, t: f64, side: VarianceSide) -> Result<NodeTerms> {
    env.validate_kn()?;
    env.check_fn(f)?;
    check_time(t, true)?;
    let (cache, gen) = (env.cache, env.gen());
    let (k, n) = (env.kn.k, env.kn.n);
    let ptf = cache.apply_semigroup(f, t)?;
    let variance = cache.apply_semigroup(&(f * f), t)? - &ptf * &ptf;
    let ptlf = cache.apply_semigroup(&gen.apply(f), t)?;
    let lap = &ptlf * &ptlf;
    Ok(match side {
        VarianceSide::Upper => {
            let (a, b) = constants::variance_upper(k, t, n);
            let pt_gamma = cache.apply_semigroup(&gen.gamma(f), t)?;
            NodeTerms { lhs: variance, rhs: a * pt_gamma - b * lap, quad_nodes: 0, clamps: 0 }
        }
        VarianceSide::Lower => {
            let (a, b) = constants::variance_lower(k, t, n);
            let bound = a * gen.gamma(&ptf) + b * lap;
            NodeTerms { lhs: bound, rhs: variance, quad_nodes: 0, clamps: 0 }
        }
    })
}

pub fn check_variance(env: &CheckEnv, f: &Array1<f64>, t: f64, side: VarianceSide) -> Result<CheckReport> {
    let terms = variance_terms(env, f, t, side)?;
    let statement = match side {
        VarianceSide::Upper => Statement::VarianceUpper,
        VarianceSide::Lower => Statement::VarianceLower,
    };
    let witness = Witness { t: Some(t), ..env.witness() };
    reduce(env, statement, &terms, witness, Diagnostics::default())
}

/// `√(Γ(g) + ε)` with Γ clamped at zero against round-off.
fn reg_grad(gamma: f64, eps: f64) -> f64 {
    (gamma.max(0.0) + eps).sqrt()
}

/// Node terms of the drift-gradient bound with regulariser `eps`.
pub fn drift_gradient_terms(env: &CheckEnv, f: &Array1<f64>, t: f64, eps: f64) -> Result<NodeTerms> {
    env.validate_kn()?;
    env.check_fn(f)?;
    check_time(t, true)?;
    if !(eps > 0.0) {
        return Err(BenchError::InvalidArgument(format!("regulariser must be positive, got {eps}")));
    }
    let (cache, gen) = (env.cache, env.gen());
    let d = gen.space.d as f64;
    let (k, n) = (env.kn.k, env.kn.n);
    if n <= d {
        return Err(BenchError::InvalidCurvature(format!(
            "the drift-gradient bound needs n > d (n = {n}, d = {d})"
        )));
    }
    let ptf = cache.apply_semigroup(f, t)?;
    let grad_ptf = gen.gamma(&ptf).mapv(|g| reg_grad(g, eps));
    let grad_f = gen.gamma(f).mapv(|g| reg_grad(g, eps));
    let rhs = (k * t).exp() * cache.apply_semigroup(&grad_f, t)?;
    let mut lhs = grad_ptf;
    let mut quad_nodes = 0;
    if !gen.driftless() && n.is_finite() && t > 0.0 {
        let c = cache.coefficients(f);
        let (integral, nodes) = integrate(&env.quad, &[(0.0, t)], |s, w| {
            let lag: Vec<f64> = s.iter().map(|s| t - s).collect();
            let g = evolve_many(cache, &c, &lag);
            let lg = gen.matrix.dot(&g);
            let lg2 = gen.matrix.dot(&(&g * &g));
            let mut h = Array2::zeros(g.raw_dim());
            for q in 0..s.len() {
                let col = g.column(q).to_owned();
                let zg = gen.drift_derivative(&col);
                for i in 0..col.len() {
                    let gamma = 0.5 * lg2[[i, q]] - col[i] * lg[[i, q]];
                    h[[i, q]] = zg[i] * zg[i] / reg_grad(gamma, eps);
                }
            }
            let wts: Vec<f64> = s.iter().zip(w).map(|(s, w)| w * (k * s).exp()).collect();
            Ok(weighted_semigroup_sum(cache, &h, s, &wts))
        })?;
        quad_nodes = nodes;
        lhs = lhs + integral / (n - d);
    }
    Ok(NodeTerms { lhs, rhs, quad_nodes, clamps: 0 })
}

/// Drift-gradient check at `eps`, with the run at `eps/10` reported as a
/// sensitivity diagnostic.
pub fn check_drift_gradient(env: &CheckEnv, f: &Array1<f64>, t: f64, eps: f64) -> Result<CheckReport> {
    let terms = drift_gradient_terms(env, f, t, eps)?;
    let finer = drift_gradient_terms(env, f, t, eps / 10.0)?;
    let gen = env.gen();
    let sensitivity = (gen.masked_min(&terms.margins()).0 - gen.masked_min(&finer.margins()).0).abs();
    let mut diag = Diagnostics::default();
    diag.extra.insert("eps_sensitivity".into(), sensitivity);
    let witness = Witness { t: Some(t), eps: Some(eps), ..env.witness() };
    reduce(env, Statement::DriftGradient, &terms, witness, diag)
}

/// Local log-Sobolev inequality for `f² + 10⁻¹²`.
pub fn check_local_logsob(env: &CheckEnv, f: &Array1<f64>, t: f64) -> Result<CheckReport> {
    const EPS: f64 = 1e-12;
    env.validate_kn()?;
    env.check_fn(f)?;
    check_time(t, true)?;
    if f.iter().all(|&v| v == 0.0) {
        return Err(BenchError::Precondition("f must not vanish identically".into()));
    }
    let (cache, gen) = (env.cache, env.gen());
    let g = f.mapv(|v| v * v + EPS);
    let lhs = cache.apply_semigroup(&g.mapv(|v| v * v.ln()), t)?;
    let ptg = cache.apply_semigroup(&g, t)?;
    let mut clamps = 0;
    let ent = ptg.mapv(|v| v * floored_ln(v, &mut clamps));
    let rhs = ent + constants::local_logsob(env.kn.k, t) * cache.apply_semigroup(&gen.gamma(f), t)?;
    let terms = NodeTerms { lhs, rhs, quad_nodes: 0, clamps };
    let witness = Witness { t: Some(t), ..env.witness() };
    reduce(env, Statement::LocalLogsob, &terms, witness, Diagnostics::default())
}
