//! The discrete generator L = Δ + Z together with its carré du champ Γ, the
//! iterated form Γ₂ and the curvature-dimension bookkeeping.
//!
//! # Sign convention
//!
//! A [`CurvaturePair`] `(K, n)` stands for the inequality
//!
//! ```text
//! Γ₂(f) ≥ −K·Γ(f) + (Lf)²/n,
//! ```
//!
//! i.e. the curvature lower bound is **−K**. The unit sphere therefore has
//! `K = −1` and flat spaces `K = 0`. In the tensor (drift-split) form the
//! drift enters as `+⟨Z,∇f⟩²/(n−d)`, the sign produced by the gradient
//! estimate with drift; the opposite sign would make that estimate false for
//! the Ornstein–Uhlenbeck interval.

pub mod harmonic;

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::model_space::{cross3, dot3, ModelSpace, Potential, SpaceKind, Stencil};

/// Curvature-dimension constants `(K, n)`; `n` may be `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvaturePair {
    pub k: f64,
    pub n: f64,
}

impl CurvaturePair {
    pub fn new(k: f64, n: f64) -> Self {
        CurvaturePair { k, n }
    }

    /// Rejects non-finite K, NaN n and n below the intrinsic dimension.
    pub fn validate(&self, d: usize) -> Result<()> {
        if !self.k.is_finite() {
            return Err(BenchError::InvalidCurvature(format!("K = {} is not finite", self.k)));
        }
        if self.n.is_nan() || self.n < d as f64 {
            return Err(BenchError::InvalidCurvature(format!("n = {} is below the dimension {d}", self.n)));
        }
        Ok(())
    }

    /// 1/n, zero for n = ∞.
    pub fn inv_n(&self) -> f64 {
        if self.n.is_infinite() {
            0.0
        } else {
            1.0 / self.n
        }
    }
}

/// A finite generator acting on grid functions of a [`ModelSpace`].
#[derive(Debug, Clone)]
pub struct Generator {
    pub space: Arc<ModelSpace>,
    /// Dense operator; row i gives (Lf)_i.
    pub matrix: Array2<f64>,
    pub symmetric_in_mu: bool,
    pub stencil: Stencil,
    /// Nodes that take part in min-margin reductions.
    pub eval_mask: Vec<bool>,
}

/// Builds the generator for `space` using the space's stencil.
pub fn assemble_generator(space: Arc<ModelSpace>) -> Result<Generator> {
    let stencil = space.spec.stencil();
    let n = space.len();
    if !space.spec.potential.is_analytic() && !space.spec.potential.is_zero() {
        if let Potential::Table { derivative: None, .. } = &space.spec.potential {
            return Err(BenchError::InvalidSpace(
                "tabulated potential needs `derivative` values to define the drift".into(),
            ));
        }
    }
    let matrix = match (space.kind, stencil) {
        (SpaceKind::Circle, Stencil::Central) => circle_central(&space),
        (SpaceKind::Circle, Stencil::Fourier) => circle_fourier(n),
        (SpaceKind::Interval, Stencil::Central) => interval_central(&space),
        (SpaceKind::Sphere2, Stencil::Cotangent) => sphere_cotangent(&space),
        (SpaceKind::Sphere2, Stencil::Harmonic { lmax }) => {
            let vol = space.weights.mapv(|w| w * space.mass_scale);
            harmonic::harmonic_operator(&space.coords, &vol, lmax)
        }
        (kind, st) => {
            return Err(BenchError::InvalidSpace(format!("stencil {st:?} unsupported on {kind:?}")));
        }
    };
    let mut eval_mask = vec![true; n];
    if space.kind == SpaceKind::Interval {
        // Ghost reflection degrades Γ₂ on the two outermost cells at each end.
        for i in [0, 1, n - 2, n - 1] {
            eval_mask[i] = false;
        }
    }
    Ok(Generator { space, matrix, symmetric_in_mu: true, stencil, eval_mask })
}

fn circle_central(space: &ModelSpace) -> Array2<f64> {
    let n = space.len();
    let h = space.h;
    let mut m = Array2::zeros((n, n));
    for i in 0..n {
        let vol_i = space.volume_weight(i);
        for j in [(i + n - 1) % n, (i + 1) % n] {
            let c = (0.5 * (space.potential[i] + space.potential[j])).exp();
            m[[i, j]] += c / (h * vol_i);
            m[[i, i]] -= c / (h * vol_i);
        }
    }
    m
}

/// Circulant Fourier-spectral second-derivative matrix on N equispaced nodes.
fn circle_fourier(n: usize) -> Array2<f64> {
    // Closed-form entries of the trigonometric-interpolant second derivative;
    // the diagonal is taken as minus the off-diagonal sum so constants are
    // annihilated to round-off.
    let h = 2.0 * PI / n as f64;
    let mut row: Vec<f64> = (0..n)
        .map(|k| {
            if k == 0 {
                return 0.0;
            }
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let half = 0.5 * k as f64 * h;
            let s2 = half.sin().powi(2);
            if n.is_multiple_of(2) {
                -sign / (2.0 * s2)
            } else {
                -sign * half.cos() / (2.0 * s2)
            }
        })
        .collect();
    row[0] = -row[1..].iter().sum::<f64>();
    Array2::from_shape_fn((n, n), |(i, j)| row[(j + n - i) % n])
}

fn interval_central(space: &ModelSpace) -> Array2<f64> {
    let n = space.len();
    let h = space.h;
    let pot = &space.spec.potential;
    let face = |i: usize| -> f64 {
        // Face between cells i and i+1.
        match pot.value(space.x(i) + 0.5 * h) {
            Some(v) => v.exp(),
            None => (0.5 * (space.potential[i] + space.potential[i + 1])).exp(),
        }
    };
    let mut m = Array2::zeros((n, n));
    for i in 0..n - 1 {
        let c = face(i);
        let (vi, vj) = (space.volume_weight(i), space.volume_weight(i + 1));
        m[[i, i + 1]] += c / (h * vi);
        m[[i, i]] -= c / (h * vi);
        m[[i + 1, i]] += c / (h * vj);
        m[[i + 1, i + 1]] -= c / (h * vj);
    }
    m
}

fn sphere_cotangent(space: &ModelSpace) -> Array2<f64> {
    let n = space.len();
    let mut m = Array2::zeros((n, n));
    let p = &space.coords;
    for t in &space.triangles {
        for k in 0..3 {
            let (o, i, j) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
            let u = sub(p[i], p[o]);
            let v = sub(p[j], p[o]);
            let c = cross3(u, v);
            let cot = dot3(u, v) / dot3(c, c).sqrt();
            m[[i, j]] += 0.5 * cot;
            m[[j, i]] += 0.5 * cot;
        }
    }
    for i in 0..n {
        let vol = space.volume_weight(i);
        let mut s = 0.0;
        for j in 0..n {
            if j != i {
                m[[i, j]] /= vol;
                s += m[[i, j]];
            }
        }
        m[[i, i]] = -s;
    }
    m
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

impl Generator {
    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    fn check_len(&self, f: &Array1<f64>) -> Result<()> {
        if f.len() != self.len() {
            return Err(BenchError::ShapeMismatch { expected: self.len(), got: f.len() });
        }
        Ok(())
    }

    /// (Lf)_i for every node.
    pub fn apply(&self, f: &Array1<f64>) -> Array1<f64> {
        self.matrix.dot(f)
    }

    /// Γ(f,g) = ½(L(fg) − fLg − gLf).
    pub fn carre_du_champ(&self, f: &Array1<f64>, g: &Array1<f64>) -> Result<Array1<f64>> {
        self.check_len(f)?;
        self.check_len(g)?;
        let lfg = self.apply(&(f * g));
        let lf = self.apply(f);
        let lg = self.apply(g);
        Ok(0.5 * (lfg - f * &lg - g * &lf))
    }

    /// Γ(f,f), computed with one fewer operator application.
    pub fn gamma(&self, f: &Array1<f64>) -> Array1<f64> {
        let lf = self.apply(f);
        self.gamma_with(f, &lf)
    }

    /// Γ(f,f) when Lf is already known.
    pub fn gamma_with(&self, f: &Array1<f64>, lf: &Array1<f64>) -> Array1<f64> {
        0.5 * self.apply(&(f * f)) - f * lf
    }

    /// Γ₂(f) = ½ LΓ(f,f) − Γ(f, Lf).
    pub fn gamma2(&self, f: &Array1<f64>) -> Result<Array1<f64>> {
        self.check_len(f)?;
        let lf = self.apply(f);
        let g = self.gamma_with(f, &lf);
        let cross = self.carre_du_champ(f, &lf)?;
        Ok(0.5 * self.apply(&g) - cross)
    }

    /// Pointwise CD margins Γ₂ + KΓ − (Lf)²/n at every node.
    pub fn cd_margins(&self, f: &Array1<f64>, kn: CurvaturePair) -> Result<Array1<f64>> {
        kn.validate(self.space.d)?;
        let lf = self.apply(f);
        let g = self.gamma_with(f, &lf);
        let g2 = self.gamma2(f)?;
        let inv_n = kn.inv_n();
        Ok(Array1::from_iter(
            (0..self.len()).map(|i| g2[i] + kn.k * g[i] - lf[i] * lf[i] * inv_n),
        ))
    }

    /// Minimum CD margin over evaluation nodes and the node attaining it.
    pub fn cd_margin(&self, f: &Array1<f64>, kn: CurvaturePair) -> Result<(f64, usize)> {
        let m = self.cd_margins(f, kn)?;
        Ok(self.masked_min(&m))
    }

    /// Minimum over masked nodes (ties resolved to the lowest index).
    pub fn masked_min(&self, v: &Array1<f64>) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for (i, &x) in v.iter().enumerate() {
            if self.eval_mask[i] && x < best.0 {
                best = (x, i);
            }
        }
        best
    }

    pub fn excluded_nodes(&self) -> usize {
        self.eval_mask.iter().filter(|&&m| !m).count()
    }

    /// ⟨Z, ∇g⟩ at every node (central differences; zero without drift).
    pub fn drift_derivative(&self, g: &Array1<f64>) -> Array1<f64> {
        let space = &self.space;
        let n = self.len();
        match space.kind {
            SpaceKind::Sphere2 => Array1::zeros(n),
            SpaceKind::Circle => Array1::from_iter((0..n).map(|i| {
                let (l, r) = ((i + n - 1) % n, (i + 1) % n);
                space.drift[i] * (g[r] - g[l]) / (2.0 * space.h)
            })),
            SpaceKind::Interval => Array1::from_iter((0..n).map(|i| {
                let l = if i == 0 { 0 } else { i - 1 };
                let r = if i + 1 == n { n - 1 } else { i + 1 };
                space.drift[i] * (g[r] - g[l]) / (2.0 * space.h)
            })),
        }
    }

    /// Whether the drift vanishes identically.
    pub fn driftless(&self) -> bool {
        self.space.drift.iter().all(|&z| z == 0.0)
    }

    /// max |μ(f Lg) − μ(g Lf)|-type defect of W·L against its transpose.
    pub fn symmetry_defect(&self) -> f64 {
        let w = &self.space.weights;
        let n = self.len();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                let a = w[i] * self.matrix[[i, j]];
                let b = w[j] * self.matrix[[j, i]];
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }
}

/// Smallest admissible K (paper convention) for dimension bound `n` on a
/// model space with analytic potential.
pub fn analytic_k(space: &ModelSpace, n: f64) -> Result<f64> {
    let d = space.d as f64;
    if n.is_nan() || n < d {
        return Err(BenchError::InvalidCurvature(format!("n = {n} is below the dimension {d}")));
    }
    let pot = &space.spec.potential;
    if !pot.is_analytic() {
        return Err(BenchError::NoAnalyticCurvature("tabulated potential".into()));
    }
    match space.kind {
        // Unit sphere: Ric = d − 1 and no drift, so Γ₂ ≥ (d−1)Γ + (Lf)²/d.
        SpaceKind::Sphere2 => Ok(-(d - 1.0)),
        SpaceKind::Circle | SpaceKind::Interval => {
            let (a, b) = match space.kind {
                SpaceKind::Circle => (0.0, 2.0 * PI),
                _ => (space.spec.a, space.spec.b),
            };
            let driftless = pot.is_zero();
            if n == 1.0 && !driftless {
                return Err(BenchError::NoAnalyticCurvature("n = 1 with a non-zero drift".into()));
            }
            let inv = if n.is_infinite() || driftless { 0.0 } else { 1.0 / (n - 1.0) };
            // V″ + V′²/(n−1) is a convex quadratic for the supported families,
            // so its supremum over [a, b] sits at an endpoint.
            let val = |x: f64| pot.second(x).unwrap() + pot.first(x).unwrap().powi(2) * inv;
            Ok(val(a).max(val(b)))
        }
    }
}

/// Empirical inversion of the CD inequality:
/// K̂ = max over samples and nodes with Γ > floor of ((Lf)²/n − Γ₂)/Γ.
///
/// `floor` defaults to 1e-8·max Γ per sample.
pub fn estimate_k(gen: &Generator, n: f64, sample: &[Array1<f64>], floor: Option<f64>) -> Result<f64> {
    if sample.is_empty() {
        return Err(BenchError::InvalidArgument("estimate_k needs a non-empty sample".into()));
    }
    if n.is_nan() || n < gen.space.d as f64 {
        return Err(BenchError::InvalidCurvature(format!("n = {n} is below the dimension")));
    }
    let inv_n = if n.is_infinite() { 0.0 } else { 1.0 / n };
    let mut best = f64::NEG_INFINITY;
    for f in sample {
        let lf = gen.apply(f);
        let g = gen.gamma_with(f, &lf);
        let g2 = gen.gamma2(f)?;
        let gmax = g.iter().cloned().fold(0.0f64, f64::max);
        let fl = floor.unwrap_or(1e-8 * gmax);
        if !(fl > 0.0) {
            continue;
        }
        for i in 0..gen.len() {
            if gen.eval_mask[i] && g[i] > fl {
                best = best.max((lf[i] * lf[i] * inv_n - g2[i]) / g[i]);
            }
        }
    }
    if best == f64::NEG_INFINITY {
        return Err(BenchError::AllFiltered);
    }
    Ok(best)
}
