//! Discrete optimal transport on the model spaces.
//!
//! Two solvers are provided. [`wasserstein_1d`] exploits the monotone
//! structure of optimal plans on the line and the circle; it is exact for
//! costs `h(|x − y|)` with `h` convex and increasing. [`wasserstein_exact`] is a
//! transportation simplex on the bipartite support graph and works for any
//! cost matrix; no entropic smoothing is used anywhere, because the margins
//! under test are often far smaller than a Sinkhorn bias would be.
//!
//! The cost is either the geodesic distance ρ or its modification
//! ρ̃ = (2/a)·sin(aρ/2), a = √(−K/(n−1)) (with `sinh` for K > 0), under which
//! the semigroup contracts at the dimension-improved rate.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::generator::Generator;
use crate::model_space::{ModelSpace, SpaceKind};
use crate::semigroup::SemigroupCache;

/// Largest support (per side) the exact solver accepts.
pub const MAX_SUPPORT: usize = 400;

/// Negative mass (relative to the total) that [`DiscreteMeasure::evolve`]
/// treats as round-off.
pub const NEGATIVE_MASS_TOL: f64 = 1e-10;

/// Tolerance on total mass for a measure to count as a probability.
pub const PROBABILITY_TOL: f64 = 1e-12;

/// Largest total support (both sides together) for the vertex-enumeration
/// oracle.
pub const BRUTE_FORCE_CAP: usize = 8;

/// Nonnegative masses on the nodes of a model space.
#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    pub space: Arc<ModelSpace>,
    pub masses: Array1<f64>,
    pub total: f64,
}

impl DiscreteMeasure {
    pub fn new(space: Arc<ModelSpace>, masses: Array1<f64>) -> Result<Self> {
        if masses.len() != space.len() {
            return Err(BenchError::ShapeMismatch { expected: space.len(), got: masses.len() });
        }
        if let Some(i) = masses.iter().position(|m| !m.is_finite() || *m < 0.0) {
            return Err(BenchError::InvalidArgument(format!("mass at node {i} is {}", masses[i])));
        }
        let total = masses.sum();
        Ok(Self { space, masses, total })
    }

    /// The reference measure μ of the space, rescaled to total mass one.
    pub fn reference(space: Arc<ModelSpace>) -> Self {
        let total = space.weights.sum();
        let masses = &space.weights / total;
        Self::new(space, masses).expect("weights are positive")
    }

    /// The measure with density `rho` against μ: masses `w_i·rho_i`.
    pub fn from_density(space: Arc<ModelSpace>, rho: &Array1<f64>) -> Result<Self> {
        if rho.len() != space.len() {
            return Err(BenchError::ShapeMismatch { expected: space.len(), got: rho.len() });
        }
        let masses = &space.weights * rho;
        Self::new(space, masses)
    }

    /// A unit point mass at node `i`.
    pub fn dirac(space: Arc<ModelSpace>, i: usize) -> Result<Self> {
        if i >= space.len() {
            return Err(BenchError::IndexOutOfRange { index: i, len: space.len() });
        }
        let mut masses = Array1::zeros(space.len());
        masses[i] = 1.0;
        Self::new(space, masses)
    }

    pub fn is_probability(&self) -> bool {
        (self.total - 1.0).abs() <= PROBABILITY_TOL
    }

    pub fn normalized(&self) -> Result<Self> {
        if self.total <= 0.0 {
            return Err(BenchError::InvalidArgument("cannot normalise a zero measure".into()));
        }
        Self::new(self.space.clone(), &self.masses / self.total)
    }

    /// Density against μ, `m_i / w_i`.
    pub fn density(&self) -> Array1<f64> {
        &self.masses / &self.space.weights
    }

    /// Node indices carrying positive mass, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.masses.len()).filter(|&i| self.masses[i] > 0.0).collect()
    }

    /// The measure pushed forward by the semigroup, `νP_t`, whose density
    /// against μ is `Σ_x ν(x)·p_t(x, ·)`. Tiny negative values produced by
    /// spectral round-off are set to zero and the result renormalised to the
    /// original total; more than [`NEGATIVE_MASS_TOL`] of negative mass
    /// means the discrete semigroup is not positivity preserving and is an
    /// error.
    pub fn evolve(&self, cache: &SemigroupCache, t: f64) -> Result<Self> {
        let density = cache.apply_semigroup(&self.density(), t)?;
        let mut masses = &self.space.weights * &density;
        let negative: f64 = masses.iter().filter(|m| **m < 0.0).map(|m| -m).sum();
        if negative > NEGATIVE_MASS_TOL * self.total {
            return Err(BenchError::Precondition(format!(
                "semigroup at t = {t} produced negative mass {negative:.3e}; the stencil is not positivity preserving"
            )));
        }
        masses.mapv_inplace(|m| m.max(0.0));
        let scale = self.total / masses.sum();
        Self::new(self.space.clone(), masses * scale)
    }

    /// Keep the `cap` heaviest nodes (ties broken by lower index) and
    /// renormalise to the original total. Returns the trimmed measure and the
    /// removed mass.
    pub fn top_mass(&self, cap: usize) -> Result<(Self, f64)> {
        let support = self.support();
        if support.len() <= cap {
            return Ok((self.clone(), 0.0));
        }
        let mut order = support;
        order.sort_by(|&a, &b| self.masses[b].total_cmp(&self.masses[a]).then(a.cmp(&b)));
        let kept = &order[..cap];
        let mut masses = Array1::zeros(self.masses.len());
        for &i in kept {
            masses[i] = self.masses[i];
        }
        let kept_total = masses.sum();
        let trimmed = self.total - kept_total;
        masses *= self.total / kept_total;
        Ok((Self::new(self.space.clone(), masses)?, trimmed.max(0.0)))
    }
}

/// Error bound on `W_p` incurred by top-mass trimming of one measure:
/// `(trimmed · diameter^p)^{1/p}`.
pub fn subsample_slack(trimmed: f64, diameter: f64, p: f64) -> f64 {
    (trimmed * diameter.powf(p)).powf(1.0 / p)
}

/// Ground cost of a transport problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cost", rename_all = "snake_case")]
pub enum TransportCost {
    Rho,
    RhoTilde { k: f64, n: f64 },
}

impl TransportCost {
    pub fn eval(&self, r: f64) -> Result<f64> {
        match *self {
            TransportCost::Rho => Ok(r),
            TransportCost::RhoTilde { k, n } => rho_tilde(k, n, r),
        }
    }

    /// Whether `r ↦ cost(r)^p` is convex on `[0, ∞)`, which is what the
    /// monotone 1D solver needs.
    pub fn convex_power(&self, p: f64) -> bool {
        match *self {
            TransportCost::Rho => p >= 1.0,
            TransportCost::RhoTilde { k, .. } => k >= 0.0 && p >= 1.0,
        }
    }
}

/// The modified distance ρ̃(r) for curvature `k` and dimension `n > 1`.
pub fn rho_tilde(k: f64, n: f64, r: f64) -> Result<f64> {
    if !(n > 1.0) {
        return Err(BenchError::InvalidArgument(format!("rho_tilde needs n > 1, got {n}")));
    }
    if !(r >= 0.0) || !k.is_finite() {
        return Err(BenchError::InvalidArgument(format!("rho_tilde needs r >= 0 and finite K (r = {r}, K = {k})")));
    }
    let a2 = k.abs() / (n - 1.0);
    let a = a2.sqrt();
    if k < 0.0 && 0.5 * r * a > std::f64::consts::FRAC_PI_2 + 1e-9 {
        return Err(BenchError::InvalidArgument(format!(
            "rho_tilde: r = {r} beyond the monotone range of the sine for K = {k}, n = {n}"
        )));
    }
    if k.abs() * r * r < 1e-8 {
        // ρ̃ = r ∓ a²r³/24 + a⁴r⁵/1920 (upper sign for K < 0).
        let s = if k < 0.0 { -1.0 } else { 1.0 };
        let r3 = r * r * r;
        return Ok(r + s * a2 * r3 / 24.0 + a2 * a2 * r3 * r * r / 1920.0);
    }
    Ok(if k < 0.0 { 2.0 / a * (0.5 * r * a).sin() } else { 2.0 / a * (0.5 * r * a).sinh() })
}

/// Dense cost matrix `cost(ρ(i, j))` over all node pairs of a space.
pub fn cost_matrix(space: &ModelSpace, cost: TransportCost) -> Result<Array2<f64>> {
    let n = space.len();
    let mut c = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let v = cost.eval(space.dist(i, j))?;
            c[[i, j]] = v;
            c[[j, i]] = v;
        }
    }
    Ok(c)
}

/// A coupling stored as sparse `(i, j, mass)` triples over node indices.
#[derive(Debug, Clone, Serialize)]
pub struct TransportPlan {
    pub entries: Vec<(usize, usize, f64)>,
    /// `Σ mass · c^p`, i.e. `W_p^p` at the optimum.
    pub cost: f64,
}

impl TransportPlan {
    /// Row and column sums over `n` nodes.
    pub fn marginals(&self, n: usize) -> (Array1<f64>, Array1<f64>) {
        let mut rows = Array1::zeros(n);
        let mut cols = Array1::zeros(n);
        for &(i, j, m) in &self.entries {
            rows[i] += m;
            cols[j] += m;
        }
        (rows, cols)
    }

    /// Write the plan as CSV with header `i,j,mass`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| BenchError::io(path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        let mut body = || -> std::io::Result<()> {
            writeln!(w, "i,j,mass")?;
            for &(i, j, m) in &self.entries {
                writeln!(w, "{i},{j},{m:e}")?;
            }
            w.flush()
        };
        body().map_err(|e| BenchError::io(path.display().to_string(), e))
    }
}

fn check_pair(nu1: &DiscreteMeasure, nu2: &DiscreteMeasure) -> Result<()> {
    if nu1.masses.len() != nu2.masses.len() {
        return Err(BenchError::ShapeMismatch { expected: nu1.masses.len(), got: nu2.masses.len() });
    }
    if !nu1.is_probability() || !nu2.is_probability() {
        return Err(BenchError::InvalidArgument(format!(
            "transport needs probability measures (totals {} and {})",
            nu1.total, nu2.total
        )));
    }
    Ok(())
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(BenchError::InvalidArgument(format!("transport exponent p must be >= 1, got {p}")));
    }
    Ok(())
}

/// `W_p` between two probability measures on a circle or interval.
///
/// On the interval this is the quantile coupling. On the circle the optimum
/// is a quantile coupling after cutting the circle; the cut is parametrised by
/// a mass shift α, over which the lifted cost is convex, so a grid search
/// followed by golden-section refinement finds it.
///
/// Costs for which `cost^p` is not convex (ρ̃ with K < 0) break the monotone
/// structure; those instances are routed to [`wasserstein_exact`].
pub fn wasserstein_1d(nu1: &DiscreteMeasure, nu2: &DiscreteMeasure, p: f64, cost: TransportCost) -> Result<f64> {
    check_p(p)?;
    check_pair(nu1, nu2)?;
    let space = &nu1.space;
    if space.kind == SpaceKind::Sphere2 {
        return Err(BenchError::InvalidArgument("wasserstein_1d needs a circle or interval".into()));
    }
    if !cost.convex_power(p) {
        let c = cost_matrix(space, cost)?;
        return Ok(wasserstein_exact(c.view(), nu1, nu2, p)?.0);
    }
    let atoms = |nu: &DiscreteMeasure| -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> = nu.support().into_iter().map(|i| (space.x(i), nu.masses[i])).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    };
    let a = atoms(nu1);
    let b = atoms(nu2);
    let h = |r: f64| -> Result<f64> { Ok(cost.eval(r)?.powf(p)) };
    let value = match space.kind {
        SpaceKind::Interval => monotone_cost(&a, &b, &h)?,
        SpaceKind::Circle => circle_cost(&a, &b, &h)?,
        SpaceKind::Sphere2 => unreachable!(),
    };
    Ok(value.max(0.0).powf(1.0 / p))
}

/// Cost of the monotone coupling between two sorted atom lists of equal mass.
fn monotone_cost(a: &[(f64, f64)], b: &[(f64, f64)], h: &dyn Fn(f64) -> Result<f64>) -> Result<f64> {
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a.first().map_or(0.0, |x| x.1), b.first().map_or(0.0, |x| x.1));
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let m = ra.min(rb);
        if m > 0.0 {
            total += m * h((a[i].0 - b[j].0).abs())?;
        }
        ra -= m;
        rb -= m;
        // Advance whichever side is (numerically) exhausted; the leftovers
        // are at round-off level.
        if ra <= rb {
            i += 1;
            if i < a.len() {
                ra = a[i].1;
            }
        } else {
            j += 1;
            if j < b.len() {
                rb = b[j].1;
            }
        }
    }
    Ok(total)
}

/// Lifted circle cost at mass shift α: the quantile coupling of `a` against
/// `b` rotated so that `b`'s quantile level α is matched with level 0 of `a`.
fn circle_shift_cost(a: &[(f64, f64)], b: &[(f64, f64)], alpha: f64, h: &dyn Fn(f64) -> Result<f64>) -> Result<f64> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let k = alpha.floor();
    let beta = alpha - k;
    let offset = two_pi * k;
    // Rotate b's atom list to start at quantile level β.
    let mut rotated = Vec::with_capacity(b.len() + 1);
    let mut cum = 0.0;
    let mut start = b.len();
    for (idx, &(x, m)) in b.iter().enumerate() {
        if cum + m > beta {
            rotated.push((x + offset, cum + m - beta));
            start = idx + 1;
            break;
        }
        cum += m;
    }
    for &(x, m) in &b[start.min(b.len())..] {
        rotated.push((x + offset, m));
    }
    for &(x, m) in b {
        rotated.push((x + offset + two_pi, m));
    }
    // Truncate the wrapped part to total mass one.
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(rotated.len());
    for (x, m) in rotated {
        if acc >= 1.0 {
            break;
        }
        let take = m.min(1.0 - acc);
        if take > 0.0 {
            out.push((x, take));
        }
        acc += take;
    }
    monotone_cost(a, &out, h)
}

fn circle_cost(a: &[(f64, f64)], b: &[(f64, f64)], h: &dyn Fn(f64) -> Result<f64>) -> Result<f64> {
    const RANGE: f64 = 2.0;
    let grid = 4 * (a.len() + b.len()) + 16;
    let step = 2.0 * RANGE / grid as f64;
    let mut best = (f64::INFINITY, 0usize);
    for g in 0..=grid {
        let alpha = -RANGE + g as f64 * step;
        let v = circle_shift_cost(a, b, alpha, h)?;
        if v < best.0 {
            best = (v, g);
        }
    }
    // Convexity in α puts the minimiser within one grid step of the best node.
    let centre = -RANGE + best.1 as f64 * step;
    let (mut lo, mut hi) = (centre - step, centre + step);
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = circle_shift_cost(a, b, x1, h)?;
    let mut f2 = circle_shift_cost(a, b, x2, h)?;
    let mut out = best.0;
    for _ in 0..200 {
        if hi - lo <= 1e-15 {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = circle_shift_cost(a, b, x1, h)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = circle_shift_cost(a, b, x2, h)?;
        }
        out = out.min(f1).min(f2);
    }
    Ok(out)
}

/// Exact `W_p` for an arbitrary cost matrix, with the optimal plan.
///
/// `costs[[i, j]]` is the ground cost between nodes `i` and `j`; only
/// supported nodes enter the problem. Each support must have at most
/// [`MAX_SUPPORT`] nodes (trim with [`DiscreteMeasure::top_mass`] first).
pub fn wasserstein_exact(
    costs: ArrayView2<f64>,
    nu1: &DiscreteMeasure,
    nu2: &DiscreteMeasure,
    p: f64,
) -> Result<(f64, TransportPlan)> {
    check_p(p)?;
    let n = nu1.masses.len();
    if nu2.masses.len() != n {
        return Err(BenchError::ShapeMismatch { expected: n, got: nu2.masses.len() });
    }
    if costs.dim() != (n, n) {
        return Err(BenchError::ShapeMismatch { expected: n * n, got: costs.len() });
    }
    if (nu1.total - nu2.total).abs() > 1e-9 {
        return Err(BenchError::Infeasible(format!("totals differ: {} vs {}", nu1.total, nu2.total)));
    }
    let rows = nu1.support();
    let cols = nu2.support();
    for s in [&rows, &cols] {
        if s.len() > MAX_SUPPORT {
            return Err(BenchError::SupportCap { size: s.len(), cap: MAX_SUPPORT });
        }
    }
    if rows.is_empty() || cols.is_empty() {
        return Ok((0.0, TransportPlan { entries: Vec::new(), cost: 0.0 }));
    }
    let mut c = Array2::zeros((rows.len(), cols.len()));
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            c[[a, b]] = costs[[i, j]];
        }
    }
    solve_supported(c, &rows, &cols, nu1, nu2, p)
}

/// Exact solve on the support×support cost block (unpowered costs).
fn solve_supported(
    mut c: Array2<f64>,
    rows: &[usize],
    cols: &[usize],
    nu1: &DiscreteMeasure,
    nu2: &DiscreteMeasure,
    p: f64,
) -> Result<(f64, TransportPlan)> {
    for ((a, b), v) in c.indexed_iter_mut() {
        if !(*v >= 0.0) || !v.is_finite() {
            return Err(BenchError::InvalidArgument(format!(
                "cost ({}, {}) = {v} is not a finite nonnegative value",
                rows[a], cols[b]
            )));
        }
        *v = v.powf(p);
    }
    let supply: Vec<f64> = rows.iter().map(|&i| nu1.masses[i]).collect();
    let mut demand: Vec<f64> = cols.iter().map(|&j| nu2.masses[j]).collect();
    // Absorb the (≤ 1e-9) total mismatch into the largest demand so the
    // problem is exactly balanced.
    let gap = supply.iter().sum::<f64>() - demand.iter().sum::<f64>();
    let big = (0..demand.len()).max_by(|&a, &b| demand[a].total_cmp(&demand[b])).unwrap();
    demand[big] += gap;
    let flows = transportation_simplex(c.view(), &supply, &demand)?;
    let mut entries = Vec::new();
    let mut total = 0.0;
    for (a, b, m) in flows {
        if m > 0.0 {
            total += m * c[[a, b]];
            entries.push((rows[a], cols[b], m));
        }
    }
    entries.sort_by_key(|e| (e.0, e.1));
    Ok((total.max(0.0).powf(1.0 / p), TransportPlan { entries, cost: total }))
}

/// A transport distance together with the bookkeeping of how it was found.
#[derive(Debug, Clone)]
pub struct TransportResult {
    pub distance: f64,
    /// Upper bound on the error from top-mass trimming (zero if none).
    pub slack: f64,
    /// Mass removed from each measure by trimming.
    pub trimmed: (f64, f64),
    /// Present when the exact solver ran.
    pub plan: Option<TransportPlan>,
}

/// `W_p` between two probability measures on their common space, choosing
/// the solver: the monotone solver on 1D spaces when it is exact, otherwise
/// the exact solver after trimming each measure to [`MAX_SUPPORT`] nodes.
/// Costs are only evaluated on support pairs.
pub fn wasserstein_on_space(
    nu1: &DiscreteMeasure,
    nu2: &DiscreteMeasure,
    p: f64,
    cost: TransportCost,
) -> Result<TransportResult> {
    check_p(p)?;
    check_pair(nu1, nu2)?;
    let space = &nu1.space;
    if space.kind != SpaceKind::Sphere2 && cost.convex_power(p) {
        let distance = wasserstein_1d(nu1, nu2, p, cost)?;
        return Ok(TransportResult { distance, slack: 0.0, trimmed: (0.0, 0.0), plan: None });
    }
    let (a, ta) = nu1.top_mass(MAX_SUPPORT)?;
    let (b, tb) = nu2.top_mass(MAX_SUPPORT)?;
    let rows = a.support();
    let cols = b.support();
    let mut c = Array2::zeros((rows.len(), cols.len()));
    for (i, &r) in rows.iter().enumerate() {
        for (j, &q) in cols.iter().enumerate() {
            c[[i, j]] = cost.eval(space.dist(r, q))?;
        }
    }
    let (distance, plan) = if rows.is_empty() || cols.is_empty() {
        (0.0, TransportPlan { entries: Vec::new(), cost: 0.0 })
    } else {
        solve_supported(c, &rows, &cols, &a, &b, p)?
    };
    let diameter = cost.eval(space.diameter)?;
    let slack = subsample_slack(ta, diameter, p) + subsample_slack(tb, diameter, p);
    Ok(TransportResult { distance, slack, trimmed: (ta, tb), plan: Some(plan) })
}

/// Spanning-tree basis of the transportation problem. Nodes `0..m` are
/// sources, `m..m+n` sinks; each basic cell is an edge.
struct Basis {
    m: usize,
    cells: Vec<(usize, usize, f64)>,
    adj: Vec<Vec<usize>>,
}

impl Basis {
    fn add(&mut self, i: usize, j: usize, flow: f64) {
        let e = self.cells.len();
        self.cells.push((i, j, flow));
        self.adj[i].push(e);
        self.adj[self.m + j].push(e);
    }

    fn other(&self, e: usize, node: usize) -> usize {
        let (i, j, _) = self.cells[e];
        if node == i {
            self.m + j
        } else {
            i
        }
    }

    /// Breadth-first traversal from `root`, recording the parent edge of
    /// every node.
    fn tree_parents(&self, root: usize) -> Vec<Option<usize>> {
        let total = self.adj.len();
        let mut parent = vec![None; total];
        let mut seen = vec![false; total];
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let v = self.other(e, u);
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = Some(e);
                    queue.push_back(v);
                }
            }
        }
        parent
    }

    fn potentials(&self, c: ArrayView2<f64>) -> (Vec<f64>, Vec<f64>) {
        let n = self.adj.len() - self.m;
        let mut u = vec![0.0; self.m];
        let mut v = vec![0.0; n];
        let mut seen = vec![false; self.adj.len()];
        seen[0] = true;
        let mut queue = VecDeque::from([0usize]);
        while let Some(x) = queue.pop_front() {
            for &e in &self.adj[x] {
                let y = self.other(e, x);
                if seen[y] {
                    continue;
                }
                seen[y] = true;
                let (i, j, _) = self.cells[e];
                if y >= self.m {
                    v[j] = c[[i, j]] - u[i];
                } else {
                    u[i] = c[[i, j]] - v[j];
                }
                queue.push_back(y);
            }
        }
        (u, v)
    }

    fn replace(&mut self, leaving: usize, i: usize, j: usize, flow: f64) {
        let (li, lj, _) = self.cells[leaving];
        let m = self.m;
        self.adj[li].retain(|&e| e != leaving);
        self.adj[m + lj].retain(|&e| e != leaving);
        self.cells[leaving] = (i, j, flow);
        self.adj[i].push(leaving);
        self.adj[m + j].push(leaving);
    }
}

/// Transportation simplex with block pricing. Returns basic cells with flows.
fn transportation_simplex(c: ArrayView2<f64>, supply: &[f64], demand: &[f64]) -> Result<Vec<(usize, usize, f64)>> {
    let (m, n) = (supply.len(), demand.len());
    let mut basis = Basis { m, cells: Vec::with_capacity(m + n - 1), adj: vec![Vec::new(); m + n] };

    // North-west corner start; a simultaneous exhaustion advances only the
    // row so the next basic cell carries zero flow and the basis stays a
    // spanning tree.
    let (mut i, mut j) = (0, 0);
    let mut s = supply[0];
    let mut d = demand[0];
    while basis.cells.len() < m + n - 1 {
        let f = s.min(d).max(0.0);
        basis.add(i, j, f);
        s -= f;
        d -= f;
        if basis.cells.len() == m + n - 1 {
            break;
        }
        if (i + 1 < m && s <= d) || j + 1 == n {
            i += 1;
            s = supply[i];
            d = d.max(0.0);
        } else {
            j += 1;
            d = demand[j];
            s = s.max(0.0);
        }
    }

    let scale = c.iter().fold(0.0f64, |a, &b| a.max(b)).max(1e-300);
    let eps = 1e-13 * scale;
    let cells = m * n;
    let block = ((cells as f64).sqrt().ceil() as usize).max(16).min(cells);
    let mut cursor = 0usize;
    let max_iter = 50 * cells + 1000;

    for _ in 0..max_iter {
        let (u, v) = basis.potentials(c);
        // Block pricing: scan one block at a time, take the most negative
        // reduced cost found in the first block that has any.
        let mut entering = None;
        let mut best = -eps;
        let mut scanned = 0;
        while scanned < cells {
            let end = (scanned + block).min(cells);
            for k in scanned..end {
                let idx = (cursor + k) % cells;
                let (a, b) = (idx / n, idx % n);
                let r = c[[a, b]] - u[a] - v[b];
                if r < best {
                    best = r;
                    entering = Some((a, b));
                }
            }
            scanned = end;
            if entering.is_some() {
                cursor = (cursor + scanned) % cells;
                break;
            }
        }
        let Some((ei, ej)) = entering else {
            return Ok(basis.cells);
        };

        // Cycle: tree path from sink ej back to source ei, plus the new cell.
        let parent = basis.tree_parents(ei);
        let mut path = Vec::new();
        let mut node = m + ej;
        while node != ei {
            let e = parent[node].ok_or_else(|| BenchError::Infeasible("basis is not a spanning tree".into()))?;
            path.push(e);
            node = basis.other(e, node);
        }
        // Along the path starting next to the sink, signs alternate −, +, −, …
        let mut theta = f64::INFINITY;
        let mut leaving = usize::MAX;
        for (k, &e) in path.iter().enumerate() {
            if k % 2 == 0 && basis.cells[e].2 < theta {
                theta = basis.cells[e].2;
                leaving = e;
            }
        }
        for (k, &e) in path.iter().enumerate() {
            let f = &mut basis.cells[e].2;
            if k % 2 == 0 {
                *f = if e == leaving { 0.0 } else { (*f - theta).max(0.0) };
            } else {
                *f += theta;
            }
        }
        basis.replace(leaving, ei, ej, theta);
    }
    Err(BenchError::Infeasible("transportation simplex hit its iteration cap".into()))
}

/// Exhaustive optimum over all vertices of the transportation polytope.
///
/// Every vertex corresponds to a spanning-tree basis, so all `(m+n−1)`-subsets
/// of cells are enumerated. Exponential; only for instances with at most
/// [`BRUTE_FORCE_CAP`] support points in total. Returns `W_p^p`.
pub fn transport_bruteforce(costs: ArrayView2<f64>, supply: &[f64], demand: &[f64], p: f64) -> Result<f64> {
    check_p(p)?;
    let (m, n) = (supply.len(), demand.len());
    if m + n > BRUTE_FORCE_CAP || m == 0 || n == 0 {
        return Err(BenchError::SupportCap { size: m + n, cap: BRUTE_FORCE_CAP });
    }
    if costs.dim() != (m, n) {
        return Err(BenchError::ShapeMismatch { expected: m * n, got: costs.len() });
    }
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let k = m + n - 1;
    let mut best = f64::INFINITY;
    let mut chosen: Vec<usize> = (0..k).collect();
    loop {
        if let Some(flows) = tree_flows(&chosen.iter().map(|&c| cells[c]).collect::<Vec<_>>(), supply, demand) {
            let v: f64 = chosen.iter().zip(flows.iter()).map(|(&c, f)| f * costs[[cells[c].0, cells[c].1]].powf(p)).sum();
            best = best.min(v);
        }
        // Next k-combination in lexicographic order.
        let total = cells.len();
        let mut pos = k;
        loop {
            if pos == 0 {
                return if best.is_finite() { Ok(best) } else { Err(BenchError::Infeasible("no feasible vertex".into())) };
            }
            pos -= 1;
            if chosen[pos] < total - k + pos {
                break;
            }
        }
        chosen[pos] += 1;
        for q in pos + 1..k {
            chosen[q] = chosen[q - 1] + 1;
        }
    }
}

/// Flows on a candidate basis by leaf peeling; `None` if the cells do not
/// form a spanning tree or a flow comes out negative.
fn tree_flows(cells: &[(usize, usize)], supply: &[f64], demand: &[f64]) -> Option<Vec<f64>> {
    let m = supply.len();
    let nodes = m + demand.len();
    let mut residual: Vec<f64> = supply.iter().chain(demand.iter()).copied().collect();
    let mut degree = vec![0usize; nodes];
    for &(i, j) in cells {
        degree[i] += 1;
        degree[m + j] += 1;
    }
    let mut flows = vec![f64::NAN; cells.len()];
    let mut alive = vec![true; cells.len()];
    for _ in 0..cells.len() {
        let (e, leaf) = cells.iter().enumerate().find_map(|(e, &(i, j))| {
            if !alive[e] {
                None
            } else if degree[i] == 1 {
                Some((e, i))
            } else if degree[m + j] == 1 {
                Some((e, m + j))
            } else {
                None
            }
        })?;
        let (i, j) = cells[e];
        let other = if leaf == i { m + j } else { i };
        let f = residual[leaf];
        if f < -1e-14 {
            return None;
        }
        flows[e] = f.max(0.0);
        residual[leaf] = 0.0;
        residual[other] -= f;
        degree[i] -= 1;
        degree[m + j] -= 1;
        alive[e] = false;
    }
    // A spanning tree consumes every node's residual.
    if residual.iter().any(|r| r.abs() > 1e-12) || degree.iter().any(|&d| d != 0) {
        return None;
    }
    Some(flows)
}

/// Relative entropy `Σ ν_i log(ν_i/μ_i)` with `0·log 0 = 0`.
pub fn relative_entropy(nu: &DiscreteMeasure, mu: &DiscreteMeasure) -> Result<f64> {
    if nu.masses.len() != mu.masses.len() {
        return Err(BenchError::ShapeMismatch { expected: mu.masses.len(), got: nu.masses.len() });
    }
    if !nu.is_probability() || !mu.is_probability() {
        return Err(BenchError::InvalidArgument("relative entropy needs probability measures".into()));
    }
    let mut h = 0.0;
    for (i, (&a, &b)) in nu.masses.iter().zip(mu.masses.iter()).enumerate() {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Err(BenchError::Precondition(format!("nu is not absolutely continuous w.r.t. mu at node {i}")));
        }
        h += a * (a / b).ln();
    }
    Ok(h)
}

/// Fisher information `Σ w_i Γ(f, f)_i` against the generator's measure.
pub fn fisher_information(gen: &Generator, f: &Array1<f64>) -> Result<f64> {
    let g = gen.carre_du_champ(f, f)?;
    Ok(gen.space.integrate(&g))
}
