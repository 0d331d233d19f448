//! Gauss–Legendre time quadrature with node doubling.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// Convergence settings for time integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Quadrature {
    /// Initial Gauss–Legendre node count per piece.
    pub nodes: usize,
    /// Largest node count tried before giving up.
    pub max_nodes: usize,
    /// Stop once successive estimates differ by at most
    /// `tol · max(1, |estimate|)` in the sup norm.
    pub tol: f64,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self { nodes: 64, max_nodes: 2048, tol: 1e-10 }
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi's initial guess, then Newton on P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Nodes and weights of an `n`-point rule mapped onto each `(a, b)` piece.
pub fn composite_rule(pieces: &[(f64, f64)], n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let mut nodes = Vec::with_capacity(pieces.len() * n);
    let mut weights = Vec::with_capacity(pieces.len() * n);
    for &(a, b) in pieces {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (xi, wi) in x.iter().zip(w.iter()) {
            nodes.push(mid + half * xi);
            weights.push(half * wi);
        }
    }
    (nodes, weights)
}

/// Geometrically graded pieces `[0, b/4^k], …, [b/4, b]` that resolve a
/// removable singularity at the left endpoint.
pub fn graded_pieces(a: f64, b: f64, levels: usize) -> Vec<(f64, f64)> {
    let mut cuts = vec![a];
    for k in (1..=levels).rev() {
        cuts.push(a + (b - a) / 4f64.powi(k as i32));
    }
    cuts.push(b);
    cuts.windows(2).map(|c| (c[0], c[1])).collect()
}

/// Integrate a vector-valued function over `pieces`, doubling the node count
/// until successive estimates agree. `eval(nodes, weights)` must return
/// `Σ_q weights[q]·g(nodes[q])`. Returns the estimate and the node count
/// per piece that achieved it.
pub fn integrate<F>(quad: &Quadrature, pieces: &[(f64, f64)], mut eval: F) -> Result<(Array1<f64>, usize)>
where
    F: FnMut(&[f64], &[f64]) -> Result<Array1<f64>>,
{
    let pieces: Vec<(f64, f64)> = pieces.iter().copied().filter(|(a, b)| b > a).collect();
    let mut n = quad.nodes.max(1);
    let (nodes, weights) = composite_rule(&pieces, n);
    if pieces.is_empty() {
        let zero = eval(&[], &[])?;
        return Ok((zero, 0));
    }
    let mut prev = eval(&nodes, &weights)?;
    while n * 2 <= quad.max_nodes {
        n *= 2;
        let (nodes, weights) = composite_rule(&pieces, n);
        let next = eval(&nodes, &weights)?;
        let scale = next.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let change = next.iter().zip(prev.iter()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if change <= quad.tol * scale {
            return Ok((next, n));
        }
        prev = next;
    }
    Err(BenchError::Quadrature(format!(
        "no convergence to {:e} with {} nodes per piece",
        quad.tol, quad.max_nodes
    )))
}

/// Scalar convenience wrapper around [`integrate`].
pub fn integrate_scalar<F>(quad: &Quadrature, pieces: &[(f64, f64)], f: F) -> Result<(f64, usize)>
where
    F: Fn(f64) -> f64,
{
    let (v, n) = integrate(quad, pieces, |x, w| {
        Ok(Array1::from_elem(1, x.iter().zip(w.iter()).map(|(&s, &wi)| wi * f(s)).sum()))
    })?;
    Ok((v[0], n))
}
