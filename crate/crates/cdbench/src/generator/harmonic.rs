//! Spherical-harmonic collocation on scattered sphere nodes.
//!
//! Low-order mesh Laplacians on the icosphere reproduce the spectrum well but
//! their carré du champ is only first-order consistent pointwise, which is
//! far too coarse for inequalities whose margins are O(t²). The harmonic
//! stencil instead acts exactly on spherical harmonics of degree ≤ `lmax`
//! and damps everything else at a rate β above the resolved spectrum:
//!
//! ```text
//! L = −Y Λ Yᵀ W − β (I − Y Yᵀ W)
//! ```
//!
//! where `W` holds quadrature weights that integrate every harmonic of degree
//! ≤ 2·lmax exactly, so that `Y` is W-orthonormal and `L` is W-symmetric.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, Axis};

use crate::error::{BenchError, Result};
use crate::linalg::spd_solve;

/// Number of real spherical harmonics of degree ≤ `lmax`.
pub fn basis_size(lmax: usize) -> usize {
    (lmax + 1) * (lmax + 1)
}

/// Index of Y_lm (−l ≤ m ≤ l) in the degree-major ordering.
pub fn sh_index(l: usize, m: i64) -> usize {
    ((l * l + l) as i64 + m) as usize
}

/// Orthonormal real spherical harmonics of degree ≤ `lmax` at a unit vector,
/// normalised against surface area on the unit sphere.
#[allow(clippy::needless_range_loop)] // the Legendre recurrence reads by index
pub fn real_harmonics(p: [f64; 3], lmax: usize) -> Vec<f64> {
    let z = p[2].clamp(-1.0, 1.0);
    let s = (p[0] * p[0] + p[1] * p[1]).sqrt();
    let phi = p[1].atan2(p[0]);
    // Fully normalised associated Legendre functions P̄_lm(z), m ≥ 0,
    // including the 1/√(4π)·√(2l+1)… factors so that P̄_lm·trig is orthonormal.
    let mut plm = vec![vec![0.0; lmax + 1]; lmax + 1];
    plm[0][0] = 1.0 / (4.0 * PI).sqrt();
    for m in 1..=lmax {
        let mf = m as f64;
        plm[m][m] = -((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s * plm[m - 1][m - 1];
    }
    for m in 0..lmax {
        plm[m + 1][m] = (2.0 * m as f64 + 3.0).sqrt() * z * plm[m][m];
    }
    for m in 0..=lmax {
        for l in (m + 2)..=lmax {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
            plm[l][m] = a * (z * plm[l - 1][m] - b * plm[l - 2][m]);
        }
    }
    let mut out = vec![0.0; basis_size(lmax)];
    let sqrt2 = 2f64.sqrt();
    for l in 0..=lmax {
        out[sh_index(l, 0)] = plm[l][0];
        for m in 1..=l {
            let (c, sn) = ((m as f64 * phi).cos(), (m as f64 * phi).sin());
            out[sh_index(l, m as i64)] = sqrt2 * plm[l][m] * c;
            out[sh_index(l, -(m as i64))] = sqrt2 * plm[l][m] * sn;
        }
    }
    out
}

/// Matrix of harmonics: rows are nodes, columns are Y_lm of degree ≤ `lmax`.
pub fn harmonic_matrix(coords: &[[f64; 3]], lmax: usize) -> Array2<f64> {
    let m = basis_size(lmax);
    let mut y = Array2::zeros((coords.len(), m));
    for (i, &p) in coords.iter().enumerate() {
        for (k, v) in real_harmonics(p, lmax).into_iter().enumerate() {
            y[[i, k]] = v;
        }
    }
    y
}

/// Minimal-norm correction of `w0` so that every harmonic of degree ≤ 2·lmax
/// is integrated exactly: w = w0 + Aᵀ(AAᵀ)⁻¹(b − A w0).
pub fn corrected_weights(coords: &[[f64; 3]], w0: &Array1<f64>, lmax: usize) -> Result<Array1<f64>> {
    let a = harmonic_matrix(coords, 2 * lmax).reversed_axes();
    let mut b = Array1::<f64>::zeros(a.nrows());
    b[0] = (4.0 * PI).sqrt();
    let resid = &b - &a.dot(w0);
    let gram = a.dot(&a.t());
    let y = spd_solve(gram.view(), resid.as_slice().expect("contiguous"))
        .map_err(|e| BenchError::InvalidSpace(format!("moment correction failed: {e}")))?;
    let w = w0 + &a.t().dot(&Array1::from(y));
    if let Some(i) = w.iter().position(|&v| v <= 0.0) {
        return Err(BenchError::InvalidSpace(format!(
            "harmonic quadrature weight at node {i} is not positive; lower lmax"
        )));
    }
    Ok(w)
}

/// Rate applied to the unresolved complement: one step above degree `lmax`.
pub fn complement_rate(lmax: usize) -> f64 {
    ((lmax + 1) * (lmax + 2)) as f64
}

/// Dense harmonic generator for nodes `coords` with (volume) weights `w`.
pub fn harmonic_operator(coords: &[[f64; 3]], w: &Array1<f64>, lmax: usize) -> Array2<f64> {
    let y = harmonic_matrix(coords, lmax);
    let beta = complement_rate(lmax);
    let mut scale = Array1::zeros(basis_size(lmax));
    for l in 0..=lmax {
        for m in -(l as i64)..=(l as i64) {
            scale[sh_index(l, m)] = beta - (l * (l + 1)) as f64;
        }
    }
    // Y diag(β − λ) Yᵀ W − β I
    let left = &y * &scale.view().insert_axis(Axis(0));
    let right = &y.t() * &w.view().insert_axis(Axis(0));
    let mut op = left.dot(&right);
    for i in 0..coords.len() {
        op[[i, i]] -= beta;
    }
    op
}
