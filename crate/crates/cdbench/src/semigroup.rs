//! Spectral calculus for the semigroup P_t = e^{tL}.
//!
//! The generator is symmetric in L²(μ), so D^{1/2} L D^{−1/2} (D the weight
//! diagonal) is a symmetric matrix. Its dense eigendecomposition gives
//! μ-orthonormal eigenfunctions φ_k of −L with eigenvalues λ_k ≥ 0, and
//! then
//!
//! ```text
//! P_t f = Σ_k e^{−λ_k t} μ(f φ_k) φ_k,     p_t(x,y) = Σ_k e^{−λ_k t} φ_k(x) φ_k(y).
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{Array1, Array2, Axis};
use sha2::{Digest, Sha256};

use crate::error::{BenchError, Result};
use crate::generator::Generator;
use crate::linalg::symmetric_eigen;

/// Eigenvalues below this are treated as the kernel of −L.
pub const KERNEL_THRESHOLD: f64 = 1e-10;

/// Eigendecomposition of −L powering every semigroup evaluation.
#[derive(Debug, Clone)]
pub struct SemigroupCache {
    pub gen: Arc<Generator>,
    /// Ascending eigenvalues of −L.
    pub eigenvalues: Array1<f64>,
    /// μ-orthonormal eigenfunctions as columns.
    pub eigenvectors: Array2<f64>,
    /// Φᵀ·diag(w): maps a grid function to its spectral coefficients.
    analysis: Array2<f64>,
}

/// Performs the dense symmetric eigendecomposition of the generator.
pub fn spectral_decompose(gen: Arc<Generator>) -> Result<SemigroupCache> {
    if !gen.symmetric_in_mu {
        return Err(BenchError::NotSymmetric(f64::NAN));
    }
    let w = &gen.space.weights;
    let n = gen.len();
    let sw = w.mapv(f64::sqrt);
    let scale = gen.matrix.iter().map(|v| v.abs()).fold(0.0f64, f64::max).max(1.0);
    let mut s = Array2::<f64>::zeros((n, n));
    let mut defect = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            s[[i, j]] = -sw[i] * gen.matrix[[i, j]] / sw[j];
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (s[[i, j]], s[[j, i]]);
            defect = defect.max((a - b).abs());
            let m = 0.5 * (a + b);
            s[[i, j]] = m;
            s[[j, i]] = m;
        }
    }
    if defect > 1e-8 * scale {
        return Err(BenchError::NotSymmetric(defect));
    }
    let (mut lam, u) = symmetric_eigen(s.view())?;
    let mut phi = &u / &sw.view().insert_axis(Axis(1));
    for k in 0..n {
        if lam[k] < 0.0 && lam[k] > -KERNEL_THRESHOLD {
            lam[k] = 0.0;
        }
        // Fix the sign so the largest-magnitude entry is positive.
        let col = phi.column(k);
        let mut best = (0.0f64, 0usize);
        for (i, &v) in col.iter().enumerate() {
            if v.abs() > best.0 * (1.0 + 1e-12) {
                best = (v.abs(), i);
            }
        }
        if phi[[best.1, k]] < 0.0 {
            phi.column_mut(k).mapv_inplace(|v| -v);
        }
    }
    Ok(SemigroupCache::from_parts(gen, lam, phi))
}

impl SemigroupCache {
    fn from_parts(gen: Arc<Generator>, eigenvalues: Array1<f64>, eigenvectors: Array2<f64>) -> Self {
        let w = &gen.space.weights;
        let analysis = (&eigenvectors * &w.view().insert_axis(Axis(1))).reversed_axes().as_standard_layout().into_owned();
        SemigroupCache { gen, eigenvalues, eigenvectors, analysis }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Spectral coefficients μ(f φ_k).
    pub fn coefficients(&self, f: &Array1<f64>) -> Array1<f64> {
        self.analysis.dot(f)
    }

    /// Coefficients for each column of `f`.
    pub fn coefficients_many(&self, f: &Array2<f64>) -> Array2<f64> {
        self.analysis.dot(f)
    }

    /// Grid function Σ c_k φ_k.
    pub fn synthesize(&self, c: &Array1<f64>) -> Array1<f64> {
        self.eigenvectors.dot(c)
    }

    /// Grid functions for each column of `c`.
    pub fn synthesize_many(&self, c: &Array2<f64>) -> Array2<f64> {
        self.eigenvectors.dot(c)
    }

    /// Multiplies coefficients by e^{−λ_k t}.
    pub fn decay(&self, c: &Array1<f64>, t: f64) -> Array1<f64> {
        Array1::from_iter(c.iter().zip(self.eigenvalues.iter()).map(|(c, l)| c * (-l * t).exp()))
    }

    /// P_t f.
    pub fn apply_semigroup(&self, f: &Array1<f64>, t: f64) -> Result<Array1<f64>> {
        check_time(t, true)?;
        if f.len() != self.len() {
            return Err(BenchError::ShapeMismatch { expected: self.len(), got: f.len() });
        }
        if t == 0.0 {
            return Ok(f.clone());
        }
        Ok(self.synthesize(&self.decay(&self.coefficients(f), t)))
    }

    /// Heat kernel p_t(x, y) with respect to μ.
    pub fn heat_kernel(&self, t: f64, x: usize, y: usize) -> Result<f64> {
        check_time(t, false)?;
        self.check_node(x)?;
        self.check_node(y)?;
        let (px, py) = (self.eigenvectors.row(x), self.eigenvectors.row(y));
        // Same summation order for (x,y) and (y,x): symmetric bitwise.
        let mut s = 0.0;
        for k in 0..self.len() {
            s += (-self.eigenvalues[k] * t).exp() * (px[k] * py[k]);
        }
        Ok(s)
    }

    /// The whole row z ↦ p_t(x, z).
    pub fn heat_kernel_row(&self, t: f64, x: usize) -> Result<Array1<f64>> {
        check_time(t, false)?;
        self.check_node(x)?;
        let c = self.decay(&self.eigenvectors.row(x).to_owned(), t);
        Ok(self.synthesize(&c))
    }

    /// First eigenvalue above the kernel threshold.
    pub fn spectral_gap(&self) -> f64 {
        self.eigenvalues.iter().copied().find(|&l| l > KERNEL_THRESHOLD).unwrap_or(f64::INFINITY)
    }

    /// Eigenfunction φ_k as a grid function.
    pub fn eigenfunction(&self, k: usize) -> Array1<f64> {
        self.eigenvectors.column(k).to_owned()
    }

    fn check_node(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            return Err(BenchError::IndexOutOfRange { index: i, len: self.len() });
        }
        Ok(())
    }

    /// max_k ‖Lφ_k + λ_kφ_k‖_∞ / (1 + λ_k).
    pub fn residual(&self) -> f64 {
        let lphi = self.gen.matrix.dot(&self.eigenvectors);
        let mut worst = 0.0f64;
        for k in 0..self.len() {
            let lam = self.eigenvalues[k];
            let r = lphi
                .column(k)
                .iter()
                .zip(self.eigenvectors.column(k).iter())
                .map(|(a, b)| (a + lam * b).abs())
                .fold(0.0f64, f64::max);
            worst = worst.max(r / (1.0 + lam));
        }
        worst
    }
}

fn check_time(t: f64, allow_zero: bool) -> Result<()> {
    if !t.is_finite() || t < 0.0 || (!allow_zero && t == 0.0) {
        return Err(BenchError::InvalidTime(format!("t = {t}")));
    }
    Ok(())
}

/// Value of the Legendre-series sphere kernel and how it was truncated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    pub l_max: usize,
    /// Tail bound (2L+3)²e^{−L(L+1)t} at the truncation degree.
    pub tail_bound: f64,
    pub truncation_warning: bool,
}

/// Largest degree the series may use.
pub const SERIES_L_CAP: usize = 500;
const SERIES_TAIL_TOL: f64 = 1e-12;

fn tail_bound(l: usize, t: f64) -> f64 {
    let lf = l as f64;
    (2.0 * lf + 3.0).powi(2) * (-lf * (lf + 1.0) * t).exp()
}

/// Heat kernel of the unit sphere with respect to the normalised uniform
/// measure: Σ_l (2l+1) e^{−l(l+1)t} P_l(cos θ).
///
/// With `l_max = None` the degree is chosen adaptively so that the tail bound
/// is below 1e-12; an error is returned when that needs more than 500 terms.
pub fn sphere_kernel_series(t: f64, theta: f64, l_max: Option<usize>) -> Result<SeriesValue> {
    check_time(t, false)?;
    let l_max = match l_max {
        Some(l) => l,
        None => (0..=SERIES_L_CAP)
            .find(|&l| tail_bound(l, t) < SERIES_TAIL_TOL)
            .ok_or_else(|| BenchError::InvalidTime(format!("t = {t} too small for a {SERIES_L_CAP}-term series")))?,
    };
    let x = theta.cos();
    let (mut p_prev, mut p) = (1.0f64, x);
    let mut sum = 1.0;
    if l_max >= 1 {
        sum += 3.0 * (-2.0 * t).exp() * x;
    }
    for l in 2..=l_max {
        let lf = l as f64;
        let next = ((2.0 * lf - 1.0) * x * p - (lf - 1.0) * p_prev) / lf;
        p_prev = p;
        p = next;
        sum += (2.0 * lf + 1.0) * (-lf * (lf + 1.0) * t).exp() * p;
    }
    let tb = tail_bound(l_max, t);
    Ok(SeriesValue { value: sum, l_max, tail_bound: tb, truncation_warning: tb >= SERIES_TAIL_TOL })
}

const CACHE_MAGIC: &[u8; 16] = b"CDBENCH-SGCACHE\n";
const CACHE_VERSION: u32 = 1;

/// Stable key for a cache file: SHA-256 of the canonical JSON space spec.
pub fn cache_key(spec_json: &str) -> String {
    let digest = Sha256::digest(spec_json.as_bytes());
    digest.iter().take(12).map(|b| format!("{b:02x}")).collect()
}

/// Path of the cache file for `spec_json` inside `dir`.
pub fn cache_path(dir: &Path, spec_json: &str) -> PathBuf {
    dir.join(format!("semigroup-{}.bin", cache_key(spec_json)))
}

impl SemigroupCache {
    /// Writes eigenpairs to `path` with a versioned header echoing the spec.
    pub fn dump(&self, path: &Path, spec_json: &str) -> Result<()> {
        let mut buf: Vec<u8> = Vec::with_capacity(16 + 8 * self.len() * (self.len() + 1));
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        buf.extend_from_slice(&(spec_json.len() as u64).to_le_bytes());
        buf.extend_from_slice(spec_json.as_bytes());
        buf.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for v in self.eigenvalues.iter().chain(self.eigenvectors.iter()) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let tmp = path.with_extension("tmp");
        let mut file = fs::File::create(&tmp).map_err(|e| BenchError::io(tmp.display().to_string(), e))?;
        file.write_all(&buf).map_err(|e| BenchError::io(tmp.display().to_string(), e))?;
        drop(file);
        fs::rename(&tmp, path).map_err(|e| BenchError::io(path.display().to_string(), e))
    }

    /// Loads eigenpairs dumped for the same spec and generator size.
    pub fn load(path: &Path, spec_json: &str, gen: Arc<Generator>) -> Result<Self> {
        let mut file = fs::File::open(path).map_err(|e| BenchError::io(path.display().to_string(), e))?;
        let mut buf = Vec::new();
        file.read_to_end(&mut buf).map_err(|e| BenchError::io(path.display().to_string(), e))?;
        let mut cur = Cursor { buf: &buf, pos: 0 };
        if cur.take(16)? != CACHE_MAGIC {
            return Err(BenchError::Cache("bad magic".into()));
        }
        let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
        if version != CACHE_VERSION {
            return Err(BenchError::Cache(format!("unsupported cache version {version}")));
        }
        let slen = u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize;
        if cur.take(slen)? != spec_json.as_bytes() {
            return Err(BenchError::Cache("space spec differs from the cached one".into()));
        }
        let n = u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize;
        if n != gen.len() {
            return Err(BenchError::Cache(format!("cached size {n} != generator size {}", gen.len())));
        }
        let mut read = |count: usize| -> Result<Vec<f64>> {
            let bytes = cur.take(8 * count)?;
            Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
        };
        let lam = Array1::from(read(n)?);
        let phi = Array2::from_shape_vec((n, n), read(n * n)?).map_err(|e| BenchError::Cache(e.to_string()))?;
        Ok(SemigroupCache::from_parts(gen, lam, phi))
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(BenchError::Cache("truncated cache file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}
