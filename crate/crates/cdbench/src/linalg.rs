//! Thin safe wrappers over the two LAPACK drivers the bench needs.
//!
//! Dense symmetric eigendecomposition dominates set-up cost on the sphere
//! (a few thousand nodes), so it goes to the divide-and-conquer driver
//! `dsyevd` of the system OpenBLAS rather than a pure-Rust Jacobi sweep.

use std::os::raw::c_char;

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{BenchError, Result};

#[link(name = "openblas")]
extern "C" {}

/// Symmetric eigendecomposition `a = V diag(w) Vᵀ`.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors as the columns of a standard-layout matrix. Only the lower
/// triangle of `a` is referenced.
pub fn symmetric_eigen(a: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(BenchError::ShapeMismatch { expected: n, got: a.ncols() });
    }
    if n == 0 {
        return Ok((Array1::zeros(0), Array2::zeros((0, 0))));
    }
    // Row-major storage of a symmetric matrix is also its column-major storage.
    let mut buf: Vec<f64> = a.iter().copied().collect();
    let mut w = vec![0.0; n];
    let nn = n as i32;
    let jobz = b'V' as c_char;
    let uplo = b'U' as c_char; // column-major "U" == row-major lower triangle
    let mut info = 0i32;
    let mut work_q = [0.0f64];
    let mut iwork_q = [0i32];
    unsafe {
        lapack_sys::dsyevd_(
            &jobz, &uplo, &nn, buf.as_mut_ptr(), &nn, w.as_mut_ptr(),
            work_q.as_mut_ptr(), &-1, iwork_q.as_mut_ptr(), &-1, &mut info,
        );
    }
    if info != 0 {
        return Err(BenchError::Eigensolve(info));
    }
    let lwork = work_q[0] as i32;
    let liwork = iwork_q[0];
    let mut work = vec![0.0f64; lwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    unsafe {
        lapack_sys::dsyevd_(
            &jobz, &uplo, &nn, buf.as_mut_ptr(), &nn, w.as_mut_ptr(),
            work.as_mut_ptr(), &lwork, iwork.as_mut_ptr(), &liwork, &mut info,
        );
    }
    if info != 0 {
        return Err(BenchError::Eigensolve(info));
    }
    // Column-major V read as row-major is Vᵀ.
    let vt = Array2::from_shape_vec((n, n), buf).expect("square buffer");
    let v = vt.reversed_axes().as_standard_layout().into_owned();
    Ok((Array1::from(w), v))
}

/// Solves `a x = b` for symmetric positive definite `a` (Cholesky).
pub fn spd_solve(a: ArrayView2<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(BenchError::ShapeMismatch { expected: n, got: b.len() });
    }
    let mut buf: Vec<f64> = a.iter().copied().collect();
    let mut x = b.to_vec();
    let nn = n as i32;
    let one = 1i32;
    let uplo = b'U' as c_char;
    let mut info = 0i32;
    unsafe {
        lapack_sys::dposv_(&uplo, &nn, &one, buf.as_mut_ptr(), &nn, x.as_mut_ptr(), &nn, &mut info);
    }
    if info != 0 {
        return Err(BenchError::LinearSolve(format!("dposv info = {info}")));
    }
    Ok(x)
}
