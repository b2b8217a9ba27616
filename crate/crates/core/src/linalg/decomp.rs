//! Dense decompositions backed by faer: general complex eigensystems,
//! Hermitian eigensystems, SVD, and exponentials of Hermitian generators.

use faer::prelude::Solve;
use faer::Side;
use num_complex::Complex64 as C64;

use super::CMatrix;
use crate::error::{Error, Result};

/// All eigenvalues and right eigenvectors (unit 2-norm columns) of a square matrix.
pub fn eig_dense(m: &CMatrix) -> Result<(Vec<C64>, CMatrix)> {
    if !m.is_square() {
        return Err(Error::Shape("eigendecomposition of a non-square matrix".into()));
    }
    let evd = m.to_faer().eigen().map_err(|e| Error::NonConvergence(format!("dense eigensolver: {e:?}")))?;
    let s = evd.S();
    let values: Vec<C64> = (0..m.rows()).map(|i| s.column_vector()[i]).collect();
    let mut vectors = CMatrix::from_faer(evd.U());
    for j in 0..m.cols() {
        let norm = (0..m.rows()).map(|i| vectors[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            for i in 0..m.rows() {
                vectors[(i, j)] /= norm;
            }
        }
    }
    Ok((values, vectors))
}

pub fn eigenvalues(m: &CMatrix) -> Result<Vec<C64>> {
    if !m.is_square() {
        return Err(Error::Shape("eigenvalues of a non-square matrix".into()));
    }
    m.to_faer().eigenvalues().map_err(|e| Error::NonConvergence(format!("dense eigensolver: {e:?}")))
}

/// Eigenvalues in ascending order and the matching orthonormal eigenvectors
/// (as columns) of a Hermitian matrix.
pub fn eigh(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    if !m.is_square() {
        return Err(Error::Shape("Hermitian eigensystem of a non-square matrix".into()));
    }
    let evd = m
        .to_faer()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::NonConvergence(format!("Hermitian eigensolver: {e:?}")))?;
    let s = evd.S();
    let values = (0..m.rows()).map(|i| s.column_vector()[i].re).collect();
    Ok((values, CMatrix::from_faer(evd.U())))
}

/// Thin singular value decomposition `m = u · diag(s) · vh`, singular values
/// in non-increasing order.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: CMatrix,
    pub s: Vec<f64>,
    pub vh: CMatrix,
}

pub fn svd(m: &CMatrix) -> Result<Svd> {
    let f = m.to_faer();
    let dec = f.thin_svd().map_err(|e| Error::NonConvergence(format!("SVD: {e:?}")))?;
    let k = m.rows().min(m.cols());
    let s = (0..k).map(|i| dec.S().column_vector()[i].re).collect();
    Ok(Svd { u: CMatrix::from_faer(dec.U()), s, vh: CMatrix::from_faer(dec.V()).adjoint() })
}

/// `exp(c·h)` for Hermitian `h` and any complex scalar `c`.
pub fn exp_hermitian(h: &CMatrix, c: C64) -> Result<CMatrix> {
    let (mu, v) = eigh(h)?;
    let n = h.rows();
    let phases: Vec<C64> = mu.iter().map(|&x| (c * x).exp()).collect();
    let scaled = CMatrix::from_fn(n, n, |i, j| v[(i, j)] * phases[j]);
    Ok(scaled.matmul(&v.adjoint()))
}

/// `exp(x)` for anti-Hermitian `x` (the result is unitary).
pub fn exp_anti_hermitian(x: &CMatrix) -> Result<CMatrix> {
    // x = -i h with h = i x Hermitian
    let h = x.scale(C64::new(0.0, 1.0));
    exp_hermitian(&h, C64::new(0.0, -1.0))
}

/// Solves `a · x = b` by partially pivoted LU.
pub fn solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if !a.is_square() || a.rows() != b.rows() {
        return Err(Error::Shape("solve: incompatible shapes".into()));
    }
    let lu = a.to_faer().partial_piv_lu();
    let x = lu.solve(b.to_faer());
    CMatrix::new(x.nrows(), x.ncols(), CMatrix::from_faer(x.as_ref()).into_data())
        .map_err(|_| Error::NonConvergence("singular linear system".into()))
}

pub fn inverse(a: &CMatrix) -> Result<CMatrix> {
    solve(a, &CMatrix::identity(a.rows()))
}

/// Orthonormal basis (columns) for the null space of `m`, using singular
/// values below `tol · s_max`.
pub fn null_space(m: &CMatrix, tol: f64) -> Result<CMatrix> {
    let f = m.to_faer();
    let dec = f.svd().map_err(|e| Error::NonConvergence(format!("SVD: {e:?}")))?;
    let n = m.cols();
    let k = m.rows().min(n);
    let s: Vec<f64> = (0..k).map(|i| dec.S().column_vector()[i].re).collect();
    let smax = s.first().copied().unwrap_or(0.0);
    let rank = s.iter().filter(|&&x| x > tol * smax.max(f64::MIN_POSITIVE)).count();
    let v = CMatrix::from_faer(dec.V());
    if rank == n {
        return Err(Error::Shape("null space is trivial".into()));
    }
    Ok(CMatrix::from_fn(n, n - rank, |i, j| v[(i, rank + j)]))
}
