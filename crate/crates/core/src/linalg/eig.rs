//! Leading eigenpairs of general (non-Hermitian) complex matrices.
//!
//! Matrices up to [`DENSE_CAP`] are handled by a full dense eigensolver;
//! larger ones go through two-sided power iteration with deflation. Left
//! eigenvectors are recovered by shifted inverse iteration on the transpose
//! and scaled so that `left · right = 1` (bilinear, no conjugation), which
//! makes `right ⊗ leftᵀ` the spectral projector of a simple eigenvalue.

use faer::prelude::Solve;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{decomp, CMatrix};
use crate::error::{Error, Result};

/// Largest dimension handled by the dense eigensolver.
pub const DENSE_CAP: usize = 4096;

/// Moduli closer than this (relative) count as ties in the ordering.
const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct EigenPair {
    pub value: C64,
    /// Left eigenvector `l` with `lᵀ·M = value·lᵀ`.
    pub left: Vec<C64>,
    /// Right eigenvector `r` with `M·r = value·r`, unit 2-norm.
    pub right: Vec<C64>,
}

impl EigenPair {
    /// `‖M·r − λ·r‖₂`.
    pub fn residual(&self, m: &CMatrix) -> f64 {
        let mr = m.matvec(&self.right);
        mr.iter().zip(&self.right).map(|(a, b)| (a - self.value * b).norm_sqr()).sum::<f64>().sqrt()
    }

    /// `lᵀ·r`, equal to one for a normalized pair.
    pub fn overlap(&self) -> C64 {
        dot(&self.left, &self.right)
    }

    /// The rank-one spectral projector `r ⊗ lᵀ`.
    pub fn projector(&self) -> CMatrix {
        let n = self.right.len();
        CMatrix::from_fn(n, n, |i, j| self.right[i] * self.left[j])
    }
}

/// Orders by descending modulus; equal moduli put the larger real part first.
pub fn compare_by_modulus(a: &C64, b: &C64) -> std::cmp::Ordering {
    let (ma, mb) = (a.norm(), b.norm());
    let scale = ma.max(mb).max(f64::MIN_POSITIVE);
    if (ma - mb).abs() <= TIE_TOL * scale {
        b.re.partial_cmp(&a.re).unwrap_or(std::cmp::Ordering::Equal)
    } else {
        mb.partial_cmp(&ma).unwrap_or(std::cmp::Ordering::Equal)
    }
}

/// The `how_many` eigenpairs of largest modulus, sorted by descending modulus.
pub fn eig_leading(m: &CMatrix, how_many: usize, tol: f64) -> Result<Vec<EigenPair>> {
    if !m.is_square() {
        return Err(Error::Shape("eig_leading of a non-square matrix".into()));
    }
    let n = m.rows();
    if how_many == 0 || how_many > n {
        return Err(Error::Shape(format!("how_many = {how_many} for dimension {n}")));
    }
    if n <= DENSE_CAP {
        return dense_leading(m, how_many);
    }
    power_iteration(m, how_many, tol, 20_000)
        .map_err(|e| Error::NonConvergence(format!("{e}; dense fallback unavailable for dimension {n} > {DENSE_CAP}")))
}

/// All eigenvalues sorted by descending modulus.
pub fn sorted_eigenvalues(m: &CMatrix) -> Result<Vec<C64>> {
    let mut vals = decomp::eigenvalues(m)?;
    vals.sort_by(compare_by_modulus);
    Ok(vals)
}

pub fn spectral_radius_dense(m: &CMatrix) -> Result<f64> {
    Ok(sorted_eigenvalues(m)?.first().map_or(0.0, |z| z.norm()))
}

fn dense_leading(m: &CMatrix, how_many: usize) -> Result<Vec<EigenPair>> {
    let (vals, vecs) = decomp::eig_dense(m)?;
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&i, &j| compare_by_modulus(&vals[i], &vals[j]));
    let scale = m.frobenius_norm().max(f64::MIN_POSITIVE);
    let mt = m.transpose();
    order
        .into_iter()
        .take(how_many)
        .map(|k| {
            let value = vals[k];
            let mut right = vecs.column(k);
            let mut pair = EigenPair { value, left: vec![], right: right.clone() };
            if pair.residual(m) > 1e-12 * scale {
                right = inverse_iteration(m, value, &right, scale)?;
                pair.right = right;
            }
            let left = inverse_iteration(&mt, value, &pair.right, scale)?;
            pair.left = left;
            normalize_pair(&mut pair);
            Ok(pair)
        })
        .collect()
}

/// Two steps of shifted inverse iteration for an eigenvector of `m` at `value`.
fn inverse_iteration(m: &CMatrix, value: C64, start: &[C64], scale: f64) -> Result<Vec<C64>> {
    let n = m.rows();
    let shift = value + C64::new(1e-10 * scale.max(value.norm()), 0.0);
    let shifted = CMatrix::from_fn(n, n, |i, j| if i == j { m[(i, j)] - shift } else { m[(i, j)] });
    let lu = shifted.to_faer().partial_piv_lu();
    // a fixed pseudo-random start avoids accidental orthogonality to the target
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x: Vec<C64> =
        start.iter().map(|z| z + C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 1e-3).collect();
    normalize(&mut x);
    for _ in 0..2 {
        let rhs = faer::Mat::from_fn(n, 1, |i, _| x[i]);
        let y = lu.solve(rhs);
        let mut next: Vec<C64> = (0..n).map(|i| y[(i, 0)]).collect();
        if next.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            // exactly singular shift: the start vector is already converged
            return Ok(x);
        }
        normalize(&mut next);
        x = next;
    }
    Ok(x)
}

fn normalize(v: &mut [C64]) {
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|z| *z /= n);
    }
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unit-norm right vector, left vector scaled to `lᵀr = 1` when the overlap
/// is not numerically zero (defective or degenerate directions).
fn normalize_pair(p: &mut EigenPair) {
    normalize(&mut p.right);
    let ov = dot(&p.left, &p.right);
    if ov.norm() > 1e-14 {
        p.left.iter_mut().for_each(|z| *z /= ov);
    }
}

/// Two-sided power iteration with deflation of already found pairs.
///
/// Converges when the leading eigenvalue of the deflated operator is strictly
/// dominant in modulus; ties of equal modulus stagnate and are reported as
/// [`Error::NonConvergence`].
pub fn power_iteration(m: &CMatrix, how_many: usize, tol: f64, max_iter: usize) -> Result<Vec<EigenPair>> {
    let n = m.rows();
    let scale = m.frobenius_norm().max(f64::MIN_POSITIVE);
    let tol = tol.max(1e-14);
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9);
    let mut found: Vec<EigenPair> = Vec::with_capacity(how_many);

    let apply = |found: &[EigenPair], v: &[C64], transpose: bool| -> Vec<C64> {
        let mut y = if transpose { m.vecmat(v) } else { m.matvec(v) };
        for p in found {
            // deflate λ r lᵀ (or its transpose)
            let (a, b) = if transpose { (&p.right, &p.left) } else { (&p.left, &p.right) };
            let c = p.value * dot(a, v);
            y.iter_mut().zip(b).for_each(|(yi, bi)| *yi -= c * bi);
        }
        y
    };

    for k in 0..how_many {
        let mut pair = None;
        for transpose in [false, true] {
            let mut v: Vec<C64> =
                (0..n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
            normalize(&mut v);
            let mut converged = None;
            for _ in 0..max_iter {
                let mut y = apply(&found, &v, transpose);
                let lambda: C64 = v.iter().zip(&y).map(|(a, b)| a.conj() * b).sum();
                let res = y.iter().zip(&v).map(|(a, b)| (a - lambda * b).norm_sqr()).sum::<f64>().sqrt();
                if res <= tol * scale {
                    converged = Some((lambda, v.clone()));
                    break;
                }
                normalize(&mut y);
                if y.iter().all(|z| z.norm() == 0.0) {
                    converged = Some((C64::new(0.0, 0.0), v.clone()));
                    break;
                }
                v = y;
            }
            let (lambda, vec) = converged
                .ok_or_else(|| Error::NonConvergence(format!("power iteration stagnated on eigenpair {k}")))?;
            match pair.as_mut() {
                None => pair = Some(EigenPair { value: lambda, left: vec![], right: vec }),
                Some(p) => {
                    if (p.value - lambda).norm() > 1e3 * tol * scale {
                        return Err(Error::NonConvergence(format!(
                            "left and right iterations disagree on eigenvalue {k}"
                        )));
                    }
                    p.left = vec;
                }
            }
        }
        let mut p = pair.expect("both sides iterated");
        normalize_pair(&mut p);
        found.push(p);
    }
    Ok(found)
}

/// Lower-bound estimate of the numerical radius `sup |⟨v|M|v⟩| / ⟨v|v⟩` by
/// fixed-point ascent from `restarts` random unit vectors.
pub fn numerical_radius(m: &CMatrix, restarts: usize, seed: u64) -> f64 {
    let n = m.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mh = m.adjoint();
    let quad = |v: &[C64]| -> C64 { v.iter().zip(m.matvec(v)).map(|(a, b)| a.conj() * b).sum() };
    let mut best: f64 = 0.0;
    // basis vectors are cheap extra starts and exact for diagonal matrices
    let mut starts: Vec<Vec<C64>> =
        (0..n).map(|i| (0..n).map(|j| C64::new(if i == j { 1.0 } else { 0.0 }, 0.0)).collect()).collect();
    for _ in 0..restarts.max(1) {
        let mut v: Vec<C64> = (0..n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        normalize(&mut v);
        starts.push(v);
    }
    for mut v in starts {
        let mut val = quad(&v).norm();
        for _ in 0..500 {
            // ascend along the top eigenvector of Re(e^{-iφ} M), φ = arg⟨v|M|v⟩
            let q = quad(&v);
            let ph = if q.norm() > 0.0 { q.conj() / q.norm() } else { C64::new(1.0, 0.0) };
            let a = m.matvec(&v);
            let b = mh.matvec(&v);
            let mut w: Vec<C64> =
                a.iter().zip(&b).zip(&v).map(|((x, y), z)| 0.5 * (ph * x + ph.conj() * y) + val * z).collect();
            normalize(&mut w);
            let next = quad(&w).norm();
            if next <= val + 1e-15 {
                break;
            }
            val = next;
            v = w;
        }
        best = best.max(val);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn identity_leading() {
        let p = eig_leading(&CMatrix::identity(3), 1, 1e-12).unwrap();
        assert!((p[0].value - c(1.0)).norm() < 1e-14);
        assert!((p[0].overlap() - c(1.0)).norm() < 1e-12);
    }

    #[test]
    fn diagonal_leading_two() {
        let m = CMatrix::from_real_diag(&[0.5, -0.9, 0.2]);
        let p = eig_leading(&m, 2, 1e-12).unwrap();
        assert!((p[0].value - c(-0.9)).norm() < 1e-14);
        assert!((p[1].value - c(0.5)).norm() < 1e-14);
    }

    #[test]
    fn ties_prefer_larger_real_part() {
        let m = CMatrix::from_real_diag(&[-1.0, 1.0, 0.3]);
        let p = eig_leading(&m, 2, 1e-12).unwrap();
        assert!((p[0].value - c(1.0)).norm() < 1e-14);
        assert!((p[1].value - c(-1.0)).norm() < 1e-14);
    }

    #[test]
    fn power_iteration_matches_dense_on_gapped_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 30;
        // similarity transform of a diagonal with well separated moduli
        let s = CMatrix::random_gaussian(n, n, &mut rng);
        let sinv = decomp::inverse(&s).unwrap();
        let diag: Vec<f64> = (0..n).map(|i| 0.9f64.powi(i as i32 * 3)).collect();
        let m = s.matmul(&CMatrix::from_real_diag(&diag)).matmul(&sinv);
        let pi = power_iteration(&m, 3, 1e-13, 50_000).unwrap();
        let dense = dense_leading(&m, 3).unwrap();
        for (a, b) in pi.iter().zip(&dense) {
            assert!((a.value - b.value).norm() < 1e-9, "{} vs {}", a.value, b.value);
            assert!((a.overlap() - c(1.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn power_iteration_stagnates_on_modulus_tie() {
        let m = CMatrix::from_diag(&[C64::new(0.0, 1.0), C64::new(0.0, -1.0), c(0.1)]);
        assert!(matches!(power_iteration(&m, 1, 1e-12, 500), Err(Error::NonConvergence(_))));
    }

    #[test]
    fn numerical_radius_examples() {
        assert!((numerical_radius(&CMatrix::identity(4), 4, 0) - 1.0).abs() < 1e-12);
        let m = CMatrix::from_real_diag(&[0.5, -0.5]);
        assert!((numerical_radius(&m, 8, 1) - 0.5).abs() < 1e-12);
    }
}
