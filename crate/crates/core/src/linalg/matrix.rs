use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Dense complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

// below this size the naive triple loop beats the faer dispatch overhead
const NAIVE_MATMUL_MAX: usize = 24;

impl CMatrix {
    /// Builds a matrix from row-major entries, rejecting wrong lengths and
    /// non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("empty matrix {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{} entries for a {rows}x{cols} matrix", data.len())));
        }
        if let Some(k) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite { row: k / cols, col: k % cols });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &z) in diag.iter().enumerate() {
            m[(i, i)] = z;
        }
        m
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        Self::from_diag(&diag.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>())
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(r, c, rows.iter().flatten().copied().collect())
    }

    /// Matrix with i.i.d. standard complex Gaussian entries (real and imaginary
    /// parts each of variance 1/2).
    pub fn random_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self::from_fn(rows, cols, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(s * re, s * im)
        })
    }

    /// Haar-random unitary from the QR decomposition of a Gaussian matrix.
    pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let g = Self::random_gaussian(n, n, rng);
        let qr = g.to_faer().qr();
        let q = Self::from_faer(qr.compute_Q().as_ref());
        let r = Self::from_faer(qr.R().as_ref());
        // fix the column phases so the distribution is exactly Haar
        Self::from_fn(n, n, |i, j| {
            let d = r[(j, j)];
            let ph = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
            q[(i, j)] * ph
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn conj(&self) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Frobenius distance relative to the norm of `other` (absolute when it vanishes).
    pub fn rel_diff(&self, other: &Self) -> f64 {
        let d = (self - other).frobenius_norm();
        let n = other.frobenius_norm();
        if n > 0.0 {
            d / n
        } else {
            d
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul inner dimensions");
        let (m, k, n) = (self.rows, self.cols, other.cols);
        if m.max(k).max(n) <= NAIVE_MATMUL_MAX {
            let mut out = Self::zeros(m, n);
            for i in 0..m {
                for p in 0..k {
                    let a = self.data[i * k + p];
                    if a == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let orow = &mut out.data[i * n..(i + 1) * n];
                    for (o, b) in orow.iter_mut().zip(&other.data[p * n..(p + 1) * n]) {
                        *o += a * b;
                    }
                }
            }
            out
        } else {
            let prod = self.to_faer() * other.to_faer();
            Self::from_faer(prod.as_ref())
        }
    }

    pub fn matvec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows).map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    /// Row vector times matrix, `vᵀ·M` (no conjugation).
    pub fn vecmat(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.rows, v.len());
        let mut out = vec![C64::new(0.0, 0.0); self.cols];
        for (i, vi) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += vi * a;
            }
        }
        out
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let (r2, c2) = (other.rows, other.cols);
        Self::from_fn(self.rows * r2, self.cols * c2, |i, j| self[(i / r2, j / c2)] * other[(i % r2, j % c2)])
    }

    /// `k`-fold Kronecker power; `k = 0` gives the 1x1 identity.
    pub fn kron_power(&self, k: usize) -> Self {
        let mut out = Self::identity(1);
        for _ in 0..k {
            out = out.kron(self);
        }
        out
    }

    /// Largest entry of `|U·U† − 1|`.
    pub fn unitarity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        self.matmul(&self.adjoint()).max_abs_diff(&Self::identity(self.rows))
    }

    pub fn hermiticity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        self.max_abs_diff(&self.adjoint())
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &self.matmul(other) - &other.matmul(self)
    }

    /// `selfᵏ` by binary exponentiation; `k = 0` is the identity.
    pub fn pow(&self, k: u64) -> Self {
        matrix_power(self, k)
    }

    pub fn to_faer(&self) -> faer::Mat<C64> {
        faer::Mat::from_fn(self.rows, self.cols, |i, j| self.data[i * self.cols + j])
    }

    pub fn from_faer(m: faer::MatRef<'_, C64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

/// `mᵏ` by exponentiation-by-squaring.
pub fn matrix_power(m: &CMatrix, k: u64) -> CMatrix {
    assert!(m.is_square(), "matrix_power of a non-square matrix");
    let mut result: Option<CMatrix> = None;
    let mut base = m.clone();
    let mut e = k;
    while e > 0 {
        if e & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => r.matmul(&base),
            });
        }
        e >>= 1;
        if e > 0 {
            base = base.matmul(&base);
        }
    }
    result.unwrap_or_else(|| CMatrix::identity(m.rows()))
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(i) {
                write!(f, "{:>10.6}{:+.6}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(CMatrix::new(2, 2, vec![c(1.0); 3]).is_err());
        let e = CMatrix::new(1, 2, vec![c(1.0), C64::new(f64::NAN, 0.0)]).unwrap_err();
        assert_eq!(e, Error::NonFinite { row: 0, col: 1 });
    }

    #[test]
    fn power_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = CMatrix::random_gaussian(5, 5, &mut rng);
        assert_eq!(matrix_power(&m, 0), CMatrix::identity(5));
    }

    #[test]
    fn diagonal_power() {
        let m = CMatrix::from_real_diag(&[0.5, 2.0]);
        let p = matrix_power(&m, 3);
        assert!(p.max_abs_diff(&CMatrix::from_real_diag(&[0.125, 8.0])) < 1e-15);
    }

    #[test]
    fn power_matches_repeated_multiplication() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = CMatrix::random_gaussian(8, 8, &mut rng).scale_real(0.3);
        let mut naive = CMatrix::identity(8);
        for _ in 0..13 {
            naive = naive.matmul(&m);
        }
        assert!(matrix_power(&m, 13).rel_diff(&naive) < 1e-12);
    }

    #[test]
    fn faer_and_naive_products_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = CMatrix::random_gaussian(40, 30, &mut rng);
        let b = CMatrix::random_gaussian(30, 50, &mut rng);
        let fast = a.matmul(&b);
        let slow = CMatrix::from_fn(40, 50, |i, j| (0..30).map(|k| a[(i, k)] * b[(k, j)]).sum());
        assert!(fast.max_abs_diff(&slow) < 1e-12);
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = CMatrix::random_unitary(6, &mut rng);
        assert!(u.unitarity_defect() < 1e-13);
    }

    #[test]
    fn kron_shape_and_entries() {
        let a = CMatrix::from_real_diag(&[1.0, 2.0]);
        let b = CMatrix::from_rows(&[vec![c(0.0), c(1.0)], vec![c(1.0), c(0.0)]]).unwrap();
        let k = a.kron(&b);
        assert_eq!((k.rows(), k.cols()), (4, 4));
        assert_eq!(k[(2, 3)], c(2.0));
        assert_eq!(k[(0, 1)], c(1.0));
        assert_eq!(k[(0, 3)], c(0.0));
    }
}
