//! Small dense linear algebra: row-major matrices, SPD and general solves,
//! and a one-sided Jacobi SVD.
//!
//! Matrices here are at most a few hundred entries on a side, so the
//! routines favour accuracy and determinism over blocking or SIMD.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Builds a matrix from row vectors. All rows must have equal length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::DimensionMismatch {
                    what: "matrix row",
                    expected: c,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: r,
            cols: c,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                what: "matrix-vector product",
                expected: self.cols,
                found: x.len(),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                what: "matrix product",
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let (r2, c2) = (other.rows, other.cols);
        Self::from_fn(self.rows * r2, self.cols * c2, |i, j| {
            self[(i / r2, j / c2)] * other[(i % r2, j % c2)]
        })
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(
            T::zero(),
            |acc, &x| if x.abs() > acc { x.abs() } else { acc },
        )
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[inline]
pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Cholesky factorisation with a relative pivot test. Returns `None` when a
/// pivot falls below `rank_tol * max_diag`.
fn cholesky<T: Real>(a: &Matrix<T>) -> Option<Matrix<T>> {
    let n = a.rows();
    let max_diag = (0..n).map(|i| a[(i, i)]).fold(T::zero(), T::max);
    let floor = T::rank_tol() * max_diag;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) || d <= T::zero() {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

fn cholesky_solve<T: Real>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    let mut z = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            let v = l[(i, k)] * z[k];
            z[i] -= v;
        }
        z[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let v = l[(k, i)] * z[k];
            z[i] -= v;
        }
        z[i] /= l[(i, i)];
    }
    z
}

/// Outcome of solving a symmetric positive semi-definite system.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdSolution<T> {
    pub x: Vec<T>,
    /// Set when the system was rank deficient and ridge jitter was applied.
    pub degenerate: bool,
}

/// Relative ridge jitter added to a rank-deficient Gram matrix.
pub const RIDGE_JITTER: f64 = 1e-10;

/// Solves `gram · x = rhs` for a symmetric PSD `gram`.
///
/// A rank-deficient system is regularised by adding `1e-10 · trace` to the
/// diagonal and flagged. An all-zero system yields `x = 0`, also flagged.
pub fn solve_spd<T: Real>(gram: &Matrix<T>, rhs: &[T]) -> Result<SpdSolution<T>> {
    let n = gram.rows();
    if gram.cols() != n || rhs.len() != n {
        return Err(Error::DimensionMismatch {
            what: "normal equations",
            expected: n,
            found: rhs.len(),
        });
    }
    if let Some(l) = cholesky(gram) {
        return Ok(SpdSolution {
            x: cholesky_solve(&l, rhs),
            degenerate: false,
        });
    }
    let trace = gram.trace();
    if !(trace > T::zero()) {
        return Ok(SpdSolution {
            x: vec![T::zero(); n],
            degenerate: true,
        });
    }
    let mut jittered = gram.clone();
    let jitter = T::lit(RIDGE_JITTER) * trace;
    for i in 0..n {
        jittered[(i, i)] += jitter;
    }
    let x = match cholesky(&jittered) {
        Some(l) => cholesky_solve(&l, rhs),
        None => solve(&jittered, rhs)?,
    };
    Ok(SpdSolution {
        x,
        degenerate: true,
    })
}

/// LU decomposition with partial pivoting, stored compactly.
struct Lu<T> {
    lu: Matrix<T>,
    perm: Vec<usize>,
    sign: T,
    singular: bool,
}

fn lu<T: Real>(a: &Matrix<T>) -> Lu<T> {
    let n = a.rows();
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = T::one();
    let scale = a.max_abs();
    let tiny = T::epsilon() * T::from_usize_lossy(n.max(1)) * scale;
    let mut singular = scale == T::zero();
    for k in 0..n {
        let mut p = k;
        for i in k + 1..n {
            if lu[(i, k)].abs() > lu[(p, k)].abs() {
                p = i;
            }
        }
        if lu[(p, k)].abs() <= tiny {
            singular = true;
            continue;
        }
        if p != k {
            for j in 0..n {
                let t = lu[(k, j)];
                lu[(k, j)] = lu[(p, j)];
                lu[(p, j)] = t;
            }
            perm.swap(k, p);
            sign = -sign;
        }
        let pivot = lu[(k, k)];
        for i in k + 1..n {
            let f = lu[(i, k)] / pivot;
            lu[(i, k)] = f;
            for j in k + 1..n {
                let v = f * lu[(k, j)];
                lu[(i, j)] -= v;
            }
        }
    }
    Lu {
        lu,
        perm,
        sign,
        singular,
    }
}

/// Solves a square general system with partial pivoting.
pub fn solve<T: Real>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(Error::DimensionMismatch {
            what: "linear system",
            expected: n,
            found: b.len(),
        });
    }
    let f = lu(a);
    if f.singular {
        return Err(Error::Singular);
    }
    let mut x: Vec<T> = f.perm.iter().map(|&p| b[p]).collect();
    for i in 0..n {
        for k in 0..i {
            let v = f.lu[(i, k)] * x[k];
            x[i] -= v;
        }
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let v = f.lu[(i, k)] * x[k];
            x[i] -= v;
        }
        x[i] /= f.lu[(i, i)];
    }
    Ok(x)
}

/// Determinant of a square matrix.
pub fn determinant<T: Real>(a: &Matrix<T>) -> T {
    assert_eq!(a.rows(), a.cols(), "determinant of a non-square matrix");
    let f = lu(a);
    let mut d = f.sign;
    for i in 0..a.rows() {
        d *= f.lu[(i, i)];
    }
    d
}

/// Thin singular value decomposition `A = U · diag(s) · Vᵀ`.
///
/// `s` is sorted in descending order and has `k = min(rows, cols)` entries;
/// `u` is `rows × k` and `v` is `cols × k`. Columns of `u` belonging to a
/// zero singular value are left as zero vectors.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub u: Matrix<T>,
    pub s: Vec<T>,
    pub v: Matrix<T>,
}

const MAX_SWEEPS: usize = 80;

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd<T: Real>(a: &Matrix<T>) -> Svd<T> {
    if a.rows() < a.cols() {
        let t = svd(&a.transpose());
        return Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        };
    }
    let (m, n) = (a.rows(), a.cols());
    let mut w = a.clone();
    let mut v = Matrix::<T>::identity(n);
    let eps = T::epsilon();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let mut alpha = T::zero();
                let mut beta = T::zero();
                let mut gamma = T::zero();
                for i in 0..m {
                    let (x, y) = (w[(i, p)], w[(i, q)]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (gamma + gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (w[(i, p)], w[(i, q)]);
                    w[(i, p)] = c * x - s * y;
                    w[(i, q)] = s * x + c * y;
                }
                for i in 0..n {
                    let (x, y) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * x - s * y;
                    v[(i, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma: Vec<T> = (0..n).map(|j| norm(&w.column(j))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        sigma[j]
            .partial_cmp(&sigma[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut u = Matrix::zeros(m, n);
    let mut vs = Matrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        let sj = sigma[j];
        s.push(sj);
        if sj > T::zero() {
            for i in 0..m {
                u[(i, k)] = w[(i, j)] / sj;
            }
        }
        for i in 0..n {
            vs[(i, k)] = v[(i, j)];
        }
    }
    Svd { u, s, v: vs }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn svd_reconstructs() {
        let a = m(&[
            &[3.0, 1.0, 0.5],
            &[1.0, 2.0, -1.0],
            &[0.0, 4.0, 1.5],
            &[2.0, 0.0, 1.0],
        ]);
        let d = svd(&a);
        for i in 0..4 {
            for j in 0..3 {
                let r: f64 = (0..3).map(|k| d.u[(i, k)] * d.s[k] * d.v[(j, k)]).sum();
                assert!((r - a[(i, j)]).abs() < 1e-12);
            }
        }
        assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn svd_wide_matrix() {
        let a = m(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let d = svd(&a);
        assert_eq!(d.s.len(), 2);
        assert_eq!(d.v.rows(), 3);
        for i in 0..2 {
            for j in 0..3 {
                let r: f64 = (0..2).map(|k| d.u[(i, k)] * d.s[k] * d.v[(j, k)]).sum();
                assert!((r - a[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spd_jitter_on_singular_gram() {
        let g = m(&[&[2.0, 2.0], &[2.0, 2.0]]);
        let sol = solve_spd(&g, &[2.0, 2.0]).unwrap();
        assert!(sol.degenerate);
        // The null direction is resolved only to about eps / jitter.
        assert!((sol.x[0] - 0.5).abs() < 1e-5 && (sol.x[1] - 0.5).abs() < 1e-5);
        let zero = Matrix::<f64>::zeros(2, 2);
        let sol = solve_spd(&zero, &[0.0, 0.0]).unwrap();
        assert!(sol.degenerate);
        assert_eq!(sol.x, vec![0.0, 0.0]);
    }

    #[test]
    fn lu_solve_and_det() {
        let a = m(&[&[0.0, 2.0], &[3.0, 1.0]]);
        let x = solve(&a, &[4.0, 5.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
        assert!((determinant(&a) + 6.0).abs() < 1e-14);
        assert!(matches!(
            solve(&m(&[&[1.0, 2.0], &[2.0, 4.0]]), &[1.0, 1.0]),
            Err(Error::Singular)
        ));
    }
}
