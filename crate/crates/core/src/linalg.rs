//! Small dense linear algebra for the evaluation engine.
//!
//! Vectors are plain `[f64]` slices. Square matrices use [`Matrix`], stored
//! row-major. Everything here is sized by the feature dimension (tens of
//! entries), so the routines are straightforward loops with no blocking.

use crate::error::{Error, Result};

/// Relative threshold below which a pivot or a rank-one denominator is
/// treated as zero.
pub const SINGULAR_TOL: f64 = 1e-12;

/// A dense square matrix in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, scale: f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = scale;
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Self {
        let mut m = Self::zeros(entries.len());
        for (i, &e) in entries.iter().enumerate() {
            m.set(i, i, e);
        }
        m
    }

    /// Builds a matrix from rows. Panics if the rows do not form a square.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            assert_eq!(row.len(), n, "matrix rows must form a square");
            data.extend_from_slice(row);
        }
        Matrix { n, data }
    }

    /// Builds a matrix from a row-major buffer of length `n * n`.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, actual: data.len() });
        }
        Ok(Matrix { n, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        norm_inf(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `self · x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n);
        (0..self.n).map(|i| dot(self.row(i), x)).collect()
    }

    /// `xᵀ · self`
    pub fn vec_mul(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n);
        let mut out = vec![0.0; self.n];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, self.row(i), &mut out);
            }
        }
        out
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// `self += scale · u vᵀ`
    pub fn add_outer(&mut self, scale: f64, u: &[f64], v: &[f64]) {
        let n = self.n;
        for (i, &ui) in u.iter().enumerate() {
            let s = scale * ui;
            if s == 0.0 {
                continue;
            }
            axpy(s, v, &mut self.data[i * n..(i + 1) * n]);
        }
    }

    pub fn add_scaled_identity(&mut self, scale: f64) {
        for i in 0..self.n {
            self.data[i * self.n + i] += scale;
        }
    }

    /// Extracts the square sub-matrix on `indices × indices`.
    pub fn submatrix(&self, indices: &[usize]) -> Matrix {
        let k = indices.len();
        let mut out = Matrix::zeros(k);
        for (a, &i) in indices.iter().enumerate() {
            for (b, &j) in indices.iter().enumerate() {
                out.set(a, b, self.get(i, j));
            }
        }
        out
    }

    /// Max-norm distance from the identity.
    pub fn identity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((self.get(i, j) - target).abs());
            }
        }
        worst
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += a · x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Smallest index attaining `max |x_i|`. Returns 0 for an all-zero vector.
pub fn argmax_abs(x: &[f64]) -> usize {
    assert!(!x.is_empty(), "argmax_abs of an empty vector");
    let mut best = 0;
    let mut best_abs = x[0].abs();
    for (i, v) in x.iter().enumerate().skip(1) {
        if v.abs() > best_abs {
            best = i;
            best_abs = v.abs();
        }
    }
    best
}

/// Returns `(A + u vᵀ)⁻¹` given `a_inv = A⁻¹`.
pub fn sherman_morrison(a_inv: &Matrix, u: &[f64], v: &[f64]) -> Result<Matrix> {
    let mut out = a_inv.clone();
    sherman_morrison_in_place(&mut out, u, v)?;
    Ok(out)
}

/// In-place form of [`sherman_morrison`]. On error `a_inv` is left untouched.
///
/// Returns the number of scalar multiply-adds performed.
pub fn sherman_morrison_in_place(a_inv: &mut Matrix, u: &[f64], v: &[f64]) -> Result<u64> {
    let n = a_inv.dim();
    if u.len() != n || v.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: u.len().min(v.len()) });
    }
    let inv_u = a_inv.mul_vec(u);
    let v_inv = a_inv.vec_mul(v);
    let quad = dot(v, &inv_u);
    let denom = 1.0 + quad;
    if !denom.is_finite() || denom.abs() <= SINGULAR_TOL * (1.0 + quad.abs()) {
        return Err(Error::SingularUpdate { denominator: denom });
    }
    a_inv.add_outer(-1.0 / denom, &inv_u, &v_inv);
    let n = n as u64;
    Ok(3 * n * n + n)
}

/// LU factorization with partial pivoting of a square matrix.
#[derive(Clone, Debug)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
    macs: u64,
}

impl Lu {
    pub fn factor(a: &Matrix) -> Result<Lu> {
        let n = a.dim();
        let scale = a.max_abs();
        let tol = SINGULAR_TOL * if scale > 0.0 { scale } else { 1.0 };
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut macs = 0u64;
        for col in 0..n {
            let pivot_row =
                (col..n).max_by(|&i, &j| lu.get(i, col).abs().total_cmp(&lu.get(j, col).abs())).unwrap_or(col);
            let pivot = lu.get(pivot_row, col);
            if !pivot.is_finite() || pivot.abs() <= tol {
                return Err(Error::SingularSystem { pivot: pivot.abs(), index: col });
            }
            if pivot_row != col {
                for j in 0..n {
                    let tmp = lu.get(col, j);
                    lu.set(col, j, lu.get(pivot_row, j));
                    lu.set(pivot_row, j, tmp);
                }
                perm.swap(col, pivot_row);
            }
            for i in col + 1..n {
                let factor = lu.get(i, col) / pivot;
                lu.set(i, col, factor);
                if factor == 0.0 {
                    continue;
                }
                for j in col + 1..n {
                    let updated = lu.get(i, j) - factor * lu.get(col, j);
                    lu.set(i, j, updated);
                }
                macs += (n - col) as u64;
            }
        }
        Ok(Lu { lu, perm, macs })
    }

    /// Multiply-adds spent in the factorization.
    pub fn macs(&self) -> u64 {
        self.macs
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.lu.dim();
        assert_eq!(rhs.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s = dot(&row[..i], &x[..i]);
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s = dot(&row[i + 1..], &x[i + 1..]);
            x[i] = (x[i] - s) / row[i];
        }
        x
    }

    /// Multiply-adds spent by one call to [`Lu::solve`].
    pub fn solve_macs(&self) -> u64 {
        let n = self.lu.dim() as u64;
        n * n
    }

    pub fn inverse(&self) -> Matrix {
        let n = self.lu.dim();
        let mut inv = Matrix::zeros(n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for (i, v) in col.into_iter().enumerate() {
                inv.set(i, j, v);
            }
        }
        inv
    }
}

/// Direct dense solve of a small system `a · x = rhs`.
///
/// Uses LU with partial pivoting, so it also handles the non-symmetric
/// blocks that arise under the fixed-point gradient.
pub fn solve_spd(a: &Matrix, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != a.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), actual: rhs.len() });
    }
    Ok(Lu::factor(a)?.solve(rhs))
}

pub fn invert(a: &Matrix) -> Result<Matrix> {
    Ok(Lu::factor(a)?.inverse())
}
