//! Dense row-major matrices and the counted numeric kernels.
//!
//! The five kernels (`mat_mul`, `mat_add`, `mat_sub`, `mat_scale`,
//! `mat_inverse`) charge a `CostLedger` according to fixed shape-only
//! conventions, so operation counts are exact and platform independent.
//! Transposition and block stacking are data movement and cost nothing.
//!
//! ```
//! use ivla_core::{CostLedger, Mat, mat_mul};
//!
//! let a = Mat::identity(2);
//! let mut ledger = CostLedger::new();
//! let p = mat_mul(&a, &a, &mut ledger).unwrap();
//! assert_eq!(p, a);
//! assert_eq!(ledger.mul_adds(), 8); // 2*2*2 fused multiply-adds
//! ```

use crate::error::{Error, Result};
use crate::ledger::CostLedger;
use crate::scalar::{cast, Scalar};

/// Relative pivot threshold: a pivot counts as zero when its magnitude is
/// at most `1e-12 * max_abs_entry(input)`.
pub const PIVOT_RELATIVE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    /// Builds a matrix from row-major data. Fails on length mismatch or
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::data(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        let m = Matrix { rows, cols, data };
        if !m.is_finite() {
            return Err(Error::NonFinite { op: "new" });
        }
        Ok(m)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        if rows.iter().any(|x| x.len() != c) {
            return Err(Error::data("ragged row lengths".to_string()));
        }
        Matrix::new(r, c, rows.into_iter().flatten().collect())
    }

    /// Column vector from a slice.
    pub fn col_vec(entries: &[T]) -> Self {
        Matrix {
            rows: entries.len(),
            cols: 1,
            data: entries.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Transpose. Pure data movement, never charged.
    pub fn t(&self) -> Self {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Horizontal concatenation of column blocks. Free (data movement).
    pub fn hstack(blocks: &[&Matrix<T>]) -> Result<Self> {
        let rows = blocks.first().map_or(0, |b| b.rows);
        if blocks.iter().any(|b| b.rows != rows) {
            return Err(Error::data("hstack: blocks disagree on row count".to_string()));
        }
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut at = 0;
        for b in blocks {
            for i in 0..rows {
                for j in 0..b.cols {
                    out.data[i * cols + at + j] = b.data[i * b.cols + j];
                }
            }
            at += b.cols;
        }
        Ok(out)
    }

    /// The j-th column as an n x 1 matrix. Free.
    pub fn column(&self, j: usize) -> Self {
        Matrix::from_fn(self.rows, 1, |i, _| self.get(i, j))
    }

    pub fn frobenius(&self) -> f64 {
        self.data
            .iter()
            .map(|x| {
                let v = x.to_f64().unwrap_or(f64::NAN);
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data
            .iter()
            .map(|x| x.to_f64().unwrap_or(f64::NAN).abs())
            .fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| f(*x)).collect(),
        }
    }
}

/// Largest entry-wise absolute difference.
pub fn max_abs_diff<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "max_abs_diff: shape mismatch");
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x.to_f64().unwrap() - y.to_f64().unwrap()).abs())
        .fold(0.0, f64::max)
}

/// Frobenius distance relative to `max(1, ||reference||_F)`. The floor keeps
/// the measure meaningful when reference values are tiny.
pub fn rel_frobenius<T: Scalar>(x: &Matrix<T>, reference: &Matrix<T>) -> f64 {
    assert_eq!(x.shape(), reference.shape(), "rel_frobenius: shape mismatch");
    let mut diff = 0.0f64;
    for (a, b) in x.data.iter().zip(&reference.data) {
        let d = a.to_f64().unwrap() - b.to_f64().unwrap();
        diff += d * d;
    }
    diff.sqrt() / reference.frobenius().max(1.0)
}

fn check_finite<T: Scalar>(m: Matrix<T>, op: &'static str) -> Result<Matrix<T>> {
    if m.is_finite() {
        Ok(m)
    } else {
        Err(Error::NonFinite { op })
    }
}

/// Matrix product; charges `a.rows * a.cols * b.cols` mul_adds.
pub fn mat_mul<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, ledger: &mut CostLedger) -> Result<Matrix<T>> {
    if a.cols != b.rows {
        return Err(Error::ShapeMismatch {
            op: "mat_mul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    ledger.charge_single_mul((a.rows * a.cols * b.cols) as u64);
    let mut out = Matrix::zeros(a.rows, b.cols);
    // i-k-j order keeps both operands in row-major streaming access.
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            if aik == T::zero() {
                continue;
            }
            let brow = &b.data[k * b.cols..(k + 1) * b.cols];
            let crow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for j in 0..b.cols {
                crow[j] += aik * brow[j];
            }
        }
    }
    check_finite(out, "mat_mul")
}

pub fn mat_add<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, ledger: &mut CostLedger) -> Result<Matrix<T>> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "mat_add",
            left: a.shape(),
            right: b.shape(),
        });
    }
    ledger.charge_adds((a.rows * a.cols) as u64);
    let data = a.data.iter().zip(&b.data).map(|(x, y)| *x + *y).collect();
    check_finite(
        Matrix {
            rows: a.rows,
            cols: a.cols,
            data,
        },
        "mat_add",
    )
}

pub fn mat_sub<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, ledger: &mut CostLedger) -> Result<Matrix<T>> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "mat_sub",
            left: a.shape(),
            right: b.shape(),
        });
    }
    ledger.charge_adds((a.rows * a.cols) as u64);
    let data = a.data.iter().zip(&b.data).map(|(x, y)| *x - *y).collect();
    check_finite(
        Matrix {
            rows: a.rows,
            cols: a.cols,
            data,
        },
        "mat_sub",
    )
}

/// Scalar multiple; charges one mul_add per entry.
pub fn mat_scale<T: Scalar>(c: T, a: &Matrix<T>, ledger: &mut CostLedger) -> Result<Matrix<T>> {
    ledger.charge_mul_adds((a.rows * a.cols) as u64);
    check_finite(a.map(|x| c * x), "mat_scale")
}

/// In-place `target += other`; charges one add per entry.
pub fn add_assign<T: Scalar>(target: &mut Matrix<T>, other: &Matrix<T>, ledger: &mut CostLedger) -> Result<()> {
    if target.shape() != other.shape() {
        return Err(Error::ShapeMismatch {
            op: "add_assign",
            left: target.shape(),
            right: other.shape(),
        });
    }
    ledger.charge_adds((target.rows * target.cols) as u64);
    for (x, y) in target.data.iter_mut().zip(&other.data) {
        *x += *y;
    }
    if target.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { op: "add_assign" })
    }
}

/// Inverse of a square matrix via LU decomposition with partial pivoting,
/// followed by forward/back substitution against the identity columns.
/// Charges exactly `n^3` mul_adds by convention.
///
/// A pivot with magnitude at most `1e-12 * max_abs_entry(a)` fails with
/// [`Error::Singular`] carrying the pivot column index.
pub fn mat_inverse<T: Scalar>(a: &Matrix<T>, ledger: &mut CostLedger) -> Result<Matrix<T>> {
    if a.rows != a.cols {
        return Err(Error::ShapeMismatch {
            op: "mat_inverse",
            left: a.shape(),
            right: a.shape(),
        });
    }
    let n = a.rows;
    ledger.charge_mul_adds((n * n * n) as u64);
    let eps = cast::<T>(PIVOT_RELATIVE_EPS * a.max_abs());

    // LU in place: lu holds L (unit diagonal, below) and U (on/above).
    let mut lu = a.data.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let mut p = k;
        let mut best = lu[k * n + k].abs();
        for i in (k + 1)..n {
            let v = lu[i * n + k].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best <= eps {
            return Err(Error::Singular { pivot: k });
        }
        if p != k {
            for j in 0..n {
                lu.swap(k * n + j, p * n + j);
            }
            perm.swap(k, p);
        }
        let pivot = lu[k * n + k];
        for i in (k + 1)..n {
            let factor = lu[i * n + k] / pivot;
            lu[i * n + k] = factor;
            for j in (k + 1)..n {
                let ukj = lu[k * n + j];
                lu[i * n + j] = lu[i * n + j] - factor * ukj;
            }
        }
    }

    // Solve A x = e_c for each unit column.
    let mut inv = Matrix::zeros(n, n);
    let mut y = vec![T::zero(); n];
    for c in 0..n {
        for i in 0..n {
            let mut s = if perm[i] == c { T::one() } else { T::zero() };
            for j in 0..i {
                s = s - lu[i * n + j] * y[j];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in (i + 1)..n {
                s = s - lu[i * n + j] * inv.data[j * n + c];
            }
            inv.data[i * n + c] = s / lu[i * n + i];
        }
    }
    check_finite(inv, "mat_inverse")
}
