//! Small dense linear algebra: LU factorisation with partial pivoting.
//!
//! The systems solved here are at most a handful of unknowns (the 5-level
//! rate matrix, the normal equations of a 5-parameter fit), so a plain
//! row-major `Vec` is all that is needed.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.n).map(|i| (0..self.n).map(|j| self[(i, j)] * x[j]).sum()).collect()
    }

    pub fn mul(&self, other: &Matrix<T>) -> Matrix<T> {
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                for j in 0..n {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> T {
        (0..self.n).map(|j| (0..self.n).map(|i| self[(i, j)].abs()).sum::<T>()).fold(T::zero(), T::max)
    }

    pub fn lu(&self) -> Result<Lu<T>> {
        Lu::factor(self.clone())
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

/// Packed LU factors with the row permutation applied during elimination.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: Matrix<T>,
    perm: Vec<usize>,
    norm_one: T,
}

impl<T: Real> Lu<T> {
    fn factor(mut a: Matrix<T>) -> Result<Self> {
        let n = a.n;
        let norm_one = a.norm_one();
        // A pivot below rounding level of its original column means the
        // column is numerically dependent on the ones already eliminated.
        let col_scale: Vec<T> = (0..n).map(|j| (0..n).map(|i| a[(i, j)].abs()).fold(T::zero(), T::max)).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pivot) =
                (k..n)
                    .map(|i| (i, a[(i, k)].abs()))
                    .fold((k, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pivot > col_scale[k] * T::epsilon()) {
                return Err(Error::Singular { column: k, pivot: pivot.to_f64_lossy() });
            }
            if p != k {
                for j in 0..n {
                    a.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let d = a[(k, k)];
            for i in k + 1..n {
                let f = a[(i, k)] / d;
                a[(i, k)] = f;
                if f != T::zero() {
                    for j in k + 1..n {
                        let v = a[(k, j)];
                        a[(i, j)] = a[(i, j)] - f * v;
                    }
                }
            }
        }
        Ok(Self { lu: a, perm, norm_one })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.n;
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] = x[i] - self.lu[(i, j)] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] = x[i] - self.lu[(i, j)] * x[j];
            }
            x[i] = x[i] / self.lu[(i, i)];
        }
        x
    }

    pub fn inverse(&self) -> Matrix<T> {
        let n = self.lu.n;
        let mut inv = Matrix::zeros(n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = T::zero());
            e[j] = T::one();
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }

    /// Exact 1-norm condition number (explicit inverse; fine at this size).
    pub fn condition_number(&self) -> T {
        self.norm_one * self.inverse().norm_one()
    }
}
