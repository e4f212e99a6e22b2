//! Dense square matrices and the few direct factorizations the toolkit needs.

use std::fmt::Write as _;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense square matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn filled(n: usize, value: f64) -> Self {
        Self {
            n,
            data: vec![value; n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Validation("matrix rows must form a square".into()));
        }
        Ok(Self {
            n,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)])
    }

    /// `(M + Mᵀ) / 2`.
    pub fn symmetrized(&self) -> Self {
        Self::from_fn(self.n, |i, j| 0.5 * (self[(i, j)] + self[(j, i)]))
    }

    pub fn symmetry_residual(&self) -> f64 {
        let mut r = 0.0f64;
        for i in 0..self.n {
            for j in 0..i {
                r = r.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        r
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.n).map(|j| (0..self.n).map(|i| self[(i, j)]).sum()).collect()
    }

    /// Max over rows and columns of `|sum - 1|`.
    pub fn stochastic_residual(&self) -> f64 {
        self.row_sums()
            .into_iter()
            .chain(self.col_sums())
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    /// Kronecker product `self ⊗ other` for square factors.
    pub fn kronecker(&self, other: &Self) -> Self {
        let (a, b) = (self.n, other.n);
        Self::from_fn(a * b, |i, j| self[(i / b, j / b)] * other[(i % b, j % b)])
    }

    /// Symmetric permutation `P M Pᵀ` with `out[i][j] = M[perm[i]][perm[j]]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self::from_fn(self.n, |i, j| self[(perm[i], perm[j])])
    }

    /// Row-major CSV with 17 significant digits and `\n` line endings.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for i in 0..self.n {
            let line: Vec<String> = self.row(i).iter().map(|x| format_sig17(*x)).collect();
            let _ = writeln!(s, "{}", line.join(","));
        }
        s
    }
}

impl Index<(usize, usize)> for SquareMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for SquareMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Formats a float with 17 significant digits (round-trip exact).
pub fn format_sig17(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:.16e}")
    }
}

/// Result of a pivoted LU factorization, kept only as a log-determinant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDet {
    pub log_abs: f64,
    pub sign: f64,
    /// Smallest `|pivot|` encountered.
    pub min_pivot: f64,
}

/// Log-determinant via LU with partial pivoting. Sign is tracked separately;
/// a zero pivot gives `log_abs = -inf` and sign 0.
pub fn log_det(m: &SquareMatrix) -> LogDet {
    let n = m.dim();
    let mut a = m.data.clone();
    let mut log_abs = 0.0;
    let mut sign = 1.0;
    let mut min_pivot = f64::INFINITY;
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for r in col + 1..n {
            let v = a[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return LogDet {
                log_abs: f64::NEG_INFINITY,
                sign: 0.0,
                min_pivot: 0.0,
            };
        }
        if piv != col {
            for c in 0..n {
                a.swap(piv * n + c, col * n + c);
            }
            sign = -sign;
        }
        let p = a[col * n + col];
        min_pivot = min_pivot.min(p.abs());
        if p < 0.0 {
            sign = -sign;
        }
        log_abs += p.abs().ln();
        for r in col + 1..n {
            let factor = a[r * n + col] / p;
            if factor == 0.0 {
                continue;
            }
            for c in col + 1..n {
                a[r * n + c] -= factor * a[col * n + c];
            }
        }
    }
    LogDet {
        log_abs,
        sign,
        min_pivot,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn log_det_small_cases() {
        let m = SquareMatrix::from_rows(&[vec![4.0, 3.0], vec![6.0, 3.0]]).unwrap();
        let d = log_det(&m);
        assert_eq!(d.sign, -1.0);
        assert_relative_eq!(d.log_abs, 6f64.ln(), epsilon = 1e-14);
        let id = SquareMatrix::identity(5);
        assert_eq!(log_det(&id).log_abs, 0.0);
        let sing = SquareMatrix::filled(3, 1.0);
        assert_eq!(log_det(&sing).sign, 0.0);
    }

    #[test]
    fn kronecker_shape_and_values() {
        let a = SquareMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let j = SquareMatrix::filled(2, 0.5);
        let k = a.kronecker(&j);
        assert_eq!(k.dim(), 4);
        assert_eq!(k[(0, 1)], 0.5);
        assert_eq!(k[(2, 3)], 2.0);
        assert_eq!(k[(3, 0)], 1.5);
    }

    #[test]
    fn csv_uses_seventeen_digits() {
        let m = SquareMatrix::from_rows(&[vec![0.1]]).unwrap();
        assert_eq!(m.to_csv(), "1.0000000000000001e-1\n");
        let parsed: f64 = "1.0000000000000001e-1".parse().unwrap();
        assert_eq!(parsed, 0.1);
    }
}
