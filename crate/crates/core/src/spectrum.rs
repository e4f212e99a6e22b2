//! Symmetric eigendecomposition and the spectral bounds built from the
//! eigenvalues of an overlap matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{log_det, SquareMatrix};
use crate::overlap::OverlapMatrix;

pub const EIGEN_MAX_N: usize = 200;
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Non-leading eigenvalues at or above `1 − LEADING_GAP` make the bounds infinite.
pub const LEADING_GAP: f64 = 1e-12;

const MAX_SWEEPS: usize = 100;
const HESSIAN_MAX_N: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Sorted descending.
    pub eigenvalues: Vec<f64>,
    pub source_dim: usize,
}

/// Eigenvalues (descending) and the matching orthonormal eigenvectors, one
/// per column of `vectors`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: SquareMatrix,
}

pub fn eigen_sym(m: &SquareMatrix) -> Result<SpectrumReport> {
    let d = eigen_sym_vectors(m)?;
    Ok(SpectrumReport {
        eigenvalues: d.values,
        source_dim: m.dim(),
    })
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops
/// below `1e-13·‖M‖_F`.
pub fn eigen_sym_vectors(m: &SquareMatrix) -> Result<EigenDecomposition> {
    let n = m.dim();
    if n > EIGEN_MAX_N {
        return Err(Error::Capacity(format!(
            "eigen_sym limited to n <= {EIGEN_MAX_N}, got {n}"
        )));
    }
    if m.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation("matrix has non-finite entries".into()));
    }
    let residual = m.symmetry_residual();
    if residual >= SYMMETRY_TOL {
        return Err(Error::Asymmetric { residual });
    }
    let mut a = m.symmetrized();
    let mut v = SquareMatrix::identity(n);
    let target = 1e-13 * m.frobenius_norm();
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) <= target {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }
    if !converged {
        let off = off_diagonal_norm(&a);
        if off > target {
            return Err(Error::Convergence {
                iterations: MAX_SWEEPS,
                residual: off,
            });
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = SquareMatrix::from_fn(n, |r, c| v[(r, order[c])]);
    Ok(EigenDecomposition { values, vectors })
}

fn off_diagonal_norm(a: &SquareMatrix) -> f64 {
    let n = a.dim();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

fn rotate(a: &mut SquareMatrix, v: &mut SquareMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let n = a.dim();
    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Eigenvalue clamped to `[0, 1]`, logging any clamp.
fn clamped(lambda: f64) -> f64 {
    if !(0.0..=1.0).contains(&lambda) {
        log::debug!("clamping eigenvalue {lambda:e} into [0, 1]");
    }
    lambda.clamp(0.0, 1.0)
}

fn sum_non_leading(spec: &SpectrumReport, term: impl Fn(f64) -> f64) -> f64 {
    let mut s = 0.0;
    for &l in spec.eigenvalues.iter().skip(1) {
        let l = clamped(l);
        if l >= 1.0 - LEADING_GAP {
            return f64::INFINITY;
        }
        s += term(l);
    }
    s
}

/// `Σ_{i≥2} −log(1 − λ_i)`: upper bound on `log(1 + χ²)`.
pub fn spectral_upper(spec: &SpectrumReport) -> f64 {
    sum_non_leading(spec, |l| -(-l).ln_1p())
}

/// `Σ_{i≥2} −½ log(1 − λ_i²)`.
pub fn spectral_lower(spec: &SpectrumReport) -> f64 {
    sum_non_leading(spec, |l| -0.5 * ((-l).ln_1p() + l.ln_1p()))
}

/// `−½ log n + Σ_{i≥2} −½ log(1 − A_ii²)`.
pub fn diagonal_lower(a: &OverlapMatrix) -> f64 {
    diagonal_lower_entries(&a.entries)
}

pub fn diagonal_lower_entries(a: &SquareMatrix) -> f64 {
    let n = a.dim();
    let mut s = -0.5 * (n as f64).ln();
    for i in 1..n {
        let d = a[(i, i)];
        if d >= 1.0 {
            return f64::INFINITY;
        }
        s += -0.5 * ((-d).ln_1p() + d.ln_1p());
    }
    s
}

/// All bounds on `log(1 + χ²)` for one overlap matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub log_upper: f64,
    pub log_lower_spectral: f64,
    pub log_lower_diagonal: f64,
    pub log_exact: Option<f64>,
}

impl BoundsReport {
    pub fn new(a: &OverlapMatrix, log_exact: Option<f64>) -> Result<Self> {
        let spec = eigen_sym(&a.entries)?;
        Ok(Self {
            log_upper: spectral_upper(&spec),
            log_lower_spectral: spectral_lower(&spec),
            log_lower_diagonal: diagonal_lower(a),
            log_exact,
        })
    }

    /// `log_exact ≤ log_upper`, vacuous when no exact value is attached.
    pub fn sandwich_holds(&self) -> bool {
        self.log_exact.is_none_or(|e| e <= self.log_upper)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HessianCheck {
    /// `log det H` from pivoted LU.
    pub log_lhs: f64,
    /// `−log n − Σ log A_ij + Σ_{k≥2} log(1 − λ_k²)`.
    pub log_rhs: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub rel_err: f64,
}

/// The constrained Hessian of `Σ A_ij log A_ij` over the free `(n−1)²`
/// entries of a doubly stochastic matrix (the last row and column are
/// eliminated by the margin constraints).
pub fn constrained_hessian(a: &SquareMatrix) -> SquareMatrix {
    let n = a.dim();
    let last = n - 1;
    let k = n - 1;
    SquareMatrix::from_fn(k * k, |r, c| {
        let (i, j) = (r / k, r % k);
        let (ip, jp) = (c / k, c % k);
        let mut h = 1.0 / a[(last, last)];
        if i == ip {
            h += 1.0 / a[(i, last)];
        }
        if j == jp {
            h += 1.0 / a[(last, j)];
        }
        if i == ip && j == jp {
            h += 1.0 / a[(i, j)];
        }
        h
    })
}

/// Compares `det H` with `(1/(n ∏ A_ij)) ∏_{k≥2} (1 − λ_k²)`.
pub fn hessian_det_check(a: &SquareMatrix) -> Result<HessianCheck> {
    let n = a.dim();
    if n < 2 {
        return Err(Error::Validation("hessian check needs n >= 2".into()));
    }
    if n > HESSIAN_MAX_N {
        return Err(Error::Capacity(format!(
            "hessian check limited to n <= {HESSIAN_MAX_N}, got {n}"
        )));
    }
    if a.as_slice().iter().any(|x| !(*x > 0.0)) {
        return Err(Error::Domain("hessian check needs strictly positive entries".into()));
    }
    let h = constrained_hessian(a);
    let det = log_det(&h);
    let scale = h.as_slice().iter().fold(0.0, |m: f64, x| m.max(x.abs()));
    if det.sign <= 0.0 && det.min_pivot > 1e-12 * scale {
        return Err(Error::Numerical(format!("constrained Hessian has sign {}", det.sign)));
    }
    let spec = eigen_sym(a)?;
    let mut log_rhs = -(n as f64).ln() - a.as_slice().iter().map(|x| x.ln()).sum::<f64>();
    for &l in spec.eigenvalues.iter().skip(1) {
        log_rhs += (-l).ln_1p() + l.ln_1p();
    }
    let log_lhs = det.log_abs;
    Ok(HessianCheck {
        log_lhs,
        log_rhs,
        lhs: log_lhs.exp(),
        rhs: log_rhs.exp(),
        rel_err: (log_lhs - log_rhs).exp_m1().abs(),
    })
}
