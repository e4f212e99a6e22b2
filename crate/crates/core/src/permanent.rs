//! Exact permanents and the permanent representation of the χ² divergence
//! between a permutation mixture and its mean-field product.
//!
//! The main engine is Ryser's inclusion–exclusion in Glynn's centred form
//! (`x_i = a_{i,last} − ½ Σ_j a_ij`), walked in Gray-code order within
//! fixed-size chunks. Centring shrinks the alternating terms considerably
//! for the near-uniform matrices this crate produces, and each chunk is
//! summed with compensation before a fixed pairwise reduction across chunks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::Member;
use crate::linalg::{format_sig17, SquareMatrix};
use crate::numeric::{ln_binomial, ln_factorial, pairwise_sum, GaussLegendre, LogSumExp, NeumaierSum, HALF_LN_2PI};
use crate::overlap::{build_overlap, OverlapMatrix, QuadConfig};

pub const RYSER_MAX_N: usize = 30;
pub const NAIVE_MAX_N: usize = 9;
/// Term budget for the three-row contingency expansion.
pub const CONTINGENCY_BUDGET: u64 = 100_000_000;

const CHUNK_BITS: usize = 12;

/// Signed value carried as `log |v|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogValue {
    pub log_magnitude: f64,
    pub zero_flag: bool,
    pub negative: bool,
}

impl LogValue {
    pub fn zero() -> Self {
        Self {
            log_magnitude: f64::NEG_INFINITY,
            zero_flag: true,
            negative: false,
        }
    }

    pub fn from_value(v: f64) -> Self {
        if v == 0.0 {
            Self::zero()
        } else {
            Self {
                log_magnitude: v.abs().ln(),
                zero_flag: false,
                negative: v < 0.0,
            }
        }
    }

    fn scaled(self, log_factor: f64) -> Self {
        if self.zero_flag {
            self
        } else {
            Self {
                log_magnitude: self.log_magnitude + log_factor,
                ..self
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.zero_flag
    }

    /// `log v`; `-inf` for zero, NaN for negative values.
    pub fn ln(&self) -> f64 {
        if self.zero_flag {
            f64::NEG_INFINITY
        } else if self.negative {
            f64::NAN
        } else {
            self.log_magnitude
        }
    }

    pub fn value(&self) -> f64 {
        if self.zero_flag {
            0.0
        } else {
            let m = self.log_magnitude.exp();
            if self.negative {
                -m
            } else {
                m
            }
        }
    }

    /// `self / other`, computed from the logs.
    pub fn ratio(&self, other: &LogValue) -> f64 {
        if self.zero_flag {
            return 0.0;
        }
        let m = (self.log_magnitude - other.log_magnitude).exp();
        if self.negative != other.negative {
            -m
        } else {
            m
        }
    }
}

impl std::fmt::Display for LogValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.zero_flag {
            write!(f, "0")
        } else {
            write!(
                f,
                "{}exp({})",
                if self.negative { "-" } else { "" },
                format_sig17(self.log_magnitude)
            )
        }
    }
}

/// Per-column scale factors with `Perm(M) = exp(log_correction)·Perm(scaled)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub scale_factors: Vec<f64>,
    pub log_correction: f64,
}

impl ColumnScaling {
    /// Column maxima of `|M|`; `None` if some column is identically zero.
    pub fn of(m: &SquareMatrix) -> Option<Self> {
        let n = m.dim();
        let mut scale_factors = Vec::with_capacity(n);
        for j in 0..n {
            let c = (0..n).map(|i| m[(i, j)].abs()).fold(0.0, f64::max);
            if c == 0.0 {
                return None;
            }
            scale_factors.push(c);
        }
        let log_correction = scale_factors.iter().map(|s| s.ln()).sum();
        Some(Self {
            scale_factors,
            log_correction,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Ryser,
    Naive,
}

fn check_entries(m: &SquareMatrix, allow_negative: bool) -> Result<()> {
    if m.dim() == 0 {
        return Err(Error::Validation("permanent of an empty matrix".into()));
    }
    for &x in m.as_slice() {
        if !x.is_finite() || (!allow_negative && x < 0.0) {
            return Err(Error::Validation(format!(
                "matrix entry {x} is not a finite nonnegative number"
            )));
        }
    }
    Ok(())
}

fn check_size(n: usize, engine: Engine) -> Result<()> {
    let cap = match engine {
        Engine::Ryser => RYSER_MAX_N,
        Engine::Naive => NAIVE_MAX_N,
    };
    if n > cap {
        return Err(Error::Capacity(format!(
            "{engine:?} permanent limited to n <= {cap}, got {n}"
        )));
    }
    Ok(())
}

/// Exact permanent of a nonnegative matrix.
pub fn permanent_exact(m: &SquareMatrix, engine: Engine) -> Result<LogValue> {
    check_entries(m, false)?;
    check_size(m.dim(), engine)?;
    match engine {
        Engine::Ryser => {
            let n = m.dim();
            let ones = vec![1.0; n];
            Ok(ryser_jobs(m, n - 1, &[ones.as_slice()])?.remove(0))
        }
        Engine::Naive => naive(m),
    }
}

/// `Σ_π w_{π⁻¹(col)} ∏_j M_{π⁻¹(j), j}`: the permanent of `M` with column
/// `col` replaced entrywise by `weights[k] · M[k][col]`. Weights may be signed.
pub fn weighted_column_permanent(m: &SquareMatrix, col: usize, weights: &[f64]) -> Result<LogValue> {
    Ok(weighted_column_permanents(m, col, &[weights.to_vec()])?.remove(0))
}

/// Several weight vectors on the same column in one Gray-code pass.
pub fn weighted_column_permanents(m: &SquareMatrix, col: usize, weights: &[Vec<f64>]) -> Result<Vec<LogValue>> {
    check_entries(m, false)?;
    let n = m.dim();
    check_size(n, Engine::Ryser)?;
    if col >= n {
        return Err(Error::Validation(format!("column {col} out of range for n={n}")));
    }
    for w in weights {
        if w.len() != n || w.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("weights must be n finite reals".into()));
        }
    }
    let jobs: Vec<&[f64]> = weights.iter().map(|w| w.as_slice()).collect();
    ryser_jobs(m, col, &jobs)
}

/// Whether the positive entries of `m` (with column `col` reweighted by `w`)
/// contain a perfect matching, i.e. whether the permanent is structurally
/// nonzero.
fn has_perfect_matching(m: &SquareMatrix, col: usize, w: &[f64]) -> bool {
    let n = m.dim();
    let positive = |i: usize, j: usize| {
        let v = if j == col { w[i] * m[(i, j)] } else { m[(i, j)] };
        v != 0.0
    };
    let mut match_of_col = vec![usize::MAX; n];
    fn augment(
        i: usize,
        n: usize,
        positive: &dyn Fn(usize, usize) -> bool,
        seen: &mut [bool],
        match_of_col: &mut [usize],
    ) -> bool {
        for j in 0..n {
            if positive(i, j) && !seen[j] {
                seen[j] = true;
                if match_of_col[j] == usize::MAX || augment(match_of_col[j], n, positive, seen, match_of_col) {
                    match_of_col[j] = i;
                    return true;
                }
            }
        }
        false
    }
    for i in 0..n {
        let mut seen = vec![false; n];
        if !augment(i, n, &positive, &mut seen, &mut match_of_col) {
            return false;
        }
    }
    true
}

fn ryser_jobs(m: &SquareMatrix, col: usize, jobs: &[&[f64]]) -> Result<Vec<LogValue>> {
    let n = m.dim();
    let row_max: Vec<f64> = (0..n)
        .map(|i| m.row(i).iter().fold(0.0, |a, &x| f64::max(a, x)))
        .collect();
    if row_max.contains(&0.0) {
        return Ok(vec![LogValue::zero(); jobs.len()]);
    }
    let row_scaled = SquareMatrix::from_fn(n, |i, j| m[(i, j)] / row_max[i]);
    let Some(scaling) = ColumnScaling::of(&row_scaled) else {
        return Ok(vec![LogValue::zero(); jobs.len()]);
    };
    let log_correction = scaling.log_correction + row_max.iter().map(|r| r.ln()).sum::<f64>();
    let a = SquareMatrix::from_fn(n, |i, j| row_scaled[(i, j)] / scaling.scale_factors[j]);

    // Other columns, column-major; the weighted column goes last.
    let others: Vec<usize> = (0..n).filter(|&j| j != col).collect();
    let cols: Vec<Vec<f64>> = others.iter().map(|&j| (0..n).map(|i| a[(i, j)]).collect()).collect();
    let half_last: Vec<Vec<f64>> = jobs
        .iter()
        .map(|w| (0..n).map(|i| 0.5 * w[i] * a[(i, col)]).collect())
        .collect();
    let start: Vec<f64> = (0..n)
        .map(|i| -0.5 * others.iter().map(|&j| a[(i, j)]).sum::<f64>())
        .collect();

    let free = n - 1;
    let low_bits = free.min(CHUNK_BITS);
    let chunks = 1usize << (free - low_bits);
    let run_chunk = |h: usize| -> Vec<f64> {
        let mut base = start.clone();
        for (b, c) in cols.iter().enumerate().skip(low_bits) {
            if (h >> (b - low_bits)) & 1 == 1 {
                for i in 0..n {
                    base[i] += c[i];
                }
            }
        }
        let mut negative = h.count_ones() % 2 == 1;
        let mut acc = vec![NeumaierSum::new(); jobs.len()];
        let mut gray = 0usize;
        for k in 0..(1usize << low_bits) {
            if k > 0 {
                let bit = k.trailing_zeros() as usize;
                gray ^= 1 << bit;
                let c = &cols[bit];
                if gray & (1 << bit) != 0 {
                    for i in 0..n {
                        base[i] += c[i];
                    }
                } else {
                    for i in 0..n {
                        base[i] -= c[i];
                    }
                }
                negative = !negative;
            }
            for (s, hl) in acc.iter_mut().zip(&half_last) {
                let mut p = 1.0;
                for i in 0..n {
                    p *= base[i] + hl[i];
                }
                s.add(if negative { -p } else { p });
            }
        }
        acc.iter().map(|s| s.total()).collect()
    };
    let per_chunk: Vec<Vec<f64>> = if chunks == 1 {
        vec![run_chunk(0)]
    } else {
        (0..chunks).into_par_iter().map(run_chunk).collect()
    };
    let outer_sign = if free.is_multiple_of(2) { 2.0 } else { -2.0 };
    let mut out = Vec::with_capacity(jobs.len());
    let mut column = Vec::with_capacity(chunks);
    for (jdx, w) in jobs.iter().enumerate() {
        column.clear();
        column.extend(per_chunk.iter().map(|c| c[jdx]));
        let v = outer_sign * pairwise_sum(&column);
        let nonnegative = w.iter().all(|&x| x >= 0.0);
        let lv = if nonnegative {
            if !has_perfect_matching(m, col, w) {
                LogValue::zero()
            } else if v <= 0.0 {
                return Err(Error::Numerical(format!(
                    "permanent of a matrix with a positive diagonal lost all precision (got {v:e})"
                )));
            } else {
                LogValue::from_value(v)
            }
        } else {
            LogValue::from_value(v)
        };
        out.push(lv.scaled(log_correction));
    }
    Ok(out)
}

/// Permanent together with, for every column `c`, the ratio
/// `Perm(M with column c reweighted by w) / Perm(M)`, all from one pass of
/// Glynn's formula over sign vectors `δ ∈ {±1}ⁿ`, `δ_0 = +1`.
///
/// Returns `None` for the ratios when the permanent is zero.
pub fn weighted_column_ratios(m: &SquareMatrix, weights: &[f64]) -> Result<(LogValue, Option<Vec<f64>>)> {
    check_entries(m, false)?;
    let n = m.dim();
    check_size(n, Engine::Ryser)?;
    if weights.len() != n || weights.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation("weights must be n finite reals".into()));
    }
    if !has_perfect_matching(m, 0, &vec![1.0; n]) {
        return Ok((LogValue::zero(), None));
    }
    let row_max: Vec<f64> = (0..n)
        .map(|i| m.row(i).iter().fold(0.0, |a, &x| f64::max(a, x)))
        .collect();
    let row_scaled = SquareMatrix::from_fn(n, |i, j| m[(i, j)] / row_max[i]);
    let scaling = ColumnScaling::of(&row_scaled).expect("perfect matching implies nonzero columns");
    let log_correction = scaling.log_correction + row_max.iter().map(|r| r.ln()).sum::<f64>();
    let a = SquareMatrix::from_fn(n, |i, j| row_scaled[(i, j)] / scaling.scale_factors[j]);
    let cols: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| a[(i, j)]).collect()).collect();
    // change of row sum i when column c is reweighted
    let delta: Vec<Vec<f64>> = (0..n)
        .map(|c| (0..n).map(|i| (weights[i] - 1.0) * a[(i, c)]).collect())
        .collect();
    let start: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();

    let free = n - 1;
    let low_bits = free.min(CHUNK_BITS);
    let chunks = 1usize << (free - low_bits);
    let run_chunk = |h: usize| -> Vec<f64> {
        // δ_{j+1} = −1 for set bit j
        let mut sign = vec![1.0; n];
        let mut r = start.clone();
        for b in low_bits..free {
            if (h >> (b - low_bits)) & 1 == 1 {
                sign[b + 1] = -1.0;
                for i in 0..n {
                    r[i] -= 2.0 * cols[b + 1][i];
                }
            }
        }
        let mut negative = h.count_ones() % 2 == 1;
        let mut acc = vec![NeumaierSum::new(); n + 1];
        for k in 0..(1usize << low_bits) {
            if k > 0 {
                let b = k.trailing_zeros() as usize;
                let j = b + 1;
                sign[j] = -sign[j];
                let s2 = 2.0 * sign[j];
                for i in 0..n {
                    r[i] += s2 * cols[j][i];
                }
                negative = !negative;
            }
            let mut p = 1.0;
            for &x in &r {
                p *= x;
            }
            acc[0].add(if negative { -p } else { p });
            for c in 0..n {
                let d = &delta[c];
                let sc = sign[c];
                let mut q = 1.0;
                for i in 0..n {
                    q *= r[i] + sc * d[i];
                }
                acc[c + 1].add(if negative { -q } else { q });
            }
        }
        acc.iter().map(|s| s.total()).collect()
    };
    let per_chunk: Vec<Vec<f64>> = if chunks == 1 {
        vec![run_chunk(0)]
    } else {
        (0..chunks).into_par_iter().map(run_chunk).collect()
    };
    let mut column = Vec::with_capacity(chunks);
    let mut totals = Vec::with_capacity(n + 1);
    for idx in 0..=n {
        column.clear();
        column.extend(per_chunk.iter().map(|c| c[idx]));
        totals.push(pairwise_sum(&column));
    }
    if totals[0] <= 0.0 {
        return Err(Error::Numerical(format!(
            "permanent of a matrix with a perfect matching lost all precision (got {:e})",
            totals[0]
        )));
    }
    let perm = LogValue::from_value(totals[0] / 2f64.powi(free as i32)).scaled(log_correction);
    let ratios = totals[1..].iter().map(|t| t / totals[0]).collect();
    Ok((perm, Some(ratios)))
}

fn naive(m: &SquareMatrix) -> Result<LogValue> {
    let n = m.dim();
    let Some(scaling) = ColumnScaling::of(m) else {
        return Ok(LogValue::zero());
    };
    let a = SquareMatrix::from_fn(n, |i, j| m[(i, j)] / scaling.scale_factors[j]);
    // Heap's algorithm over column assignments of rows.
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    let mut acc = NeumaierSum::new();
    let product = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| a[(i, j)]).product::<f64>();
    acc.add(product(&perm));
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            acc.add(product(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(LogValue::from_value(acc.total()).scaled(scaling.log_correction))
}

/// `log(nⁿ/n!)`.
pub fn ln_n_pow_n_over_factorial(n: usize) -> f64 {
    n as f64 * (n as f64).ln() - ln_factorial(n as u64)
}

/// `log(1 + χ²) = log((nⁿ/n!)·Perm(A))` for an overlap matrix.
pub fn log1p_chi2_from_overlap(a: &OverlapMatrix) -> Result<f64> {
    let n = a.dim();
    if n > RYSER_MAX_N {
        return Err(Error::Capacity(format!("exact χ² needs n <= {RYSER_MAX_N}, got {n}")));
    }
    let p = permanent_exact(&a.entries, Engine::Ryser)?;
    if p.is_zero() {
        return Err(Error::Numerical("overlap matrix has zero permanent".into()));
    }
    Ok(ln_n_pow_n_over_factorial(n) + p.ln())
}

fn clamp_chi2(log1p: f64) -> Result<f64> {
    let v = log1p.exp_m1();
    if v >= 0.0 {
        Ok(v)
    } else if v >= -1e-9 {
        Ok(0.0)
    } else {
        Err(Error::Numerical(format!("exact χ² came out negative ({v:e})")))
    }
}

/// `χ²(ℙ_n ‖ ℚ_n)` from an overlap matrix.
pub fn chi2_from_overlap(a: &OverlapMatrix) -> Result<f64> {
    clamp_chi2(log1p_chi2_from_overlap(a)?)
}

/// `χ²(ℙ_n ‖ ℚ_n)` for the permutation mixture of `members`.
pub fn chi2_exact(members: &[Member], cfg: &QuadConfig) -> Result<f64> {
    if members.len() > RYSER_MAX_N {
        return Err(Error::Capacity(format!(
            "exact χ² needs n <= {RYSER_MAX_N}, got {}",
            members.len()
        )));
    }
    chi2_from_overlap(&build_overlap(members, cfg)?)
}

/// `log(1 + χ²)` of the `m`-fold replicated instance, by summing over
/// contingency tables with all margins equal to `m`.
pub fn replicated_log1p_chi2(a: &SquareMatrix, m: u64) -> Result<f64> {
    let n = a.dim();
    if !(2..=3).contains(&n) {
        return Err(Error::Validation(format!(
            "replication supports n in {{2, 3}}, got {n}"
        )));
    }
    if m == 0 {
        return Err(Error::Validation("replication factor must be >= 1".into()));
    }
    if a.as_slice().iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Validation(
            "overlap entries must be finite and nonnegative".into(),
        ));
    }
    if n == 3 && (m + 1).checked_pow(4).is_none_or(|t| t > CONTINGENCY_BUDGET) {
        return Err(Error::Capacity(format!(
            "(m+1)^4 = {}^4 exceeds the contingency budget {CONTINGENCY_BUDGET}",
            m + 1
        )));
    }
    let ln_a: Vec<f64> = a.as_slice().iter().map(|x| x.ln()).collect();
    let lf: Vec<f64> = (0..=m).map(ln_factorial).collect();
    let cell = |idx: usize, x: u64| -> f64 {
        if x == 0 {
            0.0
        } else {
            x as f64 * ln_a[idx] - lf[x as usize]
        }
    };
    let mut lse = LogSumExp::new();
    if n == 2 {
        for d in 0..=m {
            let o = m - d;
            lse.push(cell(0, d) + cell(1, o) + cell(2, o) + cell(3, d));
        }
    } else {
        for x00 in 0..=m {
            for x01 in 0..=(m - x00) {
                let x02 = m - x00 - x01;
                for x10 in 0..=(m - x00) {
                    let x20 = m - x00 - x10;
                    let head = cell(0, x00) + cell(1, x01) + cell(2, x02) + cell(3, x10) + cell(6, x20);
                    // x11 ranges so that x12, x21, x22 stay nonnegative
                    let lo = (m as i64 - (x00 + x01 + x10) as i64).max(0) as u64;
                    let hi = (m - x10).min(m - x01);
                    for x11 in lo..=hi {
                        let x12 = m - x10 - x11;
                        let x21 = m - x01 - x11;
                        let x22 = m - x20 - x21;
                        lse.push(head + cell(4, x11) + cell(5, x12) + cell(7, x21) + cell(8, x22));
                    }
                }
            }
        }
    }
    let big_n = m * n as u64;
    let nf = n as f64;
    let prefix = big_n as f64 * nf.ln() - ln_factorial(big_n) + 2.0 * nf * ln_factorial(m);
    Ok(prefix + lse.value())
}

/// `χ²` of the `m`-fold replicated instance (see [`replicated_log1p_chi2`]).
pub fn replicated_chi2(a: &OverlapMatrix, m: u64) -> Result<f64> {
    clamp_chi2(replicated_log1p_chi2(&a.entries, m)?)
}

/// Log summands of the two-point series, dropping the negligible middle.
/// The summand is log-convex in `ℓ` (its successive ratio increases), so on
/// any interval it peaks at an endpoint: walking inward from both ends until
/// a term falls `40 + ln m` below the larger end term loses at most `e^{-40}`
/// relative mass.
fn two_component_log_terms(m: u64, ln_f: f64) -> Vec<f64> {
    let term = |l: u64| 2.0 * ln_binomial(m, l) - ln_binomial(2 * m, 2 * l) + 2.0 * l as f64 * ln_f;
    let floor = term(1).max(term(m)) - 40.0 - (m as f64).ln();
    let mut out = Vec::new();
    let mut lo = 1;
    while lo <= m {
        let t = term(lo);
        if t < floor {
            break;
        }
        out.push(t);
        lo += 1;
    }
    let mut hi = m;
    while hi > lo {
        let t = term(hi);
        if t < floor {
            break;
        }
        out.push(t);
        hi -= 1;
    }
    out
}

/// `Σ_{ℓ=1}^{m} C(m,ℓ)²/C(2m,2ℓ) · f^{2ℓ}`: the exact χ² of the two-point
/// instance with `m` copies of each member.
pub fn two_component_chi2(m: u64, f: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::Validation("half_n must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&f) {
        return Err(Error::Domain(format!("mixing scalar must lie in [0, 1), got {f}")));
    }
    if f == 0.0 {
        return Ok(0.0);
    }
    let mut s = NeumaierSum::new();
    for t in two_component_log_terms(m, f.ln()) {
        s.add(t.exp());
    }
    Ok(s.total())
}

/// `log(1 + χ²)` of the two-point instance, parameterised by `1 − f` so that
/// `f` extremely close to 1 keeps its precision.
pub fn two_component_log1p_chi2(m: u64, one_minus_f: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::Validation("half_n must be >= 1".into()));
    }
    if !(one_minus_f > 0.0 && one_minus_f <= 1.0) {
        return Err(Error::Domain(format!("1 - f must lie in (0, 1], got {one_minus_f}")));
    }
    if one_minus_f == 1.0 {
        return Ok(0.0);
    }
    let ln_f = (-one_minus_f).ln_1p();
    let mut lse = LogSumExp::new();
    lse.push(0.0);
    for t in two_component_log_terms(m, ln_f) {
        lse.push(t);
    }
    Ok(lse.value())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixingModel {
    Gaussian,
    Poisson,
}

/// `f`: the second eigenvalue of the overlap matrix of a balanced two-point
/// family. Gaussian `{N(−μ,1), N(μ,1)}` with `sep = μ`; Poisson two-point
/// family with separation `sep = M`, `f = tanh(M/2)`.
pub fn mixing_scalar(model: MixingModel, sep: f64) -> Result<f64> {
    check_sep(sep)?;
    Ok(match model {
        MixingModel::Poisson => (0.5 * sep).tanh(),
        MixingModel::Gaussian if sep <= 2.0 => gaussian_expectation(sep, |t| {
            let s = t.sinh();
            s * s / t.cosh()
        }),
        MixingModel::Gaussian => 1.0 - gaussian_expectation(sep, |t| 1.0 / t.cosh()),
    })
}

/// `1 − f`, accurate when `f` is close to 1.
pub fn mixing_scalar_complement(model: MixingModel, sep: f64) -> Result<f64> {
    check_sep(sep)?;
    Ok(match model {
        MixingModel::Poisson => 2.0 / (sep.exp() + 1.0),
        MixingModel::Gaussian if sep <= 2.0 => 1.0 - mixing_scalar(model, sep)?,
        MixingModel::Gaussian => gaussian_expectation(sep, |t| 1.0 / t.cosh()),
    })
}

fn check_sep(sep: f64) -> Result<()> {
    if !(sep.is_finite() && sep >= 0.0) {
        return Err(Error::Validation(format!(
            "separation must be finite and >= 0, got {sep}"
        )));
    }
    Ok(())
}

/// `e^{−μ²/2} E_{Z∼N(0,1)}[g(μZ)]` by composite Gauss–Legendre.
fn gaussian_expectation(mu: f64, g: impl Fn(f64) -> f64) -> f64 {
    if mu == 0.0 {
        return g(0.0);
    }
    let rule = GaussLegendre::new(20);
    let (a, b) = (-mu - 12.0, mu + 12.0);
    let width = 0.5 * (1.0f64).min(1.0 / mu);
    let panels = ((b - a) / width).ceil() as usize;
    let mut acc = NeumaierSum::new();
    let lo_w = (b - a) / panels as f64;
    for p in 0..panels {
        let lo = a + lo_w * p as f64;
        for (z, w) in rule.mapped(lo, lo + lo_w) {
            let log_phi = -0.5 * z * z - HALF_LN_2PI - 0.5 * mu * mu;
            acc.add(w * log_phi.exp() * g(mu * z));
        }
    }
    acc.total()
}
