//! Channel overlap matrices `A_ij = (1/n) ∫ dP_i dP_j / dP̄` and
//! doubly stochastic helpers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{common_kind, poisson_log_pmf, Member, ModelKind, Observation};
use crate::linalg::SquareMatrix;
use crate::numeric::{adaptive_simpson, pairwise_sum, GaussLegendre, NeumaierSum, HALF_LN_2PI};

/// Largest row-sum residual accepted from a quadrature build.
pub const ROW_SUM_TOL: f64 = 1e-6;

const GL_ORDER: usize = 20;
const MAX_REFINEMENTS: u32 = 8;
const SIMPSON_DEPTH: u32 = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadScheme {
    AdaptiveSimpson,
    FixedPanel,
}

/// How far the Poisson sums run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PoissonTail {
    /// `x_max = ⌈λ_max + 12√(λ_max + 1) + 40⌉`.
    Standard,
    /// Fixed upper summation limit.
    Fixed(u64),
}

impl PoissonTail {
    pub fn x_max(self, rate_max: f64) -> u64 {
        match self {
            PoissonTail::Standard => standard_poisson_cutoff(rate_max),
            PoissonTail::Fixed(x) => x,
        }
    }
}

/// `⌈λ + 12√(λ + 1) + 40⌉`.
pub fn standard_poisson_cutoff(rate: f64) -> u64 {
    (rate + 12.0 * (rate + 1.0).sqrt() + 40.0).ceil() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    pub scheme: QuadScheme,
    pub abs_tol: f64,
    /// Tail padding in standard deviations for the Gaussian families.
    pub domain_pad: f64,
    pub poisson_tail: PoissonTail,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            scheme: QuadScheme::FixedPanel,
            abs_tol: 1e-13,
            domain_pad: 12.0,
            poisson_tail: PoissonTail::Standard,
        }
    }
}

impl QuadConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) {
            return Err(Error::Validation(format!("abs_tol must be > 0, got {}", self.abs_tol)));
        }
        if !(self.domain_pad >= 8.0) {
            return Err(Error::Validation(format!(
                "domain_pad must be >= 8, got {}",
                self.domain_pad
            )));
        }
        Ok(())
    }
}

/// A validated channel overlap matrix together with the members it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapMatrix {
    pub entries: SquareMatrix,
    pub members: Vec<Member>,
    /// `max_i |Σ_j A_ij − 1|`.
    pub row_sum_residual: f64,
    /// Upper-triangle positions `(i, j)`, `i <= j`, holding an exact zero.
    pub zero_entries: Vec<(usize, usize)>,
}

impl OverlapMatrix {
    /// Wraps a matrix that did not come from a family (test matrices,
    /// Sinkhorn projections). Symmetrizes and validates it like a build.
    pub fn from_entries(entries: SquareMatrix) -> Result<Self> {
        finish(entries, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.entries.dim()
    }

    pub fn has_zero_entries(&self) -> bool {
        !self.zero_entries.is_empty()
    }
}

fn finish(raw: SquareMatrix, members: Vec<Member>) -> Result<OverlapMatrix> {
    let entries = raw.symmetrized();
    let n = entries.dim();
    if entries.as_slice().iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Validation(
            "overlap entries must be finite and nonnegative".into(),
        ));
    }
    let row_sum_residual = entries
        .row_sums()
        .into_iter()
        .map(|s| (s - 1.0).abs())
        .fold(0.0, f64::max);
    if row_sum_residual > ROW_SUM_TOL {
        return Err(Error::QuadratureFailure {
            residual: row_sum_residual,
        });
    }
    let mut zero_entries = Vec::new();
    for i in 0..n {
        for j in i..n {
            if entries[(i, j)] == 0.0 {
                zero_entries.push((i, j));
            }
        }
    }
    if !zero_entries.is_empty() {
        log::warn!("overlap matrix has {} zero entries", zero_entries.len());
    }
    Ok(OverlapMatrix {
        entries,
        members,
        row_sum_residual,
        zero_entries,
    })
}

/// Builds the overlap matrix of `members`.
pub fn build_overlap(members: &[Member], cfg: &QuadConfig) -> Result<OverlapMatrix> {
    cfg.validate()?;
    let kind = common_kind(members)?;
    let n = members.len();
    if n == 1 {
        return finish(SquareMatrix::identity(1), members.to_vec());
    }
    let raw = match kind {
        ModelKind::Discrete => discrete_overlap(members),
        ModelKind::Poisson => poisson_overlap(members, cfg),
        ModelKind::GaussianLoc | ModelKind::GaussianScale => {
            let domain = ContinuousDomain::new(members, cfg.domain_pad);
            match cfg.scheme {
                QuadScheme::FixedPanel => fixed_panel_overlap(members, &domain, cfg.abs_tol)?,
                QuadScheme::AdaptiveSimpson => simpson_overlap(members, &domain, cfg.abs_tol)?,
            }
        }
        ModelKind::GaussianLocMulti => {
            return Err(Error::Unsupported(
                "overlap matrices for multivariate Gaussian members".into(),
            ))
        }
    };
    finish(raw, members.to_vec())
}

/// Accumulates `exp(lp_i + lp_j − lse) · w` into the packed upper triangle.
fn accumulate_node(lp: &[f64], w: f64, acc: &mut [f64]) {
    let n = lp.len();
    let max = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || w == 0.0 {
        return;
    }
    let s: f64 = lp.iter().map(|l| (l - max).exp()).sum();
    let lse = max + s.ln();
    let mut idx = 0;
    for i in 0..n {
        for j in i..n {
            let e = lp[i] + lp[j] - lse;
            if e > -745.0 {
                acc[idx] += w * e.exp();
            }
            idx += 1;
        }
    }
}

fn unpack(n: usize, packed: &[f64]) -> SquareMatrix {
    let mut m = SquareMatrix::zeros(n);
    let mut idx = 0;
    for i in 0..n {
        for j in i..n {
            m[(i, j)] = packed[idx];
            m[(j, i)] = packed[idx];
            idx += 1;
        }
    }
    m
}

fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

fn discrete_overlap(members: &[Member]) -> SquareMatrix {
    let n = members.len();
    let pmfs: Vec<&[f64]> = members
        .iter()
        .map(|m| match m {
            Member::Discrete { pmf } => pmf.as_slice(),
            _ => unreachable!("kind checked"),
        })
        .collect();
    let support = pmfs[0].len();
    SquareMatrix::from_fn(n, |i, j| {
        let mut s = NeumaierSum::new();
        for x in 0..support {
            let (pi, pj) = (pmfs[i][x], pmfs[j][x]);
            if pi == 0.0 || pj == 0.0 {
                continue;
            }
            let total: f64 = pmfs.iter().map(|p| p[x]).sum();
            s.add(pi * pj / total);
        }
        s.total()
    })
}

fn poisson_overlap(members: &[Member], cfg: &QuadConfig) -> SquareMatrix {
    let n = members.len();
    let rates: Vec<f64> = members
        .iter()
        .map(|m| match m {
            Member::Poisson { rate } => *rate,
            _ => unreachable!("kind checked"),
        })
        .collect();
    let rate_max = rates.iter().copied().fold(0.0, f64::max);
    let x_max = cfg.poisson_tail.x_max(rate_max);
    let terms: Vec<Vec<f64>> = (0..=x_max)
        .into_par_iter()
        .map(|x| {
            let lp: Vec<f64> = rates.iter().map(|&r| poisson_log_pmf(r, x)).collect();
            let mut acc = vec![0.0; packed_len(n)];
            accumulate_node(&lp, 1.0, &mut acc);
            acc
        })
        .collect();
    unpack(n, &column_pairwise(&terms, packed_len(n)))
}

/// Entrywise sum over a list of equally long vectors using a fixed tree.
fn column_pairwise(terms: &[Vec<f64>], len: usize) -> Vec<f64> {
    let mut col = Vec::with_capacity(terms.len());
    (0..len)
        .map(|k| {
            col.clear();
            col.extend(terms.iter().map(|t| t[k]));
            pairwise_sum(&col)
        })
        .collect()
}

/// Integration domain for the continuous families, as a list of panel
/// breakpoints at refinement level 0.
struct ContinuousDomain {
    kind: ModelKind,
    params: Vec<f64>,
    breaks: Vec<f64>,
    /// Scale families are even in x; integrate over [0, ∞) and double.
    mirror: bool,
}

impl ContinuousDomain {
    fn new(members: &[Member], pad: f64) -> Self {
        let kind = members[0].kind();
        let params: Vec<f64> = members
            .iter()
            .map(|m| match m {
                Member::GaussianLoc { mean } => *mean,
                Member::GaussianScale { sigma } => *sigma,
                _ => unreachable!("continuous kinds only"),
            })
            .collect();
        let lo = params.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = params.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        match kind {
            ModelKind::GaussianLoc => {
                let (a, b) = (lo - pad, hi + pad);
                let panels = (b - a).ceil().max(1.0) as usize;
                let breaks = (0..=panels).map(|p| a + (b - a) * p as f64 / panels as f64).collect();
                Self {
                    kind,
                    params,
                    breaks,
                    mirror: false,
                }
            }
            _ => {
                // [0, σ_min] then geometric panels of ratio 2 up to pad·σ_max
                let mut breaks = vec![0.0, lo];
                let top = pad * hi;
                let mut x = lo;
                while x < top {
                    x = (2.0 * x).min(top);
                    breaks.push(x);
                }
                Self {
                    kind,
                    params,
                    breaks,
                    mirror: true,
                }
            }
        }
    }

    fn log_densities(&self, x: f64, out: &mut [f64]) {
        match self.kind {
            ModelKind::GaussianLoc => {
                for (o, m) in out.iter_mut().zip(&self.params) {
                    let d = x - m;
                    *o = -0.5 * d * d - HALF_LN_2PI;
                }
            }
            _ => {
                for (o, s) in out.iter_mut().zip(&self.params) {
                    let z = x / s;
                    *o = -0.5 * z * z - s.ln() - HALF_LN_2PI;
                }
            }
        }
    }

    fn panels(&self, level: u32) -> Vec<(f64, f64)> {
        let split = 1usize << level;
        let mut out = Vec::with_capacity((self.breaks.len() - 1) * split);
        for w in self.breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            for s in 0..split {
                let lo = a + (b - a) * s as f64 / split as f64;
                let hi = if s + 1 == split {
                    b
                } else {
                    a + (b - a) * (s + 1) as f64 / split as f64
                };
                out.push((lo, hi));
            }
        }
        out
    }

    fn weight_factor(&self) -> f64 {
        if self.mirror {
            2.0
        } else {
            1.0
        }
    }
}

fn fixed_panel_level(members: &[Member], domain: &ContinuousDomain, rule: &GaussLegendre, level: u32) -> Vec<f64> {
    let n = members.len();
    let len = packed_len(n);
    let factor = domain.weight_factor();
    let per_panel: Vec<Vec<f64>> = domain
        .panels(level)
        .into_par_iter()
        .map(|(a, b)| {
            let mut acc = vec![0.0; len];
            let mut lp = vec![0.0; n];
            for (x, w) in rule.mapped(a, b) {
                domain.log_densities(x, &mut lp);
                accumulate_node(&lp, factor * w, &mut acc);
            }
            acc
        })
        .collect();
    column_pairwise(&per_panel, len)
}

fn fixed_panel_overlap(members: &[Member], domain: &ContinuousDomain, abs_tol: f64) -> Result<SquareMatrix> {
    let rule = GaussLegendre::new(GL_ORDER);
    let mut prev = fixed_panel_level(members, domain, &rule, 0);
    let mut diff = f64::INFINITY;
    for level in 1..=MAX_REFINEMENTS {
        let next = fixed_panel_level(members, domain, &rule, level);
        diff = prev.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if diff < abs_tol {
            return Ok(unpack(members.len(), &next));
        }
        prev = next;
    }
    log::warn!("fixed-panel refinement stalled at difference {diff:.3e}");
    Err(Error::Convergence {
        iterations: MAX_REFINEMENTS as usize,
        residual: diff,
    })
}

fn simpson_overlap(members: &[Member], domain: &ContinuousDomain, abs_tol: f64) -> Result<SquareMatrix> {
    let n = members.len();
    let panels = domain.panels(0);
    let per_panel_tol = abs_tol / panels.len() as f64;
    let factor = domain.weight_factor();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let values: Vec<Option<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let mut lp = vec![0.0; n];
            let mut total = NeumaierSum::new();
            for &(a, b) in &panels {
                let f = |x: f64| {
                    domain.log_densities(x, &mut lp);
                    let max = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let s: f64 = lp.iter().map(|l| (l - max).exp()).sum();
                    (lp[i] + lp[j] - max - s.ln()).exp()
                };
                total.add(factor * adaptive_simpson(f, a, b, per_panel_tol, SIMPSON_DEPTH)?);
            }
            Some(total.total())
        })
        .collect();
    let mut packed = Vec::with_capacity(values.len());
    for v in values {
        match v {
            Some(x) => packed.push(x),
            None => {
                return Err(Error::Convergence {
                    iterations: SIMPSON_DEPTH as usize,
                    residual: abs_tol,
                })
            }
        }
    }
    Ok(unpack(n, &packed))
}

/// Observation nodes with quadrature weights and the log-density of every
/// member at every node, for integrals of the form `∫ g(p_1(x), .., p_n(x)) dx`.
#[derive(Debug, Clone)]
pub struct ObservationGrid {
    pub weights: Vec<f64>,
    /// `log_dens[t][i] = log p_i(x_t)`.
    pub log_dens: Vec<Vec<f64>>,
}

/// Discretizes the observation space shared by `members`: exact support for
/// discrete and Poisson members, half-width Gauss–Legendre panels otherwise.
pub fn observation_grid(members: &[Member], cfg: &QuadConfig) -> Result<ObservationGrid> {
    cfg.validate()?;
    let kind = common_kind(members)?;
    let (weights, log_dens) = match kind {
        ModelKind::Discrete => {
            let support = match &members[0] {
                Member::Discrete { pmf } => pmf.len(),
                _ => unreachable!("kind checked"),
            };
            let obs: Vec<Observation> = (0..support).map(Observation::Category).collect();
            let ld = log_density_table(members, &obs)?;
            (vec![1.0; support], ld)
        }
        ModelKind::Poisson => {
            let rate_max = members
                .iter()
                .map(|m| match m {
                    Member::Poisson { rate } => *rate,
                    _ => unreachable!("kind checked"),
                })
                .fold(0.0, f64::max);
            let x_max = cfg.poisson_tail.x_max(rate_max);
            let obs: Vec<Observation> = (0..=x_max).map(Observation::Count).collect();
            let ld = log_density_table(members, &obs)?;
            (vec![1.0; obs.len()], ld)
        }
        ModelKind::GaussianLoc | ModelKind::GaussianScale => {
            let domain = ContinuousDomain::new(members, cfg.domain_pad);
            let rule = GaussLegendre::new(GL_ORDER);
            let factor = domain.weight_factor();
            let mut weights = Vec::new();
            let mut log_dens = Vec::new();
            for (a, b) in domain.panels(1) {
                for (x, w) in rule.mapped(a, b) {
                    let mut lp = vec![0.0; members.len()];
                    domain.log_densities(x, &mut lp);
                    weights.push(factor * w);
                    log_dens.push(lp);
                }
            }
            (weights, log_dens)
        }
        ModelKind::GaussianLocMulti => {
            return Err(Error::Unsupported(
                "observation grid for multivariate Gaussian members".into(),
            ))
        }
    };
    Ok(ObservationGrid { weights, log_dens })
}

fn log_density_table(members: &[Member], obs: &[Observation]) -> Result<Vec<Vec<f64>>> {
    obs.iter()
        .map(|x| members.iter().map(|m| m.log_density(x)).collect())
        .collect()
}

/// Alternating row/column normalization of a strictly positive matrix.
/// With `symmetric`, the result is also symmetrized and re-projected until
/// both the symmetry and the stochastic residual are below `tol`.
pub fn sinkhorn_project(m: &SquareMatrix, tol: f64, max_iter: usize, symmetric: bool) -> Result<SquareMatrix> {
    let n = m.dim();
    if m.as_slice().iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::Validation("sinkhorn input must be strictly positive".into()));
    }
    let mut a = m.clone();
    let mut residual = a.stochastic_residual();
    for _ in 0..max_iter {
        if residual < tol && (!symmetric || a.symmetry_residual() == 0.0) {
            return Ok(a);
        }
        for (i, s) in a.row_sums().into_iter().enumerate() {
            for j in 0..n {
                a[(i, j)] /= s;
            }
        }
        for (j, s) in a.col_sums().into_iter().enumerate() {
            for i in 0..n {
                a[(i, j)] /= s;
            }
        }
        if symmetric {
            a = a.symmetrized();
        }
        residual = a.stochastic_residual();
    }
    if residual < tol && (!symmetric || a.symmetry_residual() == 0.0) {
        return Ok(a);
    }
    Err(Error::Convergence {
        iterations: max_iter,
        residual,
    })
}

/// `Tr(A) − 1`: the χ² mutual information of the uniform prior on the members.
pub fn trace_capacity_lb(a: &OverlapMatrix) -> f64 {
    a.entries.trace() - 1.0
}

/// Members `P_i = ε·δ_0 + (1−ε)·δ_i`, `i = 1..m−1`, on `m` categories.
pub fn discrete_spike_family(m: usize, eps: f64) -> Result<Vec<Member>> {
    if m < 2 || !(0.0..=1.0).contains(&eps) {
        return Err(Error::Validation(format!(
            "need m >= 2 and eps in [0,1], got m={m}, eps={eps}"
        )));
    }
    (1..m)
        .map(|i| {
            let mut pmf = vec![0.0; m];
            pmf[0] = eps;
            pmf[i] = 1.0 - eps;
            Member::discrete(pmf)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gl(means: &[f64]) -> Vec<Member> {
        means.iter().map(|&m| Member::gaussian_loc(m).unwrap()).collect()
    }

    #[test]
    fn spike_family_matches_closed_form() {
        let a = build_overlap(&discrete_spike_family(3, 0.2).unwrap(), &QuadConfig::default()).unwrap();
        assert_relative_eq!(a.entries[(0, 0)], 0.9, epsilon = 1e-15);
        assert_relative_eq!(a.entries[(0, 1)], 0.1, epsilon = 1e-15);
        assert_relative_eq!(trace_capacity_lb(&a), 0.8, epsilon = 1e-14);
    }

    #[test]
    fn two_category_flip() {
        let eps = 0.25;
        let members = vec![
            Member::discrete(vec![eps, 1.0 - eps]).unwrap(),
            Member::discrete(vec![1.0 - eps, eps]).unwrap(),
        ];
        let a = build_overlap(&members, &QuadConfig::default()).unwrap();
        assert_relative_eq!(a.entries[(0, 0)], 0.625, epsilon = 1e-15);
        assert_relative_eq!(a.entries[(1, 0)], 0.375, epsilon = 1e-15);
    }

    #[test]
    fn identical_members_give_flat_matrix() {
        for members in [gl(&[1.5; 4]), vec![Member::poisson(3.0).unwrap(); 3]] {
            let n = members.len();
            let a = build_overlap(&members, &QuadConfig::default()).unwrap();
            for x in a.entries.as_slice() {
                assert_relative_eq!(*x, 1.0 / n as f64, epsilon = 1e-13);
            }
            assert_relative_eq!(trace_capacity_lb(&a), 0.0, epsilon = 1e-12);
        }
        let a = build_overlap(&gl(&[0.0, 0.0]), &QuadConfig::default()).unwrap();
        assert_relative_eq!(a.entries[(0, 1)], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn single_member_is_one() {
        let a = build_overlap(&gl(&[3.0]), &QuadConfig::default()).unwrap();
        assert_eq!(a.entries, SquareMatrix::identity(1));
    }

    #[test]
    fn schemes_agree() {
        let members = gl(&[-1.0, 0.3, 2.0]);
        let fixed = build_overlap(&members, &QuadConfig::default()).unwrap();
        let cfg = QuadConfig {
            scheme: QuadScheme::AdaptiveSimpson,
            abs_tol: 1e-11,
            ..QuadConfig::default()
        };
        let simpson = build_overlap(&members, &cfg).unwrap();
        for (a, b) in fixed.entries.as_slice().iter().zip(simpson.entries.as_slice()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn scale_family_is_stochastic() {
        let members: Vec<Member> = [0.2, 1.0, 7.0]
            .iter()
            .map(|&s| Member::gaussian_scale(s).unwrap())
            .collect();
        let a = build_overlap(&members, &QuadConfig::default()).unwrap();
        assert!(a.row_sum_residual < 1e-12, "{}", a.row_sum_residual);
    }

    #[test]
    fn disjoint_supports_are_flagged() {
        let members = vec![
            Member::discrete(vec![1.0, 0.0]).unwrap(),
            Member::discrete(vec![0.0, 1.0]).unwrap(),
        ];
        let a = build_overlap(&members, &QuadConfig::default()).unwrap();
        assert_eq!(a.zero_entries, vec![(0, 1)]);
    }

    #[test]
    fn invalid_config_and_mixed_kinds() {
        let cfg = QuadConfig {
            domain_pad: 4.0,
            ..QuadConfig::default()
        };
        assert!(build_overlap(&gl(&[0.0, 1.0]), &cfg).is_err());
        let mixed = vec![Member::gaussian_loc(0.0).unwrap(), Member::poisson(1.0).unwrap()];
        assert!(matches!(
            build_overlap(&mixed, &QuadConfig::default()),
            Err(Error::MixedModels(..))
        ));
    }

    #[test]
    fn sinkhorn_examples() {
        let ones = SquareMatrix::filled(3, 1.0);
        let p = sinkhorn_project(&ones, 1e-14, 100, true).unwrap();
        for x in p.as_slice() {
            assert_relative_eq!(*x, 1.0 / 3.0, epsilon = 1e-15);
        }
        let ds = SquareMatrix::from_rows(&[vec![0.7, 0.3], vec![0.3, 0.7]]).unwrap();
        assert_eq!(sinkhorn_project(&ds, 1e-12, 10, true).unwrap(), ds);
        let m = SquareMatrix::from_fn(5, |i, j| 1.0 + ((i * 7 + j * 3) % 5) as f64);
        let p = sinkhorn_project(&m, 1e-12, 10_000, false).unwrap();
        assert!(p.stochastic_residual() < 1e-12);
        assert!(sinkhorn_project(&SquareMatrix::zeros(2), 1e-12, 10, false).is_err());
    }

    #[test]
    fn row_residual_surfaces_as_error() {
        let bad = SquareMatrix::from_rows(&[vec![0.6, 0.5], vec![0.5, 0.6]]).unwrap();
        assert!(matches!(
            OverlapMatrix::from_entries(bad),
            Err(Error::QuadratureFailure { .. })
        ));
    }
}
