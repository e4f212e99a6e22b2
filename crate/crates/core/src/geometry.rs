//! Rényi partition diameters, k-way expansion of the overlap graph, χ²
//! capacity brackets and the composite bound evaluators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{common_kind, renyi_half, Member};
use crate::linalg::SquareMatrix;
use crate::numeric::{ln_factorial, LogSumExp};
use crate::overlap::{build_overlap, observation_grid, ObservationGrid, OverlapMatrix, QuadConfig};
use crate::permanent::{log1p_chi2_from_overlap, RYSER_MAX_N};
use crate::spectrum::eigen_sym;

pub const BRUTE_PARTITION_MAX_N: usize = 12;
pub const EXPANSION_BUDGET: f64 = 2e8;
pub const UNIVERSAL_CONSTANT_LABEL: &str = "up to universal constant C";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    /// Block id of each member, in `0..k`.
    pub block_of: Vec<usize>,
    /// Number of nonempty blocks.
    pub k: usize,
    /// Largest intra-block pairwise Rényi-½ divergence.
    pub diameter: f64,
}

impl Partition {
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &b) in self.block_of.iter().enumerate() {
            out[b].push(i);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMethod {
    Dp1d,
    Brute,
}

fn pairwise_renyi(members: &[Member]) -> Result<SquareMatrix> {
    let n = members.len();
    let mut d = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in i + 1..n {
            let v = renyi_half(&members[i], &members[j])?;
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    Ok(d)
}

/// Recomputes the diameter of an assignment from the pairwise table.
fn assignment_diameter(d: &SquareMatrix, block_of: &[usize]) -> f64 {
    let n = block_of.len();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            if block_of[i] == block_of[j] {
                worst = worst.max(d[(i, j)]);
            }
        }
    }
    worst
}

/// Relabels blocks by first appearance so that ids are `0..k` without gaps.
fn canonical(block_of: &[usize]) -> (Vec<usize>, usize) {
    let mut map: Vec<Option<usize>> = vec![None; block_of.len() + 1];
    let mut next = 0;
    let out = block_of
        .iter()
        .map(|&b| {
            *map[b].get_or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect();
    (out, next)
}

/// Smallest achievable maximum intra-block Rényi-½ diameter over partitions
/// of `members` into at most `k` blocks, with a witness partition.
pub fn partition_diameter(members: &[Member], k: usize, method: PartitionMethod) -> Result<Partition> {
    common_kind(members)?;
    if k == 0 {
        return Err(Error::Validation("k must be >= 1".into()));
    }
    let n = members.len();
    let d = pairwise_renyi(members)?;
    let block_of = match method {
        PartitionMethod::Dp1d => dp1d(members, &d, k)?,
        PartitionMethod::Brute => {
            if n > BRUTE_PARTITION_MAX_N {
                return Err(Error::Capacity(format!(
                    "brute-force partitions limited to n <= {BRUTE_PARTITION_MAX_N}, got {n}"
                )));
            }
            brute_partition(&d, k)
        }
    };
    let (block_of, k) = canonical(&block_of);
    let diameter = assignment_diameter(&d, &block_of);
    Ok(Partition { block_of, k, diameter })
}

fn dp1d(members: &[Member], d: &SquareMatrix, k: usize) -> Result<Vec<usize>> {
    let n = members.len();
    let coords: Vec<f64> = members
        .iter()
        .map(|m| {
            m.ordering_coordinate()
                .ok_or_else(|| Error::Validation(format!("{} members have no 1D ordering", m.kind().name())))
        })
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| coords[a].total_cmp(&coords[b]).then(a.cmp(&b)));

    // Along the ordering the divergence grows with the gap, so a contiguous
    // block's diameter is the divergence between its end points.
    let greedy = |limit: f64| -> Vec<usize> {
        let mut block_of = vec![0; n];
        let mut block = 0;
        let mut start = order[0];
        for &idx in &order[1..] {
            if d[(start, idx)] > limit {
                block += 1;
                start = idx;
            }
            block_of[idx] = block;
        }
        block_of
    };
    let blocks_used = |b: &[usize]| b.iter().copied().max().map_or(0, |m| m + 1);

    let mut candidates: Vec<f64> = vec![0.0];
    for i in 0..n {
        for j in i + 1..n {
            candidates.push(d[(i, j)]);
        }
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let (mut lo, mut hi) = (0usize, candidates.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if blocks_used(&greedy(candidates[mid])) <= k {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(greedy(candidates[lo]))
}

fn brute_partition(d: &SquareMatrix, k: usize) -> Vec<usize> {
    let n = d.dim();
    if k >= n {
        return (0..n).collect();
    }
    struct Search<'a> {
        d: &'a SquareMatrix,
        k: usize,
        current: Vec<usize>,
        best: f64,
        best_assign: Vec<usize>,
    }
    impl Search<'_> {
        // Restricted-growth strings; `worst` is the diameter so far.
        fn go(&mut self, i: usize, used: usize, worst: f64) {
            let n = self.d.dim();
            if worst >= self.best {
                return;
            }
            if i == n {
                self.best = worst;
                self.best_assign = self.current.clone();
                return;
            }
            let limit = (used + 1).min(self.k);
            for b in 0..limit {
                let mut w = worst;
                for j in 0..i {
                    if self.current[j] == b {
                        w = w.max(self.d[(i, j)]);
                    }
                }
                self.current[i] = b;
                self.go(i + 1, used.max(b + 1), w);
            }
        }
    }
    let mut s = Search {
        d,
        k,
        current: vec![0; n],
        best: f64::INFINITY,
        best_assign: vec![0; n],
    };
    s.go(0, 0, 0.0);
    if s.best == f64::INFINITY {
        // every assignment has an infinite diameter
        return vec![0; n];
    }
    s.best_assign
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionResult {
    pub rho: f64,
    pub witness_sets: Vec<Vec<usize>>,
}

/// `φ(S) = w(E(S, Sᶜ)) / w(S)` over off-diagonal weights; `0/0` counts as 0.
pub fn conductance(a: &SquareMatrix, set: &[usize]) -> f64 {
    let n = a.dim();
    let mut inside = vec![false; n];
    for &u in set {
        inside[u] = true;
    }
    let (mut cut, mut vol) = (0.0, 0.0);
    for &u in set {
        for v in 0..n {
            if v == u {
                continue;
            }
            vol += a[(u, v)];
            if !inside[v] {
                cut += a[(u, v)];
            }
        }
    }
    if vol == 0.0 {
        0.0
    } else {
        cut / vol
    }
}

/// `ρ(k) = min over k disjoint nonempty sets of max_i φ(S_i)`, by exhaustive
/// search over assignments of vertices to `{unused, S_1, .., S_k}`.
pub fn kway_expansion(a: &SquareMatrix, k: usize) -> Result<ExpansionResult> {
    let n = a.dim();
    if k == 0 || k > n {
        return Err(Error::Validation(format!("k must lie in 1..={n}, got {k}")));
    }
    if ((k + 1) as f64).powi(n as i32) > EXPANSION_BUDGET {
        return Err(Error::Capacity(format!(
            "(k+1)^n = {}^{n} exceeds the expansion budget {EXPANSION_BUDGET:e}",
            k + 1
        )));
    }
    let phi: Vec<f64> = (0..1usize << n)
        .map(|mask| {
            let set: Vec<usize> = (0..n).filter(|&u| mask >> u & 1 == 1).collect();
            conductance(a, &set)
        })
        .collect();

    struct Search<'a> {
        phi: &'a [f64],
        n: usize,
        k: usize,
        masks: Vec<usize>,
        best: f64,
        best_masks: Vec<usize>,
    }
    impl Search<'_> {
        fn go(&mut self, v: usize, opened: usize) {
            if self.k - opened > self.n - v {
                return;
            }
            if v == self.n {
                let worst = self.masks.iter().map(|&m| self.phi[m]).fold(0.0, f64::max);
                if worst < self.best {
                    self.best = worst;
                    self.best_masks = self.masks.clone();
                }
                return;
            }
            self.go(v + 1, opened);
            // Sets are opened in index order, so a vertex may only start
            // the lowest-indexed empty set.
            let limit = (opened + 1).min(self.k);
            for s in 0..limit {
                self.masks[s] |= 1 << v;
                self.go(v + 1, opened.max(s + 1));
                self.masks[s] &= !(1 << v);
            }
        }
    }
    let mut s = Search {
        phi: &phi,
        n,
        k,
        masks: vec![0; k],
        best: f64::INFINITY,
        best_masks: Vec::new(),
    };
    s.go(0, 0);
    let witness_sets = s
        .best_masks
        .iter()
        .map(|&m| (0..n).filter(|&u| m >> u & 1 == 1).collect())
        .collect();
    Ok(ExpansionResult {
        rho: s.best,
        witness_sets,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheegerAudit {
    pub k: usize,
    pub lambda_k: f64,
    /// `(1 − λ_k)/2`.
    pub lhs: f64,
    pub rho_k: f64,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinatorialAudit {
    pub rho_5: f64,
    pub d1: f64,
    /// `¼ e^{−D₁}`.
    pub bound: f64,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityAudit {
    pub cheeger: CheegerAudit,
    pub combinatorial: Option<CombinatorialAudit>,
    /// `(1 − λ_{10k}) · log(5k) · e^{2 D_k}`, reported only.
    pub eigengap_ratio: Option<f64>,
    pub label: &'static str,
}

impl InequalityAudit {
    pub fn pass(&self) -> bool {
        self.cheeger.pass && self.combinatorial.as_ref().is_none_or(|c| c.pass)
    }
}

/// Higher-order Cheeger left inequality `(1 − λ_k)/2 ≤ ρ(k)` only.
pub fn cheeger_audit(a: &SquareMatrix, k: usize) -> Result<CheegerAudit> {
    let spec = eigen_sym(a)?;
    if k == 0 || k > a.dim() {
        return Err(Error::Validation(format!("k must lie in 1..={}, got {k}", a.dim())));
    }
    let lambda_k = spec.eigenvalues[k - 1];
    let lhs = 0.5 * (1.0 - lambda_k);
    let rho_k = kway_expansion(a, k)?.rho;
    Ok(CheegerAudit {
        k,
        lambda_k,
        lhs,
        rho_k,
        slack: rho_k - lhs,
        pass: lhs <= rho_k,
    })
}

fn diameter_any(members: &[Member], k: usize) -> Result<f64> {
    let method = if members.iter().all(|m| m.ordering_coordinate().is_some()) {
        PartitionMethod::Dp1d
    } else {
        PartitionMethod::Brute
    };
    Ok(partition_diameter(members, k, method)?.diameter)
}

/// Runs the constant-free inequalities on one overlap matrix. The `ρ(5) ≥
/// ¼e^{−D₁}` check runs when `k = 1` and `5 ≤ n ≤ 8`.
pub fn inequality_audit(a: &OverlapMatrix, members: &[Member], k: usize) -> Result<InequalityAudit> {
    let n = a.dim();
    if members.len() != n {
        return Err(Error::Validation(format!(
            "{} members for an {n}x{n} matrix",
            members.len()
        )));
    }
    let cheeger = cheeger_audit(&a.entries, k.max(2).min(n))?;
    let combinatorial = if k == 1 && (5..=8).contains(&n) {
        let rho_5 = kway_expansion(&a.entries, 5)?.rho;
        let d1 = diameter_any(members, 1)?;
        let bound = 0.25 * (-d1).exp();
        Some(CombinatorialAudit {
            rho_5,
            d1,
            bound,
            slack: rho_5 - bound,
            pass: rho_5 >= bound,
        })
    } else {
        None
    };
    let eigengap_ratio = if 10 * k <= n {
        let spec = eigen_sym(&a.entries)?;
        let dk = diameter_any(members, k)?;
        Some((1.0 - spec.eigenvalues[10 * k - 1]) * (5.0 * k as f64).ln() * (2.0 * dk).exp())
    } else {
        None
    };
    Ok(InequalityAudit {
        cheeger,
        combinatorial,
        eigengap_ratio,
        label: UNIVERSAL_CONSTANT_LABEL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorWeights {
    pub weights: Vec<f64>,
}

impl PriorWeights {
    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0 / n as f64; n],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityLower {
    /// Certified lower bound on the χ² capacity of any family containing the grid.
    pub value: f64,
    pub prior: PriorWeights,
    /// Value of the uniform prior (equals `Tr(A) − 1`).
    pub uniform_value: f64,
    pub iterations: usize,
    /// Objective after each accepted step, starting with the uniform prior.
    pub history: Vec<f64>,
}

/// `I_χ²(ρ) = Σ_i ρ_i ∫ p_i²/p_ρ − 1` and its gradient.
fn chi2_information(grid: &ObservationGrid, rho: &[f64]) -> (f64, Vec<f64>) {
    let n = rho.len();
    let ln_rho: Vec<f64> = rho.iter().map(|r| r.ln()).collect();
    let mut value = 0.0;
    let mut first = vec![0.0; n];
    let mut second = vec![0.0; n];
    for (w, lp) in grid.weights.iter().zip(&grid.log_dens) {
        let mut lse = LogSumExp::new();
        for i in 0..n {
            lse.push(ln_rho[i] + lp[i]);
        }
        let l_mix = lse.value();
        if l_mix == f64::NEG_INFINITY {
            continue;
        }
        // Σ_j ρ_j p_j² / p_ρ
        let mut num = 0.0;
        let mut ratio = vec![0.0; n];
        for i in 0..n {
            let r = (2.0 * lp[i] - l_mix).exp();
            ratio[i] = r;
            num += rho[i] * r;
        }
        value += w * num;
        for i in 0..n {
            first[i] += w * ratio[i];
            second[i] += w * (lp[i] - l_mix).exp() * num;
        }
    }
    let grad = first.iter().zip(&second).map(|(a, b)| a - b).collect();
    (value - 1.0, grad)
}

/// Multiplicative-weights ascent of the χ² information over priors on `grid`.
pub fn capacity_lower(grid: &[Member], iters: usize, tol: f64, cfg: &QuadConfig) -> Result<CapacityLower> {
    if grid.is_empty() {
        return Err(Error::Validation("capacity grid is empty".into()));
    }
    let n = grid.len();
    let obs = observation_grid(grid, cfg)?;
    let mut rho = PriorWeights::uniform(n).weights;
    let (mut value, mut grad) = chi2_information(&obs, &rho);
    let uniform_value = value;
    let mut history = vec![value];
    let mut step = 1.0;
    let mut iterations = 0;
    while iterations < iters && step > 1e-12 {
        iterations += 1;
        let gmax = grad.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut cand: Vec<f64> = rho
            .iter()
            .zip(&grad)
            .map(|(r, g)| r * (step * (g - gmax)).exp())
            .collect();
        let z: f64 = cand.iter().sum();
        cand.iter_mut().for_each(|c| *c /= z);
        let (v, g) = chi2_information(&obs, &cand);
        if v > value {
            let gain = v - value;
            rho = cand;
            value = v;
            grad = g;
            history.push(value);
            step *= 1.5;
            if gain < tol {
                break;
            }
        } else {
            step *= 0.5;
        }
    }
    Ok(CapacityLower {
        value: value.max(0.0),
        prior: PriorWeights { weights: rho },
        uniform_value,
        iterations,
        history,
    })
}

/// Families whose χ² capacity is bounded through a density-ratio supremum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CapacityDescriptor {
    /// An explicit finite set of members.
    Members(Vec<Member>),
    /// All pmfs on `m` categories with `p_1 ≥ eps`.
    DiscreteSimplex { m: usize, eps: f64 },
    /// `{N(θ, 1) : |θ| ≤ mu}`.
    GaussianLocBall { mu: f64 },
}

/// `sup_θ sup_x dP_θ/dQ − 1`: an upper bound on the χ² capacity.
pub fn capacity_upper_ratio(desc: &CapacityDescriptor, reference: &Member) -> Result<f64> {
    reference.validate()?;
    let sup = match desc {
        CapacityDescriptor::Members(members) => {
            let mut worst = 0.0f64;
            for m in members {
                m.validate()?;
                worst = worst.max(member_ratio_sup(m, reference)?);
            }
            worst
        }
        CapacityDescriptor::DiscreteSimplex { m, eps } => {
            let Member::Discrete { pmf: q } = reference else {
                return Err(Error::Validation("simplex family needs a discrete reference".into()));
            };
            if q.len() != *m || !(0.0..=1.0).contains(eps) {
                return Err(Error::Validation("reference support or eps out of range".into()));
            }
            let mut worst = ratio(1.0, q[0])?;
            for &qx in &q[1..] {
                worst = worst.max(ratio(1.0 - eps, qx)?);
            }
            worst
        }
        CapacityDescriptor::GaussianLocBall { mu } => {
            let Member::GaussianScale { sigma } = reference else {
                return Err(Error::Validation(
                    "Gaussian ball needs a centred Gaussian reference".into(),
                ));
            };
            gaussian_ratio_sup(*mu, *sigma)?
        }
    };
    Ok(sup - 1.0)
}

fn ratio(p: f64, q: f64) -> Result<f64> {
    if p == 0.0 {
        Ok(0.0)
    } else if q == 0.0 {
        Err(Error::Domain("density ratio is unbounded".into()))
    } else {
        Ok(p / q)
    }
}

/// `τ exp(θ²/(2(τ² − 1)))`, the supremum of `N(x; θ, 1)/N(x; 0, τ²)`.
fn gaussian_ratio_sup(theta: f64, tau: f64) -> Result<f64> {
    if tau <= 1.0 {
        return Err(Error::Domain(format!(
            "density ratio is unbounded for tau = {tau} <= 1"
        )));
    }
    Ok(tau * (theta * theta / (2.0 * (tau * tau - 1.0))).exp())
}

fn member_ratio_sup(m: &Member, reference: &Member) -> Result<f64> {
    if m == reference {
        return Ok(1.0);
    }
    match (m, reference) {
        (Member::Discrete { pmf: p }, Member::Discrete { pmf: q }) if p.len() == q.len() => {
            let mut worst = 0.0f64;
            for (a, b) in p.iter().zip(q) {
                worst = worst.max(ratio(*a, *b)?);
            }
            Ok(worst)
        }
        (Member::GaussianLoc { mean }, Member::GaussianScale { sigma }) => gaussian_ratio_sup(*mean, *sigma),
        _ => Err(Error::Unsupported(format!(
            "density-ratio supremum of {} against {}",
            m.kind().name(),
            reference.kind().name()
        ))),
    }
}

/// Best Gaussian-ball bound over a grid of reference scales `τ`.
pub fn gaussian_ball_capacity_upper(mu: f64, taus: &[f64]) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for &tau in taus.iter().filter(|&&t| t > 1.0) {
        let v = gaussian_ratio_sup(mu, tau)? - 1.0;
        if best.is_none_or(|(b, _)| v < b) {
            best = Some((v, tau));
        }
    }
    best.ok_or_else(|| Error::Domain("no reference scale above 1 in the grid".into()))
}

/// A bound value that is only meaningful up to an unknown multiplicative constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledBound {
    pub value: f64,
    pub label: &'static str,
}

/// `log₊(x) = log(max(x, e))`.
pub fn log_plus(x: f64) -> f64 {
    x.max(std::f64::consts::E).ln()
}

/// `Σ_{k ≤ ⌊cap⌋+1} D_k + (cap + 1)·log₊ log cap`.
pub fn bound_dim_independent(dk_schedule: &[f64], cap: f64) -> Result<LabelledBound> {
    if !(cap >= 0.0) {
        return Err(Error::Validation(format!("capacity must be >= 0, got {cap}")));
    }
    if dk_schedule.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Validation("D_k schedule must be nonincreasing".into()));
    }
    let terms = cap.floor() as usize + 1;
    if dk_schedule.len() < terms {
        return Err(Error::Validation(format!(
            "need {terms} D_k values, got {}",
            dk_schedule.len()
        )));
    }
    let head: f64 = dk_schedule[..terms].iter().sum();
    Ok(LabelledBound {
        value: head + (cap + 1.0) * log_plus(cap.ln()),
        label: UNIVERSAL_CONSTANT_LABEL,
    })
}

/// `((k−1)/2)·log(2π(n+k)/k) + Σ blocks`, with `k = blocks.len()`.
pub fn bound_dim_dependent(n: usize, blocks: &[f64]) -> Result<f64> {
    if n == 0 || blocks.is_empty() {
        return Err(Error::Validation("need n >= 1 and at least one block".into()));
    }
    if blocks.iter().any(|b| !(*b >= 0.0)) {
        return Err(Error::Validation("block certificates must be >= 0".into()));
    }
    let k = blocks.len() as f64;
    let dim = 0.5 * (k - 1.0) * (2.0 * std::f64::consts::PI * (n as f64 + k) / k).ln();
    Ok(dim + blocks.iter().sum::<f64>())
}

/// Minimizes [`bound_dim_dependent`] over `k = 1..=k_max`; returns `(value, k)`.
pub fn sweep_dim_dependent(
    n: usize,
    k_max: usize,
    mut certificates: impl FnMut(usize) -> Result<Vec<f64>>,
) -> Result<(f64, usize)> {
    let mut best = (f64::INFINITY, 1);
    for k in 1..=k_max {
        let blocks = certificates(k)?;
        if blocks.len() != k {
            return Err(Error::Validation(format!(
                "generator returned {} blocks for k={k}",
                blocks.len()
            )));
        }
        let v = bound_dim_dependent(n, &blocks)?;
        if v < best.0 {
            best = (v, k);
        }
    }
    Ok(best)
}

/// `log(1 + χ²)` of the block-label sequence `Z` with counts `h` under a
/// uniform arrangement versus i.i.d. labels with frequencies `h/n`.
pub fn types_log_term(h: &[usize]) -> f64 {
    let n: usize = h.iter().sum();
    let nf = n as f64;
    let ln_multinom = ln_factorial(n as u64) - h.iter().map(|&c| ln_factorial(c as u64)).sum::<f64>();
    let entropy_part: f64 = h
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| c as f64 * (c as f64 / nf).ln())
        .sum();
    -ln_multinom - entropy_part
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypesDecomposition {
    pub log_exact: f64,
    pub types_term: f64,
    pub dimension_term: f64,
    pub block_terms: Vec<f64>,
    /// `log_exact ≤ types_term + Σ block_terms`.
    pub holds: bool,
}

/// Checks `log(1+χ²(all)) ≤ log(1+χ²_Z) + Σ_blocks log(1+χ²(block))` for one
/// partition of the members.
pub fn types_decomposition(members: &[Member], partition: &Partition, cfg: &QuadConfig) -> Result<TypesDecomposition> {
    let n = members.len();
    if n > RYSER_MAX_N {
        return Err(Error::Capacity(format!("exact χ² needs n <= {RYSER_MAX_N}")));
    }
    let log_exact = log1p_chi2_from_overlap(&build_overlap(members, cfg)?)?;
    let blocks = partition.blocks();
    let mut block_terms = Vec::with_capacity(blocks.len());
    for b in &blocks {
        let sub: Vec<Member> = b.iter().map(|&i| members[i].clone()).collect();
        block_terms.push(log1p_chi2_from_overlap(&build_overlap(&sub, cfg)?)?.max(0.0));
    }
    let h: Vec<usize> = blocks.iter().map(|b| b.len()).collect();
    let types_term = types_log_term(&h);
    let k = blocks.len() as f64;
    let dimension_term = 0.5 * (k - 1.0) * (2.0 * std::f64::consts::PI * (n as f64 + k) / k).ln();
    let total = types_term + block_terms.iter().sum::<f64>();
    Ok(TypesDecomposition {
        log_exact,
        types_term,
        dimension_term,
        holds: log_exact <= total + 1e-12 * total.abs().max(1.0),
        block_terms,
    })
}
