//! Compound decision oracles for a permuted parameter vector, Monte Carlo
//! estimation of their regret gap, and numerical audits of the identities
//! and inequalities used to bound that gap.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{gaussian_log_pdf, poisson_log_pmf, Member, RngStream};
use crate::linalg::SquareMatrix;
use crate::numeric::{pairwise_sum, GaussLegendre, LogSumExp, NeumaierSum};
use crate::overlap::standard_poisson_cutoff;
use crate::permanent::{weighted_column_permanents, weighted_column_ratios};

pub const PI_ORACLE_MAX_N: usize = 25;
/// Largest tolerated fraction of Monte Carlo samples with a degenerate likelihood.
pub const MAX_ABORT_FRACTION: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompoundModel {
    GaussianLoc,
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompoundInstance {
    pub model: CompoundModel,
    pub theta: Vec<f64>,
}

impl CompoundInstance {
    pub fn new(model: CompoundModel, theta: Vec<f64>) -> Result<Self> {
        let inst = Self { model, theta };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.is_empty() {
            return Err(Error::Validation("compound instance needs n >= 1".into()));
        }
        for &t in &self.theta {
            let ok = match self.model {
                CompoundModel::GaussianLoc => t.is_finite(),
                CompoundModel::Poisson => t.is_finite() && t >= 0.0,
            };
            if !ok {
                return Err(Error::InvalidMember(format!(
                    "parameter {t} invalid for {:?}",
                    self.model
                )));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }

    pub fn member(&self, theta: f64) -> Member {
        match self.model {
            CompoundModel::GaussianLoc => Member::GaussianLoc { mean: theta },
            CompoundModel::Poisson => Member::Poisson { rate: theta },
        }
    }

    fn log_density(&self, theta: f64, x: f64) -> f64 {
        match self.model {
            CompoundModel::GaussianLoc => gaussian_log_pdf(x, theta),
            CompoundModel::Poisson => poisson_log_pmf(theta, x as u64),
        }
    }

    fn check_observations(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::Validation(format!(
                "{} observations for n = {}",
                x.len(),
                self.n()
            )));
        }
        for &v in x {
            let ok = match self.model {
                CompoundModel::GaussianLoc => v.is_finite(),
                CompoundModel::Poisson => v >= 0.0 && v.fract() == 0.0 && v < 9.0e15,
            };
            if !ok {
                return Err(Error::IncompatibleObservation {
                    model: match self.model {
                        CompoundModel::GaussianLoc => "gaussian_loc",
                        CompoundModel::Poisson => "poisson",
                    },
                    observation: format!("{v}"),
                });
            }
        }
        Ok(())
    }

    /// Draws `X_i ∼ P_{θ_{π(i)}}` for a uniform permutation `π`; returns the
    /// permuted parameters and the observations.
    pub fn sample_postulated(&self, rng: &mut RngStream) -> (Vec<f64>, Vec<f64>) {
        let perm = rng.permutation(self.n());
        let theta: Vec<f64> = perm.iter().map(|&k| self.theta[k]).collect();
        let x = theta
            .iter()
            .map(|&t| match self.model {
                CompoundModel::GaussianLoc => t + rng.standard_normal(),
                CompoundModel::Poisson => rng.poisson(t) as f64,
            })
            .collect();
        (theta, x)
    }

    fn theta_range(&self) -> (f64, f64) {
        let lo = self.theta.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// Posterior weights of `θ_k` given the single observation `x` under the
/// empirical prior.
fn separable_weights(inst: &CompoundInstance, x: f64) -> Result<Vec<f64>> {
    let lp: Vec<f64> = inst.theta.iter().map(|&t| inst.log_density(t, x)).collect();
    let mut lse = LogSumExp::new();
    for &l in &lp {
        lse.push(l);
    }
    let z = lse.value();
    if z == f64::NEG_INFINITY {
        return Err(Error::DegenerateLikelihood(format!(
            "every parameter has zero likelihood at x = {x}"
        )));
    }
    Ok(lp.iter().map(|l| (l - z).exp()).collect())
}

fn weighted_mean(w: &[f64], v: &[f64]) -> f64 {
    let mut num = NeumaierSum::new();
    let mut den = NeumaierSum::new();
    for (a, b) in w.iter().zip(v) {
        num.add(a * b);
        den.add(*a);
    }
    num.total() / den.total()
}

/// Coordinatewise posterior mean under the empirical prior `G_n`.
pub fn separable_oracle(inst: &CompoundInstance, x: &[f64]) -> Result<Vec<f64>> {
    inst.validate()?;
    inst.check_observations(x)?;
    x.iter()
        .map(|&xi| Ok(weighted_mean(&separable_weights(inst, xi)?, &inst.theta)))
        .collect()
}

/// Likelihood matrix `M[k][j] = f_{θ_k}(x_j)`, each column divided by its
/// largest entry (the permanent ratios are unchanged by column scaling).
fn likelihood_matrix(inst: &CompoundInstance, x: &[f64]) -> Result<SquareMatrix> {
    let n = inst.n();
    let mut m = SquareMatrix::zeros(n);
    for (j, &xj) in x.iter().enumerate() {
        let col: Vec<f64> = inst.theta.iter().map(|&t| inst.log_density(t, xj)).collect();
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::DegenerateLikelihood(format!(
                "every parameter has zero likelihood at x = {xj}"
            )));
        }
        for (k, l) in col.iter().enumerate() {
            m[(k, j)] = (l - max).exp();
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEval {
    pub sep: Vec<f64>,
    pub pi: Vec<f64>,
    /// Posterior weights of `θ̃_1 = θ_k` given all observations.
    pub posterior_first: Vec<f64>,
}

/// PI oracle coordinates via weighted column permanents. Weights are shifted
/// to `θ_k − min θ ≥ 0` so the numerators carry no cancellation.
fn pi_coordinates(inst: &CompoundInstance, m: &SquareMatrix) -> Result<Vec<f64>> {
    let (lo, hi) = inst.theta_range();
    let shifted: Vec<f64> = inst.theta.iter().map(|t| t - lo).collect();
    let (_, ratios) = weighted_column_ratios(m, &shifted)?;
    let ratios = ratios.ok_or_else(|| Error::DegenerateLikelihood("every permutation has zero likelihood".into()))?;
    Ok(ratios.iter().map(|r| (lo + r.max(0.0)).clamp(lo, hi)).collect())
}

/// Separable and permutation-invariant oracles at one observation vector.
pub fn pi_oracle(inst: &CompoundInstance, x: &[f64]) -> Result<OracleEval> {
    inst.validate()?;
    inst.check_observations(x)?;
    let n = inst.n();
    if n > PI_ORACLE_MAX_N {
        return Err(Error::Capacity(format!(
            "PI oracle limited to n <= {PI_ORACLE_MAX_N}, got {n}"
        )));
    }
    let sep = separable_oracle(inst, x)?;
    let m = likelihood_matrix(inst, x)?;
    let pi = pi_coordinates(inst, &m)?;
    let mut jobs = vec![vec![1.0; n]];
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        jobs.push(e);
    }
    let vals = weighted_column_permanents(&m, 0, &jobs)?;
    if vals[0].is_zero() {
        return Err(Error::DegenerateLikelihood(
            "every permutation has zero likelihood".into(),
        ));
    }
    let raw: Vec<f64> = vals[1..].iter().map(|v| v.ratio(&vals[0]).max(0.0)).collect();
    let total: f64 = raw.iter().sum();
    let posterior_first = raw.iter().map(|r| r / total).collect();
    Ok(OracleEval {
        sep,
        pi,
        posterior_first,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
    pub seed: u64,
    /// Samples dropped because the likelihood was degenerate.
    pub aborted: usize,
}

/// Per-sample quantities shared by the gap estimate and the orthogonality check.
struct SampleOutcome {
    /// `n (sep_1 − pi_1)²`.
    gap: f64,
    /// `Σ_i (θ̃_i − sep_i)² − (θ̃_i − pi_i)²`.
    mse_diff: f64,
}

fn draw_sample(inst: &CompoundInstance, seed: u64, index: u64, full: bool) -> Result<SampleOutcome> {
    let mut rng = RngStream::substream(seed, index);
    let (theta, x) = inst.sample_postulated(&mut rng);
    let n = inst.n();
    let m = likelihood_matrix(inst, &x)?;
    let pi = pi_coordinates(inst, &m)?;
    let coords = if full { n } else { 1 };
    let mut sep = Vec::with_capacity(coords);
    for &xi in &x[..coords] {
        sep.push(weighted_mean(&separable_weights(inst, xi)?, &inst.theta));
    }
    let d = sep[0] - pi[0];
    let mut mse = NeumaierSum::new();
    if full {
        for i in 0..n {
            let a = theta[i] - sep[i];
            let b = theta[i] - pi[i];
            mse.add(a * a - b * b);
        }
    }
    Ok(SampleOutcome {
        gap: n as f64 * d * d,
        mse_diff: mse.total(),
    })
}

fn run_samples(inst: &CompoundInstance, samples: usize, seed: u64, full: bool) -> Result<(Vec<SampleOutcome>, usize)> {
    inst.validate()?;
    if samples < 2 {
        return Err(Error::Validation("need at least 2 Monte Carlo samples".into()));
    }
    if inst.n() > PI_ORACLE_MAX_N {
        return Err(Error::Capacity(format!("PI oracle limited to n <= {PI_ORACLE_MAX_N}")));
    }
    let outcomes: Vec<Result<SampleOutcome>> = (0..samples as u64)
        .into_par_iter()
        .map(|s| draw_sample(inst, seed, s, full))
        .collect();
    let mut kept = Vec::with_capacity(samples);
    let mut aborted = 0;
    for o in outcomes {
        match o {
            Ok(v) => kept.push(v),
            Err(Error::DegenerateLikelihood(_)) => aborted += 1,
            Err(e) => return Err(e),
        }
    }
    if aborted as f64 > MAX_ABORT_FRACTION * samples as f64 || kept.len() < 2 {
        return Err(Error::DegenerateLikelihood(format!(
            "{aborted} of {samples} samples aborted"
        )));
    }
    if aborted > 0 {
        log::warn!("{aborted} of {samples} samples aborted on degenerate likelihoods");
    }
    Ok((kept, aborted))
}

/// Mean and standard error (sample std with `N − 1`, over `√N`).
fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo estimate of `n E[(E[θ̃₁|X₁] − E[θ̃₁|Xⁿ])²]` in the postulated model.
pub fn regret_gap_mc(inst: &CompoundInstance, samples: usize, seed: u64) -> Result<GapEstimate> {
    let (outcomes, aborted) = run_samples(inst, samples, seed, false)?;
    let gaps: Vec<f64> = outcomes.iter().map(|o| o.gap).collect();
    let (mean, std_error) = mean_and_se(&gaps);
    Ok(GapEstimate {
        mean,
        std_error,
        samples: gaps.len(),
        seed,
        aborted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalityCheck {
    /// `MSE(θ̂ˢ) − MSE(θ̂ᴾᴵ)`.
    pub lhs: f64,
    /// Regret gap estimate from the same draws.
    pub rhs: f64,
    /// Standard error of the paired difference.
    pub combined_se: f64,
    pub samples: usize,
    pub pass: bool,
}

/// Compares both sides of the orthogonality relation on common draws.
pub fn orthogonality_check(inst: &CompoundInstance, samples: usize, seed: u64) -> Result<OrthogonalityCheck> {
    let (outcomes, _) = run_samples(inst, samples, seed, true)?;
    let lhs_v: Vec<f64> = outcomes.iter().map(|o| o.mse_diff).collect();
    let rhs_v: Vec<f64> = outcomes.iter().map(|o| o.gap).collect();
    let diff: Vec<f64> = outcomes.iter().map(|o| o.mse_diff - o.gap).collect();
    let (lhs, _) = mean_and_se(&lhs_v);
    let (rhs, _) = mean_and_se(&rhs_v);
    let (_, combined_se) = mean_and_se(&diff);
    Ok(OrthogonalityCheck {
        lhs,
        rhs,
        combined_se,
        samples: outcomes.len(),
        pass: (lhs - rhs).abs() <= 4.0 * combined_se,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpCheck {
    /// `E[θ̃₁|X₁] − E[θ̃₁|Xⁿ]`.
    pub theta_gap: f64,
    /// `E[Z₁|X₁] − E[Z₁|Xⁿ]` through the structural conditional mean.
    pub z_gap_structural: f64,
    /// The same difference from direct integration over `z`.
    pub z_gap_direct: f64,
    pub residual_direct: f64,
    pub residual_route: f64,
}

impl InterpCheck {
    pub fn pass(&self, tol: f64) -> bool {
        self.residual_direct < tol && self.residual_route < tol
    }
}

/// Half-noise interpolation: Gaussian `Z = θ + N(0,½)`, `X = Z + N(0,½)`,
/// so `E[θ̃₁|·] difference = 2·E[Z₁|·] difference`; Poisson `Z ∼ Poi(2θ)`,
/// `X ∼ Bin(Z,½)`, with factor 1.
pub fn interp_identity_check(inst: &CompoundInstance, x: &[f64]) -> Result<InterpCheck> {
    let eval = pi_oracle(inst, x)?;
    let sep_w = separable_weights(inst, x[0])?;
    let theta_gap = eval.sep[0] - eval.pi[0];
    let x1 = x[0];
    let (factor, z_given_x1, z_given_all, structural) = match inst.model {
        CompoundModel::GaussianLoc => {
            let rule = GaussLegendre::new(20);
            let z1 = gaussian_z_mean(&rule, &inst.theta, &sep_w, x1)?;
            let zn = gaussian_z_mean(&rule, &inst.theta, &eval.posterior_first, x1)?;
            let s = (0.5 * x1 + 0.5 * eval.sep[0]) - (0.5 * x1 + 0.5 * eval.pi[0]);
            (2.0, z1, zn, s)
        }
        CompoundModel::Poisson => {
            let (_, hi) = inst.theta_range();
            let z1 = poisson_z_mean(&inst.theta, &sep_w, x1, hi);
            let zn = poisson_z_mean(&inst.theta, &eval.posterior_first, x1, hi);
            let s = (x1 + eval.sep[0]) - (x1 + eval.pi[0]);
            (1.0, z1, zn, s)
        }
    };
    let z_gap_direct = z_given_x1 - z_given_all;
    Ok(InterpCheck {
        theta_gap,
        z_gap_structural: structural,
        z_gap_direct,
        residual_direct: (theta_gap - factor * structural).abs(),
        residual_route: (theta_gap - factor * z_gap_direct).abs(),
    })
}

/// `∫ z Σ_k w_k N(z; (θ_k + x)/2, 1/4) dz` by composite Gauss–Legendre.
fn gaussian_z_mean(rule: &GaussLegendre, theta: &[f64], w: &[f64], x: f64) -> Result<f64> {
    let means: Vec<f64> = theta.iter().map(|t| 0.5 * (t + x)).collect();
    let lo = means.iter().copied().fold(f64::INFINITY, f64::min) - 6.0;
    let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 6.0;
    let panels = ((hi - lo) / 0.25).ceil() as usize;
    let width = (hi - lo) / panels as f64;
    let ln_w: Vec<f64> = w.iter().map(|v| v.ln()).collect();
    let mut mass = NeumaierSum::new();
    let mut first = NeumaierSum::new();
    for p in 0..panels {
        let a = lo + width * p as f64;
        for (z, q) in rule.mapped(a, a + width) {
            let mut dens = 0.0;
            for (m, lw) in means.iter().zip(&ln_w) {
                // N(z; m, 1/4): sd 1/2
                let u = 2.0 * (z - m);
                dens += (lw - 0.5 * u * u + (2.0f64).ln() - crate::numeric::HALF_LN_2PI).exp();
            }
            mass.add(q * dens);
            first.add(q * z * dens);
        }
    }
    let total = mass.total();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::QuadratureFailure {
            residual: (total - 1.0).abs(),
        });
    }
    Ok(first.total() / total)
}

/// `Σ_z z Σ_k w_k Poi(z − x; θ_k)`, truncated at
/// `z ≤ x + ⌈2θ_max + 12√(2θ_max + 1) + 40⌉`.
fn poisson_z_mean(theta: &[f64], w: &[f64], x: f64, theta_max: f64) -> f64 {
    let cutoff = standard_poisson_cutoff(2.0 * theta_max);
    let mut mass = NeumaierSum::new();
    let mut first = NeumaierSum::new();
    for extra in 0..=cutoff {
        let z = x + extra as f64;
        let mut p = 0.0;
        for (t, wk) in theta.iter().zip(w) {
            p += wk * poisson_log_pmf(*t, extra).exp();
        }
        mass.add(p);
        first.add(z * p);
    }
    first.total() / mass.total()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub kl: f64,
    pub pass: bool,
}

/// `(E_μ X − E_ν X)² ≤ 2h(h+2)·KL(μ‖ν)` for a Poisson mixture `ν` with
/// mixing atoms in `[0, h]` and a pmf `μ` on `{0, 1, ..}` with mean in `[0, h]`.
pub fn transportation_check(h: f64, mixing: &[(f64, f64)], mu: &[f64]) -> Result<TransportCheck> {
    if !(h.is_finite() && h >= 0.0) {
        return Err(Error::Validation(format!("h must be finite and >= 0, got {h}")));
    }
    if mixing.is_empty() || mixing.iter().any(|&(a, w)| !(0.0..=h).contains(&a) || !(w >= 0.0)) {
        return Err(Error::Precondition(
            "mixing atoms must lie in [0, h] with nonnegative weights".into(),
        ));
    }
    let wsum: f64 = mixing.iter().map(|p| p.1).sum();
    if (wsum - 1.0).abs() > 1e-12 {
        return Err(Error::Validation(format!("mixing weights sum to {wsum}")));
    }
    if mu.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (mu.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(Error::Validation("mu must be a pmf".into()));
    }
    let len = mu.len().max(standard_poisson_cutoff(h) as usize + 1);
    let nu: Vec<f64> = (0..len as u64)
        .map(|x| mixing.iter().map(|&(a, w)| w * poisson_log_pmf(a, x).exp()).sum())
        .collect();
    let mean = |p: &[f64]| {
        let mut s = NeumaierSum::new();
        for (x, v) in p.iter().enumerate() {
            s.add(x as f64 * v);
        }
        s.total()
    };
    let mean_mu = mean(mu);
    if !(0.0..=h).contains(&mean_mu) {
        return Err(Error::Precondition(format!(
            "mean of mu ({mean_mu}) lies outside [0, {h}]"
        )));
    }
    let mean_nu = mean(&nu);
    let mut kl = NeumaierSum::new();
    for (x, &p) in mu.iter().enumerate() {
        if p > 0.0 {
            if nu[x] == 0.0 {
                kl.add(f64::INFINITY);
            } else {
                kl.add(p * (p / nu[x]).ln());
            }
        }
    }
    let kl = kl.total().max(0.0);
    let lhs = (mean_mu - mean_nu).powi(2);
    let rhs = 2.0 * h * (h + 2.0) * kl;
    Ok(TransportCheck {
        lhs,
        rhs,
        kl,
        pass: lhs <= rhs + 1e-12,
    })
}

/// Gaussian mixture `Σ_j w_j N(c_j, s_j²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub means: Vec<f64>,
    pub weights: Vec<f64>,
    pub sds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltCheck {
    pub max_var: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Variance of every exponential tilt `T_t ν ∝ e^{tz} ν(dz)` of a Gaussian
/// mixture with a common component sd `σ`, against `h²/16 + σ²`. The tilt of
/// `N(c, σ²)` is `N(c + tσ², σ²)` reweighted by `e^{tc}`, so the variance is
/// exact: `σ² + Var_{w'}(c)`.
pub fn tilt_variance_check(mixture: &GaussianMixture, h: f64, t_grid: &[f64]) -> Result<TiltCheck> {
    let GaussianMixture { means, weights, sds } = mixture;
    if means.is_empty() || means.len() != weights.len() || means.len() != sds.len() {
        return Err(Error::Validation(
            "mixture vectors must be nonempty and of equal length".into(),
        ));
    }
    let sigma = sds[0];
    if !(sigma > 0.0) || sds.iter().any(|&s| s != sigma) {
        return Err(Error::Precondition(
            "tilt closed form needs equal component variances".into(),
        ));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Validation(
            "mixture weights must be nonnegative with positive mass".into(),
        ));
    }
    let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo > 0.5 * h + 1e-12 {
        return Err(Error::Precondition(format!(
            "component means spread {} exceeds h/2 = {}",
            hi - lo,
            0.5 * h
        )));
    }
    let bound = h * h / 16.0 + sigma * sigma;
    let mut max_var = 0.0f64;
    for &t in t_grid {
        let logs: Vec<f64> = weights.iter().zip(means).map(|(w, c)| w.ln() + t * c).collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let z: f64 = w.iter().sum();
        let m: f64 = w.iter().zip(means).map(|(a, c)| a * c).sum::<f64>() / z;
        let v: f64 = w.iter().zip(means).map(|(a, c)| a * (c - m) * (c - m)).sum::<f64>() / z;
        max_var = max_var.max(sigma * sigma + v);
    }
    Ok(TiltCheck {
        max_var,
        bound,
        pass: max_var <= bound + 1e-12,
    })
}

/// Posterior of `Z₁` given `X₁ = x` in the Gaussian half-noise model under
/// the empirical prior on `theta`: components `N((θ_k + x)/2, 1/4)`.
pub fn half_noise_posterior(theta: &[f64], x: f64) -> Result<GaussianMixture> {
    let inst = CompoundInstance::new(CompoundModel::GaussianLoc, theta.to_vec())?;
    let weights = separable_weights(&inst, x)?;
    Ok(GaussianMixture {
        means: theta.iter().map(|t| 0.5 * (t + x)).collect(),
        weights,
        sds: vec![0.5; theta.len()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gauss(theta: &[f64]) -> CompoundInstance {
        CompoundInstance::new(CompoundModel::GaussianLoc, theta.to_vec()).unwrap()
    }

    #[test]
    fn separable_examples() {
        let inst = gauss(&[1.5; 3]);
        assert_eq!(separable_oracle(&inst, &[0.0, 4.0, -2.0]).unwrap(), vec![1.5; 3]);
        let mu = 1.7;
        let inst = gauss(&[0.0, mu]);
        let s = separable_oracle(&inst, &[mu / 2.0, 0.0]).unwrap();
        assert_relative_eq!(s[0], mu / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_poisson_likelihood() {
        let inst = CompoundInstance::new(CompoundModel::Poisson, vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            separable_oracle(&inst, &[1.0, 0.0]),
            Err(Error::DegenerateLikelihood(_))
        ));
        assert!(separable_oracle(&inst, &[0.5, 0.0]).is_err());
    }

    #[test]
    fn pi_oracle_trivial_cases() {
        let one = gauss(&[0.7]);
        let e = pi_oracle(&one, &[3.0]).unwrap();
        assert_eq!(e.pi, vec![0.7]);
        assert_eq!(e.sep, vec![0.7]);
        let flat = gauss(&[2.0; 4]);
        let e = pi_oracle(&flat, &[0.0, 1.0, 2.0, 3.0]).unwrap();
        for (p, s) in e.pi.iter().zip(&e.sep) {
            assert_relative_eq!(*p, 2.0, epsilon = 1e-14);
            assert_relative_eq!(*s, 2.0, epsilon = 1e-14);
        }
        assert_relative_eq!(e.posterior_first.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pi_first_coordinate_is_posterior_mean() {
        let inst = gauss(&[-1.0, 0.2, 1.4, 3.0]);
        let e = pi_oracle(&inst, &[0.3, -0.5, 2.2, 1.0]).unwrap();
        let via_post: f64 = e.posterior_first.iter().zip(&inst.theta).map(|(w, t)| w * t).sum();
        assert_relative_eq!(via_post, e.pi[0], epsilon = 1e-12);
    }

    #[test]
    fn equal_thetas_give_zero_gap() {
        let g = regret_gap_mc(&gauss(&[0.4; 3]), 200, 1).unwrap();
        assert!(g.mean < 1e-25);
        let o = orthogonality_check(&gauss(&[0.4; 3]), 100, 1).unwrap();
        assert!(o.pass);
        assert!(o.lhs.abs() < 1e-20 && o.rhs < 1e-25);
    }

    #[test]
    fn gap_is_seed_deterministic() {
        let inst = gauss(&[-1.0, 1.0]);
        let a = regret_gap_mc(&inst, 500, 42).unwrap();
        let b = regret_gap_mc(&inst, 500, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.mean > 0.0);
    }

    #[test]
    fn interp_flat_instance() {
        let c = interp_identity_check(&gauss(&[0.3; 3]), &[1.0, -1.0, 0.0]).unwrap();
        assert!(c.residual_direct < 1e-15 && c.residual_route < 1e-12);
        let p = CompoundInstance::new(CompoundModel::Poisson, vec![2.0; 2]).unwrap();
        let c = interp_identity_check(&p, &[3.0, 0.0]).unwrap();
        assert!(c.pass(1e-12));
    }

    #[test]
    fn transport_examples() {
        let same = transportation_check(2.0, &[(1.0, 1.0)], &{
            let nu: Vec<f64> = (0..60u64).map(|x| poisson_log_pmf(1.0, x).exp()).collect();
            let s: f64 = nu.iter().sum();
            nu.iter().map(|v| v / s).collect::<Vec<_>>()
        })
        .unwrap();
        assert!(same.pass);
        assert!(same.lhs < 1e-20);
        let point = transportation_check(2.0, &[(1.0, 1.0)], &[0.0, 1.0]).unwrap();
        assert!(point.pass && point.kl.is_finite());
        assert!(matches!(
            transportation_check(1.0, &[(1.0, 1.0)], &[0.0, 0.0, 1.0]),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn tilt_examples() {
        let single = GaussianMixture {
            means: vec![0.3],
            weights: vec![1.0],
            sds: vec![0.5],
        };
        let c = tilt_variance_check(&single, 0.0, &[-3.0, 0.0, 3.0]).unwrap();
        assert_relative_eq!(c.max_var, 0.25, epsilon = 1e-15);
        assert!(c.pass);
        let h = 4.0;
        let two = GaussianMixture {
            means: vec![-h / 4.0, h / 4.0],
            weights: vec![0.5, 0.5],
            sds: vec![0.5, 0.5],
        };
        let grid: Vec<f64> = (0..=200).map(|i| -10.0 + 0.1 * i as f64).collect();
        let c = tilt_variance_check(&two, h, &grid).unwrap();
        assert!(c.pass);
        assert_relative_eq!(c.max_var, c.bound, epsilon = 1e-12);
        let uneven = GaussianMixture {
            sds: vec![0.5, 0.6],
            ..two
        };
        assert!(matches!(
            tilt_variance_check(&uneven, h, &grid),
            Err(Error::Precondition(_))
        ));
    }
}
