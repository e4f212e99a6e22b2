//! Parametric families: densities, seeded sampling and closed-form pairwise
//! divergences.
//!
//! Densities are always evaluated in the log domain first so that location
//! parameters far in the tails (|θ| up to ~40) do not underflow before they
//! are combined.

use std::f64::consts::LN_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson as PoissonDist, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{ln_factorial, HALF_LN_2PI};

const PMF_SUM_TOL: f64 = 1e-12;

/// One distribution from a parametric family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Member {
    /// `N(mean, 1)`.
    GaussianLoc { mean: f64 },
    /// `Poi(rate)`; `rate = 0` is the point mass at zero.
    Poisson { rate: f64 },
    /// Categorical distribution on `{0, .., pmf.len() - 1}`.
    Discrete { pmf: Vec<f64> },
    /// `N(0, sigma²)`.
    GaussianScale { sigma: f64 },
    /// `N(mean, I_d)`.
    GaussianLocMulti { mean: Vec<f64> },
}

/// The kind of a [`Member`], without its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    GaussianLoc,
    Poisson,
    Discrete,
    GaussianScale,
    GaussianLocMulti,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::GaussianLoc => "gaussian_loc",
            ModelKind::Poisson => "poisson",
            ModelKind::Discrete => "discrete",
            ModelKind::GaussianScale => "gaussian_scale",
            ModelKind::GaussianLocMulti => "gaussian_loc_multi",
        }
    }
}

/// A single observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Observation {
    Real(f64),
    Count(u64),
    Category(usize),
    Vector(Vec<f64>),
}

impl Member {
    pub fn gaussian_loc(mean: f64) -> Result<Self> {
        Self::GaussianLoc { mean }.validated()
    }

    pub fn poisson(rate: f64) -> Result<Self> {
        Self::Poisson { rate }.validated()
    }

    pub fn discrete(pmf: Vec<f64>) -> Result<Self> {
        Self::Discrete { pmf }.validated()
    }

    pub fn gaussian_scale(sigma: f64) -> Result<Self> {
        Self::GaussianScale { sigma }.validated()
    }

    pub fn gaussian_loc_multi(mean: Vec<f64>) -> Result<Self> {
        Self::GaussianLocMulti { mean }.validated()
    }

    fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Member::GaussianLoc { mean } if !mean.is_finite() => {
                Err(Error::InvalidMember(format!("non-finite mean {mean}")))
            }
            Member::Poisson { rate } if !(rate.is_finite() && *rate >= 0.0) => {
                Err(Error::InvalidMember(format!("Poisson rate must be >= 0, got {rate}")))
            }
            Member::GaussianScale { sigma } if !(sigma.is_finite() && *sigma > 0.0) => {
                Err(Error::InvalidMember(format!("sigma must be > 0, got {sigma}")))
            }
            Member::Discrete { pmf } => {
                if pmf.is_empty() {
                    return Err(Error::InvalidMember("empty pmf".into()));
                }
                if pmf.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return Err(Error::InvalidMember("pmf entries must be >= 0".into()));
                }
                let s: f64 = pmf.iter().sum();
                if (s - 1.0).abs() > PMF_SUM_TOL {
                    return Err(Error::InvalidMember(format!("pmf sums to {s}, not 1")));
                }
                Ok(())
            }
            Member::GaussianLocMulti { mean } => {
                if mean.is_empty() || mean.iter().any(|m| !m.is_finite()) {
                    return Err(Error::InvalidMember("mean vector must be finite and nonempty".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Member::GaussianLoc { .. } => ModelKind::GaussianLoc,
            Member::Poisson { .. } => ModelKind::Poisson,
            Member::Discrete { .. } => ModelKind::Discrete,
            Member::GaussianScale { .. } => ModelKind::GaussianScale,
            Member::GaussianLocMulti { .. } => ModelKind::GaussianLocMulti,
        }
    }

    /// Coordinate along which the family is totally ordered and along which
    /// `renyi_half` is monotone: θ, √λ or log σ.
    pub fn ordering_coordinate(&self) -> Option<f64> {
        match self {
            Member::GaussianLoc { mean } => Some(*mean),
            Member::Poisson { rate } => Some(rate.sqrt()),
            Member::GaussianScale { sigma } => Some(sigma.ln()),
            _ => None,
        }
    }

    pub fn log_density(&self, x: &Observation) -> Result<f64> {
        match (self, x) {
            (Member::GaussianLoc { mean }, Observation::Real(v)) => {
                let d = v - mean;
                Ok(-0.5 * d * d - HALF_LN_2PI)
            }
            (Member::Poisson { rate }, Observation::Count(k)) => Ok(poisson_log_pmf(*rate, *k)),
            (Member::Discrete { pmf }, Observation::Category(c)) => match pmf.get(*c) {
                Some(p) => Ok(p.ln()),
                None => Err(self.incompatible(x)),
            },
            (Member::GaussianScale { sigma }, Observation::Real(v)) => {
                let z = v / sigma;
                Ok(-0.5 * z * z - sigma.ln() - HALF_LN_2PI)
            }
            (Member::GaussianLocMulti { mean }, Observation::Vector(v)) if v.len() == mean.len() => {
                let sq: f64 = v.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
                Ok(-0.5 * sq - mean.len() as f64 * HALF_LN_2PI)
            }
            _ => Err(self.incompatible(x)),
        }
    }

    pub fn density(&self, x: &Observation) -> Result<f64> {
        self.log_density(x).map(f64::exp)
    }

    fn incompatible(&self, x: &Observation) -> Error {
        Error::IncompatibleObservation {
            model: self.kind().name(),
            observation: format!("{x:?}"),
        }
    }

    /// Draws one observation from this member.
    pub fn sample(&self, rng: &mut RngStream) -> Observation {
        match self {
            Member::GaussianLoc { mean } => Observation::Real(mean + rng.standard_normal()),
            Member::Poisson { rate } => Observation::Count(rng.poisson(*rate)),
            Member::Discrete { pmf } => {
                let u: f64 = rng.uniform();
                let mut acc = 0.0;
                let mut last_positive = 0;
                for (i, p) in pmf.iter().enumerate() {
                    if *p > 0.0 {
                        last_positive = i;
                    }
                    acc += p;
                    if u < acc {
                        return Observation::Category(i);
                    }
                }
                Observation::Category(last_positive)
            }
            Member::GaussianScale { sigma } => Observation::Real(sigma * rng.standard_normal()),
            Member::GaussianLocMulti { mean } => {
                Observation::Vector(mean.iter().map(|m| m + rng.standard_normal()).collect())
            }
        }
    }
}

/// `log Poi(k; rate)`, with `Poi(0)` the point mass at 0.
pub fn poisson_log_pmf(rate: f64, k: u64) -> f64 {
    if rate == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * rate.ln() - rate - ln_factorial(k)
}

/// `log N(x; mean, 1)`.
#[inline]
pub fn gaussian_log_pdf(x: f64, mean: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d - HALF_LN_2PI
}

/// Deterministic random stream: ChaCha8 keyed by a 64-bit seed, with an
/// optional stream id so that independent sub-streams can be derived.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent sub-stream `stream` of `seed`.
    pub fn substream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn poisson(&mut self, rate: f64) -> u64 {
        if rate == 0.0 {
            return 0;
        }
        let d = PoissonDist::new(rate).expect("rate validated positive");
        let v: f64 = d.sample(&mut self.rng);
        v as u64
    }

    /// Uniform index in `0..bound`.
    pub fn below(&mut self, bound: usize) -> usize {
        self.rng.random_range(0..bound)
    }

    /// Binomial(trials, 1/2) by counting fair coin flips.
    pub fn binomial_half(&mut self, trials: u64) -> u64 {
        let mut count = 0;
        let mut left = trials;
        while left >= 64 {
            count += self.rng.random::<u64>().count_ones() as u64;
            left -= 64;
        }
        if left > 0 {
            let mask = (1u64 << left) - 1;
            count += (self.rng.random::<u64>() & mask).count_ones() as u64;
        }
        count
    }

    /// Uniform random permutation of `0..n` by Fisher–Yates.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i + 1);
            p.swap(i, j);
        }
        p
    }

    pub fn inner(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

fn same_kind(p: &Member, q: &Member) -> Result<()> {
    if p.kind() != q.kind() {
        return Err(Error::MixedModels(p.kind().name().into(), q.kind().name().into()));
    }
    match (p, q) {
        (Member::Discrete { pmf: a }, Member::Discrete { pmf: b }) if a.len() != b.len() => Err(Error::Validation(
            format!("discrete supports differ in size: {} vs {}", a.len(), b.len()),
        )),
        (Member::GaussianLocMulti { mean: a }, Member::GaussianLocMulti { mean: b }) if a.len() != b.len() => Err(
            Error::Validation(format!("dimensions differ: {} vs {}", a.len(), b.len())),
        ),
        _ => Ok(()),
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Rényi divergence of order ½, `-2 log ∫ √(dP dQ)`; `+inf` for mutually
/// singular discrete pairs.
pub fn renyi_half(p: &Member, q: &Member) -> Result<f64> {
    p.validate()?;
    q.validate()?;
    same_kind(p, q)?;
    let v = match (p, q) {
        (Member::GaussianLoc { mean: a }, Member::GaussianLoc { mean: b }) => (a - b) * (a - b) / 4.0,
        (Member::GaussianLocMulti { mean: a }, Member::GaussianLocMulti { mean: b }) => squared_distance(a, b) / 4.0,
        (Member::Poisson { rate: a }, Member::Poisson { rate: b }) => {
            let d = a.sqrt() - b.sqrt();
            d * d
        }
        (Member::GaussianScale { sigma: a }, Member::GaussianScale { sigma: b }) => {
            // log((a² + b²) / (2ab)) = log(cosh(log(a/b)))
            let r = (a / b).ln();
            log_cosh(r)
        }
        (Member::Discrete { pmf: a }, Member::Discrete { pmf: b }) => {
            let bc: f64 = a.iter().zip(b).map(|(x, y)| (x * y).sqrt()).sum();
            if bc <= 0.0 {
                f64::INFINITY
            } else {
                (-2.0 * bc.ln()).max(0.0)
            }
        }
        _ => unreachable!("kinds checked above"),
    };
    Ok(if p == q { 0.0 } else { v })
}

fn log_cosh(r: f64) -> f64 {
    let a = r.abs();
    a + (-2.0 * a).exp().ln_1p() - LN_2
}

/// `χ²(P ‖ Q)`; `+inf` where the integral diverges.
pub fn chi2_pair(p: &Member, q: &Member) -> Result<f64> {
    p.validate()?;
    q.validate()?;
    same_kind(p, q)?;
    if p == q {
        return Ok(0.0);
    }
    let v = match (p, q) {
        (Member::GaussianLoc { mean: a }, Member::GaussianLoc { mean: b }) => ((a - b) * (a - b)).exp_m1(),
        (Member::GaussianLocMulti { mean: a }, Member::GaussianLocMulti { mean: b }) => squared_distance(a, b).exp_m1(),
        (Member::Poisson { rate: a }, Member::Poisson { rate: b }) => {
            if *b == 0.0 {
                if *a == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                ((a - b) * (a - b) / b).exp_m1()
            }
        }
        (Member::GaussianScale { sigma: s1 }, Member::GaussianScale { sigma: s2 }) => {
            let (v1, v2) = (s1 * s1, s2 * s2);
            if v1 >= 2.0 * v2 {
                f64::INFINITY
            } else {
                v2 / (v1 * (2.0 * v2 - v1)).sqrt() - 1.0
            }
        }
        (Member::Discrete { pmf: a }, Member::Discrete { pmf: b }) => {
            let mut s = 0.0;
            for (x, y) in a.iter().zip(b) {
                if *x > 0.0 {
                    if *y == 0.0 {
                        return Ok(f64::INFINITY);
                    }
                    s += x * x / y;
                }
            }
            s - 1.0
        }
        _ => unreachable!("kinds checked above"),
    };
    Ok(v.max(0.0))
}

/// Checks that all members share one kind (and support size / dimension).
pub fn common_kind(members: &[Member]) -> Result<ModelKind> {
    let first = members
        .first()
        .ok_or_else(|| Error::Validation("empty member list".into()))?;
    for m in members {
        m.validate()?;
        same_kind(first, m)?;
    }
    Ok(first.kind())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn density_examples() {
        let g = Member::gaussian_loc(0.0).unwrap();
        assert_relative_eq!(
            g.density(&Observation::Real(0.0)).unwrap(),
            0.398_942_280_401_432_7,
            epsilon = 1e-15
        );
        let p0 = Member::poisson(0.0).unwrap();
        assert_eq!(p0.density(&Observation::Count(0)).unwrap(), 1.0);
        assert_eq!(p0.density(&Observation::Count(3)).unwrap(), 0.0);
        let p2 = Member::poisson(2.0).unwrap();
        let expected = (-2.0f64).exp() * 8.0 / 6.0;
        assert_relative_eq!(
            p2.density(&Observation::Count(3)).unwrap(),
            expected,
            max_relative = 1e-14
        );
        assert_relative_eq!(expected, 0.180_447, epsilon = 1e-6);
    }

    #[test]
    fn log_density_is_consistent_with_density() {
        let cases = [
            (Member::gaussian_loc(40.0).unwrap(), Observation::Real(-3.0)),
            (Member::poisson(7.5).unwrap(), Observation::Count(12)),
            (Member::gaussian_scale(0.3).unwrap(), Observation::Real(0.7)),
            (Member::discrete(vec![0.2, 0.8]).unwrap(), Observation::Category(1)),
        ];
        for (m, x) in cases {
            let d = m.density(&x).unwrap();
            let l = m.log_density(&x).unwrap();
            assert_relative_eq!(l.exp(), d, max_relative = 1e-14);
        }
    }

    #[test]
    fn incompatible_observations_are_rejected() {
        let g = Member::gaussian_loc(0.0).unwrap();
        assert!(matches!(
            g.log_density(&Observation::Count(1)),
            Err(Error::IncompatibleObservation { .. })
        ));
        let d = Member::discrete(vec![0.5, 0.5]).unwrap();
        assert!(d.log_density(&Observation::Category(2)).is_err());
    }

    #[test]
    fn invalid_members() {
        assert!(Member::poisson(-1.0).is_err());
        assert!(Member::gaussian_scale(0.0).is_err());
        assert!(Member::discrete(vec![0.5, 0.6]).is_err());
        assert!(Member::discrete(vec![-0.1, 1.1]).is_err());
    }

    #[test]
    fn renyi_examples() {
        let r = renyi_half(&Member::gaussian_loc(0.0).unwrap(), &Member::gaussian_loc(2.0).unwrap()).unwrap();
        assert_relative_eq!(r, 1.0, epsilon = 1e-15);
        let r = renyi_half(&Member::poisson(1.0).unwrap(), &Member::poisson(4.0).unwrap()).unwrap();
        assert_relative_eq!(r, 1.0, epsilon = 1e-15);
        let e = std::f64::consts::E;
        let r = renyi_half(
            &Member::gaussian_scale(1.0).unwrap(),
            &Member::gaussian_scale(e).unwrap(),
        )
        .unwrap();
        assert_relative_eq!(r, ((1.0 + e * e) / (2.0 * e)).ln(), epsilon = 1e-14);
        assert_relative_eq!(r, 0.4338, epsilon = 1e-4);
        let d = Member::discrete(vec![0.3, 0.7]).unwrap();
        assert_eq!(renyi_half(&d, &d).unwrap(), 0.0);
    }

    #[test]
    fn renyi_singular_and_mixed() {
        let a = Member::discrete(vec![1.0, 0.0]).unwrap();
        let b = Member::discrete(vec![0.0, 1.0]).unwrap();
        assert_eq!(renyi_half(&a, &b).unwrap(), f64::INFINITY);
        let c = Member::discrete(vec![0.5, 0.25, 0.25]).unwrap();
        assert!(matches!(renyi_half(&a, &c), Err(Error::Validation(_))));
        let g = Member::gaussian_loc(0.0).unwrap();
        assert!(matches!(renyi_half(&a, &g), Err(Error::MixedModels(..))));
    }

    #[test]
    fn chi2_examples() {
        let a = Member::gaussian_loc_multi(vec![0.0, 0.0]).unwrap();
        let b = Member::gaussian_loc_multi(vec![0.6, 0.8]).unwrap();
        assert_relative_eq!(chi2_pair(&a, &b).unwrap(), std::f64::consts::E - 1.0, epsilon = 1e-14);
        let s1 = Member::gaussian_scale(1.0).unwrap();
        let s2 = Member::gaussian_scale(2f64.sqrt()).unwrap();
        let v = chi2_pair(&s1, &s2).unwrap();
        assert_relative_eq!(v, 2.0 / 3f64.sqrt() - 1.0, epsilon = 1e-14);
        assert_relative_eq!(v, 0.15470, epsilon = 1e-5);
        // σ1² = 2σ2² is on the divergent side
        assert_eq!(chi2_pair(&s2, &s1).unwrap(), f64::INFINITY);
        assert_eq!(chi2_pair(&s1, &s1).unwrap(), 0.0);
        let p = Member::poisson(1.0).unwrap();
        let p0 = Member::poisson(0.0).unwrap();
        assert_eq!(chi2_pair(&p, &p0).unwrap(), f64::INFINITY);
        assert_relative_eq!(chi2_pair(&p0, &p).unwrap(), 1f64.exp_m1(), epsilon = 1e-14);
    }

    #[test]
    fn poisson_zero_always_samples_zero() {
        let m = Member::poisson(0.0).unwrap();
        let mut rng = RngStream::new(7);
        for _ in 0..1000 {
            assert_eq!(m.sample(&mut rng), Observation::Count(0));
        }
    }

    #[test]
    fn same_seed_same_draws() {
        let m = Member::gaussian_loc(1.0).unwrap();
        let draw = |seed| {
            let mut rng = RngStream::new(seed);
            (0..50).map(|_| m.sample(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
        assert_ne!(draw(11), draw(12));
        let a: Vec<u64> = (0..5).map(|_| RngStream::substream(3, 1).below(1000) as u64).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn gaussian_sample_mean() {
        let m = Member::gaussian_loc(3.0).unwrap();
        let mut rng = RngStream::new(2024);
        let n = 100_000;
        let mut s = 0.0;
        for _ in 0..n {
            if let Observation::Real(x) = m.sample(&mut rng) {
                s += x;
            }
        }
        // 4σ/√N ≈ 0.0126 < 0.02
        assert!((s / n as f64 - 3.0).abs() < 0.02);
    }

    #[test]
    fn binomial_half_mean() {
        let mut rng = RngStream::new(5);
        let n = 20_000;
        let total: u64 = (0..n).map(|_| rng.binomial_half(37)).sum();
        let mean = total as f64 / n as f64;
        // sd of mean = sqrt(37/4 / n) ≈ 0.0215
        assert!((mean - 18.5).abs() < 0.1);
    }
}
