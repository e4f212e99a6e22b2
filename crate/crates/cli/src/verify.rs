//! Fixed-seed invariant suite. Each audit reports pass/fail and its worst
//! slack (smallest margin by which the checked inequality held; negative
//! when it failed).

use permix::compound::{
    half_noise_posterior, interp_identity_check, orthogonality_check, pi_oracle, tilt_variance_check,
    transportation_check, CompoundInstance, CompoundModel,
};
use permix::families::{Member, RngStream};
use permix::geometry::{cheeger_audit, inequality_audit};
use permix::overlap::{build_overlap, QuadConfig};
use permix::permanent::log1p_chi2_from_overlap;
use permix::spectrum::{eigen_sym, hessian_det_check, spectral_upper};
use serde::Serialize;
use serde_json::{json, Value};

use crate::commands::random_sinkhorn;
use crate::report::{Body, Report};
use crate::{CliError, Opts};

type Result<T> = std::result::Result<T, CliError>;

pub const AUDITS: [&str; 10] = [
    "overlap",
    "sandwich",
    "cheeger",
    "combinatorial",
    "hessian",
    "oracle",
    "orthogonality",
    "interpolation",
    "transportation",
    "tilt",
];

#[derive(Debug, Clone, Serialize)]
pub struct AuditResult {
    pub name: &'static str,
    pub pass: bool,
    pub cases: usize,
    pub worst_slack: f64,
}

struct Tally {
    cases: usize,
    worst: f64,
}

impl Tally {
    fn new() -> Self {
        Self {
            cases: 0,
            worst: f64::INFINITY,
        }
    }

    fn record(&mut self, slack: f64) {
        self.cases += 1;
        // NaN slack is a failure
        self.worst = if slack.is_nan() {
            f64::NEG_INFINITY
        } else {
            self.worst.min(slack)
        };
    }

    fn finish(self, name: &'static str) -> AuditResult {
        AuditResult {
            name,
            pass: self.cases > 0 && self.worst >= 0.0,
            cases: self.cases,
            worst_slack: self.worst,
        }
    }
}

pub fn run(opts: &Opts, config: Value) -> Result<(Report, u8)> {
    let selected: Vec<&'static str> = match &opts.only {
        Some(name) => {
            let hit = AUDITS
                .iter()
                .find(|a| **a == name.as_str())
                .ok_or_else(|| CliError::Usage(format!("unknown audit `{name}`; choose from {}", AUDITS.join(", "))))?;
            vec![*hit]
        }
        None => AUDITS.to_vec(),
    };
    let mut results = Vec::with_capacity(selected.len());
    for (idx, name) in AUDITS.iter().enumerate() {
        if !selected.contains(name) {
            continue;
        }
        let seed = opts.seed.wrapping_add(idx as u64);
        let r = match *name {
            "overlap" => overlap(seed, opts.perturb)?,
            "sandwich" => sandwich(seed)?,
            "cheeger" => cheeger(seed)?,
            "combinatorial" => combinatorial(seed)?,
            "hessian" => hessian(seed)?,
            "oracle" => oracle(seed)?,
            "orthogonality" => orthogonality(seed, opts.samples.unwrap_or(20_000))?,
            "interpolation" => interpolation(seed)?,
            "transportation" => transportation(seed)?,
            "tilt" => tilt(seed)?,
            _ => unreachable!(),
        };
        log::info!("audit {} pass={} worst_slack={:e}", r.name, r.pass, r.worst_slack);
        results.push(r);
    }
    let pass = results.iter().all(|r| r.pass);
    let audits: Vec<Value> = results
        .iter()
        .map(|r| {
            json!({
                "name": r.name,
                "pass": r.pass,
                "cases": r.cases,
                "worst_slack": if r.worst_slack.is_finite() { json!(r.worst_slack) } else { json!(r.worst_slack.to_string()) },
            })
        })
        .collect();
    let report = Report {
        command: "verify",
        config,
        body: Body::Json(json!({ "pass": pass, "audits": audits })),
    };
    Ok((report, if pass { 0 } else { 1 }))
}

/// Random Gaussian (even case index) or Poisson (odd) family with up to 8
/// members and parameters up to 20 in magnitude.
fn random_family(rng: &mut RngStream, case: usize) -> Result<Vec<Member>> {
    let n = 2 + rng.below(7);
    (0..n)
        .map(|_| {
            Ok(if case.is_multiple_of(2) {
                Member::gaussian_loc(40.0 * rng.uniform() - 20.0)?
            } else {
                Member::poisson(20.0 * rng.uniform())?
            })
        })
        .collect()
}

fn overlap(seed: u64, perturb: bool) -> Result<AuditResult> {
    let mut rng = RngStream::new(seed);
    let mut t = Tally::new();
    for case in 0..16 {
        let members = random_family(&mut rng, case)?;
        let mut a = build_overlap(&members, &QuadConfig::default())?.entries;
        if perturb {
            a[(0, 0)] += 1e-3;
        }
        let spec = eigen_sym(&a.symmetrized())?;
        let min = *spec.eigenvalues.last().unwrap();
        let slack = (1e-12 - a.symmetry_residual())
            .min(1e-8 - a.stochastic_residual())
            .min(min + 1e-9)
            .min(1e-9 - (spec.eigenvalues[0] - 1.0).abs());
        let min_entry = a.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
        t.record(if min_entry < 0.0 { slack.min(min_entry) } else { slack });
    }
    Ok(t.finish("overlap"))
}

fn sandwich(seed: u64) -> Result<AuditResult> {
    let mut rng = RngStream::new(seed);
    let mut t = Tally::new();
    for case in 0..16 {
        let a = build_overlap(&random_family(&mut rng, case)?, &QuadConfig::default())?;
        let exact = log1p_chi2_from_overlap(&a)?;
        t.record(spectral_upper(&eigen_sym(&a.entries)?) - exact);
    }
    Ok(t.finish("sandwich"))
}

fn gaussian_family(rng: &mut RngStream, n: usize, lo: f64, hi: f64) -> Result<Vec<Member>> {
    (0..n)
        .map(|_| Ok(Member::gaussian_loc(lo + (hi - lo) * rng.uniform())?))
        .collect()
}

fn cheeger(seed: u64) -> Result<AuditResult> {
    let mut rng = RngStream::new(seed);
    let mut t = Tally::new();
    for _ in 0..10 {
        let n = 3 + rng.below(5);
        let a = build_overlap(&gaussian_family(&mut rng, n, -2.0, 2.0)?, &QuadConfig::default())?;
        for k in 2..=3 {
            t.record(cheeger_audit(&a.entries, k)?.slack);
        }
    }
    Ok(t.finish("cheeger"))
}

fn combinatorial(seed: u64) -> Result<AuditResult> {
    let mut rng = RngStream::new(seed);
    let mut t = Tally::new();
    for case in 0..4 {
        let n = 5 + case;
        let width = 0.5 + 2.5 * rng.uniform();
        let members: Vec<Member> = (0..n)
            .map(|i| Member::gaussian_loc(width * i as f64 / (n - 1) as f64))
            .collect::<permix::error::Result<_>>()?;
        let a = build_overlap(&members, &QuadConfig::default())?;
        let audit = inequality_audit(&a, &members, 1)?;
        let c = audit
            .combinatorial
            .ok_or_else(|| CliError::Usage("combinatorial audit needs 5 <= n <= 8".into()))?;
        t.record(c.slack);
    }
    Ok(t.finish("combinatorial"))
}

fn hessian(seed: u64) -> Result<AuditResult> {
    let mut t = Tally::new();
    for case in 0..20u64 {
        let n = 2 + (case % 5) as usize;
        let a = random_sinkhorn(n, seed, case)?;
        t.record(1e-8 - hessian_det_check(&a)?.rel_err);
    }
    Ok(t.finish("hessian"))
}

/// `E[θ̃ | Xⁿ]` coordinates by summing over all `n!` assignments.
fn enumerate_pi(inst: &CompoundInstance, x: &[f64]) -> Vec<f64> {
    let n = inst.n();
    let log_dens = |t: f64, xv: f64| match inst.model {
        CompoundModel::GaussianLoc => -0.5 * (xv - t).powi(2),
        CompoundModel::Poisson => xv * t.ln() - t,
    };
    let table: Vec<Vec<f64>> = inst
        .theta
        .iter()
        .map(|&t| x.iter().map(|&xv| log_dens(t, xv)).collect())
        .collect();
    let shift: Vec<f64> = (0..n)
        .map(|j| table.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let mut num = vec![0.0; n];
    let mut total = 0.0;
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        let w: f64 = (0..n).map(|j| table[perm[j]][j] - shift[j]).sum::<f64>().exp();
        total += w;
        for (i, acc) in num.iter_mut().enumerate() {
            *acc += w * inst.theta[perm[i]];
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    num.iter().map(|v| v / total).collect()
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

fn oracle(seed: u64) -> Result<AuditResult> {
    let mut rng = RngStream::new(seed);
    let mut t = Tally::new();
    for case in 0..20 {
        let n = 2 + case % 5;
        let (model, lo, hi) = if case % 2 == 0 {
            (CompoundModel::GaussianLoc, 0.5, 3.0)
        } else {
            (CompoundModel::Poisson, 0.2, 5.0)
        };
        let theta: Vec<f64> = (0..n).map(|_| lo + (hi - lo) * rng.uniform()).collect();
        let inst = CompoundInstance::new(model, theta)?;
        let (_, x) = inst.sample_postulated(&mut rng);
        let got = pi_oracle(&inst, &x)?;
        let want = enumerate_pi(&inst, &x);
        let worst = got
            .pi
            .iter()
            .zip(&want)
            .map(|(a, b)| (a - b).abs() / b.abs())
            .fold(0.0, f64::max);
        t.record(1e-10 - worst);
    }
    Ok(t.finish("oracle"))
}

fn orthogonality(seed: u64, samples: usize) -> Result<AuditResult> {
    let mut t = Tally::new();
    for (model, theta) in [
        (CompoundModel::GaussianLoc, vec![0.0, 1.0, 2.0]),
        (CompoundModel::Poisson, vec![1.0, 4.0]),
    ] {
        let o = orthogonality_check(&CompoundInstance::new(model, theta)?, samples, seed)?;
        t.record(4.0 * o.combined_se - (o.lhs - o.rhs).abs());
    }
    Ok(t.finish("orthogonality"))
}

fn interpolation(seed: u64) -> Result<AuditResult> {
    let mut rng = RngStream::new(seed);
    let mut t = Tally::new();
    let g = CompoundInstance::new(CompoundModel::GaussianLoc, vec![-1.0, 0.0, 1.0])?;
    let p = CompoundInstance::new(CompoundModel::Poisson, vec![0.5, 3.0])?;
    for _ in 0..50 {
        for inst in [&g, &p] {
            let (_, x) = inst.sample_postulated(&mut rng);
            let c = interp_identity_check(inst, &x)?;
            t.record(1e-7 - c.residual_direct.max(c.residual_route));
        }
    }
    Ok(t.finish("interpolation"))
}

fn transportation(seed: u64) -> Result<AuditResult> {
    let mut rng = RngStream::new(seed);
    let mut t = Tally::new();
    let mut case = 0;
    while t.cases < 60 {
        let h = [0.5, 2.0, 8.0][case % 3];
        case += 1;
        let atoms = 1 + rng.below(4);
        let raw: Vec<f64> = (0..atoms).map(|_| rng.uniform() + 1e-3).collect();
        let z: f64 = raw.iter().sum();
        let mixing: Vec<(f64, f64)> = raw.iter().map(|w| (h * rng.uniform(), w / z)).collect();
        let mut mu: Vec<f64> = (0..=(2.0 * h) as usize + 1).map(|_| rng.uniform()).collect();
        let z: f64 = mu.iter().sum();
        mu.iter_mut().for_each(|v| *v /= z);
        let mean: f64 = mu.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        if mean > h {
            continue;
        }
        let c = transportation_check(h, &mixing, &mu)?;
        t.record(c.rhs - c.lhs);
    }
    Ok(t.finish("transportation"))
}

fn tilt(seed: u64) -> Result<AuditResult> {
    let h = 4.0;
    let grid: Vec<f64> = (0..=400).map(|i| -20.0 + 0.1 * i as f64).collect();
    let mut rng = RngStream::new(seed);
    let mut t = Tally::new();
    for _ in 0..30 {
        let theta: Vec<f64> = (0..3).map(|_| 0.5 * h * (2.0 * rng.uniform() - 1.0)).collect();
        let x = theta[rng.below(3)] + rng.standard_normal();
        let h_eff = 2.0 * theta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let c = tilt_variance_check(&half_noise_posterior(&theta, x)?, h_eff, &grid)?;
        t.record(c.bound - c.max_var);
    }
    Ok(t.finish("tilt"))
}
