use permix::compound::{regret_gap_mc, CompoundInstance, CompoundModel};
use permix::families::{Member, RngStream};
use permix::geometry::{
    capacity_lower, capacity_upper_ratio, gaussian_ball_capacity_upper, inequality_audit, partition_diameter,
    CapacityDescriptor, PartitionMethod,
};
use permix::linalg::SquareMatrix;
use permix::overlap::{
    build_overlap, discrete_spike_family, sinkhorn_project, trace_capacity_lb, OverlapMatrix, QuadConfig,
};
use permix::permanent::{
    chi2_exact, log1p_chi2_from_overlap, mixing_scalar, mixing_scalar_complement, replicated_log1p_chi2,
    two_component_log1p_chi2, MixingModel, RYSER_MAX_N,
};
use permix::spectrum::{eigen_sym, hessian_det_check, spectral_lower, BoundsReport};
use rayon::prelude::*;
use serde_json::Value;

use crate::report::{Body, Cell, Report, Table};
use crate::{CliError, Family, Opts};

type Result<T> = std::result::Result<T, CliError>;

/// Largest n for which sweeps add the permanent cross-check column.
const SWEEP_PERMANENT_MAX_N: u64 = 12;
/// Largest n for which `bounds` attaches the exact value.
const BOUNDS_EXACT_MAX_N: usize = 25;

pub fn run(command: &'static str, opts: &Opts, config: Value) -> Result<Report> {
    let table = match command {
        "overlap" => overlap(opts)?,
        "chi2" => chi2(opts)?,
        "bounds" => bounds(opts)?,
        "diameter" => diameter(opts)?,
        "capacity" => capacity(opts)?,
        "cheeger" => cheeger(opts)?,
        "hessian-check" => hessian(opts)?,
        "replication" => replication(opts)?,
        "sweep-gaussian" => sweep(opts, MixingModel::Gaussian)?,
        "sweep-poisson" => sweep(opts, MixingModel::Poisson)?,
        "compound-gap" => compound_gap(opts)?,
        other => return Err(CliError::Usage(format!("unknown command {other}"))),
    };
    Ok(Report {
        command,
        config,
        body: Body::Table(table),
    })
}

/// Parses `a,b,c` or `lo:hi:count` (inclusive, evenly spaced).
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || CliError::Usage(format!("cannot parse grid `{spec}`"));
    let parts: Vec<&str> = spec.split(':').collect();
    let grid = match parts.as_slice() {
        [lo, hi, count] => {
            let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
            let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
            let count: usize = count.trim().parse().map_err(|_| bad())?;
            match count {
                0 => Vec::new(),
                1 => vec![lo],
                _ => (0..count)
                    .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
                    .collect(),
            }
        }
        [list] => list
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?,
        _ => return Err(bad()),
    };
    if grid.is_empty() || grid.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Usage(format!(
            "grid `{spec}` must be a nonempty list of finite values"
        )));
    }
    Ok(grid)
}

fn grid_or(opts: &Opts, default: &str) -> Result<Vec<f64>> {
    parse_grid(opts.grid.as_deref().unwrap_or(default))
}

pub fn members(opts: &Opts) -> Result<Vec<Member>> {
    let from_theta = |f: fn(f64) -> permix::error::Result<Member>| -> Result<Vec<Member>> {
        if opts.theta.is_empty() {
            return Err(CliError::Usage("--theta is required for this family".into()));
        }
        Ok(opts.theta.iter().map(|&t| f(t)).collect::<permix::error::Result<_>>()?)
    };
    match opts.family {
        Family::Gaussian => from_theta(Member::gaussian_loc),
        Family::Poisson => from_theta(Member::poisson),
        Family::GaussianScale => from_theta(Member::gaussian_scale),
        Family::DiscreteSpike => {
            let m = opts
                .m
                .ok_or_else(|| CliError::Usage("--m is required for discrete-spike".into()))?;
            let eps = opts
                .eps
                .ok_or_else(|| CliError::Usage("--eps is required for discrete-spike".into()))?;
            Ok(discrete_spike_family(m as usize, eps)?)
        }
    }
}

fn overlap(opts: &Opts) -> Result<Table> {
    let a = build_overlap(&members(opts)?, &QuadConfig::default())?;
    let n = a.dim();
    let mut cols = vec!["row".to_string()];
    cols.extend((0..n).map(|j| format!("col_{j}")));
    let mut t = Table::with_columns(cols);
    for i in 0..n {
        let mut row = vec![Cell::from(i)];
        row.extend(a.entries.row(i).iter().map(|&x| Cell::from(x)));
        t.push(row);
    }
    Ok(t)
}

fn chi2(opts: &Opts) -> Result<Table> {
    let a = build_overlap(&members(opts)?, &QuadConfig::default())?;
    let log1p = log1p_chi2_from_overlap(&a)?;
    let mut t = Table::new(&["n", "chi2", "log1p_chi2", "row_sum_residual", "method"]);
    t.push(vec![
        a.dim().into(),
        log1p.exp_m1().max(0.0).into(),
        log1p.into(),
        a.row_sum_residual.into(),
        "permanent-ryser".into(),
    ]);
    Ok(t)
}

fn bounds(opts: &Opts) -> Result<Table> {
    let a = build_overlap(&members(opts)?, &QuadConfig::default())?;
    let log_exact = if a.dim() <= BOUNDS_EXACT_MAX_N {
        Some(log1p_chi2_from_overlap(&a)?)
    } else {
        None
    };
    let r = BoundsReport::new(&a, log_exact)?;
    let mut t = Table::new(&[
        "n",
        "log_exact",
        "log_upper",
        "log_lower_spectral",
        "log_lower_diagonal",
        "trace_capacity_lb",
        "sandwich_holds",
    ]);
    t.push(vec![
        a.dim().into(),
        r.log_exact.into(),
        r.log_upper.into(),
        r.log_lower_spectral.into(),
        r.log_lower_diagonal.into(),
        trace_capacity_lb(&a).into(),
        r.sandwich_holds().into(),
    ]);
    Ok(t)
}

fn diameter(opts: &Opts) -> Result<Table> {
    let m = members(opts)?;
    let ordered = m.iter().all(|x| x.ordering_coordinate().is_some());
    let method = if ordered {
        PartitionMethod::Dp1d
    } else {
        PartitionMethod::Brute
    };
    let k_max = opts.k.unwrap_or(m.len()).min(m.len());
    let mut t = Table::new(&["k", "diameter", "method", "blocks"]);
    for k in 1..=k_max {
        let p = partition_diameter(&m, k, method)?;
        let blocks: Vec<String> = p.block_of.iter().map(|b| b.to_string()).collect();
        t.push(vec![
            k.into(),
            p.diameter.into(),
            if ordered { "dp1d" } else { "brute" }.into(),
            blocks.join(" ").into(),
        ]);
    }
    Ok(t)
}

fn capacity(opts: &Opts) -> Result<Table> {
    let cfg = QuadConfig::default();
    let m = members(opts)?;
    let lower = capacity_lower(&m, opts.iters, 1e-14, &cfg)?;
    let trace = trace_capacity_lb(&build_overlap(&m, &cfg)?);
    let (upper, label): (Option<f64>, &str) = match opts.family {
        Family::DiscreteSpike => {
            let cats = opts.m.unwrap_or(2) as usize;
            let desc = CapacityDescriptor::DiscreteSimplex {
                m: cats,
                eps: opts.eps.unwrap_or(0.0),
            };
            let uniform = Member::discrete(vec![1.0 / cats as f64; cats])?;
            (
                Some(capacity_upper_ratio(&desc, &uniform)?),
                "discrete simplex, uniform reference",
            )
        }
        Family::Gaussian => {
            let mu = opts.theta.iter().fold(0.0f64, |a, t| a.max(t.abs()));
            let taus: Vec<f64> = (1..=400).map(|i| 1.0 + 0.01 * i as f64).collect();
            let (v, _) = gaussian_ball_capacity_upper(mu, &taus)?;
            (Some(v), "gaussian ball, best N(0,tau^2) reference")
        }
        _ => (None, "unavailable"),
    };
    let mut t = Table::new(&[
        "grid_size",
        "capacity_lower",
        "uniform_value",
        "trace_capacity_lb",
        "iterations",
        "capacity_upper",
        "upper_method",
    ]);
    t.push(vec![
        m.len().into(),
        lower.value.into(),
        lower.uniform_value.into(),
        trace.into(),
        lower.iterations.into(),
        upper.into(),
        label.into(),
    ]);
    Ok(t)
}

fn cheeger(opts: &Opts) -> Result<Table> {
    let m = members(opts)?;
    let a = build_overlap(&m, &QuadConfig::default())?;
    let n = a.dim();
    let k_max = opts.k.unwrap_or(3).min(n);
    let mut t = Table::new(&["check", "k", "lhs", "rhs", "slack", "pass"]);
    for k in 2..=k_max {
        let c = permix::geometry::cheeger_audit(&a.entries, k)?;
        t.push(vec![
            "cheeger".into(),
            k.into(),
            c.lhs.into(),
            c.rho_k.into(),
            c.slack.into(),
            c.pass.into(),
        ]);
    }
    if let Some(c) = inequality_audit(&a, &m, 1)?.combinatorial {
        t.push(vec![
            "combinatorial".into(),
            5usize.into(),
            c.bound.into(),
            c.rho_5.into(),
            c.slack.into(),
            c.pass.into(),
        ]);
    }
    Ok(t)
}

/// Random symmetric doubly stochastic matrix with entries bounded away from 0.
pub fn random_sinkhorn(n: usize, seed: u64, stream: u64) -> Result<SquareMatrix> {
    let mut rng = RngStream::substream(seed, stream);
    let raw = SquareMatrix::from_fn(n, |_, _| 0.05 + rng.uniform());
    Ok(sinkhorn_project(&raw, 1e-15, 100_000, true)?)
}

fn hessian(opts: &Opts) -> Result<Table> {
    let mut t = Table::new(&["case", "n", "log_lhs", "log_rhs", "rel_err"]);
    let cases: Vec<SquareMatrix> = if !opts.theta.is_empty() || opts.family == Family::DiscreteSpike {
        vec![build_overlap(&members(opts)?, &QuadConfig::default())?.entries]
    } else {
        let n = *opts.n.first().unwrap_or(&4) as usize;
        let count = opts.samples.unwrap_or(10);
        (0..count as u64)
            .map(|s| random_sinkhorn(n, opts.seed, s))
            .collect::<Result<_>>()?
    };
    for (i, a) in cases.iter().enumerate() {
        let h = hessian_det_check(a)?;
        t.push(vec![
            i.into(),
            a.dim().into(),
            h.log_lhs.into(),
            h.log_rhs.into(),
            h.rel_err.into(),
        ]);
    }
    Ok(t)
}

fn replication(opts: &Opts) -> Result<Table> {
    let a = match opts.lambda {
        Some(l) => {
            if !(0.0..1.0).contains(&l) {
                return Err(CliError::Usage("--lambda must lie in [0, 1)".into()));
            }
            let (d, o) = (0.5 * (1.0 + l), 0.5 * (1.0 - l));
            OverlapMatrix::from_entries(SquareMatrix::from_rows(&[vec![d, o], vec![o, d]])?)?
        }
        None => build_overlap(&members(opts)?, &QuadConfig::default())?,
    };
    let ms: Vec<u64> = match &opts.grid {
        Some(g) => parse_grid(g)?
            .iter()
            .map(|&v| {
                if v >= 1.0 && v.fract() == 0.0 {
                    Ok(v as u64)
                } else {
                    Err(CliError::Usage(format!(
                        "replication factor {v} is not a positive integer"
                    )))
                }
            })
            .collect::<Result<_>>()?,
        None => (1..=opts.m.unwrap_or(200)).collect(),
    };
    let log_target = spectral_lower(&eigen_sym(&a.entries)?);
    let target = log_target.exp_m1();
    let rows: Vec<Result<Vec<Cell>>> = ms
        .par_iter()
        .map(|&m| {
            let log1p = replicated_log1p_chi2(&a.entries, m)?;
            let chi2 = log1p.exp_m1();
            let rel = if target > 0.0 {
                Some((chi2 - target) / target)
            } else {
                None
            };
            Ok(vec![m.into(), chi2.into(), log1p.into(), target.into(), rel.into()])
        })
        .collect();
    let mut t = Table::new(&["m", "chi2", "log1p_chi2", "target", "rel_gap"]);
    for r in rows {
        t.push(r?);
    }
    Ok(t)
}

fn two_point_members(model: MixingModel, sep: f64, half: usize) -> Result<Vec<Member>> {
    let (a, b) = match model {
        MixingModel::Gaussian => (Member::gaussian_loc(-sep)?, Member::gaussian_loc(sep)?),
        MixingModel::Poisson => (Member::poisson(0.0)?, Member::poisson(sep)?),
    };
    let mut v = vec![a; half];
    v.extend(vec![b; half]);
    Ok(v)
}

/// Half-sizes whose two-point χ² enters the worst-case-over-dimension column
/// at dimension `n`: powers of two up to `n/2` and every sweep `n' ≤ n`.
fn dimension_candidates(n: u64, sweep_ns: &[u64]) -> Vec<u64> {
    let half = n / 2;
    let mut c: Vec<u64> = std::iter::successors(Some(1u64), |v| v.checked_mul(2))
        .take_while(|&v| v <= half)
        .collect();
    c.extend(sweep_ns.iter().filter(|&&v| v <= n).map(|v| v / 2));
    c.sort_unstable();
    c.dedup();
    c
}

fn sweep(opts: &Opts, model: MixingModel) -> Result<Table> {
    let seps = grid_or(opts, "0:6:61")?;
    if seps.iter().any(|&s| s < 0.0) {
        return Err(CliError::Usage("sweep parameters must be >= 0".into()));
    }
    let ns: Vec<u64> = if opts.n.is_empty() {
        vec![100, 10_000, 1_000_000]
    } else {
        opts.n.clone()
    };
    if ns.iter().any(|&n| n < 2 || n % 2 == 1) {
        return Err(CliError::Usage("two-point sweeps need even n >= 2".into()));
    }
    let sep_name = match model {
        MixingModel::Gaussian => "mu",
        MixingModel::Poisson => "M",
    };
    let cfg = QuadConfig::default();
    let jobs: Vec<(u64, f64)> = ns.iter().flat_map(|&n| seps.iter().map(move |&s| (n, s))).collect();
    let rows: Vec<Result<Vec<Cell>>> = jobs
        .par_iter()
        .map(|&(n, sep)| {
            let f = mixing_scalar(model, sep)?;
            let one_minus_f = mixing_scalar_complement(model, sep)?;
            let closed = two_component_log1p_chi2(n / 2, one_minus_f)?;
            let mut worst = closed;
            for half in dimension_candidates(n, &ns) {
                worst = worst.max(two_component_log1p_chi2(half, one_minus_f)?);
            }
            let (perm, diff) = if n <= SWEEP_PERMANENT_MAX_N && (n as usize) <= RYSER_MAX_N {
                let c = chi2_exact(&two_point_members(model, sep, (n / 2) as usize)?, &cfg)?;
                let lp = c.ln_1p();
                (Some(lp), Some((lp - closed).abs()))
            } else {
                (None, None)
            };
            Ok(vec![
                sep.into(),
                n.into(),
                f.into(),
                one_minus_f.into(),
                closed.into(),
                closed.exp_m1().into(),
                perm.into(),
                diff.into(),
                worst.into(),
                if perm.is_some() {
                    "closed-form+permanent"
                } else {
                    "closed-form"
                }
                .into(),
            ])
        })
        .collect();
    let mut t = Table::new(&[
        sep_name,
        "n",
        "f",
        "one_minus_f",
        "log1p_chi2",
        "chi2",
        "log1p_chi2_permanent",
        "abs_diff",
        "log1p_chi2_worst_dim",
        "method",
    ]);
    for r in rows {
        t.push(r?);
    }
    Ok(t)
}

fn compound_gap(opts: &Opts) -> Result<Table> {
    let hs = grid_or(opts, "0.25,0.5,1,2")?;
    let n = *opts.n.first().unwrap_or(&4) as usize;
    let samples = opts.samples.unwrap_or(10_000);
    let model = match opts.family {
        Family::Gaussian => CompoundModel::GaussianLoc,
        Family::Poisson => CompoundModel::Poisson,
        _ => {
            return Err(CliError::Usage(
                "compound-gap supports the gaussian and poisson families".into(),
            ))
        }
    };
    let mut t = Table::new(&["h", "n", "model", "mean", "std_error", "samples", "seed", "aborted"]);
    for &h in &hs {
        let theta: Vec<f64> = (0..n).map(|i| if i < n / 2 { 0.0 } else { h }).collect();
        let inst = CompoundInstance::new(model, theta)?;
        let g = regret_gap_mc(&inst, samples, opts.seed)?;
        t.push(vec![
            h.into(),
            n.into(),
            match model {
                CompoundModel::GaussianLoc => "gaussian",
                CompoundModel::Poisson => "poisson",
            }
            .into(),
            g.mean.into(),
            g.std_error.into(),
            g.samples.into(),
            g.seed.into(),
            g.aborted.into(),
        ]);
    }
    Ok(t)
}
