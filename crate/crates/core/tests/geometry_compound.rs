#![allow(clippy::needless_range_loop)]

use approx::assert_relative_eq;
use permix::compound::{
    half_noise_posterior, interp_identity_check, orthogonality_check, pi_oracle, regret_gap_mc, separable_oracle,
    tilt_variance_check, transportation_check, CompoundInstance, CompoundModel,
};
use permix::families::{Member, RngStream};
use permix::geometry::{
    bound_dim_dependent, bound_dim_independent, capacity_lower, capacity_upper_ratio, cheeger_audit, conductance,
    gaussian_ball_capacity_upper, inequality_audit, kway_expansion, partition_diameter, CapacityDescriptor,
    PartitionMethod,
};
use permix::linalg::SquareMatrix;
use permix::overlap::{build_overlap, discrete_spike_family, trace_capacity_lb, QuadConfig};
use permix::permanent::{mixing_scalar, MixingModel};
use proptest::prelude::*;

fn gauss_members(thetas: &[f64]) -> Vec<Member> {
    thetas.iter().map(|&t| Member::gaussian_loc(t).unwrap()).collect()
}

#[test]
fn partition_examples() {
    let m = gauss_members(&[0.0, 1.3]);
    let p = partition_diameter(&m, 1, PartitionMethod::Dp1d).unwrap();
    assert_relative_eq!(p.diameter, 1.3 * 1.3 / 4.0, epsilon = 1e-15);
    let p = partition_diameter(&m, 2, PartitionMethod::Brute).unwrap();
    assert_eq!(p.diameter, 0.0);
    let d = vec![Member::discrete(vec![0.5, 0.5]).unwrap(); 2];
    assert!(partition_diameter(&d, 1, PartitionMethod::Dp1d).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dp1d_matches_brute(thetas in prop::collection::vec(-5.0..5.0f64, 1..9), k in 1usize..5) {
        let m = gauss_members(&thetas);
        let a = partition_diameter(&m, k, PartitionMethod::Dp1d).unwrap();
        let b = partition_diameter(&m, k, PartitionMethod::Brute).unwrap();
        prop_assert!((a.diameter - b.diameter).abs() <= 1e-12);
    }

    #[test]
    fn diameter_nonincreasing_in_k(rates in prop::collection::vec(0.0..20.0f64, 2..9)) {
        let m: Vec<Member> = rates.iter().map(|&r| Member::poisson(r).unwrap()).collect();
        let mut prev = f64::INFINITY;
        for k in 1..=m.len() {
            let d = partition_diameter(&m, k, PartitionMethod::Dp1d).unwrap().diameter;
            prop_assert!(d <= prev);
            prev = d;
        }
        prop_assert_eq!(prev, 0.0);
    }

    #[test]
    fn expansion_monotone_and_cheeger(thetas in prop::collection::vec(-2.0..2.0f64, 3..7)) {
        let a = build_overlap(&gauss_members(&thetas), &QuadConfig::default()).unwrap();
        let mut prev = 0.0;
        for k in 1..=3 {
            let r = kway_expansion(&a.entries, k).unwrap();
            let recomputed = r.witness_sets.iter().map(|s| conductance(&a.entries, s)).fold(0.0, f64::max);
            prop_assert!((recomputed - r.rho).abs() <= 1e-12);
            prop_assert!(r.rho >= prev - 1e-15);
            prev = r.rho;
            if k >= 2 {
                prop_assert!(cheeger_audit(&a.entries, k).unwrap().pass);
            }
        }
    }
}

#[test]
fn expansion_examples() {
    let flat = SquareMatrix::filled(4, 0.25);
    assert_relative_eq!(kway_expansion(&flat, 2).unwrap().rho, 2.0 / 3.0, epsilon = 1e-15);
    let block = SquareMatrix::from_fn(4, |i, j| if i / 2 == j / 2 { 0.5 } else { 0.0 });
    assert_eq!(kway_expansion(&block, 2).unwrap().rho, 0.0);
    assert!(kway_expansion(&SquareMatrix::filled(12, 1.0 / 12.0), 5).is_err());
}

#[test]
fn combinatorial_examples() {
    let cfg = QuadConfig::default();
    let same = gauss_members(&[0.5; 6]);
    let a = build_overlap(&same, &cfg).unwrap();
    let audit = inequality_audit(&a, &same, 1).unwrap();
    let c = audit.combinatorial.unwrap();
    assert_eq!(c.d1, 0.0);
    assert!(c.pass && c.rho_5 >= 0.25);
    let grid: Vec<f64> = (0..8).map(|i| 2.0 * i as f64 / 7.0).collect();
    let m = gauss_members(&grid);
    let a = build_overlap(&m, &cfg).unwrap();
    let c = inequality_audit(&a, &m, 1).unwrap().combinatorial.unwrap();
    assert_relative_eq!(c.d1, 1.0, epsilon = 1e-14);
    assert!(c.pass);
    let mut spike = discrete_spike_family(3, 0.2).unwrap();
    spike.extend(spike.clone());
    spike.push(spike[0].clone());
    let a = build_overlap(&spike[..5], &cfg).unwrap();
    assert!(inequality_audit(&a, &spike[..5], 2).unwrap().cheeger.slack >= 0.0);
}

#[test]
fn capacity_examples() {
    let cfg = QuadConfig::default();
    let single = capacity_lower(&gauss_members(&[0.3]), 50, 1e-14, &cfg).unwrap();
    assert!(single.value.abs() < 1e-12);
    for mu in [0.5, 1.5] {
        let c = capacity_lower(&gauss_members(&[-mu, mu]), 100, 1e-14, &cfg).unwrap();
        assert_relative_eq!(
            c.uniform_value,
            mixing_scalar(MixingModel::Gaussian, mu).unwrap(),
            epsilon = 1e-9
        );
        assert!(c.value >= c.uniform_value);
        assert!(c.history.windows(2).all(|w| w[1] >= w[0]));
    }
    let m = 4;
    let eps = 0.1;
    let grid: Vec<Member> = (0..20)
        .map(|i| {
            let t = i as f64 / 19.0;
            let rest = (1.0 - eps) * t / 3.0;
            Member::discrete(vec![1.0 - 3.0 * rest, rest, rest, rest]).unwrap()
        })
        .collect();
    let lower = capacity_lower(&grid, 500, 1e-14, &cfg).unwrap();
    let upper = capacity_upper_ratio(
        &CapacityDescriptor::DiscreteSimplex { m, eps },
        &Member::discrete(vec![0.25; 4]).unwrap(),
    )
    .unwrap();
    assert_relative_eq!(upper, 3.0, epsilon = 1e-15);
    let trace = trace_capacity_lb(&build_overlap(&grid, &cfg).unwrap());
    assert!(trace <= lower.value + 1e-12 && lower.value <= upper);
    let same = capacity_upper_ratio(
        &CapacityDescriptor::Members(vec![Member::discrete(vec![0.3, 0.7]).unwrap()]),
        &Member::discrete(vec![0.3, 0.7]).unwrap(),
    )
    .unwrap();
    assert!(same.abs() < 1e-15);
}

#[test]
fn gaussian_ball_ratio_by_grid_search() {
    let (mu, tau) = (1.0f64, 2f64.sqrt());
    let desc = CapacityDescriptor::GaussianLocBall { mu };
    let got = capacity_upper_ratio(&desc, &Member::gaussian_scale(tau).unwrap()).unwrap();
    // sup over |θ| ≤ μ and x of φ(x − θ)/φ_τ(x), scanned on a fine grid
    let mut best = 0.0f64;
    for ti in 0..=40 {
        let theta = -mu + 2.0 * mu * ti as f64 / 40.0;
        for xi in 0..=20_000 {
            let x = -10.0 + 20.0 * xi as f64 / 20_000.0;
            let log_r = -0.5 * (x - theta).powi(2) + 0.5 * x * x / (tau * tau) + tau.ln();
            best = best.max(log_r.exp());
        }
    }
    assert_relative_eq!(got, best - 1.0, max_relative = 1e-6);
    assert!(capacity_upper_ratio(&desc, &Member::gaussian_scale(1.0).unwrap()).is_err());
    let (v, t) = gaussian_ball_capacity_upper(mu, &[1.2, 1.5, 2.0, 3.0]).unwrap();
    assert!(v <= got && t > 1.0);
}

#[test]
fn bound_examples() {
    let b = bound_dim_independent(&[0.0, 0.0], 0.0).unwrap();
    assert_relative_eq!(b.value, 1.0, epsilon = 1e-15);
    let sched: Vec<f64> = (1..=6).map(|k| 16.0 / (k * k) as f64).collect();
    let b = bound_dim_independent(&sched, 4.0).unwrap();
    let direct = 16.0 * (1.0 + 1.0 / 4.0 + 1.0 / 9.0 + 1.0 / 16.0 + 1.0 / 25.0) + 5.0;
    assert_relative_eq!(b.value, direct, epsilon = 1e-12);
    assert!(bound_dim_independent(&[1.0, 2.0], 1.0).is_err());
    assert_relative_eq!(bound_dim_dependent(100, &[0.7]).unwrap(), 0.7, epsilon = 1e-15);
    let four = bound_dim_dependent(100, &[0.0; 4]).unwrap();
    assert_relative_eq!(four, 1.5 * (2.0 * std::f64::consts::PI * 26.0).ln(), epsilon = 1e-12);
    assert!(bound_dim_dependent(100, &[0.5, 0.5]).unwrap() < bound_dim_dependent(100, &[0.25; 4]).unwrap());
}

/// Explicit sum over all `n!` assignments of parameters to coordinates.
fn enumerate_pi(inst: &CompoundInstance, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = inst.n();
    let dens = |t: f64, xv: f64| match inst.model {
        CompoundModel::GaussianLoc => (-0.5 * (xv - t).powi(2)).exp(),
        CompoundModel::Poisson => {
            let k = xv as u64;
            (-t).exp() * t.powi(k as i32) / (1..=k).map(|v| v as f64).product::<f64>()
        }
    };
    let mut perm: Vec<usize> = (0..n).collect();
    let mut num = vec![0.0; n];
    let mut first = vec![0.0; n];
    let mut total = 0.0;
    let mut visit = |p: &[usize]| {
        let w: f64 = (0..n).map(|j| dens(inst.theta[p[j]], x[j])).product();
        total += w;
        for i in 0..n {
            num[i] += w * inst.theta[p[i]];
        }
        first[p[0]] += w;
    };
    heap(&mut perm, n, &mut visit);
    (
        num.iter().map(|v| v / total).collect(),
        first.iter().map(|v| v / total).collect(),
    )
}

fn heap(p: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k <= 1 {
        visit(p);
        return;
    }
    for i in 0..k - 1 {
        heap(p, k - 1, visit);
        if k.is_multiple_of(2) {
            p.swap(i, k - 1);
        } else {
            p.swap(0, k - 1);
        }
    }
    heap(p, k - 1, visit);
}

fn random_instance(rng: &mut RngStream, model: CompoundModel, n: usize) -> (CompoundInstance, Vec<f64>) {
    let theta: Vec<f64> = (0..n)
        .map(|_| match model {
            CompoundModel::GaussianLoc => 4.0 * rng.uniform() - 2.0,
            CompoundModel::Poisson => 0.2 + 5.0 * rng.uniform(),
        })
        .collect();
    let inst = CompoundInstance::new(model, theta).unwrap();
    let (_, x) = inst.sample_postulated(rng);
    (inst, x)
}

#[test]
fn pi_oracle_matches_enumeration() {
    let mut rng = RngStream::new(2024);
    for trial in 0..40 {
        let model = if trial % 2 == 0 {
            CompoundModel::GaussianLoc
        } else {
            CompoundModel::Poisson
        };
        let n = 2 + trial % 6;
        let (inst, x) = random_instance(&mut rng, model, n);
        let e = pi_oracle(&inst, &x).unwrap();
        let (pi, first) = enumerate_pi(&inst, &x);
        for i in 0..n {
            assert!(
                (e.pi[i] - pi[i]).abs() <= 1e-10 * pi[i].abs().max(1e-300) + 1e-15,
                "{} vs {}",
                e.pi[i],
                pi[i]
            );
            assert!((e.posterior_first[i] - first[i]).abs() <= 1e-10);
        }
        assert!((e.posterior_first.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
    }
}

#[test]
fn poisson_separable_direct() {
    let inst = CompoundInstance::new(CompoundModel::Poisson, vec![1.0, 2.0, 3.0, 0.5]).unwrap();
    let x = [0.0, 2.0, 5.0, 1.0];
    let got = separable_oracle(&inst, &x).unwrap();
    for (i, &xi) in x.iter().enumerate() {
        let k = xi as i32;
        // the 1/x! factor cancels in the ratio
        let w: Vec<f64> = inst.theta.iter().map(|&t| (-t).exp() * t.powi(k)).collect();
        let want = w.iter().zip(&inst.theta).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>();
        assert_relative_eq!(got[i], want, max_relative = 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pi_oracle_equivariant(seed in any::<u64>(), n in 2usize..7) {
        let mut rng = RngStream::new(seed);
        let (inst, x) = random_instance(&mut rng, CompoundModel::GaussianLoc, n);
        let perm = rng.permutation(n);
        let inst2 = CompoundInstance::new(inst.model, perm.iter().map(|&k| inst.theta[k]).collect()).unwrap();
        let x2: Vec<f64> = perm.iter().map(|&k| x[k]).collect();
        let a = pi_oracle(&inst, &x).unwrap();
        let b = pi_oracle(&inst2, &x2).unwrap();
        let (lo, hi) = inst.theta.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &t| (l.min(t), h.max(t)));
        for i in 0..n {
            prop_assert!((b.pi[i] - a.pi[perm[i]]).abs() <= 1e-12);
            prop_assert!(a.pi[i] >= lo && a.pi[i] <= hi);
        }
    }

    #[test]
    fn interp_residuals_small(seed in any::<u64>(), poisson in any::<bool>()) {
        let mut rng = RngStream::new(seed);
        let model = if poisson { CompoundModel::Poisson } else { CompoundModel::GaussianLoc };
        let (inst, x) = random_instance(&mut rng, model, 3);
        let c = interp_identity_check(&inst, &x).unwrap();
        prop_assert!(c.residual_direct < 1e-7 && c.residual_route < 1e-7, "{:?}", c);
    }
}

#[test]
fn interp_examples() {
    let g = CompoundInstance::new(CompoundModel::GaussianLoc, vec![-1.0, 0.0, 1.0]).unwrap();
    let p = CompoundInstance::new(CompoundModel::Poisson, vec![0.5, 3.0]).unwrap();
    let mut rng = RngStream::new(5);
    for _ in 0..10 {
        let (_, x) = g.sample_postulated(&mut rng);
        assert!(interp_identity_check(&g, &x).unwrap().residual_route < 1e-7);
        let (_, x) = p.sample_postulated(&mut rng);
        assert!(interp_identity_check(&p, &x).unwrap().residual_route < 1e-7);
    }
}

#[test]
fn gap_positive_and_shrinks() {
    let inst = CompoundInstance::new(CompoundModel::GaussianLoc, vec![-1.0, 1.0]).unwrap();
    let g = regret_gap_mc(&inst, 20_000, 7).unwrap();
    assert!(g.mean > 5.0 * g.std_error);
    let mut prev = f64::INFINITY;
    for mu in [0.5, 0.25, 0.125] {
        let inst = CompoundInstance::new(CompoundModel::GaussianLoc, vec![-mu, mu]).unwrap();
        let g = regret_gap_mc(&inst, 20_000, 7).unwrap();
        assert!(g.mean >= -3.0 * g.std_error);
        assert!(g.mean < prev);
        prev = g.mean;
    }
}

#[test]
fn orthogonality_small_instances() {
    for (model, theta) in [
        (CompoundModel::GaussianLoc, vec![0.0, 1.0, 2.0]),
        (CompoundModel::Poisson, vec![1.0, 4.0]),
    ] {
        let inst = CompoundInstance::new(model, theta).unwrap();
        let o = orthogonality_check(&inst, 20_000, 3).unwrap();
        assert!(o.pass, "{o:?}");
    }
}

#[test]
fn transportation_random_audit() {
    let mut rng = RngStream::new(77);
    for case in 0..60 {
        let h = [0.5, 2.0, 8.0][case % 3];
        let atoms = 1 + rng.below(4);
        let raw: Vec<f64> = (0..atoms).map(|_| rng.uniform() + 1e-3).collect();
        let z: f64 = raw.iter().sum();
        let mixing: Vec<(f64, f64)> = raw.iter().map(|w| (h * rng.uniform(), w / z)).collect();
        let support = 1 + (2.0 * h) as usize;
        let mut mu: Vec<f64> = (0..=support).map(|_| rng.uniform()).collect();
        let z: f64 = mu.iter().sum();
        mu.iter_mut().for_each(|v| *v /= z);
        let mean: f64 = mu.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        if mean > h {
            continue;
        }
        assert!(transportation_check(h, &mixing, &mu).unwrap().pass);
    }
}

#[test]
fn tilt_simulated_posteriors() {
    let h = 4.0;
    let grid: Vec<f64> = (0..=400).map(|i| -20.0 + 0.1 * i as f64).collect();
    let mut rng = RngStream::new(99);
    for _ in 0..30 {
        let theta: Vec<f64> = (0..3).map(|_| h * (2.0 * rng.uniform() - 1.0) / 2.0).collect();
        let x = theta[0] + rng.standard_normal();
        let post = half_noise_posterior(&theta, x).unwrap();
        let h_eff = 2.0 * theta.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        assert!(tilt_variance_check(&post, h_eff.max(1e-12), &grid).unwrap().pass);
    }
}

#[test]
fn mutual_information_chain() {
    let cfg = QuadConfig::default();
    for (h, n) in [(0.5, 4usize), (1.0, 6), (2.0, 4), (2.0, 10)] {
        let theta: Vec<f64> = (0..n).map(|i| if i < n / 2 { 0.0 } else { h }).collect();
        let inst = CompoundInstance::new(CompoundModel::GaussianLoc, theta.clone()).unwrap();
        let g = regret_gap_mc(&inst, 4_000, 13).unwrap();
        // N(θ, 1/2) is N(θ√2, 1) after rescaling the observation
        let half = gauss_members(&theta.iter().map(|t| t * 2f64.sqrt()).collect::<Vec<_>>());
        let chi2 = permix::permanent::chi2_exact(&half, &cfg).unwrap();
        let scale = 2.0 * (h * h + 1.0);
        assert!(
            g.mean / scale <= (1.0 + chi2).ln() + 4.0 * g.std_error / scale,
            "h={h} n={n}"
        );
    }
}
