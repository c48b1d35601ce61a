//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::Instant;

use dpslice::bounds::{
    check_exponential_tail, check_merge_chain, check_poisson_tail_index, simulate_overhead, theorem_constants,
    PartitionSpec,
};
use dpslice::datagen::{gen_perturbed_zipf, gen_three_clusters, ZipfParams};
use dpslice::diagnostics::ess;
use dpslice::harness::{log_log_slope, run_chain, RunConfig};
use dpslice::oracle::{enumerate_partitions, exact_posterior, frequencies, log_eppf_dp, tv_distance, ExactPosterior};
use dpslice::randkit::sample_normal;
use dpslice::samplers::{extend_components, sample_allocated_weights, sample_slices};
use dpslice::state::relabel_compact;
use dpslice::{sweep, MixtureState, ModelConfig, Partition, RngStream, SamplerKind};

const ORACLE_DATA_SEED: u64 = 20_240_601;

struct Gate {
    failures: usize,
}

impl Gate {
    fn report(&mut self, id: &str, pass: bool, detail: String) {
        println!("criterion {id}: {} | {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failures += 1;
        }
    }
}

fn oracle_instance() -> (Vec<f64>, ModelConfig, ExactPosterior) {
    let data = gen_three_clusters(&mut RngStream::new(ORACLE_DATA_SEED, 0), 6).unwrap().y;
    let cfg = ModelConfig::for_n(6).with_fixed_alpha(1.0);
    let exact = exact_posterior(&data, 1.0, &cfg).unwrap();
    (data, cfg, exact)
}

fn sample_partitions(kind: SamplerKind, data: &[f64], cfg: &ModelConfig, sweeps: usize, seed: u64) -> Vec<Partition> {
    let mut rng = RngStream::new(seed, 0);
    let mut state = MixtureState::new(Partition::singletons(data.len()), 1.0).unwrap();
    for _ in 0..1_000 {
        sweep(kind, &mut state, data, cfg, &mut rng).unwrap();
    }
    (0..sweeps)
        .map(|_| {
            sweep(kind, &mut state, data, cfg, &mut rng).unwrap();
            state.partition.clone()
        })
        .collect()
}

fn criterion_1(gate: &mut Gate) {
    let (data, cfg, exact) = oracle_instance();
    let mut details = Vec::new();
    let mut pass = exact.len() == 203;
    for (s, kind) in [
        SamplerKind::SliceExact,
        SamplerKind::SliceMarginalAtoms,
        SamplerKind::CrpWithAtoms,
        SamplerKind::CrpCollapsed,
    ]
    .into_iter()
    .enumerate()
    {
        let samples = sample_partitions(kind, &data, &cfg, 50_000, 100 + s as u64);
        let tv = tv_distance(&frequencies(&samples), &exact);
        pass &= tv < 0.1;
        details.push(format!("{kind} TV={tv:.4}"));
    }
    gate.report("1 exactness vs oracle (TV < 0.1)", pass, details.join(", "));
}

fn criterion_2(gate: &mut Gate) {
    let (data, cfg, exact) = oracle_instance();
    let samples = sample_partitions(SamplerKind::BlockedGibbs { truncation: 2 }, &data, &cfg, 50_000, 200);
    let freq: HashMap<Partition, f64> = frequencies(&samples);
    let empirical: f64 = freq.iter().filter(|(p, _)| p.num_clusters() > 2).map(|(_, f)| f).fold(0.0, |a, b| a + b);
    let oracle = exact.mass_above(2);
    gate.report(
        "2 truncation bias of BGS-2",
        empirical == 0.0 && oracle > 0.0,
        format!("empirical mass(H>2)={empirical}, oracle mass(H>2)={oracle:.4}"),
    );
}

fn criterion_3(gate: &mut Gate) {
    let m = 100_000;
    let root = RngStream::new(3, 0);
    let mut pass = true;
    let mut details = Vec::new();
    let c = theorem_constants(1.0, 0.1).unwrap();
    let c_ok = (c.c_delta - 57.02).abs() < 0.01;
    pass &= c_ok;
    details.push(format!("C_0.1(α=1)={:.3}", c.c_delta));
    for (i, &alpha) in [0.5, 1.0, 5.0].iter().enumerate() {
        for (j, &n) in [100usize, 1_000, 10_000].iter().enumerate() {
            let start = Instant::now();
            let results =
                simulate_overhead(&root.substream((3 * i + j) as u64), n, &PartitionSpec::Singleton, alpha, m).unwrap();
            for &delta in &[0.1, 0.01] {
                let c = theorem_constants(alpha, delta).unwrap();
                let threshold = c.threshold(n);
                let exceed = results.iter().filter(|s| s.k_minus_h as f64 > threshold).count() as f64 / m as f64;
                let allowed = delta + 3.0 * (delta / m as f64).sqrt();
                let ok = exceed <= allowed;
                pass &= ok;
                if !ok {
                    details.push(format!("FAILED n={n} α={alpha} δ={delta}: {exceed} > {allowed}"));
                }
            }
            let max = results.iter().map(|s| s.k_minus_h).max().unwrap();
            details.push(format!("n={n} α={alpha} max(K−H)={max} ({:.1}s)", start.elapsed().as_secs_f64()));
        }
    }
    gate.report("3 overhead bound P(K−H > C_δ log n) ≤ δ", pass, details.join("; "));
}

fn criterion_4(gate: &mut Gate) {
    let n = 1_000;
    let results = simulate_overhead(&RngStream::new(4, 0), n, &PartitionSpec::Singleton, 1.0, 100_000).unwrap();
    let c = theorem_constants(1.0, 0.1).unwrap();
    let r = check_exponential_tail(&results, &c, n, &[0.5, 1.0, 2.0, 3.0]).unwrap();
    let tails: Vec<String> = r.points.iter().map(|p| format!("t={} tail={} ≤ {:.4}", p.t, p.empirical, p.allowed)).collect();
    gate.report(
        "4 exponential tails and first moment",
        r.pass && (r.first_moment_bound - 43.87).abs() < 0.01,
        format!(
            "{}; mean (K−H)/log n={:.4} ≤ {:.3}",
            tails.join(", "),
            r.mean_normalized,
            r.first_moment_bound
        ),
    );
}

fn criterion_5(gate: &mut Gate) {
    let r = check_poisson_tail_index(&RngStream::new(5, 0), (-1.0f64).exp(), 2.0, 100_000).unwrap();
    gate.report(
        "5 Poisson law of the tail index",
        (r.mean - 2.0).abs() <= 0.02 && r.pass,
        format!(
            "mean={:.4}, chi2={:.2} on {} dof (critical {:.2})",
            r.mean, r.chi_square, r.dof, r.critical
        ),
    );
}

fn criterion_6(gate: &mut Gate) {
    let reports = check_merge_chain(&RngStream::new(6, 0), 6, &[1e-3, 1e-2, 0.05], 1.0, 1_000_000).unwrap();
    let pass = reports.len() == 5 && reports.iter().all(|r| r.pass);
    let steps: Vec<String> = reports
        .iter()
        .map(|r| {
            let surv: Vec<String> = r.survival().iter().map(|(x, a, b)| format!("x={x}: {a:.4}→{b:.4}")).collect();
            format!("{:?}→{:?} [{}]", r.sizes, r.merged_sizes, surv.join(" "))
        })
        .collect();
    gate.report("6 merge monotonicity of u_min survival", pass, steps.join("; "));
}

fn median_sweep_ns(kind: SamplerKind, data: &[f64], iterations: usize, seed: u64) -> f64 {
    let mut rng = RngStream::new(seed, 0);
    let run = RunConfig {
        iterations,
        burn_in: iterations / 2,
        guard_budget: None,
        ..RunConfig::desk(kind)
    };
    run_chain(data, None, &ModelConfig::for_n(data.len()), &run, &mut rng)
        .unwrap()
        .summary
        .median_sweep_ns
}

fn criterion_7(gate: &mut Gate) {
    let ns = [150usize, 300, 600, 1_500, 3_000];
    let data: Vec<Vec<f64>> =
        ns.iter().map(|&n| gen_three_clusters(&mut RngStream::new(70, n as u64), n).unwrap().y).collect();
    let slice: Vec<(f64, f64)> = ns
        .iter()
        .zip(&data)
        .map(|(&n, y)| (n as f64, median_sweep_ns(SamplerKind::SliceExact, y, 1_000, 71)))
        .collect();
    let bgs: Vec<(f64, f64)> = ns[..3]
        .iter()
        .zip(&data)
        .map(|(&n, y)| (n as f64, median_sweep_ns(SamplerKind::BlockedGibbs { truncation: n }, y, 1_000, 72)))
        .collect();
    let crp = median_sweep_ns(SamplerKind::CrpWithAtoms, &data[4], 1_000, 73);
    let slice_slope = log_log_slope(&slice).unwrap();
    let bgs_slope = log_log_slope(&bgs).unwrap();
    let slice_3000 = slice[4].1;
    let pass = (0.8..=1.3).contains(&slice_slope) && bgs_slope >= 1.5 && crp > slice_3000;
    gate.report(
        "7 scaling orderings",
        pass,
        format!(
            "slice slope={slice_slope:.3} (medians ns {:?}), BGS-n slope={bgs_slope:.3}, CRP/slice at n=3000={:.2}",
            slice.iter().map(|p| p.1.round()).collect::<Vec<_>>(),
            crp / slice_3000
        ),
    );
}

fn rand_of(kind: SamplerKind, y: &[f64], truth: &Partition, seed: u64) -> f64 {
    let mut rng = RngStream::new(seed, 0);
    let run = RunConfig {
        guard_budget: None,
        ..RunConfig::desk(kind)
    };
    run_chain(y, Some(truth), &ModelConfig::for_n(y.len()), &run, &mut rng)
        .unwrap()
        .summary
        .rand_binder
        .unwrap()
}

fn criterion_8(gate: &mut Gate) {
    let mut pass = true;
    let mut details = Vec::new();
    for &n in &[150usize, 300, 600, 1_500, 3_000] {
        let d = gen_three_clusters(&mut RngStream::new(80, n as u64), n).unwrap();
        let r = rand_of(SamplerKind::SliceExact, &d.y, &d.truth(), 81);
        pass &= r >= 0.83;
        details.push(format!("three n={n} slice={r:.4}"));
    }
    for &n in &[300usize, 600, 1_500, 3_000] {
        let d = gen_perturbed_zipf(&mut RngStream::new(82, n as u64), n, ZipfParams::default()).unwrap();
        let slice = rand_of(SamplerKind::SliceExact, &d.y, &d.truth(), 83);
        let bgs = rand_of(SamplerKind::BlockedGibbs { truncation: 10 }, &d.y, &d.truth(), 84);
        pass &= slice >= 0.85 && bgs <= 0.70;
        details.push(format!("zipf n={n} slice={slice:.4} bgs-10={bgs:.4}"));
    }
    gate.report("8 inference quality (Rand of Binder estimate)", pass, details.join(", "));
}

fn criterion_9(gate: &mut Gate) {
    let mut rng = RngStream::new(9, 0);
    let mut failures = Vec::new();

    for trial in 0..200 {
        let sizes: Vec<usize> = (0..1 + trial % 7).map(|h| 1 + (trial * 7 + h * 3) % 5).collect();
        let alpha = 0.1 + (trial % 13) as f64;
        let mut w = sample_allocated_weights(&mut rng, &sizes, alpha).unwrap();
        let p = Partition::from_sizes(&sizes).unwrap();
        let (_, umin) = sample_slices(&mut rng, &p, &w).unwrap();
        let k = extend_components(&mut rng, &mut w, umin, alpha, None).unwrap();
        if (w.total() - 1.0).abs() > 1e-10 || w.iter().any(|x| x < 0.0) {
            failures.push("simplex");
        }
        if k < sizes.len() || w.residual > umin {
            failures.push("K >= H");
        }
    }

    let y: Vec<f64> = gen_three_clusters(&mut rng, 40).unwrap().y;
    let cfg = ModelConfig::for_n(40);
    for kind in [SamplerKind::SliceExact, SamplerKind::CrpCollapsed, SamplerKind::BlockedGibbs { truncation: 8 }] {
        let mut state = MixtureState::new(Partition::singletons(40), 1.0).unwrap();
        for _ in 0..50 {
            let r = sweep(kind, &mut state, &y, &cfg, &mut rng).unwrap();
            if state.partition.validate().is_err() {
                failures.push("compactness");
            }
            if r.k < r.h {
                failures.push("K >= H");
            }
        }
    }

    let trace: Vec<f64> = (0..2_000).map(|_| sample_normal(&mut rng, 0.0, 1.0).unwrap()).collect();
    let base = ess(&trace).unwrap().value;
    let affine: Vec<f64> = trace.iter().map(|x| -3.0 * x + 7.0).collect();
    if (ess(&affine).unwrap().value / base - 1.0).abs() > 1e-9 {
        failures.push("ESS affine invariance");
    }

    let total: f64 = enumerate_partitions(4).unwrap().map(|p| log_eppf_dp(relabel_compact(&p).sizes(), 1.7).exp()).sum();
    if (total - 1.0).abs() > 1e-12 {
        failures.push("EPPF normalization over [4]");
    }

    let chain = |seed| {
        let mut r = RngStream::new(seed, 4);
        let mut s = MixtureState::new(Partition::one_block(40), 1.0).unwrap();
        (0..30).map(|_| sweep(SamplerKind::SliceExact, &mut s, &y, &cfg, &mut r).unwrap().loglik.to_bits()).collect::<Vec<_>>()
    };
    if chain(11) != chain(11) {
        failures.push("determinism under seed");
    }

    failures.dedup();
    gate.report(
        "9 invariants (simplex, compactness, K ≥ H, ESS affine, EPPF, determinism)",
        failures.is_empty(),
        if failures.is_empty() { "all hold".into() } else { format!("violated: {}", failures.join(", ")) },
    );
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters from other targets must not run the gate.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut gate = Gate { failures: 0 };
    type Criterion = (&'static str, fn(&mut Gate));
    let criteria: [Criterion; 9] = [
        ("1", criterion_1),
        ("2", criterion_2),
        ("3", criterion_3),
        ("4", criterion_4),
        ("5", criterion_5),
        ("6", criterion_6),
        ("7", criterion_7),
        ("8", criterion_8),
        ("9", criterion_9),
    ];
    let only: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    for (id, run) in criteria {
        if only.is_empty() || only.iter().any(|f| f.as_str() == id) {
            let start = Instant::now();
            run(&mut gate);
            println!("    ({:.1}s)", start.elapsed().as_secs_f64());
        }
    }
    if gate.failures == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} criterion(s) failed", gate.failures);
        ExitCode::FAILURE
    }
}
