use anyhow::Result;
use serde::Serialize;

use dpslice::bounds::{
    check_exponential_tail, check_merge_chain, check_poisson_tail_index, simulate_overhead, theorem_constants,
    theorem_grid, BoundConstants, MergeReport, PartitionSpec, PoissonReport, TailReport, TheoremReport,
};
use dpslice::RngStream;

use crate::config::{VerifyPlan, STREAM_VERIFY};
use crate::output::{write_json, write_lines};
use crate::{usage, Ctx};

#[derive(Serialize)]
struct VerifyReport {
    schema_version: u32,
    seed: u64,
    plan: VerifyPlan,
    constants: Vec<BoundConstants>,
    theorem: Vec<TheoremReport>,
    tail: Option<TailReport>,
    merge: Option<Vec<MergeReport>>,
    poisson: Option<PoissonReport>,
    pass: bool,
}

pub fn execute(ctx: &Ctx) -> Result<bool> {
    let plan = usage(ctx.config.verify.resolve(ctx.preset))?;
    let root = RngStream::new(ctx.seed, STREAM_VERIFY);

    let mut constants = Vec::new();
    for &alpha in &plan.alphas {
        for &delta in &plan.deltas {
            constants.push(theorem_constants(alpha, delta)?);
        }
    }
    let theorem = theorem_grid(
        &root.substream(0),
        &plan.ns,
        &plan.alphas,
        &plan.deltas,
        &plan.spec,
        plan.replicates,
    )?;
    for r in &theorem {
        println!(
            "theorem n={} alpha={} delta={} spec={}: threshold C log n = {:.1}, exceedance {} (allowed {:.4}), max K-H {} {}",
            r.n,
            r.alpha,
            r.delta,
            r.spec,
            r.threshold,
            r.exceedance,
            r.allowed,
            r.max_overhead,
            verdict(r.pass)
        );
    }

    let tail = match &plan.tail {
        Some(t) => {
            let m = t.replicates.unwrap_or_default();
            let results = simulate_overhead(&root.substream(1), t.n, &PartitionSpec::Singleton, t.alpha, m)?;
            // b1 and b2 do not depend on δ.
            let report = check_exponential_tail(&results, &theorem_constants(t.alpha, 0.5)?, t.n, &t.ts)?;
            println!(
                "tail n={} alpha={}: mean (K-H)/log n = {:.3} (bound {:.2}) {}",
                report.n,
                report.alpha,
                report.mean_normalized,
                report.first_moment_bound,
                verdict(report.pass)
            );
            Some(report)
        }
        None => None,
    };

    let merge = match &plan.merge {
        Some(m) => {
            let reports = check_merge_chain(&root.substream(2), m.n, &m.xs, m.alpha, m.replicates.unwrap_or_default())?;
            for r in &reports {
                println!("merge {:?} -> {:?} {}", r.sizes, r.merged_sizes, verdict(r.pass));
            }
            Some(reports)
        }
        None => None,
    };

    let poisson = match &plan.poisson {
        Some(p) => {
            let r = check_poisson_tail_index(&root.substream(3), p.x, p.alpha, p.replicates.unwrap_or_default())?;
            println!(
                "poisson x={:.4} alpha={}: mean {:.4} (rate {:.4}), chi2 {:.2} on {} dof (critical {:.2}) {}",
                r.x,
                r.alpha,
                r.mean,
                r.rate,
                r.chi_square,
                r.dof,
                r.critical,
                verdict(r.pass)
            );
            Some(r)
        }
        None => None,
    };

    let pass = theorem.iter().all(|r| r.pass)
        && tail.as_ref().is_none_or(|r| r.pass)
        && merge.as_ref().is_none_or(|rs| rs.iter().all(|r| r.pass))
        && poisson.as_ref().is_none_or(|r| r.pass);

    write_lines(
        &ctx.out,
        "verify.csv",
        TheoremReport::CSV_HEADER,
        theorem.iter().map(TheoremReport::csv_row),
    )?;
    write_json(
        &ctx.out,
        "verify.json",
        &VerifyReport {
            schema_version: 1,
            seed: ctx.seed,
            plan,
            constants,
            theorem,
            tail,
            merge,
            poisson,
            pass,
        },
    )?;
    println!("verify: {}", verdict(pass));
    Ok(pass)
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}
