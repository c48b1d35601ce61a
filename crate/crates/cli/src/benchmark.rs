use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;

use dpslice::harness::run_chain;
use dpslice::{RngStream, SamplerKind};

use crate::config::{SamplerName, STREAM_CHAIN};
use crate::output::write_with;
use crate::run::truth_of;
use crate::{usage, Ctx};

/// One row of `benchmark.csv`; the column order is part of the output format.
#[derive(Debug, Serialize)]
struct Row {
    sampler: String,
    n: usize,
    #[serde(rename = "L")]
    truncation: Option<usize>,
    seed: u64,
    median_sweep_ns: f64,
    ess_loglik_per_s: Option<f64>,
    #[serde(rename = "ess_H_per_s")]
    ess_h_per_s: Option<f64>,
    rand_binder: Option<f64>,
    infeasible: bool,
}

fn cell(ctx: &Ctx, seed: u64, n: usize, sampler: &SamplerName, dataset: &crate::config::DatasetConfig) -> Result<Row> {
    let data = dataset.with_n(n).load(seed)?;
    let kind = sampler.resolve(data.len())?;
    let model = ctx.config.model.resolve(data.len())?;
    let run = ctx.config.run.resolve_with(ctx.preset, kind)?;
    let truth = truth_of(&data);
    let out = run_chain(&data.y, truth.as_ref(), &model, &run, &mut RngStream::new(seed, STREAM_CHAIN))?;
    let s = out.summary;
    Ok(Row {
        sampler: sampler.0.clone(),
        n: data.len(),
        truncation: match kind {
            SamplerKind::BlockedGibbs { truncation } => Some(truncation),
            _ => None,
        },
        seed,
        median_sweep_ns: s.median_sweep_ns,
        ess_loglik_per_s: s.ess_loglik_per_s,
        ess_h_per_s: s.ess_h_per_s,
        rand_binder: s.rand_binder,
        infeasible: s.infeasible,
    })
}

pub fn execute(ctx: &Ctx) -> Result<bool> {
    let plan = usage(ctx.config.benchmark.resolve(ctx.preset, ctx.seed, &ctx.config.dataset))?;
    usage(ctx.config.run.resolve_with(ctx.preset, SamplerKind::SliceExact).map(|_| ()))?;
    let mut cells: Vec<(u64, usize, &SamplerName)> = Vec::new();
    for &seed in &plan.seeds {
        for &n in &plan.ns {
            cells.extend(plan.samplers.iter().map(|s| (seed, n, s)));
        }
    }
    let rows: Vec<Row> = cells
        .par_iter()
        .map(|&(seed, n, sampler)| cell(ctx, seed, n, sampler, &plan.dataset))
        .collect::<Result<_>>()?;

    for r in &rows {
        println!(
            "{:>14} n={:<6} seed={:<4} median sweep {:>12.0} ns{}",
            r.sampler,
            r.n,
            r.seed,
            r.median_sweep_ns,
            if r.infeasible { "  INFEASIBLE" } else { "" }
        );
    }
    let path = write_with(&ctx.out, "benchmark.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        for r in &rows {
            csv.serialize(r)?;
        }
        csv.flush()
    })?;
    println!("wrote {} cells to {}", rows.len(), path.display());
    Ok(true)
}
