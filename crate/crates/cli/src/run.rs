use std::time::Duration;

use anyhow::Result;
use serde::Serialize;

use dpslice::datagen::Dataset;
use dpslice::harness::{run_chain, RunConfig, RunOutput};
use dpslice::{ModelConfig, Partition, RngStream, TraceRecord};

use crate::config::{DatasetConfig, STREAM_CHAIN};
use crate::output::{write_json, write_lines, write_with};
use crate::{usage, Ctx};

/// Ground truth of a dataset, unless its label column is blank (all zeros).
pub fn truth_of(data: &Dataset) -> Option<Partition> {
    data.labels.iter().all(|&c| c > 0).then(|| data.truth())
}

#[derive(Serialize)]
struct ResolvedRun<'a> {
    seed: u64,
    dataset: &'a DatasetConfig,
    model: &'a ModelConfig,
    run: &'a RunConfig,
}

pub fn execute(ctx: &Ctx) -> Result<bool> {
    let cfg = &ctx.config;
    let data = usage(cfg.dataset.load(ctx.seed))?;
    let model = usage(cfg.model.resolve(data.len()))?;
    let run = usage(cfg.run.resolve(ctx.preset, data.len()))?;
    let truth = truth_of(&data);
    let out = run_chain(&data.y, truth.as_ref(), &model, &run, &mut RngStream::new(ctx.seed, STREAM_CHAIN))?;

    write_json(
        &ctx.out,
        "config.json",
        &ResolvedRun {
            seed: ctx.seed,
            dataset: &cfg.dataset,
            model: &model,
            run: &run,
        },
    )?;
    write_outputs(ctx, &run, &out)?;

    let s = &out.summary;
    if s.infeasible {
        println!(
            "infeasible: first {} sweeps of {} on n={} took {:?}, over the {:?} budget",
            s.completed,
            s.sampler,
            s.n,
            Duration::from_nanos(s.guard_elapsed_ns),
            run.guard_budget.unwrap_or_default(),
        );
        return Ok(false);
    }
    println!(
        "{} n={}: {} sweeps, median sweep {:.0} ns, mean H {:.2}, Binder clusters {}, Rand {}",
        s.sampler,
        s.n,
        s.completed,
        s.median_sweep_ns,
        s.mean_h,
        s.binder_clusters.map_or("-".into(), |h| h.to_string()),
        s.rand_binder.map_or("-".into(), |r| format!("{r:.4}")),
    );
    Ok(true)
}

fn write_outputs(ctx: &Ctx, run: &RunConfig, out: &RunOutput) -> Result<()> {
    write_lines(
        &ctx.out,
        "trace.csv",
        TraceRecord::CSV_HEADER,
        out.records.iter().map(TraceRecord::csv_row),
    )?;
    let n = out.summary.n;
    let header = std::iter::once("iter".to_string())
        .chain((1..=n).map(|i| format!("c{i}")))
        .collect::<Vec<_>>()
        .join(",");
    write_lines(
        &ctx.out,
        "snapshots.csv",
        &header,
        out.snapshots
            .iter()
            .enumerate()
            .map(|(k, p)| format!("{},{p}", run.burn_in + k * run.thin + 1)),
    )?;
    if !out.snapshots.is_empty() {
        write_with(&ctx.out, "coclustering.csv", |w| out.coclustering.write_csv(w))?;
    }
    write_json(&ctx.out, "summary.json", &out.summary)?;
    Ok(())
}
