//! Running a chain end to end: initialization, sweeps, post-burn-in
//! snapshots and the summary statistics reported for each run.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::datagen::kmeans_init;
use crate::diagnostics::{binder_point_estimate, ess, CoClusteringMatrix};
use crate::error::{invalid, Result};
use crate::randkit::RngStream;
use crate::samplers::{sweep, SamplerKind};
use crate::state::{rand_index, MixtureState, ModelConfig, Partition, TraceRecord};

/// Version of the [`RunSummary`] layout.
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Number of leading sweeps timed by the feasibility guard.
pub const GUARD_SWEEPS: usize = 10;

/// Starting partition of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Singletons,
    OneBlock,
    /// k-means with this many centers (capped at `n`).
    KMeans(usize),
}

impl Init {
    pub fn partition<R: rand::Rng + ?Sized>(&self, rng: &mut R, data: &[f64]) -> Result<Partition> {
        match *self {
            Init::Singletons => Ok(Partition::singletons(data.len())),
            Init::OneBlock => Ok(Partition::one_block(data.len())),
            Init::KMeans(k) => kmeans_init(rng, data, k.min(data.len())),
        }
    }
}

/// Settings of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub sampler: SamplerKind,
    pub iterations: usize,
    pub burn_in: usize,
    /// Keep every `thin`-th post-burn-in partition.
    pub thin: usize,
    pub init: Init,
    pub alpha_init: f64,
    /// Wall-time budget for the first [`GUARD_SWEEPS`] sweeps; `None`
    /// disables the guard.
    pub guard_budget: Option<Duration>,
}

impl RunConfig {
    /// 10,000 sweeps with 5,000 burn-in, k-means(5) start, α = 1 and a
    /// one-second guard.
    pub fn paper(sampler: SamplerKind) -> Self {
        RunConfig {
            sampler,
            iterations: 10_000,
            burn_in: 5_000,
            thin: 1,
            init: Init::KMeans(5),
            alpha_init: 1.0,
            guard_budget: Some(Duration::from_secs(1)),
        }
    }

    /// [`RunConfig::paper`] with 1,000 burn-in and 1,000 kept sweeps.
    pub fn desk(sampler: SamplerKind) -> Self {
        RunConfig {
            iterations: 2_000,
            burn_in: 1_000,
            ..RunConfig::paper(sampler)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return Err(invalid("need 0 <= burn_in < iterations"));
        }
        if self.thin == 0 {
            return Err(invalid("thin must be at least 1"));
        }
        if !(self.alpha_init > 0.0 && self.alpha_init.is_finite()) {
            return Err(invalid("alpha_init must be positive"));
        }
        Ok(())
    }
}

/// Summary of a finished (or aborted) chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub sampler: String,
    pub n: usize,
    pub iterations: usize,
    pub burn_in: usize,
    /// Sweeps actually run.
    pub completed: usize,
    /// Set when the guard stopped the chain.
    pub infeasible: bool,
    pub guard_elapsed_ns: u64,
    pub ess_loglik: Option<f64>,
    pub ess_h: Option<f64>,
    pub ess_loglik_per_s: Option<f64>,
    pub ess_h_per_s: Option<f64>,
    pub mean_sweep_ns: f64,
    pub median_sweep_ns: f64,
    pub mean_k: f64,
    pub mean_h: f64,
    pub final_alpha: f64,
    /// Binder point estimate, 1-based comma-separated labels.
    pub binder: Option<String>,
    pub binder_clusters: Option<usize>,
    pub rand_binder: Option<f64>,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<TraceRecord>,
    /// Post-burn-in partitions (thinned).
    pub snapshots: Vec<Partition>,
    pub coclustering: CoClusteringMatrix,
    pub binder: Option<Partition>,
    pub summary: RunSummary,
}

/// Runs one chain on `data`. When `truth` is given the summary reports the
/// Rand index of the Binder estimate against it.
pub fn run_chain(
    data: &[f64],
    truth: Option<&Partition>,
    model: &ModelConfig,
    run: &RunConfig,
    rng: &mut RngStream,
) -> Result<RunOutput> {
    run.validate()?;
    model.validate()?;
    if data.is_empty() {
        return Err(invalid("no observations"));
    }
    let n = data.len();
    let init = run.init.partition(rng, data)?;
    let mut state = MixtureState::new(init, model.alpha_fixed.unwrap_or(run.alpha_init))?;
    let mut records = Vec::with_capacity(run.iterations);
    let mut snapshots = Vec::new();
    let mut coclustering = CoClusteringMatrix::new(n);
    let mut infeasible = false;
    let mut guard_elapsed_ns = 0u64;

    for it in 0..run.iterations {
        let rec = sweep(run.sampler, &mut state, data, model, rng)?;
        if it < GUARD_SWEEPS {
            guard_elapsed_ns += rec.elapsed_ns;
        }
        records.push(rec);
        if it + 1 == GUARD_SWEEPS.min(run.iterations) {
            if let Some(budget) = run.guard_budget {
                if guard_elapsed_ns as u128 > budget.as_nanos() {
                    infeasible = true;
                    break;
                }
            }
        }
        if it >= run.burn_in && (it - run.burn_in).is_multiple_of(run.thin) {
            coclustering.accumulate(&state.partition)?;
            snapshots.push(state.partition.clone());
        }
    }

    let binder = if snapshots.is_empty() {
        None
    } else {
        Some(binder_point_estimate(&snapshots, &coclustering)?)
    };
    let rand_binder = match (&binder, truth) {
        (Some(b), Some(t)) if n >= 2 => Some(rand_index(b, t)?),
        _ => None,
    };
    let summary = summarize(run, n, &records, infeasible, guard_elapsed_ns, &binder, rand_binder, state.alpha);
    Ok(RunOutput {
        records,
        snapshots,
        coclustering,
        binder,
        summary,
    })
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    run: &RunConfig,
    n: usize,
    records: &[TraceRecord],
    infeasible: bool,
    guard_elapsed_ns: u64,
    binder: &Option<Partition>,
    rand_binder: Option<f64>,
    final_alpha: f64,
) -> RunSummary {
    let kept: &[TraceRecord] = if records.len() > run.burn_in { &records[run.burn_in..] } else { &[] };
    let kept_ns: u64 = kept.iter().map(|r| r.elapsed_ns).sum();
    let per_second = |e: Option<f64>| e.filter(|_| kept_ns > 0).map(|e| e / (kept_ns as f64 * 1e-9));
    let loglik: Vec<f64> = kept.iter().map(|r| r.loglik).collect();
    let hs: Vec<f64> = kept.iter().map(|r| r.h as f64).collect();
    let ess_loglik = ess(&loglik).ok().map(|e| e.value);
    let ess_h = ess(&hs).ok().map(|e| e.value);
    let mut times: Vec<f64> = records.iter().map(|r| r.elapsed_ns as f64).collect();
    times.sort_by(f64::total_cmp);
    let mean = |xs: &mut dyn Iterator<Item = f64>, len: usize| {
        if len == 0 {
            0.0
        } else {
            xs.sum::<f64>() / len as f64
        }
    };
    RunSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        sampler: run.sampler.to_string(),
        n,
        iterations: run.iterations,
        burn_in: run.burn_in,
        completed: records.len(),
        infeasible,
        guard_elapsed_ns,
        ess_loglik,
        ess_h,
        ess_loglik_per_s: per_second(ess_loglik),
        ess_h_per_s: per_second(ess_h),
        mean_sweep_ns: mean(&mut times.iter().copied(), times.len()),
        median_sweep_ns: median_sorted(&times),
        mean_k: mean(&mut kept.iter().map(|r| r.k as f64), kept.len()),
        mean_h: mean(&mut hs.iter().copied(), hs.len()),
        final_alpha,
        binder: binder.as_ref().map(|b| b.to_string()),
        binder_clusters: binder.as_ref().map(|b| b.num_clusters()),
        rand_binder,
    }
}

/// Median of an ascending slice (0 when empty).
pub fn median_sorted(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        l if l % 2 == 1 => xs[l / 2],
        l => 0.5 * (xs[l / 2 - 1] + xs[l / 2]),
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(invalid("slope needs two or more positive points"));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / logs.len() as f64;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / logs.len() as f64;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("slope needs two distinct x values"));
    }
    Ok(logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}
