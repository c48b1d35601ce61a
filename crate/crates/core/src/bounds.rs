//! Monte Carlo checks of the high-probability bounds on the slice overhead
//! `K − H`.
//!
//! With the partition held fixed, one replicate redraws the allocated
//! weights from `Dirichlet(n_1, …, n_H, α)`, the slices, and the tail sticks
//! (through the same [`extend_components`] the sampler uses) and records how
//! many components were instantiated beyond the occupied ones. The checks
//! compare the empirical law of that overhead against the closed-form
//! constants of [`theorem_constants`].
//!
//! Replicates run in parallel; replicate `i` always draws from substream `i`
//! of the caller's [`RngStream`], so results do not depend on thread count.

use std::f64::consts::{E, LN_2};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Result};
use crate::randkit::{uniform_unchecked, RngStream};
use crate::samplers::{allocated_weights_into, extend_components};
use crate::state::{Partition, WeightState};

/// Explicit constants of the overhead bound `K − H ≤ C_δ log n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub alpha: f64,
    pub delta: f64,
    pub b1: f64,
    pub b2: f64,
    /// `b1 + b2 log(1/δ)`.
    pub c_delta: f64,
    /// `b1 / log 2 + b2`, the almost-sure growth constant (reported only).
    pub d_alpha: f64,
}

impl BoundConstants {
    /// Threshold `C_δ log n` on the overhead.
    pub fn threshold(&self, n: usize) -> f64 {
        self.c_delta * (n as f64).ln()
    }

    /// `C_{α,1} = b1 + b2`, the bound on `E[(K − H)/log n]`.
    pub fn first_moment_bound(&self) -> f64 {
        self.b1 + self.b2
    }

    /// `C_{α,p} = 2^{p−1} (b1^p + p Γ(p) b2^p)`.
    pub fn moment_bound(&self, p: f64) -> f64 {
        let gamma_p = statrs::function::gamma::gamma(p);
        2f64.powf(p - 1.0) * (self.b1.powf(p) + p * gamma_p * self.b2.powf(p))
    }
}

/// Evaluates
/// `B² = (6α + 1)/log 2`,
/// `B¹ = 12α + (1 + 3α log(8e(1 + α)²) + log 2)/log 2`,
/// `C_δ = B¹ + B² log(1/δ)` and `D_α = B¹/log 2 + B²`.
pub fn theorem_constants(alpha: f64, delta: f64) -> Result<BoundConstants> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid(format!("alpha must be positive, got {alpha}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    let b2 = (6.0 * alpha + 1.0) / LN_2;
    let b1 = 12.0 * alpha + (1.0 + 3.0 * alpha * (8.0 * E * (1.0 + alpha).powi(2)).ln() + LN_2) / LN_2;
    Ok(BoundConstants {
        alpha,
        delta,
        b1,
        b2,
        c_delta: b1 + b2 * (1.0 / delta).ln(),
        d_alpha: b1 / LN_2 + b2,
    })
}

/// `n(α + n − 1) x (1 + log(1/x))`, an upper bound on `P(u_min ≤ x | ρ_n)`
/// valid for every partition of `n` items. May exceed one.
pub fn umin_tail_bound(n: usize, alpha: f64, x: f64) -> f64 {
    let n = n as f64;
    n * (alpha + n - 1.0) * x * (1.0 + (1.0 / x).ln())
}

/// The slice level `x(n, δ) = δ / (4 n (α + n − 1) log(2 n (α + n − 1) e / δ))`
/// at which both halves of the overhead bound hold with probability `δ/2`.
pub fn x_of_n_delta(n: usize, alpha: f64, delta: f64) -> f64 {
    let m = n as f64 * (alpha + n as f64 - 1.0);
    delta / (4.0 * m * (2.0 * m * E / delta).ln())
}

/// Fixed partition under which overheads are simulated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionSpec {
    Singleton,
    OneBlock,
    /// `h` blocks whose sizes differ by at most one.
    Balanced(usize),
    Custom(Vec<usize>),
}

impl PartitionSpec {
    pub fn sizes(&self, n: usize) -> Result<Vec<usize>> {
        let sizes = match self {
            PartitionSpec::Singleton => vec![1; n],
            PartitionSpec::OneBlock => vec![n],
            PartitionSpec::Balanced(h) => {
                if *h == 0 || *h > n {
                    return Err(invalid(format!("cannot split {n} items into {h} blocks")));
                }
                (0..*h).map(|b| n / h + usize::from(b < n % h)).collect()
            }
            PartitionSpec::Custom(s) => {
                if s.iter().sum::<usize>() != n {
                    return Err(invalid("custom block sizes must sum to n"));
                }
                s.clone()
            }
        };
        if n == 0 || sizes.contains(&0) {
            return Err(invalid("partition spec needs n >= 1 and positive sizes"));
        }
        Ok(sizes)
    }

    pub fn name(&self) -> String {
        match self {
            PartitionSpec::Singleton => "singleton".into(),
            PartitionSpec::OneBlock => "one_block".into(),
            PartitionSpec::Balanced(h) => format!("balanced_{h}"),
            PartitionSpec::Custom(s) => format!(
                "custom_{}",
                s.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("_")
            ),
        }
    }
}

/// One simulated overhead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverheadSample {
    pub k_minus_h: usize,
    pub umin: f64,
}

/// Draws weights, slices and tail sticks for the partition with the given
/// block sizes; returns `(K − H, u_min)`.
fn overhead_replicate(
    rng: &mut RngStream,
    partition: &Partition,
    alpha: f64,
    weights: &mut WeightState,
) -> Result<OverheadSample> {
    allocated_weights_into(rng, partition.sizes(), alpha, weights);
    let umin = slice_minimum(rng, partition, weights);
    let k = extend_components(rng, weights, umin, alpha, None)?;
    Ok(OverheadSample {
        k_minus_h: k - partition.num_clusters(),
        umin,
    })
}

// Same draws as `samplers::sample_slices`, keeping only the minimum.
fn slice_minimum(rng: &mut RngStream, partition: &Partition, weights: &WeightState) -> f64 {
    partition
        .labels()
        .iter()
        .map(|&c| uniform_unchecked(rng, 0.0, weights.allocated[c]))
        .fold(f64::INFINITY, f64::min)
}

/// `replicates` independent overheads `K − H` for a fixed partition.
pub fn simulate_overhead(
    rng: &RngStream,
    n: usize,
    spec: &PartitionSpec,
    alpha: f64,
    replicates: usize,
) -> Result<Vec<OverheadSample>> {
    if replicates == 0 {
        return Err(invalid("need at least one replicate"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid(format!("alpha must be positive, got {alpha}")));
    }
    let partition = Partition::from_sizes(&spec.sizes(n)?)?;
    (0..replicates as u64)
        .into_par_iter()
        .map_init(WeightState::default, |weights, i| {
            overhead_replicate(&mut rng.substream(i), &partition, alpha, weights)
        })
        .collect()
}

/// Outcome of the `P(K − H > C_δ log n) ≤ δ` check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub n: usize,
    pub alpha: f64,
    pub delta: f64,
    pub spec: String,
    pub replicates: usize,
    pub threshold: f64,
    pub exceedance: f64,
    /// `δ + 3 √(δ(1 − δ)/M)`.
    pub allowed: f64,
    pub max_overhead: usize,
    pub pass: bool,
}

impl TheoremReport {
    pub const CSV_HEADER: &'static str = "n,alpha,delta,spec,exceedance,threshold,pass";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.n, self.alpha, self.delta, self.spec, self.exceedance, self.threshold, self.pass
        )
    }
}

fn exceedance(results: &[OverheadSample], threshold: f64) -> f64 {
    results.iter().filter(|s| s.k_minus_h as f64 > threshold).count() as f64 / results.len() as f64
}

/// Empirical exceedance of `C_δ log n` against `δ` plus three Monte Carlo
/// standard errors.
pub fn check_theorem(
    results: &[OverheadSample],
    constants: &BoundConstants,
    n: usize,
    spec: &PartitionSpec,
) -> Result<TheoremReport> {
    let m = results.len();
    if m < 1000 {
        return Err(invalid(format!("need at least 1000 replicates, got {m}")));
    }
    let delta = constants.delta;
    let threshold = constants.threshold(n);
    let exceedance = exceedance(results, threshold);
    let allowed = delta + 3.0 * (delta * (1.0 - delta) / m as f64).sqrt();
    Ok(TheoremReport {
        n,
        alpha: constants.alpha,
        delta,
        spec: spec.name(),
        replicates: m,
        threshold,
        exceedance,
        allowed,
        max_overhead: results.iter().map(|s| s.k_minus_h).max().unwrap_or(0),
        pass: exceedance <= allowed,
    })
}

/// One `t` of the exponential tail check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub t: f64,
    /// `b1 + b2 t`, compared against `(K − H)/log n`.
    pub level: f64,
    pub empirical: f64,
    pub bound: f64,
    pub allowed: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub n: usize,
    pub alpha: f64,
    pub replicates: usize,
    pub points: Vec<TailPoint>,
    pub mean_normalized: f64,
    pub first_moment_bound: f64,
    pub pass: bool,
}

/// Checks `P((K − H)/log n > B¹ + B² t) ≤ e^{−t}` at each `t` (plus three
/// standard errors of a proportion at the bound) and
/// `E[(K − H)/log n] ≤ B¹ + B²`.
pub fn check_exponential_tail(
    results: &[OverheadSample],
    constants: &BoundConstants,
    n: usize,
    ts: &[f64],
) -> Result<TailReport> {
    let m = results.len();
    if m < 10_000 {
        return Err(invalid(format!("need at least 10^4 replicates, got {m}")));
    }
    if n < 2 {
        return Err(invalid("tail check needs n >= 2"));
    }
    let log_n = (n as f64).ln();
    let normalized: Vec<f64> = results.iter().map(|s| s.k_minus_h as f64 / log_n).collect();
    let points: Vec<TailPoint> = ts
        .iter()
        .map(|&t| {
            let level = constants.b1 + constants.b2 * t;
            let empirical = normalized.iter().filter(|&&x| x > level).count() as f64 / m as f64;
            let bound = (-t).exp();
            let allowed = bound + 3.0 * (bound * (1.0 - bound) / m as f64).sqrt();
            TailPoint {
                t,
                level,
                empirical,
                bound,
                allowed,
                pass: empirical <= allowed,
            }
        })
        .collect();
    let mean_normalized = normalized.iter().sum::<f64>() / m as f64;
    let first_moment_bound = constants.first_moment_bound();
    let pass = points.iter().all(|p| p.pass) && mean_normalized <= first_moment_bound;
    Ok(TailReport {
        n,
        alpha: constants.alpha,
        replicates: m,
        points,
        mean_normalized,
        first_moment_bound,
        pass,
    })
}

/// Comparison of `P(u_min ≤ x)` before and after merging two blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergePoint {
    pub x: f64,
    pub p_unmerged: f64,
    pub p_merged: f64,
    pub pooled_se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeReport {
    pub sizes: Vec<usize>,
    pub merged_sizes: Vec<usize>,
    pub alpha: f64,
    pub replicates: usize,
    pub points: Vec<MergePoint>,
    pub pass: bool,
}

impl MergeReport {
    /// Survival probabilities `P(u_min > x)` before and after the merge.
    pub fn survival(&self) -> Vec<(f64, f64, f64)> {
        self.points.iter().map(|p| (p.x, 1.0 - p.p_unmerged, 1.0 - p.p_merged)).collect()
    }
}

fn umin_samples(rng: &RngStream, sizes: &[usize], alpha: f64, replicates: usize) -> Result<Vec<f64>> {
    let partition = Partition::from_sizes(sizes)?;
    Ok((0..replicates as u64)
        .into_par_iter()
        .map_init(WeightState::default, |weights, i| {
            let mut r = rng.substream(i);
            allocated_weights_into(&mut r, partition.sizes(), alpha, weights);
            slice_minimum(&mut r, &partition, weights)
        })
        .collect())
}

/// Estimates `P(u_min ≤ x)` for the partition with block sizes `sizes` and
/// for the partition with blocks `r` and `s` merged, on independent
/// replicates. Passes when the merged probability is at most the unmerged
/// one plus three pooled standard errors at every `x`.
pub fn check_merge_monotonicity(
    rng: &RngStream,
    sizes: &[usize],
    r: usize,
    s: usize,
    xs: &[f64],
    alpha: f64,
    replicates: usize,
) -> Result<MergeReport> {
    if r == s || r >= sizes.len() || s >= sizes.len() {
        return Err(invalid(format!("need two distinct existing blocks, got {r} and {s}")));
    }
    if replicates == 0 {
        return Err(invalid("need at least one replicate"));
    }
    let mut merged_sizes: Vec<usize> = sizes
        .iter()
        .enumerate()
        .filter(|&(h, _)| h != r && h != s)
        .map(|(_, &x)| x)
        .collect();
    merged_sizes.insert(0, sizes[r] + sizes[s]);

    let before = umin_samples(&rng.substream(0), sizes, alpha, replicates)?;
    let after = umin_samples(&rng.substream(1), &merged_sizes, alpha, replicates)?;
    let m = replicates as f64;
    let points: Vec<MergePoint> = xs
        .iter()
        .map(|&x| {
            let p_unmerged = before.iter().filter(|&&u| u <= x).count() as f64 / m;
            let p_merged = after.iter().filter(|&&u| u <= x).count() as f64 / m;
            let pooled_se = (p_unmerged * (1.0 - p_unmerged) / m + p_merged * (1.0 - p_merged) / m).sqrt();
            MergePoint {
                x,
                p_unmerged,
                p_merged,
                pooled_se,
                pass: p_merged <= p_unmerged + 3.0 * pooled_se,
            }
        })
        .collect();
    Ok(MergeReport {
        sizes: sizes.to_vec(),
        merged_sizes,
        alpha,
        replicates,
        pass: points.iter().all(|p| p.pass),
        points,
    })
}

/// Merge checks along the chain singleton(n) → … → one-block(n), merging the
/// first two blocks at each step.
pub fn check_merge_chain(
    rng: &RngStream,
    n: usize,
    xs: &[f64],
    alpha: f64,
    replicates: usize,
) -> Result<Vec<MergeReport>> {
    let mut sizes = vec![1; n];
    let mut reports = Vec::new();
    let mut step = 0;
    while sizes.len() > 1 {
        let report = check_merge_monotonicity(&rng.substream(step), &sizes, 0, 1, xs, alpha, replicates)?;
        sizes = report.merged_sizes.clone();
        reports.push(report);
        step += 1;
    }
    Ok(reports)
}

/// Chi-square goodness of fit of the pure-stick tail count against
/// `Poisson(α log(1/x))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonReport {
    pub x: f64,
    pub alpha: f64,
    pub rate: f64,
    pub replicates: usize,
    pub mean: f64,
    pub mean_se: f64,
    pub chi_square: f64,
    pub dof: usize,
    pub critical: f64,
    pub pass: bool,
}

/// Number of sticks broken from a residual of 1 before it drops below `x`.
pub fn pure_stick_count(rng: &mut RngStream, x: f64, alpha: f64) -> Result<usize> {
    let mut weights = WeightState::new(Vec::new(), 1.0);
    extend_components(rng, &mut weights, x, alpha, None)
}

fn poisson_pmf(k: usize, rate: f64) -> f64 {
    (k as f64 * rate.ln() - rate - statrs::function::gamma::ln_gamma(k as f64 + 1.0)).exp()
}

/// Simulates `replicates` tail counts at threshold `x` and tests
/// `count − 1 ~ Poisson(α log(1/x))` at significance 0.01. Bins are
/// `0, 1, …` while each expects at least five draws; the remaining upper
/// tail forms the last bin.
pub fn check_poisson_tail_index(rng: &RngStream, x: f64, alpha: f64, replicates: usize) -> Result<PoissonReport> {
    if !(x > 0.0 && x < 1.0) {
        return Err(invalid(format!("x must lie in (0, 1), got {x}")));
    }
    if replicates == 0 {
        return Err(invalid("need at least one replicate"));
    }
    let counts: Vec<usize> = (0..replicates as u64)
        .into_par_iter()
        .map(|i| pure_stick_count(&mut rng.substream(i), x, alpha).map(|c| c - 1))
        .collect::<Result<_>>()?;
    let m = replicates as f64;
    let rate = alpha * (1.0 / x).ln();
    let mean = counts.iter().sum::<usize>() as f64 / m;
    let mean_se = (rate / m).sqrt();

    let mut expected = Vec::new();
    let mut cumulative = 0.0;
    loop {
        let e = m * poisson_pmf(expected.len(), rate);
        if e < 5.0 || m * (1.0 - cumulative - e / m) < 5.0 {
            break;
        }
        cumulative += e / m;
        expected.push(e);
    }
    expected.push(m * (1.0 - cumulative).max(0.0));
    let last = expected.len() - 1;
    let mut observed = vec![0.0; expected.len()];
    for &c in &counts {
        observed[c.min(last)] += 1.0;
    }
    let chi_square: f64 = observed
        .iter()
        .zip(&expected)
        .filter(|(_, &e)| e > 0.0)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = expected.len().saturating_sub(1);
    let (critical, pass) = if dof == 0 {
        (f64::INFINITY, true)
    } else {
        let dist = ChiSquared::new(dof as f64).map_err(|e| invalid(e.to_string()))?;
        let critical = dist.inverse_cdf(0.99);
        (critical, chi_square <= critical)
    };
    Ok(PoissonReport {
        x,
        alpha,
        rate,
        replicates,
        mean,
        mean_se,
        chi_square,
        dof,
        critical,
        pass,
    })
}

/// Runs [`check_theorem`] over a grid, simulating once per
/// `(n, α)` and reusing the draws for every `δ`.
pub fn theorem_grid(
    rng: &RngStream,
    ns: &[usize],
    alphas: &[f64],
    deltas: &[f64],
    spec: &PartitionSpec,
    replicates: usize,
) -> Result<Vec<TheoremReport>> {
    let mut reports = Vec::new();
    for (i, &n) in ns.iter().enumerate() {
        for (j, &alpha) in alphas.iter().enumerate() {
            let stream = rng.substream((i * alphas.len() + j) as u64);
            let results = simulate_overhead(&stream, n, spec, alpha, replicates)?;
            for &delta in deltas {
                let constants = theorem_constants(alpha, delta)?;
                reports.push(check_theorem(&results, &constants, n, spec)?);
            }
        }
    }
    Ok(reports)
}
