//! Posterior samplers for Dirichlet-process mixtures of Normals.
//!
//! Six samplers share one [`MixtureState`]: the exact slice sampler, its
//! atom-marginalized variant, blocked Gibbs with a finite Dirichlet of `L`
//! components, and two Chinese-restaurant samplers (with and without atoms).
//! A seventh sweep, [`prior_generative_sweep`], runs the slice mechanism with
//! no data. [`sweep`] dispatches on [`SamplerKind`] and times the sweep body.

mod alpha;
mod blocked;
mod crp;
mod prior;
mod slice;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::randkit::{beta_unchecked, categorical_with_scratch, dirichlet_into, std_normal, uniform_unchecked};
use crate::state::{ln_normal_pdf, log_likelihood, MixtureState, ModelConfig, Partition, TraceRecord, WeightState};

pub use alpha::update_alpha_escobar_west;
pub use blocked::bgs_sweep;
pub use crp::{crp_sweep_atoms, crp_sweep_collapsed};
pub use prior::prior_generative_sweep;
pub use slice::{slice_sweep, slice_sweep_marginal_atoms};

/// Maximum number of sticks the extension loop may break in one sweep.
pub const EXTENSION_CAP: usize = 10_000_000;

/// Which transition kernel a chain runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    SliceExact,
    SliceMarginalAtoms,
    BlockedGibbs { truncation: usize },
    CrpWithAtoms,
    CrpCollapsed,
    PriorGenerative,
}

impl SamplerKind {
    /// Whether the kernel leaves the exact DP partition posterior invariant.
    pub fn is_exact(&self) -> bool {
        matches!(
            self,
            SamplerKind::SliceExact
                | SamplerKind::SliceMarginalAtoms
                | SamplerKind::CrpWithAtoms
                | SamplerKind::CrpCollapsed
        )
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SamplerKind::BlockedGibbs { truncation: 0 } => Err(invalid("blocked Gibbs needs L >= 1")),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplerKind::SliceExact => f.write_str("slice"),
            SamplerKind::SliceMarginalAtoms => f.write_str("slice-marginal"),
            SamplerKind::BlockedGibbs { truncation } => write!(f, "bgs-{truncation}"),
            SamplerKind::CrpWithAtoms => f.write_str("crp"),
            SamplerKind::CrpCollapsed => f.write_str("crp-collapsed"),
            SamplerKind::PriorGenerative => f.write_str("prior"),
        }
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    /// Parses the [`Display`](fmt::Display) names; `bgs-n` is not accepted
    /// here because `L` must be concrete.
    fn from_str(s: &str) -> Result<Self> {
        let kind = match s {
            "slice" => SamplerKind::SliceExact,
            "slice-marginal" => SamplerKind::SliceMarginalAtoms,
            "crp" => SamplerKind::CrpWithAtoms,
            "crp-collapsed" => SamplerKind::CrpCollapsed,
            "prior" => SamplerKind::PriorGenerative,
            other => match other.strip_prefix("bgs-").map(str::parse::<usize>) {
                Some(Ok(truncation)) => SamplerKind::BlockedGibbs { truncation },
                _ => return Err(invalid(format!("unknown sampler {s:?}"))),
            },
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// Per-cluster sufficient statistics for the conjugate Normal model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClusterSuffStats {
    pub counts: Vec<usize>,
    pub sums: Vec<f64>,
    pub sum_squares: Vec<f64>,
}

impl ClusterSuffStats {
    /// Statistics of `partition` with `extra` additional empty clusters.
    pub fn from_partition(partition: &Partition, data: &[f64], extra: usize) -> Self {
        let k = partition.num_clusters() + extra;
        let mut stats = ClusterSuffStats {
            counts: vec![0; k],
            sums: vec![0.0; k],
            sum_squares: vec![0.0; k],
        };
        for (&c, &y) in partition.labels().iter().zip(data) {
            stats.add(c, y);
        }
        stats
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn push_empty(&mut self) {
        self.counts.push(0);
        self.sums.push(0.0);
        self.sum_squares.push(0.0);
    }

    #[inline]
    pub fn add(&mut self, k: usize, y: f64) {
        self.counts[k] += 1;
        self.sums[k] += y;
        self.sum_squares[k] += y * y;
    }

    #[inline]
    pub fn remove(&mut self, k: usize, y: f64) {
        self.counts[k] -= 1;
        if self.counts[k] == 0 {
            // drop accumulated rounding error
            self.sums[k] = 0.0;
            self.sum_squares[k] = 0.0;
        } else {
            self.sums[k] -= y;
            self.sum_squares[k] -= y * y;
        }
    }

    /// Mean and variance of the conjugate posterior of the atom of cluster `k`.
    #[inline]
    pub fn posterior(&self, k: usize, cfg: &ModelConfig) -> (f64, f64) {
        conjugate_posterior(self.counts[k], self.sums[k], cfg)
    }

    /// `log p(y | members of cluster k)`, the Normal posterior predictive.
    #[inline]
    pub fn ln_predictive(&self, k: usize, y: f64, cfg: &ModelConfig) -> f64 {
        let (mean, var) = self.posterior(k, cfg);
        ln_normal_pdf(y, mean, var + cfg.sigma2)
    }
}

#[inline]
fn conjugate_posterior(count: usize, sum: f64, cfg: &ModelConfig) -> (f64, f64) {
    let precision = 1.0 / cfg.base_var + count as f64 / cfg.sigma2;
    let mean = (cfg.base_mean / cfg.base_var + sum / cfg.sigma2) / precision;
    (mean, 1.0 / precision)
}

#[inline]
fn draw_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, var: f64) -> f64 {
    mean + var.sqrt() * std_normal(rng)
}

/// Draws one atom per cluster from its conjugate Normal posterior; empty
/// clusters get a draw from the base measure.
pub fn sample_atoms_conjugate<R: Rng + ?Sized>(rng: &mut R, stats: &ClusterSuffStats, cfg: &ModelConfig) -> Vec<f64> {
    (0..stats.len())
        .map(|k| {
            let (mean, var) = stats.posterior(k, cfg);
            draw_normal(rng, mean, var)
        })
        .collect()
}

/// `(π_1, …, π_H, π*) ~ Dirichlet(n_1, …, n_H, α)`; the last coordinate
/// becomes the residual mass.
pub fn sample_allocated_weights<R: Rng + ?Sized>(rng: &mut R, sizes: &[usize], alpha: f64) -> Result<WeightState> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(invalid("cluster sizes must be nonempty and positive"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid(format!("alpha must be positive, got {alpha}")));
    }
    let mut weights = WeightState::default();
    allocated_weights_into(rng, sizes, alpha, &mut weights);
    Ok(weights)
}

/// [`sample_allocated_weights`] into a reused buffer; inputs must be valid.
pub(crate) fn allocated_weights_into<R: Rng + ?Sized>(rng: &mut R, sizes: &[usize], alpha: f64, out: &mut WeightState) {
    let params = sizes.iter().map(|&s| s as f64).chain(std::iter::once(alpha));
    dirichlet_into(rng, params, &mut out.allocated);
    out.residual = out.allocated.pop().expect("at least two coordinates");
    out.tail.clear();
    out.sticks.clear();
}

/// Slice variables `u_i ~ Uniform(0, π_{c_i})` and their minimum.
pub fn sample_slices<R: Rng + ?Sized>(
    rng: &mut R,
    partition: &Partition,
    weights: &WeightState,
) -> Result<(Vec<f64>, f64)> {
    if weights.h() < partition.num_clusters() {
        return Err(Error::InconsistentState("fewer weights than clusters".into()));
    }
    if weights.allocated.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::InconsistentState("non-positive allocated weight".into()));
    }
    let mut umin = f64::INFINITY;
    let slices = partition
        .labels()
        .iter()
        .map(|&c| {
            let u = uniform_unchecked(rng, 0.0, weights.allocated[c]);
            umin = umin.min(u);
            u
        })
        .collect();
    Ok((slices, umin))
}

/// Breaks sticks off the residual mass until it falls below `umin`.
///
/// Each step draws `V ~ Beta(1, α)`, appends `V × residual` to the tail and
/// shrinks the residual by `(1 − V)`. When `atoms` is given, a base-measure
/// atom is appended for every new component. Returns the final number of
/// instantiated components `K`.
pub fn extend_components<R: Rng + ?Sized>(
    rng: &mut R,
    weights: &mut WeightState,
    umin: f64,
    alpha: f64,
    atoms: Option<(&mut Vec<f64>, &ModelConfig)>,
) -> Result<usize> {
    extend_components_capped(rng, weights, umin, alpha, atoms, EXTENSION_CAP)
}

pub(crate) fn extend_components_capped<R: Rng + ?Sized>(
    rng: &mut R,
    weights: &mut WeightState,
    umin: f64,
    alpha: f64,
    mut atoms: Option<(&mut Vec<f64>, &ModelConfig)>,
    cap: usize,
) -> Result<usize> {
    if !(weights.residual > 0.0 && weights.residual <= 1.0) {
        return Err(invalid(format!("residual {} outside (0, 1]", weights.residual)));
    }
    if !(umin > 0.0 && umin < 1.0) {
        return Err(invalid(format!("umin {umin} outside (0, 1)")));
    }
    let mut drawn = 0;
    while weights.residual > umin {
        if drawn == cap {
            return Err(Error::RunawayExtension { umin, iterations: drawn });
        }
        if let Some((atoms, cfg)) = atoms.as_mut() {
            atoms.push(draw_normal(rng, cfg.base_mean, cfg.base_var));
        }
        let v = beta_unchecked(rng, 1.0, alpha);
        weights.push_stick(v);
        drawn += 1;
    }
    Ok(weights.k())
}

/// Components sorted by decreasing weight, so that `{k : π_k > u}` is a
/// prefix of the order.
pub(crate) struct ActiveSets {
    order: Vec<usize>,
    sorted: Vec<f64>,
}

impl ActiveSets {
    pub(crate) fn new(weights: &WeightState) -> Self {
        let mut order: Vec<usize> = (0..weights.k()).collect();
        order.sort_by(|&a, &b| weights.weight(b).total_cmp(&weights.weight(a)));
        let sorted = order.iter().map(|&k| weights.weight(k)).collect();
        ActiveSets { order, sorted }
    }

    /// Components with weight strictly greater than `u`.
    #[inline]
    pub(crate) fn active(&self, u: f64) -> &[usize] {
        let len = self.sorted.partition_point(|&w| w > u);
        &self.order[..len]
    }
}

/// Joint reallocation: each `c_i` is drawn from its active set with weight
/// proportional to `N(y_i; φ_k, σ²)`. Returns raw component indices.
pub fn slice_allocation_update<R: Rng + ?Sized>(
    rng: &mut R,
    data: &[f64],
    slices: &[f64],
    weights: &WeightState,
    atoms: &[f64],
    cfg: &ModelConfig,
) -> Result<Vec<usize>> {
    if atoms.len() != weights.k() || slices.len() != data.len() {
        return Err(Error::InconsistentState("atoms, weights and slices disagree in length".into()));
    }
    let sets = ActiveSets::new(weights);
    let half_precision = 0.5 / cfg.sigma2;
    let mut logw = Vec::new();
    let mut scratch = Vec::new();
    let mut labels = Vec::with_capacity(data.len());
    for (&y, &u) in data.iter().zip(slices) {
        let active = sets.active(u);
        let pick = match active.len() {
            0 => return Err(Error::InconsistentState(format!("empty active set for u = {u:e}"))),
            1 => 0,
            _ => {
                logw.clear();
                logw.extend(active.iter().map(|&k| {
                    let d = y - atoms[k];
                    -half_precision * d * d
                }));
                categorical_with_scratch(rng, &logw, &mut scratch)?
            }
        };
        labels.push(active[pick]);
    }
    Ok(labels)
}

/// Puts the components occupied by `raw` first, in order of appearance, and
/// returns the compact partition with the matching weights and atoms.
pub(crate) fn compact_components(
    raw: &[usize],
    weights: &WeightState,
    atoms: &[f64],
) -> (Partition, WeightState, Vec<f64>) {
    let k = weights.k();
    let partition = Partition::from_dense_labels(raw, k);
    let mut new_index = vec![usize::MAX; k];
    for (i, &r) in raw.iter().enumerate() {
        new_index[r] = partition.label(i);
    }
    let h = partition.num_clusters();
    let mut allocated = vec![0.0; h];
    let mut new_atoms = vec![0.0; h];
    let mut tail = Vec::new();
    let mut tail_atoms = Vec::new();
    for old in 0..k {
        match new_index[old] {
            usize::MAX => {
                tail.push(weights.weight(old));
                tail_atoms.push(atoms[old]);
            }
            h => {
                allocated[h] = weights.weight(old);
                new_atoms[h] = atoms[old];
            }
        }
    }
    new_atoms.extend(tail_atoms);
    (
        partition,
        WeightState::from_components(allocated, tail, weights.residual),
        new_atoms,
    )
}

/// Upper bound `4 n exp(−(L − 1)/α)` on the total-variation error of an
/// `L`-component truncation of the DP.
pub fn truncation_error_bound(n: usize, truncation: usize, alpha: f64) -> f64 {
    4.0 * n as f64 * (-((truncation as f64) - 1.0) / alpha).exp()
}

/// Resamples α if the schedule calls for it at the state's next iteration.
fn maybe_update_alpha<R: Rng + ?Sized>(rng: &mut R, state: &mut MixtureState, cfg: &ModelConfig) {
    match cfg.alpha_fixed {
        Some(a) => state.alpha = a,
        None => {
            if (state.iteration + 1).is_multiple_of(cfg.alpha_update_every) {
                state.alpha =
                    update_alpha_escobar_west(rng, state.alpha, state.n(), state.h(), cfg.alpha_prior);
            }
        }
    }
}

fn finish_record(state: &mut MixtureState, loglik: f64, k: usize, start: Instant) -> TraceRecord {
    state.iteration += 1;
    TraceRecord {
        iter: state.iteration,
        k,
        h: state.h(),
        loglik,
        alpha: state.alpha,
        elapsed_ns: start.elapsed().as_nanos() as u64,
        labels: None,
    }
}

/// Runs one sweep of `kind`. The prior generative sweep ignores `data`
/// and reports a NaN log-likelihood.
pub fn sweep<R: Rng + ?Sized>(
    kind: SamplerKind,
    state: &mut MixtureState,
    data: &[f64],
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<TraceRecord> {
    match kind {
        SamplerKind::SliceExact => slice_sweep(state, data, cfg, rng),
        SamplerKind::SliceMarginalAtoms => slice_sweep_marginal_atoms(state, data, cfg, rng),
        SamplerKind::BlockedGibbs { truncation } => bgs_sweep(state, data, truncation, cfg, rng),
        SamplerKind::CrpWithAtoms => crp_sweep_atoms(state, data, cfg, rng),
        SamplerKind::CrpCollapsed => crp_sweep_collapsed(state, data, cfg, rng),
        SamplerKind::PriorGenerative => {
            let start = Instant::now();
            prior_generative_sweep(state, cfg, rng)?;
            let k = state.k();
            Ok(finish_record(state, f64::NAN, k, start))
        }
    }
}

pub(crate) fn check_inputs(state: &MixtureState, data: &[f64], cfg: &ModelConfig) -> Result<()> {
    if data.len() != state.n() {
        return Err(invalid(format!("{} observations for {} labels", data.len(), state.n())));
    }
    cfg.validate()
}

pub(crate) fn traced_loglik(state: &MixtureState, data: &[f64], cfg: &ModelConfig) -> f64 {
    log_likelihood(state, data, cfg).unwrap_or(f64::NAN)
}
