use std::time::Instant;

use rand::Rng;

use super::{
    check_inputs, compact_components, extend_components, finish_record, maybe_update_alpha,
    sample_allocated_weights, sample_atoms_conjugate, sample_slices, slice_allocation_update, traced_loglik,
    ActiveSets, ClusterSuffStats,
};
use crate::error::{Error, Result};
use crate::randkit::categorical_with_scratch;
use crate::state::{MixtureState, ModelConfig, TraceRecord};

/// One sweep of the slice sampler with exchangeable allocated weights.
///
/// Draws α (if not fixed), then `(π_1..π_H, π*) ~ Dirichlet(n_1..n_H, α)`,
/// conjugate atoms for occupied clusters, slices, and enough tail sticks for
/// the residual to fall below the smallest slice. All allocations are then
/// redrawn jointly from their active sets.
pub fn slice_sweep<R: Rng + ?Sized>(
    state: &mut MixtureState,
    data: &[f64],
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<TraceRecord> {
    check_inputs(state, data, cfg)?;
    let start = Instant::now();
    maybe_update_alpha(rng, state, cfg);

    let stats = ClusterSuffStats::from_partition(&state.partition, data, 0);
    let mut weights = sample_allocated_weights(rng, state.partition.sizes(), state.alpha)?;
    let mut atoms = sample_atoms_conjugate(rng, &stats, cfg);
    let (slices, umin) = sample_slices(rng, &state.partition, &weights)?;
    let k = extend_components(rng, &mut weights, umin, state.alpha, Some((&mut atoms, cfg)))?;

    let raw = slice_allocation_update(rng, data, &slices, &weights, &atoms, cfg)?;
    let (partition, weights, atoms) = compact_components(&raw, &weights, &atoms);
    state.partition = partition;
    state.weights = weights;
    state.atoms = atoms;
    state.slices = slices;
    state.umin = umin;

    let loglik = traced_loglik(state, data, cfg);
    Ok(finish_record(state, loglik, k, start))
}

/// Slice sweep with the atoms integrated out.
///
/// Weights, slices and tail sticks are drawn as in [`slice_sweep`], but each
/// `c_i` is updated in turn with weight proportional to the posterior
/// predictive of `y_i` given the other current members of component `k`
/// (the prior predictive for empty components). Atoms are drawn from their
/// conditional after the allocation step only to report the log-likelihood.
pub fn slice_sweep_marginal_atoms<R: Rng + ?Sized>(
    state: &mut MixtureState,
    data: &[f64],
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<TraceRecord> {
    check_inputs(state, data, cfg)?;
    let start = Instant::now();
    maybe_update_alpha(rng, state, cfg);

    let mut weights = sample_allocated_weights(rng, state.partition.sizes(), state.alpha)?;
    let (slices, umin) = sample_slices(rng, &state.partition, &weights)?;
    let k = extend_components(rng, &mut weights, umin, state.alpha, None)?;

    let mut stats = ClusterSuffStats::from_partition(&state.partition, data, k - state.h());
    let mut raw = state.partition.labels().to_vec();
    let sets = ActiveSets::new(&weights);
    let mut logw = Vec::new();
    let mut scratch = Vec::new();
    for (i, (&y, &u)) in data.iter().zip(&slices).enumerate() {
        stats.remove(raw[i], y);
        let active = sets.active(u);
        if active.is_empty() {
            return Err(Error::InconsistentState(format!("empty active set for u = {u:e}")));
        }
        logw.clear();
        logw.extend(active.iter().map(|&c| stats.ln_predictive(c, y, cfg)));
        let c = active[categorical_with_scratch(rng, &logw, &mut scratch)?];
        stats.add(c, y);
        raw[i] = c;
    }

    let atoms = sample_atoms_conjugate(rng, &stats, cfg);
    let (partition, weights, atoms) = compact_components(&raw, &weights, &atoms);
    state.partition = partition;
    state.weights = weights;
    state.atoms = atoms;
    state.slices = slices;
    state.umin = umin;

    let loglik = traced_loglik(state, data, cfg);
    Ok(finish_record(state, loglik, k, start))
}
