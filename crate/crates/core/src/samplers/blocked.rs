use std::time::Instant;

use rand::Rng;

use super::{check_inputs, compact_components, finish_record, maybe_update_alpha, sample_atoms_conjugate, traced_loglik, ClusterSuffStats};
use crate::error::{invalid, Result};
use crate::randkit::{categorical_with_scratch, dirichlet_into};
use crate::state::{MixtureState, ModelConfig, Partition, TraceRecord};

/// Blocked Gibbs sweep with a symmetric finite Dirichlet of `truncation`
/// components.
///
/// Weights are drawn from `Dirichlet(n_1 + α/L, …, n_L + α/L)` with zero
/// counts for empty components, atoms from their conjugate conditionals, and
/// all allocations jointly from `Cat(π_k N(y_i; φ_k, σ²))` over all `L`
/// components. If the incoming partition has more than `L` blocks (e.g. an
/// initialization), blocks beyond the `L`-th are merged into the last one.
pub fn bgs_sweep<R: Rng + ?Sized>(
    state: &mut MixtureState,
    data: &[f64],
    truncation: usize,
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<TraceRecord> {
    if truncation == 0 {
        return Err(invalid("blocked Gibbs needs L >= 1"));
    }
    check_inputs(state, data, cfg)?;
    let start = Instant::now();
    if state.h() > truncation {
        let merged: Vec<usize> = state.partition.labels().iter().map(|&c| c.min(truncation - 1)).collect();
        state.partition = Partition::from_dense_labels(&merged, truncation);
    }
    maybe_update_alpha(rng, state, cfg);

    let stats = ClusterSuffStats::from_partition(&state.partition, data, truncation - state.h());
    let prior_mass = state.alpha / truncation as f64;
    let mut weights = Vec::with_capacity(truncation);
    dirichlet_into(rng, stats.counts.iter().map(|&c| c as f64 + prior_mass), &mut weights);
    let atoms = sample_atoms_conjugate(rng, &stats, cfg);

    let raw = if truncation == 1 {
        vec![0; data.len()]
    } else {
        let log_weights: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
        let half_precision = 0.5 / cfg.sigma2;
        let mut logw = vec![0.0; truncation];
        let mut scratch = Vec::with_capacity(truncation);
        let mut raw = Vec::with_capacity(data.len());
        for &y in data {
            for (lw, (&lp, &phi)) in logw.iter_mut().zip(log_weights.iter().zip(&atoms)) {
                let d = y - phi;
                *lw = lp - half_precision * d * d;
            }
            raw.push(categorical_with_scratch(rng, &logw, &mut scratch)?);
        }
        raw
    };

    let drawn = crate::state::WeightState::new(weights, 0.0);
    let (partition, weights, atoms) = compact_components(&raw, &drawn, &atoms);
    state.partition = partition;
    state.weights = weights;
    state.atoms = atoms;
    state.slices.clear();
    state.umin = 1.0;

    let loglik = traced_loglik(state, data, cfg);
    Ok(finish_record(state, loglik, truncation, start))
}
