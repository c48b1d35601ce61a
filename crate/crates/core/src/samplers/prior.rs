use rand::Rng;

use super::{compact_components, ActiveSets, draw_normal, extend_components, sample_slices};
use crate::error::{invalid, Error, Result};
use crate::randkit::{beta_unchecked, uniform_unchecked};
use crate::state::{MixtureState, ModelConfig, WeightState};

/// One pass of the slice mechanism run a priori (no data).
///
/// Occupied clusters receive stick-breaking weights `V_h ~ Beta(1, α)`,
/// slices are drawn under the current allocation, sticks are extended until
/// the residual drops below the smallest slice, and each `c_i` is redrawn
/// uniformly from its active set `{k : π_k > u_i}`. Atoms come from the
/// base measure.
pub fn prior_generative_sweep<R: Rng + ?Sized>(state: &mut MixtureState, cfg: &ModelConfig, rng: &mut R) -> Result<()> {
    if state.n() == 0 {
        return Err(invalid("empty state"));
    }
    let alpha = cfg.alpha_fixed.unwrap_or(state.alpha);
    state.alpha = alpha;
    let h = state.h();
    let mut weights = WeightState::new(Vec::with_capacity(h), 1.0);
    let mut atoms = Vec::with_capacity(h);
    for _ in 0..h {
        atoms.push(draw_normal(rng, cfg.base_mean, cfg.base_var));
        let v = beta_unchecked(rng, 1.0, alpha);
        let w = v * weights.residual;
        weights.allocated.push(w);
        weights.residual -= w;
    }
    if !(weights.residual > 0.0) {
        return Err(Error::InconsistentState("stick mass exhausted by occupied clusters".into()));
    }
    let (slices, umin) = sample_slices(rng, &state.partition, &weights)?;
    extend_components(rng, &mut weights, umin, alpha, Some((&mut atoms, cfg)))?;

    let sets = ActiveSets::new(&weights);
    let mut raw = Vec::with_capacity(slices.len());
    for &u in &slices {
        let active = sets.active(u);
        if active.is_empty() {
            return Err(Error::InconsistentState(format!("empty active set for u = {u:e}")));
        }
        let pick = (uniform_unchecked(rng, 0.0, active.len() as f64) as usize).min(active.len() - 1);
        raw.push(active[pick]);
    }

    let (partition, weights, atoms) = compact_components(&raw, &weights, &atoms);
    state.partition = partition;
    state.weights = weights;
    state.atoms = atoms;
    state.slices = slices;
    state.umin = umin;
    Ok(())
}
