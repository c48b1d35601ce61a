use std::time::Instant;

use rand::Rng;

use super::{check_inputs, conjugate_posterior, draw_normal, finish_record, maybe_update_alpha, sample_atoms_conjugate, traced_loglik, ClusterSuffStats};
use crate::error::Result;
use crate::randkit::categorical_with_scratch;
use crate::state::{ln_normal_pdf, MixtureState, ModelConfig, Partition, TraceRecord, WeightState};

/// Cluster slots for sequential CRP updates. Emptied slots are unlinked
/// from `live` immediately and recycled for the next new cluster.
struct Tables {
    slot: Vec<usize>,
    stats: ClusterSuffStats,
    live: Vec<usize>,
    live_pos: Vec<usize>,
    free: Vec<usize>,
}

impl Tables {
    fn new(partition: &Partition, data: &[f64]) -> Self {
        let h = partition.num_clusters();
        Tables {
            slot: partition.labels().to_vec(),
            stats: ClusterSuffStats::from_partition(partition, data, 0),
            live: (0..h).collect(),
            live_pos: (0..h).collect(),
            free: Vec::new(),
        }
    }

    /// Takes item `i` out of its cluster; returns true if the cluster died.
    fn remove(&mut self, i: usize, y: f64) -> bool {
        let s = self.slot[i];
        self.stats.remove(s, y);
        if self.stats.counts[s] > 0 {
            return false;
        }
        let p = self.live_pos[s];
        self.live.swap_remove(p);
        if p < self.live.len() {
            self.live_pos[self.live[p]] = p;
        }
        self.free.push(s);
        true
    }

    fn open(&mut self) -> usize {
        let s = self.free.pop().unwrap_or_else(|| {
            self.stats.push_empty();
            self.live_pos.push(0);
            self.stats.len() - 1
        });
        self.live_pos[s] = self.live.len();
        self.live.push(s);
        s
    }

    fn assign(&mut self, i: usize, s: usize, y: f64) {
        self.slot[i] = s;
        self.stats.add(s, y);
    }

    fn into_partition(self) -> (Partition, Vec<usize>) {
        let partition = Partition::from_dense_labels(&self.slot, self.stats.len());
        let mut slot_of_cluster = vec![0; partition.num_clusters()];
        for (i, &s) in self.slot.iter().enumerate() {
            slot_of_cluster[partition.label(i)] = s;
        }
        (partition, slot_of_cluster)
    }
}

fn ln_new_cluster(y: f64, alpha: f64, cfg: &ModelConfig) -> f64 {
    alpha.ln() + ln_normal_pdf(y, cfg.base_mean, cfg.base_var + cfg.sigma2)
}

fn store_partition(state: &mut MixtureState, tables: Tables, slot_atoms: &[f64]) {
    let (partition, slot_of_cluster) = tables.into_partition();
    state.atoms = slot_of_cluster.iter().map(|&s| slot_atoms[s]).collect();
    state.weights = WeightState::predictive(partition.sizes(), state.alpha);
    state.partition = partition;
    state.slices.clear();
    state.umin = 1.0;
}

/// Sequential CRP sweep conditioning on the atoms.
///
/// Atoms are refreshed from their conjugate conditionals, then each item is
/// removed and reseated: existing cluster `h` with weight
/// `n_h^{-i} N(y_i; φ_h, σ²)`, a new cluster with weight
/// `α N(y_i; μ_0, τ² + σ²)`. A new cluster's atom is drawn from the
/// posterior given `y_i` alone.
pub fn crp_sweep_atoms<R: Rng + ?Sized>(
    state: &mut MixtureState,
    data: &[f64],
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<TraceRecord> {
    check_inputs(state, data, cfg)?;
    let start = Instant::now();
    maybe_update_alpha(rng, state, cfg);
    let alpha = state.alpha;

    let mut tables = Tables::new(&state.partition, data);
    let mut atoms = sample_atoms_conjugate(rng, &tables.stats, cfg);
    let norm = -0.5 * (2.0 * std::f64::consts::PI * cfg.sigma2).ln();
    let half_precision = 0.5 / cfg.sigma2;
    let mut logw = Vec::new();
    let mut scratch = Vec::new();
    for (i, &y) in data.iter().enumerate() {
        tables.remove(i, y);
        logw.clear();
        logw.extend(tables.live.iter().map(|&s| {
            let d = y - atoms[s];
            (tables.stats.counts[s] as f64).ln() + norm - half_precision * d * d
        }));
        logw.push(ln_new_cluster(y, alpha, cfg));
        let pick = categorical_with_scratch(rng, &logw, &mut scratch)?;
        let s = if pick == tables.live.len() {
            let s = tables.open();
            let (mean, var) = conjugate_posterior(1, y, cfg);
            let phi = draw_normal(rng, mean, var);
            if s == atoms.len() {
                atoms.push(phi);
            } else {
                atoms[s] = phi;
            }
            s
        } else {
            tables.live[pick]
        };
        tables.assign(i, s, y);
    }

    store_partition(state, tables, &atoms);
    let loglik = traced_loglik(state, data, cfg);
    let h = state.h();
    Ok(finish_record(state, loglik, h, start))
}

/// Collapsed CRP sweep: existing clusters are weighted by
/// `n_h^{-i}` times the leave-one-out posterior predictive of `y_i`.
///
/// No atoms are carried between sweeps. The traced log-likelihood uses
/// atoms drawn from their conditional after the sweep, so it is a noisy
/// summary rather than a deterministic function of the partition.
pub fn crp_sweep_collapsed<R: Rng + ?Sized>(
    state: &mut MixtureState,
    data: &[f64],
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<TraceRecord> {
    check_inputs(state, data, cfg)?;
    let start = Instant::now();
    maybe_update_alpha(rng, state, cfg);
    let alpha = state.alpha;

    let mut tables = Tables::new(&state.partition, data);
    let mut logw = Vec::new();
    let mut scratch = Vec::new();
    for (i, &y) in data.iter().enumerate() {
        tables.remove(i, y);
        logw.clear();
        logw.extend(
            tables
                .live
                .iter()
                .map(|&s| (tables.stats.counts[s] as f64).ln() + tables.stats.ln_predictive(s, y, cfg)),
        );
        logw.push(ln_new_cluster(y, alpha, cfg));
        let pick = categorical_with_scratch(rng, &logw, &mut scratch)?;
        let s = if pick == tables.live.len() {
            tables.open()
        } else {
            tables.live[pick]
        };
        tables.assign(i, s, y);
    }

    let atoms = sample_atoms_conjugate(rng, &tables.stats, cfg);
    store_partition(state, tables, &atoms);
    let loglik = traced_loglik(state, data, cfg);
    let h = state.h();
    Ok(finish_record(state, loglik, h, start))
}
