//! Sampler state: partitions, stick weights, atoms, slices and traces.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A partition of `n` items stored as a compact label vector.
///
/// Labels are 0-based and canonical: block `h` is the `h`-th block to appear
/// when scanning items left to right. Two partitions are equal exactly when
/// they group the same items together. Text forms ([`fmt::Display`],
/// [`Partition::parse`]) use 1-based labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Partition {
    labels: Vec<usize>,
    sizes: Vec<usize>,
}

impl Partition {
    /// Every item in its own block.
    pub fn singletons(n: usize) -> Self {
        Partition {
            labels: (0..n).collect(),
            sizes: vec![1; n],
        }
    }

    /// All items in one block.
    pub fn one_block(n: usize) -> Self {
        Partition {
            labels: vec![0; n],
            sizes: if n == 0 { vec![] } else { vec![n] },
        }
    }

    /// Consecutive blocks with the given sizes, e.g. `[2, 1]` → `0 0 1`.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        if sizes.contains(&0) {
            return Err(invalid("block sizes must be positive"));
        }
        let labels = sizes
            .iter()
            .enumerate()
            .flat_map(|(h, &s)| std::iter::repeat_n(h, s))
            .collect();
        Ok(Partition {
            labels,
            sizes: sizes.to_vec(),
        })
    }

    /// Builds a partition from labels in `0..bound`, relabelling in order of
    /// appearance. Cheaper than [`relabel_compact`] for dense integer labels.
    pub(crate) fn from_dense_labels(raw: &[usize], bound: usize) -> Self {
        let mut map = vec![usize::MAX; bound];
        let mut labels = Vec::with_capacity(raw.len());
        let mut sizes = Vec::new();
        for &r in raw {
            let slot = &mut map[r];
            if *slot == usize::MAX {
                *slot = sizes.len();
                sizes.push(0);
            }
            sizes[*slot] += 1;
            labels.push(*slot);
        }
        Partition { labels, sizes }
    }

    /// Parses a comma-separated label vector (any integers; relabelled).
    pub fn parse(s: &str) -> Result<Self> {
        let raw = s
            .split(',')
            .map(|t| t.trim().parse::<i64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| invalid(format!("bad label vector {s:?}: {e}")))?;
        if raw.is_empty() {
            return Err(invalid("empty label vector"));
        }
        Ok(relabel_compact(&raw))
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Number of blocks.
    pub fn num_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Items grouped by block, in label order.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut blocks: Vec<Vec<usize>> = self.sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
        for (i, &c) in self.labels.iter().enumerate() {
            blocks[c].push(i);
        }
        blocks
    }

    /// Checks compactness, canonical order and size bookkeeping.
    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![0usize; self.sizes.len()];
        let mut next = 0;
        for &c in &self.labels {
            if c > next || c >= self.sizes.len() {
                return Err(Error::InconsistentState(format!("label {c} is not canonical")));
            }
            if c == next {
                next += 1;
            }
            seen[c] += 1;
        }
        if seen != self.sizes || next != self.sizes.len() {
            return Err(Error::InconsistentState("block sizes disagree with labels".into()));
        }
        Ok(())
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.labels.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", c + 1)?;
        }
        Ok(())
    }
}

/// Relabels arbitrary block identifiers to compact labels in order of
/// first appearance.
///
/// ```
/// use dpslice::state::relabel_compact;
/// let p = relabel_compact(&[7, 7, 2]);
/// assert_eq!(p.labels(), &[0, 0, 1]);
/// assert_eq!(p.sizes(), &[2, 1]);
/// ```
pub fn relabel_compact<T: Copy + Eq + Hash>(raw: &[T]) -> Partition {
    let mut map: HashMap<T, usize> = HashMap::new();
    let mut labels = Vec::with_capacity(raw.len());
    let mut sizes = Vec::new();
    for &r in raw {
        let next = sizes.len();
        let c = *map.entry(r).or_insert(next);
        if c == next {
            sizes.push(0);
        }
        sizes[c] += 1;
        labels.push(c);
    }
    Partition { labels, sizes }
}

/// Fraction of item pairs on which two partitions agree (both together or
/// both apart).
pub fn rand_index(p: &Partition, q: &Partition) -> Result<f64> {
    if p.n() != q.n() {
        return Err(invalid(format!("partition sizes differ: {} vs {}", p.n(), q.n())));
    }
    let n = p.n();
    if n < 2 {
        return Err(invalid("rand index needs at least two items"));
    }
    let pairs = |k: usize| (k * k.saturating_sub(1) / 2) as f64;
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    for (&a, &b) in p.labels.iter().zip(&q.labels) {
        *joint.entry((a, b)).or_default() += 1;
    }
    let together_both: f64 = joint.values().map(|&c| pairs(c)).sum();
    let together_p: f64 = p.sizes.iter().map(|&c| pairs(c)).sum();
    let together_q: f64 = q.sizes.iter().map(|&c| pairs(c)).sum();
    let total = pairs(n);
    let disagree = together_p + together_q - 2.0 * together_both;
    Ok((total - disagree) / total)
}

/// Stick-breaking weights instantiated during a sweep.
///
/// `allocated` holds the weights of the occupied clusters, `tail` the extra
/// components drawn to cover the smallest slice, with `sticks[j]` the
/// Beta(1, α) fraction that produced `tail[j]`. `residual` is the mass not
/// yet assigned to any instantiated component (zero for finite-dimensional
/// samplers).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WeightState {
    pub allocated: Vec<f64>,
    pub residual: f64,
    pub tail: Vec<f64>,
    pub sticks: Vec<f64>,
}

impl WeightState {
    pub fn new(allocated: Vec<f64>, residual: f64) -> Self {
        WeightState {
            allocated,
            residual,
            tail: Vec::new(),
            sticks: Vec::new(),
        }
    }

    /// CRP predictive probabilities `n_h / (n + α)` with residual
    /// `α / (n + α)`; used as the weight summary of marginal samplers.
    pub fn predictive(sizes: &[usize], alpha: f64) -> Self {
        let n: usize = sizes.iter().sum();
        let denom = n as f64 + alpha;
        WeightState::new(sizes.iter().map(|&s| s as f64 / denom).collect(), alpha / denom)
    }

    /// Rebuilds a weight state from already-drawn component weights,
    /// deriving each tail stick fraction from the mass remaining before it.
    pub fn from_components(allocated: Vec<f64>, tail: Vec<f64>, residual: f64) -> Self {
        let mut sticks = vec![0.0; tail.len()];
        let mut remaining = residual;
        for (j, &w) in tail.iter().enumerate().rev() {
            remaining += w;
            sticks[j] = w / remaining;
        }
        WeightState {
            allocated,
            residual,
            tail,
            sticks,
        }
    }

    /// Breaks off `v × residual` as a new tail component.
    pub fn push_stick(&mut self, v: f64) {
        let w = v * self.residual;
        self.tail.push(w);
        self.sticks.push(v);
        self.residual *= 1.0 - v;
    }

    /// Occupied cluster count.
    pub fn h(&self) -> usize {
        self.allocated.len()
    }

    /// Instantiated component count.
    pub fn k(&self) -> usize {
        self.allocated.len() + self.tail.len()
    }

    /// Weight of component `k` (allocated first, then tail).
    pub fn weight(&self, k: usize) -> f64 {
        let h = self.allocated.len();
        if k < h {
            self.allocated[k]
        } else {
            self.tail[k - h]
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.allocated.iter().chain(self.tail.iter()).copied()
    }

    pub fn total(&self) -> f64 {
        self.iter().sum::<f64>() + self.residual
    }

    /// Simplex and stick-breaking bookkeeping checks.
    pub fn validate(&self) -> Result<()> {
        if (self.total() - 1.0).abs() > 1e-10 {
            return Err(Error::InconsistentState(format!("weights sum to {}", self.total())));
        }
        if self.iter().any(|w| !(w > 0.0)) || !(self.residual >= 0.0) {
            return Err(Error::InconsistentState("non-positive weight".into()));
        }
        if self.sticks.len() != self.tail.len() {
            return Err(Error::InconsistentState("stick fractions missing".into()));
        }
        Ok(())
    }
}

/// Gamma(shape, rate) prior on the concentration parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

/// Fixed model hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Observation variance σ².
    pub sigma2: f64,
    pub base_mean: f64,
    pub base_var: f64,
    pub alpha_prior: GammaPrior,
    /// When set, α is held at this value and never updated.
    pub alpha_fixed: Option<f64>,
    /// Update α every this many sweeps (1 = every sweep).
    pub alpha_update_every: usize,
}

impl ModelConfig {
    /// Defaults for `n` observations: σ² = 1, N(0, 1) base measure and a
    /// Gamma(3, 3 log n) prior on α (log 2 is used for n = 1).
    pub fn for_n(n: usize) -> Self {
        let log_n = (n.max(2) as f64).ln();
        ModelConfig {
            sigma2: 1.0,
            base_mean: 0.0,
            base_var: 1.0,
            alpha_prior: GammaPrior {
                shape: 3.0,
                rate: 3.0 * log_n,
            },
            alpha_fixed: None,
            alpha_update_every: 1,
        }
    }

    pub fn with_fixed_alpha(mut self, alpha: f64) -> Self {
        self.alpha_fixed = Some(alpha);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.sigma2) || !pos(self.base_var) {
            return Err(invalid("variances must be positive"));
        }
        if !pos(self.alpha_prior.shape) || !pos(self.alpha_prior.rate) {
            return Err(invalid("alpha prior parameters must be positive"));
        }
        if !self.base_mean.is_finite() {
            return Err(invalid("base mean must be finite"));
        }
        if let Some(a) = self.alpha_fixed {
            if !pos(a) {
                return Err(invalid("fixed alpha must be positive"));
            }
        }
        if self.alpha_update_every == 0 {
            return Err(invalid("alpha_update_every must be at least 1"));
        }
        Ok(())
    }
}

/// Full state of one chain.
///
/// `atoms[k]` is the location of component `k` in the same order as
/// `weights`. `slices` is empty for samplers that do not use slice
/// variables, in which case `umin` is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureState {
    pub partition: Partition,
    pub weights: WeightState,
    pub atoms: Vec<f64>,
    pub slices: Vec<f64>,
    pub umin: f64,
    pub alpha: f64,
    /// Completed sweeps.
    pub iteration: usize,
}

impl MixtureState {
    /// Starts a chain at `partition`; weights are the CRP predictive summary
    /// and atoms are left empty until the first sweep.
    pub fn new(partition: Partition, alpha: f64) -> Result<Self> {
        if partition.n() == 0 {
            return Err(invalid("cannot start a chain with zero observations"));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(invalid(format!("alpha must be positive, got {alpha}")));
        }
        partition.validate()?;
        let weights = WeightState::predictive(partition.sizes(), alpha);
        Ok(MixtureState {
            partition,
            weights,
            atoms: Vec::new(),
            slices: Vec::new(),
            umin: 1.0,
            alpha,
            iteration: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.partition.n()
    }

    /// Instantiated components (`K`).
    pub fn k(&self) -> usize {
        self.weights.k().max(self.partition.num_clusters())
    }

    /// Occupied clusters (`H`).
    pub fn h(&self) -> usize {
        self.partition.num_clusters()
    }

    /// Checks every structural invariant of the state.
    pub fn validate(&self) -> Result<()> {
        self.partition.validate()?;
        self.weights.validate()?;
        if !self.atoms.is_empty() && self.atoms.len() != self.weights.k() {
            return Err(Error::InconsistentState(format!(
                "{} atoms for {} components",
                self.atoms.len(),
                self.weights.k()
            )));
        }
        if self.k() < self.h() {
            return Err(Error::InconsistentState("K < H".into()));
        }
        if !self.slices.is_empty() {
            if self.slices.len() != self.n() {
                return Err(Error::InconsistentState("slice count differs from n".into()));
            }
            let min = self.slices.iter().copied().fold(f64::INFINITY, f64::min);
            if min != self.umin {
                return Err(Error::InconsistentState("umin is not the smallest slice".into()));
            }
            if self.slices.iter().any(|&u| !(u > 0.0)) {
                return Err(Error::InconsistentState("non-positive slice".into()));
            }
        }
        Ok(())
    }
}

/// Per-iteration summary of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    /// Instantiated components.
    pub k: usize,
    /// Occupied clusters.
    pub h: usize,
    pub loglik: f64,
    pub alpha: f64,
    pub elapsed_ns: u64,
    pub labels: Option<Partition>,
}

impl TraceRecord {
    pub const CSV_HEADER: &'static str = "iter,K,H,loglik,alpha,elapsed_ns";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.iter, self.k, self.h, self.loglik, self.alpha, self.elapsed_ns
        )
    }
}

/// `log N(x; mean, var)`.
#[inline]
pub fn ln_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((2.0 * PI * var).ln() + d * d / var)
}

/// `Σ_i log N(y_i; φ_{c_i}, σ²)` under the state's allocation.
pub fn log_likelihood(state: &MixtureState, data: &[f64], cfg: &ModelConfig) -> Result<f64> {
    if data.len() != state.n() {
        return Err(invalid(format!("{} data points for {} labels", data.len(), state.n())));
    }
    if state.atoms.len() < state.h() {
        return Err(Error::InconsistentState(format!(
            "{} atoms for {} occupied clusters",
            state.atoms.len(),
            state.h()
        )));
    }
    Ok(data
        .iter()
        .zip(state.partition.labels())
        .map(|(&y, &c)| ln_normal_pdf(y, state.atoms[c], cfg.sigma2))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_rand(p: &[usize], q: &[usize]) -> f64 {
        let n = p.len();
        let mut agree = 0;
        let mut total = 0;
        for i in 0..n {
            for j in i + 1..n {
                total += 1;
                if (p[i] == p[j]) == (q[i] == q[j]) {
                    agree += 1;
                }
            }
        }
        agree as f64 / total as f64
    }

    #[test]
    fn relabel_examples() {
        let p = relabel_compact(&[7, 7, 2]);
        assert_eq!(p.labels(), &[0, 0, 1]);
        assert_eq!(p.sizes(), &[2, 1]);
        let p = relabel_compact(&[1, 2, 3]);
        assert_eq!(p.labels(), &[0, 1, 2]);
        assert_eq!(p.sizes(), &[1, 1, 1]);
        let p = relabel_compact(&[5, 5, 5, 5]);
        assert_eq!(p.labels(), &[0, 0, 0, 0]);
        assert_eq!(p.sizes(), &[4]);
        assert_eq!(p.to_string(), "1,1,1,1");
    }

    #[test]
    fn parse_round_trip() {
        let p = Partition::parse("3, 3, 9,1").unwrap();
        assert_eq!(p.to_string(), "1,1,2,3");
        assert_eq!(Partition::parse(&p.to_string()).unwrap(), p);
        assert!(Partition::parse("1,x").is_err());
    }

    #[test]
    fn rand_index_examples() {
        let p = Partition::parse("1,1,2,2").unwrap();
        let q = Partition::parse("1,1,1,2").unwrap();
        assert_eq!(rand_index(&p, &p).unwrap(), 1.0);
        // agreeing pairs: 12, 14, 24
        assert!((rand_index(&p, &q).unwrap() - 0.5).abs() < 1e-12);
        let s = Partition::singletons(3);
        let o = Partition::one_block(3);
        assert_eq!(rand_index(&s, &o).unwrap(), 0.0);
        assert!(rand_index(&s, &Partition::singletons(4)).is_err());
    }

    #[test]
    fn log_likelihood_examples() {
        let cfg = ModelConfig::for_n(2);
        let mut st = MixtureState::new(Partition::one_block(1), 1.0).unwrap();
        st.atoms = vec![0.0];
        st.weights = WeightState::new(vec![0.5], 0.5);
        let single = log_likelihood(&st, &[0.0], &cfg).unwrap();
        assert!((single - (-0.918_938_533_204_672_7)).abs() < 1e-12);

        let mut two = MixtureState::new(Partition::one_block(2), 1.0).unwrap();
        two.atoms = vec![0.0];
        two.weights = WeightState::new(vec![0.5], 0.5);
        assert!((log_likelihood(&two, &[0.0, 0.0], &cfg).unwrap() - 2.0 * single).abs() < 1e-12);

        let mut shifted = two.clone();
        shifted.atoms = vec![0.3];
        let a = log_likelihood(&two, &[0.1, -0.4], &cfg).unwrap();
        let b = log_likelihood(&shifted, &[0.4, -0.1], &cfg).unwrap();
        assert!((a - b).abs() < 1e-12);

        two.atoms.clear();
        assert!(matches!(
            log_likelihood(&two, &[0.0, 0.0], &cfg),
            Err(Error::InconsistentState(_))
        ));
    }

    #[test]
    fn weight_state_sticks() {
        let mut w = WeightState::new(vec![0.4, 0.3], 0.3);
        w.push_stick(0.5);
        w.push_stick(0.5);
        assert_eq!(w.k(), 4);
        assert!((w.residual - 0.075).abs() < 1e-15);
        assert!((w.tail[0] - 0.15).abs() < 1e-15);
        w.validate().unwrap();
    }

    #[test]
    fn trace_csv() {
        let r = TraceRecord {
            iter: 3,
            k: 5,
            h: 2,
            loglik: -1.5,
            alpha: 0.25,
            elapsed_ns: 1200,
            labels: None,
        };
        assert_eq!(TraceRecord::CSV_HEADER, "iter,K,H,loglik,alpha,elapsed_ns");
        assert_eq!(r.csv_row(), "3,5,2,-1.5,0.25,1200");
    }

    proptest! {
        #[test]
        fn relabel_is_idempotent_and_permutation_invariant(
            raw in prop::collection::vec(0usize..6, 1..30),
            perm_seed in any::<u64>(),
        ) {
            let p = relabel_compact(&raw);
            p.validate().unwrap();
            prop_assert_eq!(relabel_compact(p.labels()), p.clone());
            prop_assert_eq!(p.sizes().iter().sum::<usize>(), raw.len());
            // arbitrary injective relabelling of the raw ids
            let mut ids: Vec<u64> = (0..6).map(|k| perm_seed.rotate_left(k * 9) ^ k as u64).collect();
            ids.dedup();
            prop_assume!(ids.len() == 6);
            let permuted: Vec<u64> = raw.iter().map(|&r| ids[r]).collect();
            prop_assert_eq!(relabel_compact(&permuted), p);
        }

        #[test]
        fn rand_index_matches_pair_count(
            a in prop::collection::vec(0usize..4, 2..25),
            seed in prop::collection::vec(0usize..4, 25),
        ) {
            let b: Vec<usize> = seed[..a.len()].to_vec();
            let p = relabel_compact(&a);
            let q = relabel_compact(&b);
            let r = rand_index(&p, &q).unwrap();
            prop_assert!((r - brute_rand(&a, &b)).abs() < 1e-12);
            prop_assert!((r - rand_index(&q, &p).unwrap()).abs() < 1e-15);
            prop_assert_eq!(rand_index(&p, &p).unwrap(), 1.0);
        }
    }
}
