//! Chain summaries: effective sample size, co-clustering and Binder-loss
//! point estimates.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::state::Partition;

/// Effective sample size of a scalar trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ess {
    pub value: f64,
    /// Set when the trace is constant; `value` is then the trace length.
    pub zero_variance: bool,
}

/// ESS with Geyer's initial monotone sequence estimator.
///
/// Autocorrelations are summed in consecutive pairs `ρ_{2m} + ρ_{2m+1}` while
/// the pair sums stay positive, each pair capped by the previous one. Lags
/// are computed on demand, so cost is `O(len × cutoff)`.
pub fn ess(trace: &[f64]) -> Result<Ess> {
    let n = trace.len();
    if n < 10 {
        return Err(invalid(format!("ESS needs at least 10 draws, got {n}")));
    }
    if trace.iter().any(|x| !x.is_finite()) {
        return Err(invalid("ESS trace contains non-finite values"));
    }
    let mean = trace.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = trace.iter().map(|x| x - mean).collect();
    let autocov = |lag: usize| -> f64 {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    let gamma0 = autocov(0);
    if trace.iter().all(|&x| x == trace[0]) || gamma0 <= 0.0 {
        return Ok(Ess {
            value: n as f64,
            zero_variance: true,
        });
    }

    // tau = -1 + 2 Σ_m Γ_m with Γ_m = ρ_{2m} + ρ_{2m+1}
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = (autocov(2 * m) + autocov(2 * m + 1)) / gamma0;
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        m += 1;
    }
    let value = (n as f64 / tau.max(f64::MIN_POSITIVE)).min(n as f64);
    Ok(Ess {
        value,
        zero_variance: false,
    })
}

/// ESS per second of wall time.
pub fn ess_per_second(trace: &[f64], elapsed_ns: &[u64]) -> Result<f64> {
    let e = ess(trace)?;
    let seconds = elapsed_ns.iter().sum::<u64>() as f64 * 1e-9;
    if seconds <= 0.0 {
        return Err(invalid("no elapsed time recorded"));
    }
    Ok(if e.zero_variance { 0.0 } else { e.value / seconds })
}

/// Pairwise co-assignment counts over a set of sampled partitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoClusteringMatrix {
    n: usize,
    counts: Vec<u32>,
    samples: u32,
}

impl CoClusteringMatrix {
    pub fn new(n: usize) -> Self {
        CoClusteringMatrix {
            n,
            counts: vec![0; n * n],
            samples: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn samples(&self) -> u32 {
        self.samples
    }

    pub fn count(&self, i: usize, j: usize) -> u32 {
        self.counts[i * self.n + j]
    }

    /// Empirical probability that items `i` and `j` share a cluster.
    pub fn prob(&self, i: usize, j: usize) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.count(i, j) as f64 / self.samples as f64
        }
    }

    /// Adds one sample; entry `(i, j)` is incremented iff `c_i = c_j`.
    pub fn accumulate(&mut self, partition: &Partition) -> Result<()> {
        if partition.n() != self.n {
            return Err(invalid(format!(
                "partition of {} items for a {}-item matrix",
                partition.n(),
                self.n
            )));
        }
        let n = self.n;
        for block in partition.blocks() {
            for &i in &block {
                let row = &mut self.counts[i * n..(i + 1) * n];
                for &j in &block {
                    row[j] += 1;
                }
            }
        }
        self.samples += 1;
        Ok(())
    }

    /// Adds the counts of another accumulator (e.g. a parallel chain).
    pub fn merge(&mut self, other: &CoClusteringMatrix) -> Result<()> {
        if other.n != self.n {
            return Err(invalid("co-clustering matrices differ in size"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.samples += other.samples;
        Ok(())
    }

    /// Writes the matrix of empirical probabilities as dense CSV.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|j| format!("{}", self.prob(i, j))).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Binder loss `Σ_{i<j} |1{c_i = c_j} − p̂_ij|` of `partition`.
pub fn binder_loss(partition: &Partition, matrix: &CoClusteringMatrix) -> f64 {
    let n = matrix.n();
    let mut all_pairs = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            all_pairs += matrix.prob(i, j);
        }
    }
    binder_loss_with_total(partition, matrix, all_pairs)
}

// With S = Σ_{i<j} p̂_ij, the loss is S + Σ_{i<j, c_i = c_j} (1 − 2 p̂_ij).
fn binder_loss_with_total(partition: &Partition, matrix: &CoClusteringMatrix, all_pairs: f64) -> f64 {
    let mut loss = all_pairs;
    for block in partition.blocks() {
        for (a, &i) in block.iter().enumerate() {
            for &j in &block[a + 1..] {
                loss += 1.0 - 2.0 * matrix.prob(i, j);
            }
        }
    }
    loss
}

/// The sampled partition with the smallest Binder loss against the
/// empirical co-clustering probabilities; ties go to the earliest sample.
pub fn binder_point_estimate(samples: &[Partition], matrix: &CoClusteringMatrix) -> Result<Partition> {
    if samples.is_empty() {
        return Err(invalid("no samples for the Binder estimate"));
    }
    let n = matrix.n();
    let mut all_pairs = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            all_pairs += matrix.prob(i, j);
        }
    }
    let mut best = 0;
    let mut best_loss = f64::INFINITY;
    let mut seen: std::collections::HashSet<&Partition> = std::collections::HashSet::new();
    for (idx, p) in samples.iter().enumerate() {
        if p.n() != n {
            return Err(invalid("sample size differs from the co-clustering matrix"));
        }
        if !seen.insert(p) {
            continue;
        }
        let loss = binder_loss_with_total(p, matrix, all_pairs);
        if loss < best_loss - 1e-12 {
            best_loss = loss;
            best = idx;
        }
    }
    Ok(samples[best].clone())
}
