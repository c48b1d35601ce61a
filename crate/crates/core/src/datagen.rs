//! Synthetic benchmark data and k-means chain initialization.

use std::io::{self, BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::randkit::{open01, std_normal};
use crate::state::{relabel_compact, Partition};

/// Observations with their generating labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub y: Vec<f64>,
    /// Generating label of each observation (1-based, as generated).
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn truth(&self) -> Partition {
        relabel_compact(&self.labels)
    }

    /// Two-column CSV `y,true_label`. Values are written with `{:?}`, which
    /// round-trips `f64` exactly.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "y,true_label")?;
        for (y, c) in self.y.iter().zip(&self.labels) {
            writeln!(out, "{y:?},{c}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut y = Vec::new();
        let mut labels = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| invalid(format!("read error: {e}")))?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with('y')) {
                continue;
            }
            let mut cols = line.split(',');
            let parse_err = || invalid(format!("line {}: expected `y,true_label`", lineno + 1));
            let v: f64 = cols.next().and_then(|s| s.trim().parse().ok()).ok_or_else(parse_err)?;
            let c: usize = match cols.next() {
                Some(s) => s.trim().parse().map_err(|_| parse_err())?,
                None => 0,
            };
            y.push(v);
            labels.push(c);
        }
        Ok(Dataset { y, labels })
    }
}

/// Three Normal clusters with means −3, 0, 3 and unit variance; labels are
/// assigned round-robin so sizes differ by at most one.
pub fn gen_three_clusters<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<Dataset> {
    if n < 3 {
        return Err(invalid(format!("three-cluster data needs n >= 3, got {n}")));
    }
    const MEANS: [f64; 3] = [-3.0, 0.0, 3.0];
    let labels: Vec<usize> = (0..n).map(|i| i % 3 + 1).collect();
    let y = labels.iter().map(|&c| MEANS[c - 1] + std_normal(rng)).collect();
    Ok(Dataset { y, labels })
}

/// Parameters of the perturbed power-law generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZipfParams {
    pub max_label: usize,
    pub exponent: f64,
    /// Gap between consecutive cluster means (`mean_c = separation × c`).
    pub separation: f64,
}

impl Default for ZipfParams {
    fn default() -> Self {
        ZipfParams {
            max_label: 500,
            exponent: 2.0,
            separation: 3.0,
        }
    }
}

impl ZipfParams {
    /// Normalized label probabilities `p_c ∝ c^{−exponent}`, `c = 1..max_label`.
    pub fn label_probs(&self) -> Vec<f64> {
        let raw: Vec<f64> = (1..=self.max_label).map(|c| (c as f64).powf(-self.exponent)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}

/// Labels iid from the truncated power law, observations `N(Δ c, 1)`.
pub fn gen_perturbed_zipf<R: Rng + ?Sized>(rng: &mut R, n: usize, params: ZipfParams) -> Result<Dataset> {
    if n == 0 || params.max_label == 0 {
        return Err(invalid("zipf data needs n >= 1 and max_label >= 1"));
    }
    if !(params.exponent.is_finite() && params.separation.is_finite()) {
        return Err(invalid("zipf exponent and separation must be finite"));
    }
    let mut cdf = params.label_probs();
    for i in 1..cdf.len() {
        cdf[i] += cdf[i - 1];
    }
    let mut labels = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let u = open01(rng) * cdf[cdf.len() - 1];
        let c = cdf.partition_point(|&f| f <= u).min(cdf.len() - 1) + 1;
        labels.push(c);
        y.push(params.separation * c as f64 + std_normal(rng));
    }
    Ok(Dataset { y, labels })
}

const KMEANS_RESTARTS: usize = 10;
const KMEANS_MAX_ITER: usize = 100;

/// k-means clustering of scalar data (k-means++ seeding, Lloyd iterations,
/// best of ten restarts by within-cluster sum of squares). Empty clusters
/// are dropped and the result is relabelled compactly.
pub fn kmeans_init<R: Rng + ?Sized>(rng: &mut R, data: &[f64], k: usize) -> Result<Partition> {
    if k == 0 || data.len() < k {
        return Err(invalid(format!("k-means needs 1 <= k <= n, got k = {k}, n = {}", data.len())));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let (cost, assign) = lloyd(rng, data, k);
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, assign));
        }
    }
    let (_, assign) = best.expect("at least one restart");
    Ok(relabel_compact(&assign))
}

fn nearest(y: f64, centers: &[f64]) -> (usize, f64) {
    centers
        .iter()
        .enumerate()
        .map(|(j, &c)| (j, (y - c) * (y - c)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty centers")
}

fn lloyd<R: Rng + ?Sized>(rng: &mut R, data: &[f64], k: usize) -> (f64, Vec<usize>) {
    let n = data.len();
    let mut centers = Vec::with_capacity(k);
    centers.push(data[(open01(rng) * n as f64) as usize % n]);
    let mut dist: Vec<f64> = data.iter().map(|&y| (y - centers[0]).powi(2)).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let target = open01(rng) * total;
            let mut acc = 0.0;
            dist.iter()
                .position(|&d| {
                    acc += d;
                    acc > target
                })
                .unwrap_or(n - 1)
        } else {
            (open01(rng) * n as f64) as usize % n
        };
        centers.push(data[pick]);
        for (d, &y) in dist.iter_mut().zip(data) {
            *d = d.min((y - data[pick]).powi(2));
        }
    }

    let mut assign = vec![0; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (a, &y) in assign.iter_mut().zip(data) {
            let (j, _) = nearest(y, &centers);
            changed |= *a != j;
            *a = j;
        }
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (&a, &y) in assign.iter().zip(data) {
            sums[a] += y;
            counts[a] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j] / counts[j] as f64;
            }
        }
        if !changed {
            break;
        }
    }
    let cost = assign.iter().zip(data).map(|(&a, &y)| (y - centers[a]).powi(2)).sum();
    (cost, assign)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randkit::RngStream;
    use crate::state::rand_index;

    #[test]
    fn three_clusters_shape() {
        let mut rng = RngStream::new(1, 0);
        let n = 3000;
        let d = gen_three_clusters(&mut rng, n).unwrap();
        for (c, mean) in [(1, -3.0), (2, 0.0), (3, 3.0)] {
            let ys: Vec<f64> = d.y.iter().zip(&d.labels).filter(|(_, &l)| l == c).map(|(y, _)| *y).collect();
            let m = ys.iter().sum::<f64>() / ys.len() as f64;
            assert!((m - mean).abs() < 4.0 / ((n / 3) as f64).sqrt(), "cluster {c}: {m}");
        }
        let sizes = d.truth().sizes().to_vec();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let m = d.y.iter().sum::<f64>() / n as f64;
        let v = d.y.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        // 1 within + 6 between
        assert!((v - 7.0).abs() < 0.5, "variance {v}");
        assert!(gen_three_clusters(&mut rng, 2).is_err());
        let uneven = gen_three_clusters(&mut rng, 7).unwrap().truth();
        assert_eq!(uneven.sizes(), &[3, 2, 2]);
    }

    #[test]
    fn zipf_label_law() {
        let mut rng = RngStream::new(2, 0);
        let d = gen_perturbed_zipf(&mut rng, 100_000, ZipfParams::default()).unwrap();
        assert!(d.labels.iter().all(|&c| (1..=500).contains(&c)));
        let ones = d.labels.iter().filter(|&&c| c == 1).count() as f64;
        let twos = d.labels.iter().filter(|&&c| c == 2).count() as f64;
        // ratio of binomial counts: delta-method s.e. ≈ 4 sqrt(1/n1 + 1/n2)
        let se = 4.0 * (1.0 / ones + 1.0 / twos).sqrt();
        assert!((ones / twos - 4.0).abs() < 4.0 * se, "ratio {}", ones / twos);
    }

    #[test]
    fn zipf_distinct_labels_match_occupancy_formula() {
        let params = ZipfParams::default();
        let probs = params.label_probs();
        let n = 3000;
        let expected: f64 = probs.iter().map(|p| 1.0 - (1.0 - p).powi(n as i32)).sum();
        let reps = 200;
        let mut rng = RngStream::new(3, 0);
        let counts: Vec<f64> = (0..reps)
            .map(|_| {
                let mut d = gen_perturbed_zipf(&mut rng, n, params).unwrap().labels;
                d.sort_unstable();
                d.dedup();
                d.len() as f64
            })
            .collect();
        let mean = counts.iter().sum::<f64>() / reps as f64;
        let sd = (counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        assert!((mean - expected).abs() < 4.0 * sd / (reps as f64).sqrt(), "{mean} vs {expected}");
    }

    #[test]
    fn generators_are_deterministic() {
        let a = gen_perturbed_zipf(&mut RngStream::new(9, 1), 50, ZipfParams::default()).unwrap();
        let b = gen_perturbed_zipf(&mut RngStream::new(9, 1), 50, ZipfParams::default()).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert_eq!(Dataset::read_csv(&buf[..]).unwrap(), a);
    }

    #[test]
    fn kmeans_examples() {
        let mut rng = RngStream::new(4, 0);
        let p = kmeans_init(&mut rng, &[0.1, 5.0, -2.0], 1).unwrap();
        assert_eq!(p.num_clusters(), 1);
        let p = kmeans_init(&mut rng, &[0.0, 10.0, 20.0], 3).unwrap();
        assert_eq!(p, Partition::singletons(3));
        let d = gen_three_clusters(&mut rng, 300).unwrap();
        let p = kmeans_init(&mut rng, &d.y, 3).unwrap();
        assert!(rand_index(&p, &d.truth()).unwrap() >= 0.85);
        assert!(kmeans_init(&mut rng, &[1.0], 2).is_err());
    }
}
