//! Seedable random streams and the elementary distributions the samplers
//! are built from.
//!
//! Every sampler takes `&mut R where R: Rng + ?Sized`, so any `rand`
//! generator works; [`RngStream`] is the reproducible default. Beta and
//! Dirichlet draws switch to log-Gamma variates whenever a shape is below
//! one, so very small shapes (e.g. `α/L` in the blocked Gibbs sampler)
//! never underflow to exact zeros.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{invalid, Error, Result};

/// Smallest value a Beta or Dirichlet coordinate may take.
pub const PROB_FLOOR: f64 = 1e-300;
/// Largest value a Beta coordinate may take.
pub const PROB_CEIL: f64 = 1.0 - 1e-16;

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8, whose stream parameter gives 2^64 independent
/// sequences per seed. Streams are plain values: move one into each chain
/// or worker, never share one between threads.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Derives the `index`-th child stream. Children of the same parent are
    /// distinct ChaCha streams under the same key, so replicate `i` of a
    /// parallel job always sees the same draws regardless of scheduling.
    pub fn substream(&self, index: u64) -> RngStream {
        let id = splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)));
        RngStream::new(self.seed, id)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform on the open interval (0, 1): 53 random bits, offset by half an ulp.
#[inline]
pub(crate) fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

#[inline]
pub(crate) fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniform draw strictly inside `(lo, hi)`.
pub fn sample_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> Result<f64> {
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(invalid(format!("uniform bounds ({lo}, {hi})")));
    }
    Ok(uniform_unchecked(rng, lo, hi))
}

#[inline]
pub(crate) fn uniform_unchecked<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    loop {
        let v = lo + (hi - lo) * open01(rng);
        // rounding can land exactly on an endpoint when hi - lo is tiny
        if v > lo && v < hi {
            return v;
        }
    }
}

/// Normal draw with the given mean and variance.
pub fn sample_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, variance: f64) -> Result<f64> {
    if !mean.is_finite() || !(variance > 0.0) || !variance.is_finite() {
        return Err(invalid(format!("normal mean {mean}, variance {variance}")));
    }
    Ok(mean + variance.sqrt() * std_normal(rng))
}

fn check_shape(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite and positive, got {v}")))
    }
}

/// Gamma(shape, 1) variate for `shape >= 1` (Marsaglia–Tsang squeeze;
/// exponential shortcut at shape 1).
#[inline]
pub(crate) fn gamma_variate<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    debug_assert!(shape >= 1.0);
    if shape == 1.0 {
        return rng.sample::<f64, _>(Exp1).max(f64::MIN_POSITIVE);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = std_normal(rng);
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u = open01(rng);
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Natural log of a Gamma(shape, 1) variate. For shape < 1 the draw is
/// boosted from shape + 1 and the `U^(1/shape)` factor is applied in log
/// space, so tiny shapes never underflow.
pub(crate) fn log_gamma_variate<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    if shape < 1.0 {
        let boosted = log_gamma_variate(rng, shape + 1.0);
        return boosted + open01(rng).ln() / shape;
    }
    gamma_variate(rng, shape).ln()
}

/// Gamma draw under the shape/rate parameterization (mean `shape / rate`).
pub fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> Result<f64> {
    check_shape("gamma shape", shape)?;
    check_shape("gamma rate", rate)?;
    let g = (log_gamma_variate(rng, shape) - rate.ln()).exp();
    Ok(g.max(f64::MIN_POSITIVE))
}

/// Beta draw, clamped to `[PROB_FLOOR, PROB_CEIL]`.
pub fn sample_beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> Result<f64> {
    check_shape("beta a", a)?;
    check_shape("beta b", b)?;
    Ok(beta_unchecked(rng, a, b))
}

#[inline]
pub(crate) fn beta_unchecked<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    let la = log_gamma_variate(rng, a);
    let lb = log_gamma_variate(rng, b);
    // X / (X + Y) = 1 / (1 + exp(lb - la))
    let x = 1.0 / (1.0 + (lb - la).exp());
    x.clamp(PROB_FLOOR, PROB_CEIL)
}

/// Dirichlet draw from normalized Gamma variates.
pub fn sample_dirichlet<R: Rng + ?Sized>(rng: &mut R, params: &[f64]) -> Result<Vec<f64>> {
    if params.len() < 2 {
        return Err(invalid("dirichlet needs at least two parameters"));
    }
    for &p in params {
        check_shape("dirichlet parameter", p)?;
    }
    let mut out = Vec::with_capacity(params.len());
    dirichlet_into(rng, params.iter().copied(), &mut out);
    Ok(out)
}

/// Fills `out` with a Dirichlet draw; parameters must already be validated.
/// Shapes below one switch the whole draw to log space.
pub(crate) fn dirichlet_into<R, I>(rng: &mut R, params: I, out: &mut Vec<f64>)
where
    R: Rng + ?Sized,
    I: IntoIterator<Item = f64>,
    I::IntoIter: Clone,
{
    let params = params.into_iter();
    out.clear();
    let mut total = 0.0;
    if params.clone().all(|p| p >= 1.0) {
        for p in params {
            let g = gamma_variate(rng, p);
            total += g;
            out.push(g);
        }
    } else {
        let mut max = f64::NEG_INFINITY;
        for p in params {
            let lg = log_gamma_variate(rng, p);
            max = max.max(lg);
            out.push(lg);
        }
        for v in out.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
    }
    for v in out.iter_mut() {
        *v = (*v / total).max(PROB_FLOOR);
    }
}

/// Draws an index with probability proportional to `exp(logw[k])`.
pub fn sample_categorical_logweights<R: Rng + ?Sized>(rng: &mut R, logw: &[f64]) -> Result<usize> {
    let mut scratch = Vec::with_capacity(logw.len());
    categorical_with_scratch(rng, logw, &mut scratch)
}

/// As [`sample_categorical_logweights`], reusing `scratch` for the
/// exponentiated weights.
pub(crate) fn categorical_with_scratch<R: Rng + ?Sized>(
    rng: &mut R,
    logw: &[f64],
    scratch: &mut Vec<f64>,
) -> Result<usize> {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(if max.is_nan() || max == f64::INFINITY {
            invalid("categorical log-weights must not be NaN or +inf")
        } else {
            Error::NoValidCategory
        });
    }
    scratch.clear();
    let mut total = 0.0;
    for &lw in logw {
        let w = if lw.is_nan() { 0.0 } else { (lw - max).exp() };
        total += w;
        scratch.push(total);
    }
    let target = open01(rng) * total;
    // first cumulative value strictly above the target; zero-weight entries
    // never satisfy it because they repeat the previous cumulative value
    let idx = scratch.partition_point(|&c| c <= target);
    Ok(idx.min(logw.len() - 1))
}
