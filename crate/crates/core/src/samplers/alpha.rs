use rand::Rng;

use crate::randkit::{beta_unchecked, log_gamma_variate, open01};
use crate::state::GammaPrior;

/// One auxiliary-variable update of the concentration parameter under a
/// Gamma(a, b) prior, given `n` observations in `h` clusters.
///
/// Draws `η ~ Beta(α + 1, n)`, then α from the two-component mixture
/// `Gamma(a + h, b − log η)` / `Gamma(a + h − 1, b − log η)` with odds
/// `(a + h − 1) : n (b − log η)`. Leaves `p(α | h, n)` invariant.
pub fn update_alpha_escobar_west<R: Rng + ?Sized>(
    rng: &mut R,
    alpha: f64,
    n: usize,
    h: usize,
    prior: GammaPrior,
) -> f64 {
    let n = n as f64;
    let eta = beta_unchecked(rng, alpha + 1.0, n);
    let rate = prior.rate - eta.ln();
    let a = prior.shape + h as f64;
    let odds = (a - 1.0) / (n * rate);
    let shape = if open01(rng) < odds / (1.0 + odds) { a } else { a - 1.0 };
    (log_gamma_variate(rng, shape) - rate.ln()).exp().max(f64::MIN_POSITIVE)
}
