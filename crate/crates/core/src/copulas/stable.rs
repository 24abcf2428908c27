//! Positive stable variates by the Chambers–Mallows–Stuck construction.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use std::f64::consts::FRAC_PI_2;

/// Draws `V > 0` with Laplace transform `E[exp(−sV)] = exp(−s^α)`,
/// `0 < α ≤ 1`. This is the totally skewed stable law with scale
/// `cos(πα/2)^{1/α}` and location 0 in Nolan's 1-parameterisation; the scale
/// factor cancels against the normalising constant of the CMS formula.
pub fn sample_positive_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    assert!(alpha > 0.0 && alpha <= 1.0, "stable index must lie in (0, 1]");
    if alpha == 1.0 {
        return 1.0;
    }
    let theta = loop {
        let t: f64 = rng.random::<f64>() * std::f64::consts::PI - FRAC_PI_2;
        if t > -FRAC_PI_2 {
            break t;
        }
    };
    let w: f64 = Exp1.sample(rng);
    positive_stable_from(alpha, theta, w)
}

/// Deterministic CMS map from `Θ ∈ (−π/2, π/2)` and `W > 0`.
pub fn positive_stable_from(alpha: f64, theta: f64, w: f64) -> f64 {
    let a = alpha * (theta + FRAC_PI_2);
    let log_v = a.sin().ln() - theta.cos().ln() / alpha
        + (1.0 - alpha) / alpha * ((alpha * FRAC_PI_2 + (alpha - 1.0) * theta).cos().ln() - w.ln());
    log_v.exp()
}
