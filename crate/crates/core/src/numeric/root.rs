//! Safeguarded Newton/bisection for monotone increasing functions.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct RootError {
    pub target: f64,
    pub lo: f64,
    pub hi: f64,
    pub iterations: usize,
    pub residual: f64,
}

impl fmt::Display for RootError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "root finder did not converge for target {} in [{}, {}] after {} iterations (residual {:e})",
            self.target, self.lo, self.hi, self.iterations, self.residual
        )
    }
}

/// Solves `f(x) = target` on `[lo, hi]` for nondecreasing `f`, where
/// `fdf(x)` returns `(f(x), f'(x))` and the derivative may be NaN when
/// unavailable. Converges when `|f(x) − target| ≤ ftol` or the bracket
/// collapses below `xtol`. Targets outside `[f(lo), f(hi)]` return the
/// nearer endpoint.
pub fn solve_increasing<F>(mut fdf: F, target: f64, lo: f64, hi: f64, ftol: f64, xtol: f64, max_iter: usize) -> Result<f64, RootError>
where
    F: FnMut(f64) -> (f64, f64),
{
    let mut lo = lo;
    let mut hi = hi;
    let (flo, _) = fdf(lo);
    if flo >= target {
        return Ok(lo);
    }
    let (fhi, _) = fdf(hi);
    if fhi <= target {
        return Ok(hi);
    }
    // Start from the secant point of the bracket.
    let mut x = lo + (target - flo) / (fhi - flo) * (hi - lo);
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }
    let mut residual = f64::INFINITY;
    let mut step_old = hi - lo;
    let mut step = step_old;
    for _ in 0..max_iter {
        let (fx, dfx) = fdf(x);
        residual = fx - target;
        if residual.abs() <= ftol {
            return Ok(x);
        }
        if residual < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= xtol {
            return Ok(0.5 * (lo + hi));
        }
        // Newton steps that do not halve the previous step give way to bisection
        let newton = x - residual / dfx;
        let usable = dfx.is_finite() && dfx > 0.0 && newton > lo && newton < hi;
        if usable && (2.0 * residual).abs() <= (step_old * dfx).abs() {
            step_old = step;
            step = residual / dfx;
            x = newton;
        } else {
            step_old = step;
            step = 0.5 * (hi - lo);
            x = lo + step;
        }
    }
    Err(RootError {
        target,
        lo,
        hi,
        iterations: max_iter,
        residual,
    })
}
