//! One-dimensional conditional laws `v ↦ C_{j|B}(v | u_B)` prepared once
//! per conditioning value.

use super::archimedean::{Archimedean, ClaytonCopula, GumbelCopula};
use crate::error::{Error, Result};
use crate::numeric::{norm_cdf, norm_log_pdf, norm_quantile, solve_increasing};

const ROOT_FTOL: f64 = 1e-13;
const ROOT_MAX_ITER: usize = 300;

#[derive(Debug, Clone)]
pub enum Conditional1d<'a> {
    Uniform,
    /// Normal scores: `Φ⁻¹(U_j) | u_B ~ N(mean, sd²)`.
    Gaussian { mean: f64, sd: f64 },
    /// `k = |B|`, `s = Σ_B ψ(u)`, `log_norm = log g_k(s)`.
    Clayton {
        cop: &'a ClaytonCopula,
        k: usize,
        s: f64,
        log_norm: f64,
    },
    Gumbel {
        cop: &'a GumbelCopula,
        k: usize,
        s: f64,
        log_norm: f64,
    },
    /// Components with their conditional probabilities.
    Mixture(Vec<(f64, Conditional1d<'a>)>),
}

fn arch_cdf<A: Archimedean>(cop: &A, k: usize, s: f64, log_norm: f64, v: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    if v >= 1.0 {
        return 1.0;
    }
    (cop.log_g(k, s + cop.psi(v)) - log_norm).exp().min(1.0)
}

fn arch_log_pdf<A: Archimedean>(cop: &A, k: usize, s: f64, log_norm: f64, v: f64) -> f64 {
    if !(v > 0.0 && v < 1.0) {
        return f64::NEG_INFINITY;
    }
    cop.log_g(k + 1, s + cop.psi(v)) + cop.log_abs_dpsi(v) - log_norm
}

impl Conditional1d<'_> {
    pub fn cdf(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        if v >= 1.0 {
            return 1.0;
        }
        match self {
            Conditional1d::Uniform => v,
            Conditional1d::Gaussian { mean, sd } => norm_cdf((norm_quantile(v) - mean) / sd),
            Conditional1d::Clayton { cop, k, s, log_norm } => arch_cdf(*cop, *k, *s, *log_norm, v),
            Conditional1d::Gumbel { cop, k, s, log_norm } => arch_cdf(*cop, *k, *s, *log_norm, v),
            Conditional1d::Mixture(parts) => parts.iter().map(|(p, c)| p * c.cdf(v)).sum::<f64>().min(1.0),
        }
    }

    pub fn log_pdf(&self, v: f64) -> f64 {
        if !(v > 0.0 && v < 1.0) {
            return f64::NEG_INFINITY;
        }
        match self {
            Conditional1d::Uniform => 0.0,
            Conditional1d::Gaussian { mean, sd } => {
                let y = norm_quantile(v);
                norm_log_pdf((y - mean) / sd) - sd.ln() - norm_log_pdf(y)
            }
            Conditional1d::Clayton { cop, k, s, log_norm } => arch_log_pdf(*cop, *k, *s, *log_norm, v),
            Conditional1d::Gumbel { cop, k, s, log_norm } => arch_log_pdf(*cop, *k, *s, *log_norm, v),
            Conditional1d::Mixture(parts) => {
                let terms: Vec<f64> = parts.iter().map(|(p, c)| p.ln() + c.log_pdf(v)).collect();
                crate::numeric::log_sum_exp(&terms)
            }
        }
    }

    pub fn pdf(&self, v: f64) -> f64 {
        self.log_pdf(v).exp()
    }

    fn closed_form_quantile(&self, tau: f64) -> Option<f64> {
        match self {
            Conditional1d::Uniform => Some(tau),
            Conditional1d::Gaussian { mean, sd } => Some(norm_cdf(mean + sd * norm_quantile(tau))),
            Conditional1d::Clayton { cop, k, s, .. } => Some(cop.conditional_quantile(*k, *s, tau)),
            _ => None,
        }
    }

    /// Conditional quantile `inf{v : C(v) ≥ τ}`.
    pub fn quantile(&self, tau: f64) -> Result<f64> {
        self.quantile_within(tau, 0.0, 1.0)
    }

    /// Solves `C(v) = target` for `v` in `[lo, hi]`, where `target` lies
    /// between `C(lo)` and `C(hi)`.
    pub fn quantile_within(&self, target: f64, lo: f64, hi: f64) -> Result<f64> {
        if let Some(v) = self.closed_form_quantile(target) {
            return Ok(v.clamp(lo, hi));
        }
        let xtol = 4.0 * f64::EPSILON * hi.abs().max(f64::MIN_POSITIVE);
        solve_increasing(
            |v| (self.cdf(v), self.pdf(v)),
            target,
            lo,
            hi,
            ROOT_FTOL,
            xtol,
            ROOT_MAX_ITER,
        )
        .map_err(|e| Error::Numerical(e.to_string()))
    }

    /// Maps `w ∈ [0, 1]` to a draw from the law truncated to `[lo, hi)`.
    /// Returns the draw and the truncated mass `C(hi) − C(lo)`.
    pub fn truncated_quantile(&self, w: f64, lo: f64, hi: f64) -> Result<(f64, f64)> {
        let c_lo = self.cdf(lo);
        let c_hi = self.cdf(hi);
        let mass = c_hi - c_lo;
        let target = c_lo + w * mass;
        let mut v = self.quantile_within(target, lo, hi)?;
        if v >= hi && hi > lo {
            v = hi.next_down().max(lo);
        }
        Ok((v, mass))
    }
}
