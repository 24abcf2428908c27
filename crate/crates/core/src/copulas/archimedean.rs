//! Clayton and Gumbel copulas. Both are exchangeable Archimedean copulas
//! `C(u) = φ(Σ ψ(u_j))` with generator `ψ` and inverse `φ = ψ⁻¹`, so every
//! margin keeps the same parameter and any subset of coordinates can be
//! evaluated without a fixed dimension.
//!
//! All derivative arithmetic goes through `log g_k(t)`, where
//! `g_k(t) = (−1)^k φ^{(k)}(t) ≥ 0`.

use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use serde::{Deserialize, Serialize};

use super::stable::sample_positive_stable;

/// Largest number of derivatives of `φ` ever needed (|𝒟| ≤ 20 plus a
/// margin for conditional densities).
pub const MAX_DERIVATIVE: usize = 24;

pub(crate) trait Archimedean {
    fn psi(&self, u: f64) -> f64;
    fn phi(&self, t: f64) -> f64;
    /// `log g_k(t)`.
    fn log_g(&self, k: usize, t: f64) -> f64;
    /// `log |ψ'(u)|`.
    fn log_abs_dpsi(&self, u: f64) -> f64;

    fn psi_sum(&self, u: &[f64]) -> f64 {
        u.iter().map(|&v| self.psi(v)).sum()
    }

    fn cdf(&self, u: &[f64]) -> f64 {
        if u.iter().any(|&v| v == 0.0) {
            return 0.0;
        }
        self.phi(self.psi_sum(u))
    }

    fn log_pdf(&self, u: &[f64]) -> f64 {
        if u.len() < 2 {
            return 0.0;
        }
        let t = self.psi_sum(u);
        self.log_g(u.len(), t) + u.iter().map(|&v| self.log_abs_dpsi(v)).sum::<f64>()
    }

    /// `C_{A|B}(u_A | u_B) = g_k(S_B + S_A) / g_k(S_B)` with `k = |B|`.
    fn conditional_cdf(&self, u_a: &[f64], u_b: &[f64]) -> f64 {
        if u_a.iter().any(|&v| v == 0.0) {
            return 0.0;
        }
        let k = u_b.len();
        let s_b = self.psi_sum(u_b);
        let s_a = self.psi_sum(u_a);
        if s_a == 0.0 {
            return 1.0;
        }
        (self.log_g(k, s_b + s_a) - self.log_g(k, s_b)).exp().min(1.0)
    }
}

/// Clayton copula, `ψ(u) = u^{−θ} − 1`, `θ > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClaytonCopula {
    theta: f64,
}

impl ClaytonCopula {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::InvalidParameter(format!("Clayton θ must be positive, got {theta}")));
        }
        Ok(Self { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn kendall_tau(&self) -> f64 {
        self.theta / (self.theta + 2.0)
    }

    /// Closed-form inverse of `v ↦ C_{j|B}(v)` with `|B| = k`, `Σ_B ψ = s`.
    pub(crate) fn conditional_quantile(&self, k: usize, s: f64, tau: f64) -> f64 {
        if tau <= 0.0 {
            return 0.0;
        }
        if tau >= 1.0 {
            return 1.0;
        }
        let e = 1.0 / self.theta + k as f64;
        // ψ(v) = (1 + s)(τ^{−1/e} − 1)
        let psi = (1.0 + s) * (-tau.ln() / e).exp_m1();
        (-psi.ln_1p() / self.theta).exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Vec<f64> {
        let v: f64 = Gamma::new(1.0 / self.theta, 1.0).expect("valid shape").sample(rng);
        (0..m)
            .map(|_| {
                let e: f64 = Exp1.sample(rng);
                super::clamp_open(self.phi(e / v))
            })
            .collect()
    }
}

impl Archimedean for ClaytonCopula {
    fn psi(&self, u: f64) -> f64 {
        (-self.theta * u.ln()).exp_m1()
    }

    fn phi(&self, t: f64) -> f64 {
        (-t.ln_1p() / self.theta).exp()
    }

    fn log_g(&self, k: usize, t: f64) -> f64 {
        let inv = 1.0 / self.theta;
        let head: f64 = (0..k).map(|i| (inv + i as f64).ln()).sum();
        head - (inv + k as f64) * t.ln_1p()
    }

    fn log_abs_dpsi(&self, u: f64) -> f64 {
        self.theta.ln() - (self.theta + 1.0) * u.ln()
    }
}

/// Gumbel copula, `ψ(u) = (−log u)^θ`, `θ ≥ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "GumbelParams", into = "GumbelParams")]
pub struct GumbelCopula {
    theta: f64,
    /// `log_coef[k][j]`: log of the coefficient of `s^j` in `P_k(s)`.
    log_coef: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct GumbelParams {
    theta: f64,
}

impl From<GumbelParams> for GumbelCopula {
    fn from(p: GumbelParams) -> Self {
        GumbelCopula::new(p.theta).unwrap_or_else(|_| GumbelCopula::new(1.0).unwrap())
    }
}

impl From<GumbelCopula> for GumbelParams {
    fn from(g: GumbelCopula) -> Self {
        GumbelParams { theta: g.theta }
    }
}

/// Coefficients of the polynomials `P_k`, `k = 0..=max_k`, defined by
/// `g_k(t) = φ(t) t^{−k} P_k(t^α)` for `φ(t) = exp(−t^α)`. They obey
/// `c_{k+1,j} = α c_{k,j−1} + (k − α j) c_{k,j}`, every term nonnegative.
pub fn gumbel_polynomial_coefficients(theta: f64, max_k: usize) -> Vec<Vec<f64>> {
    let alpha = 1.0 / theta;
    let mut out: Vec<Vec<f64>> = vec![vec![1.0]];
    for k in 0..max_k {
        let prev = &out[k];
        let mut next = vec![0.0; k + 2];
        for j in 1..=k + 1 {
            let carry = alpha * prev[j - 1];
            let stay = if j <= k { (k as f64 - alpha * j as f64) * prev[j] } else { 0.0 };
            next[j] = carry + stay.max(0.0);
        }
        out.push(next);
    }
    out
}

/// The same coefficients through the alternating binomial sum
/// `a_{mk} = (m!/k!) Σ_{j=1}^k C(k,j) C(jα, m) (−1)^{m−j}`.
/// Suffers cancellation for large `m`; kept as an independent check.
pub fn gumbel_polynomial_coefficients_binomial(theta: f64, m: usize) -> Vec<f64> {
    let alpha = 1.0 / theta;
    let gen_binom = |x: f64, m: usize| -> f64 {
        let mut r = 1.0;
        for i in 0..m {
            r *= (x - i as f64) / (i + 1) as f64;
        }
        r
    };
    let binom = |n: usize, k: usize| gen_binom(n as f64, k);
    let fact = |n: usize| (1..=n).map(|i| i as f64).product::<f64>();
    let mut out = vec![0.0; m + 1];
    for (k, slot) in out.iter_mut().enumerate().skip(1) {
        let mut s = 0.0;
        for j in 1..=k {
            let sign = if (m - j) % 2 == 0 { 1.0 } else { -1.0 };
            s += binom(k, j) * gen_binom(j as f64 * alpha, m) * sign;
        }
        *slot = fact(m) / fact(k) * s;
    }
    out
}

impl GumbelCopula {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta >= 1.0 && theta.is_finite()) {
            return Err(Error::InvalidParameter(format!("Gumbel θ must be at least 1, got {theta}")));
        }
        let log_coef = gumbel_polynomial_coefficients(theta, MAX_DERIVATIVE)
            .into_iter()
            .map(|row| row.into_iter().map(f64::ln).collect())
            .collect();
        Ok(Self { theta, log_coef })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn kendall_tau(&self) -> f64 {
        1.0 - 1.0 / self.theta
    }

    fn alpha(&self) -> f64 {
        1.0 / self.theta
    }

    fn log_poly(&self, k: usize, log_s: f64) -> f64 {
        let c = &self.log_coef[k];
        let terms: Vec<f64> = c.iter().enumerate().map(|(j, &lc)| lc + j as f64 * log_s).collect();
        log_sum_exp(&terms)
    }

    pub fn sample<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Vec<f64> {
        let alpha = self.alpha();
        let v = sample_positive_stable(alpha, rng);
        (0..m)
            .map(|_| {
                let e: f64 = Exp1.sample(rng);
                super::clamp_open(self.phi(e / v))
            })
            .collect()
    }
}

impl Archimedean for GumbelCopula {
    fn psi(&self, u: f64) -> f64 {
        (-u.ln()).powf(self.theta)
    }

    fn phi(&self, t: f64) -> f64 {
        (-t.powf(self.alpha())).exp()
    }

    fn log_g(&self, k: usize, t: f64) -> f64 {
        assert!(k <= MAX_DERIVATIVE, "derivative order {k} exceeds {MAX_DERIVATIVE}");
        let alpha = self.alpha();
        if t == f64::INFINITY {
            return f64::NEG_INFINITY;
        }
        if k == 0 {
            return -t.powf(alpha);
        }
        if t == 0.0 {
            // t^{−k} P_k(t^α) ~ c_{k,j} t^{αj−k} for the lowest nonzero j
            let c = &self.log_coef[k];
            let j = (1..=k).find(|&j| c[j].is_finite()).unwrap_or(k);
            let expo = alpha * j as f64 - k as f64;
            return if expo < -1e-12 { f64::INFINITY } else { c[j] };
        }
        let log_t = t.ln();
        -t.powf(alpha) - k as f64 * log_t + self.log_poly(k, alpha * log_t)
    }

    fn log_abs_dpsi(&self, u: f64) -> f64 {
        let l = -u.ln();
        let power = if self.theta == 1.0 { 0.0 } else { (self.theta - 1.0) * l.ln() };
        self.theta.ln() + power + l
    }
}
