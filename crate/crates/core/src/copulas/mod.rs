//! Copula families and their margins, conditionals and samplers.
//!
//! Every evaluation takes an explicit index set so that the same copula
//! serves marginal copulas `C_A`, densities `c_A` and conditionals
//! `C_{A|B}` over arbitrary disjoint subsets.

mod archimedean;
mod conditional;
mod gaussian;
mod mixture;
mod stable;

pub use archimedean::{
    gumbel_polynomial_coefficients, gumbel_polynomial_coefficients_binomial, ClaytonCopula, GumbelCopula,
    MAX_DERIVATIVE,
};
pub use conditional::Conditional1d;
pub use gaussian::GaussianCopula;
pub use mixture::MixtureCopula;
pub use stable::{positive_stable_from, sample_positive_stable};

use crate::error::{Error, Result};
use crate::numeric::{MvnEstimate, MvnOptions};
use archimedean::Archimedean;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Parametric family tags, in the fixed component order used by mixtures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    Clayton,
    Gumbel,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Gaussian, Family::Clayton, Family::Gumbel];

    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Clayton => "clayton",
            Family::Gumbel => "gumbel",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Family::Gaussian),
            "clayton" => Ok(Family::Clayton),
            "gumbel" => Ok(Family::Gumbel),
            other => Err(Error::Usage(format!("unknown copula family '{other}' (expected gaussian, clayton or gumbel)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Copula {
    Independence,
    Gaussian(GaussianCopula),
    Clayton(ClaytonCopula),
    Gumbel(GumbelCopula),
    Mixture(MixtureCopula),
}

/// Keeps sampled coordinates inside the open unit interval.
pub(crate) fn clamp_open(u: f64) -> f64 {
    u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

fn check_pairs(idx: &[usize], u: &[f64]) -> Result<()> {
    if idx.len() != u.len() {
        return Err(Error::Usage(format!("{} indices but {} values", idx.len(), u.len())));
    }
    for (i, a) in idx.iter().enumerate() {
        if idx[..i].contains(a) {
            return Err(Error::Usage(format!("index {a} repeated")));
        }
    }
    Ok(())
}

fn check_closed(u: &[f64]) -> Result<()> {
    match u.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
        Some(v) => Err(Error::Domain(format!("copula argument {v} outside [0, 1]"))),
        None => Ok(()),
    }
}

fn check_open(u: &[f64]) -> Result<()> {
    match u.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
        Some(v) => Err(Error::Domain(format!("copula argument {v} outside (0, 1)"))),
        None => Ok(()),
    }
}

fn check_disjoint(a: &[usize], b: &[usize]) -> Result<()> {
    match a.iter().find(|j| b.contains(j)) {
        Some(j) => Err(Error::Usage(format!("index {j} appears in both the target and the conditioning set"))),
        None => Ok(()),
    }
}

impl Copula {
    pub fn gaussian(g: GaussianCopula) -> Self {
        Copula::Gaussian(g)
    }

    pub fn clayton(theta: f64) -> Result<Self> {
        Ok(Copula::Clayton(ClaytonCopula::new(theta)?))
    }

    pub fn gumbel(theta: f64) -> Result<Self> {
        Ok(Copula::Gumbel(GumbelCopula::new(theta)?))
    }

    pub fn mixture(components: Vec<(f64, Copula)>) -> Result<Self> {
        Ok(Copula::Mixture(MixtureCopula::new(components)?))
    }

    /// Dimension fixed by the parameters, if any.
    pub fn fixed_dim(&self) -> Option<usize> {
        match self {
            Copula::Gaussian(g) => Some(g.dim()),
            Copula::Mixture(m) => m.components().iter().find_map(|(_, c)| c.fixed_dim()),
            _ => None,
        }
    }

    fn check_indices(&self, idx: &[usize]) -> Result<()> {
        match self {
            Copula::Gaussian(g) => g.check_indices(idx),
            Copula::Mixture(m) => m.components().iter().try_for_each(|(_, c)| c.check_indices(idx)),
            _ => Ok(()),
        }
    }

    /// Marginal copula `C_A(u)` over coordinates `idx`.
    pub fn cdf(&self, idx: &[usize], u: &[f64]) -> Result<f64> {
        Ok(self.cdf_estimate(idx, u)?.value)
    }

    /// As [`Copula::cdf`], with an error estimate for the Gaussian family.
    pub fn cdf_estimate(&self, idx: &[usize], u: &[f64]) -> Result<MvnEstimate> {
        check_pairs(idx, u)?;
        check_closed(u)?;
        self.check_indices(idx)?;
        Ok(self.cdf_unchecked(idx, u))
    }

    fn cdf_unchecked(&self, idx: &[usize], u: &[f64]) -> MvnEstimate {
        let exact = |value| MvnEstimate {
            value,
            error: 0.0,
            converged: true,
        };
        match self {
            Copula::Independence => exact(u.iter().product()),
            Copula::Gaussian(g) => g.cdf(idx, u, &MvnOptions::default()),
            Copula::Clayton(c) => exact(c.cdf(u)),
            Copula::Gumbel(c) => exact(c.cdf(u)),
            Copula::Mixture(m) => {
                let mut out = exact(0.0);
                for (w, c) in m.components() {
                    let e = c.cdf_unchecked(idx, u);
                    out.value += w * e.value;
                    out.error += w * e.error;
                    out.converged &= e.converged;
                }
                out
            }
        }
    }

    /// Log density of the margin on `idx`; zero for fewer than two indices.
    pub fn log_pdf(&self, idx: &[usize], u: &[f64]) -> Result<f64> {
        check_pairs(idx, u)?;
        check_open(u)?;
        self.check_indices(idx)?;
        Ok(self.log_pdf_unchecked(idx, u))
    }

    pub fn pdf(&self, idx: &[usize], u: &[f64]) -> Result<f64> {
        Ok(self.log_pdf(idx, u)?.exp())
    }

    pub(crate) fn log_pdf_unchecked(&self, idx: &[usize], u: &[f64]) -> f64 {
        match self {
            Copula::Independence => 0.0,
            Copula::Gaussian(g) => g.log_pdf(idx, u),
            Copula::Clayton(c) => c.log_pdf(u),
            Copula::Gumbel(c) => c.log_pdf(u),
            Copula::Mixture(m) => m.log_pdf(idx, u),
        }
    }

    /// `C_{A|B}(u_A | u_B)`.
    pub fn conditional_cdf(&self, a_idx: &[usize], u_a: &[f64], b_idx: &[usize], u_b: &[f64]) -> Result<f64> {
        check_pairs(a_idx, u_a)?;
        check_pairs(b_idx, u_b)?;
        check_disjoint(a_idx, b_idx)?;
        check_closed(u_a)?;
        check_open(u_b)?;
        self.check_indices(a_idx)?;
        self.check_indices(b_idx)?;
        Ok(self.conditional_cdf_unchecked(a_idx, u_a, b_idx, u_b))
    }

    pub(crate) fn conditional_cdf_unchecked(&self, a_idx: &[usize], u_a: &[f64], b_idx: &[usize], u_b: &[f64]) -> f64 {
        match self {
            Copula::Independence => u_a.iter().product(),
            Copula::Gaussian(g) => {
                let lo = vec![0.0; u_a.len()];
                g.conditional_rectangle(a_idx, &lo, u_a, b_idx, u_b, &MvnOptions::default())
                    .value
            }
            Copula::Clayton(c) => c.conditional_cdf(u_a, u_b),
            Copula::Gumbel(c) => c.conditional_cdf(u_a, u_b),
            Copula::Mixture(m) => {
                let pi = m.conditional_weights(b_idx, u_b);
                m.components()
                    .iter()
                    .zip(&pi)
                    .filter(|(_, &p)| p > 0.0)
                    .map(|((_, c), p)| p * c.conditional_cdf_unchecked(a_idx, u_a, b_idx, u_b))
                    .sum()
            }
        }
    }

    /// The one-dimensional conditional law of coordinate `j` given `u_B`.
    pub fn conditional(&self, j: usize, b_idx: &[usize], u_b: &[f64]) -> Result<Conditional1d<'_>> {
        check_pairs(b_idx, u_b)?;
        check_disjoint(&[j], b_idx)?;
        check_open(u_b)?;
        self.check_indices(&[j])?;
        self.check_indices(b_idx)?;
        Ok(self.conditional_unchecked(j, b_idx, u_b))
    }

    pub(crate) fn conditional_unchecked(&self, j: usize, b_idx: &[usize], u_b: &[f64]) -> Conditional1d<'_> {
        match self {
            Copula::Independence => Conditional1d::Uniform,
            Copula::Gaussian(g) => {
                if b_idx.is_empty() {
                    return Conditional1d::Uniform;
                }
                let y_b: Vec<f64> = u_b.iter().map(|&v| crate::numeric::norm_quantile(v)).collect();
                let cn = g.conditional_normal(&[j], b_idx, &y_b);
                Conditional1d::Gaussian {
                    mean: cn.mean[0],
                    sd: cn.sd[0],
                }
            }
            Copula::Clayton(c) => {
                if b_idx.is_empty() {
                    return Conditional1d::Uniform;
                }
                let s = c.psi_sum(u_b);
                Conditional1d::Clayton {
                    cop: c,
                    k: b_idx.len(),
                    s,
                    log_norm: c.log_g(b_idx.len(), s),
                }
            }
            Copula::Gumbel(c) => {
                if b_idx.is_empty() {
                    return Conditional1d::Uniform;
                }
                let s = c.psi_sum(u_b);
                Conditional1d::Gumbel {
                    cop: c,
                    k: b_idx.len(),
                    s,
                    log_norm: c.log_g(b_idx.len(), s),
                }
            }
            Copula::Mixture(m) => {
                let pi = m.conditional_weights(b_idx, u_b);
                let parts: Vec<(f64, Conditional1d<'_>)> = m
                    .components()
                    .iter()
                    .zip(pi)
                    .filter(|(_, p)| *p > 0.0)
                    .map(|((_, c), p)| (p, c.conditional_unchecked(j, b_idx, u_b)))
                    .collect();
                if parts.len() == 1 {
                    return parts.into_iter().next().unwrap().1;
                }
                Conditional1d::Mixture(parts)
            }
        }
    }

    /// Solves `C_{j|B}(v | u_B) = τ` for `v`.
    pub fn conditional_quantile(&self, tau: f64, j: usize, b_idx: &[usize], u_b: &[f64]) -> Result<f64> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::Domain(format!("conditional quantile level {tau} outside (0, 1)")));
        }
        self.conditional(j, b_idx, u_b)?.quantile(tau)
    }

    /// One draw of `m` coordinates.
    pub fn sample<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Vec<f64>> {
        if let Some(d) = self.fixed_dim() {
            if d != m {
                return Err(Error::Usage(format!("copula has dimension {d}, asked for {m}")));
            }
        }
        Ok(self.sample_unchecked(m, rng))
    }

    fn sample_unchecked<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Vec<f64> {
        match self {
            Copula::Independence => (0..m).map(|_| clamp_open(rng.random::<f64>())).collect(),
            Copula::Gaussian(g) => g.sample(rng),
            Copula::Clayton(c) => c.sample(m, rng),
            Copula::Gumbel(c) => c.sample(m, rng),
            Copula::Mixture(mix) => {
                let k = mix.pick_component(rng);
                mix.components()[k].1.sample_unchecked(m, rng)
            }
        }
    }

    /// `n` independent rows.
    pub fn sample_n<R: Rng + ?Sized>(&self, n: usize, m: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        (0..n).map(|_| self.sample(m, rng)).collect()
    }
}

/// Monte Carlo Spearman's ρ for the pair `(i, j)` of an `m`-dimensional
/// copula: `12 E[U_i U_j] − 3`, with its standard error.
pub fn spearman_rho<R: Rng + ?Sized>(cop: &Copula, m: usize, pair: (usize, usize), n_mc: usize, rng: &mut R) -> Result<(f64, f64)> {
    let (i, j) = pair;
    if i == j || i >= m || j >= m {
        return Err(Error::Usage(format!("invalid pair ({i}, {j}) for dimension {m}")));
    }
    if n_mc < 2 {
        return Err(Error::Usage("Spearman estimate needs at least two draws".into()));
    }
    let mut prods = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let u = cop.sample(m, rng)?;
        prods.push(u[i] * u[j]);
    }
    let (mean, se) = crate::stats::mean_se(&prods);
    Ok((12.0 * mean - 3.0, 12.0 * se))
}
