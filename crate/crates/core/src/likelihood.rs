//! Joint density of observations whose marginals mix atoms with continuous
//! parts:
//!
//! `f(x) = c_𝒞(b_𝒞) · Π_{j∈𝒞} f_j(x_j) · Δ_{a_𝒟}^{b_𝒟} C_{𝒟|𝒞}(· | b_𝒞)`
//!
//! with `a = F(x⁻)`, `b = F(x)` and `Δ` the rectangle difference operator.

use crate::copulas::Copula;
use crate::error::{Error, Result};
use crate::marginals::{partition, MixedMarginal, PartitionResult};
use crate::numeric::MvnOptions;

/// Largest number of jump coordinates accepted in one observation.
pub const MAX_DISCRETE: usize = 20;

/// Rectangle masses below this are replaced by it.
pub const MASS_FLOOR: f64 = 1e-300;

/// Bounds `[a, b)` of a latent rectangle over 𝒟.
#[derive(Debug, Clone, PartialEq)]
pub struct RectangleBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl RectangleBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Usage("rectangle bounds differ in length".into()));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidParameter("rectangle needs a < b in every coordinate".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn from_partition(p: &PartitionResult) -> Self {
        Self {
            lower: p.lower_discrete(),
            upper: p.upper_discrete(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.dim() && u.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (a, b))| a <= v && v < b)
    }
}

/// Inclusion–exclusion sum `Σ_corners (−1)^{#lower} g(corner)` over the
/// `2^k` corners of `[lower, upper]`, visited in Gray-code order so that
/// consecutive corners differ in one coordinate. `k = 0` evaluates `g(&[])`.
pub fn difference_operator<G>(mut g: G, lower: &[f64], upper: &[f64]) -> Result<f64>
where
    G: FnMut(&[f64]) -> f64,
{
    let k = lower.len();
    if upper.len() != k {
        return Err(Error::Usage("difference operator bounds differ in length".into()));
    }
    if k > MAX_DISCRETE {
        return Err(Error::Data(format!(
            "{k} jump coordinates in one observation exceeds the limit of {MAX_DISCRETE}"
        )));
    }
    let mut corner = upper.to_vec();
    let mut at_lower = vec![false; k];
    let mut n_lower = 0usize;
    let mut sum = g(&corner);
    for i in 1u64..(1u64 << k) {
        let bit = i.trailing_zeros() as usize;
        at_lower[bit] = !at_lower[bit];
        if at_lower[bit] {
            corner[bit] = lower[bit];
            n_lower += 1;
        } else {
            corner[bit] = upper[bit];
            n_lower -= 1;
        }
        let v = g(&corner);
        if n_lower % 2 == 0 {
            sum += v;
        } else {
            sum -= v;
        }
    }
    Ok(sum)
}

/// `Δ_{a}^{b} C_{𝒟|𝒞}(· | u_𝒞)`: the conditional probability that the
/// coordinates `d_idx` fall in `[lower, upper]` given `u_𝒞` on `c_idx`.
pub fn rectangle_mass(
    cop: &Copula,
    d_idx: &[usize],
    lower: &[f64],
    upper: &[f64],
    c_idx: &[usize],
    u_c: &[f64],
) -> Result<f64> {
    if d_idx.is_empty() {
        return Ok(1.0);
    }
    if d_idx.len() > MAX_DISCRETE {
        return Err(Error::Data(format!(
            "{} jump coordinates in one observation exceeds the limit of {MAX_DISCRETE}",
            d_idx.len()
        )));
    }
    // validates indices and arguments once
    cop.conditional_cdf(d_idx, upper, c_idx, u_c)?;
    rectangle_mass_unchecked(cop, d_idx, lower, upper, c_idx, u_c)
}

fn rectangle_mass_unchecked(
    cop: &Copula,
    d_idx: &[usize],
    lower: &[f64],
    upper: &[f64],
    c_idx: &[usize],
    u_c: &[f64],
) -> Result<f64> {
    match cop {
        Copula::Independence => Ok(lower.iter().zip(upper).map(|(a, b)| b - a).product()),
        Copula::Gaussian(g) => Ok(g
            .conditional_rectangle(d_idx, lower, upper, c_idx, u_c, &MvnOptions::default())
            .value),
        Copula::Mixture(m) => {
            let pi = m.conditional_weights(c_idx, u_c);
            let mut total = 0.0;
            for ((_, comp), p) in m.components().iter().zip(pi) {
                if p > 0.0 {
                    total += p * rectangle_mass_unchecked(comp, d_idx, lower, upper, c_idx, u_c)?;
                }
            }
            Ok(total)
        }
        Copula::Clayton(_) | Copula::Gumbel(_) => difference_operator(
            |corner| cop.conditional_cdf_unchecked(d_idx, corner, c_idx, u_c),
            lower,
            upper,
        ),
    }
}

/// One observation's log density and its two factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodTerm {
    /// `log c_𝒞(b_𝒞) + Σ_{j∈𝒞} log f_j(x_j)`.
    pub log_continuous_part: f64,
    /// Log of the rectangle mass.
    pub log_rectangle_mass: f64,
    pub log_density: f64,
    /// The rectangle mass fell below [`MASS_FLOOR`] and was replaced by it.
    pub clamped: bool,
}

/// Log density of one observation `x` under copula `cop` and marginals `margs`.
pub fn log_likelihood_point(cop: &Copula, margs: &[MixedMarginal], x: &[f64]) -> Result<LikelihoodTerm> {
    let part = partition(margs, x)?;
    log_likelihood_partitioned(cop, margs, x, &part)
}

pub(crate) fn log_likelihood_partitioned(
    cop: &Copula,
    margs: &[MixedMarginal],
    x: &[f64],
    part: &PartitionResult,
) -> Result<LikelihoodTerm> {
    if part.discrete_idx.len() > MAX_DISCRETE {
        return Err(Error::Data(format!(
            "{} jump coordinates in one observation exceeds the limit of {MAX_DISCRETE}",
            part.discrete_idx.len()
        )));
    }
    let c_idx = &part.continuous_idx;
    let b_c = part.upper_continuous();
    let mut log_cont: f64 = c_idx.iter().map(|&j| margs[j].density(x[j]).ln()).sum();
    if b_c.iter().any(|&v| !(v > 0.0 && v < 1.0)) || !log_cont.is_finite() {
        return Ok(LikelihoodTerm {
            log_continuous_part: f64::NEG_INFINITY,
            log_rectangle_mass: 0.0,
            log_density: f64::NEG_INFINITY,
            clamped: false,
        });
    }
    log_cont += cop.log_pdf(c_idx, &b_c)?;

    let d_idx = &part.discrete_idx;
    let mass = rectangle_mass(cop, d_idx, &part.lower_discrete(), &part.upper_discrete(), c_idx, &b_c)?;
    let clamped = !(mass >= MASS_FLOOR);
    let log_mass = mass.max(MASS_FLOOR).ln();
    Ok(LikelihoodTerm {
        log_continuous_part: log_cont,
        log_rectangle_mass: log_mass,
        log_density: log_cont + log_mass,
        clamped,
    })
}

/// Per-row log densities with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetLikelihood {
    pub log_likelihood: f64,
    pub per_row: Vec<f64>,
    /// Rows whose rectangle mass was clamped to [`MASS_FLOOR`].
    pub clamped_rows: usize,
}

/// Evaluates every row, attaching the row index to any error. Rows are
/// evaluated in parallel when the `parallel` feature is on; the sum is
/// always accumulated in row order.
pub fn evaluate_dataset(cop: &Copula, margs: &[MixedMarginal], data: &[Vec<f64>]) -> Result<DatasetLikelihood> {
    let eval = |(i, row): (usize, &Vec<f64>)| log_likelihood_point(cop, margs, row).map_err(|e| e.at_row(i));
    #[cfg(feature = "parallel")]
    let terms: Vec<LikelihoodTerm> = {
        use rayon::prelude::*;
        data.par_iter().enumerate().map(eval).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let terms: Vec<LikelihoodTerm> = data.iter().enumerate().map(eval).collect::<Result<_>>()?;

    let per_row: Vec<f64> = terms.iter().map(|t| t.log_density).collect();
    Ok(DatasetLikelihood {
        log_likelihood: per_row.iter().sum(),
        clamped_rows: terms.iter().filter(|t| t.clamped).count(),
        per_row,
    })
}

/// `Σ_i log f(x_i)`.
pub fn log_likelihood_dataset(cop: &Copula, margs: &[MixedMarginal], data: &[Vec<f64>]) -> Result<f64> {
    Ok(evaluate_dataset(cop, margs, data)?.log_likelihood)
}

/// Density of `U_𝒟 | X = x` at `u_d`:
/// `c_{𝒟|𝒞}(u_𝒟 | b_𝒞) 1[a ≤ u < b] / Δ_{a}^{b} C_{𝒟|𝒞}(· | b_𝒞)`.
pub fn latent_conditional_density(cop: &Copula, margs: &[MixedMarginal], x: &[f64], u_d: &[f64]) -> Result<f64> {
    let part = partition(margs, x)?;
    let d_idx = &part.discrete_idx;
    if u_d.len() != d_idx.len() {
        return Err(Error::Usage(format!(
            "latent vector has {} entries but the observation has {} jump coordinates",
            u_d.len(),
            d_idx.len()
        )));
    }
    if d_idx.is_empty() {
        return Ok(1.0);
    }
    let bounds = RectangleBounds::from_partition(&part);
    if !bounds.contains(u_d) || u_d.iter().any(|&v| v <= 0.0) {
        return Ok(0.0);
    }
    let c_idx = &part.continuous_idx;
    let b_c = part.upper_continuous();
    let mut all_idx = d_idx.clone();
    all_idx.extend_from_slice(c_idx);
    let mut all_u = u_d.to_vec();
    all_u.extend_from_slice(&b_c);
    let log_joint = cop.log_pdf(&all_idx, &all_u)?;
    let log_marg = cop.log_pdf(c_idx, &b_c)?;
    let mass = rectangle_mass(cop, d_idx, &bounds.lower, &bounds.upper, c_idx, &b_c)?.max(MASS_FLOOR);
    Ok((log_joint - log_marg).exp() / mass)
}
