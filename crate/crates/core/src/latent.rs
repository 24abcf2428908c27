//! Latent PIT variables `U_𝒟(x) | X = x` and the kernels that refresh them.
//!
//! The block kernel draws the jump coordinates one after another from the
//! copula conditionals truncated to `[a_j, b_j)` and corrects with a
//! Metropolis–Hastings step whose ratio is a product of truncation masses.
//! The single-margin kernel is an exact Gibbs update of one coordinate.

use crate::copulas::Copula;
use crate::error::{Error, Result};
use crate::marginals::{partition, MixedMarginal, PartitionResult};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentKernel {
    #[default]
    MhBlock,
    GibbsSingle,
}

impl std::str::FromStr for LatentKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mh_block" => Ok(LatentKernel::MhBlock),
            "gibbs_single" => Ok(LatentKernel::GibbsSingle),
            other => Err(Error::Usage(format!("unknown latent kernel '{other}' (expected mh_block or gibbs_single)"))),
        }
    }
}

/// `n × m` latent matrix. Continuity coordinates hold `F_j(x_ij)`; jump
/// coordinates live in `[a_ij, b_ij)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    u: Vec<Vec<f64>>,
    parts: Vec<PartitionResult>,
}

impl LatentState {
    /// Jump coordinates start at the midpoint of their interval.
    pub fn new(margs: &[MixedMarginal], data: &[Vec<f64>]) -> Result<Self> {
        let parts = data
            .iter()
            .enumerate()
            .map(|(i, x)| partition(margs, x).map_err(|e| e.at_row(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_partitions(parts))
    }

    pub fn from_partitions(parts: Vec<PartitionResult>) -> Self {
        let u = parts
            .iter()
            .map(|p| {
                let mut row = p.upper.clone();
                for &j in &p.discrete_idx {
                    row[j] = 0.5 * (p.lower[j] + p.upper[j]);
                }
                row
            })
            .collect();
        Self { u, parts }
    }

    pub fn n_rows(&self) -> usize {
        self.u.len()
    }

    pub fn dim(&self) -> usize {
        self.parts.first().map_or(0, |p| p.dim())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.u[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.u
    }

    pub fn partition(&self, i: usize) -> &PartitionResult {
        &self.parts[i]
    }

    pub fn partitions(&self) -> &[PartitionResult] {
        &self.parts
    }

    /// Overwrites the jump coordinates of row `i` (ascending index order).
    pub fn set_discrete(&mut self, i: usize, u_d: &[f64]) -> Result<()> {
        let p = &self.parts[i];
        if u_d.len() != p.discrete_idx.len() {
            return Err(Error::Usage("wrong number of latent coordinates".into()));
        }
        for (&j, &v) in p.discrete_idx.iter().zip(u_d) {
            if !(v >= p.lower[j] && v < p.upper[j]) {
                return Err(Error::Domain(format!("latent value {v} outside [{}, {})", p.lower[j], p.upper[j])));
            }
        }
        for (&j, &v) in p.discrete_idx.iter().zip(u_d) {
            self.u[i][j] = v;
        }
        Ok(())
    }

    /// Jump coordinates in `[a, b)`, continuity coordinates equal to `b`.
    pub fn check_bounds(&self) -> Result<()> {
        for (i, (row, p)) in self.u.iter().zip(&self.parts).enumerate() {
            for j in 0..row.len() {
                let ok = if p.discrete_idx.contains(&j) {
                    row[j] >= p.lower[j] && row[j] < p.upper[j]
                } else {
                    row[j] == p.upper[j]
                };
                if !ok {
                    return Err(Error::Numerical(format!("latent entry ({i}, {j}) = {} left its bounds", row[j])));
                }
            }
        }
        Ok(())
    }

    pub fn rows_with_parts_mut(&mut self) -> impl Iterator<Item = (&mut Vec<f64>, &PartitionResult)> {
        self.u.iter_mut().zip(self.parts.iter())
    }

    #[cfg(feature = "parallel")]
    pub(crate) fn par_rows_with_parts_mut(
        &mut self,
    ) -> impl rayon::iter::IndexedParallelIterator<Item = (&mut Vec<f64>, &PartitionResult)> {
        use rayon::prelude::*;
        self.u.par_iter_mut().zip(self.parts.par_iter())
    }
}

/// Draws from the latent block proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockProposal {
    /// New jump coordinates in ascending index order.
    pub u_d: Vec<f64>,
    /// `Σ_k log[C(b_{j_k}|·) − C(a_{j_k}|·)]` along the proposal path.
    pub log_mass: f64,
    /// Some truncation interval carried no numerical mass; the affected
    /// coordinate was set to its interval midpoint.
    pub degenerate: bool,
}

fn check_order(part: &PartitionResult, order: &[usize]) -> Result<()> {
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != part.discrete_idx {
        return Err(Error::Usage(format!(
            "ordering {order:?} is not a permutation of the jump coordinates {:?}",
            part.discrete_idx
        )));
    }
    Ok(())
}

fn position(part: &PartitionResult, j: usize) -> usize {
    part.discrete_idx.iter().position(|&d| d == j).expect("index is a jump coordinate")
}

/// Keeps a truncated draw inside `[lo, hi)` and away from zero.
fn settle(v: f64, lo: f64, hi: f64) -> f64 {
    let v = v.max(lo).max(f64::MIN_POSITIVE);
    if v >= hi {
        hi.next_down().max(lo)
    } else {
        v
    }
}

/// Block proposal in ascending index order.
pub fn propose_block<R: Rng + ?Sized>(cop: &Copula, part: &PartitionResult, rng: &mut R) -> Result<BlockProposal> {
    propose_block_ordered(cop, part, &part.discrete_idx, rng)
}

/// Draws `U_{j_1}, U_{j_2}, …` in the given order, each from its copula
/// conditional given `b_𝒞` and the coordinates already drawn, truncated to
/// `[a_j, b_j)`.
pub fn propose_block_ordered<R: Rng + ?Sized>(
    cop: &Copula,
    part: &PartitionResult,
    order: &[usize],
    rng: &mut R,
) -> Result<BlockProposal> {
    check_order(part, order)?;
    let mut cond_idx = part.continuous_idx.clone();
    let mut cond_u = part.upper_continuous();
    let mut u_d = vec![0.0; order.len()];
    let mut log_mass = 0.0;
    let mut degenerate = false;
    for &j in order {
        let (lo, hi) = (part.lower[j], part.upper[j]);
        let cond = cop.conditional(j, &cond_idx, &cond_u)?;
        let w: f64 = rng.random();
        let (v, mass) = cond.truncated_quantile(w, lo, hi)?;
        let v = if mass > 0.0 && mass.is_finite() {
            log_mass += mass.ln();
            settle(v, lo, hi)
        } else {
            degenerate = true;
            log_mass = f64::NEG_INFINITY;
            0.5 * (lo + hi)
        };
        u_d[position(part, j)] = v;
        cond_idx.push(j);
        cond_u.push(v);
    }
    Ok(BlockProposal { u_d, log_mass, degenerate })
}

/// `Σ_k log[C(b_{j_k}|u_{<k}, b_𝒞) − C(a_{j_k}|u_{<k}, b_𝒞)]` at a given
/// latent vector (ascending index order).
pub fn sequential_log_mass(cop: &Copula, part: &PartitionResult, order: &[usize], u_d: &[f64]) -> Result<f64> {
    check_order(part, order)?;
    if u_d.len() != order.len() {
        return Err(Error::Usage("wrong number of latent coordinates".into()));
    }
    let mut cond_idx = part.continuous_idx.clone();
    let mut cond_u = part.upper_continuous();
    let mut total = 0.0;
    for &j in order {
        let cond = cop.conditional(j, &cond_idx, &cond_u)?;
        let mass = cond.cdf(part.upper[j]) - cond.cdf(part.lower[j]);
        if !(mass > 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        total += mass.ln();
        cond_idx.push(j);
        cond_u.push(u_d[position(part, j)]);
    }
    Ok(total)
}

/// Metropolis–Hastings ratio for moving from `u_old` to `u_new`, ascending order.
pub fn mh_accept_ratio(cop: &Copula, part: &PartitionResult, u_new: &[f64], u_old: &[f64]) -> Result<f64> {
    mh_accept_ratio_ordered(cop, part, &part.discrete_idx, u_new, u_old)
}

/// `Π_k mass_k(u_new) / Π_k mass_k(u_old)`. A zero denominator gives 0.
pub fn mh_accept_ratio_ordered(
    cop: &Copula,
    part: &PartitionResult,
    order: &[usize],
    u_new: &[f64],
    u_old: &[f64],
) -> Result<f64> {
    let old = sequential_log_mass(cop, part, order, u_old)?;
    if old == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let new = sequential_log_mass(cop, part, order, u_new)?;
    Ok((new - old).exp())
}

/// One exact Gibbs draw of a jump coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsDraw {
    pub value: f64,
    /// `C(b_j|·) − C(a_j|·)` underflowed; the current value was kept.
    pub degenerate: bool,
}

/// Draws `U_j | U_{−j}, X`: `w ~ Uniform(L, A)` with
/// `L = C_{j|rest}(a_j)`, `A = C_{j|rest}(b_j)`, then inverts the conditional.
pub fn gibbs_single_margin<R: Rng + ?Sized>(
    cop: &Copula,
    part: &PartitionResult,
    u_row: &[f64],
    j: usize,
    rng: &mut R,
) -> Result<GibbsDraw> {
    if !part.discrete_idx.contains(&j) {
        return Err(Error::Usage(format!("coordinate {j} is not a jump coordinate")));
    }
    let rest: Vec<usize> = (0..u_row.len()).filter(|&k| k != j).collect();
    let u_rest: Vec<f64> = rest.iter().map(|&k| u_row[k]).collect();
    let cond = cop.conditional(j, &rest, &u_rest)?;
    let (lo, hi) = (part.lower[j], part.upper[j]);
    let w: f64 = rng.random();
    let (v, mass) = cond.truncated_quantile(w, lo, hi)?;
    if !(mass > 0.0 && mass.is_finite()) {
        return Ok(GibbsDraw {
            value: u_row[j],
            degenerate: true,
        });
    }
    Ok(GibbsDraw {
        value: settle(v, lo, hi),
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RefreshOutcome {
    pub accepted: bool,
    pub degenerate: bool,
}

/// Refreshes the jump coordinates of one row in place.
pub fn refresh_row<R: Rng + ?Sized>(
    cop: &Copula,
    kernel: LatentKernel,
    part: &PartitionResult,
    u_row: &mut [f64],
    order: Option<&[usize]>,
    rng: &mut R,
) -> Result<RefreshOutcome> {
    let order = order.unwrap_or(&part.discrete_idx);
    if order.is_empty() {
        return Ok(RefreshOutcome {
            accepted: true,
            degenerate: false,
        });
    }
    match kernel {
        LatentKernel::MhBlock => {
            let prop = propose_block_ordered(cop, part, order, rng)?;
            let u_: f64 = rng.random();
            if prop.degenerate {
                return Ok(RefreshOutcome {
                    accepted: false,
                    degenerate: true,
                });
            }
            let accept = if order.len() == 1 {
                // the proposal is the exact conditional
                true
            } else {
                let old: Vec<f64> = part.discrete_idx.iter().map(|&j| u_row[j]).collect();
                let log_old = sequential_log_mass(cop, part, order, &old)?;
                log_old == f64::NEG_INFINITY || u_.ln() < prop.log_mass - log_old
            };
            if accept {
                for (&j, &v) in part.discrete_idx.iter().zip(&prop.u_d) {
                    u_row[j] = v;
                }
            }
            Ok(RefreshOutcome {
                accepted: accept,
                degenerate: false,
            })
        }
        LatentKernel::GibbsSingle => {
            let mut degenerate = false;
            for &j in order {
                let d = gibbs_single_margin(cop, part, u_row, j, rng)?;
                u_row[j] = d.value;
                degenerate |= d.degenerate;
            }
            Ok(RefreshOutcome {
                accepted: true,
                degenerate,
            })
        }
    }
}
