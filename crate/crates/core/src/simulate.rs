//! Synthetic panels from a fully specified model: copula draws pushed
//! through the marginal quantile functions.

use crate::copulas::Copula;
use crate::error::{Error, Result};
use crate::marginals::MixedMarginal;
use rand::Rng;

/// One observation vector.
pub fn simulate_row<R: Rng + ?Sized>(cop: &Copula, margs: &[MixedMarginal], rng: &mut R) -> Result<Vec<f64>> {
    let u = cop.sample(margs.len(), rng)?;
    margs.iter().zip(&u).map(|(m, &v)| m.quantile(v)).collect()
}

/// `n` independent rows.
pub fn simulate<R: Rng + ?Sized>(cop: &Copula, margs: &[MixedMarginal], n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if margs.len() < 2 {
        return Err(Error::Usage("at least two margins are required".into()));
    }
    (0..n).map(|_| simulate_row(cop, margs, rng)).collect()
}

/// Rows together with the mixture component that generated each.
pub fn simulate_labelled<R: Rng + ?Sized>(
    components: &[(f64, Copula)],
    margs: &[MixedMarginal],
    n: usize,
    rng: &mut R,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let total: f64 = components.iter().map(|(w, _)| w).sum();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let r = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut k = components.len() - 1;
        for (i, (w, _)) in components.iter().enumerate() {
            acc += w;
            if r < acc {
                k = i;
                break;
            }
        }
        rows.push(simulate_row(&components[k].1, margs, rng)?);
        labels.push(k);
    }
    Ok((rows, labels))
}
