//! Model comparison: DIC₃ and the B-fold cross-validated log predictive
//! density score.

use crate::copulas::Family;
use crate::error::{Error, Result};
use crate::likelihood::log_likelihood_point;
use crate::marginals::MixedMarginal;
use crate::mcmc::{run_chain, PosteriorDraws, PriorConfig, RunConfig};
use crate::numeric::log_sum_exp;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Smallest training set accepted by [`lpds_cv`].
pub const MIN_TRAINING_ROWS: usize = 10;

/// `log p̂(y_i) = log( (1/T) Σ_t f(y_i | θ_t) )` for every row of a
/// `draws × rows` matrix of log densities.
pub fn log_predictive(pointwise: &[Vec<f64>]) -> Vec<f64> {
    let t = pointwise.len() as f64;
    let n = pointwise.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| {
            let col: Vec<f64> = pointwise.iter().map(|d| d[i]).collect();
            log_sum_exp(&col) - t.ln()
        })
        .collect()
}

/// `DIC₃ = −4 E[log p(y|θ) | y] + 2 log p̂(y)` from per-draw, per-row log densities.
pub fn dic3_from_pointwise(pointwise: &[Vec<f64>]) -> Result<f64> {
    if pointwise.len() < 2 {
        return Err(Error::Usage(format!("DIC3 needs at least 2 kept draws, got {}", pointwise.len())));
    }
    let mean_loglik = pointwise.iter().map(|d| d.iter().sum::<f64>()).sum::<f64>() / pointwise.len() as f64;
    let log_phat: f64 = log_predictive(pointwise).iter().sum();
    Ok(-4.0 * mean_loglik + 2.0 * log_phat)
}

/// Per-draw, per-row log densities of `data` under each kept draw.
pub fn pointwise_log_densities(draws: &PosteriorDraws, margs: &[MixedMarginal], data: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    draws
        .draws
        .iter()
        .map(|d| {
            let cop = d.copula(draws.dim)?;
            data.iter()
                .enumerate()
                .map(|(i, x)| Ok(log_likelihood_point(&cop, margs, x).map_err(|e| e.at_row(i))?.log_density))
                .collect()
        })
        .collect()
}

/// DIC₃ of a fitted chain, reusing stored per-row densities when present.
pub fn dic3(draws: &PosteriorDraws, margs: &[MixedMarginal], data: &[Vec<f64>]) -> Result<f64> {
    match &draws.pointwise {
        Some(p) => dic3_from_pointwise(p),
        None => dic3_from_pointwise(&pointwise_log_densities(draws, margs, data)?),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub dic3: f64,
    pub lpds_cv: f64,
    pub fold_lpds: Vec<f64>,
    /// Monte Carlo standard error of `lpds_cv` from averaging over draws.
    pub mc_se: f64,
    /// Sampling standard error of `lpds_cv`, `sqrt(n · var_j log p̂(y_j))`.
    pub cv_se: f64,
}

/// Row indices of each fold after a seeded shuffle; sizes differ by at most one.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f01d));
    let mut out = vec![Vec::new(); folds];
    for (pos, i) in idx.into_iter().enumerate() {
        out[pos % folds].push(i);
    }
    out.iter_mut().for_each(|f| f.sort_unstable());
    out
}

/// Log predictive densities of held-out rows, and the Monte Carlo
/// variance of each.
fn held_out_scores(draws: &PosteriorDraws, margs: &[MixedMarginal], test: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let clamped: Vec<Vec<f64>> = test
        .iter()
        .map(|x| x.iter().zip(margs).map(|(&v, m)| m.clamp_to_support(v)).collect())
        .collect();
    let pointwise = pointwise_log_densities(draws, margs, &clamped)?;
    let lp = log_predictive(&pointwise);
    let t = pointwise.len() as f64;
    let var = (0..lp.len())
        .map(|j| {
            // variance of f_t / p̂ over draws, divided by T
            let ratios: Vec<f64> = pointwise.iter().map(|d| (d[j] - lp[j]).exp()).collect();
            let v = ratios.iter().map(|r| (r - 1.0).powi(2)).sum::<f64>() / (t - 1.0).max(1.0);
            v / t
        })
        .collect();
    Ok((lp, var))
}

#[cfg(feature = "parallel")]
fn map_folds<T: Send>(folds: &[Vec<usize>], f: impl Fn(&Vec<usize>) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    use rayon::prelude::*;
    folds.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_folds<T: Send>(folds: &[Vec<usize>], f: impl Fn(&Vec<usize>) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    folds.iter().map(f).collect()
}

/// B-fold cross-validated LPDS: for each fold, marginals are refitted and a
/// chain is run on the remaining rows, then the held-out rows are scored
/// with the draw-averaged predictive density. `dic3` in the result is NaN.
pub fn lpds_cv<F>(data: &[Vec<f64>], fit_margins: F, priors: &PriorConfig, run: &RunConfig) -> Result<ModelScore>
where
    F: Fn(&[Vec<f64>]) -> Result<Vec<MixedMarginal>> + Sync + Send,
{
    let n = data.len();
    let b = run.folds;
    if b < 2 || b > n {
        return Err(Error::Usage(format!("fold count {b} must lie between 2 and the number of rows {n}")));
    }
    let folds = fold_assignment(n, b, run.seed);
    if let Some(f) = folds.iter().find(|f| n - f.len() < MIN_TRAINING_ROWS) {
        return Err(Error::Data(format!(
            "training set of {} rows is below the minimum of {MIN_TRAINING_ROWS}",
            n - f.len()
        )));
    }
    let mut fold_run = run.clone();
    fold_run.record_loglik = false;
    fold_run.store_pointwise = false;
    let per_fold = map_folds(&folds, |test_idx| {
        let train: Vec<Vec<f64>> = (0..n).filter(|i| test_idx.binary_search(i).is_err()).map(|i| data[i].clone()).collect();
        let test: Vec<Vec<f64>> = test_idx.iter().map(|&i| data[i].clone()).collect();
        let margs = fit_margins(&train)?;
        let draws = run_chain(&train, &margs, priors, &fold_run)?;
        held_out_scores(&draws, &margs, &test)
    })?;
    let fold_lpds: Vec<f64> = per_fold.iter().map(|(lp, _)| lp.iter().sum()).collect();
    let all: Vec<f64> = per_fold.iter().flat_map(|(lp, _)| lp.iter().copied()).collect();
    let mean = all.iter().sum::<f64>() / n as f64;
    let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let mc_var: f64 = per_fold.iter().flat_map(|(_, v)| v.iter()).sum();
    Ok(ModelScore {
        dic3: f64::NAN,
        lpds_cv: fold_lpds.iter().sum(),
        fold_lpds,
        mc_se: mc_var.sqrt(),
        cv_se: (n as f64 * var).sqrt(),
    })
}

/// DIC₃ on the full data and the cross-validated LPDS.
pub fn score_model<F>(data: &[Vec<f64>], fit_margins: F, priors: &PriorConfig, run: &RunConfig) -> Result<ModelScore>
where
    F: Fn(&[Vec<f64>]) -> Result<Vec<MixedMarginal>> + Sync + Send,
{
    let margs = fit_margins(data)?;
    let mut full = run.clone();
    full.store_pointwise = true;
    let draws = run_chain(data, &margs, priors, &full)?;
    let dic = dic3(&draws, &margs, data)?;
    let mut score = lpds_cv(data, fit_margins, priors, run)?;
    score.dic3 = dic;
    Ok(score)
}

/// The seven candidate models: three singles, three pairs and the full mixture.
pub fn candidate_models() -> Vec<Vec<Family>> {
    use Family::*;
    vec![
        vec![Clayton],
        vec![Gumbel],
        vec![Gaussian],
        vec![Gaussian, Clayton],
        vec![Gaussian, Gumbel],
        vec![Clayton, Gumbel],
        vec![Gaussian, Clayton, Gumbel],
    ]
}

/// Display name such as `Gaussian-Clayton`.
pub fn model_name(components: &[Family]) -> String {
    components
        .iter()
        .map(|f| {
            let n = f.name();
            n[..1].to_uppercase() + &n[1..]
        })
        .collect::<Vec<_>>()
        .join("-")
}
