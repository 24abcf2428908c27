//! Finite mixtures of copulas.

use super::Copula;
use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;
use rand::Rng;

/// Tolerance on the weights summing to one.
pub const WEIGHT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureCopula {
    components: Vec<(f64, Copula)>,
}

impl MixtureCopula {
    pub fn new(components: Vec<(f64, Copula)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter("mixture needs at least one component".into()));
        }
        let mut total = 0.0;
        let mut dim = None;
        for (w, c) in &components {
            if !(*w > 0.0 && *w <= 1.0) {
                return Err(Error::InvalidParameter(format!("mixture weight {w} outside (0, 1]")));
            }
            if matches!(c, Copula::Mixture(_)) {
                return Err(Error::InvalidParameter("nested mixtures are not supported".into()));
            }
            if let Some(d) = c.fixed_dim() {
                if dim.is_some_and(|e| e != d) {
                    return Err(Error::InvalidParameter("mixture components disagree on dimension".into()));
                }
                dim = Some(d);
            }
            total += w;
        }
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::InvalidParameter(format!("mixture weights sum to {total}")));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[(f64, Copula)] {
        &self.components
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|(w, _)| *w).collect()
    }

    pub(crate) fn log_pdf(&self, idx: &[usize], u: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .components
            .iter()
            .map(|(w, c)| w.ln() + c.log_pdf_unchecked(idx, u))
            .collect();
        log_sum_exp(&terms)
    }

    /// Component probabilities given `u_B`: `π_k ∝ w_k c_{k,B}(u_B)`.
    pub fn conditional_weights(&self, b_idx: &[usize], u_b: &[f64]) -> Vec<f64> {
        if b_idx.len() < 2 {
            return self.weights();
        }
        let logs: Vec<f64> = self
            .components
            .iter()
            .map(|(w, c)| w.ln() + c.log_pdf_unchecked(b_idx, u_b))
            .collect();
        let norm = log_sum_exp(&logs);
        if !norm.is_finite() {
            return self.weights();
        }
        logs.iter().map(|l| (l - norm).exp()).collect()
    }

    pub(crate) fn pick_component<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let r: f64 = rng.random();
        let mut acc = 0.0;
        for (k, (w, _)) in self.components.iter().enumerate() {
            acc += w;
            if r < acc {
                return k;
            }
        }
        self.components.len() - 1
    }
}
