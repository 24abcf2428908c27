//! Gaussian copula with correlation matrix `Γ`, optionally parameterised
//! by a unit-diagonal upper-triangular factor `R` through
//! `Γ = diag(Σ)^{−1/2} Σ diag(Σ)^{−1/2}`, `Σ = RᵀR`.

use crate::error::{Error, Result};
use crate::numeric::{mvn_rectangle, norm_cdf, norm_quantile, MvnEstimate, MvnOptions};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCopula {
    corr: DMatrix<f64>,
    chol_upper: DMatrix<f64>,
    lower: DMatrix<f64>,
    inv_minus_identity: DMatrix<f64>,
    log_det: f64,
}

/// Conditional law of the normal scores `y_A` given `y_B`.
#[derive(Debug, Clone)]
pub(crate) struct ConditionalNormal {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Row-major correlation of the conditional law.
    pub corr: Vec<f64>,
}

impl GaussianCopula {
    /// From a correlation matrix: symmetric, unit diagonal, positive definite.
    pub fn from_correlation(corr: DMatrix<f64>) -> Result<Self> {
        let m = corr.nrows();
        if m < 1 || corr.ncols() != m {
            return Err(Error::InvalidParameter("correlation matrix must be square".into()));
        }
        for i in 0..m {
            if corr[(i, i)] != 1.0 {
                return Err(Error::InvalidParameter("correlation matrix needs a unit diagonal".into()));
            }
            for j in 0..i {
                let (a, b) = (corr[(i, j)], corr[(j, i)]);
                if a != b || !(a.abs() < 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "correlation entry ({i},{j}) invalid or asymmetric"
                    )));
                }
            }
        }
        let chol = corr
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidParameter("correlation matrix is not positive definite".into()))?;
        let lower = chol.l();
        let upper = lower.transpose();
        let mut chol_upper = upper.clone();
        for j in 0..m {
            let d = upper[(j, j)];
            for i in 0..=j {
                chol_upper[(i, j)] /= d;
            }
        }
        let log_det = 2.0 * (0..m).map(|i| lower[(i, i)].ln()).sum::<f64>();
        let inv_minus_identity = chol.inverse() - DMatrix::identity(m, m);
        Ok(Self {
            corr,
            chol_upper,
            lower,
            inv_minus_identity,
            log_det,
        })
    }

    /// From the unit-diagonal upper-triangular factor `R`.
    pub fn from_chol_upper(r: &DMatrix<f64>) -> Result<Self> {
        let m = r.nrows();
        if r.ncols() != m {
            return Err(Error::InvalidParameter("factor must be square".into()));
        }
        for i in 0..m {
            if r[(i, i)] != 1.0 {
                return Err(Error::InvalidParameter("factor needs a unit diagonal".into()));
            }
            for j in 0..i {
                if r[(i, j)] != 0.0 {
                    return Err(Error::InvalidParameter("factor must be upper triangular".into()));
                }
            }
        }
        let sigma = r.transpose() * r;
        let d: Vec<f64> = (0..m).map(|i| sigma[(i, i)].sqrt()).collect();
        let mut corr = DMatrix::from_fn(m, m, |i, j| sigma[(i, j)] / (d[i] * d[j]));
        for i in 0..m {
            corr[(i, i)] = 1.0;
            for j in 0..i {
                let v = 0.5 * (corr[(i, j)] + corr[(j, i)]);
                corr[(i, j)] = v;
                corr[(j, i)] = v;
            }
        }
        let mut out = Self::from_correlation(corr)?;
        out.chol_upper = r.clone();
        Ok(out)
    }

    pub fn independent(m: usize) -> Self {
        Self::from_correlation(DMatrix::identity(m, m)).expect("identity is a valid correlation")
    }

    pub fn equicorrelated(m: usize, rho: f64) -> Result<Self> {
        Self::from_correlation(DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { rho }))
    }

    /// From a row-major `m × m` correlation matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidParameter(format!("correlation matrix must be {m}×{m}")));
        }
        Self::from_correlation(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.corr.nrows()
    }

    pub fn correlation(&self) -> &DMatrix<f64> {
        &self.corr
    }

    /// Unit-diagonal upper-triangular `R` reproducing `Γ`.
    pub fn chol_upper(&self) -> &DMatrix<f64> {
        &self.chol_upper
    }

    /// Off-diagonal correlations, upper triangle in row-major order.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let m = self.dim();
        let mut out = Vec::with_capacity(m * (m - 1) / 2);
        for i in 0..m {
            for j in i + 1..m {
                out.push(self.corr[(i, j)]);
            }
        }
        out
    }

    fn sub(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.corr[(rows[i], cols[j])])
    }

    pub(crate) fn check_indices(&self, idx: &[usize]) -> Result<()> {
        if let Some(&j) = idx.iter().find(|&&j| j >= self.dim()) {
            return Err(Error::Usage(format!("index {j} out of range for a {}-dimensional Gaussian copula", self.dim())));
        }
        Ok(())
    }

    fn is_full(&self, idx: &[usize]) -> bool {
        idx.len() == self.dim() && idx.iter().enumerate().all(|(i, &j)| i == j)
    }

    /// Log density of the margin on `idx` at normal scores `y`.
    pub(crate) fn log_pdf_scores(&self, idx: &[usize], y: &[f64]) -> f64 {
        let k = idx.len();
        if k < 2 {
            return 0.0;
        }
        if self.is_full(idx) {
            let mut q = 0.0;
            for i in 0..k {
                let row: f64 = (0..k).map(|j| self.inv_minus_identity[(i, j)] * y[j]).sum();
                q += y[i] * row;
            }
            return -0.5 * self.log_det - 0.5 * q;
        }
        let sub = self.sub(idx, idx);
        let chol = match sub.cholesky() {
            Some(c) => c,
            None => return f64::NEG_INFINITY,
        };
        let l = chol.l();
        let log_det = 2.0 * (0..k).map(|i| l[(i, i)].ln()).sum::<f64>();
        let yv = DVector::from_column_slice(y);
        let z = chol.solve(&yv);
        let q = yv.dot(&z) - yv.dot(&yv);
        -0.5 * log_det - 0.5 * q
    }

    pub(crate) fn log_pdf(&self, idx: &[usize], u: &[f64]) -> f64 {
        let y: Vec<f64> = u.iter().map(|&v| norm_quantile(v)).collect();
        self.log_pdf_scores(idx, &y)
    }

    /// Law of `y_A | y_B`.
    pub(crate) fn conditional_normal(&self, a_idx: &[usize], b_idx: &[usize], y_b: &[f64]) -> ConditionalNormal {
        let ka = a_idx.len();
        let mut cov = self.sub(a_idx, a_idx);
        let mut mean = vec![0.0; ka];
        if !b_idx.is_empty() {
            let bb = self.sub(b_idx, b_idx);
            let ab = self.sub(a_idx, b_idx);
            let chol = bb.cholesky().expect("principal submatrix of a PD matrix");
            // X = Γ_BB⁻¹ Γ_BA
            let x = chol.solve(&ab.transpose());
            let yb = DVector::from_column_slice(y_b);
            let mu = x.transpose() * yb;
            mean.copy_from_slice(mu.as_slice());
            cov -= &ab * &x;
        }
        let sd: Vec<f64> = (0..ka).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
        let mut corr = vec![0.0; ka * ka];
        for i in 0..ka {
            for j in 0..ka {
                corr[i * ka + j] = if i == j { 1.0 } else { cov[(i, j)] / (sd[i] * sd[j]) };
            }
        }
        ConditionalNormal { mean, sd, corr }
    }

    /// `P(U_A ∈ [lo, hi] | U_B = u_B)`.
    pub(crate) fn conditional_rectangle(
        &self,
        a_idx: &[usize],
        lo: &[f64],
        hi: &[f64],
        b_idx: &[usize],
        u_b: &[f64],
        opts: &MvnOptions,
    ) -> MvnEstimate {
        let y_b: Vec<f64> = u_b.iter().map(|&v| norm_quantile(v)).collect();
        let cn = self.conditional_normal(a_idx, b_idx, &y_b);
        let std = |u: f64, i: usize| {
            let y = norm_quantile(u);
            if y.is_infinite() {
                y
            } else {
                (y - cn.mean[i]) / cn.sd[i]
            }
        };
        let lower: Vec<f64> = lo.iter().enumerate().map(|(i, &u)| std(u, i)).collect();
        let upper: Vec<f64> = hi.iter().enumerate().map(|(i, &u)| std(u, i)).collect();
        mvn_rectangle(&lower, &upper, &cn.corr, opts)
    }

    /// Margin CDF on `idx`.
    pub(crate) fn cdf(&self, idx: &[usize], u: &[f64], opts: &MvnOptions) -> MvnEstimate {
        let lo = vec![0.0; u.len()];
        self.conditional_rectangle(idx, &lo, u, &[], &[], opts)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let m = self.dim();
        let z: Vec<f64> = (0..m).map(|_| StandardNormal.sample(rng)).collect();
        (0..m)
            .map(|i| {
                let y: f64 = (0..=i).map(|j| self.lower[(i, j)] * z[j]).sum();
                super::clamp_open(norm_cdf(y))
            })
            .collect()
    }
}
