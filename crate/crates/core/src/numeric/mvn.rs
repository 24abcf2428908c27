//! Multivariate normal rectangle probabilities by separation of variables
//! (Genz) with variable prioritisation and a randomised Richtmyer lattice.

use super::{bvn_cdf, norm_cdf, norm_quantile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub struct MvnOptions {
    /// Target absolute error (three standard errors over random shifts).
    pub abs_tol: f64,
    /// Hard cap on integrand evaluations.
    pub max_points: usize,
    /// Number of random lattice shifts used for the error estimate.
    pub shifts: usize,
    pub seed: u64,
}

impl Default for MvnOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-6,
            max_points: 2_000_000,
            shifts: 12,
            seed: 0x5eed_1234,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvnEstimate {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

impl MvnEstimate {
    fn exact(value: f64) -> Self {
        Self {
            value,
            error: 0.0,
            converged: true,
        }
    }
}

const PRIMES: [f64; 24] = [
    2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0, 29.0, 31.0, 37.0, 41.0, 43.0, 47.0, 53.0,
    59.0, 61.0, 67.0, 71.0, 73.0, 79.0, 83.0, 89.0,
];

/// `P(lower < Z < upper)` for `Z ~ N(0, corr)`; `corr` is row-major k×k.
/// Bounds may be infinite. Dimensions one and two are evaluated exactly.
pub fn mvn_rectangle(lower: &[f64], upper: &[f64], corr: &[f64], opts: &MvnOptions) -> MvnEstimate {
    let k = lower.len();
    assert_eq!(upper.len(), k);
    assert_eq!(corr.len(), k * k);
    if k == 0 {
        return MvnEstimate::exact(1.0);
    }
    if lower.iter().zip(upper).any(|(a, b)| a >= b) {
        return MvnEstimate::exact(0.0);
    }
    if k == 1 {
        return MvnEstimate::exact((norm_cdf(upper[0]) - norm_cdf(lower[0])).max(0.0));
    }
    if k == 2 {
        return MvnEstimate::exact(bvn_rectangle(lower, upper, corr[1]));
    }
    if k == 3 {
        return trivariate_rectangle(lower, upper, corr);
    }
    assert!(k - 1 <= PRIMES.len(), "dimension {k} exceeds lattice table");

    let (a, b, chol) = prioritised_cholesky(lower, upper, corr);

    let dim = k - 1;
    let gen: Vec<f64> = PRIMES[..dim].iter().map(|p| p.sqrt().fract()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut n = 64usize;
    let mut y = vec![0.0; k];
    let mut w = vec![0.0; dim];
    let mut total_points = 0usize;
    loop {
        let mut means = Vec::with_capacity(opts.shifts);
        for _ in 0..opts.shifts {
            let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            let mut acc = 0.0;
            for j in 1..=n {
                for d in 0..dim {
                    let t = (j as f64 * gen[d] + shift[d]).fract();
                    w[d] = (2.0 * t - 1.0).abs();
                }
                acc += sov_integrand(&a, &b, &chol, &w, &mut y, false);
                acc += sov_integrand(&a, &b, &chol, &w, &mut y, true);
            }
            means.push(acc / (2 * n) as f64);
            total_points += 2 * n;
        }
        let m = means.len() as f64;
        let mean = means.iter().sum::<f64>() / m;
        let var = means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m * (m - 1.0));
        let err = 3.0 * var.sqrt();
        let est = MvnEstimate {
            value: mean.clamp(0.0, 1.0),
            error: err,
            converged: err <= opts.abs_tol,
        };
        if est.converged || total_points >= opts.max_points {
            break est;
        }
        n *= 2;
    }
}

fn bvn_rectangle(lower: &[f64], upper: &[f64], r: f64) -> f64 {
    let p = bvn_cdf(upper[0], upper[1], r) - bvn_cdf(lower[0], upper[1], r) - bvn_cdf(upper[0], lower[1], r)
        + bvn_cdf(lower[0], lower[1], r);
    p.clamp(0.0, 1.0)
}

/// Three dimensions: adaptive quadrature over the first coordinate of the
/// exact bivariate rectangle probability of the other two given it.
fn trivariate_rectangle(lower: &[f64], upper: &[f64], corr: &[f64]) -> MvnEstimate {
    let (r12, r13, r23) = (corr[1], corr[2], corr[5]);
    let s2 = (1.0 - r12 * r12).sqrt();
    let s3 = (1.0 - r13 * r13).sqrt();
    let rho = ((r23 - r12 * r13) / (s2 * s3)).clamp(-1.0, 1.0);
    let (p_lo, p_hi) = (norm_cdf(lower[0]), norm_cdf(upper[0]));
    if p_hi <= p_lo {
        return MvnEstimate::exact(0.0);
    }
    let inner = |p: f64| {
        let x = norm_quantile(p);
        let lo = [(lower[1] - r12 * x) / s2, (lower[2] - r13 * x) / s3];
        let hi = [(upper[1] - r12 * x) / s2, (upper[2] - r13 * x) / s3];
        bvn_rectangle(&lo, &hi, rho)
    };
    let tol = 1e-15f64.max(1e-13 * (p_hi - p_lo));
    let v = crate::stats::integrate(inner, p_lo, p_hi, tol);
    MvnEstimate {
        value: v.clamp(0.0, 1.0),
        error: tol,
        converged: true,
    }
}

fn sov_integrand(a: &[f64], b: &[f64], chol: &[f64], w: &[f64], y: &mut [f64], antithetic: bool) -> f64 {
    let k = a.len();
    let mut d = norm_cdf(a[0] / chol[0]);
    let mut e = norm_cdf(b[0] / chol[0]);
    let mut f = e - d;
    for i in 1..k {
        let wi = if antithetic { 1.0 - w[i - 1] } else { w[i - 1] };
        let p = (d + wi * (e - d)).clamp(1e-300, 1.0 - 1e-16);
        y[i - 1] = norm_quantile(p);
        let s: f64 = (0..i).map(|j| chol[i * k + j] * y[j]).sum();
        let lii = chol[i * k + i];
        d = norm_cdf((a[i] - s) / lii);
        e = norm_cdf((b[i] - s) / lii);
        f *= e - d;
        if f <= 0.0 {
            return 0.0;
        }
    }
    f
}

/// Cholesky factor with Genz–Bretz prioritisation: at each step the
/// variable with the smallest conditional interval probability goes next.
fn prioritised_cholesky(lower: &[f64], upper: &[f64], corr: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let k = lower.len();
    let mut sigma = corr.to_vec();
    let mut a = lower.to_vec();
    let mut b = upper.to_vec();
    let mut l = vec![0.0; k * k];
    let mut ey = vec![0.0; k];
    for i in 0..k {
        let mut best = i;
        let mut best_p = f64::INFINITY;
        for j in i..k {
            let s: f64 = (0..i).map(|q| l[j * k + q] * ey[q]).sum();
            let v = sigma[j * k + j] - (0..i).map(|q| l[j * k + q].powi(2)).sum::<f64>();
            let sd = v.max(1e-300).sqrt();
            let p = norm_cdf((b[j] - s) / sd) - norm_cdf((a[j] - s) / sd);
            if p < best_p {
                best_p = p;
                best = j;
            }
        }
        if best != i {
            a.swap(i, best);
            b.swap(i, best);
            for c in 0..k {
                sigma.swap(i * k + c, best * k + c);
            }
            for r in 0..k {
                sigma.swap(r * k + i, r * k + best);
            }
            for c in 0..i {
                l.swap(i * k + c, best * k + c);
            }
        }
        let v = sigma[i * k + i] - (0..i).map(|q| l[i * k + q].powi(2)).sum::<f64>();
        let lii = v.max(1e-300).sqrt();
        l[i * k + i] = lii;
        for j in i + 1..k {
            let s: f64 = (0..i).map(|q| l[j * k + q] * l[i * k + q]).sum();
            l[j * k + i] = (sigma[j * k + i] - s) / lii;
        }
        let s: f64 = (0..i).map(|q| l[i * k + q] * ey[q]).sum();
        let lo = (a[i] - s) / lii;
        let hi = (b[i] - s) / lii;
        let p = (norm_cdf(hi) - norm_cdf(lo)).max(1e-300);
        ey[i] = (super::norm_pdf(lo) - super::norm_pdf(hi)) / p;
    }
    (a, b, l)
}
