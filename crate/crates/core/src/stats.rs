//! Small statistical toolkit: rank correlation, goodness-of-fit tests,
//! effective sample size and adaptive quadrature.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Kendall's τ-b, O(n log n) (Knight's merge-sort algorithm).
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return f64::NAN;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    let pairs = |n: u64| n * n.saturating_sub(1) / 2;
    let n0 = pairs(n as u64);

    // ties in x, and joint ties in (x, y)
    let (mut tx, mut txy) = (0u64, 0u64);
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && x[idx[j]] == x[idx[i]] {
            j += 1;
        }
        tx += pairs((j - i) as u64);
        let mut k = i;
        while k < j {
            let mut l = k + 1;
            while l < j && y[idx[l]] == y[idx[k]] {
                l += 1;
            }
            txy += pairs((l - k) as u64);
            k = l;
        }
        i = j;
    }

    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut ys, &mut buf);

    let mut ty = 0u64;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && ys[j] == ys[i] {
            j += 1;
        }
        ty += pairs((j - i) as u64);
        i = j;
    }
    let concordant_minus_discordant = n0 as i128 - tx as i128 - ty as i128 + txy as i128 - 2 * swaps as i128;
    let denom = ((n0 - tx) as f64 * (n0 - ty) as f64).sqrt();
    concordant_minus_discordant as f64 / denom
}

fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(l, bl) + merge_count(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    while i < mid {
        buf[k] = v[i];
        i += 1;
        k += 1;
    }
    while j < n {
        buf[k] = v[j];
        j += 1;
        k += 1;
    }
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Average ranks, 1-based; tied values share the mean of their ranks.
pub fn mid_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = 0.5 * ((i + 1) + (j + 1)) as f64;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Sample Spearman correlation: Pearson correlation of mid-ranks.
pub fn spearman_sample(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (mid_ranks(x), mid_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Sample mean and standard error of the mean.
pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Linearly interpolated sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Posterior mean with an equal-tailed credible interval.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CredibleSummary {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl CredibleSummary {
    /// `level` is the interval's coverage, 0.95 for 2.5/97.5 percentiles.
    pub fn from_values(values: &[f64], level: f64) -> Self {
        let mut sorted: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
        sorted.sort_by(f64::total_cmp);
        let tail = 0.5 * (1.0 - level);
        Self {
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            lower: quantile_sorted(&sorted, tail),
            upper: quantile_sorted(&sorted, 1.0 - tail),
        }
    }

    pub fn covers(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    /// Point estimate over the bracketed interval.
    pub fn table_cell(&self, digits: usize) -> String {
        format!("{:.d$}\n[{:.d$}, {:.d$}]", self.mean, self.lower, self.upper, d = digits)
    }
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t < 1.0 {
        // Jacobi-theta form converges fast for small t
        let s = (2.0 * std::f64::consts::PI).sqrt() / t;
        let q = (-std::f64::consts::PI.powi(2) / (8.0 * t * t)).exp();
        let mut sum = 0.0;
        for k in 0..20 {
            let e = (2 * k + 1) as f64;
            sum += q.powf(e * e);
        }
        return (1.0 - s * sum).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * t * t).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_pvalue(d: f64, n_eff: f64) -> f64 {
    let sn = n_eff.sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

/// Result of a Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Copy)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample KS test of `sample` against a continuous CDF. `n_eff`
/// replaces the sample size in the asymptotic p-value, for correlated draws.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64, n_eff: Option<f64>) -> KsResult {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    KsResult {
        statistic: d,
        p_value: ks_pvalue(d, n_eff.unwrap_or(n)),
    }
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64], n_eff: Option<f64>) -> KsResult {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    KsResult {
        statistic: d,
        p_value: ks_pvalue(d, n_eff.unwrap_or(na * nb / (na + nb))),
    }
}

/// Upper tail of the χ² distribution.
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    ChiSquared::new(df).map(|c| c.sf(x)).unwrap_or(f64::NAN)
}

/// Result of a χ² test.
#[derive(Debug, Clone, Copy)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Pearson goodness-of-fit test of cell counts against cell probabilities.
/// Cells with expected count below `min_expected` are pooled.
pub fn chi_square_gof(observed: &[u64], probs: &[f64], min_expected: f64) -> ChiSquareResult {
    assert_eq!(observed.len(), probs.len());
    let n: u64 = observed.iter().sum();
    let nf = n as f64;
    let (mut stat, mut cells) = (0.0, 0usize);
    let (mut pool_o, mut pool_e) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        let e = nf * p;
        if e < min_expected {
            pool_o += o as f64;
            pool_e += e;
            continue;
        }
        stat += (o as f64 - e).powi(2) / e;
        cells += 1;
    }
    if pool_e > 0.0 {
        stat += (pool_o - pool_e).powi(2) / pool_e;
        cells += 1;
    }
    let df = cells.saturating_sub(1) as f64;
    ChiSquareResult {
        statistic: stat,
        df,
        p_value: chi_square_sf(stat, df),
    }
}

/// χ² test that two sets of counts over the same cells share one law.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> ChiSquareResult {
    assert_eq!(a.len(), b.len());
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let total = na + nb;
    let (mut stat, mut cells) = (0.0, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        let col = (x + y) as f64;
        if col == 0.0 {
            continue;
        }
        let ea = col * na / total;
        let eb = col * nb / total;
        stat += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
        cells += 1;
    }
    let df = cells.saturating_sub(1) as f64;
    ChiSquareResult {
        statistic: stat,
        df,
        p_value: chi_square_sf(stat, df),
    }
}

/// Effective sample size by Geyer's initial positive sequence estimator.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let var = c.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if var == 0.0 {
        return n as f64;
    }
    let acf = |lag: usize| -> f64 {
        c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / (n as f64 * var)
    };
    let mut sum = 0.0;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = acf(2 * k) + acf(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        k += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1.0);
    n as f64 / tau
}

const GK_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const G_WEIGHTS: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * GK_WEIGHTS[7];
    let mut gauss = fc * G_WEIGHTS[3];
    for i in 0..7 {
        let x = h * GK_NODES[i];
        let s = f(c - x) + f(c + x);
        kron += GK_WEIGHTS[i] * s;
        if i % 2 == 1 {
            gauss += G_WEIGHTS[i / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) quadrature of `f` over `[a, b]`.
pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, err) = gk15(f, a, b);
        if err <= tol || depth == 0 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth - 1) + rec(f, m, b, 0.5 * tol, depth - 1)
    }
    rec(&mut f, a, b, tol, 40)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_with_ties() {
        assert_eq!(mid_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman_sample(&x, &[10.0, 20.0, 30.0, 40.0]) - 1.0).abs() < 1e-15);
        assert!((spearman_sample(&x, &[4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
        // hand value: ranks (1,2,3,4) against (1.5,1.5,3,4)
        let r = spearman_sample(&x, &[0.0, 0.0, 5.0, 6.0]);
        assert!((r - 4.5 / (5.0f64 * 4.5).sqrt()).abs() < 1e-12);
    }

    fn brute_tau(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let (mut s, mut tx, mut ty) = (0i64, 0i64, 0i64);
        let mut n0 = 0i64;
        for i in 0..n {
            for j in i + 1..n {
                let a = (x[i] - x[j]).signum() * (x[i] != x[j]) as i32 as f64;
                let b = (y[i] - y[j]).signum() * (y[i] != y[j]) as i32 as f64;
                s += (a * b) as i64;
                tx += (a == 0.0) as i64;
                ty += (b == 0.0) as i64;
                n0 += 1;
            }
        }
        s as f64 / (((n0 - tx) * (n0 - ty)) as f64).sqrt()
    }

    #[test]
    fn kendall_matches_quadratic_count() {
        let x = [1.0, 2.0, 2.0, 3.0, 5.0, 4.0, 7.0, 7.0, 0.5];
        let y = [3.0, 1.0, 2.0, 2.0, 6.0, 9.0, 9.0, 0.0, 1.0];
        assert!((kendall_tau(&x, &y) - brute_tau(&x, &y)).abs() < 1e-14);
        let z: Vec<f64> = (0..50).map(|i| ((i * 37) % 50) as f64).collect();
        let w: Vec<f64> = (0..50).map(|i| ((i * 13 + 7) % 50) as f64).collect();
        assert!((kendall_tau(&z, &w) - brute_tau(&z, &w)).abs() < 1e-14);
        assert_eq!(kendall_tau(&z, &z), 1.0);
    }

    #[test]
    fn kolmogorov_branches_agree() {
        // both series are valid near t = 1
        let t: f64 = 1.0;
        let mut alt = 0.0;
        for k in 1..=100 {
            let term = (-2.0 * (k * k) as f64 * t * t).exp();
            alt += if k % 2 == 1 { term } else { -term };
        }
        let s = (2.0 * std::f64::consts::PI).sqrt() / 0.999999;
        let q = (-std::f64::consts::PI.powi(2) / (8.0 * 0.999999f64.powi(2))).exp();
        let theta: f64 = 1.0 - s * (0..20).map(|k| q.powf(((2 * k + 1) as f64).powi(2))).sum::<f64>();
        assert!((2.0 * alt - theta).abs() < 1e-5);
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-3);
    }

    #[test]
    fn quadrature_polynomial_and_kink() {
        let v = integrate(|x| x.powi(5), 0.0, 2.0, 1e-12);
        assert!((v - 64.0 / 6.0).abs() < 1e-12);
        let v = integrate(|x: f64| x.abs().sqrt(), -1.0, 1.0, 1e-10);
        assert!((v - 4.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn chi_square_tail() {
        assert!((chi_square_sf(3.841458820694124, 1.0) - 0.05).abs() < 1e-10);
        let r = chi_square_gof(&[25, 25, 25, 25], &[0.25; 4], 5.0);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.df, 3.0);
    }

    #[test]
    fn credible_summary_of_a_grid() {
        let v: Vec<f64> = (0..=100).map(f64::from).collect();
        let s = CredibleSummary::from_values(&v, 0.95);
        assert!(s.mean == 50.0 && (s.lower - 2.5).abs() < 1e-12 && (s.upper - 97.5).abs() < 1e-12);
        let flat = CredibleSummary::from_values(&[0.3; 7], 0.95);
        assert_eq!(flat.lower, flat.upper);
        assert_eq!(flat.table_cell(2), "0.30\n[0.30, 0.30]");
    }

    #[test]
    fn ess_of_iid_and_ar1() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let iid: Vec<f64> = (0..20000).map(|_| rng.random::<f64>()).collect();
        let e = effective_sample_size(&iid);
        assert!(e > 15000.0 && e <= 25000.0, "{e}");
        let mut ar = vec![0.0];
        for i in 1..20000 {
            let prev: f64 = ar[i - 1];
            ar.push(0.9 * prev + rng.random::<f64>() - 0.5);
        }
        // τ = (1+φ)/(1−φ) = 19
        let e = effective_sample_size(&ar);
        assert!(e > 20000.0 / 30.0 && e < 20000.0 / 12.0, "{e}");
    }
}
