//! Mobility and poverty functionals: transition matrices, Shorrocks' M₁,
//! zero/positive transition probabilities, FGT and duration-adjusted
//! chronic poverty, plus their posterior summaries over kept draws.

use crate::copulas::{spearman_rho, Copula};
use crate::error::{Error, Result};
use crate::likelihood::rectangle_mass;
use crate::marginals::MixedMarginal;
use crate::mcmc::PosteriorDraws;
use crate::simulate::simulate;
use crate::stats::{quantile_sorted, CredibleSummary};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Class of `y` given increasing cut points: the number of cut points
/// strictly below `y`, so class 0 is `y ≤ c_1`.
pub fn income_class(y: f64, cuts: &[f64]) -> usize {
    cuts.partition_point(|&c| c < y)
}

/// Cut points at the sample quantiles `k/classes`, `k = 1..classes`, with
/// repeated values merged.
pub fn quantile_cuts(values: &[f64], classes: usize) -> Result<Vec<f64>> {
    if classes < 2 || values.is_empty() {
        return Err(Error::Usage("quantile classes need a nonempty sample and at least two classes".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut cuts: Vec<f64> = (1..classes).map(|k| quantile_sorted(&sorted, k as f64 / classes as f64)).collect();
    cuts.dedup();
    Ok(cuts)
}

fn check_cuts(cuts: &[f64]) -> Result<()> {
    if cuts.windows(2).any(|w| !(w[0] < w[1])) || cuts.iter().any(|c| !c.is_finite()) {
        return Err(Error::Usage("class boundaries must be finite and strictly increasing".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    /// Cut points for the origin and destination periods.
    pub from_cuts: Vec<f64>,
    pub to_cuts: Vec<f64>,
    /// `p[a][b] = P(to class b | from class a)`; rows of empty origin
    /// classes are NaN.
    pub p: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    pub fn classes(&self) -> usize {
        self.p.len()
    }

    /// Origin classes that had no mass.
    pub fn undefined_rows(&self) -> Vec<usize> {
        (0..self.classes()).filter(|&a| self.p[a].iter().any(|v| v.is_nan())).collect()
    }

    fn from_cells(from_cuts: &[f64], to_cuts: &[f64], cells: Vec<Vec<f64>>) -> Self {
        let p = cells
            .into_iter()
            .map(|row| {
                let total: f64 = row.iter().sum();
                if total > 0.0 {
                    row.iter().map(|v| v / total).collect()
                } else {
                    vec![f64::NAN; row.len()]
                }
            })
            .collect();
        Self {
            from_cuts: from_cuts.to_vec(),
            to_cuts: to_cuts.to_vec(),
            p,
        }
    }
}

/// Empirical transition matrix from observed `(origin, destination)` pairs.
pub fn transition_matrix_from_pairs(pairs: &[(f64, f64)], from_cuts: &[f64], to_cuts: &[f64]) -> Result<TransitionMatrix> {
    check_cuts(from_cuts)?;
    check_cuts(to_cuts)?;
    if from_cuts.len() != to_cuts.len() {
        return Err(Error::Usage("both periods need the same number of classes".into()));
    }
    let k = from_cuts.len() + 1;
    let mut cells = vec![vec![0.0; k]; k];
    for &(a, b) in pairs {
        cells[income_class(a, from_cuts)][income_class(b, to_cuts)] += 1.0;
    }
    Ok(TransitionMatrix::from_cells(from_cuts, to_cuts, cells))
}

/// Transition matrix implied by a model for margins `pair = (from, to)`,
/// from exact rectangle masses of the bivariate copula margin.
pub fn transition_matrix_model(
    cop: &Copula,
    margs: &[MixedMarginal],
    pair: (usize, usize),
    from_cuts: &[f64],
    to_cuts: &[f64],
) -> Result<TransitionMatrix> {
    check_cuts(from_cuts)?;
    check_cuts(to_cuts)?;
    if from_cuts.len() != to_cuts.len() {
        return Err(Error::Usage("both periods need the same number of classes".into()));
    }
    let (i, j) = pair;
    let edges = |cuts: &[f64], m: &MixedMarginal| -> Vec<f64> {
        let mut e = vec![0.0];
        e.extend(cuts.iter().map(|&c| m.cdf(c)));
        e.push(1.0);
        e
    };
    let ei = edges(from_cuts, &margs[i]);
    let ej = edges(to_cuts, &margs[j]);
    let k = from_cuts.len() + 1;
    let mut cells = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in 0..k {
            if ei[a + 1] > ei[a] && ej[b + 1] > ej[b] {
                cells[a][b] = rectangle_mass(cop, &[i, j], &[ei[a], ej[b]], &[ei[a + 1], ej[b + 1]], &[], &[])?.max(0.0);
            }
        }
    }
    Ok(TransitionMatrix::from_cells(from_cuts, to_cuts, cells))
}

/// `(m − trace P) / (m − 1)`.
pub fn shorrocks_m1(p: &TransitionMatrix) -> Result<f64> {
    let m = p.classes();
    if m < 2 || p.p.iter().any(|r| r.len() != m) {
        return Err(Error::Usage("Shorrocks' index needs a square matrix with at least two classes".into()));
    }
    let trace: f64 = (0..m).map(|a| p.p[a][a]).sum();
    Ok((m as f64 - trace) / (m as f64 - 1.0))
}

/// Joint and conditional probabilities of zero and nonzero values in two periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroTransitions {
    pub both_zero: f64,
    pub zero_then_positive: f64,
    pub positive_then_zero: f64,
    pub both_positive: f64,
    /// `P(X_to > 0 | X_from = 0)`.
    pub zero_to_positive: f64,
    /// `P(X_to = 0 | X_from > 0)`.
    pub positive_to_zero: f64,
    pub stay_zero: f64,
    pub stay_positive: f64,
}

/// Exact transition probabilities between zero and nonzero values from
/// the rectangle mass of the two atoms at zero.
pub fn zero_transition_probs(cop: &Copula, margs: &[MixedMarginal], pair: (usize, usize)) -> Result<ZeroTransitions> {
    let (i, j) = pair;
    for &k in &[i, j] {
        if !margs[k].is_atom(0.0) {
            return Err(Error::Usage(format!(
                "margin {} has no point mass at zero, so zero transitions are undefined",
                k + 1
            )));
        }
    }
    let (pi_i, pi_j) = (margs[i].cdf(0.0) - margs[i].cdf_left(0.0), margs[j].cdf(0.0) - margs[j].cdf_left(0.0));
    let both_zero = rectangle_mass(
        cop,
        &[i, j],
        &[margs[i].cdf_left(0.0), margs[j].cdf_left(0.0)],
        &[margs[i].cdf(0.0), margs[j].cdf(0.0)],
        &[],
        &[],
    )?;
    let zero_then_positive = pi_i - both_zero;
    let positive_then_zero = pi_j - both_zero;
    let both_positive = 1.0 - pi_i - pi_j + both_zero;
    let stay_zero = both_zero / pi_i;
    let positive_to_zero = positive_then_zero / (1.0 - pi_i);
    Ok(ZeroTransitions {
        both_zero,
        zero_then_positive,
        positive_then_zero,
        both_positive,
        zero_to_positive: 1.0 - stay_zero,
        positive_to_zero,
        stay_zero,
        stay_positive: 1.0 - positive_to_zero,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PovertyConfig {
    /// Poverty line.
    pub z: f64,
    /// Share of periods in poverty needed to count as chronically poor.
    pub tau: f64,
    /// FGT order.
    pub alpha: f64,
}

impl PovertyConfig {
    pub fn new(z: f64, tau: f64, alpha: f64) -> Result<Self> {
        if !(z > 0.0) {
            return Err(Error::InvalidParameter(format!("poverty line {z} must be positive")));
        }
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::InvalidParameter(format!("duration cutoff {tau} outside (0, 1]")));
        }
        if !(alpha >= 0.0) {
            return Err(Error::InvalidParameter(format!("FGT order {alpha} must be nonnegative")));
        }
        Ok(Self { z, tau, alpha })
    }
}

/// `((z − y)/z)^α 𝕀(y ≤ z)`.
fn poverty_gap(y: f64, z: f64, alpha: f64) -> f64 {
    if y > z {
        0.0
    } else if alpha == 0.0 {
        1.0
    } else {
        ((z - y) / z).powf(alpha)
    }
}

/// Foster–Greer–Thorbecke index `(1/n) Σ ((z − y_i)/z)^α 𝕀(y_i ≤ z)`.
pub fn fgt(incomes: &[f64], z: f64, alpha: f64) -> f64 {
    incomes.iter().map(|&y| poverty_gap(y, z, alpha)).sum::<f64>() / incomes.len() as f64
}

/// Duration-adjusted FGT: individuals poor in at least a share `τ` of the
/// periods keep their gaps, everyone else is censored to zero; returns the
/// grand mean over the `n × T` panel.
pub fn foster_chronic(panel: &[Vec<f64>], cfg: &PovertyConfig) -> f64 {
    let mut total = 0.0;
    let mut cells = 0usize;
    for row in panel {
        let t = row.len();
        let poor = row.iter().filter(|&&y| y <= cfg.z).count();
        cells += t;
        if (poor as f64) / (t as f64) >= cfg.tau {
            total += row.iter().map(|&y| poverty_gap(y, cfg.z, cfg.alpha)).sum::<f64>();
        }
    }
    total / cells as f64
}

/// Per-draw values of a functional and their posterior summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorFunctional {
    pub per_draw: Vec<f64>,
    pub summary: CredibleSummary,
}

/// Evaluates `f` at every kept draw. Each call gets an RNG seeded
/// identically, so simulation-based functionals share random numbers
/// across draws.
pub fn posterior_functional<F>(draws: &PosteriorDraws, seed: u64, f: F) -> Result<PosteriorFunctional>
where
    F: Fn(&Copula, &mut ChaCha8Rng) -> Result<f64> + Sync + Send,
{
    let eval = |d: &crate::mcmc::Draw| -> Result<f64> {
        let cop = d.copula(draws.dim)?;
        f(&cop, &mut ChaCha8Rng::seed_from_u64(seed))
    };
    #[cfg(feature = "parallel")]
    let per_draw: Vec<f64> = {
        use rayon::prelude::*;
        draws.draws.par_iter().map(eval).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let per_draw: Vec<f64> = draws.draws.iter().map(eval).collect::<Result<_>>()?;
    Ok(PosteriorFunctional {
        summary: CredibleSummary::from_values(&per_draw, 0.95),
        per_draw,
    })
}

/// Named model functionals available to reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "measure", rename_all = "snake_case")]
pub enum Functional {
    Spearman { from: usize, to: usize, n_mc: usize },
    Shorrocks { from: usize, to: usize, cuts_from: Vec<f64>, cuts_to: Vec<f64> },
    ZeroToPositive { from: usize, to: usize },
    PositiveToZero { from: usize, to: usize },
    Fgt { period: usize, z: f64, alpha: f64, n_mc: usize },
    Chronic { z: f64, tau: f64, alpha: f64, n_mc: usize },
}

impl Functional {
    pub const NAMES: [&'static str; 6] = ["spearman", "shorrocks", "zero_to_positive", "positive_to_zero", "fgt", "chronic"];

    pub fn name(&self) -> &'static str {
        match self {
            Functional::Spearman { .. } => Self::NAMES[0],
            Functional::Shorrocks { .. } => Self::NAMES[1],
            Functional::ZeroToPositive { .. } => Self::NAMES[2],
            Functional::PositiveToZero { .. } => Self::NAMES[3],
            Functional::Fgt { .. } => Self::NAMES[4],
            Functional::Chronic { .. } => Self::NAMES[5],
        }
    }

    /// Value under one fitted model.
    pub fn evaluate(&self, cop: &Copula, margs: &[MixedMarginal], rng: &mut ChaCha8Rng) -> Result<f64> {
        let m = margs.len();
        let check = |k: usize| {
            if k >= m {
                Err(Error::Usage(format!("period {} out of range for {m} margins", k + 1)))
            } else {
                Ok(())
            }
        };
        match self {
            Functional::Spearman { from, to, n_mc } => {
                check(*from)?;
                check(*to)?;
                Ok(spearman_rho(cop, m, (*from, *to), *n_mc, rng)?.0)
            }
            Functional::Shorrocks { from, to, cuts_from, cuts_to } => {
                check(*from)?;
                check(*to)?;
                shorrocks_m1(&transition_matrix_model(cop, margs, (*from, *to), cuts_from, cuts_to)?)
            }
            Functional::ZeroToPositive { from, to } => Ok(zero_transition_probs(cop, margs, (*from, *to))?.zero_to_positive),
            Functional::PositiveToZero { from, to } => Ok(zero_transition_probs(cop, margs, (*from, *to))?.positive_to_zero),
            Functional::Fgt { period, z, alpha, n_mc } => {
                check(*period)?;
                PovertyConfig::new(*z, 1.0, *alpha)?;
                let rows = simulate(cop, margs, *n_mc, rng)?;
                let col: Vec<f64> = rows.iter().map(|r| r[*period]).collect();
                Ok(fgt(&col, *z, *alpha))
            }
            Functional::Chronic { z, tau, alpha, n_mc } => {
                let cfg = PovertyConfig::new(*z, *tau, *alpha)?;
                Ok(foster_chronic(&simulate(cop, margs, *n_mc, rng)?, &cfg))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copulas::GaussianCopula;
    use crate::marginals::{Atom, ContinuousPart};
    use crate::mcmc::Draw;
    use proptest::prelude::*;

    fn zero_atom(p: f64) -> MixedMarginal {
        MixedMarginal::parametric(vec![Atom { location: 0.0, mass: p }], ContinuousPart::Exponential { rate: 1.0 }).unwrap()
    }

    #[test]
    fn classes_and_empirical_matrix() {
        let cuts = [1.0, 2.0, 3.0];
        assert_eq!(income_class(1.0, &cuts), 0);
        assert_eq!(income_class(1.5, &cuts), 1);
        assert_eq!(income_class(9.0, &cuts), 3);
        let pairs: Vec<(f64, f64)> = (0..40).map(|i| (i as f64 / 10.0, i as f64 / 10.0)).collect();
        let p = transition_matrix_from_pairs(&pairs, &cuts, &cuts).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                assert_eq!(p.p[a][b], if a == b { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(shorrocks_m1(&p).unwrap(), 0.0);
        let sparse = transition_matrix_from_pairs(&[(0.5, 3.5)], &cuts, &cuts).unwrap();
        assert_eq!(sparse.undefined_rows(), vec![1, 2, 3]);
        assert!(transition_matrix_from_pairs(&pairs, &[2.0, 1.0], &cuts).is_err());
    }

    #[test]
    fn shorrocks_extremes() {
        let uniform = TransitionMatrix {
            from_cuts: vec![0.0; 4],
            to_cuts: vec![0.0; 4],
            p: vec![vec![0.2; 5]; 5],
        };
        assert!((shorrocks_m1(&uniform).unwrap() - 1.0).abs() < 1e-15);
        let one = TransitionMatrix {
            from_cuts: vec![],
            to_cuts: vec![],
            p: vec![vec![1.0]],
        };
        assert!(shorrocks_m1(&one).is_err());
    }

    #[test]
    fn independence_rows_equal_column_masses() {
        let margs = vec![zero_atom(0.3), zero_atom(0.2)];
        let cuts = [0.5, 1.0, 2.0];
        let p = transition_matrix_model(&Copula::Independence, &margs, (0, 1), &cuts, &cuts).unwrap();
        let mut edges = vec![0.0];
        edges.extend(cuts.iter().map(|&c| margs[1].cdf(c)));
        edges.push(1.0);
        for row in &p.p {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for b in 0..4 {
                assert!((row[b] - (edges[b + 1] - edges[b])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_transitions_closed_forms() {
        let margs = vec![zero_atom(0.3), zero_atom(0.3)];
        let t = zero_transition_probs(&Copula::Independence, &margs, (0, 1)).unwrap();
        assert!((t.stay_zero - 0.3).abs() < 1e-15);

        let t = zero_transition_probs(&Copula::clayton(1.0).unwrap(), &margs, (0, 1)).unwrap();
        let both: f64 = 1.0 / (1.0 / 0.3 + 1.0 / 0.3 - 1.0);
        assert!((both - 3.0 / 17.0).abs() < 1e-15);
        assert!((t.both_zero - both).abs() < 1e-12);
        assert!((t.zero_to_positive - (1.0 - both / 0.3)).abs() < 1e-12);
        let total = t.both_zero + t.zero_then_positive + t.positive_then_zero + t.both_positive;
        assert!((total - 1.0).abs() < 1e-12);

        let near = Copula::Gaussian(GaussianCopula::equicorrelated(2, 0.999_999).unwrap());
        assert!(zero_transition_probs(&near, &margs, (0, 1)).unwrap().stay_zero > 0.99);

        let cont = vec![MixedMarginal::continuous(ContinuousPart::Exponential { rate: 1.0 }).unwrap(), zero_atom(0.3)];
        assert!(zero_transition_probs(&Copula::Independence, &cont, (0, 1)).is_err());
    }

    #[test]
    fn fgt_hand_cases() {
        assert_eq!(fgt(&[25.0, 30.0], 20.0, 0.0), 0.0);
        assert_eq!(fgt(&[0.0, 0.0, 0.0], 20.0, 1.0), 1.0);
        assert!((fgt(&[5.0, 15.0, 25.0], 20.0, 0.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((fgt(&[5.0, 15.0, 25.0], 20.0, 1.0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(fgt(&[20.0], 20.0, 0.0), 1.0);
    }

    #[test]
    fn chronic_poverty_hand_cases() {
        let panel = vec![vec![5.0, 12.0], vec![4.0, 6.0]];
        let cfg = PovertyConfig::new(10.0, 0.5, 0.0).unwrap();
        assert_eq!(foster_chronic(&panel, &cfg), 0.75);
        let strict = PovertyConfig::new(10.0, 1.0, 0.0).unwrap();
        assert_eq!(foster_chronic(&panel, &strict), 0.5);
        let all_poor = vec![vec![1.0, 2.0], vec![0.0, 3.0]];
        assert_eq!(foster_chronic(&all_poor, &cfg), 1.0);
        assert!(PovertyConfig::new(0.0, 0.5, 0.0).is_err());
        assert!(PovertyConfig::new(1.0, 0.0, 0.0).is_err());
    }

    fn gaussian_draws(rho: f64, copies: usize) -> PosteriorDraws {
        let d = Draw {
            sweep: 0,
            weights: [1.0, 0.0, 0.0],
            theta_cl: f64::NAN,
            theta_gu: f64::NAN,
            corr_upper: vec![rho],
            loglik: f64::NAN,
        };
        PosteriorDraws::from_draws(2, vec![d; copies]).unwrap()
    }

    #[test]
    fn identical_draws_give_a_zero_width_interval() {
        let draws = gaussian_draws(0.3, 5);
        let margs = vec![zero_atom(0.3), zero_atom(0.3)];
        let f = Functional::ZeroToPositive { from: 0, to: 1 };
        let out = posterior_functional(&draws, 1, |cop, rng| f.evaluate(cop, &margs, rng)).unwrap();
        assert_eq!(out.per_draw.len(), 5);
        assert_eq!(out.summary.lower, out.summary.upper);
        assert_eq!(out.summary.mean, out.summary.lower);
    }

    #[test]
    fn spearman_functional_matches_closed_form() {
        let draws = gaussian_draws(0.5, 3);
        let margs = vec![zero_atom(0.3), zero_atom(0.3)];
        let n_mc = 100_000;
        let f = Functional::Spearman { from: 0, to: 1, n_mc };
        let out = posterior_functional(&draws, 4, |cop, rng| f.evaluate(cop, &margs, rng)).unwrap();
        let exact = 6.0 / std::f64::consts::PI * (0.25f64).asin();
        assert!((exact - 0.4826).abs() < 1e-4);
        // rank correlation standard error is below 1/√n
        assert!((out.summary.mean - exact).abs() < 3.0 / (n_mc as f64).sqrt(), "{:?}", out.summary);
    }

    #[test]
    fn quantile_cuts_split_evenly() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let cuts = quantile_cuts(&v, 5).unwrap();
        assert_eq!(cuts.len(), 4);
        let pairs: Vec<(f64, f64)> = v.iter().map(|&x| (x, x)).collect();
        let p = transition_matrix_from_pairs(&pairs, &cuts, &cuts).unwrap();
        assert!(p.undefined_rows().is_empty());
        let zeros = vec![0.0; 50];
        assert_eq!(quantile_cuts(&zeros, 5).unwrap(), vec![0.0]);
        assert!(functional_names_are_unique());
    }

    fn functional_names_are_unique() -> bool {
        let mut n = Functional::NAMES.to_vec();
        n.sort_unstable();
        n.dedup();
        n.len() == Functional::NAMES.len()
    }

    proptest! {
        #[test]
        fn fgt_decreases_with_order(incomes in prop::collection::vec(0.0f64..50.0, 1..40), z in 1.0f64..40.0) {
            let (h, g, s) = (fgt(&incomes, z, 0.0), fgt(&incomes, z, 1.0), fgt(&incomes, z, 2.0));
            prop_assert!(h >= g && g >= s && s >= 0.0 && h <= 1.0);
        }

        #[test]
        fn chronic_limits(panel in prop::collection::vec(prop::collection::vec(0.0f64..30.0, 3), 1..10), z in 1.0f64..30.0, alpha in 0.0f64..3.0) {
            let loose = foster_chronic(&panel, &PovertyConfig::new(z, 1e-9, alpha).unwrap());
            let flat: Vec<f64> = panel.concat();
            prop_assert!((loose - fgt(&flat, z, alpha)).abs() < 1e-12);
            let strict = foster_chronic(&panel, &PovertyConfig::new(z, 1.0, alpha).unwrap());
            let always: Vec<Vec<f64>> = panel.iter().filter(|r| r.iter().all(|&y| y <= z)).cloned().collect();
            let want = always.iter().flatten().map(|&y| poverty_gap(y, z, alpha)).sum::<f64>() / flat.len() as f64;
            prop_assert!((strict - want).abs() < 1e-12);
        }

        #[test]
        fn model_matrices_are_stochastic(theta in 0.2f64..8.0, p0 in 0.05f64..0.6, p1 in 0.05f64..0.6) {
            let margs = vec![zero_atom(p0), zero_atom(p1)];
            let cuts = [0.0, 0.5, 1.5];
            let m = transition_matrix_model(&Copula::clayton(theta).unwrap(), &margs, (0, 1), &cuts, &cuts).unwrap();
            for row in &m.p {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            let s = shorrocks_m1(&m).unwrap();
            prop_assert!(s >= -1e-12 && s <= 4.0 / 3.0 + 1e-12);
            let t = zero_transition_probs(&Copula::gumbel(1.0 + theta).unwrap(), &margs, (0, 1)).unwrap();
            let total = t.both_zero + t.zero_then_positive + t.positive_then_zero + t.both_positive;
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(t.both_zero >= 0.0 && t.both_positive >= 0.0);
        }
    }
}
