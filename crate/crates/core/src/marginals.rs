//! Univariate marginals that mix finitely many atoms with an absolutely
//! continuous part, and the per-observation split of coordinates into
//! continuity points and jump points.

use crate::error::{Error, Result};
use crate::numeric::{norm_cdf, norm_pdf, norm_quantile};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Tolerance on `continuous_weight + Σ atom masses = 1`.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// A point mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: f64,
    pub mass: f64,
}

/// The absolutely continuous component, normalised to a proper CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContinuousPart {
    None,
    Normal { mean: f64, sd: f64 },
    Exponential { rate: f64 },
    LogNormal { meanlog: f64, sdlog: f64 },
    #[serde(skip)]
    Empirical(PiecewiseLinear),
}

/// Continuous CDF interpolating linearly between knots.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    xs: Vec<f64>,
    ps: Vec<f64>,
}

impl PiecewiseLinear {
    /// Knots must be strictly increasing in `x`, nondecreasing in `p`,
    /// starting at `p = 0` and ending at `p = 1`.
    pub fn new(xs: Vec<f64>, ps: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ps.len() {
            return Err(Error::InvalidParameter("piecewise-linear CDF needs at least two knots".into()));
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) || ps.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidParameter("piecewise-linear knots must be increasing".into()));
        }
        if ps[0] != 0.0 || *ps.last().unwrap() != 1.0 {
            return Err(Error::InvalidParameter("piecewise-linear CDF must run from 0 to 1".into()));
        }
        Ok(Self { xs, ps })
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ps)
    }

    fn cdf(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return 0.0;
        }
        if x >= self.xs[n - 1] {
            return 1.0;
        }
        let i = self.xs.partition_point(|&k| k <= x) - 1;
        let t = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.ps[i] + t * (self.ps[i + 1] - self.ps[i])
    }

    fn slope(&self, i: usize) -> f64 {
        (self.ps[i + 1] - self.ps[i]) / (self.xs[i + 1] - self.xs[i])
    }

    /// Slope of the segment containing `x`; the mean of the two adjacent
    /// slopes at an interior knot.
    fn density(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x < self.xs[0] || x > self.xs[n - 1] {
            return 0.0;
        }
        let i = self.xs.partition_point(|&k| k <= x);
        if i > 0 && self.xs[i - 1] == x {
            let k = i - 1;
            let left = if k > 0 { self.slope(k - 1) } else { 0.0 };
            let right = if k + 1 < n { self.slope(k) } else { 0.0 };
            return 0.5 * (left + right);
        }
        self.slope(i - 1)
    }

    fn quantile(&self, p: f64) -> f64 {
        let n = self.xs.len();
        if p <= 0.0 {
            return self.xs[0];
        }
        if p >= 1.0 {
            // inf{x : G(x) ≥ 1}
            let i = self.ps.partition_point(|&q| q < 1.0);
            return self.xs[i.min(n - 1)];
        }
        let i = self.ps.partition_point(|&q| q < p);
        // ps[i-1] < p <= ps[i]
        let (p0, p1) = (self.ps[i - 1], self.ps[i]);
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        x0 + (p - p0) / (p1 - p0) * (x1 - x0)
    }
}

impl ContinuousPart {
    fn cdf(&self, x: f64) -> f64 {
        match self {
            ContinuousPart::None => 0.0,
            ContinuousPart::Normal { mean, sd } => norm_cdf((x - mean) / sd),
            ContinuousPart::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            ContinuousPart::LogNormal { meanlog, sdlog } => {
                if x <= 0.0 {
                    0.0
                } else {
                    norm_cdf((x.ln() - meanlog) / sdlog)
                }
            }
            ContinuousPart::Empirical(pl) => pl.cdf(x),
        }
    }

    fn density(&self, x: f64) -> f64 {
        match self {
            ContinuousPart::None => 0.0,
            ContinuousPart::Normal { mean, sd } => norm_pdf((x - mean) / sd) / sd,
            ContinuousPart::Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    rate * (-rate * x).exp()
                }
            }
            ContinuousPart::LogNormal { meanlog, sdlog } => {
                if x <= 0.0 {
                    0.0
                } else {
                    norm_pdf((x.ln() - meanlog) / sdlog) / (sdlog * x)
                }
            }
            ContinuousPart::Empirical(pl) => pl.density(x),
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        match self {
            ContinuousPart::None => f64::NAN,
            ContinuousPart::Normal { mean, sd } => mean + sd * norm_quantile(p),
            ContinuousPart::Exponential { rate } => -(-p).ln_1p() / rate,
            ContinuousPart::LogNormal { meanlog, sdlog } => (meanlog + sdlog * norm_quantile(p)).exp(),
            ContinuousPart::Empirical(pl) => pl.quantile(p),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            ContinuousPart::None | ContinuousPart::Empirical(_) => true,
            ContinuousPart::Normal { mean, sd } => mean.is_finite() && *sd > 0.0,
            ContinuousPart::Exponential { rate } => *rate > 0.0 && rate.is_finite(),
            ContinuousPart::LogNormal { meanlog, sdlog } => meanlog.is_finite() && *sdlog > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid continuous part {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalKind {
    Parametric,
    Empirical,
}

/// A univariate law `Σ mass_ℓ δ_{location_ℓ} + continuous_weight · G`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedMarginal {
    atoms: Vec<Atom>,
    continuous_weight: f64,
    continuous: ContinuousPart,
    kind: MarginalKind,
    /// Observed range, for empirical marginals.
    support: Option<(f64, f64)>,
}

impl MixedMarginal {
    /// Builds a parametric marginal; the continuous weight is whatever mass
    /// the atoms leave over.
    pub fn parametric(mut atoms: Vec<Atom>, continuous: ContinuousPart) -> Result<Self> {
        continuous.validate()?;
        atoms.sort_by(|a, b| a.location.total_cmp(&b.location));
        validate_atoms(&atoms)?;
        let atom_mass: f64 = atoms.iter().map(|a| a.mass).sum();
        let continuous_weight = (1.0 - atom_mass).max(0.0);
        match continuous {
            ContinuousPart::None if continuous_weight > MASS_TOLERANCE => {
                return Err(Error::InvalidParameter(format!(
                    "atoms carry mass {atom_mass} but there is no continuous part"
                )))
            }
            ContinuousPart::None => {}
            _ if continuous_weight <= 0.0 => {
                return Err(Error::InvalidParameter("atoms exhaust the mass; drop the continuous part".into()))
            }
            _ => {}
        }
        let continuous_weight = if matches!(continuous, ContinuousPart::None) { 0.0 } else { continuous_weight };
        Ok(Self {
            atoms,
            continuous_weight,
            continuous,
            kind: MarginalKind::Parametric,
            support: None,
        })
    }

    /// Purely continuous marginal.
    pub fn continuous(part: ContinuousPart) -> Result<Self> {
        Self::parametric(Vec::new(), part)
    }

    /// Discrete law on `values` with probabilities `probs`.
    pub fn discrete(values: &[f64], probs: &[f64]) -> Result<Self> {
        if values.len() != probs.len() {
            return Err(Error::InvalidParameter("values and probabilities differ in length".into()));
        }
        let atoms = values
            .iter()
            .zip(probs)
            .map(|(&location, &mass)| Atom { location, mass })
            .collect();
        Self::parametric(atoms, ContinuousPart::None)
    }

    /// Bernoulli with `P(X = 0) = p0`.
    pub fn bernoulli(p0: f64) -> Result<Self> {
        Self::discrete(&[0.0, 1.0], &[p0, 1.0 - p0])
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn continuous_weight(&self) -> f64 {
        self.continuous_weight
    }

    pub fn continuous_part(&self) -> &ContinuousPart {
        &self.continuous
    }

    pub fn kind(&self) -> MarginalKind {
        self.kind
    }

    pub fn support(&self) -> Option<(f64, f64)> {
        self.support
    }

    /// Index of the atom located exactly at `x`.
    pub fn atom_index(&self, x: f64) -> Option<usize> {
        self.atoms
            .binary_search_by(|a| a.location.total_cmp(&x))
            .ok()
    }

    pub fn is_atom(&self, x: f64) -> bool {
        self.atom_index(x).is_some()
    }

    fn atom_mass_below(&self, x: f64, inclusive: bool) -> f64 {
        self.atoms
            .iter()
            .take_while(|a| if inclusive { a.location <= x } else { a.location < x })
            .map(|a| a.mass)
            .sum()
    }

    /// Right-continuous CDF `F(x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x == f64::INFINITY {
            return 1.0;
        }
        let v = self.atom_mass_below(x, true) + self.continuous_weight * self.continuous.cdf(x);
        v.min(1.0)
    }

    /// Left limit `F(x⁻)`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        if x == f64::NEG_INFINITY {
            return 0.0;
        }
        let v = self.atom_mass_below(x, false) + self.continuous_weight * self.continuous.cdf(x);
        v.min(1.0)
    }

    /// Density of the continuous component, scaled by its weight.
    pub fn density(&self, x: f64) -> f64 {
        self.continuous_weight * self.continuous.density(x)
    }

    /// Generalised inverse `inf{x : F(x) ≥ u}`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!("quantile level {u} outside (0, 1)")));
        }
        let mut below = 0.0;
        for atom in &self.atoms {
            let g = self.continuous_weight * self.continuous.cdf(atom.location);
            let left = below + g;
            // same association as `cdf`, so quantile(cdf(ℓ)) == ℓ
            let right = (below + atom.mass) + g;
            if u <= left {
                break;
            }
            if u <= right {
                return Ok(atom.location);
            }
            below += atom.mass;
        }
        if self.continuous_weight <= 0.0 {
            // Only reachable through rounding at the top of a purely discrete law.
            return Ok(self.atoms.last().map(|a| a.location).unwrap_or(f64::NAN));
        }
        let p = ((u - below) / self.continuous_weight).clamp(0.0, 1.0);
        Ok(self.continuous.quantile(p))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                return self.quantile(u).expect("u in (0,1)");
            }
        }
    }

    /// Moves `x` to a value with positive probability or density under an
    /// empirical marginal: atoms stay put, other values are clamped into
    /// the range of the observed continuous values, and a margin without a
    /// continuous part snaps to its nearest atom.
    pub fn clamp_to_support(&self, x: f64) -> f64 {
        if self.support.is_none() || self.is_atom(x) {
            return x;
        }
        match &self.continuous {
            ContinuousPart::Empirical(pl) if self.continuous_weight > 0.0 => {
                let (xs, _) = pl.knots();
                x.clamp(xs[1], xs[xs.len() - 2])
            }
            ContinuousPart::None => self
                .atoms
                .iter()
                .map(|a| a.location)
                .min_by(|a, b| (a - x).abs().total_cmp(&(b - x).abs()))
                .unwrap_or(x),
            _ => {
                let (lo, hi) = self.support.expect("checked above");
                x.clamp(lo, hi)
            }
        }
    }
}

fn validate_atoms(atoms: &[Atom]) -> Result<()> {
    for a in atoms {
        if !(a.mass > 0.0 && a.mass <= 1.0) || !a.location.is_finite() {
            return Err(Error::InvalidParameter(format!("invalid atom {a:?}")));
        }
    }
    if atoms.windows(2).any(|w| w[0].location == w[1].location) {
        return Err(Error::InvalidParameter("duplicate atom locations".into()));
    }
    let total: f64 = atoms.iter().map(|a| a.mass).sum();
    if total > 1.0 + MASS_TOLERANCE {
        return Err(Error::InvalidParameter(format!("atom masses sum to {total} > 1")));
    }
    Ok(())
}

/// Minimum relative frequency for a repeated value to become an atom
/// during automatic detection: `max(2/n, 1e-3)`.
pub fn tie_threshold(n: usize) -> f64 {
    (2.0 / n as f64).max(1e-3)
}

/// Fits an empirical marginal. Atoms are the listed `atom_candidates`
/// that occur in the sample or, when none are listed, every value whose
/// relative frequency reaches [`tie_threshold`]. Atoms get their
/// empirical mass; the remaining values form a piecewise-linear CDF whose
/// value at the k-th smallest remaining observation is k/(r+1), with
/// linear tails one mean spacing wide.
pub fn fit_empirical(sample: &[f64], atom_candidates: Option<&[f64]>) -> Result<MixedMarginal> {
    let n = sample.len();
    if n == 0 {
        return Err(Error::Data("cannot fit an empirical marginal to an empty sample".into()));
    }
    if n < 2 {
        return Err(Error::Data("empirical marginal needs at least two observations".into()));
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(Error::Data("sample contains non-finite values".into()));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);

    // distinct values with counts
    let mut distinct: Vec<(f64, usize)> = Vec::new();
    for &x in &sorted {
        match distinct.last_mut() {
            Some((v, c)) if *v == x => *c += 1,
            _ => distinct.push((x, 1)),
        }
    }
    let nf = n as f64;
    let threshold = tie_threshold(n);
    let is_atom = |v: f64, c: usize| match atom_candidates {
        Some(list) => list.contains(&v),
        None => c >= 2 && c as f64 / nf >= threshold,
    };

    let mut atoms = Vec::new();
    let mut rest: Vec<(f64, usize)> = Vec::new();
    for &(v, c) in &distinct {
        if is_atom(v, c) {
            atoms.push(Atom {
                location: v,
                mass: c as f64 / nf,
            });
        } else {
            rest.push((v, c));
        }
    }
    let r: usize = rest.iter().map(|(_, c)| c).sum();
    let support = Some((sorted[0], sorted[n - 1]));

    if r == 0 {
        return Ok(MixedMarginal {
            atoms,
            continuous_weight: 0.0,
            continuous: ContinuousPart::None,
            kind: MarginalKind::Empirical,
            support,
        });
    }

    let q = rest.len();
    let span = rest[q - 1].0 - rest[0].0;
    let delta = if q >= 2 {
        span / (q - 1) as f64
    } else {
        rest[0].0.abs().max(1.0) * 1e-3
    };
    let rf = r as f64 + 1.0;
    let mut xs = Vec::with_capacity(q + 2);
    let mut ps = Vec::with_capacity(q + 2);
    xs.push(rest[0].0 - delta);
    ps.push(0.0);
    let mut cum = 0usize;
    for &(v, c) in &rest {
        cum += c;
        xs.push(v);
        ps.push(cum as f64 / rf);
    }
    xs.push(rest[q - 1].0 + delta);
    ps.push(1.0);

    Ok(MixedMarginal {
        atoms,
        continuous_weight: r as f64 / nf,
        continuous: ContinuousPart::Empirical(PiecewiseLinear::new(xs, ps)?),
        kind: MarginalKind::Empirical,
        support,
    })
}

/// Per-observation index split and PIT bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionResult {
    /// 𝒞(x): coordinates at continuity points, ascending.
    pub continuous_idx: Vec<usize>,
    /// 𝒟(x): coordinates at jump points, ascending.
    pub discrete_idx: Vec<usize>,
    /// `a_j = F_j(x_j⁻)` for every coordinate.
    pub lower: Vec<f64>,
    /// `b_j = F_j(x_j)` for every coordinate.
    pub upper: Vec<f64>,
}

impl PartitionResult {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// `b` restricted to 𝒞(x).
    pub fn upper_continuous(&self) -> Vec<f64> {
        self.continuous_idx.iter().map(|&j| self.upper[j]).collect()
    }

    pub fn lower_discrete(&self) -> Vec<f64> {
        self.discrete_idx.iter().map(|&j| self.lower[j]).collect()
    }

    pub fn upper_discrete(&self) -> Vec<f64> {
        self.discrete_idx.iter().map(|&j| self.upper[j]).collect()
    }
}

/// Splits the coordinates of `x` into continuity and jump points and
/// records `F_j(x_j⁻)` and `F_j(x_j)`.
pub fn partition(margs: &[MixedMarginal], x: &[f64]) -> Result<PartitionResult> {
    if margs.len() != x.len() {
        return Err(Error::Usage(format!(
            "observation has {} coordinates but there are {} marginals",
            x.len(),
            margs.len()
        )));
    }
    let m = x.len();
    let mut out = PartitionResult {
        continuous_idx: Vec::with_capacity(m),
        discrete_idx: Vec::new(),
        lower: Vec::with_capacity(m),
        upper: Vec::with_capacity(m),
    };
    for (j, (marg, &xj)) in margs.iter().zip(x).enumerate() {
        let b = marg.cdf(xj);
        if marg.is_atom(xj) {
            out.discrete_idx.push(j);
            out.lower.push(marg.cdf_left(xj));
        } else {
            out.continuous_idx.push(j);
            out.lower.push(b);
        }
        out.upper.push(b);
    }
    Ok(out)
}

/// Breaks ties at the listed values by adding uniform noise of width
/// `scale`, turning point masses into (approximately) continuous data.
pub fn jitter_ties<R: Rng + ?Sized>(column: &mut [f64], values: &[f64], scale: f64, rng: &mut R) {
    for x in column.iter_mut() {
        if values.contains(x) {
            *x += scale * rng.random::<f64>();
        }
    }
}
