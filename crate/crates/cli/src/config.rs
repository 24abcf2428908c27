//! TOML configuration for `fit`, `compare` and `measures`, and the model
//! file for `simulate`.

use crate::data::Panel;
use crate::error::{CliError, CliResult};
use mixcop::copulas::{Copula, Family, GaussianCopula};
use mixcop::marginals::{fit_empirical, jitter_ties, Atom, ContinuousPart, MixedMarginal};
use mixcop::mcmc::{PriorConfig, RunConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::Path;

fn yes() -> bool {
    true
}
fn default_jitter() -> f64 {
    1e-6
}

/// How margins are fitted to each column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Atom locations for every column; detected from ties when absent.
    #[serde(default)]
    pub atoms: Option<Vec<f64>>,
    /// With `false` the listed atoms are broken up by a small jitter and
    /// the margins are treated as continuous.
    #[serde(default = "yes")]
    pub point_mass: bool,
    /// Jitter width relative to each column's range.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            atoms: None,
            point_mass: true,
            jitter: default_jitter(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    /// Candidate models; all seven combinations when absent.
    #[serde(default)]
    pub models: Option<Vec<Vec<Family>>>,
}

/// One requested functional. Periods are 1-based column numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    pub name: String,
    #[serde(default)]
    pub from: Option<usize>,
    #[serde(default)]
    pub to: Option<usize>,
    #[serde(default)]
    pub period: Option<usize>,
    #[serde(default)]
    pub alpha: Option<f64>,
}

fn default_n_mc() -> usize {
    100_000
}
fn default_classes() -> usize {
    5
}
fn default_tau() -> f64 {
    0.5
}
fn one() -> u64 {
    1
}
fn stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasuresConfig {
    #[serde(default = "one")]
    pub seed: u64,
    /// Posterior-predictive sample size per draw.
    #[serde(default = "default_n_mc")]
    pub n_mc: usize,
    /// Use every `draw_stride`-th kept draw.
    #[serde(default = "stride")]
    pub draw_stride: usize,
    /// Income classes for transition matrices, cut at sample quantiles.
    #[serde(default = "default_classes")]
    pub classes: usize,
    /// Poverty line; required by poverty measures.
    #[serde(default)]
    pub z: Option<f64>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub list: Vec<MeasureSpec>,
}

impl Default for MeasuresConfig {
    fn default() -> Self {
        Self {
            seed: one(),
            n_mc: default_n_mc(),
            draw_stride: stride(),
            classes: default_classes(),
            z: None,
            tau: default_tau(),
            list: Vec::new(),
        }
    }
}

/// The configuration file shared by `fit`, `compare` and `measures`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub data: DataConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub compare: CompareConfig,
    #[serde(default)]
    pub measures: MeasuresConfig,
}

pub fn parse_toml<T: DeserializeOwned>(text: &str, source: &str) -> CliResult<T> {
    toml::from_str(text).map_err(|e| CliError::Usage(format!("{source}: {e}")))
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    parse_toml(&text, &path.display().to_string())
}

impl Config {
    pub fn validate(&self) -> CliResult<()> {
        self.run.validate()?;
        self.prior.validate()?;
        if !(self.data.jitter > 0.0) {
            return Err(CliError::Usage("data.jitter must be positive".into()));
        }
        Ok(())
    }

    /// Rows and fitted margins for a panel, after optional tie jitter.
    pub fn prepare(&self, panel: &Panel) -> CliResult<(Vec<Vec<f64>>, Vec<MixedMarginal>)> {
        let rows = if self.data.point_mass {
            panel.rows.clone()
        } else {
            jitter_panel(&panel.rows, self.data.atoms.as_deref(), self.data.jitter, self.run.seed)
        };
        let margs = fit_margins(&rows, &self.data)?;
        Ok((rows, margs))
    }
}

/// Breaks ties at the listed atoms, or at every repeated value when none
/// are listed, with jitter seeded independently of the chain.
pub fn jitter_panel(rows: &[Vec<f64>], atoms: Option<&[f64]>, rel_width: f64, seed: u64) -> Vec<Vec<f64>> {
    let m = rows.first().map_or(0, Vec::len);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6a17_7e55);
    let mut cols: Vec<Vec<f64>> = (0..m).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    for col in &mut cols {
        let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let width = rel_width * (hi - lo).max(1.0);
        let ties: Vec<f64> = match atoms {
            Some(a) => a.to_vec(),
            None => {
                let mut s = col.clone();
                s.sort_by(f64::total_cmp);
                let mut t: Vec<f64> = s.windows(2).filter(|w| w[0] == w[1]).map(|w| w[0]).collect();
                t.dedup();
                t
            }
        };
        jitter_ties(col, &ties, width, &mut rng);
    }
    (0..rows.len()).map(|i| cols.iter().map(|c| c[i]).collect()).collect()
}

/// Empirical margins for each column.
pub fn fit_margins(rows: &[Vec<f64>], data: &DataConfig) -> mixcop::Result<Vec<MixedMarginal>> {
    let m = rows.first().map_or(0, Vec::len);
    let atoms: Option<&[f64]> = if data.point_mass { data.atoms.as_deref() } else { Some(&[]) };
    (0..m)
        .map(|j| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            fit_empirical(&col, atoms)
        })
        .collect()
}

/// Margin of a simulation model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginSpec {
    #[serde(default)]
    pub atoms: Vec<Atom>,
    pub continuous: ContinuousPart,
    /// Number of identical columns this entry stands for.
    #[serde(default = "one_usize")]
    pub count: usize,
}

fn one_usize() -> usize {
    1
}

/// Mixture component of a simulation model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub family: Family,
    pub weight: f64,
    /// Clayton or Gumbel parameter.
    #[serde(default)]
    pub theta: Option<f64>,
    /// Common off-diagonal correlation of a Gaussian component.
    #[serde(default)]
    pub correlation: Option<f64>,
    /// Full correlation matrix of a Gaussian component.
    #[serde(default)]
    pub matrix: Option<Vec<Vec<f64>>>,
}

/// A fully specified model for `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default)]
    pub names: Option<Vec<String>>,
    pub margins: Vec<MarginSpec>,
    pub components: Vec<ComponentSpec>,
}

impl ModelSpec {
    pub fn margins(&self) -> CliResult<Vec<MixedMarginal>> {
        let mut out = Vec::new();
        for (k, spec) in self.margins.iter().enumerate() {
            let m = MixedMarginal::parametric(spec.atoms.clone(), spec.continuous.clone())
                .map_err(|e| CliError::Usage(format!("margins[{k}]: {e}")))?;
            out.extend(std::iter::repeat(m).take(spec.count));
        }
        if out.len() < 2 {
            return Err(CliError::Usage("the model needs at least two margins".into()));
        }
        Ok(out)
    }

    pub fn names(&self, m: usize) -> CliResult<Vec<String>> {
        match &self.names {
            Some(n) if n.len() == m => Ok(n.clone()),
            Some(n) => Err(CliError::Usage(format!("{} names given for {m} margins", n.len()))),
            None => Ok((1..=m).map(|j| format!("x{j}")).collect()),
        }
    }

    /// Weighted components in the order listed.
    pub fn components(&self, m: usize) -> CliResult<Vec<(f64, Copula)>> {
        if self.components.is_empty() {
            return Err(CliError::Usage("the model needs at least one component".into()));
        }
        let mut out = Vec::new();
        for (k, c) in self.components.iter().enumerate() {
            let ctx = |e: mixcop::Error| CliError::Usage(format!("components[{k}]: {e}"));
            if !(c.weight > 0.0) {
                return Err(CliError::Usage(format!("components[{k}]: weight must be positive")));
            }
            let cop = match c.family {
                Family::Clayton | Family::Gumbel => {
                    let theta = c.theta.ok_or_else(|| CliError::Usage(format!("components[{k}]: missing key theta")))?;
                    if c.family == Family::Clayton {
                        Copula::clayton(theta).map_err(ctx)?
                    } else {
                        Copula::gumbel(theta).map_err(ctx)?
                    }
                }
                Family::Gaussian => {
                    let g = match (&c.matrix, c.correlation) {
                        (Some(rows), None) => {
                            if rows.len() != m {
                                return Err(CliError::Usage(format!("components[{k}]: matrix must be {m}×{m}")));
                            }
                            GaussianCopula::from_rows(rows).map_err(ctx)?
                        }
                        (None, Some(rho)) => GaussianCopula::equicorrelated(m, rho).map_err(ctx)?,
                        _ => {
                            return Err(CliError::Usage(format!(
                                "components[{k}]: a Gaussian component needs exactly one of correlation or matrix"
                            )))
                        }
                    };
                    Copula::Gaussian(g)
                }
            };
            out.push((c.weight, cop));
        }
        let total: f64 = out.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(CliError::Usage(format!("component weights sum to {total}, not 1")));
        }
        Ok(out)
    }
}
