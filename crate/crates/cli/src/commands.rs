//! The four subcommands. Each writes its outputs plus `manifest.json`
//! into an output directory.

use crate::config::{fit_margins, read_toml, Config, MeasureSpec, MeasuresConfig, ModelSpec};
use crate::data::{format_table, read_panel, write_file, Panel};
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use mixcop::copulas::Copula;
use mixcop::latent::LatentKernel;
use mixcop::marginals::MixedMarginal;
use mixcop::measures::{
    fgt, foster_chronic, posterior_functional, quantile_cuts, shorrocks_m1, transition_matrix_from_pairs, Functional,
    PovertyConfig,
};
use mixcop::mcmc::{run_chain, Draw, PosteriorDraws};
use mixcop::selection::{candidate_models, model_name, score_model, ModelScore};
use mixcop::simulate::simulate_labelled;
use mixcop::stats::{spearman_sample, CredibleSummary};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::Path;
use std::time::Instant;

/// Flags that take precedence over configuration file keys.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n_burnin: Option<usize>,
    pub n_keep: Option<usize>,
    pub latent_kernel: Option<LatentKernel>,
    pub folds: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut Config) {
        if let Some(s) = self.seed {
            cfg.run.seed = s;
        }
        if let Some(n) = self.n_burnin {
            cfg.run.n_burnin = n;
        }
        if let Some(n) = self.n_keep {
            cfg.run.n_keep = n;
        }
        if let Some(k) = self.latent_kernel {
            cfg.run.latent_kernel = k;
        }
        if let Some(b) = self.folds {
            cfg.run.folds = b;
        }
    }
}

fn load_config(path: &Path, overrides: &Overrides) -> CliResult<Config> {
    let mut cfg: Config = read_toml(path)?;
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn finish(mut manifest: RunManifest, out: &Path, started: Instant) -> CliResult<RunManifest> {
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    manifest.outputs.push("manifest.json".into());
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Numerical(e.to_string()))?;
    write_file(&out.join("manifest.json"), &(text + "\n"))?;
    Ok(manifest)
}

pub fn draws_header(dim: usize) -> Vec<String> {
    let mut h = vec!["sweep".to_string()];
    h.extend(PosteriorDraws::parameter_names(dim));
    h.push("loglik".into());
    h
}

/// Draws as CSV text; identical draws give identical bytes.
pub fn format_draws(draws: &PosteriorDraws) -> String {
    let rows: Vec<Vec<f64>> = draws
        .draws
        .iter()
        .map(|d| {
            let mut r = vec![d.sweep as f64];
            r.extend(d.parameters());
            r.push(d.loglik);
            r
        })
        .collect();
    format_table(&draws_header(draws.dim), &rows)
}

/// Reads a draws file written by `fit`.
pub fn parse_draws(text: &str, source: &str) -> CliResult<PosteriorDraws> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("{source}: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let pairs = header.len().checked_sub(7).ok_or_else(|| CliError::Data(format!("{source}: too few columns")))?;
    let dim = (2..64).find(|m| m * (m - 1) / 2 == pairs).ok_or_else(|| CliError::Data(format!("{source}: {pairs} correlation columns fit no dimension")))?;
    if header != draws_header(dim) {
        return Err(CliError::Data(format!("{source}: header does not match a draws file: {}", header.join(","))));
    }
    let mut draws = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Data(format!("{source}: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        let v: Vec<f64> = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::Data(format!("{source}: line {line}: not a number")))?;
        draws.push(Draw {
            sweep: v[0] as usize,
            weights: [v[1], v[2], v[3]],
            theta_cl: v[4],
            theta_gu: v[5],
            corr_upper: v[6..6 + pairs].to_vec(),
            loglik: v[6 + pairs],
        });
    }
    Ok(PosteriorDraws::from_draws(dim, draws)?)
}

/// Posterior summary as aligned text: mean then the 95% interval.
pub fn format_summary(draws: &PosteriorDraws) -> String {
    let mut out = format!("{:<12} {:>10}  {}\n", "parameter", "mean", "95% interval");
    for (name, s) in draws.summary() {
        out += &format!("{:<12} {:>10.4}  [{:.4}, {:.4}]\n", name, s.mean, s.lower, s.upper);
    }
    out
}

pub struct FitOutput {
    pub draws: PosteriorDraws,
    pub manifest: RunManifest,
}

pub fn cmd_fit(data: &Path, config: &Path, out: &Path, overrides: &Overrides, workers: usize) -> CliResult<FitOutput> {
    let started = Instant::now();
    let cfg = load_config(config, overrides)?;
    let (panel, bytes) = read_panel(data)?;
    let (rows, margs) = cfg.prepare(&panel)?;
    let draws = run_chain(&rows, &margs, &cfg.prior, &cfg.run)?;
    out_dir(out)?;
    write_file(&out.join("draws.csv"), &format_draws(&draws))?;
    let summary = format_summary(&draws);
    write_file(&out.join("summary.txt"), &summary)?;
    let mut manifest = RunManifest::new("fit", to_json(&cfg), cfg.run.seed, Some(&bytes), workers);
    manifest.outputs = vec!["draws.csv".into(), "summary.txt".into()];
    manifest.details = serde_json::json!({
        "acceptance": draws.acceptance,
        "step_sizes": draws.step_sizes,
        "clamped_masses": draws.clamped_masses,
        "degenerate_latent": draws.degenerate_latent,
        "rows": rows.len(),
        "columns": panel.names,
    });
    let manifest = finish(manifest, out, started)?;
    Ok(FitOutput { draws, manifest })
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub model: String,
    #[serde(flatten)]
    pub score: ModelScore,
}

pub fn cmd_compare(data: &Path, config: &Path, out: &Path, overrides: &Overrides, workers: usize) -> CliResult<Vec<ComparisonRow>> {
    let started = Instant::now();
    let cfg = load_config(config, overrides)?;
    let (panel, bytes) = read_panel(data)?;
    let (rows, _) = cfg.prepare(&panel)?;
    let models = cfg.compare.models.clone().unwrap_or_else(candidate_models);
    if models.is_empty() {
        return Err(CliError::Usage("compare.models is empty".into()));
    }
    let fit = |train: &[Vec<f64>]| fit_margins(train, &cfg.data);
    let mut table = Vec::new();
    for comps in &models {
        let run = cfg.run.clone().with_components(comps);
        run.validate()?;
        let score = score_model(&rows, fit, &cfg.prior, &run)?;
        table.push(ComparisonRow {
            model: model_name(comps),
            score,
        });
    }
    let best_dic = table.iter().min_by(|a, b| a.score.dic3.total_cmp(&b.score.dic3)).map(|r| r.model.clone());
    let best_lpds = table.iter().max_by(|a, b| a.score.lpds_cv.total_cmp(&b.score.lpds_cv)).map(|r| r.model.clone());
    out_dir(out)?;
    let mut csv_text = String::from("Model,DIC3,LPDS\n");
    for r in &table {
        csv_text += &format!("{},{},{}\n", r.model, r.score.dic3, r.score.lpds_cv);
    }
    write_file(&out.join("comparison.csv"), &csv_text)?;
    let mut manifest = RunManifest::new("compare", to_json(&cfg), cfg.run.seed, Some(&bytes), workers);
    manifest.outputs = vec!["comparison.csv".into()];
    manifest.details = serde_json::json!({
        "best_dic3": best_dic,
        "best_lpds": best_lpds,
        "scores": table,
    });
    finish(manifest, out, started)?;
    Ok(table)
}

/// A functional with its display label and the value computed directly
/// from the data.
#[derive(Debug, Clone)]
pub struct PlannedMeasure {
    pub label: String,
    pub functional: Functional,
    pub nonparametric: f64,
}

fn period_index(p: usize, m: usize, key: &str) -> CliResult<usize> {
    if p == 0 || p > m {
        return Err(CliError::Usage(format!("{key} = {p} outside 1..={m}")));
    }
    Ok(p - 1)
}

fn pairs_of(spec: &MeasureSpec, m: usize) -> CliResult<Vec<(usize, usize)>> {
    match (spec.from, spec.to) {
        (Some(a), Some(b)) => Ok(vec![(period_index(a, m, "from")?, period_index(b, m, "to")?)]),
        (None, None) => Ok((0..m - 1).map(|t| (t, t + 1)).collect()),
        _ => Err(CliError::Usage(format!("measure {}: give both from and to, or neither", spec.name))),
    }
}

fn zero_share(rows: &[Vec<f64>], from: usize, to: usize, start_zero: bool) -> f64 {
    let sel: Vec<&Vec<f64>> = rows.iter().filter(|r| (r[from] == 0.0) == start_zero).collect();
    if sel.is_empty() {
        return f64::NAN;
    }
    let moved = sel.iter().filter(|r| (r[to] == 0.0) == start_zero).count();
    (sel.len() - moved) as f64 / sel.len() as f64
}

/// Expands the configured measure list into concrete functionals.
pub fn plan_measures(cfg: &MeasuresConfig, panel: &Panel) -> CliResult<Vec<PlannedMeasure>> {
    let m = panel.dim();
    let names = &panel.names;
    let rows = &panel.rows;
    let z = |name: &str| cfg.z.ok_or_else(|| CliError::Usage(format!("measure {name} needs the key measures.z (poverty line)")));
    let mut out = Vec::new();
    for spec in &cfg.list {
        let name = spec.name.as_str();
        if !Functional::NAMES.contains(&name) {
            return Err(CliError::Usage(format!(
                "unknown measure {name:?}; valid names are {}",
                Functional::NAMES.join(", ")
            )));
        }
        let alpha = spec.alpha.unwrap_or(0.0);
        match name {
            "spearman" | "shorrocks" | "zero_to_positive" | "positive_to_zero" => {
                for (a, b) in pairs_of(spec, m)? {
                    let (ca, cb) = (panel.column(a), panel.column(b));
                    let label = format!("{name}_{}_{}", names[a], names[b]);
                    let (functional, nonparametric) = match name {
                        "spearman" => (
                            Functional::Spearman {
                                from: a,
                                to: b,
                                n_mc: cfg.n_mc,
                            },
                            spearman_sample(&ca, &cb),
                        ),
                        "shorrocks" => {
                            let (cuts_from, cuts_to) = (quantile_cuts(&ca, cfg.classes)?, quantile_cuts(&cb, cfg.classes)?);
                            if cuts_from.len() != cuts_to.len() {
                                return Err(CliError::Data(format!(
                                    "{label}: tied quantiles leave different class counts in the two periods"
                                )));
                            }
                            let pairs: Vec<(f64, f64)> = ca.iter().copied().zip(cb.iter().copied()).collect();
                            let emp = shorrocks_m1(&transition_matrix_from_pairs(&pairs, &cuts_from, &cuts_to)?)?;
                            (
                                Functional::Shorrocks {
                                    from: a,
                                    to: b,
                                    cuts_from,
                                    cuts_to,
                                },
                                emp,
                            )
                        }
                        "zero_to_positive" => (Functional::ZeroToPositive { from: a, to: b }, zero_share(rows, a, b, true)),
                        _ => (Functional::PositiveToZero { from: a, to: b }, zero_share(rows, a, b, false)),
                    };
                    out.push(PlannedMeasure {
                        label,
                        functional,
                        nonparametric,
                    });
                }
            }
            "fgt" => {
                let z = z(name)?;
                PovertyConfig::new(z, 1.0, alpha)?;
                let periods = match spec.period {
                    Some(p) => vec![period_index(p, m, "period")?],
                    None => (0..m).collect(),
                };
                for p in periods {
                    out.push(PlannedMeasure {
                        label: format!("fgt_{}_alpha{alpha}", names[p]),
                        functional: Functional::Fgt {
                            period: p,
                            z,
                            alpha,
                            n_mc: cfg.n_mc,
                        },
                        nonparametric: fgt(&panel.column(p), z, alpha),
                    });
                }
            }
            _ => {
                let pc = PovertyConfig::new(z(name)?, cfg.tau, alpha)?;
                out.push(PlannedMeasure {
                    label: format!("chronic_tau{}_alpha{alpha}", cfg.tau),
                    functional: Functional::Chronic {
                        z: pc.z,
                        tau: pc.tau,
                        alpha,
                        n_mc: cfg.n_mc,
                    },
                    nonparametric: foster_chronic(rows, &pc),
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct MeasureRow {
    pub label: String,
    pub nonparametric: f64,
    pub summary: CredibleSummary,
    #[serde(skip)]
    pub per_draw: Vec<f64>,
}

fn evaluate_measures(
    planned: &[PlannedMeasure],
    draws: &PosteriorDraws,
    margs: &[MixedMarginal],
    seed: u64,
) -> CliResult<Vec<MeasureRow>> {
    planned
        .iter()
        .map(|p| {
            let f = &p.functional;
            let res = posterior_functional(draws, seed, |cop: &Copula, rng: &mut ChaCha8Rng| f.evaluate(cop, margs, rng))
                .map_err(CliError::from)
                .map_err(|e| match e {
                    CliError::Usage(msg) => CliError::Usage(format!("{}: {msg}", p.label)),
                    other => other,
                })?;
            Ok(MeasureRow {
                label: p.label.clone(),
                nonparametric: p.nonparametric,
                summary: res.summary,
                per_draw: res.per_draw,
            })
        })
        .collect()
}

pub fn cmd_measures(draws_path: &Path, data: &Path, config: &Path, out: &Path, workers: usize) -> CliResult<Vec<MeasureRow>> {
    let started = Instant::now();
    let cfg = load_config(config, &Overrides::default())?;
    let mc = &cfg.measures;
    if mc.list.is_empty() {
        return Ok(Vec::new());
    }
    if mc.draw_stride == 0 || mc.n_mc < 2 {
        return Err(CliError::Usage("measures.draw_stride must be positive and measures.n_mc at least 2".into()));
    }
    let (panel, bytes) = read_panel(data)?;
    let draws_text = std::fs::read_to_string(draws_path).map_err(|e| CliError::io(draws_path, e))?;
    let mut draws = parse_draws(&draws_text, &draws_path.display().to_string())?;
    if draws.dim != panel.dim() {
        return Err(CliError::Data(format!("draws are for {} margins but the data has {}", draws.dim, panel.dim())));
    }
    draws.draws = draws.draws.into_iter().step_by(mc.draw_stride).collect();
    let planned = plan_measures(mc, &panel)?;
    let (_, margs) = cfg.prepare(&panel)?;
    let rows = evaluate_measures(&planned, &draws, &margs, mc.seed)?;

    out_dir(out)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Numerical(e.to_string());
    w.write_record(["measure", "nonparametric", "mean", "lower", "upper", "estimate"]).map_err(io)?;
    for r in &rows {
        let s = &r.summary;
        w.write_record([
            r.label.clone(),
            format!("{}", r.nonparametric),
            format!("{}", s.mean),
            format!("{}", s.lower),
            format!("{}", s.upper),
            format!("{:.4} [{:.4}, {:.4}]", s.mean, s.lower, s.upper),
        ])
        .map_err(io)?;
    }
    let table = String::from_utf8(w.into_inner().map_err(|e| CliError::Numerical(e.to_string()))?).unwrap_or_default();
    write_file(&out.join("measures.csv"), &table)?;

    let mut header = vec!["sweep".to_string()];
    header.extend(rows.iter().map(|r| r.label.clone()));
    let per_draw: Vec<Vec<f64>> = draws
        .draws
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let mut v = vec![d.sweep as f64];
            v.extend(rows.iter().map(|r| r.per_draw[k]));
            v
        })
        .collect();
    write_file(&out.join("measure_draws.csv"), &format_table(&header, &per_draw))?;

    let mut manifest = RunManifest::new("measures", to_json(&cfg), mc.seed, Some(&bytes), workers);
    manifest.outputs = vec!["measures.csv".into(), "measure_draws.csv".into()];
    manifest.details = serde_json::json!({
        "draws_file": draws_path.display().to_string(),
        "draws_sha256": crate::manifest::sha256_hex(draws_text.as_bytes()),
        "draws_used": draws.draws.len(),
        "measures": rows,
    });
    finish(manifest, out, started)?;
    Ok(rows)
}

pub struct SimulateOutput {
    pub panel: Panel,
    pub labels: Vec<usize>,
}

pub fn cmd_simulate(model: &Path, n: usize, seed: u64, out: &Path, workers: usize) -> CliResult<SimulateOutput> {
    let started = Instant::now();
    let spec: ModelSpec = read_toml(model)?;
    if n == 0 {
        return Err(CliError::Usage("n must be positive".into()));
    }
    let margs = spec.margins()?;
    let m = margs.len();
    let names = spec.names(m)?;
    let comps = spec.components(m)?;
    let (rows, labels) = simulate_labelled(&comps, &margs, n, &mut ChaCha8Rng::seed_from_u64(seed))?;
    out_dir(out)?;
    let text = format_table(&names, &rows);
    write_file(&out.join("data.csv"), &text)?;
    let label_rows: Vec<Vec<f64>> = labels.iter().map(|&k| vec![k as f64 + 1.0]).collect();
    write_file(&out.join("labels.csv"), &format_table(&["component".to_string()], &label_rows))?;
    let mut manifest = RunManifest::new("simulate", to_json(&spec), seed, Some(text.as_bytes()), workers);
    manifest.outputs = vec!["data.csv".into(), "labels.csv".into()];
    manifest.details = serde_json::json!({ "n": n });
    finish(manifest, out, started)?;
    Ok(SimulateOutput {
        panel: Panel { names, rows },
        labels,
    })
}

/// Runs `f` on a pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    if workers == 0 {
        return Err(CliError::Usage("--workers must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {workers} workers: {e}")))?;
    pool.install(f)
}

/// Default worker count: available cores.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}
