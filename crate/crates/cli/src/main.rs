use clap::{Parser, Subcommand};
use mixcop::latent::LatentKernel;
use mixcop_cli::commands::{cmd_compare, cmd_fit, cmd_measures, cmd_simulate, default_workers, format_summary, with_workers, Overrides};
use mixcop_cli::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mixcop", version, about = "Bayesian copula mixtures for panels with point masses")]
struct Cli {
    /// Worker threads [default: available cores]
    #[arg(long, global = true, env = "MIXCOP_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ChainFlags {
    /// Overrides run.seed
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides run.n_burnin
    #[arg(long)]
    burnin: Option<usize>,
    /// Overrides run.n_keep
    #[arg(long)]
    keep: Option<usize>,
    /// Overrides run.latent_kernel (mh_block or gibbs_single)
    #[arg(long)]
    kernel: Option<LatentKernel>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sampler and write draws, a summary and a manifest
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        chain: ChainFlags,
    },
    /// Score candidate models by DIC3 and cross-validated LPDS
    Compare {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        chain: ChainFlags,
        /// Overrides run.folds
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Evaluate mobility and poverty measures over posterior draws
    Measures {
        #[arg(long)]
        draws: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a synthetic panel from a fully specified model
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn overrides(c: ChainFlags, folds: Option<usize>) -> Overrides {
    Overrides {
        seed: c.seed,
        n_burnin: c.burnin,
        n_keep: c.keep,
        latent_kernel: c.kernel,
        folds,
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let workers = cli.workers.unwrap_or_else(default_workers);
    match cli.command {
        Command::Fit { data, config, out, chain } => {
            let ov = overrides(chain, None);
            let res = with_workers(workers, || cmd_fit(&data, &config, &out, &ov, workers))?;
            print!("{}", format_summary(&res.draws));
            println!("wrote {}", out.display());
        }
        Command::Compare { data, config, out, chain, folds } => {
            let ov = overrides(chain, folds);
            let table = with_workers(workers, || cmd_compare(&data, &config, &out, &ov, workers))?;
            let best_dic = table.iter().map(|r| r.score.dic3).fold(f64::INFINITY, f64::min);
            let best_lpds = table.iter().map(|r| r.score.lpds_cv).fold(f64::NEG_INFINITY, f64::max);
            println!("{:<28} {:>12} {:>12}", "Model", "DIC3", "LPDS");
            for r in &table {
                let mark = |best: bool| if best { "*" } else { " " };
                println!(
                    "{:<28} {:>11.2}{} {:>11.2}{}",
                    r.model,
                    r.score.dic3,
                    mark(r.score.dic3 == best_dic),
                    r.score.lpds_cv,
                    mark(r.score.lpds_cv == best_lpds)
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Measures { draws, data, config, out } => {
            let rows = with_workers(workers, || cmd_measures(&draws, &data, &config, &out, workers))?;
            if rows.is_empty() {
                println!("no measures requested");
            }
            for r in &rows {
                let s = &r.summary;
                println!("{:<32} {:>9.4}  {:>9.4} [{:.4}, {:.4}]", r.label, r.nonparametric, s.mean, s.lower, s.upper);
            }
        }
        Command::Simulate { model, n, seed, out } => {
            with_workers(workers, || cmd_simulate(&model, n, seed, &out, workers))?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mixcop: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
