use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use rbcert::experiments::{bench_online, run_eim_diag, run_perturb, run_sweep, write_bench_csv, ExperimentConfig};
use rbcert::{Precision, RbError};

#[derive(Parser)]
#[command(name = "rbcert", version, about = "Reduced-basis error bound experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// single | double | extended (overrides the config).
    #[arg(long)]
    precision: Option<Precision>,
    /// Seed for every random stream (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Greedy build and estimator sweep over the trial grid.
    Run(Common),
    /// EIM determinant/condition history for every variant.
    EimDiag(Common),
    /// Median online time per estimator for several truth sizes.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "200,2000")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        calls: usize,
    },
    /// Sweep with snapshots perturbed to a normalized residual `xi`.
    Perturb {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        xi: Option<f64>,
    },
}

fn load(c: &Common) -> Result<ExperimentConfig, RbError> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::from_json_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    if let Some(p) = c.precision {
        cfg.precision = p;
    }
    if let Some(s) = c.seed {
        cfg = cfg.with_seed(s);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<serde_json::Value, RbError> {
    match cli.command {
        Command::Run(c) => {
            let out = run_sweep(&load(&c)?)?;
            Ok(json!({ "sweep": out.sweep_csv, "meta": out.meta_json, "eim_diag": out.eim_diag_csv }))
        }
        Command::EimDiag(c) => {
            let runs = run_eim_diag(&load(&c)?)?;
            Ok(json!({ "runs": runs }))
        }
        Command::Bench { common, sizes, calls } => {
            let cfg = load(&common)?;
            let rows = bench_online(&cfg, &sizes, calls)?;
            std::fs::create_dir_all(&cfg.out_dir)?;
            let path = cfg.out_dir.join("bench.csv");
            write_bench_csv(&path, &rows)?;
            Ok(json!({ "bench": path, "rows": rows }))
        }
        Command::Perturb { common, xi } => {
            let mut cfg = load(&common)?;
            if xi.is_some() {
                cfg.xi = xi;
            }
            let out = run_perturb(&cfg)?;
            Ok(json!({ "sweep": out.sweep_csv, "meta": out.meta_json, "inexact_plateau": out.meta["inexact_plateau"] }))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let kind = format!("{e:?}");
            let kind = kind.split(['(', ' ', '{']).next().unwrap_or("Error").to_string();
            eprintln!("{}", json!({ "error": kind, "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
