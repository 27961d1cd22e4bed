use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use mogp_active::experiment::{fit_from_config, generate_synthetic, run_experiment, verify_sweep, ExperimentConfig};

/// Active sampling for multi-output Gaussian process prediction.
#[derive(Parser, Debug)]
#[command(name = "mogp-active", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; defaults to the config's `output`, then `./out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Run every configured algorithm and write results, timings and selection logs.
    Run,
    /// Fit hyperparameters by maximum likelihood and write them as TOML.
    Fit,
    /// Check the greedy approximation guarantee on a family of small instances.
    Verify,
    /// Sample a synthetic dataset and write it with its schema.
    Synth,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli.config.as_ref().context("--config is required")?;
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.verify.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cli.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn run(cfg: &ExperimentConfig, dir: &Path) -> Result<ExitCode> {
    let table = run_experiment(cfg)?;
    table.save(dir)?;
    println!("{:<10} {:>6} {:>12}", "algorithm", "n", "mean_rmse");
    for &a in &cfg.algorithms {
        for &n in &cfg.checkpoints {
            if let Some(v) = table.mean_rmse(a, n) {
                println!("{:<10} {n:>6} {v:>12.6}", a.name());
            }
        }
    }
    println!("wrote {}", dir.join("results.csv").display());
    if table.is_partial() {
        eprintln!(
            "{} failure(s); see {}",
            table.failures.len(),
            dir.join("failures.txt").display()
        );
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn fit(cfg: &ExperimentConfig, dir: &Path) -> Result<ExitCode> {
    let result = fit_from_config(cfg)?;
    let path = dir.join("hyperparams.toml");
    fs::write(&path, result.to_toml_string())?;
    println!(
        "nll {:.6} -> {:.6} (converged: {}); wrote {}",
        result.initial_nll,
        result.final_nll,
        result.converged,
        path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn verify(cfg: &ExperimentConfig, dir: &Path) -> Result<ExitCode> {
    let path = dir.join("verify.txt");
    let summary = verify_sweep(&cfg.verify, &path)?;
    println!("{}", summary.to_record());
    println!("wrote {}", path.display());
    Ok(if summary.fail == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn synth(cfg: &ExperimentConfig, dir: &Path) -> Result<ExitCode> {
    let Some(spec) = &cfg.synthetic else {
        bail!("synth needs a [synthetic] section");
    };
    let ds = generate_synthetic(spec, cfg.seed)?;
    mogp_active::data::save_dataset(&dir.join("data.csv"), &ds)?;
    fs::write(dir.join("schema.toml"), ds.schema().to_toml_string())?;
    spec.truth.save(&dir.join("truth.toml"))?;
    println!(
        "{} locations, {} measurements; wrote {}",
        ds.locations.len(),
        ds.measurements.len(),
        dir.join("data.csv").display()
    );
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = (|| -> Result<ExitCode> {
        if let Some(n) = cli.threads {
            if n == 0 {
                bail!("--threads must be >= 1");
            }
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
        }
        let cfg = load_config(&cli)?;
        let dir = out_dir(&cli, &cfg)?;
        match cli.command {
            Command::Run => run(&cfg, &dir),
            Command::Fit => fit(&cfg, &dir),
            Command::Verify => verify(&cfg, &dir),
            Command::Synth => synth(&cfg, &dir),
        }
    })();
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
