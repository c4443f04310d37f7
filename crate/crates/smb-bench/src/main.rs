//! `smb-bench`: benchmark and verification harness for the smb optimizer
//! library.

use clap::{Args, Parser, Subcommand};
use smb_bench::{cmd_gradcheck, cmd_run, cmd_sweep, cmd_verify};
use smb_bench::{CliError, ExitStatus, PartialConfig, ProblemKind};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "smb-bench",
    about = "Run, sweep, and verify stochastic model-building optimizers",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write a per-epoch metrics CSV.
    Run(RunArgs),
    /// Run a stepsize grid for several optimizers; emits a summary CSV plus
    /// one metrics CSV per cell.
    Sweep(SweepArgs),
    /// Execute the randomized verification battery (dense-oracle
    /// equivalence, inverse identity, spectrum, step bound, interpolation).
    Verify(VerifyArgs),
    /// Finite-difference gradient check of a built-in problem.
    Gradcheck(GradcheckArgs),
}

/// Flags shared by run and sweep; unset flags fall back to the config file,
/// then to defaults.
#[derive(Args, Clone)]
struct CommonArgs {
    /// Flat key=value config file, overridden by flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Problem: quadratic | logistic | mlp.
    #[arg(long)]
    problem: Option<String>,
    /// Optimizer: sgd | smb | smbi | adam.
    #[arg(long)]
    optimizer: Option<String>,
    /// Initial stepsize.
    #[arg(long)]
    alpha: Option<f64>,
    /// Stepsize ceiling (default 10 * alpha).
    #[arg(long = "alpha-max")]
    alpha_max: Option<f64>,
    /// Model-step contraction factor in (0, 1).
    #[arg(long)]
    eta: Option<f64>,
    /// Armijo constant.
    #[arg(long = "c")]
    c: Option<f64>,
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Schedule: constant | diminishing | auto.
    #[arg(long)]
    schedule: Option<String>,
    /// Diminishing-schedule exponent in (0.5, 1).
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dataset path (IDX directory, .csv, or libsvm file); synthetic data
    /// when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
    /// MLP hidden width.
    #[arg(long)]
    width: Option<usize>,
    /// Training-subset size.
    #[arg(long)]
    subset: Option<usize>,
}

impl CommonArgs {
    fn partial(&self) -> PartialConfig {
        PartialConfig {
            problem: self.problem.clone(),
            optimizer: self.optimizer.clone(),
            alpha: self.alpha,
            alpha_max: self.alpha_max,
            eta: self.eta,
            c: self.c,
            batch_size: self.batch_size,
            epochs: self.epochs,
            schedule: self.schedule.clone(),
            phi: self.phi,
            seed: self.seed,
            out: self.out.clone(),
            data: self.data.clone(),
            width: self.width,
            subset: self.subset,
        }
    }

    fn resolve(&self) -> Result<smb_bench::RunConfig, CliError> {
        let base = match &self.config {
            Some(path) => PartialConfig::from_file(path)?,
            None => PartialConfig::default(),
        };
        base.merged_with(self.partial()).finalize()
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated stepsize grid.
    #[arg(long, default_value = "0.001,0.01,0.1,0.25,0.5,0.75,1.0")]
    alphas: String,
    /// Comma-separated optimizer list.
    #[arg(long, default_value = "sgd,adam,smb")]
    optimizers: String,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Problem: quadratic | logistic | mlp.
    #[arg(long)]
    problem: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn dispatch(cli: Cli) -> Result<ExitStatus, CliError> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.common.resolve()?;
            let (records, status) = cmd_run(&cfg)?;
            let last = records.last().expect("at least one epoch");
            println!(
                "run {}: epochs={} final_loss={}{} evals={} -> {}",
                cfg.provenance(),
                records.len(),
                last.train_loss,
                last.test_accuracy.map_or_else(String::new, |a| format!(" test_acc={a}")),
                last.oracle_evals,
                cfg.out.display()
            );
            if last.diverged {
                eprintln!("run diverged at epoch {} (loss {})", last.epoch, last.train_loss);
            }
            Ok(status)
        }
        Command::Sweep(args) => {
            let cfg = args.common.resolve()?;
            let alphas = parse_alphas(&args.alphas)?;
            let variants = parse_variants(&args.optimizers)?;
            let outcome = cmd_sweep(&cfg, &alphas, &variants)?;
            for cell in &outcome.cells {
                println!(
                    "sweep {} alpha={}: final_loss={} diverged={}",
                    cell.variant, cell.alpha, cell.final_loss, cell.diverged
                );
            }
            println!("summary -> {}", cfg.out.display());
            Ok(ExitStatus::Success)
        }
        Command::Verify(args) => {
            let (_, status) = cmd_verify(args.seed, args.trials)?;
            Ok(status)
        }
        Command::Gradcheck(args) => {
            let kind: ProblemKind = args
                .problem
                .parse()
                .map_err(|detail| CliError::Field { field: "problem".into(), detail })?;
            let (_, status) = cmd_gradcheck(kind, args.seed)?;
            Ok(status)
        }
    }
}

fn parse_alphas(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Field {
                    field: "alphas".into(),
                    detail: format!("`{s}` is not a number"),
                })
                .and_then(|a| {
                    if a > 0.0 {
                        Ok(a)
                    } else {
                        Err(CliError::Field {
                            field: "alphas".into(),
                            detail: "stepsizes must be positive".into(),
                        })
                    }
                })
        })
        .collect()
}

fn parse_variants(text: &str) -> Result<Vec<smb::Variant>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|detail| CliError::Field { field: "optimizers".into(), detail })
        })
        .collect()
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(status) => ExitCode::from(status.code()),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(ExitStatus::ConfigError.code())
        }
    }
}
