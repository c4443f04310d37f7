//! The four harness commands: run one experiment, sweep a stepsize grid,
//! execute the verification battery, and finite-difference-check gradients.

use crate::config::{BuiltProblem, CliError, ProblemKind, RunConfig};
use crate::csvio::{csv_field, write_run_csv};
use crate::ExitStatus;
use rayon::prelude::*;
use smb::optimizer::{run_epochs, RunRecord, Variant};
use smb::problems::gradcheck::{finite_difference_check, GradCheckReport, DEFAULT_FD_STEP};
use smb::problems::synth::{synth_image_dataset, synth_logistic_dataset, SynthImageConfig};
use smb::problems::{LogisticProblem, MlpProblem, QuadraticProblem};
use smb::verify::{run_verification, VerificationReport, VerifyError};
use std::io::Write;
use std::path::Path;

/// Runs one experiment, writes the metrics CSV, and returns the records.
pub fn cmd_run(cfg: &RunConfig) -> Result<(Vec<RunRecord>, ExitStatus), CliError> {
    let problem = cfg.build_problem()?;
    let opt_cfg = cfg.optimizer_config()?;
    let records = run_epochs(
        problem.oracle(),
        &opt_cfg,
        cfg.epochs,
        problem.classifier(),
        cfg.seed,
    )?;
    write_run_csv(&cfg.out, &cfg.provenance(), &records).map_err(|source| CliError::Io {
        path: cfg.out.display().to_string(),
        source,
    })?;
    let diverged = records.last().is_some_and(|r| r.diverged);
    let status = if diverged { ExitStatus::Divergence } else { ExitStatus::Success };
    Ok((records, status))
}

/// One cell of a stepsize sweep.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub variant: Variant,
    pub alpha: f64,
    pub final_loss: f64,
    pub final_accuracy: Option<f64>,
    pub diverged: bool,
    pub records: Vec<RunRecord>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub cells: Vec<SweepCell>,
}

impl SweepOutcome {
    pub fn cell(&self, variant: Variant, alpha: f64) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.variant == variant && c.alpha == alpha)
    }

    /// Non-diverged cell with the lowest final loss for the variant.
    pub fn best_cell(&self, variant: Variant) -> Option<&SweepCell> {
        self.cells
            .iter()
            .filter(|c| c.variant == variant && !c.diverged && c.final_loss.is_finite())
            .min_by(|a, b| a.final_loss.total_cmp(&b.final_loss))
    }
}

/// Runs one sweep cell; every cell uses the base config's seeds, so a
/// single-cell sweep reproduces `cmd_run` exactly.
pub fn run_sweep_cell(
    base: &RunConfig,
    variant: Variant,
    alpha: f64,
) -> Result<SweepCell, CliError> {
    let cell_cfg = RunConfig {
        optimizer: variant,
        alpha,
        alpha_max: base.alpha_max.max(10.0 * alpha),
        ..base.clone()
    };
    let problem = cell_cfg.build_problem()?;
    let opt_cfg = cell_cfg.optimizer_config()?;
    let records = run_epochs(
        problem.oracle(),
        &opt_cfg,
        cell_cfg.epochs,
        problem.classifier(),
        cell_cfg.seed,
    )?;
    let last = records.last().expect("epochs >= 1 always yields records");
    Ok(SweepCell {
        variant,
        alpha,
        final_loss: last.train_loss,
        final_accuracy: last.test_accuracy,
        diverged: last.diverged,
        records,
    })
}

/// Runs the full `(variant, alpha)` grid; cells run concurrently and failures
/// become diverged cells rather than aborting the sweep. Results come back
/// sorted by (variant order given, alpha ascending) regardless of execution
/// order.
pub fn cmd_sweep(
    base: &RunConfig,
    alphas: &[f64],
    variants: &[Variant],
) -> Result<SweepOutcome, CliError> {
    if alphas.is_empty() || variants.is_empty() {
        return Err(CliError::Config("sweep needs at least one alpha and one optimizer".into()));
    }
    let grid: Vec<(usize, Variant, f64)> = variants
        .iter()
        .enumerate()
        .flat_map(|(vi, &v)| alphas.iter().map(move |&a| (vi, v, a)))
        .collect();

    let mut cells: Vec<(usize, SweepCell)> = grid
        .par_iter()
        .map(|&(vi, variant, alpha)| {
            let cell = run_sweep_cell(base, variant, alpha).unwrap_or_else(|_| SweepCell {
                variant,
                alpha,
                final_loss: f64::NAN,
                final_accuracy: None,
                diverged: true,
                records: Vec::new(),
            });
            (vi, cell)
        })
        .collect();
    cells.sort_by(|(vi_a, a), (vi_b, b)| vi_a.cmp(vi_b).then(a.alpha.total_cmp(&b.alpha)));

    let outcome = SweepOutcome { cells: cells.into_iter().map(|(_, c)| c).collect() };
    write_sweep_files(base, &outcome)?;
    Ok(outcome)
}

fn write_sweep_files(base: &RunConfig, outcome: &SweepOutcome) -> Result<(), CliError> {
    let io_err = |path: &Path, source: std::io::Error| CliError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = std::fs::File::create(&base.out).map_err(|e| io_err(&base.out, e))?;
    writeln!(file, "# {}", base.provenance()).map_err(|e| io_err(&base.out, e))?;
    writeln!(file, "variant,alpha,final_loss,final_accuracy,diverged")
        .map_err(|e| io_err(&base.out, e))?;
    for cell in &outcome.cells {
        writeln!(
            file,
            "{},{},{},{},{}",
            csv_field(&cell.variant.to_string()),
            cell.alpha,
            cell.final_loss,
            cell.final_accuracy.map_or_else(String::new, |v| v.to_string()),
            cell.diverged
        )
        .map_err(|e| io_err(&base.out, e))?;
    }

    // One metrics file per cell next to the summary.
    let stem = base.out.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep");
    let dir = base.out.parent().map(Path::to_path_buf).unwrap_or_default();
    for cell in &outcome.cells {
        if cell.records.is_empty() {
            continue;
        }
        let cell_cfg = RunConfig {
            optimizer: cell.variant,
            alpha: cell.alpha,
            alpha_max: base.alpha_max.max(10.0 * cell.alpha),
            ..base.clone()
        };
        let path = dir.join(format!("{stem}_{}_{}.csv", cell.variant, cell.alpha));
        write_run_csv(&path, &cell_cfg.provenance(), &cell.records)
            .map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

/// Runs the verification battery and prints one line per property.
pub fn cmd_verify(seed: u64, trials: usize) -> Result<(VerificationReport, ExitStatus), CliError> {
    let report = run_verification(seed, trials).map_err(|e: VerifyError| match e {
        VerifyError::NoTrials => CliError::Config("trials must be >= 1".into()),
    })?;
    for p in &report.properties {
        println!("{}", p.line());
    }
    let status =
        if report.all_passed() { ExitStatus::Success } else { ExitStatus::VerificationFailure };
    Ok((report, status))
}

/// Desk-scale instances used by gradcheck; the gradient math is size-free, so
/// small instances keep the O(dim) finite-difference loop fast.
fn gradcheck_problem(kind: ProblemKind, seed: u64) -> Result<BuiltProblem, CliError> {
    Ok(match kind {
        ProblemKind::Quadratic => BuiltProblem::Quadratic(QuadraticProblem::from_spectrum(
            &[0.5, 1.0, 2.0, 4.0, 7.0, 10.0],
            true,
            32,
            0.4,
            seed,
        )),
        ProblemKind::Logistic => BuiltProblem::Logistic(LogisticProblem::new(
            synth_logistic_dataset(64, 16, 10, 2.0, seed),
            1e-3,
        )?),
        ProblemKind::Mlp => {
            let data = synth_image_dataset(&SynthImageConfig {
                grid: 4,
                classes: 4,
                n_train: 64,
                n_test: 16,
                seed,
                ..Default::default()
            });
            BuiltProblem::Mlp(MlpProblem::new(data, 8)?)
        }
    })
}

/// Finite-difference gradient check on a desk-scale instance of the problem,
/// over several random points and batches.
pub fn cmd_gradcheck(
    kind: ProblemKind,
    seed: u64,
) -> Result<(Vec<GradCheckReport>, ExitStatus), CliError> {
    let problem = gradcheck_problem(kind, seed)?;
    let oracle = problem.oracle();
    let threshold = 1e-5;
    let mut reports = Vec::new();
    let mut worst = 0.0f64;
    for trial in 0..4u64 {
        let x = oracle.initial_params(seed.wrapping_add(trial));
        let batch = smb::sample_batch(
            seed.wrapping_add(trial),
            smb::PRIMARY_STREAM,
            trial,
            oracle.dataset_size(),
            8.min(oracle.dataset_size()),
        )
        .map_err(|e| CliError::Config(e.to_string()))?;
        let report = finite_difference_check(oracle, &x, &batch, DEFAULT_FD_STEP)?;
        worst = worst.max(report.max_rel_err);
        for check in &report.checks {
            println!(
                "{} trial {trial} group {}: rel err {:.3e}",
                report.problem, check.group, check.rel_err
            );
        }
        reports.push(report);
    }
    let status = if worst < threshold {
        println!("gradcheck {kind}: PASS (max rel err {worst:.3e} < {threshold:.0e})");
        ExitStatus::Success
    } else {
        println!("gradcheck {kind}: FAIL (max rel err {worst:.3e} >= {threshold:.0e})");
        ExitStatus::VerificationFailure
    };
    Ok((reports, status))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PartialConfig;

    fn quick_config(out: &str) -> RunConfig {
        PartialConfig {
            problem: Some("quadratic".into()),
            alpha: Some(0.1),
            epochs: Some(3),
            batch_size: Some(32),
            out: Some(std::env::temp_dir().join(out)),
            ..Default::default()
        }
        .finalize()
        .unwrap()
    }

    #[test]
    fn run_produces_one_row_per_epoch() {
        let cfg = quick_config(&format!("smb_cmd_run_{}.csv", std::process::id()));
        let (records, status) = cmd_run(&cfg).unwrap();
        assert_eq!(status, ExitStatus::Success);
        assert_eq!(records.len(), 3);
        let text = std::fs::read_to_string(&cfg.out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# problem=quadratic"));
        assert_eq!(lines[1], crate::csvio::RUN_HEADER);
        assert_eq!(lines.len(), 2 + 3);
        std::fs::remove_file(&cfg.out).ok();
    }

    #[test]
    fn single_cell_sweep_matches_cmd_run() {
        let cfg = quick_config(&format!("smb_cmd_sweep_{}.csv", std::process::id()));
        let (records, _) = cmd_run(&cfg).unwrap();
        let sweep = cmd_sweep(&cfg, &[cfg.alpha], &[cfg.optimizer]).unwrap();
        let cell = sweep.cell(cfg.optimizer, cfg.alpha).unwrap();
        assert_eq!(cell.final_loss, records.last().unwrap().train_loss);
        assert!(!cell.diverged);
        // Clean up the summary and the per-cell file.
        std::fs::remove_file(&cfg.out).ok();
        let stem = cfg.out.file_stem().unwrap().to_str().unwrap().to_string();
        std::fs::remove_file(cfg.out.with_file_name(format!("{stem}_smb_0.1.csv"))).ok();
    }

    #[test]
    fn verify_command_passes_and_prints() {
        let (report, status) = cmd_verify(3, 50).unwrap();
        assert_eq!(status, ExitStatus::Success);
        assert_eq!(report.properties.len(), 5);
    }

    #[test]
    fn gradcheck_passes_on_all_problems() {
        for kind in [ProblemKind::Quadratic, ProblemKind::Logistic, ProblemKind::Mlp] {
            let (_, status) = cmd_gradcheck(kind, 5).unwrap();
            assert_eq!(status, ExitStatus::Success, "{kind}");
        }
    }
}
