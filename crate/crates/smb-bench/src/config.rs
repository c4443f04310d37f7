//! Run configuration: defaults, flat `key=value` config files, flag
//! overrides, validation, and problem construction.

use smb::optimizer::{ConfigError, OptimizerConfig, Variant};
use smb::problems::dataset::DataError;
use smb::problems::synth::{synth_image_dataset, synth_logistic_dataset, SynthImageConfig};
use smb::problems::{
    load_csv, load_idx_dir, load_libsvm, ClassifierOracle, LogisticProblem, MlpProblem,
    QuadraticProblem,
};
use smb::schedule::{ScheduleDescriptor, ScheduleKind};
use smb::{OracleError, RunError, StochasticOracle};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("config error in {field}: {detail}")]
    Field { field: String, detail: String },
    #[error("data error: {0}")]
    Data(#[from] DataError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("problem setup failed: {0}")]
    Problem(#[from] OracleError),
    #[error("run failed: {0}")]
    Run(#[from] RunError),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Quadratic,
    Logistic,
    Mlp,
}

impl std::fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProblemKind::Quadratic => "quadratic",
            ProblemKind::Logistic => "logistic",
            ProblemKind::Mlp => "mlp",
        })
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "quadratic" => Ok(ProblemKind::Quadratic),
            "logistic" => Ok(ProblemKind::Logistic),
            "mlp" => Ok(ProblemKind::Mlp),
            other => Err(format!("unknown problem `{other}` (expected quadratic|logistic|mlp)")),
        }
    }
}

fn parse_schedule(s: &str) -> Result<ScheduleKind, String> {
    match s.to_ascii_lowercase().as_str() {
        "constant" => Ok(ScheduleKind::Constant),
        "diminishing" => Ok(ScheduleKind::Diminishing),
        "auto" => Ok(ScheduleKind::AutoSchedule),
        other => Err(format!("unknown schedule `{other}` (expected constant|diminishing|auto)")),
    }
}

fn schedule_name(kind: ScheduleKind) -> &'static str {
    match kind {
        ScheduleKind::Constant => "constant",
        ScheduleKind::Diminishing => "diminishing",
        ScheduleKind::AutoSchedule => "auto",
    }
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub optimizer: Variant,
    pub alpha: f64,
    pub alpha_max: f64,
    pub eta: f64,
    pub c: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub schedule: ScheduleKind,
    pub phi: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub data: Option<PathBuf>,
    pub width: usize,
    pub subset: usize,
}

impl RunConfig {
    /// Canonical `key=value` serialization; doubles as the provenance header
    /// of every metrics file and round-trips through the config-file parser.
    pub fn provenance(&self) -> String {
        format!(
            "problem={} optimizer={} alpha={} alpha-max={} eta={} c={} batch-size={} \
             epochs={} schedule={} phi={} seed={} width={} subset={} data={}",
            self.problem,
            self.optimizer,
            self.alpha,
            self.alpha_max,
            self.eta,
            self.c,
            self.batch_size,
            self.epochs,
            schedule_name(self.schedule),
            self.phi,
            self.seed,
            self.width,
            self.subset,
            self.data.as_ref().map_or_else(|| "-".into(), |p| p.display().to_string()),
        )
    }

    pub fn optimizer_config(&self) -> Result<OptimizerConfig, CliError> {
        let mut cfg = OptimizerConfig::new(self.optimizer, self.alpha);
        cfg.c = self.c;
        cfg.eta = self.eta;
        cfg.alpha_max = self.alpha_max;
        cfg.batch_size = self.batch_size;
        let schedule = match self.schedule {
            ScheduleKind::Constant => ScheduleDescriptor::constant(),
            ScheduleKind::Diminishing => ScheduleDescriptor::diminishing(self.phi),
            ScheduleKind::AutoSchedule => ScheduleDescriptor::auto(self.alpha_max),
        };
        cfg = cfg.with_schedule(schedule);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn build_problem(&self) -> Result<BuiltProblem, CliError> {
        match self.problem {
            ProblemKind::Quadratic => {
                let spectrum: Vec<f64> = (0..8).map(|i| 1.0 + 9.0 * i as f64 / 7.0).collect();
                Ok(BuiltProblem::Quadratic(QuadraticProblem::from_spectrum(
                    &spectrum, true, 256, 0.5, self.seed,
                )))
            }
            ProblemKind::Logistic => {
                let data = match &self.data {
                    Some(path) => load_tabular(path)?,
                    None => synth_logistic_dataset(2_000, 500, 20, 2.5, self.seed),
                };
                let data = data.with_train_subset(self.subset);
                Ok(BuiltProblem::Logistic(LogisticProblem::new(data, 1e-3)?))
            }
            ProblemKind::Mlp => {
                let data = match &self.data {
                    Some(path) => {
                        if path.is_dir() {
                            load_idx_dir(path)?
                        } else {
                            load_tabular(path)?
                        }
                    }
                    None => synth_image_dataset(&SynthImageConfig {
                        n_train: self.subset.max(10),
                        seed: self.seed,
                        ..Default::default()
                    }),
                };
                let data = data.with_train_subset(self.subset);
                Ok(BuiltProblem::Mlp(MlpProblem::new(data, self.width)?))
            }
        }
    }
}

fn load_tabular(path: &Path) -> Result<smb::problems::Dataset, CliError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Ok(load_csv(path, "label")?),
        _ => Ok(load_libsvm(path, None)?),
    }
}

/// A constructed problem, dispatched by kind.
pub enum BuiltProblem {
    Quadratic(QuadraticProblem),
    Logistic(LogisticProblem),
    Mlp(MlpProblem),
}

impl BuiltProblem {
    pub fn oracle(&self) -> &dyn StochasticOracle {
        match self {
            BuiltProblem::Quadratic(p) => p,
            BuiltProblem::Logistic(p) => p,
            BuiltProblem::Mlp(p) => p,
        }
    }

    /// Classification problems report test accuracy; the quadratic does not.
    pub fn classifier(&self) -> Option<&dyn ClassifierOracle> {
        match self {
            BuiltProblem::Quadratic(_) => None,
            BuiltProblem::Logistic(p) => Some(p),
            BuiltProblem::Mlp(p) => Some(p),
        }
    }
}

/// Config fields before defaulting; file values are overridden by flags.
#[derive(Debug, Clone, Default)]
pub struct PartialConfig {
    pub problem: Option<String>,
    pub optimizer: Option<String>,
    pub alpha: Option<f64>,
    pub alpha_max: Option<f64>,
    pub eta: Option<f64>,
    pub c: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub schedule: Option<String>,
    pub phi: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub width: Option<usize>,
    pub subset: Option<usize>,
}

impl PartialConfig {
    /// Parses a flat `key=value` file; `#` starts a comment line.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = PartialConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| CliError::Field {
                field: format!("{}:{}", path.display(), lineno + 1),
                detail: format!("`{line}` is not key=value"),
            })?;
            cfg.set(key.trim(), value.trim()).map_err(|detail| CliError::Field {
                field: format!("{} (line {})", key.trim(), lineno + 1),
                detail,
            })?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(value: &str) -> Result<T, String> {
            value.parse().map_err(|_| format!("cannot parse `{value}`"))
        }
        match key {
            "problem" => self.problem = Some(value.to_string()),
            "optimizer" => self.optimizer = Some(value.to_string()),
            "alpha" => self.alpha = Some(num(value)?),
            "alpha-max" | "alpha_max" => self.alpha_max = Some(num(value)?),
            "eta" => self.eta = Some(num(value)?),
            "c" => self.c = Some(num(value)?),
            "batch-size" | "batch_size" => self.batch_size = Some(num(value)?),
            "epochs" => self.epochs = Some(num(value)?),
            "schedule" => self.schedule = Some(value.to_string()),
            "phi" => self.phi = Some(num(value)?),
            "seed" => self.seed = Some(num(value)?),
            "out" => self.out = Some(PathBuf::from(value)),
            "data" => {
                self.data = if value == "-" { None } else { Some(PathBuf::from(value)) };
            }
            "width" => self.width = Some(num(value)?),
            "subset" => self.subset = Some(num(value)?),
            other => return Err(format!("unknown config key `{other}`")),
        }
        Ok(())
    }

    /// Field-wise merge; `overrides` wins where set.
    pub fn merged_with(mut self, overrides: PartialConfig) -> PartialConfig {
        macro_rules! take {
            ($($f:ident),*) => { $( if overrides.$f.is_some() { self.$f = overrides.$f; } )* };
        }
        take!(
            problem, optimizer, alpha, alpha_max, eta, c, batch_size, epochs, schedule, phi,
            seed, out, data, width, subset
        );
        self
    }

    /// Applies defaults and validates; `problem` is the only required field.
    pub fn finalize(self) -> Result<RunConfig, CliError> {
        let problem: ProblemKind = self
            .problem
            .ok_or_else(|| CliError::Field {
                field: "problem".into(),
                detail: "required (set --problem or a config file entry)".into(),
            })?
            .parse()
            .map_err(|detail| CliError::Field { field: "problem".into(), detail })?;
        let optimizer: Variant = self
            .optimizer
            .as_deref()
            .unwrap_or("smb")
            .parse()
            .map_err(|detail| CliError::Field { field: "optimizer".into(), detail })?;
        let schedule = parse_schedule(self.schedule.as_deref().unwrap_or("constant"))
            .map_err(|detail| CliError::Field { field: "schedule".into(), detail })?;
        let alpha = self.alpha.unwrap_or(0.1);
        let cfg = RunConfig {
            problem,
            optimizer,
            alpha,
            alpha_max: self.alpha_max.unwrap_or(10.0 * alpha),
            eta: self.eta.unwrap_or(0.8),
            c: self.c.unwrap_or(0.1),
            batch_size: self.batch_size.unwrap_or(128),
            epochs: self.epochs.unwrap_or(5),
            schedule,
            phi: self.phi.unwrap_or(0.75),
            seed: self.seed.unwrap_or(7),
            out: self.out.unwrap_or_else(|| PathBuf::from("smb_run.csv")),
            data: self.data,
            width: self.width.unwrap_or(100),
            subset: self.subset.unwrap_or(10_000),
        };
        if cfg.epochs == 0 {
            return Err(CliError::Field { field: "epochs".into(), detail: "must be >= 1".into() });
        }
        // Surfaces alpha/eta/c/schedule violations with their field names.
        cfg.optimizer_config()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn defaults_fill_in() {
        let cfg = PartialConfig {
            problem: Some("quadratic".into()),
            ..Default::default()
        }
        .finalize()
        .unwrap();
        assert_eq!(cfg.optimizer, Variant::Smb);
        assert_eq!(cfg.alpha, 0.1);
        assert_eq!(cfg.alpha_max, 1.0);
        assert_eq!(cfg.c, 0.1);
        assert_eq!(cfg.eta, 0.8);
        assert_eq!(cfg.batch_size, 128);
    }

    #[test]
    fn missing_problem_is_a_field_error() {
        let err = PartialConfig::default().finalize().unwrap_err();
        assert!(err.to_string().contains("problem"));
    }

    #[test]
    fn flags_override_file_values() {
        let path = std::env::temp_dir().join(format!("smb_cfg_{}.txt", std::process::id()));
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "# comment\nproblem=logistic\nalpha=0.5\nepochs=3").unwrap();
        let file_cfg = PartialConfig::from_file(&path).unwrap();
        let flags = PartialConfig { alpha: Some(0.25), ..Default::default() };
        let cfg = file_cfg.merged_with(flags).finalize().unwrap();
        assert_eq!(cfg.problem, ProblemKind::Logistic);
        assert_eq!(cfg.alpha, 0.25);
        assert_eq!(cfg.epochs, 3);
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        let path = std::env::temp_dir().join(format!("smb_cfg_bad_{}.txt", std::process::id()));
        std::fs::write(&path, "problme=mlp\n").unwrap();
        assert!(PartialConfig::from_file(&path).is_err());
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn provenance_round_trips_through_the_parser() {
        let cfg = PartialConfig {
            problem: Some("mlp".into()),
            alpha: Some(0.5),
            ..Default::default()
        }
        .finalize()
        .unwrap();
        let line = cfg.provenance();
        let mut parsed = PartialConfig::default();
        for pair in line.split_whitespace() {
            let (k, v) = pair.split_once('=').unwrap();
            parsed.set(k, v).unwrap();
        }
        let reparsed = parsed.finalize().unwrap();
        assert_eq!(reparsed.problem, cfg.problem);
        assert_eq!(reparsed.alpha, cfg.alpha);
        assert_eq!(reparsed.alpha_max, cfg.alpha_max);
        assert_eq!(reparsed.seed, cfg.seed);
    }

    #[test]
    fn invalid_eta_reports_through_optimizer_validation() {
        let err = PartialConfig {
            problem: Some("quadratic".into()),
            eta: Some(1.5),
            ..Default::default()
        }
        .finalize()
        .unwrap_err();
        assert!(err.to_string().contains("eta"));
    }
}
