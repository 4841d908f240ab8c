//! Detection settings: command-line flags override the config file, which overrides defaults.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use factor_events::estimator::b_grid;
use factor_events::{CasePreset, SearchGrid, B_MAX};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Routing {
    /// Amplitudes land on the scheduled channel only.
    Direct,
    /// Each event drives a random dense loading vector.
    Dense,
    /// Each event drives a Gaussian bump of channels around the scheduled one.
    Localized,
}

/// Every setting is optional here so that flags and file values can be layered.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectArgs {
    /// TOML config file, or the report.json of an earlier run to repeat it.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// CSV with one row per channel and one column per sample.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Treat the first CSV line as a header.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub skip_header: Option<bool>,

    /// Synthetic scenario: null, case1, case2 or case3.
    #[arg(long)]
    pub case: Option<String>,
    /// JSON event schedule replacing the scenario's events.
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    /// Synthetic length; defaults to the scenario length.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, value_enum)]
    pub routing: Option<Routing>,
    /// Bump width in channels for localized routing.
    #[arg(long)]
    pub loading_width: Option<f64>,
    /// AR(1) coefficient of the synthetic noise.
    #[arg(long)]
    pub noise_b: Option<f64>,
    /// Spike size as a multiple of the noise bulk edge; 0 uses raw event amplitudes.
    #[arg(long)]
    pub strength: Option<f64>,

    /// Window length T.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Largest factor count searched.
    #[arg(long)]
    pub p_max: Option<usize>,
    #[arg(long)]
    pub b_step: Option<f64>,
    #[arg(long)]
    pub b_max: Option<f64>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Penalty per factor in units of ln2/(2N).
    #[arg(long)]
    pub parsimony: Option<f64>,

    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub dump_eigenvalues: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub dump_surfaces: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub dump_profiles: Option<bool>,

    /// Minimum level shift of p for a change flag.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Windows a shift must persist; defaults to half a window length of samples.
    #[arg(long)]
    pub hold: Option<usize>,
}

macro_rules! layer {
    ($top:expr, $base:expr, $($field:ident),+ $(,)?) => {
        DetectArgs {
            config: $top.config.or($base.config),
            $($field: $top.$field.or($base.$field)),+
        }
    };
}

impl DetectArgs {
    /// Fields set here win; unset fields fall back to `base`.
    pub fn over(self, base: DetectArgs) -> DetectArgs {
        layer!(
            self,
            base,
            input,
            skip_header,
            case,
            schedule,
            samples,
            routing,
            loading_width,
            noise_b,
            strength,
            window,
            stride,
            p_max,
            b_step,
            b_max,
            bins,
            epsilon,
            parsimony,
            runs,
            seed,
            workers,
            out,
            dump_eigenvalues,
            dump_surfaces,
            dump_profiles,
            threshold,
            hold,
        )
    }
}

/// Reads a TOML config, or the `config` section of a JSON report.
pub fn load_file(path: &Path) -> Result<DetectArgs, CliError> {
    if !path.is_file() {
        return Err(CliError::Config(format!(
            "config file {} does not exist",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |e: &dyn std::fmt::Display| CliError::Config(format!("{}: {e}", path.display()));
    if path.extension().is_some_and(|e| e == "json") {
        #[derive(Deserialize)]
        struct Report {
            config: DetectArgs,
        }
        let report: Report = serde_json::from_str(&text).map_err(|e| bad(&e))?;
        Ok(report.config)
    } else {
        toml::from_str(&text).map_err(|e| bad(&e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub skip_header: bool,
    pub case: Option<String>,
    pub schedule: Option<PathBuf>,
    pub samples: Option<usize>,
    pub routing: Routing,
    pub loading_width: f64,
    pub noise_b: f64,
    pub strength: f64,
    pub window: usize,
    pub stride: usize,
    pub p_max: usize,
    pub b_step: f64,
    pub b_max: f64,
    pub bins: usize,
    pub epsilon: f64,
    pub parsimony: f64,
    pub runs: usize,
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    pub dump_eigenvalues: bool,
    pub dump_surfaces: bool,
    pub dump_profiles: bool,
    pub threshold: f64,
    pub hold: usize,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn resolve(flags: DetectArgs) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(path) => load_file(path)?,
            None => DetectArgs::default(),
        };
        let a = flags.over(file);
        let defaults = SearchGrid::default();
        let window = a.window.unwrap_or(250);
        let stride = a.stride.unwrap_or(1);
        let cfg = RunConfig {
            input: a.input,
            skip_header: a.skip_header.unwrap_or(false),
            case: a.case,
            schedule: a.schedule,
            samples: a.samples,
            routing: a.routing.unwrap_or(Routing::Dense),
            loading_width: a.loading_width.unwrap_or(4.0),
            noise_b: a.noise_b.unwrap_or(0.5),
            strength: a.strength.unwrap_or(5.0),
            window,
            stride,
            p_max: a.p_max.unwrap_or(10),
            b_step: a.b_step.unwrap_or(0.05),
            b_max: a.b_max.unwrap_or(B_MAX),
            bins: a.bins.unwrap_or(defaults.bins),
            epsilon: a.epsilon.unwrap_or(defaults.epsilon),
            parsimony: a.parsimony.unwrap_or(defaults.parsimony),
            runs: a.runs.unwrap_or(1),
            seed: a.seed.unwrap_or(0),
            workers: a
                .workers
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
            out: a.out.unwrap_or_else(|| PathBuf::from("out")),
            dump_eigenvalues: a.dump_eigenvalues.unwrap_or(false),
            dump_surfaces: a.dump_surfaces.unwrap_or(false),
            dump_profiles: a.dump_profiles.unwrap_or(false),
            threshold: a.threshold.unwrap_or(0.5),
            hold: a.hold.unwrap_or((window / 2 / stride.max(1)).max(1)),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        match (&self.input, &self.case, &self.schedule) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(config_err("--input cannot be combined with --case or --schedule"))
            }
            (None, None, None) => return Err(config_err("either --input or --case (or --schedule) is required")),
            _ => {}
        }
        if let Some(path) = &self.input {
            if !path.is_file() {
                return Err(config_err(format!("input file {} does not exist", path.display())));
            }
            if self.runs != 1 {
                return Err(config_err(
                    "repeated runs need a synthetic source; an input file gives exactly one run",
                ));
            }
        }
        if let Some(path) = &self.schedule {
            if !path.is_file() {
                return Err(config_err(format!("schedule file {} does not exist", path.display())));
            }
            if self.case.is_none() && self.samples.is_none() {
                return Err(config_err("a custom schedule without --case needs --samples"));
            }
        }
        if let Some(name) = &self.case {
            if CasePreset::parse(name).is_none() {
                return Err(config_err(format!(
                    "unknown case {name:?}; expected null, case1, case2 or case3"
                )));
            }
        }
        if self.runs < 1 {
            return Err(config_err("runs must be at least 1"));
        }
        if self.workers < 1 {
            return Err(config_err("workers must be at least 1"));
        }
        if self.hold < 1 || !(self.threshold > 0.0) {
            return Err(config_err("hold must be at least 1 and threshold positive"));
        }
        if !(0.0..1.0).contains(&self.noise_b) {
            return Err(config_err(format!("noise-b = {} must lie in [0, 1)", self.noise_b)));
        }
        if !(self.strength >= 0.0) || !(self.loading_width > 0.0) {
            return Err(config_err("strength must be nonnegative and loading-width positive"));
        }
        if !(self.b_max <= B_MAX) {
            return Err(config_err(format!("b-max must not exceed {B_MAX}")));
        }
        if self.window < 2 || self.stride < 1 {
            return Err(config_err("window must be at least 2 and stride at least 1"));
        }
        self.grid()
            .validate()
            .map_err(|e| config_err(format!("search grid: {e}")))
    }

    pub fn grid(&self) -> SearchGrid {
        SearchGrid {
            p_values: (0..=self.p_max).collect(),
            b_values: b_grid(self.b_step, self.b_max),
            epsilon: self.epsilon,
            bins: self.bins,
            parsimony: self.parsimony,
            keep_surface: self.dump_surfaces,
            ..SearchGrid::default()
        }
    }
}
