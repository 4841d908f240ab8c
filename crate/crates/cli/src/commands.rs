use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use factor_events::datagen::derive_seed;
use factor_events::io::{
    read_source_csv, write_average_csv, write_eigenvalues_csv, write_profile_csv, write_profiles_csv, write_source_csv,
    write_surfaces_csv, write_timelines_csv,
};
use factor_events::{
    average_runs, detect_changes, synthesize_case, Ar1Spec, CasePreset, Error, Estimator, EventRouting, EventSchedule,
    Execution, LoadingShape, ModelProfile, NoiseModelParams, ProfileOptions, RawDataSource, SpikeStrength,
    SyntheticConfig, Timeline, WindowSpec, B_MAX,
};
use serde::Serialize;
use serde_json::json;

use crate::config::{Routing, RunConfig};
use crate::error::CliError;

/// Output files staged as temporaries and renamed into place together.
struct Staged {
    files: Vec<(PathBuf, tempfile::NamedTempFile)>,
}

impl Staged {
    fn new() -> Self {
        Self { files: Vec::new() }
    }

    fn add(&mut self, path: PathBuf, bytes: &[u8]) -> Result<(), CliError> {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| CliError::io(&dir, e))?;
        tmp.write_all(bytes).map_err(|e| CliError::io(&path, e))?;
        tmp.flush().map_err(|e| CliError::io(&path, e))?;
        self.files.push((path, tmp));
        Ok(())
    }

    fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        let mut written = Vec::new();
        for (path, tmp) in self.files {
            tmp.persist(&path).map_err(|e| CliError::io(&path, e.error))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn render(f: impl FnOnce(&mut Vec<u8>) -> factor_events::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Settings for building one synthetic source.
pub struct Synthetic {
    pub schedule: EventSchedule,
    pub samples: usize,
    pub routing: Routing,
    pub loading_width: f64,
    pub noise_b: f64,
    pub strength: f64,
    pub window: usize,
}

/// Event schedule and length from a scenario name, a schedule file, or both (the file replaces
/// the scenario's events).
pub fn resolve_schedule(
    case: Option<&str>,
    schedule: Option<&Path>,
    samples: Option<usize>,
) -> Result<(EventSchedule, usize), CliError> {
    let preset = match case {
        Some(name) => Some(CasePreset::parse(name).ok_or_else(|| CliError::Config(format!("unknown case {name:?}")))?),
        None => None,
    };
    let events = match (schedule, preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            EventSchedule::from_json(&text)
                .map_err(|e| CliError::Config(format!("schedule {}: {e}", path.display())))?
        }
        (None, Some(p)) => p.schedule(),
        (None, None) => return Err(CliError::Config("a synthetic source needs a case or a schedule".into())),
    };
    let samples = samples
        .or(preset.map(|p| p.samples()))
        .ok_or_else(|| CliError::Config("synthetic length unknown; pass --samples".into()))?;
    events
        .validate(CasePreset::CHANNELS, samples)
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok((events, samples))
}

impl Synthetic {
    pub fn check(&self) -> Result<(), CliError> {
        if self.samples < self.window {
            return Err(CliError::Config(format!(
                "{} samples cannot hold a window of {}",
                self.samples, self.window
            )));
        }
        Ok(())
    }

    pub fn source(&self, seed: u64) -> Result<RawDataSource, CliError> {
        let n = CasePreset::CHANNELS;
        let strength = if self.strength > 0.0 {
            let c = n as f64 / self.window as f64;
            Some(SpikeStrength::relative_to_model(
                self.strength,
                self.noise_b.min(B_MAX),
                c,
            )?)
        } else {
            None
        };
        let loading = |shape| EventRouting::Loading {
            shape,
            strength,
            seed: derive_seed(seed, 1),
        };
        let routing = match self.routing {
            Routing::Direct => EventRouting::Direct,
            Routing::Dense => loading(LoadingShape::Dense),
            Routing::Localized => loading(LoadingShape::Localized {
                width: self.loading_width,
            }),
        };
        let config = SyntheticConfig::new(n, self.samples, Ar1Spec::gaussian(self.noise_b, seed));
        Ok(synthesize_case(&self.schedule, &routing, &config)?)
    }
}

#[derive(Serialize)]
struct Failure<'a> {
    run: usize,
    end_index: usize,
    message: &'a str,
}

pub fn run_detect(config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let started = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    let exec = if config.workers > 1 {
        Execution::Parallel
    } else {
        Execution::Sequential
    };

    let synthetic = match &config.input {
        Some(_) => None,
        None => {
            let (schedule, samples) =
                resolve_schedule(config.case.as_deref(), config.schedule.as_deref(), config.samples)?;
            let s = Synthetic {
                schedule,
                samples,
                routing: config.routing,
                loading_width: config.loading_width,
                noise_b: config.noise_b,
                strength: config.strength,
                window: config.window,
            };
            s.check()?;
            Some(s)
        }
    };
    let seeds: Vec<u64> = match synthetic {
        Some(_) => (0..config.runs as u64).map(|r| derive_seed(config.seed, r)).collect(),
        None => Vec::new(),
    };

    let (timelines, estimator) = pool.install(|| -> Result<_, CliError> {
        let input = match &config.input {
            Some(path) => {
                let file = File::open(path).map_err(|e| CliError::io(path, e))?;
                let source = read_source_csv(file, config.skip_header).map_err(|e| match e {
                    Error::Io(msg) => CliError::io(path, std::io::Error::other(msg)),
                    other => CliError::Data(other),
                })?;
                if source.t() < config.window {
                    return Err(CliError::Config(format!(
                        "input has {} samples, fewer than the window length {}",
                        source.t(),
                        config.window
                    )));
                }
                Some(source)
            }
            None => None,
        };
        let n = input.as_ref().map_or(CasePreset::CHANNELS, RawDataSource::n);
        let spec = WindowSpec::new(n, config.window, config.stride)?;
        let estimator = Estimator::for_spec(config.grid(), &spec, exec)?.keep_eigenvalues(config.dump_eigenvalues);
        let mut timelines = Vec::new();
        let mut sweep = |source: &RawDataSource| -> Result<(), CliError> {
            let mut timeline = estimator.sweep(source, &spec, exec)?;
            timeline.annotate(config.threshold, config.hold);
            timelines.push(timeline);
            Ok(())
        };
        match (&input, &synthetic) {
            (Some(source), _) => sweep(source)?,
            (None, Some(s)) => {
                // one run in memory at a time
                for &seed in &seeds {
                    sweep(&s.source(seed)?)?;
                }
            }
            (None, None) => unreachable!("validated configuration has a source"),
        }
        Ok((timelines, estimator))
    })?;

    let mut average = average_runs(&timelines)?;
    average.annotations = detect_changes(&average, config.threshold, config.hold);

    std::fs::create_dir_all(&config.out).map_err(|e| CliError::io(&config.out, e))?;
    let mut staged = Staged::new();
    staged.add(
        config.out.join("timeline.csv"),
        &render(|w| write_timelines_csv(w, &timelines))?,
    )?;
    staged.add(
        config.out.join("average.csv"),
        &render(|w| write_average_csv(w, &average))?,
    )?;
    if config.dump_eigenvalues {
        staged.add(
            config.out.join("eigenvalues.csv"),
            &render(|w| write_eigenvalues_csv(w, &timelines))?,
        )?;
    }
    if config.dump_surfaces {
        staged.add(
            config.out.join("surfaces.csv"),
            &render(|w| write_surfaces_csv(w, &timelines))?,
        )?;
    }
    if config.dump_profiles {
        let profiles: Vec<&ModelProfile> = estimator.profiles().filter_map(|(_, p)| p.ok()).collect();
        staged.add(
            config.out.join("profiles.csv"),
            &render(|w| write_profiles_csv(w, profiles))?,
        )?;
    }

    let failures: Vec<Failure> = timelines
        .iter()
        .enumerate()
        .flat_map(|(run, t)| {
            t.failures().map(move |(end_index, message)| Failure {
                run,
                end_index,
                message,
            })
        })
        .collect();
    let report = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "seeds": seeds,
        "windows": timelines[0].entries.len(),
        "failures": failures,
        "annotations": {
            "average": average.annotations,
            "runs": timelines.iter().map(|t: &Timeline| &t.annotations).collect::<Vec<_>>(),
        },
        "wall_clock_seconds": started.elapsed().as_secs_f64(),
    });
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Pipeline(e.into()))?;
    staged.add(config.out.join("report.json"), text.as_bytes())?;
    staged.commit()
}

#[derive(Debug, Clone, Args)]
pub struct SpectrumArgs {
    /// AR(1) coefficient.
    #[arg(long)]
    pub b: f64,
    /// Aspect ratio N/T.
    #[arg(long)]
    pub c: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
    /// Output CSV with columns lambda,rho.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_spectrum(args: &SpectrumArgs) -> Result<Vec<PathBuf>, CliError> {
    if !(args.c > 0.0) || !(0.0..=B_MAX).contains(&args.b) || !(args.epsilon > 0.0) {
        return Err(CliError::Config(format!(
            "need c > 0, 0 <= b <= {B_MAX} and epsilon > 0 (got b={}, c={}, epsilon={})",
            args.b, args.c, args.epsilon
        )));
    }
    let params = NoiseModelParams::new(args.b, args.c)?;
    let profile = ModelProfile::compute(&params, &ProfileOptions::with_epsilon(args.epsilon))?;
    let mut staged = Staged::new();
    staged.add(args.out.clone(), &render(|w| write_profile_csv(w, &profile))?)?;
    staged.commit()
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub case: Option<String>,
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, value_enum, default_value_t = Routing::Dense)]
    pub routing: Routing,
    #[arg(long, default_value_t = 4.0)]
    pub loading_width: f64,
    #[arg(long, default_value_t = 0.5)]
    pub noise_b: f64,
    #[arg(long, default_value_t = 5.0)]
    pub strength: f64,
    /// Window length used to size the spike strength.
    #[arg(long, default_value_t = 250)]
    pub window: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV, one row per channel.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_generate(args: &GenerateArgs) -> Result<Vec<PathBuf>, CliError> {
    if !(0.0..1.0).contains(&args.noise_b) || !(args.strength >= 0.0) {
        return Err(CliError::Config(
            "noise-b must lie in [0, 1) and strength be nonnegative".into(),
        ));
    }
    if let Some(path) = &args.schedule {
        if !path.is_file() {
            return Err(CliError::Config(format!(
                "schedule file {} does not exist",
                path.display()
            )));
        }
    }
    let (schedule, samples) = resolve_schedule(args.case.as_deref(), args.schedule.as_deref(), args.samples)?;
    let synthetic = Synthetic {
        schedule,
        samples,
        routing: args.routing,
        loading_width: args.loading_width,
        noise_b: args.noise_b,
        strength: args.strength,
        window: args.window,
    };
    synthetic.check()?;
    let source = synthetic.source(derive_seed(args.seed, 0))?;
    let mut staged = Staged::new();
    staged.add(args.out.clone(), &render(|w| write_source_csv(w, &source))?)?;
    staged.commit()
}
