//! Joint grid search over factor count `p` and AR coefficient `b`, the moving-window sweep,
//! multi-run averaging and level-shift detection.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{cut_window, standardize_with, RawDataSource, StandardizeOptions, StandardizedWindow, WindowSpec};
use crate::density::{uniform_edges, SpectralDensity};
use crate::divergence::{js_masses, ZeroHandlingPolicy};
use crate::empirical::WindowSpectrum;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{ModelProfile, NoiseModelParams, ProfileOptions, B_MAX};

/// Search domain and scoring settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub p_values: Vec<usize>,
    pub b_values: Vec<f64>,
    /// Imaginary offset used when evaluating the model density.
    pub epsilon: f64,
    /// Number of histogram bins shared by the empirical and model densities.
    pub bins: usize,
    /// Penalty per factor in units of `ln 2 / (2N)`. Zero gives the plain divergence argmin.
    pub parsimony: f64,
    pub zero_policy: ZeroHandlingPolicy,
    /// Keep the full (p, b) divergence table in each result.
    pub keep_surface: bool,
}

impl Default for SearchGrid {
    fn default() -> Self {
        Self {
            p_values: (0..=10).collect(),
            b_values: b_grid(0.05, B_MAX),
            epsilon: 1e-3,
            bins: 25,
            parsimony: 0.9,
            zero_policy: ZeroHandlingPolicy::default(),
            keep_surface: false,
        }
    }
}

/// `0, step, 2·step, …` up to and including `b_max` (within 1e-9).
pub fn b_grid(step: f64, b_max: f64) -> Vec<f64> {
    if !(step > 0.0) {
        return vec![0.0];
    }
    let n = ((b_max / step) + 1e-9).floor() as usize;
    (0..=n).map(|i| ((i as f64 * step) * 1e9).round() / 1e9).collect()
}

impl SearchGrid {
    pub fn validate(&self) -> Result<()> {
        if self.p_values.is_empty() || self.b_values.is_empty() {
            return Err(Error::InvalidParameter(
                "search grid must contain at least one p and one b".into(),
            ));
        }
        if let Some(b) = self.b_values.iter().find(|b| !(0.0..=B_MAX).contains(*b)) {
            return Err(Error::InvalidParameter(format!("b = {b} outside [0, {B_MAX}]")));
        }
        if self.bins < 2 {
            return Err(Error::EmptyBins(self.bins));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter("epsilon must be positive".into()));
        }
        if !(self.parsimony >= 0.0) {
            return Err(Error::InvalidParameter("parsimony must be nonnegative".into()));
        }
        Ok(())
    }

    /// Penalty added to the divergence per retained factor for an `n`-row window.
    pub fn penalty_per_factor(&self, n: usize) -> f64 {
        self.parsimony * std::f64::consts::LN_2 / (2.0 * n as f64)
    }
}

/// Divergence for every (p, b) pair; `None` where the pair could not be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceSurface {
    pub p_values: Vec<usize>,
    pub b_values: Vec<f64>,
    /// Indexed `[p][b]`.
    pub values: Vec<Vec<Option<f64>>>,
}

impl DivergenceSurface {
    pub fn min(&self) -> Option<f64> {
        self.values.iter().flatten().flatten().copied().min_by(f64::total_cmp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub end_index: usize,
    pub p_hat: usize,
    pub b_hat: f64,
    /// Divergence of the selected pair.
    pub divergence: f64,
    /// Divergence plus the parsimony penalty; the quantity that was minimized.
    pub objective: f64,
    pub divergence_surface: Option<DivergenceSurface>,
}

/// Search grid bound to a window shape, with model profiles computed once per `b`.
#[derive(Debug, Clone)]
pub struct Estimator {
    grid: SearchGrid,
    n: usize,
    t: usize,
    profiles: Vec<std::result::Result<Arc<ModelProfile>, Error>>,
    standardize: StandardizeOptions,
    keep_eigenvalues: bool,
}

impl Estimator {
    pub fn new(grid: SearchGrid, n: usize, t: usize, exec: Execution) -> Result<Self> {
        grid.validate()?;
        if n < 1 || t < 2 {
            return Err(Error::InvalidParameter(format!("window shape {n}x{t} is too small")));
        }
        let c = n as f64 / t as f64;
        let options = ProfileOptions::with_epsilon(grid.epsilon);
        let profiles = exec.map(&grid.b_values, |&b| {
            let params = NoiseModelParams::new(b, c)?;
            let profile = ModelProfile::compute(&params, &options)?;
            if profile.mass() < 0.99 {
                return Err(Error::SupportNotCovered { mass: profile.mass() });
            }
            Ok(Arc::new(profile))
        });
        Ok(Self {
            grid,
            n,
            t,
            profiles,
            standardize: StandardizeOptions::default(),
            keep_eigenvalues: false,
        })
    }

    pub fn for_spec(grid: SearchGrid, spec: &WindowSpec, exec: Execution) -> Result<Self> {
        Self::new(grid, spec.n, spec.length, exec)
    }

    pub fn with_standardize_options(mut self, options: StandardizeOptions) -> Self {
        self.standardize = options;
        self
    }

    /// Store each window's eigenvalues in the timeline.
    pub fn keep_eigenvalues(mut self, keep: bool) -> Self {
        self.keep_eigenvalues = keep;
        self
    }

    pub fn grid(&self) -> &SearchGrid {
        &self.grid
    }

    pub fn aspect_ratio(&self) -> f64 {
        self.n as f64 / self.t as f64
    }

    /// Model profile for each grid `b`, or the error that prevented computing it.
    pub fn profiles(&self) -> impl Iterator<Item = (f64, std::result::Result<&ModelProfile, &Error>)> {
        self.grid
            .b_values
            .iter()
            .zip(&self.profiles)
            .map(|(b, p)| (*b, p.as_ref().map(|a| a.as_ref())))
    }

    /// Shared bins for one window: uniform over `[0, 1.05·λ_max]`.
    pub fn window_edges(&self, spectrum: &WindowSpectrum) -> Result<Vec<f64>> {
        let top = spectrum.largest();
        if !(top > 0.0) {
            return Err(Error::InvalidParameter("window has no positive eigenvalue".into()));
        }
        uniform_edges(0.0, 1.05 * top, self.grid.bins)
    }

    pub fn estimate_window(&self, window: &StandardizedWindow) -> Result<EstimationResult> {
        if window.n() != self.n || window.t() != self.t {
            return Err(Error::DimensionMismatch {
                expected: self.n * self.t,
                found: window.n() * window.t(),
            });
        }
        self.estimate_spectrum(&WindowSpectrum::from_window(window))
    }

    pub fn estimate_spectrum(&self, spectrum: &WindowSpectrum) -> Result<EstimationResult> {
        let edges = self.window_edges(spectrum)?;
        let models: Vec<Option<SpectralDensity>> = self
            .profiles
            .iter()
            .map(|p| p.as_ref().ok().and_then(|p| p.bin(&edges).ok()))
            .collect();
        let penalty = self.grid.penalty_per_factor(self.n);
        let max_p = self.n.min(self.t);

        let mut values = Vec::with_capacity(self.grid.p_values.len());
        let mut best: Option<(f64, f64, usize, f64)> = None;
        for &p in &self.grid.p_values {
            let empirical = if p < self.n && p <= max_p {
                spectrum.residual_density(p, edges.clone()).ok().map(|(d, _)| d)
            } else {
                None
            };
            let row: Vec<Option<f64>> = self
                .grid
                .b_values
                .iter()
                .zip(&models)
                .map(|(_, model)| match (&empirical, model) {
                    (Some(e), Some(m)) => js_masses(e.masses(), m.masses(), &self.grid.zero_policy).ok(),
                    _ => None,
                })
                .collect();
            for (&b, d) in self.grid.b_values.iter().zip(&row) {
                if let Some(d) = *d {
                    let objective = d + penalty * p as f64;
                    let better = match best {
                        None => true,
                        Some((o, _, bp, bb)) => objective < o || (objective == o && (p < bp || (p == bp && b < bb))),
                    };
                    if better {
                        best = Some((objective, d, p, b));
                    }
                }
            }
            values.push(row);
        }
        let (objective, divergence, p_hat, b_hat) = best.ok_or(Error::GridExhausted {
            end_index: spectrum.end_index,
        })?;
        Ok(EstimationResult {
            end_index: spectrum.end_index,
            p_hat,
            b_hat,
            divergence,
            objective,
            divergence_surface: self.grid.keep_surface.then(|| DivergenceSurface {
                p_values: self.grid.p_values.clone(),
                b_values: self.grid.b_values.clone(),
                values,
            }),
        })
    }

    fn window_outcome(&self, source: &RawDataSource, spec: &WindowSpec, end_index: usize) -> TimelineEntry {
        let spectrum = cut_window(source, spec, end_index)
            .and_then(|w| standardize_with(&w, &self.standardize))
            .map(|w| WindowSpectrum::from_window(&w));
        match spectrum {
            Ok(s) => TimelineEntry {
                end_index,
                outcome: self.estimate_spectrum(&s).map_err(|e| e.to_string()),
                eigenvalues: self.keep_eigenvalues.then(|| s.eigenvalues.clone()),
            },
            Err(e) => TimelineEntry {
                end_index,
                outcome: Err(e.to_string()),
                eigenvalues: None,
            },
        }
    }

    /// One estimate per window end index `T, T + stride, …`. Per-window failures are kept in
    /// the timeline; only an unusable source/spec combination is an error.
    pub fn sweep(&self, source: &RawDataSource, spec: &WindowSpec, exec: Execution) -> Result<Timeline> {
        if spec.n != source.n() {
            return Err(Error::DimensionMismatch {
                expected: spec.n,
                found: source.n(),
            });
        }
        if spec.n != self.n || spec.length != self.t {
            return Err(Error::DimensionMismatch {
                expected: self.n * self.t,
                found: spec.n * spec.length,
            });
        }
        if source.t() < spec.length {
            return Err(Error::WindowOutOfRange {
                end_index: source.t(),
                length: spec.length,
                samples: source.t(),
            });
        }
        let ends = spec.end_indices(source.t());
        let entries = exec.map(&ends, |&e| self.window_outcome(source, spec, e));
        Ok(Timeline {
            stride: spec.stride,
            entries,
            annotations: Vec::new(),
        })
    }
}

/// Single-window estimate with a freshly built estimator. Prefer [`Estimator`] when processing
/// many windows so model profiles are computed once.
pub fn estimate_window(window: &StandardizedWindow, grid: &SearchGrid) -> Result<EstimationResult> {
    Estimator::new(grid.clone(), window.n(), window.t(), Execution::Sequential)?.estimate_window(window)
}

pub fn sweep(source: &RawDataSource, spec: &WindowSpec, grid: &SearchGrid) -> Result<Timeline> {
    Estimator::for_spec(grid.clone(), spec, Execution::Parallel)?.sweep(source, spec, Execution::Parallel)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub end_index: usize,
    pub outcome: std::result::Result<EstimationResult, String>,
    /// Descending eigenvalues of the standardized window covariance, when requested.
    pub eigenvalues: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub stride: usize,
    pub entries: Vec<TimelineEntry>,
    pub annotations: Vec<ChangeFlag>,
}

impl Timeline {
    pub fn end_indices(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.end_index).collect()
    }

    pub fn results(&self) -> impl Iterator<Item = &EstimationResult> {
        self.entries.iter().filter_map(|e| e.outcome.as_ref().ok())
    }

    pub fn failures(&self) -> impl Iterator<Item = (usize, &str)> {
        self.entries
            .iter()
            .filter_map(|e| e.outcome.as_ref().err().map(|m| (e.end_index, m.as_str())))
    }

    /// `p̂` per window, NaN where the window failed.
    pub fn p_series(&self) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| e.outcome.as_ref().map(|r| r.p_hat as f64).unwrap_or(f64::NAN))
            .collect()
    }

    pub fn b_series(&self) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| e.outcome.as_ref().map(|r| r.b_hat).unwrap_or(f64::NAN))
            .collect()
    }

    /// Runs [`detect_level_shifts`] on this timeline's `p̂` series and stores the result.
    pub fn annotate(&mut self, threshold: f64, hold: usize) {
        self.annotations = detect_level_shifts(&self.end_indices(), &self.p_series(), threshold, hold);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageEntry {
    pub end_index: usize,
    pub p_mean: f64,
    pub b_mean: f64,
    pub divergence_mean: f64,
    /// Runs that produced an estimate for this window.
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAverage {
    pub run_count: usize,
    pub entries: Vec<AverageEntry>,
    pub annotations: Vec<ChangeFlag>,
}

impl RunAverage {
    pub fn end_indices(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.end_index).collect()
    }

    pub fn p_series(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.p_mean).collect()
    }

    pub fn b_series(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.b_mean).collect()
    }
}

/// Mean `p̂`, `b̂` and divergence per end index over runs that succeeded at that window.
pub fn average_runs(timelines: &[Timeline]) -> Result<RunAverage> {
    let first = timelines
        .first()
        .ok_or_else(|| Error::InvalidParameter("no timelines to average".into()))?;
    let ends = first.end_indices();
    if timelines.iter().any(|t| t.end_indices() != ends) {
        return Err(Error::IndexMismatch);
    }
    let entries = ends
        .iter()
        .enumerate()
        .map(|(i, &end_index)| {
            let ok: Vec<&EstimationResult> = timelines
                .iter()
                .filter_map(|t| t.entries[i].outcome.as_ref().ok())
                .collect();
            let k = ok.len() as f64;
            let mean = |f: &dyn Fn(&EstimationResult) -> f64| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|r| f(r)).sum::<f64>() / k
                }
            };
            AverageEntry {
                end_index,
                p_mean: mean(&|r| r.p_hat as f64),
                b_mean: mean(&|r| r.b_hat),
                divergence_mean: mean(&|r| r.divergence),
                runs: ok.len(),
            }
        })
        .collect();
    Ok(RunAverage {
        run_count: timelines.len(),
        entries,
        annotations: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftDirection {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeFlag {
    pub end_index: usize,
    pub direction: ShiftDirection,
    /// Median over the `hold` windows before the flag.
    pub reference: f64,
    /// Median over the `hold` windows starting at the flag.
    pub level: f64,
    /// `level − reference`; for a factor-count series this is the change in event count.
    pub delta: f64,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn detect_changes(avg: &RunAverage, threshold: f64, hold: usize) -> Vec<ChangeFlag> {
    detect_level_shifts(&avg.end_indices(), &avg.p_series(), threshold, hold)
}

/// Flags window `i` when every value in `i..i+hold` differs from the median of the `hold`
/// values before `i` by at least `threshold`, all with the same sign. After a flag the scan
/// resumes `hold` windows later, so the new level becomes the next reference.
pub fn detect_level_shifts(end_indices: &[usize], values: &[f64], threshold: f64, hold: usize) -> Vec<ChangeFlag> {
    let hold = hold.max(1);
    let n = values.len().min(end_indices.len());
    let mut flags = Vec::new();
    let mut i = hold;
    while i + hold <= n {
        let reference = median(&values[i - hold..i]);
        let ahead = &values[i..i + hold];
        let up = ahead.iter().all(|v| v - reference >= threshold);
        let down = ahead.iter().all(|v| reference - v >= threshold);
        if up || down {
            let level = median(ahead);
            flags.push(ChangeFlag {
                end_index: end_indices[i],
                direction: if up { ShiftDirection::Up } else { ShiftDirection::Down },
                reference,
                level,
                delta: level - reference,
            });
            i += hold;
        } else {
            i += 1;
        }
    }
    flags
}
