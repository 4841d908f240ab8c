//! Synthetic sources: AR(1) noise, scheduled step events, planted factors, and a Monte-Carlo
//! spectrum used to cross-check the model density.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::data::RawDataSource;
use crate::density::SpectralDensity;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{ModelProfile, NoiseModelParams, ProfileOptions};

pub const DEFAULT_BURN_IN: usize = 200;

/// Independent seed for item `index` of a batch drawn from `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.next_u64()
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Innovation {
    Gaussian,
    /// Student-t scaled to the same variance; requires `dof > 2`.
    StudentT {
        dof: f64,
    },
}

/// Stationary AR(1) rows `u_t = b·u_{t−1} + ξ_t` with `var(ξ) = 1 − b²`, so each row has unit
/// marginal variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar1Spec {
    pub b: f64,
    pub innovation: Innovation,
    pub seed: u64,
}

impl Ar1Spec {
    pub fn gaussian(b: f64, seed: u64) -> Self {
        Self {
            b,
            innovation: Innovation::Gaussian,
            seed,
        }
    }
}

/// Rows are independent streams of `spec.seed`, so row `i` does not depend on `n`.
pub fn generate_ar1(spec: &Ar1Spec, n: usize, t: usize, burn_in: usize) -> Result<DMatrix<f64>> {
    let b = spec.b;
    if !(b.abs() < 1.0) {
        return Err(Error::InvalidCoefficient(b));
    }
    let sd = (1.0 - b * b).sqrt();
    let student = match spec.innovation {
        Innovation::Gaussian => None,
        Innovation::StudentT { dof } => {
            if !(dof > 2.0) {
                return Err(Error::InvalidParameter(format!("Student-t dof {dof} must exceed 2")));
            }
            let dist = StudentT::new(dof).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            Some((dist, ((dof - 2.0) / dof).sqrt()))
        }
    };
    let mut out = DMatrix::zeros(n, t);
    for i in 0..n {
        let mut rng = stream(spec.seed, i as u64);
        let draw = |rng: &mut ChaCha8Rng| -> f64 {
            match &student {
                None => rng.sample::<f64, _>(StandardNormal),
                Some((dist, scale)) => dist.sample(rng) * scale,
            }
        };
        let mut x: f64 = rng.sample(StandardNormal);
        for _ in 0..burn_in {
            x = b * x + sd * draw(&mut rng);
        }
        for j in 0..t {
            x = b * x + sd * draw(&mut rng);
            out[(i, j)] = x;
        }
    }
    Ok(out)
}

/// A step of `amplitude` on `channel` over samples `onset..offset` (1-based; `offset` exclusive,
/// `None` runs to the end).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledEvent {
    pub channel: usize,
    pub onset: usize,
    pub offset: Option<usize>,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventSchedule {
    pub events: Vec<ScheduledEvent>,
}

impl EventSchedule {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn validate(&self, n: usize, t: usize) -> Result<()> {
        for e in &self.events {
            let bad_offset = e.offset.is_some_and(|o| o <= e.onset || o > t + 1);
            if e.channel < 1 || e.channel > n || e.onset < 1 || e.onset > t || bad_offset || !e.amplitude.is_finite() {
                return Err(Error::ScheduleOutOfRange {
                    channel: e.channel,
                    onset: e.onset,
                    offset: e.offset,
                    n,
                    t,
                });
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// The three event scenarios plus an event-free one, on 118 channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CasePreset {
    Null,
    Case1,
    Case2,
    Case3,
}

impl CasePreset {
    pub const CHANNELS: usize = 118;

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "null" => Some(Self::Null),
            "case1" => Some(Self::Case1),
            "case2" => Some(Self::Case2),
            "case3" => Some(Self::Case3),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Null => "null",
            Self::Case1 => "case1",
            Self::Case2 => "case2",
            Self::Case3 => "case3",
        }
    }

    pub fn samples(&self) -> usize {
        match self {
            Self::Null | Self::Case1 => 899,
            Self::Case2 => 1899,
            Self::Case3 => 2500,
        }
    }

    pub fn schedule(&self) -> EventSchedule {
        let ev = |channel, onset, offset, amplitude| ScheduledEvent {
            channel,
            onset,
            offset,
            amplitude,
        };
        let events = match self {
            Self::Null => vec![],
            Self::Case1 => vec![ev(52, 500, None, 100.0)],
            Self::Case2 => vec![ev(52, 1300, None, 100.0), ev(117, 1400, Some(1800), 150.0)],
            Self::Case3 => vec![
                ev(52, 2250, None, 100.0),
                ev(117, 2300, None, 150.0),
                ev(75, 2400, None, 400.0),
            ],
        };
        EventSchedule { events }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LoadingShape {
    /// Gaussian random entries, normalized.
    Dense,
    /// Gaussian bump of the given width (in channels) centred on the event channel.
    Localized { width: f64 },
}

/// Spike size expressed as a multiple of the noise bulk's upper edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeStrength {
    pub multiple: f64,
    pub bulk_edge: f64,
}

impl SpikeStrength {
    /// Uses the model density's upper edge for AR coefficient `b` and aspect ratio `c`.
    pub fn relative_to_model(multiple: f64, b: f64, c: f64) -> Result<Self> {
        Ok(Self {
            multiple,
            bulk_edge: bulk_edge(b, c)?,
        })
    }

    /// Eigenvalue the spike should reach.
    pub fn target(&self) -> f64 {
        self.multiple * self.bulk_edge
    }
}

pub fn bulk_edge(b: f64, c: f64) -> Result<f64> {
    Ok(ModelProfile::compute(&NoiseModelParams::new(b, c)?, &ProfileOptions::default())?.upper_edge())
}

/// How scheduled events reach the measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventRouting {
    /// The amplitude is added to the scheduled channel only.
    Direct,
    /// Each event drives a unit-norm loading vector across all channels.
    Loading {
        shape: LoadingShape,
        /// When set, the step height is chosen so a window straddling the onset evenly sees a
        /// spike of the requested size; the event amplitude then only supplies the sign.
        strength: Option<SpikeStrength>,
        seed: u64,
    },
}

fn unit_loading(shape: &LoadingShape, n: usize, center: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let v = match shape {
        LoadingShape::Dense => DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal)),
        LoadingShape::Localized { width } => {
            let w = width.max(1e-3);
            DVector::from_fn(n, |i, _| {
                let d = i as f64 - center as f64;
                (-(d * d) / (2.0 * w * w)).exp()
            })
        }
    };
    let norm = v.norm();
    v / norm
}

/// The deterministic event contribution, `n×t`.
pub fn event_signal(schedule: &EventSchedule, routing: &EventRouting, n: usize, t: usize) -> Result<DMatrix<f64>> {
    schedule.validate(n, t)?;
    let mut out = DMatrix::zeros(n, t);
    for (k, e) in schedule.events.iter().enumerate() {
        let start = e.onset - 1;
        let end = e.offset.map(|o| o - 1).unwrap_or(t);
        match routing {
            EventRouting::Direct => {
                for j in start..end {
                    out[(e.channel - 1, j)] += e.amplitude;
                }
            }
            EventRouting::Loading { shape, strength, seed } => {
                let mut rng = stream(*seed, k as u64);
                let loading = unit_loading(shape, n, e.channel - 1, &mut rng);
                let height = match strength {
                    Some(s) => 2.0 * s.target().sqrt() * e.amplitude.signum(),
                    None => e.amplitude,
                };
                for j in start..end {
                    for i in 0..n {
                        out[(i, j)] += height * loading[i];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Shape and noise settings shared by the synthetic generators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    pub t: usize,
    pub noise: Ar1Spec,
    /// Per-channel constants are drawn uniformly from this range.
    pub baseline: (f64, f64),
    pub burn_in: usize,
}

impl SyntheticConfig {
    pub fn new(n: usize, t: usize, noise: Ar1Spec) -> Self {
        Self {
            n,
            t,
            noise,
            baseline: (20.0, 200.0),
            burn_in: DEFAULT_BURN_IN,
        }
    }

    /// Baseline constants plus AR(1) noise.
    pub fn background(&self) -> Result<DMatrix<f64>> {
        let (lo, hi) = self.baseline;
        if !(lo <= hi) {
            return Err(Error::InvalidParameter(format!("baseline range [{lo}, {hi}] is empty")));
        }
        let mut x = generate_ar1(&self.noise, self.n, self.t, self.burn_in)?;
        let mut rng = stream(self.noise.seed, u64::MAX);
        for i in 0..self.n {
            let c = if hi > lo { rng.random_range(lo..hi) } else { lo };
            x.row_mut(i).add_scalar_mut(c);
        }
        Ok(x)
    }
}

pub fn synthesize_case(
    schedule: &EventSchedule,
    routing: &EventRouting,
    config: &SyntheticConfig,
) -> Result<RawDataSource> {
    let signal = event_signal(schedule, routing, config.n, config.t)?;
    RawDataSource::new(config.background()? + signal)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FactorSeries {
    /// Zero before `onset` (1-based), one from it on; scaled so an even split gives the target
    /// spike.
    Step { onset: usize },
    /// Unit-variance AR(1) path; `coefficient = 0` is white noise.
    Ar1 { coefficient: f64 },
}

/// `k` factors with orthonormalized loadings, each producing a spike of the given strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedFactorSpec {
    pub k: usize,
    pub shape: LoadingShape,
    pub series: FactorSeries,
    pub strength: SpikeStrength,
    pub seed: u64,
}

impl PlantedFactorSpec {
    /// `n×k` loadings with orthonormal columns.
    pub fn loadings(&self, n: usize) -> Result<DMatrix<f64>> {
        if self.k > n {
            return Err(Error::InvalidParameter(format!(
                "{} factors exceed {n} channels",
                self.k
            )));
        }
        let mut rng = stream(self.seed, 0);
        let mut l = DMatrix::zeros(n, self.k);
        for j in 0..self.k {
            let center = (j + 1) * n / (self.k + 1);
            let mut v = unit_loading(&self.shape, n, center, &mut rng);
            for prev in 0..j {
                let p = l.column(prev).into_owned();
                v -= &p * p.dot(&v);
            }
            let norm = v.norm();
            if norm < 1e-8 {
                return Err(Error::InvalidParameter("loading vectors are linearly dependent".into()));
            }
            l.set_column(j, &(v / norm));
        }
        Ok(l)
    }

    /// `L·F`, `n×t`.
    pub fn signal(&self, n: usize, t: usize) -> Result<DMatrix<f64>> {
        let l = self.loadings(n)?;
        let target = self.strength.target();
        let mut f = DMatrix::zeros(self.k, t);
        for j in 0..self.k {
            match self.series {
                FactorSeries::Step { onset } => {
                    if onset < 1 || onset > t {
                        return Err(Error::InvalidParameter(format!("factor onset {onset} outside 1..={t}")));
                    }
                    let h = 2.0 * target.sqrt();
                    for s in onset - 1..t {
                        f[(j, s)] = h;
                    }
                }
                FactorSeries::Ar1 { coefficient } => {
                    let spec = Ar1Spec::gaussian(coefficient, derive_seed(self.seed, 1 + j as u64));
                    let path = generate_ar1(&spec, 1, t, DEFAULT_BURN_IN)?;
                    f.set_row(j, &(path.row(0) * target.sqrt()));
                }
            }
        }
        Ok(l * f)
    }
}

pub fn synthesize_planted(spec: &PlantedFactorSpec, config: &SyntheticConfig) -> Result<RawDataSource> {
    let signal = spec.signal(config.n, config.t)?;
    RawDataSource::new(config.background()? + signal)
}

/// Eigenvalues of `UUᵀ/T` for `trials` independent AR(1) matrices, concatenated in trial order.
pub fn pooled_eigenvalues(b: f64, n: usize, t: usize, trials: usize, seed: u64, exec: Execution) -> Result<Vec<f64>> {
    if trials < 1 {
        return Err(Error::InvalidParameter("at least one trial is required".into()));
    }
    let per_trial = exec.map_range(0..trials, |k| -> Result<Vec<f64>> {
        let u = generate_ar1(
            &Ar1Spec::gaussian(b, derive_seed(seed, k as u64)),
            n,
            t,
            DEFAULT_BURN_IN,
        )?;
        let c = &u * u.transpose() / t as f64;
        Ok(c.symmetric_eigenvalues().iter().copied().collect())
    });
    let mut all = Vec::with_capacity(n * trials);
    for ev in per_trial {
        all.extend(ev?);
    }
    Ok(all)
}

pub fn brute_force_spectrum(
    b: f64,
    n: usize,
    t: usize,
    trials: usize,
    seed: u64,
    bin_edges: Vec<f64>,
    exec: Execution,
) -> Result<SpectralDensity> {
    let ev = pooled_eigenvalues(b, n, t, trials, seed, exec)?;
    Ok(SpectralDensity::from_samples(&ev, bin_edges)?.0)
}
