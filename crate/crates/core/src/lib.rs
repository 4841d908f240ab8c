//! Moving-window estimation of the number of latent factors and the AR(1) noise coefficient in
//! multichannel measurements, by matching residual eigenvalue spectra against a free-probability
//! model density.
//!
//! The pipeline for one window is: standardize rows ([`data`]), remove the top `p` principal
//! components and take the residual eigenvalue histogram ([`empirical`]), compare it with the
//! model density for AR coefficient `b` ([`model`]) using the Jensen-Shannon divergence
//! ([`divergence`]), and pick the best `(p, b)` ([`estimator`]).

// `!(x > y)` comparisons below deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod datagen;
pub mod density;
pub mod divergence;
pub mod empirical;
pub mod error;
pub mod estimator;
pub mod exec;
pub mod io;
pub mod model;

pub use data::{
    cut_window, standardize, standardize_with, RawDataSource, RawWindow, StandardizeOptions, StandardizedWindow,
    WindowSpec,
};
pub use datagen::{
    brute_force_spectrum, generate_ar1, synthesize_case, synthesize_planted, Ar1Spec, CasePreset, EventRouting,
    EventSchedule, FactorSeries, Innovation, LoadingShape, PlantedFactorSpec, ScheduledEvent, SpikeStrength,
    SyntheticConfig,
};
pub use density::{uniform_edges, ClampCounts, SpectralDensity};
pub use divergence::{js_divergence, kl_divergence, ZeroHandlingPolicy};
pub use empirical::{
    decompose, empirical_density, residual_covariance, FactorDecomposition, ResidualCovariance, WindowSpectrum,
};
pub use error::{Error, Result};
pub use estimator::{
    average_runs, detect_changes, estimate_window, sweep, ChangeFlag, EstimationResult, Estimator, RunAverage,
    SearchGrid, ShiftDirection, Timeline,
};
pub use exec::Execution;
pub use model::{model_density, ModelProfile, NoiseModelParams, ProfileOptions, B_MAX};
