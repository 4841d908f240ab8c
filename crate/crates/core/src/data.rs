//! Raw measurement matrices, moving windows and row standardization.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Measurements with one row per variable and one column per sample, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataSource {
    values: DMatrix<f64>,
    /// Time units per column. Informational only.
    pub sample_period: f64,
}

impl RawDataSource {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() < 2 || values.ncols() < 2 {
            return Err(Error::InvalidParameter(format!(
                "a data source needs at least 2 rows and 2 samples, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            // nalgebra storage is column-major
            return Err(Error::Parse {
                row: pos % values.nrows() + 1,
                column: pos / values.nrows() + 1,
                message: "non-finite value".into(),
            });
        }
        Ok(Self {
            values,
            sample_period: 1.0,
        })
    }

    pub fn with_sample_period(mut self, period: f64) -> Self {
        self.sample_period = period;
        self
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Number of measured variables.
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Number of samples.
    pub fn t(&self) -> usize {
        self.values.ncols()
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub n: usize,
    pub length: usize,
    pub stride: usize,
}

impl WindowSpec {
    pub fn new(n: usize, length: usize, stride: usize) -> Result<Self> {
        if n < 1 || length < 2 || stride < 1 {
            return Err(Error::InvalidParameter(format!(
                "window spec needs N >= 1, T >= 2, stride >= 1 (got N={n}, T={length}, stride={stride})"
            )));
        }
        Ok(Self { n, length, stride })
    }

    /// Aspect ratio N/T.
    pub fn aspect_ratio(&self) -> f64 {
        self.n as f64 / self.length as f64
    }

    /// End indices (1-based, inclusive) of every window that fits in `samples` columns.
    pub fn end_indices(&self, samples: usize) -> Vec<usize> {
        if samples < self.length {
            return Vec::new();
        }
        (self.length..=samples).step_by(self.stride).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawWindow {
    pub values: DMatrix<f64>,
    /// 1-based index of the last sample in the window.
    pub end_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedWindow {
    pub values: DMatrix<f64>,
    pub end_index: usize,
}

impl StandardizedWindow {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn t(&self) -> usize {
        self.values.ncols()
    }
}

pub fn cut_window(source: &RawDataSource, spec: &WindowSpec, end_index: usize) -> Result<RawWindow> {
    if spec.n != source.n() {
        return Err(Error::DimensionMismatch {
            expected: spec.n,
            found: source.n(),
        });
    }
    if end_index < spec.length || end_index > source.t() {
        return Err(Error::WindowOutOfRange {
            end_index,
            length: spec.length,
            samples: source.t(),
        });
    }
    let start = end_index - spec.length;
    Ok(RawWindow {
        values: source.values.columns(start, spec.length).into_owned(),
        end_index,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardizeOptions {
    /// Rows whose population standard deviation is at or below this are treated as constant.
    pub sigma_min: f64,
    /// When set, constant rows receive uniform jitter of magnitude 1e-9 drawn from this seed
    /// (mixed with the window end index) instead of raising `DegenerateRow`.
    pub jitter_seed: Option<u64>,
}

impl Default for StandardizeOptions {
    fn default() -> Self {
        Self {
            sigma_min: 1e-12,
            jitter_seed: None,
        }
    }
}

const JITTER: f64 = 1e-9;

fn mean_std(row: impl Iterator<Item = f64> + Clone, len: usize) -> (f64, f64) {
    let mean = row.clone().sum::<f64>() / len as f64;
    let var = row.map(|v| (v - mean) * (v - mean)).sum::<f64>() / len as f64;
    (mean, var.sqrt())
}

pub fn standardize(window: &RawWindow) -> Result<StandardizedWindow> {
    standardize_with(window, &StandardizeOptions::default())
}

/// Row z-score with population variance.
pub fn standardize_with(window: &RawWindow, options: &StandardizeOptions) -> Result<StandardizedWindow> {
    let (n, t) = window.values.shape();
    let mut out = window.values.clone();
    let mut rng = options
        .jitter_seed
        .map(|s| ChaCha8Rng::seed_from_u64(s ^ (window.end_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
    for i in 0..n {
        let (mut mean, mut std) = mean_std(out.row(i).iter().copied(), t);
        if std <= options.sigma_min {
            let Some(rng) = rng.as_mut() else {
                return Err(Error::DegenerateRow(i));
            };
            // a constant row centres to zero, leaving only the jitter
            for j in 0..t {
                out[(i, j)] = rng.random_range(-JITTER..JITTER);
            }
            (mean, std) = mean_std(out.row(i).iter().copied(), t);
            if std == 0.0 {
                return Err(Error::DegenerateRow(i));
            }
        }
        for j in 0..t {
            out[(i, j)] = (out[(i, j)] - mean) / std;
        }
    }
    Ok(StandardizedWindow {
        values: out,
        end_index: window.end_index,
    })
}
