//! Binned probability densities over an eigenvalue axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `K + 1` strictly increasing edges with `K` nonnegative masses summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensity {
    bin_edges: Vec<f64>,
    masses: Vec<f64>,
}

/// Samples that fell outside the edge range and were folded into an end bin.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClampCounts {
    pub below: usize,
    pub above: usize,
}

impl ClampCounts {
    pub fn total(&self) -> usize {
        self.below + self.above
    }
}

pub fn validate_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 3 {
        return Err(Error::EmptyBins(edges.len().saturating_sub(1)));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidEdges);
    }
    Ok(())
}

/// `k` equal-width bins over `[lo, hi]`.
pub fn uniform_edges(lo: f64, hi: f64, k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::EmptyBins(k));
    }
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidEdges);
    }
    let w = (hi - lo) / k as f64;
    let mut edges: Vec<f64> = (0..=k).map(|i| lo + w * i as f64).collect();
    edges[k] = hi;
    Ok(edges)
}

/// Index of the bin containing `x`, clamping to the end bins.
fn bin_index(edges: &[f64], x: f64) -> usize {
    let k = edges.len() - 1;
    // first edge strictly greater than x, minus one
    edges.partition_point(|&e| e <= x).saturating_sub(1).min(k - 1)
}

impl SpectralDensity {
    /// Builds a density from masses that already sum to one (within 1e-9).
    pub fn new(bin_edges: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        validate_edges(&bin_edges)?;
        if masses.len() + 1 != bin_edges.len() {
            return Err(Error::DimensionMismatch {
                expected: bin_edges.len() - 1,
                found: masses.len(),
            });
        }
        if masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::InvalidParameter("masses must be finite and nonnegative".into()));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("masses sum to {total}, expected 1")));
        }
        Ok(Self { bin_edges, masses })
    }

    /// Normalizes nonnegative weights to unit mass.
    pub fn from_weights(bin_edges: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidParameter(
                "weights must have positive finite total".into(),
            ));
        }
        let masses = weights.into_iter().map(|w| w / total).collect();
        Self::new(bin_edges, masses)
    }

    /// Normalized histogram of `values`. Out-of-range values land in the first or last bin.
    pub fn from_samples(values: &[f64], bin_edges: Vec<f64>) -> Result<(Self, ClampCounts)> {
        validate_edges(&bin_edges)?;
        if values.is_empty() {
            return Err(Error::InvalidParameter("cannot bin an empty sample".into()));
        }
        let k = bin_edges.len() - 1;
        let lo = bin_edges[0];
        let hi = bin_edges[k];
        let mut counts = vec![0usize; k];
        let mut clamped = ClampCounts::default();
        for &v in values {
            if v < lo {
                clamped.below += 1;
            } else if v > hi {
                clamped.above += 1;
            }
            counts[bin_index(&bin_edges, v)] += 1;
        }
        let n = values.len() as f64;
        let masses = counts.into_iter().map(|c| c as f64 / n).collect();
        Ok((Self { bin_edges, masses }, clamped))
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn bins(&self) -> usize {
        self.masses.len()
    }

    /// Bin centers paired with mass per unit length.
    pub fn heights(&self) -> Vec<(f64, f64)> {
        self.bin_edges
            .windows(2)
            .zip(&self.masses)
            .map(|(w, m)| ((w[0] + w[1]) / 2.0, m / (w[1] - w[0])))
            .collect()
    }

    /// Edges agree to within 1e-12 relative to the span.
    pub fn same_edges(&self, other: &SpectralDensity) -> bool {
        if self.bin_edges.len() != other.bin_edges.len() {
            return false;
        }
        let span = self.bin_edges[self.bin_edges.len() - 1] - self.bin_edges[0];
        let tol = 1e-12 * span.abs().max(1.0);
        self.bin_edges
            .iter()
            .zip(&other.bin_edges)
            .all(|(a, b)| (a - b).abs() <= tol)
    }
}
