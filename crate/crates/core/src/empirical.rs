//! Factor decomposition of a standardized window and the residual eigenvalue spectrum.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::StandardizedWindow;
use crate::density::{ClampCounts, SpectralDensity};
use crate::error::{Error, Result};

/// `X = L·F + U` with `p` orthonormal factor rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorDecomposition {
    pub p: usize,
    /// p×T, orthonormal rows.
    pub factors: DMatrix<f64>,
    /// N×p.
    pub loadings: DMatrix<f64>,
    /// N×T.
    pub residual: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualCovariance {
    pub matrix: DMatrix<f64>,
    pub p: usize,
}

impl ResidualCovariance {
    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.matrix.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

/// Eigenpairs sorted by descending eigenvalue; ties keep solver order.
fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

/// A unit vector orthogonal to the first `rows` rows of `f`, for directions the data does not span.
fn orthogonal_complement_vector(f: &DMatrix<f64>, rows: usize) -> DVector<f64> {
    let t = f.ncols();
    for k in 0..t {
        let mut v = DVector::zeros(t);
        v[k] = 1.0;
        for r in 0..rows {
            let row = f.row(r).transpose();
            let d = row.dot(&v);
            v -= row * d;
        }
        let norm = v.norm();
        if norm > 0.5 {
            return v / norm;
        }
    }
    unreachable!("fewer than T rows always leave a complement")
}

/// Position of the first entry with the largest magnitude.
fn argmax_abs<'a>(values: impl Iterator<Item = &'a f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v.abs() > best.1 {
            best = (i, v.abs());
        }
    }
    best.0
}

pub fn decompose(window: &StandardizedWindow, p: usize) -> Result<FactorDecomposition> {
    let x = &window.values;
    let (n, t) = x.shape();
    if p > n.min(t) {
        return Err(Error::InvalidFactorCount { p, n, t });
    }
    let mut factors = DMatrix::zeros(p, t);
    if p > 0 {
        if n <= t {
            let (values, u) = sorted_eigen(x * x.transpose());
            let scale = values[0].abs().max(1.0);
            for (j, &value) in values.iter().enumerate().take(p) {
                let f = if value > 1e-14 * scale {
                    x.tr_mul(&u.column(j)) / value.sqrt()
                } else {
                    orthogonal_complement_vector(&factors, j)
                };
                factors.set_row(j, &f.transpose());
            }
        } else {
            let (_, v) = sorted_eigen(x.tr_mul(x));
            for j in 0..p {
                factors.set_row(j, &v.column(j).transpose());
            }
        }
        for j in 0..p {
            let mut row = factors.row_mut(j);
            if row[argmax_abs(row.iter())] < 0.0 {
                row.neg_mut();
            }
        }
    }
    let loadings = x * factors.transpose();
    let residual = x - &loadings * &factors;
    Ok(FactorDecomposition {
        p,
        factors,
        loadings,
        residual,
    })
}

pub fn residual_covariance(d: &FactorDecomposition, t: usize) -> Result<ResidualCovariance> {
    if d.residual.ncols() != t {
        return Err(Error::DimensionMismatch {
            expected: t,
            found: d.residual.ncols(),
        });
    }
    let c = &d.residual * d.residual.transpose() / t as f64;
    let matrix = (&c + c.transpose()) * 0.5;
    Ok(ResidualCovariance { matrix, p: d.p })
}

/// Histogram of all N eigenvalues of `c`.
pub fn empirical_density(c: &ResidualCovariance, bin_edges: Vec<f64>) -> Result<(SpectralDensity, ClampCounts)> {
    SpectralDensity::from_samples(&c.eigenvalues(), bin_edges)
}

/// Eigenvalues of `X·Xᵀ/T` for one window, from which every p-level residual spectrum follows.
///
/// Removing the top `p` principal components leaves the remaining `N − p` eigenvalues untouched
/// and adds `p` exact zeros, so a single eigendecomposition serves all factor counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSpectrum {
    pub end_index: usize,
    /// Descending.
    pub eigenvalues: Vec<f64>,
}

impl WindowSpectrum {
    pub fn from_window(window: &StandardizedWindow) -> Self {
        let x = &window.values;
        let c = x * x.transpose() / x.ncols() as f64;
        let c = (&c + c.transpose()) * 0.5;
        let mut eigenvalues: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        Self {
            end_index: window.end_index,
            eigenvalues,
        }
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn largest(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// The `N − p` eigenvalues of the p-level residual covariance that are not structural zeros.
    pub fn residual_eigenvalues(&self, p: usize) -> &[f64] {
        &self.eigenvalues[p.min(self.eigenvalues.len())..]
    }

    /// Histogram of the nonzero part of the p-level residual spectrum.
    pub fn residual_density(&self, p: usize, bin_edges: Vec<f64>) -> Result<(SpectralDensity, ClampCounts)> {
        if p >= self.n() {
            return Err(Error::InvalidFactorCount {
                p,
                n: self.n(),
                t: usize::MAX,
            });
        }
        SpectralDensity::from_samples(self.residual_eigenvalues(p), bin_edges)
    }
}
