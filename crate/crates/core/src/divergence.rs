//! Kullback-Leibler and Jensen-Shannon divergences between binned densities (natural log).

use serde::{Deserialize, Serialize};

use crate::density::SpectralDensity;
use crate::error::{Error, Result};

/// Zero bins receive `epsilon`; nonzero bins are scaled by `1 − num_zeros·epsilon` so the total
/// stays one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroHandlingPolicy {
    pub epsilon: f64,
}

impl Default for ZeroHandlingPolicy {
    fn default() -> Self {
        Self { epsilon: 1e-12 }
    }
}

impl ZeroHandlingPolicy {
    pub fn alpha(&self, zeros: usize) -> f64 {
        1.0 - zeros as f64 * self.epsilon
    }

    pub fn smooth(&self, masses: &[f64]) -> Result<Vec<f64>> {
        let k = masses.len();
        if !(self.epsilon > 0.0 && self.epsilon < 1.0 / k as f64) {
            return Err(Error::InvalidParameter(format!(
                "zero-handling epsilon {} must lie in (0, 1/{k})",
                self.epsilon
            )));
        }
        let zeros = masses.iter().filter(|&&m| m == 0.0).count();
        let alpha = self.alpha(zeros);
        Ok(masses
            .iter()
            .map(|&m| if m == 0.0 { self.epsilon } else { alpha * m })
            .collect())
    }
}

fn kl_smoothed(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(&pi, &qi)| pi * (pi / qi).ln()).sum()
}

pub fn kl_divergence(p: &SpectralDensity, q: &SpectralDensity, policy: &ZeroHandlingPolicy) -> Result<f64> {
    if !p.same_edges(q) {
        return Err(Error::BinMismatch);
    }
    let ps = policy.smooth(p.masses())?;
    let qs = policy.smooth(q.masses())?;
    Ok(kl_smoothed(&ps, &qs))
}

/// `½·KL(P‖M) + ½·KL(Q‖M)` with `M` the midpoint of the smoothed inputs.
pub fn js_divergence(p: &SpectralDensity, q: &SpectralDensity, policy: &ZeroHandlingPolicy) -> Result<f64> {
    if !p.same_edges(q) {
        return Err(Error::BinMismatch);
    }
    js_masses(p.masses(), q.masses(), policy)
}

/// Same as [`js_divergence`] on raw mass vectors of equal length.
pub fn js_masses(p: &[f64], q: &[f64], policy: &ZeroHandlingPolicy) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::BinMismatch);
    }
    let ps = policy.smooth(p)?;
    let qs = policy.smooth(q)?;
    let mid: Vec<f64> = ps.iter().zip(&qs).map(|(a, b)| 0.5 * (a + b)).collect();
    let mid = policy.smooth(&mid)?;
    Ok(0.5 * kl_smoothed(&ps, &mid) + 0.5 * kl_smoothed(&qs, &mid))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two(p0: f64, p1: f64) -> SpectralDensity {
        SpectralDensity::new(vec![0.0, 1.0, 2.0], vec![p0, p1]).unwrap()
    }

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn identical_densities() {
        let p = SpectralDensity::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.2, 0.0, 0.8]).unwrap();
        let pol = ZeroHandlingPolicy::default();
        assert!(kl_divergence(&p, &p, &pol).unwrap().abs() < 1e-12);
        assert!(js_divergence(&p, &p, &pol).unwrap().abs() < 1e-12);
    }

    #[test]
    fn point_mass_against_uniform() {
        let kl = kl_divergence(&two(1.0, 0.0), &two(0.5, 0.5), &ZeroHandlingPolicy::default()).unwrap();
        assert!((kl - LN2).abs() < 1e-9);
    }

    #[test]
    fn disjoint_kl_stays_finite() {
        let pol = ZeroHandlingPolicy::default();
        let kl = kl_divergence(&two(0.0, 1.0), &two(1.0, 0.0), &pol).unwrap();
        let alpha = pol.alpha(1);
        assert!((kl - alpha * (alpha / pol.epsilon).ln()).abs() < 1e-9);
        assert!((kl - 27.631).abs() < 1e-3);
    }

    #[test]
    fn disjoint_js_is_log_two() {
        let js = js_divergence(&two(1.0, 0.0), &two(0.0, 1.0), &ZeroHandlingPolicy::default()).unwrap();
        assert!((js - LN2).abs() < 1e-9);
    }

    #[test]
    fn mismatched_edges_are_rejected() {
        let a = two(0.5, 0.5);
        let b = SpectralDensity::new(vec![0.0, 1.5, 2.0], vec![0.5, 0.5]).unwrap();
        let pol = ZeroHandlingPolicy::default();
        assert_eq!(kl_divergence(&a, &b, &pol), Err(Error::BinMismatch));
        assert_eq!(js_divergence(&a, &b, &pol), Err(Error::BinMismatch));
    }

    #[test]
    fn smoothing_keeps_unit_mass() {
        let pol = ZeroHandlingPolicy::default();
        let s = pol.smooth(&[0.0, 0.25, 0.0, 0.75]).unwrap();
        assert_eq!(s[0], 1e-12);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(ZeroHandlingPolicy { epsilon: 0.5 }.smooth(&[0.5, 0.5, 0.0]).is_err());
    }
}
