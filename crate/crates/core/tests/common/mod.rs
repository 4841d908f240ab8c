//! Closed-form references used by the integration tests.

#![allow(dead_code)]

use nalgebra::Complex;

pub type C64 = Complex<f64>;

pub const N: usize = 118;
pub const T: usize = 250;

pub fn c_default() -> f64 {
    N as f64 / T as f64
}

/// Support `[(1 − √c)², (1 + √c)²]` of the Marchenko-Pastur law with ratio `c ≤ 1`.
pub fn mp_edges(c: f64) -> (f64, f64) {
    ((1.0 - c.sqrt()).powi(2), (1.0 + c.sqrt()).powi(2))
}

pub fn mp_density(lambda: f64, c: f64) -> f64 {
    let (lo, hi) = mp_edges(c);
    if lambda <= lo || lambda >= hi {
        return 0.0;
    }
    ((hi - lambda) * (lambda - lo)).sqrt() / (2.0 * std::f64::consts::PI * c * lambda)
}

/// Stieltjes transform `∫ ρ(x)/(z − x) dx`, branch chosen so that `G ~ 1/z` at infinity.
pub fn mp_green(z: C64, c: f64) -> C64 {
    let (lo, hi) = mp_edges(c);
    let s = (z - lo).sqrt() * (z - hi).sqrt();
    (z + c - 1.0 - s) / (2.0 * c * z)
}

/// Mass of the Marchenko-Pastur law on `[a, b]` by composite Simpson integration.
pub fn mp_mass(a: f64, b: f64, c: f64) -> f64 {
    let (lo, hi) = mp_edges(c);
    let a = a.max(lo);
    let b = b.min(hi);
    if b <= a {
        return 0.0;
    }
    // substitute λ = lo + (hi − lo)·sin²θ to remove the square-root endpoints
    let theta = |x: f64| (((x - lo) / (hi - lo)).clamp(0.0, 1.0)).sqrt().asin();
    let (ta, tb) = (theta(a), theta(b));
    let f = |t: f64| {
        let l = lo + (hi - lo) * t.sin().powi(2);
        mp_density(l, c) * 2.0 * (hi - lo) * t.sin() * t.cos()
    };
    let n = 2000;
    let h = (tb - ta) / n as f64;
    let mut s = f(ta) + f(tb);
    for i in 1..n {
        s += f(ta + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Binned Marchenko-Pastur law, renormalized to unit mass.
pub fn mp_binned(edges: &[f64], c: f64) -> Vec<f64> {
    let m: Vec<f64> = edges.windows(2).map(|w| mp_mass(w[0], w[1], c)).collect();
    let total: f64 = m.iter().sum();
    m.into_iter().map(|x| x / total).collect()
}

/// Pooled lag-k autocovariance over rows, using each row's sample mean.
pub fn pooled_autocovariance(x: &nalgebra::DMatrix<f64>, lag: usize) -> f64 {
    let (n, t) = x.shape();
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        let row = x.row(i);
        let mean = row.sum() / t as f64;
        for j in lag..t {
            sum += (row[j] - mean) * (row[j - lag] - mean);
            count += 1;
        }
    }
    sum / count as f64
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn sample_sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}
