//! Theoretical residual eigenvalue density for AR(1)-correlated noise with identity
//! cross-correlation.
//!
//! The moment function `M(z) = z·G(z) − 1` of `C = UUᵀ/T` solves a quartic in `M` whose
//! coefficients depend on the AR coefficient `b` and the aspect ratio `c = N/T`. The density
//! follows from `ρ(λ) = −Im G(λ + iε)/π`, tracking the physical root continuously along λ.

use nalgebra::{Complex, Matrix4};
use serde::{Deserialize, Serialize};

use crate::density::{validate_edges, SpectralDensity};
use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Largest AR coefficient the model is evaluated at.
pub const B_MAX: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModelParams {
    pub b: f64,
    pub c: f64,
}

impl NoiseModelParams {
    pub fn new(b: f64, c: f64) -> Result<Self> {
        if !(0.0..=B_MAX).contains(&b) {
            return Err(Error::InvalidParameter(format!("b = {b} must lie in [0, {B_MAX}]")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "aspect ratio c = {c} must be positive"
            )));
        }
        Ok(Self { b, c })
    }

    /// `a = √(1 − b²)`.
    pub fn a(&self) -> f64 {
        (1.0 - self.b * self.b).sqrt()
    }

    /// Upper end of the default λ grid, comfortably beyond the support edge.
    pub fn grid_cap(&self) -> f64 {
        (1.0 + self.c.sqrt()).powi(2) * (1.0 + self.b) / (1.0 - self.b) * 1.5
    }
}

/// `z = λ + iε` with `ε > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexPoint {
    pub lambda: f64,
    pub epsilon: f64,
}

impl ComplexPoint {
    pub fn new(lambda: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon = {epsilon} must be positive")));
        }
        Ok(Self { lambda, epsilon })
    }

    pub fn z(&self) -> C64 {
        C64::new(self.lambda, self.epsilon)
    }
}

/// Coefficients of the moment quartic, highest degree first.
pub fn moment_polynomial(z: C64, params: &NoiseModelParams) -> [C64; 5] {
    let b2 = params.b * params.b;
    let a2 = 1.0 - b2;
    let a4 = a2 * a2;
    let c = params.c;
    [
        C64::from(a4 * c * c),
        (z * (-(1.0 + b2)) + a2 * c) * (2.0 * a2 * c),
        z * z * ((1.0 - b2) * (1.0 - b2)) - z * (2.0 * a2 * c * (1.0 + b2)) + (c * c - 1.0) * a4,
        C64::from(-2.0 * a4),
        C64::from(-a4),
    ]
}

fn horner(coeffs: &[C64; 5], x: C64) -> (C64, C64) {
    let mut p = coeffs[0];
    let mut dp = C64::from(0.0);
    for &k in &coeffs[1..] {
        dp = dp * x + p;
        p = p * x + k;
    }
    (p, dp)
}

/// `|P(x)|` relative to `Σ |c_k|·|x|^k`.
fn relative_residual(coeffs: &[C64; 5], x: C64) -> f64 {
    let r = x.norm();
    let scale = coeffs.iter().fold(0.0, |acc, k| acc * r + k.norm());
    horner(coeffs, x).0.norm() / scale.max(f64::MIN_POSITIVE)
}

const ROOT_TOLERANCE: f64 = 1e-8;

/// All four roots of a quartic via the eigenvalues of its companion matrix, each polished by
/// one Newton step.
pub fn quartic_roots(coeffs: &[C64; 5]) -> Result<[C64; 4]> {
    let lead = coeffs[0];
    if lead.norm() == 0.0 {
        return Err(Error::SolverFailure {
            residual: f64::INFINITY,
        });
    }
    let mut companion = Matrix4::<C64>::zeros();
    for j in 0..4 {
        companion[(0, j)] = -coeffs[j + 1] / lead;
    }
    for i in 1..4 {
        companion[(i, i - 1)] = C64::from(1.0);
    }
    let eig = companion.schur().eigenvalues().ok_or(Error::SolverFailure {
        residual: f64::INFINITY,
    })?;
    let mut roots = [C64::from(0.0); 4];
    for (k, root) in roots.iter_mut().enumerate() {
        let x = eig[k];
        let (p, dp) = horner(coeffs, x);
        let polished = if dp.norm() > 0.0 { x - p / dp } else { x };
        let best = if relative_residual(coeffs, polished) <= relative_residual(coeffs, x) {
            polished
        } else {
            x
        };
        let res = relative_residual(coeffs, best);
        if !(res < ROOT_TOLERANCE) {
            return Err(Error::SolverFailure { residual: res });
        }
        *root = best;
    }
    Ok(roots)
}

pub fn solve_moment_polynomial(z: ComplexPoint, params: &NoiseModelParams) -> Result<[C64; 4]> {
    quartic_roots(&moment_polynomial(z.z(), params))
}

/// `G = (M + 1)/z`.
pub fn green_function(m: C64, z: ComplexPoint) -> C64 {
    (m + 1.0) / z.z()
}

fn density_of(m: C64, z: C64) -> f64 {
    -((m + 1.0) / z).im / std::f64::consts::PI
}

/// Root whose Green's function gives a density no lower than `-tolerance`, nearest to
/// `previous` when given and otherwise nearest to the continuation anchor from
/// [`physical_root`].
pub fn select_root_with_tolerance(
    roots: &[C64],
    z: ComplexPoint,
    params: &NoiseModelParams,
    previous: Option<C64>,
    tolerance: f64,
) -> Result<C64> {
    let zc = z.z();
    let anchor = match previous {
        Some(prev) => prev,
        None => physical_root(z, params)?,
    };
    roots
        .iter()
        .filter(|m| density_of(**m, zc) >= -tolerance)
        .min_by(|a, b| (*a - anchor).norm().total_cmp(&(*b - anchor).norm()))
        .copied()
        .ok_or(Error::NoPhysicalRoot { lambda: z.lambda })
}

pub fn select_physical_root(
    roots: &[C64],
    z: ComplexPoint,
    params: &NoiseModelParams,
    previous: Option<C64>,
) -> Result<C64> {
    select_root_with_tolerance(roots, z, params, previous, ROOT_TOLERANCE)
}

const CONTINUATION_STEPS: usize = 120;

/// The physical root at `z`, found by following the branch with `z·M → 1` down the vertical
/// line `λ + iy` from `y ≫ |λ|` to `y = ε`. The physical branch is analytic in the upper
/// half-plane, so nearest-root tracking along this path cannot jump branches.
pub fn physical_root(z: ComplexPoint, params: &NoiseModelParams) -> Result<C64> {
    let high = 1e3 * (1.0 + z.lambda.abs() + params.grid_cap());
    let ratio = (z.epsilon / high).powf(1.0 / CONTINUATION_STEPS as f64);
    let far = ComplexPoint::new(z.lambda, high)?;
    let far_z = far.z();
    let mut m = nearest(&solve_moment_polynomial(far, params)?, |r| (far_z * r - 1.0).norm());
    for k in 1..=CONTINUATION_STEPS {
        let y = if k == CONTINUATION_STEPS {
            z.epsilon
        } else {
            high * ratio.powi(k as i32)
        };
        let prev = m;
        m = nearest(
            &solve_moment_polynomial(ComplexPoint::new(z.lambda, y)?, params)?,
            |r| (r - prev).norm(),
        );
    }
    Ok(m)
}

fn nearest(roots: &[C64], key: impl Fn(&C64) -> f64) -> C64 {
    *roots
        .iter()
        .min_by(|a, b| key(a).total_cmp(&key(b)))
        .expect("a quartic has four roots")
}

/// Densities in `[-CLIP_LIMIT, 0)` are treated as roundoff and clipped to zero.
const CLIP_LIMIT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileOptions {
    pub epsilon: f64,
    /// Points on `[0, cap]`, spaced quadratically so the low edge is resolved.
    pub positive_points: usize,
    /// Geometrically spaced points on `[-1, -ε/10]` that catch the Lorentzian tail of the
    /// smoothed lower edge.
    pub negative_points: usize,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            positive_points: 1800,
            negative_points: 200,
        }
    }
}

impl ProfileOptions {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }

    pub fn grid(&self, params: &NoiseModelParams) -> Vec<f64> {
        let cap = params.grid_cap();
        let mut grid = Vec::with_capacity(self.positive_points + self.negative_points);
        let lo = (self.epsilon / 10.0).ln();
        let nn = self.negative_points;
        for i in 0..nn {
            // from -1 up to -ε/10
            let s = if nn > 1 { i as f64 / (nn - 1) as f64 } else { 1.0 };
            grid.push(-(lo * s).exp());
        }
        let np = self.positive_points.max(2);
        for i in 0..np {
            let s = i as f64 / (np - 1) as f64;
            grid.push(cap * s * s);
        }
        grid
    }
}

/// Model density sampled on a fine λ grid, with its running integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub params: NoiseModelParams,
    pub epsilon: f64,
    pub lambda: Vec<f64>,
    pub rho: Vec<f64>,
    /// Trapezoidal integral of `rho` from the first grid point.
    pub cdf: Vec<f64>,
    /// Grid points where a slightly negative density was clipped to zero.
    pub clipped: usize,
}

impl ModelProfile {
    pub fn compute(params: &NoiseModelParams, options: &ProfileOptions) -> Result<Self> {
        Self::on_grid(params, &options.grid(params), options.epsilon)
    }

    /// Evaluates the density on an ascending grid, sweeping from far right of the support
    /// downwards so the physical branch is followed continuously.
    pub fn on_grid(params: &NoiseModelParams, grid: &[f64], epsilon: f64) -> Result<Self> {
        if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidEdges);
        }
        let top = grid[grid.len() - 1].max(params.grid_cap());
        let point = |lambda: f64| ComplexPoint::new(lambda, epsilon);

        let start = point(4.0 * top)?;
        let mut prev = select_physical_root(&solve_moment_polynomial(start, params)?, start, params, None)?;
        const APPROACH: usize = 100;
        for i in 1..APPROACH {
            let lambda = 4.0 * top - 3.0 * top * i as f64 / (APPROACH - 1) as f64;
            if lambda <= grid[grid.len() - 1] {
                break;
            }
            let z = point(lambda)?;
            prev = track(params, z, prev)?;
        }

        let mut rho = vec![0.0; grid.len()];
        let mut clipped = 0;
        for i in (0..grid.len()).rev() {
            let z = point(grid[i])?;
            prev = track(params, z, prev)?;
            let r = density_of(prev, z.z());
            if r < 0.0 {
                if r < -CLIP_LIMIT {
                    return Err(Error::NoPhysicalRoot { lambda: grid[i] });
                }
                clipped += 1;
            }
            rho[i] = r.max(0.0);
        }

        let mut cdf = vec![0.0; grid.len()];
        for i in 1..grid.len() {
            cdf[i] = cdf[i - 1] + 0.5 * (rho[i] + rho[i - 1]) * (grid[i] - grid[i - 1]);
        }
        Ok(Self {
            params: *params,
            epsilon,
            lambda: grid.to_vec(),
            rho,
            cdf,
            clipped,
        })
    }

    pub fn mass(&self) -> f64 {
        self.cdf[self.cdf.len() - 1]
    }

    pub fn first_moment(&self) -> f64 {
        self.lambda
            .windows(2)
            .zip(self.rho.windows(2))
            .map(|(l, r)| 0.5 * (l[0] * r[0] + l[1] * r[1]) * (l[1] - l[0]))
            .sum()
    }

    /// Largest grid λ where the density exceeds 1e-3.
    pub fn upper_edge(&self) -> f64 {
        self.lambda
            .iter()
            .zip(&self.rho)
            .rev()
            .find(|(_, r)| **r > 1e-3)
            .map(|(l, _)| *l)
            .unwrap_or(0.0)
    }

    fn cdf_at(&self, x: f64) -> f64 {
        let n = self.lambda.len();
        if x <= self.lambda[0] {
            return 0.0;
        }
        if x >= self.lambda[n - 1] {
            return self.cdf[n - 1];
        }
        let i = self.lambda.partition_point(|&l| l <= x) - 1;
        let w = (x - self.lambda[i]) / (self.lambda[i + 1] - self.lambda[i]);
        self.cdf[i] + w * (self.cdf[i + 1] - self.cdf[i])
    }

    /// Integrates the profile over the bins. Mass left of the first edge or right of the last
    /// one is folded into the end bins, then the total is renormalized to one.
    pub fn bin(&self, bin_edges: &[f64]) -> Result<SpectralDensity> {
        validate_edges(bin_edges)?;
        let total = self.mass();
        if total < 0.99 {
            return Err(Error::SupportNotCovered { mass: total });
        }
        let k = bin_edges.len() - 1;
        let mut f: Vec<f64> = bin_edges.iter().map(|&e| self.cdf_at(e)).collect();
        f[0] = 0.0;
        f[k] = total;
        let weights = f.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
        SpectralDensity::from_weights(bin_edges.to_vec(), weights)
    }
}

fn track(params: &NoiseModelParams, z: ComplexPoint, prev: C64) -> Result<C64> {
    let roots = solve_moment_polynomial(z, params)?;
    select_physical_root(&roots, z, params, Some(prev))
        .or_else(|_| select_root_with_tolerance(&roots, z, params, Some(prev), CLIP_LIMIT))
}

/// Model density integrated over `bin_edges`, using the default grid.
pub fn model_density(params: &NoiseModelParams, epsilon: f64, bin_edges: &[f64]) -> Result<SpectralDensity> {
    let profile = ModelProfile::compute(params, &ProfileOptions::with_epsilon(epsilon))?;
    if profile.mass() < 0.99 {
        return Err(Error::SupportNotCovered { mass: profile.mass() });
    }
    profile.bin(bin_edges)
}

fn check_cut(w: C64, z: C64) -> Result<()> {
    if w.im.abs() <= 1e-12 && w.re <= 1e-12 {
        return Err(Error::BranchCut { z_re: z.re, z_im: z.im });
    }
    Ok(())
}

/// `M_B(z) = −1 / (√(1−z)·√(1 − ((1+b²)²/(1−b²))·z))` with principal square roots.
///
/// This closed form does not reproduce the moments of the AR(1) autocovariance matrix
/// `b^|s−t|`; see [`ar1_moment_series`] for the form consistent with them.
pub fn ar1_mgf(z: C64, b: f64) -> Result<C64> {
    if !(b.abs() < 1.0) {
        return Err(Error::InvalidCoefficient(b));
    }
    let b2 = b * b;
    let k = (1.0 + b2) * (1.0 + b2) / (1.0 - b2);
    let w1 = 1.0 - z;
    let w2 = 1.0 - z * k;
    check_cut(w1, z)?;
    check_cut(w2, z)?;
    Ok(-1.0 / (w1.sqrt() * w2.sqrt()))
}

/// `Σ_{n≥1} m_n wⁿ` where `m_n` are the limiting spectral moments of the AR(1) autocovariance
/// matrix `B_st = b^|s−t|`:
/// `w / (√(1 − αw)·√(1 − w/α))` with `α = (1+b)/(1−b)`. Converges for `|w| < 1/α`.
pub fn ar1_moment_series(w: C64, b: f64) -> Result<C64> {
    if !(b.abs() < 1.0) {
        return Err(Error::InvalidCoefficient(b));
    }
    let alpha = (1.0 + b) / (1.0 - b);
    let w1 = 1.0 - w * alpha;
    let w2 = 1.0 - w / alpha;
    check_cut(w1, w)?;
    check_cut(w2, w)?;
    Ok(w / (w1.sqrt() * w2.sqrt()))
}
