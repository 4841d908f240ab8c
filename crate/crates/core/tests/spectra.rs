mod common;

use factor_events::datagen::{derive_seed, pooled_eigenvalues};
use factor_events::model::{
    ar1_mgf, ar1_moment_series, green_function, moment_polynomial, select_physical_root, solve_moment_polynomial,
    ComplexPoint, C64,
};
use factor_events::*;
use nalgebra::DMatrix;

use common::*;

fn mp_params() -> NoiseModelParams {
    NoiseModelParams::new(0.0, c_default()).unwrap()
}

fn iid_window(n: usize, t: usize, seed: u64) -> StandardizedWindow {
    let x = generate_ar1(&Ar1Spec::gaussian(0.0, seed), n, t, 0).unwrap();
    standardize(&RawWindow {
        values: x,
        end_index: t,
    })
    .unwrap()
}

#[test]
fn white_noise_eigenvalues_stay_inside_mp_support() {
    let c = c_default();
    let (lo, hi) = mp_edges(c);
    let mut outside = 0;
    let mut total = 0;
    for run in 0..30 {
        let w = iid_window(N, T, derive_seed(11, run));
        let d = decompose(&w, 0).unwrap();
        let ev = residual_covariance(&d, T).unwrap().eigenvalues();
        total += ev.len();
        // a small tolerance absorbs the finite-N edge fluctuation
        outside += ev.iter().filter(|l| **l < lo - 0.05 || **l > hi + 0.05).count();
    }
    let fraction = outside as f64 / total as f64;
    assert!(fraction < 0.02, "fraction outside support {fraction}");
}

/// Per-trial JS divergence of the white-noise eigenvalue histogram to the binned MP law, with
/// the default binning of 100 uniform bins over `[0, 1.05·max(λ_max, MP upper edge)]`.
fn white_noise_js_trials() -> Vec<(SpectralDensity, SpectralDensity)> {
    let c = c_default();
    let (_, hi) = mp_edges(c);
    (0..30)
        .map(|run| {
            let w = iid_window(N, T, derive_seed(77, run));
            let c_u = residual_covariance(&decompose(&w, 0).unwrap(), T).unwrap();
            let top = c_u.eigenvalues().last().copied().unwrap().max(hi);
            let edges = uniform_edges(0.0, 1.05 * top, 100).unwrap();
            let mp = SpectralDensity::new(edges.clone(), mp_binned(&edges, c)).unwrap();
            (empirical_density(&c_u, edges).unwrap().0, mp)
        })
        .collect()
}

#[test]
#[ignore = "118 eigenvalues spread over 100 bins carry about 0.06 of sampling JS on their own"]
fn white_noise_histogram_matches_mp_law_per_trial() {
    let js: Vec<f64> = white_noise_js_trials()
        .iter()
        .map(|(e, m)| js_divergence(e, m, &ZeroHandlingPolicy::default()).unwrap())
        .collect();
    assert!(mean(&js) < 0.05, "mean js {}", mean(&js));
}

#[test]
fn white_noise_histogram_matches_mp_law_pooled() {
    // pooling 30 trials on one partition averages out the per-bin sampling noise
    let c = c_default();
    let edges = uniform_edges(0.0, 1.05 * (mp_edges(c).1 + 0.1), 100).unwrap();
    let mut weights = vec![0.0; 100];
    for run in 0..30 {
        let w = iid_window(N, T, derive_seed(77, run));
        let c_u = residual_covariance(&decompose(&w, 0).unwrap(), T).unwrap();
        let (d, _) = empirical_density(&c_u, edges.clone()).unwrap();
        weights.iter_mut().zip(d.masses()).for_each(|(a, m)| *a += m);
    }
    let pooled = SpectralDensity::from_weights(edges.clone(), weights).unwrap();
    let mp = SpectralDensity::new(edges.clone(), mp_binned(&edges, c)).unwrap();
    let js = js_divergence(&pooled, &mp, &ZeroHandlingPolicy::default()).unwrap();
    assert!(js < 0.05, "pooled js {js}");
}

#[test]
fn residual_trace_accounts_for_removed_factors() {
    let w = iid_window(30, 80, 5);
    let spectrum = WindowSpectrum::from_window(&w);
    let total: f64 = spectrum.eigenvalues.iter().sum();
    assert!((total - 30.0).abs() < 1e-9, "trace of a standardized window is N");
    for p in 0..6 {
        let c = residual_covariance(&decompose(&w, p).unwrap(), 80).unwrap();
        let trace = c.matrix.trace();
        let removed: f64 = spectrum.eigenvalues[..p].iter().sum();
        assert!((trace - (total - removed)).abs() < 1e-8);
    }
}

#[test]
fn top_residual_eigenvalue_is_non_increasing_in_p() {
    let w = iid_window(25, 60, 6);
    let mut last = f64::INFINITY;
    for p in 0..10 {
        let ev = residual_covariance(&decompose(&w, p).unwrap(), 60)
            .unwrap()
            .eigenvalues();
        let top = *ev.last().unwrap();
        assert!(top <= last + 1e-10);
        last = top;
    }
}

#[test]
fn moment_polynomial_matches_mp_green_function() {
    let params = mp_params();
    let z = ComplexPoint::new(1.0, 0.001).unwrap();
    let roots = solve_moment_polynomial(z, &params).unwrap();
    let m = select_physical_root(&roots, z, &params, None).unwrap();
    let expected = z.z() * mp_green(z.z(), params.c) - 1.0;
    assert!((m - expected).norm() < 1e-6, "{m} vs {expected}");
    assert!((green_function(m, z) - mp_green(z.z(), params.c)).norm() < 1e-6);
}

#[test]
fn roots_satisfy_the_polynomial() {
    for &(b, c) in &[(0.0, 0.472), (0.5, 0.25), (0.9, 0.9), (0.3, 1.5)] {
        let params = NoiseModelParams::new(b, c).unwrap();
        for &lambda in &[0.1, 1.0, 2.5, 7.0] {
            let z = ComplexPoint::new(lambda, 1e-3).unwrap();
            let coeffs = moment_polynomial(z.z(), &params);
            for m in solve_moment_polynomial(z, &params).unwrap() {
                // coefficients run from the leading term down
                let p = coeffs.iter().fold(C64::new(0.0, 0.0), |acc, a| acc * m + a);
                let size = coeffs.iter().fold(0.0, |acc, a| acc * m.norm() + a.norm());
                assert!(p.norm() / size < 1e-8, "b={b} c={c} lambda={lambda}");
            }
        }
    }
}

#[test]
fn far_field_root_behaves_like_one_over_z() {
    for &(b, c) in &[(0.0, 0.472), (0.7, 0.3), (0.95, 0.9)] {
        let params = NoiseModelParams::new(b, c).unwrap();
        let z = ComplexPoint::new(1e6, 1e-3).unwrap();
        let m = select_physical_root(&solve_moment_polynomial(z, &params).unwrap(), z, &params, None).unwrap();
        assert!((z.z() * m - 1.0).norm() < 1e-3);
    }
}

#[test]
fn selected_root_density_matches_mp_inside_and_vanishes_outside() {
    let params = mp_params();
    let c = params.c;
    let (lo, hi) = mp_edges(c);
    let mut previous = None;
    let mut lambda = hi + 0.5;
    // sweep downward so the continuity tie-break is exercised
    while lambda > lo + 0.02 {
        let z = ComplexPoint::new(lambda, 1e-5).unwrap();
        let m = select_physical_root(&solve_moment_polynomial(z, &params).unwrap(), z, &params, previous).unwrap();
        previous = Some(m);
        let rho = -green_function(m, z).im / std::f64::consts::PI;
        if lambda > lo + 0.05 && lambda < hi - 0.05 {
            assert!((rho - mp_density(lambda, c)).abs() < 1e-3, "lambda {lambda}: {rho}");
        }
        if lambda > hi + 0.2 {
            assert!(rho.abs() < 1e-4);
        }
        lambda -= 0.01;
    }
}

#[test]
fn continuity_pick_is_nearest_to_previous() {
    let params = NoiseModelParams::new(0.4, 0.5).unwrap();
    let z = ComplexPoint::new(1.2, 1e-3).unwrap();
    let roots = solve_moment_polynomial(z, &params).unwrap();
    let physical = select_physical_root(&roots, z, &params, None).unwrap();
    let nudged = physical + C64::new(1e-4, -1e-4);
    let picked = select_physical_root(&roots, z, &params, Some(nudged)).unwrap();
    let gap = roots
        .iter()
        .flat_map(|a| roots.iter().map(move |b| (a - b).norm()))
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    assert!((picked - nudged).norm() < 0.5 * gap);
}

#[test]
fn green_function_examples() {
    let z = ComplexPoint::new(2.0, 0.001).unwrap();
    assert!((green_function(C64::new(0.0, 0.0), z) - 1.0 / z.z()).norm() < 1e-15);
    let g0 = C64::new(0.3, -0.8);
    assert!((green_function(z.z() * g0 - 1.0, z) - g0).norm() < 1e-12);
}

#[test]
fn mp_profile_agrees_pointwise() {
    let c = c_default();
    let profile = ModelProfile::compute(&mp_params(), &ProfileOptions::default()).unwrap();
    let (lo, hi) = mp_edges(c);
    let margin = 0.05 * (hi - lo);
    for (l, r) in profile.lambda.iter().zip(&profile.rho) {
        if *l > lo + margin && *l < hi - margin {
            assert!((r - mp_density(*l, c)).abs() < 1e-2);
        }
    }
}

#[test]
fn profile_normalization_and_first_moment() {
    for &b in &[0.0, 0.2, 0.4, 0.6, 0.8] {
        for &c in &[0.25, 118.0 / 250.0, 0.9] {
            let p = ModelProfile::compute(&NoiseModelParams::new(b, c).unwrap(), &ProfileOptions::default()).unwrap();
            assert!((0.99..=1.01).contains(&p.mass()), "b={b} c={c} mass {}", p.mass());
            assert!(
                (p.first_moment() - 1.0).abs() < 5e-3,
                "b={b} c={c} m1 {}",
                p.first_moment()
            );
        }
    }
}

#[test]
fn upper_edge_grows_with_b() {
    let c = c_default();
    let mut last = 0.0;
    for b in factor_events::estimator::b_grid(0.05, B_MAX) {
        let edge = ModelProfile::compute(&NoiseModelParams::new(b, c).unwrap(), &ProfileOptions::default())
            .unwrap()
            .upper_edge();
        assert!(edge >= last - 1e-9, "b={b}: {edge} < {last}");
        last = edge;
    }
}

#[test]
fn model_and_brute_force_spectra_agree_for_white_noise() {
    let c = c_default();
    let edges = uniform_edges(0.0, 1.05 * mp_edges(c).1, 100).unwrap();
    let brute = brute_force_spectrum(0.0, N, T, 20, 99, edges.clone(), Execution::Parallel).unwrap();
    let model = model_density(&mp_params(), 1e-3, &edges).unwrap();
    let js = js_divergence(&brute, &model, &ZeroHandlingPolicy::default()).unwrap();
    assert!(js < 0.03, "js {js}");
}

#[test]
fn wide_aspect_ratio_carries_an_atom_at_zero() {
    let params = NoiseModelParams::new(0.3, 1.5).unwrap();
    let profile = ModelProfile::compute(&params, &ProfileOptions::default()).unwrap();
    assert!((profile.mass() - 1.0).abs() < 0.01);
    // N > T leaves N − T zero eigenvalues, a third of the mass, smeared over a width ε around 0
    let below = |x: f64| {
        profile
            .lambda
            .iter()
            .zip(&profile.cdf)
            .rev()
            .find(|(l, _)| **l <= x)
            .unwrap()
            .1
    };
    let atom = below(0.02) - below(-0.02);
    let expected = (1.0 - 1.0 / 1.5) * 2.0 / std::f64::consts::PI * (0.02f64 / 1e-3).atan();
    assert!((atom - expected).abs() < 0.01, "atom {atom} vs {expected}");
}

fn toeplitz_moments(b: f64, t: usize, upto: usize) -> Vec<f64> {
    let m = DMatrix::from_fn(t, t, |i, j| b.powi((i as i32 - j as i32).abs()));
    let mut power = DMatrix::identity(t, t);
    (1..=upto)
        .map(|_| {
            power = &power * &m;
            power.trace() / t as f64
        })
        .collect()
}

/// Taylor coefficients `1..=upto` of `f` at 0 from a discretized Cauchy integral.
fn taylor_coefficients(f: impl Fn(C64) -> C64, radius: f64, upto: usize) -> Vec<f64> {
    let k = 256;
    (1..=upto)
        .map(|n| {
            let mut s = C64::new(0.0, 0.0);
            for j in 0..k {
                let theta = 2.0 * std::f64::consts::PI * j as f64 / k as f64;
                let w = C64::from_polar(radius, theta);
                s += f(w) * C64::from_polar(radius.powi(-(n as i32)), -(n as f64) * theta);
            }
            (s / k as f64).re
        })
        .collect()
}

#[test]
fn ar1_series_matches_autocovariance_moments() {
    let b = 0.5;
    let brute = toeplitz_moments(b, 64, 3);
    let alpha = (1.0 + b) / (1.0 - b);
    let coeffs = taylor_coefficients(|w| ar1_moment_series(w, b).unwrap(), 0.5 / alpha, 3);
    for (n, (a, e)) in coeffs.iter().zip(&brute).enumerate() {
        assert!((a - e).abs() / e < 0.02, "moment {}: series {a} vs matrix {e}", n + 1);
    }
}

#[test]
#[ignore = "the closed form for M_B as printed does not reproduce the AR(1) autocovariance moments (m1 comes out near 1.54)"]
fn printed_ar1_mgf_matches_autocovariance_moments() {
    let b = 0.5;
    let brute = toeplitz_moments(b, 64, 3);
    let k = (1.0 + b * b).powi(2) / (1.0 - b * b);
    let coeffs = taylor_coefficients(|z| -ar1_mgf(z, b).unwrap(), 0.5 / k, 3);
    for (n, (a, e)) in coeffs.iter().zip(&brute).enumerate() {
        assert!((a - e).abs() / e < 0.02, "moment {}: series {a} vs matrix {e}", n + 1);
    }
}

#[test]
fn printed_ar1_mgf_examples() {
    assert!((ar1_mgf(C64::new(-1.0, 0.0), 0.0).unwrap() - C64::new(-0.5, 0.0)).norm() < 1e-15);
    assert!((ar1_mgf(C64::new(1e-9, 0.0), 0.5).unwrap() + 1.0).norm() < 1e-8);
    assert!(matches!(ar1_mgf(C64::new(2.0, 0.0), 0.0), Err(Error::BranchCut { .. })));
}

#[test]
fn model_root_is_consistent_with_ar1_series() {
    // with identity cross-correlation the moment function obeys c·M(z) = M_B(c·(1 + M(z))/z)
    for &(b, c) in &[(0.0, 0.472), (0.3, 0.4), (0.6, 0.25)] {
        let params = NoiseModelParams::new(b, c).unwrap();
        let alpha = (1.0 + b) / (1.0 - b);
        for &lambda in &[-2.0, -0.5] {
            let z = ComplexPoint::new(lambda, 1e-3).unwrap();
            let m = select_physical_root(&solve_moment_polynomial(z, &params).unwrap(), z, &params, None).unwrap();
            let w = c * (m + 1.0) / z.z();
            assert!(w.norm() < 1.0 / alpha);
            let rhs = ar1_moment_series(w, b).unwrap();
            assert!(
                (c * m - rhs).norm() < 1e-8,
                "b={b} c={c} lambda={lambda}: {} vs {rhs}",
                c * m
            );
        }
    }
}

#[test]
fn pooled_white_noise_mean_eigenvalue_is_one() {
    let ev = pooled_eigenvalues(0.0, 40, 100, 5, 3, Execution::Sequential).unwrap();
    assert_eq!(ev.len(), 200);
    assert!((mean(&ev) - 1.0).abs() < 0.02);
}
