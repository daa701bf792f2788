//! Property checks shared by the proptest suites and the acceptance harness.

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spicetrack::array::{complex_gaussian, synthesize, SourceSample};
use spicetrack::baselines::music::{subspace_track, ProjectionState};
use spicetrack::baselines::phd::{phd_predict, phd_update, PhdIntensity, PhdParams};
use spicetrack::baselines::relax::{relax_fit, RelaxParams};
use spicetrack::baselines::window::{window_update, WindowState};
use spicetrack::filter::{self, FilterParams, FilterState, RecursiveFilter};
use spicetrack::metrics::{assignment_error, assignment_error_exhaustive, assignment_error_hungarian};
use spicetrack::spice::{self, SolverConfig, SpiceProblem};
use spicetrack::{linalg, CMatrix, CVector, Dictionary, Grid, HyperState, Snapshot, SteeringManifold};

pub type Check = Result<(), TestCaseError>;

fn c(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

pub fn random_snapshot(rng: &mut ChaCha8Rng, m: usize) -> Snapshot {
    let scale = rng.gen_range(0.1..4.0);
    Snapshot::new(1, CVector::from_fn(m, |_, _| complex_gaussian(rng, scale)))
}

pub fn angles(max: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-3.1f64..3.1, 0..=max)
}

// ---- SPICE ----

pub fn spice_midpoint_convexity(seed: u64, m: usize, n: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = super::random_problem(&mut rng, m, n);
    let problem = SpiceProblem::new(p.r_hat.clone(), p.weights.clone(), p.noise_var).unwrap();
    for _ in 0..10 {
        let mut draw = || -> Vec<f64> {
            (0..n)
                .map(|_| if rng.gen_bool(0.5) { rng.gen_range(0.0..3.0) } else { 0.0 })
                .collect()
        };
        let u = draw();
        let v = draw();
        let mid: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 0.5 * (a + b)).collect();
        let fu = problem.objective(&p.dict, &u).unwrap();
        let fv = problem.objective(&p.dict, &v).unwrap();
        let fm = problem.objective(&p.dict, &mid).unwrap();
        prop_assert!(fm <= 0.5 * (fu + fv) + 1e-9);
    }
    Ok(())
}

pub fn spice_monotone_descent(seed: u64, m: usize, n: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = super::random_problem(&mut rng, m, n);
    let problem = SpiceProblem::new(p.r_hat.clone(), p.weights.clone(), p.noise_var).unwrap();
    let sol = spice::solve(&problem, &p.dict, &SolverConfig::default(), None).unwrap();
    for w in sol.history.windows(2) {
        prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
    }
    prop_assert!(sol.intensities.iter().all(|&v| v >= 0.0));
    let f = super::spice_objective(&p.atoms(), &p.r_hat, &p.weights, p.noise_var, &sol.intensities);
    prop_assert!((sol.objective - f).abs() <= 1e-8 * f.abs());
    Ok(())
}

pub fn spice_beats_random_points(seed: u64, m: usize, n: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = super::random_problem(&mut rng, m, n);
    let problem = SpiceProblem::new(p.r_hat.clone(), p.weights.clone(), p.noise_var).unwrap();
    let sol = spice::solve(&problem, &p.dict, &SolverConfig::default(), None).unwrap();
    let scale = sol.intensities.iter().cloned().fold(1.0, f64::max);
    let atoms = p.atoms();
    for _ in 0..100 {
        let x: Vec<f64> = (0..n)
            .map(|_| if rng.gen_bool(0.3) { rng.gen_range(0.0..2.0 * scale) } else { 0.0 })
            .collect();
        prop_assert!(sol.objective <= super::spice_objective(&atoms, &p.r_hat, &p.weights, p.noise_var, &x) + 1e-9);
    }
    Ok(())
}

pub fn spice_scaling_homogeneity(seed: u64, m: usize, n: usize, scale: f64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = super::random_problem(&mut rng, m, n);
    let base = SpiceProblem::new(p.r_hat.clone(), p.weights.clone(), p.noise_var).unwrap();
    let scaled = SpiceProblem::new(
        &p.r_hat * c(scale),
        p.weights.iter().map(|w| w * scale).collect(),
        p.noise_var,
    )
    .unwrap();
    let cfg = SolverConfig::default();
    let s1 = spice::solve(&base, &p.dict, &cfg, None).unwrap();
    let s2 = spice::solve(&scaled, &p.dict, &cfg, None).unwrap();
    prop_assert!((s2.objective - scale * s1.objective).abs() <= 1e-8 * (scale * s1.objective).abs());
    let max = s1.intensities.iter().cloned().fold(1.0, f64::max);
    for (a, b) in s1.intensities.iter().zip(&s2.intensities) {
        prop_assert!((a - b).abs() <= 1e-8 * max, "{} vs {}", a, b);
    }
    Ok(())
}

/// One random instance against the projected-gradient reference. Returns
/// whether the instance had a unique minimiser and its support was compared.
pub fn spice_matches_reference(rng: &mut ChaCha8Rng, unique: bool) -> Result<bool, String> {
    let m = rng.gen_range(2..=4);
    let n = if unique {
        rng.gen_range(m + 1..=2 * m - 1)
    } else {
        rng.gen_range(2 * m..=25)
    };
    let p = super::random_problem(rng, m, n);
    let (x_ref, f_ref) = super::projected_gradient(&p.atoms(), &p.r_hat, &p.weights, p.noise_var, 1e-10, 400_000);
    let problem = SpiceProblem::new(p.r_hat.clone(), p.weights.clone(), p.noise_var).unwrap();
    let cfg = SolverConfig {
        tol: 1e-13,
        max_sweeps: 200_000,
        ..SolverConfig::default()
    };
    let sol = spice::solve(&problem, &p.dict, &cfg, None).map_err(|e| e.to_string())?;
    let rel = (sol.objective - f_ref).abs() / f_ref.abs();
    if rel > 1e-6 {
        return Err(format!("m={m} n={n}: objective {} vs reference {f_ref}", sol.objective));
    }
    // The fitted covariance is unique even when the intensities are not.
    let r_cd = p.dict.model_covariance(&sol.intensities, p.noise_var);
    let r_ref = p.dict.model_covariance(&x_ref, p.noise_var);
    if linalg::frobenius(&(&r_cd - &r_ref)) > 1e-3 * linalg::frobenius(&r_ref) {
        return Err(format!("m={m} n={n}: fitted covariances differ"));
    }
    if n <= 2 * m - 1 {
        let (a, b) = (super::support(&sol.intensities, 1e-4), super::support(&x_ref, 1e-4));
        if a != b {
            return Err(format!("m={m} n={n}: support {a:?} vs {b:?}"));
        }
        return Ok(true);
    }
    Ok(false)
}

// ---- recursive filter ----

pub fn filter_update_reversible(seed: u64, m: usize) -> Check {
    let dict = Dictionary::new(SteeringManifold::new(m).unwrap(), Grid::with_spacing(0.5).unwrap());
    let params = FilterParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = CMatrix::from_fn(m, m, |_, _| complex_gaussian(&mut rng, 1.0));
    let r = &b * b.adjoint() + CMatrix::identity(m, m);
    let state = FilterState::initial(&dict, r, vec![1.0; dict.len()]).unwrap();
    let x = CVector::from_fn(m, |_, _| complex_gaussian(&mut rng, 4.0));
    let next = state.update(&Snapshot::new(1, x.clone()), &params).unwrap();
    let back = &next.r_hat - linalg::outer(&x);
    prop_assert!(linalg::frobenius(&(back - &state.r_hat)) <= 1e-12 * linalg::frobenius(&state.r_hat));
    prop_assert!(next.lambda.iter().all(|&l| l == 1.0 + params.lambda0));
    Ok(())
}

pub fn filter_gamma_in_unit_interval(g: &[f64], sigma_theta2: f64, sigma_intensity2: f64) -> Check {
    let h: Vec<f64> = g.iter().rev().cloned().collect();
    let params = FilterParams {
        sigma_theta2,
        sigma_intensity2,
        ..FilterParams::default()
    };
    let gamma = filter::forgetting_factor(&filter::Curvatures { g: g.to_vec(), h }, &params);
    prop_assert!(gamma > 0.0 && gamma <= 1.0);
    let still = FilterParams {
        sigma_theta2: 0.0,
        sigma_intensity2: 0.0,
        ..FilterParams::default()
    };
    if !g.is_empty() {
        let curv = filter::Curvatures { g: g.to_vec(), h: g.to_vec() };
        prop_assert_eq!(filter::forgetting_factor(&curv, &still), 1.0);
    }
    Ok(())
}

/// Runs a short filter twice on a random two-source stream, checking PSD,
/// gamma, weight positivity and run-to-run determinism.
pub fn filter_run_invariants(seed: u64) -> Check {
    let dict = Dictionary::new(SteeringManifold::new(6).unwrap(), Grid::with_spacing(0.1).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.gen_range(-2.5..2.5);
    let second = rng.gen_range(-2.5..2.5);
    let sources: Vec<Vec<SourceSample>> = (0..15)
        .map(|t| {
            let mut v = vec![SourceSample {
                theta: (start + 0.03 * t as f64).clamp(-3.0, 3.0),
                amplitude: complex_gaussian(&mut rng, 1.0),
            }];
            if t > 5 {
                v.push(SourceSample {
                    theta: second,
                    amplitude: complex_gaussian(&mut rng, 2.0),
                });
            }
            v
        })
        .collect();
    let stream = synthesize(dict.manifold(), &sources, 0.25, seed).unwrap();
    let run = || -> Result<Vec<HyperState>, TestCaseError> {
        let mut f = RecursiveFilter::new(&dict, FilterParams::default()).unwrap();
        let mut out = Vec::new();
        for x in &stream {
            out.push(f.step(x).unwrap());
            let last = f.last().unwrap();
            prop_assert!(last.gamma > 0.0 && last.gamma <= 1.0);
            let r = &f.state().r_hat;
            prop_assert!(linalg::min_eigenvalue(r) >= -1e-9 * linalg::frobenius(r));
            prop_assert!(f.state().lambda.iter().all(|&l| l >= 0.0));
            prop_assert!(last.updated_lambda.iter().all(|&l| l >= 0.0));
        }
        Ok(out)
    };
    prop_assert_eq!(run()?, run()?);
    Ok(())
}

/// `tr(R_hat R^{-1})` through a general LU inverse.
pub fn trace_fit_lu(r_hat: &CMatrix, m: usize, elements: &[(f64, f64)], sigma2: f64) -> f64 {
    let mut r = DMatrix::<Complex64>::identity(m, m) * c(sigma2);
    for &(theta, intensity) in elements {
        let a = CVector::from_fn(m, |k, _| Complex64::from_polar(1.0, k as f64 * theta));
        r += &a * a.adjoint() * c(intensity);
    }
    (r.try_inverse().unwrap() * r_hat).trace().re
}

/// Curvatures at a random state with `sources` elements against a 5-point
/// stencil of the LU-based trace fit. Returns the worst relative deviation.
pub fn curvature_against_stencil(rng: &mut ChaCha8Rng, sources: usize) -> f64 {
    let m = 12;
    let manifold = SteeringManifold::new(m).unwrap();
    let params = FilterParams::default();
    let truth: Vec<(f64, f64)> = (0..sources)
        .map(|k| {
            let lo = -2.5 + 2.5 * k as f64;
            (rng.gen_range(lo..lo + 2.0), rng.gen_range(0.5..4.0))
        })
        .collect();
    let mut r_hat = CMatrix::zeros(m, m);
    for _ in 0..rng.gen_range(20..60) {
        let mut x = CVector::zeros(m);
        for &(th, p) in &truth {
            x += manifold.steering(th).unwrap() * complex_gaussian(rng, p);
        }
        for v in x.iter_mut() {
            *v += complex_gaussian(rng, 0.25);
        }
        r_hat += &x * x.adjoint();
    }
    let pairs: Vec<(f64, f64)> = truth
        .iter()
        .map(|&(th, p)| (th + rng.gen_range(-0.005..0.005), p * rng.gen_range(0.8..1.2)))
        .collect();
    let est = HyperState::from_pairs(&pairs).unwrap();
    let curv = filter::curvatures(&r_hat, &est, &params, &manifold).unwrap();
    let base: Vec<(f64, f64)> = est.iter().map(|e| (e.theta, e.intensity)).collect();
    let mut worst: f64 = 0.0;
    for k in 0..base.len() {
        let stencil = |along_theta: bool, h: f64| {
            let f = |o: f64| {
                let mut p = base.clone();
                if along_theta {
                    p[k].0 += o;
                } else {
                    p[k].1 += o;
                }
                trace_fit_lu(&r_hat, m, &p, params.noise_var)
            };
            (-f(2.0 * h) + 16.0 * f(h) - 30.0 * f(0.0) + 16.0 * f(-h) - f(-2.0 * h)) / (12.0 * h * h)
        };
        // Directions flatter than the floor are clamped and have nothing to compare.
        let g_ref = stencil(true, 1e-3);
        let h_ref = stencil(false, 1e-3 * base[k].1);
        if g_ref > params.curvature_floor {
            worst = worst.max((curv.g[k] - g_ref).abs() / g_ref);
        }
        if h_ref > params.curvature_floor {
            worst = worst.max((curv.h[k] - h_ref).abs() / h_ref);
        }
    }
    worst
}

/// Hyper-states of order at most 2 over `angles` x `levels`, including the empty set.
fn enumerate_sets(angles: usize, levels: &[f64]) -> Vec<Vec<(usize, f64)>> {
    let mut out = vec![vec![]];
    for i in 0..angles {
        for &li in levels {
            out.push(vec![(i, li)]);
            for j in i + 1..angles {
                for &lj in levels {
                    out.push(vec![(i, li), (j, lj)]);
                }
            }
        }
    }
    out
}

/// One draw of the tiny posterior oracle: three grid angles, three intensity
/// levels, hyper-states of order at most two. The covariance comes from a
/// configuration in that space and the weights make it the exact optimum.
/// Returns whether brute-force maximisation of the approximate density and
/// the filter's estimate agree on order and angles.
pub fn tiny_posterior_agrees(rng: &mut ChaCha8Rng) -> bool {
    let m = 4;
    let grid = Grid::uniform(-1.5, 1.5, 3).unwrap();
    let dict = Dictionary::new(SteeringManifold::new(m).unwrap(), grid.clone());
    let levels = [1.0, 3.0, 9.0];
    let params = FilterParams {
        solver: SolverConfig {
            tol: 1e-12,
            max_sweeps: 100_000,
            merge_radius: Some(0.5),
            ..SolverConfig::default()
        },
        ..FilterParams::default()
    };
    let order = rng.gen_range(1..=2);
    let mut idx = vec![0, 1, 2];
    idx.sort_by_key(|_| rng.gen::<u32>());
    let truth: Vec<(usize, f64)> = idx[..order].iter().map(|&i| (i, levels[rng.gen_range(0..3)])).collect();
    let scale = rng.gen_range(5.0..50.0);
    let pairs: Vec<(f64, f64)> = truth.iter().map(|&(i, l)| (grid.points()[i], l)).collect();
    let r_true = dict
        .manifold()
        .covariance(&HyperState::from_pairs(&pairs).unwrap(), params.noise_var)
        .unwrap();
    let r_hat = &r_true * c(scale);
    let p = r_true.try_inverse().unwrap();
    let lambda: Vec<f64> = (0..3)
        .map(|k| {
            let g = scale * linalg::quad_form(&p, dict.atom(k));
            if truth.iter().any(|&(i, _)| i == k) {
                g
            } else {
                g * rng.gen_range(1.2..2.0)
            }
        })
        .collect();

    let log_density = |set: &[(usize, f64)]| {
        let pts: Vec<(f64, f64)> = set.iter().map(|&(i, l)| (grid.points()[i], l)).collect();
        -trace_fit_lu(&r_hat, m, &pts, params.noise_var) - set.iter().map(|&(i, l)| lambda[i] * l).sum::<f64>()
    };
    let sets = enumerate_sets(3, &levels);
    let best = sets
        .iter()
        .max_by(|a, b| log_density(a).total_cmp(&log_density(b)))
        .unwrap();

    let state = FilterState::initial(&dict, r_hat.clone(), lambda).unwrap();
    let est = filter::estimate(&state, &params, &dict).unwrap().support;
    let mut want: Vec<f64> = best.iter().map(|&(i, _)| grid.points()[i]).collect();
    want.sort_by(f64::total_cmp);
    est.len() == want.len() && est.iter().zip(&want).all(|(e, w)| (e.theta - w).abs() < 1e-9)
}

// ---- baselines ----

pub fn phd_non_negative(seed: u64, detections: usize) -> Check {
    let grid = Grid::with_spacing(0.02).unwrap();
    let params = PhdParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = PhdIntensity {
        values: (0..grid.len())
            .map(|_| if rng.gen_bool(0.1) { rng.gen_range(0.0..10.0) } else { 0.0 })
            .collect(),
        t: 0,
    };
    for _ in 0..3 {
        let z: Vec<f64> = (0..detections).map(|_| rng.gen_range(-3.1..3.1)).collect();
        d = phd_update(&phd_predict(&d, &params, &grid), &z, &params, &grid);
        prop_assert!(d.values.iter().all(|&v| v >= 0.0 && v.is_finite()));
    }
    Ok(())
}

/// With no detections and no births the mass decays by survival * (1 - detection) per tick.
pub fn phd_mass_decay(seed: u64) -> Check {
    let grid = Grid::with_spacing(0.01).unwrap();
    let params = PhdParams {
        birth: 0.0,
        ..PhdParams::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bumps: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| (rng.gen_range(-3.1..3.1), rng.gen_range(0.01..0.5), rng.gen_range(0.1..2.0)))
        .collect();
    let mut d = PhdIntensity {
        values: grid
            .points()
            .iter()
            .map(|t| bumps.iter().map(|&(c, w, a)| a * (-(t - c) * (t - c) / w).exp()).sum())
            .collect(),
        t: 0,
    };
    let m0 = d.mass(&grid);
    let factor = params.survival * (1.0 - params.detection);
    for t in 1..=4 {
        d = phd_update(&phd_predict(&d, &params, &grid), &[], &params, &grid);
        let expected = m0 * factor.powi(t);
        prop_assert!((d.mass(&grid) - expected).abs() <= 0.02 * expected, "t={}", t);
    }
    Ok(())
}

pub fn relax_order_monotone(seed: u64, k1: f64, k2: f64) -> Check {
    let dict = Dictionary::new(SteeringManifold::new(10).unwrap(), Grid::with_spacing(0.05).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_snapshot(&mut rng, 10);
    let (lo, hi) = if k1 <= k2 { (k1, k2) } else { (k2, k1) };
    let a = relax_fit(&x, &RelaxParams { k_ic: lo, ..RelaxParams::default() }, &dict).unwrap();
    let b = relax_fit(&x, &RelaxParams { k_ic: hi, ..RelaxParams::default() }, &dict).unwrap();
    prop_assert!(b.order <= a.order);
    Ok(())
}

pub fn window_psd_and_trace(seed: u64, eta: f64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = WindowState::zeros(5, eta).unwrap();
    for _ in 0..10 {
        let x = random_snapshot(&mut rng, 5);
        let next = window_update(&state, &x).unwrap();
        let expected = eta * state.r_hat.trace().re + x.x.norm_squared();
        prop_assert!((next.r_hat.trace().re - expected).abs() <= 1e-12 * expected);
        prop_assert!(linalg::is_psd(&next.r_hat, 1e-9));
        state = next;
    }
    Ok(())
}

pub fn projection_idempotent(seed: u64, rank: usize, alpha: f64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = ProjectionState::canonical(6, rank).unwrap();
    for _ in 0..5 {
        state = subspace_track(&state, &random_snapshot(&mut rng, 6), alpha).unwrap();
        prop_assert!(state.idempotency_defect() <= 1e-9);
        prop_assert!((state.p.trace().re - rank as f64).abs() <= 1e-9);
    }
    Ok(())
}

// ---- metrics ----

pub fn assignment_symmetric(a: &[f64], b: &[f64]) -> Check {
    let ab = assignment_error(a, b);
    let ba = assignment_error(b, a);
    prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
    Ok(())
}

/// `b` is `a` rotated and optionally with one entry moved; zero error must
/// coincide with multiset equality.
pub fn assignment_zero_law(a: &[f64], change: Option<(usize, f64)>, rot: usize) -> Check {
    let mut b = a.to_vec();
    if let (Some((i, d)), false) = (change, b.is_empty()) {
        let i = i % b.len();
        b[i] += d;
    }
    if !b.is_empty() {
        let k = rot % b.len();
        b.rotate_left(k);
    }
    let mut sa = a.to_vec();
    let mut sb = b.clone();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    prop_assert_eq!(assignment_error(a, &b) == 0.0, sa == sb);
    Ok(())
}

pub fn assignment_solvers_agree(a: &[f64], b: &[f64]) -> Check {
    let e = assignment_error_exhaustive(a, b);
    let h = assignment_error_hungarian(a, b);
    prop_assert!((e - h).abs() <= 1e-12 * e.max(1.0), "{} vs {}", e, h);
    Ok(())
}
