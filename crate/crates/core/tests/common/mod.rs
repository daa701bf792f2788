//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use spicetrack::{CMatrix, CVector};

/// Objective evaluated with a generic LU inverse, independent of the solver's
/// Cholesky path.
pub fn spice_objective(atoms: &[CVector], r_hat: &CMatrix, w: &[f64], sigma2: f64, x: &[f64]) -> f64 {
    let m = r_hat.nrows();
    let mut r = DMatrix::<Complex64>::identity(m, m) * Complex64::new(sigma2, 0.0);
    for (a, &v) in atoms.iter().zip(x) {
        r += a * a.adjoint() * Complex64::new(v, 0.0);
    }
    let inv = r.try_inverse().expect("model covariance is invertible");
    (inv * r_hat).trace().re + x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()
}

fn spice_gradient(atoms: &[CVector], r_hat: &CMatrix, w: &[f64], sigma2: f64, x: &[f64]) -> Vec<f64> {
    let m = r_hat.nrows();
    let mut r = DMatrix::<Complex64>::identity(m, m) * Complex64::new(sigma2, 0.0);
    for (a, &v) in atoms.iter().zip(x) {
        r += a * a.adjoint() * Complex64::new(v, 0.0);
    }
    let inv = r.try_inverse().unwrap();
    let q = &inv * r_hat * &inv;
    atoms
        .iter()
        .zip(w)
        .map(|(a, &wk)| wk - (a.adjoint() * &q * a)[(0, 0)].re)
        .collect()
}

/// Accelerated projected gradient with backtracking and adaptive restart,
/// run until the KKT residual `max |min(x, grad)|` falls below `tol` times the
/// weight scale, or the step stalls below `tol`.
pub fn projected_gradient(
    atoms: &[CVector],
    r_hat: &CMatrix,
    w: &[f64],
    sigma2: f64,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, f64) {
    let n = atoms.len();
    let f = |x: &[f64]| spice_objective(atoms, r_hat, w, sigma2, x);
    let mut x = vec![0.0; n];
    let mut y = x.clone();
    let mut fx = f(&x);
    let mut step: f64 = 1.0;
    let mut momentum: f64 = 1.0;
    for _ in 0..max_iter {
        let g = spice_gradient(atoms, r_hat, w, sigma2, &y);
        let fy = f(&y);
        let mut next;
        loop {
            next = y.iter().zip(&g).map(|(yi, gi)| (yi - step * gi).max(0.0)).collect::<Vec<_>>();
            let diff: Vec<f64> = next.iter().zip(&y).map(|(a, b)| a - b).collect();
            let lin: f64 = diff.iter().zip(&g).map(|(d, gi)| d * gi).sum();
            let sq: f64 = diff.iter().map(|d| d * d).sum();
            if f(&next) <= fy + lin + sq / (2.0 * step) + 1e-15 * fy.abs() {
                break;
            }
            step *= 0.5;
            if step < 1e-18 {
                break;
            }
        }
        let fnext = f(&next);
        let moved: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let m_next = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        if fnext > fx + 1e-15 * fx.abs() {
            // restart
            if momentum == 1.0 {
                // Already restarted from x: no descent is left at this precision.
                break;
            }
            momentum = 1.0;
            y = x.clone();
            step *= 2.0;
            continue;
        }
        y = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a + (momentum - 1.0) / m_next * (a - b)).max(0.0))
            .collect();
        momentum = m_next;
        x = next;
        fx = fnext;
        step *= 1.5;
        let g = spice_gradient(atoms, r_hat, w, sigma2, &x);
        let kkt = x.iter().zip(&g).map(|(xi, gi)| xi.min(*gi).abs()).fold(0.0, f64::max);
        let scale = w.iter().cloned().fold(1.0, f64::max);
        if moved < tol || kkt < tol * scale {
            break;
        }
    }
    (x, fx)
}

/// Random weighted SPICE instance: `m` sensors, `n` grid points spread over
/// `[-pi, pi)`, a sample covariance from a few random sources plus noise, and
/// weights in `[0.5, 3]`.
pub struct RandomProblem {
    pub dict: spicetrack::Dictionary,
    pub r_hat: CMatrix,
    pub weights: Vec<f64>,
    pub noise_var: f64,
}

impl RandomProblem {
    pub fn atoms(&self) -> Vec<CVector> {
        (0..self.dict.len()).map(|k| self.dict.atom(k).clone()).collect()
    }
}

pub fn random_problem<R: rand::Rng>(rng: &mut R, m: usize, n: usize) -> RandomProblem {
    use std::f64::consts::PI;
    let spacing = 2.0 * PI / n as f64;
    let first = -PI + rng.gen::<f64>() * spacing * 0.5;
    let grid = spicetrack::Grid::uniform(first, spacing, n).unwrap();
    let manifold = spicetrack::SteeringManifold::new(m).unwrap();
    let dict = spicetrack::Dictionary::new(manifold.clone(), grid);
    let noise_var = 0.2 + rng.gen::<f64>();
    let sources = rng.gen_range(1..=3);
    let snapshots = rng.gen_range(1..=12);
    let mut r_hat = CMatrix::zeros(m, m);
    let angles: Vec<f64> = (0..sources).map(|_| rng.gen_range(-PI..PI)).collect();
    for _ in 0..snapshots {
        let mut x = CVector::zeros(m);
        for &th in &angles {
            x += manifold.steering(th).unwrap() * spicetrack::array::complex_gaussian(rng, 2.0);
        }
        for v in x.iter_mut() {
            *v += spicetrack::array::complex_gaussian(rng, noise_var);
        }
        r_hat += &x * x.adjoint();
    }
    let weights = (0..n).map(|_| rng.gen_range(0.5..3.0) * snapshots as f64).collect();
    RandomProblem {
        dict,
        r_hat,
        weights,
        noise_var,
    }
}

/// Indices holding more than `rel` of the largest entry.
pub fn support(x: &[f64], rel: f64) -> Vec<usize> {
    let max = x.iter().cloned().fold(0.0, f64::max);
    (0..x.len()).filter(|&k| max > 0.0 && x[k] > rel * max).collect()
}
pub mod props;
