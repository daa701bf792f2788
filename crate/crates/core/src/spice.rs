//! Weighted SPICE covariance fitting on a fixed grid.
//!
//! The program solved is
//!
//! ```text
//! minimize_{I >= 0}  tr[(sigma^2 I + sum_k I_k a_k a_k^H)^{-1} R_hat] + sum_k lambda_k I_k
//! ```
//!
//! by cyclic coordinate descent. Each scalar sub-problem has a closed form:
//! with `R_{-k}` the model covariance without coordinate `k`,
//! `b = a^H R_{-k}^{-1} R_hat R_{-k}^{-1} a` and `c = a^H R_{-k}^{-1} a`, the
//! objective along `I_k` is `const - b I/(1 + c I) + lambda_k I`, minimised at
//! `max(0, (sqrt(b/lambda_k) - 1)/c)`.
//!
//! The sweep keeps `P = R^{-1}` and `Q = P R_hat P` current through
//! Sherman-Morrison updates and evaluates both quadratic forms in O(m) from
//! their diagonal sums, which the ULA steering structure allows. Both are
//! refactored from scratch at the start of every sweep.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{HyperState, SourceElement, SteeringManifold};
use crate::linalg;
use crate::{CMatrix, CVector, Error, Result};

const SPACING_TOL: f64 = 1e-12;

/// Uniform grid of candidate positions inside `[-pi, pi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<f64>,
    spacing: f64,
}

impl Grid {
    /// Grid starting at `-pi` with the given spacing, ending at the last point
    /// not beyond `pi`. Spacing 0.01 gives 629 points.
    pub fn with_spacing(spacing: f64) -> Result<Self> {
        if !(spacing > 0.0 && spacing < 2.0 * PI) {
            return Err(Error::invalid("spacing", format!("{spacing} not in (0, 2pi)")));
        }
        let n = ((2.0 * PI) / spacing + 1e-9).floor() as usize + 1;
        let points = (0..n)
            .map(|k| (-PI + k as f64 * spacing).min(PI))
            .collect();
        Ok(Self { points, spacing })
    }

    /// `n` points `first, first + spacing, ...`, all required to lie in `[-pi, pi]`.
    pub fn uniform(first: f64, spacing: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n", "grid needs at least one point"));
        }
        if !(spacing > 0.0) {
            return Err(Error::invalid("spacing", "must be positive"));
        }
        let points: Vec<f64> = (0..n).map(|k| first + k as f64 * spacing).collect();
        for &p in &points {
            crate::array::check_angle(p)?;
        }
        Ok(Self { points, spacing })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn nearest_index(&self, theta: f64) -> usize {
        let k = ((theta - self.points[0]) / self.spacing).round();
        (k.max(0.0) as usize).min(self.points.len() - 1)
    }

    /// Checks the documented invariants; used by tests.
    pub fn is_well_formed(&self) -> bool {
        let increasing = self.points.windows(2).all(|w| w[1] > w[0]);
        let uniform = self
            .points
            .windows(2)
            .all(|w| ((w[1] - w[0]) - self.spacing).abs() < SPACING_TOL);
        increasing
            && uniform
            && self.points.first().is_some_and(|&p| p >= -PI)
            && self.points.last().is_some_and(|&p| p <= PI)
    }
}

/// A grid together with its precomputed steering vectors.
#[derive(Debug, Clone)]
pub struct Dictionary {
    manifold: SteeringManifold,
    grid: Grid,
    atoms: Vec<CVector>,
}

impl Dictionary {
    pub fn new(manifold: SteeringManifold, grid: Grid) -> Self {
        let atoms = grid
            .points()
            .iter()
            .map(|&t| manifold.steering_unchecked(t))
            .collect();
        Self {
            manifold,
            grid,
            atoms,
        }
    }

    pub fn manifold(&self) -> &SteeringManifold {
        &self.manifold
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn sensors(&self) -> usize {
        self.manifold.sensors()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atom(&self, k: usize) -> &CVector {
        &self.atoms[k]
    }

    /// `sigma^2 I + sum_k I_k a_k a_k^H` over the grid. The sum is Toeplitz
    /// with lag `d` entry `sum_k I_k e^{i d theta_k}`.
    pub fn model_covariance(&self, intensities: &[f64], noise_var: f64) -> CMatrix {
        let m = self.sensors();
        let mut lags = vec![Complex64::new(0.0, 0.0); m];
        for (k, &p) in intensities.iter().enumerate() {
            if p != 0.0 {
                for (l, a) in lags.iter_mut().zip(self.atoms[k].iter()) {
                    *l += a * p;
                }
            }
        }
        lags[0] += noise_var;
        CMatrix::from_fn(m, m, |i, j| if i >= j { lags[i - j] } else { lags[j - i].conj() })
    }

    /// `a_k^H M a_k` for every grid point.
    pub fn quad_forms(&self, m: &CMatrix) -> Vec<f64> {
        let sums = linalg::diagonal_sums(m);
        self.atoms
            .iter()
            .map(|a| linalg::ula_form(&sums, a.as_slice()))
            .collect()
    }
}

/// Coordinate-descent and support-extraction settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub max_sweeps: usize,
    /// Relative objective decrease per sweep below which the solver stops.
    pub tol: f64,
    pub rel_threshold: f64,
    /// Cluster radius for support extraction; `None` means twice the grid spacing.
    pub merge_radius: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 200,
            tol: 1e-7,
            rel_threshold: 1e-3,
            merge_radius: None,
        }
    }
}

impl SolverConfig {
    pub fn merge_radius_for(&self, grid: &Grid) -> f64 {
        self.merge_radius.unwrap_or(2.0 * grid.spacing())
    }
}

/// Inputs of one weighted SPICE program.
#[derive(Debug, Clone)]
pub struct SpiceProblem {
    pub r_hat: CMatrix,
    pub weights: Vec<f64>,
    pub noise_var: f64,
}

impl SpiceProblem {
    pub fn new(r_hat: CMatrix, weights: Vec<f64>, noise_var: f64) -> Result<Self> {
        if !(noise_var > 0.0) {
            return Err(Error::invalid("noise_var", "must be positive"));
        }
        if r_hat.nrows() != r_hat.ncols() {
            return Err(Error::DimensionMismatch {
                expected: r_hat.nrows(),
                actual: r_hat.ncols(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
            return Err(Error::invalid("weights", format!("{w} is negative")));
        }
        Ok(Self {
            r_hat,
            weights,
            noise_var,
        })
    }

    fn check(&self, dict: &Dictionary) -> Result<()> {
        if self.r_hat.nrows() != dict.sensors() {
            return Err(Error::DimensionMismatch {
                expected: dict.sensors(),
                actual: self.r_hat.nrows(),
            });
        }
        if self.weights.len() != dict.len() {
            return Err(Error::DimensionMismatch {
                expected: dict.len(),
                actual: self.weights.len(),
            });
        }
        Ok(())
    }

    /// Objective evaluated from scratch at `intensities`.
    pub fn objective(&self, dict: &Dictionary, intensities: &[f64]) -> Result<f64> {
        self.check(dict)?;
        if intensities.len() != dict.len() {
            return Err(Error::DimensionMismatch {
                expected: dict.len(),
                actual: intensities.len(),
            });
        }
        let r = dict.model_covariance(intensities, self.noise_var);
        let p = linalg::hpd_inverse(&r)?;
        let fit = linalg::trace_product(&p, &self.r_hat).re;
        let penalty: f64 = intensities
            .iter()
            .zip(&self.weights)
            .map(|(i, w)| i * w)
            .sum();
        Ok(fit + penalty)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpiceSolution {
    pub intensities: Vec<f64>,
    pub objective: f64,
    pub sweeps: usize,
    pub converged: bool,
    /// Objective at the starting point followed by the value after each sweep.
    pub history: Vec<f64>,
}

/// Minimiser over `I >= 0` of `-b I/(1 + c I) + weight I`.
pub fn scalar_minimizer(b: f64, c: f64, weight: f64, index: usize) -> Result<f64> {
    let b = b.max(0.0);
    if weight <= 0.0 {
        return if b > 0.0 {
            Err(Error::Unbounded { index })
        } else {
            Ok(0.0)
        };
    }
    let ratio = b / weight;
    if ratio <= 1.0 || c <= 0.0 {
        return Ok(0.0);
    }
    Ok(((ratio.sqrt() - 1.0) / c).max(0.0))
}

/// Exact minimiser of the objective along coordinate `k` with the other
/// coordinates held at `intensities`. Evaluated from scratch.
pub fn coordinate_update(
    problem: &SpiceProblem,
    dict: &Dictionary,
    intensities: &[f64],
    k: usize,
) -> Result<f64> {
    problem.check(dict)?;
    if intensities.iter().any(|i| !(*i >= 0.0)) {
        return Err(Error::invalid("intensities", "must be non-negative"));
    }
    let mut others = intensities.to_vec();
    others[k] = 0.0;
    let r = dict.model_covariance(&others, problem.noise_var);
    let p = linalg::hpd_inverse(&r)?;
    let a = dict.atom(k);
    let u = &p * a;
    let c = (a.adjoint() * &u)[(0, 0)].re;
    let b = (u.adjoint() * &problem.r_hat * &u)[(0, 0)].re;
    scalar_minimizer(b, c, problem.weights[k], k)
}

struct SweepState {
    p: CMatrix,
    q: CMatrix,
    p_sums: Vec<Complex64>,
    q_sums: Vec<Complex64>,
    u: Vec<Complex64>,
    w: Vec<Complex64>,
}

impl SweepState {
    /// Factorises the model covariance at `x` and returns the state with the
    /// objective evaluated from scratch.
    fn fresh(problem: &SpiceProblem, dict: &Dictionary, x: &[f64]) -> Result<(Self, f64)> {
        let r = dict.model_covariance(x, problem.noise_var);
        let p = linalg::hpd_inverse(&r)?;
        let fit = linalg::trace_product(&p, &problem.r_hat).re;
        let penalty: f64 = x.iter().zip(&problem.weights).map(|(i, w)| i * w).sum();
        let mut q = &p * &problem.r_hat * &p;
        linalg::symmetrize(&mut q);
        let p_sums = linalg::diagonal_sums(&p);
        let q_sums = linalg::diagonal_sums(&q);
        let m = p.nrows();
        let zero = Complex64::new(0.0, 0.0);
        Ok((
            Self {
                p,
                q,
                p_sums,
                q_sums,
                u: vec![zero; m],
                w: vec![zero; m],
            },
            fit + penalty,
        ))
    }

    /// Applies `I_k += delta` to `P` and `Q` in place:
    /// `P -= beta u u^H`, `Q -= beta (u w^H + w u^H) - beta^2 b u u^H`
    /// with `u = P a`, `w = Q a`, `beta = delta / (1 + delta c)`.
    fn apply(&mut self, a: &CVector, delta: f64, c_full: f64, b_full: f64) {
        let m = self.p.nrows();
        let a = a.as_slice();
        let zero = Complex64::new(0.0, 0.0);
        let (u, w) = (&mut self.u[..m], &mut self.w[..m]);
        u.fill(zero);
        w.fill(zero);
        {
            // Column-major: column j is the slice [j m, (j + 1) m).
            let p = self.p.as_slice();
            let q = self.q.as_slice();
            for ((pc, qc), &aj) in p.chunks_exact(m).zip(q.chunks_exact(m)).zip(a) {
                for (((ui, wi), &pij), &qij) in u.iter_mut().zip(w.iter_mut()).zip(pc).zip(qc) {
                    *ui += pij * aj;
                    *wi += qij * aj;
                }
            }
        }
        let beta = delta / (1.0 + delta * c_full);
        let beta2b = beta * beta * b_full;
        let (ps, qs) = (&mut self.p_sums[..m], &mut self.q_sums[..m]);
        ps.fill(zero);
        qs.fill(zero);
        let p = self.p.as_mut_slice();
        let q = self.q.as_mut_slice();
        for j in 0..m {
            let uj = u[j].conj();
            let wj = w[j].conj();
            let col = j * m;
            for i in 0..=j {
                let uu = u[i] * uj;
                let sym = u[i] * wj + w[i] * uj;
                let pv = p[col + i] - uu * beta;
                let qv = q[col + i] - sym * beta + uu * beta2b;
                p[col + i] = pv;
                q[col + i] = qv;
                ps[j - i] += pv;
                qs[j - i] += qv;
            }
        }
        // Mirror the strict upper triangle.
        for j in 0..m {
            for i in 0..j {
                p[j + i * m] = p[i + j * m].conj();
                q[j + i * m] = q[i + j * m].conj();
            }
        }
    }
}

/// Cyclic coordinate descent from `warm_start` (or zeros) until the relative
/// objective decrease over a sweep falls below `config.tol`.
pub fn solve(
    problem: &SpiceProblem,
    dict: &Dictionary,
    config: &SolverConfig,
    warm_start: Option<&[f64]>,
) -> Result<SpiceSolution> {
    problem.check(dict)?;
    let n = dict.len();
    let mut x = match warm_start {
        Some(w) if w.len() == n => w.iter().map(|v| v.max(0.0)).collect(),
        Some(w) => {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: w.len(),
            })
        }
        None => vec![0.0; n],
    };
    let mut history = Vec::new();
    let mut sweeps = 0;
    let mut converged = false;
    loop {
        let (mut st, f) = SweepState::fresh(problem, dict, &x)?;
        if let Some(&prev) = history.last() {
            let decrease: f64 = prev - f;
            if decrease < config.tol * f.abs() {
                converged = true;
            }
        }
        history.push(f);
        if converged || sweeps >= config.max_sweeps {
            break;
        }
        sweeps += 1;
        for k in 0..n {
            let a = dict.atom(k);
            let (c_full, b_full) = linalg::ula_form_pair(&st.p_sums, &st.q_sums, a.as_slice());
            let current = x[k];
            // (R - I_k a a^H)^{-1} a = P a / (1 - I_k a^H P a)
            let denom = 1.0 - current * c_full;
            let c = c_full / denom;
            let b = b_full / (denom * denom);
            let next = scalar_minimizer(b, c, problem.weights[k], k)?;
            if next != current {
                st.apply(a, next - current, c_full, b_full);
                x[k] = next;
            }
        }
    }
    let objective = *history.last().expect("history holds the starting point");
    Ok(SpiceSolution {
        intensities: x,
        objective,
        sweeps,
        converged,
        history,
    })
}

/// Groups grid points above `rel_threshold * max` into runs whose neighbours
/// are within `merge_radius`; each run becomes one element at its
/// intensity-weighted centroid carrying the summed intensity.
pub fn extract_support(
    intensities: &[f64],
    grid: &Grid,
    merge_radius: f64,
    rel_threshold: f64,
) -> HyperState {
    let max = intensities.iter().cloned().fold(0.0_f64, f64::max);
    if max <= 0.0 {
        return HyperState::empty();
    }
    let threshold = rel_threshold * max;
    let points = grid.points();
    let mut elements = Vec::new();
    let mut cluster: Option<(f64, f64, f64)> = None; // (weight, weighted theta, last theta)
    for (k, &v) in intensities.iter().enumerate() {
        if v <= threshold {
            continue;
        }
        let theta = points[k];
        cluster = match cluster {
            Some((w, wt, last)) if theta - last <= merge_radius + SPACING_TOL => {
                Some((w + v, wt + v * theta, theta))
            }
            Some((w, wt, _)) => {
                elements.push(SourceElement::new((wt / w).clamp(-PI, PI), w));
                Some((v, v * theta, theta))
            }
            None => Some((v, v * theta, theta)),
        };
    }
    if let Some((w, wt, _)) = cluster {
        elements.push(SourceElement::new((wt / w).clamp(-PI, PI), w));
    }
    HyperState::new(elements).expect("centroids of grid points stay in the domain")
}
