//! The sparsity-based recursive Bayesian filter.
//!
//! The posterior over hyper-states is kept in the family
//! `p(S) ∝ exp(-tr(R_hat R(S)^{-1}) - sum lambda(theta) I)`, parametrised by a
//! Hermitian PSD matrix `R_hat` and a non-negative weight per grid point.
//! One tick is: rank-one update of `R_hat` and `lambda` with the snapshot,
//! MAP extraction through weighted SPICE, Laplace curvatures at the MAP point,
//! and the simplified KL-projected prediction.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{HyperState, Snapshot, SteeringManifold};
use crate::linalg;
use crate::spice::{self, Dictionary, SolverConfig, SpiceProblem, SpiceSolution};
use crate::{CMatrix, Error, Result};

/// First moment of the birth density, `delta1(theta) = ∫ I delta(theta, I) dI`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BirthMoment {
    Uniform(f64),
    PerPoint(Vec<f64>),
}

impl BirthMoment {
    fn at(&self, k: usize) -> f64 {
        match self {
            BirthMoment::Uniform(v) => *v,
            BirthMoment::PerPoint(v) => v[k],
        }
    }
}

/// How the prediction step forgets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictionMode {
    /// Forgetting factor from the Laplace curvatures, weights pulled toward
    /// the fitted spectrum by the birth moment.
    Laplace,
    /// Constant forgetting factor; the predicted weights are held at their
    /// previous predicted value. Reduces the filter to sliding-window SPICE.
    Fixed { factor: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterParams {
    /// Sparsity rate added to every weight per observed snapshot.
    pub lambda0: f64,
    pub noise_var: f64,
    /// Position random-walk variance per tick.
    pub sigma_theta2: f64,
    /// Intensity random-walk variance per tick.
    pub sigma_intensity2: f64,
    pub birth_moment: BirthMoment,
    /// Finite-difference step for position curvatures.
    pub theta_step: f64,
    /// Intensity step is `intensity_step_rel * max(I, noise_var)`.
    pub intensity_step_rel: f64,
    pub curvature_floor: f64,
    /// Forgetting on ticks with an empty estimate is `1/(1 + sigma_theta2 * kappa)`.
    pub empty_kappa: f64,
    pub mode: PredictionMode,
    pub solver: SolverConfig,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            lambda0: 2.0,
            noise_var: 0.25,
            sigma_theta2: 0.03 * 0.03,
            sigma_intensity2: 0.03 * 0.03,
            birth_moment: BirthMoment::Uniform(0.1),
            theta_step: 1e-4,
            intensity_step_rel: 1e-4,
            curvature_floor: 1e-6,
            empty_kappa: 1.0,
            mode: PredictionMode::Laplace,
            solver: SolverConfig::default(),
        }
    }
}

impl FilterParams {
    pub fn validate(&self, grid_len: usize) -> Result<()> {
        if !(self.noise_var > 0.0) {
            return Err(Error::invalid("noise_var", "must be positive"));
        }
        let non_negative = [
            ("lambda0", self.lambda0),
            ("sigma_theta2", self.sigma_theta2),
            ("sigma_intensity2", self.sigma_intensity2),
            ("empty_kappa", self.empty_kappa),
            ("curvature_floor", self.curvature_floor),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) {
                return Err(Error::invalid(name, "must be non-negative"));
            }
        }
        if !(self.theta_step > 0.0 && self.intensity_step_rel > 0.0) {
            return Err(Error::invalid("theta_step", "finite-difference steps must be positive"));
        }
        match &self.birth_moment {
            BirthMoment::Uniform(v) if !(*v >= 0.0) => {
                return Err(Error::invalid("birth_moment", "must be non-negative"))
            }
            BirthMoment::PerPoint(v) if v.len() != grid_len => {
                return Err(Error::DimensionMismatch {
                    expected: grid_len,
                    actual: v.len(),
                })
            }
            BirthMoment::PerPoint(v) if v.iter().any(|x| !(*x >= 0.0)) => {
                return Err(Error::invalid("birth_moment", "must be non-negative"))
            }
            _ => {}
        }
        if let PredictionMode::Fixed { factor } = self.mode {
            if !(factor > 0.0 && factor <= 1.0) {
                return Err(Error::invalid("factor", "must lie in (0, 1]"));
            }
        }
        Ok(())
    }
}

/// Parameters `(R_hat, lambda)` of the approximate posterior at tick `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub r_hat: CMatrix,
    /// One weight per grid point.
    pub lambda: Vec<f64>,
    pub t: usize,
    /// Last SPICE solution, reused as the starting point of the next solve.
    pub warm_start: Option<Vec<f64>>,
}

impl FilterState {
    /// Initial state at `t = 1`; `r_init` must be Hermitian positive definite.
    pub fn initial(dict: &Dictionary, r_init: CMatrix, lambda_init: Vec<f64>) -> Result<Self> {
        let m = dict.sensors();
        if r_init.nrows() != m || r_init.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: r_init.nrows(),
            });
        }
        if lambda_init.len() != dict.len() {
            return Err(Error::DimensionMismatch {
                expected: dict.len(),
                actual: lambda_init.len(),
            });
        }
        if lambda_init.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("lambda_init", "must be non-negative"));
        }
        if linalg::hermitian_defect(&r_init) > 1e-12 || linalg::hpd_inverse(&r_init).is_err() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self {
            r_hat: r_init,
            lambda: lambda_init,
            t: 1,
            warm_start: None,
        })
    }

    /// `R_hat = sigma^2 I`, `lambda ≡ lambda0`.
    pub fn with_defaults(dict: &Dictionary, params: &FilterParams) -> Result<Self> {
        let m = dict.sensors();
        Self::initial(
            dict,
            CMatrix::identity(m, m) * Complex64::new(params.noise_var, 0.0),
            vec![params.lambda0; dict.len()],
        )
    }

    /// `R_hat += x x^H`, `lambda += lambda0`.
    pub fn update(&self, x: &Snapshot, params: &FilterParams) -> Result<Self> {
        if x.len() != self.r_hat.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.r_hat.nrows(),
                actual: x.len(),
            });
        }
        Ok(Self {
            r_hat: &self.r_hat + linalg::outer(&x.x),
            lambda: self.lambda.iter().map(|l| l + params.lambda0).collect(),
            t: self.t,
            warm_start: self.warm_start.clone(),
        })
    }

    pub fn spice_problem(&self, params: &FilterParams) -> Result<SpiceProblem> {
        SpiceProblem::new(self.r_hat.clone(), self.lambda.clone(), params.noise_var)
    }

    pub fn to_checkpoint(&self, params: &FilterParams) -> Result<String> {
        let m = self.r_hat.nrows();
        let mut r_hat = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                let z = self.r_hat[(i, j)];
                r_hat.push([z.re, z.im]);
            }
        }
        let cp = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            t: self.t,
            sensors: m,
            r_hat,
            lambda: self.lambda.clone(),
            warm_start: self.warm_start.clone(),
            params: params.clone(),
        };
        serde_json::to_string_pretty(&cp).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_checkpoint(text: &str) -> Result<(Self, FilterParams)> {
        let cp: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if cp.format != CHECKPOINT_FORMAT || cp.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format {} v{}",
                cp.format, cp.version
            )));
        }
        let m = cp.sensors;
        if cp.r_hat.len() != m * m {
            return Err(Error::Checkpoint(format!(
                "expected {} matrix entries, found {}",
                m * m,
                cp.r_hat.len()
            )));
        }
        let r_hat = CMatrix::from_fn(m, m, |i, j| {
            let [re, im] = cp.r_hat[i * m + j];
            Complex64::new(re, im)
        });
        Ok((
            Self {
                r_hat,
                lambda: cp.lambda,
                t: cp.t,
                warm_start: cp.warm_start,
            },
            cp.params,
        ))
    }
}

const CHECKPOINT_FORMAT: &str = "spicetrack-filter-state";
const CHECKPOINT_VERSION: u32 = 1;

/// Self-describing textual dump of a filter state. `r_hat` is row-major
/// `[re, im]` pairs.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format: String,
    version: u32,
    t: usize,
    sensors: usize,
    r_hat: Vec<[f64; 2]>,
    lambda: Vec<f64>,
    warm_start: Option<Vec<f64>>,
    params: FilterParams,
}

/// MAP hyper-state and the SPICE solution it was extracted from.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub support: HyperState,
    pub solution: SpiceSolution,
}

/// Solves the weighted SPICE program for `state` and extracts its support.
pub fn estimate(state: &FilterState, params: &FilterParams, dict: &Dictionary) -> Result<Estimate> {
    let problem = state.spice_problem(params)?;
    let solution = spice::solve(&problem, dict, &params.solver, state.warm_start.as_deref())?;
    let support = spice::extract_support(
        &solution.intensities,
        dict.grid(),
        params.solver.merge_radius_for(dict.grid()),
        params.solver.rel_threshold,
    );
    Ok(Estimate { support, solution })
}

/// Second derivatives of `tr(R_hat R(S)^{-1})` at the MAP point, per element.
#[derive(Debug, Clone, PartialEq)]
pub struct Curvatures {
    /// Along each element's position.
    pub g: Vec<f64>,
    /// Along each element's intensity.
    pub h: Vec<f64>,
}

/// `tr(R_hat R^{-1})` for `R = sigma^2 I + sum I a(theta) a(theta)^H`.
pub fn trace_fit(
    r_hat: &CMatrix,
    manifold: &SteeringManifold,
    elements: &[(f64, f64)],
    noise_var: f64,
) -> Result<f64> {
    let r = manifold.covariance_of(elements.iter().copied(), noise_var);
    let p = linalg::hpd_inverse(&r)?;
    Ok(linalg::trace_product(r_hat, &p).re)
}

/// Central second difference of `trace_fit` along one coordinate of one element.
fn second_difference(
    r_hat: &CMatrix,
    manifold: &SteeringManifold,
    base: &[(f64, f64)],
    noise_var: f64,
    index: usize,
    along_theta: bool,
    step: f64,
) -> Result<f64> {
    let eval = |offset: f64| {
        let mut pts = base.to_vec();
        if along_theta {
            pts[index].0 += offset;
        } else {
            pts[index].1 += offset;
        }
        trace_fit(r_hat, manifold, &pts, noise_var)
    };
    let f0 = eval(0.0)?;
    let fp = eval(step)?;
    let fm = eval(-step)?;
    Ok((fp - 2.0 * f0 + fm) / (step * step))
}

/// Curvatures `G_k`, `H_k` of the negative log-density at `estimate`, clamped
/// below by `params.curvature_floor`.
pub fn curvatures(
    r_hat: &CMatrix,
    estimate: &HyperState,
    params: &FilterParams,
    manifold: &SteeringManifold,
) -> Result<Curvatures> {
    let base: Vec<(f64, f64)> = estimate.iter().map(|e| (e.theta, e.intensity)).collect();
    let mut g = Vec::with_capacity(base.len());
    let mut h = Vec::with_capacity(base.len());
    for (k, &(_, intensity)) in base.iter().enumerate() {
        let gk = second_difference(r_hat, manifold, &base, params.noise_var, k, true, params.theta_step)?;
        let step_i = params.intensity_step_rel * intensity.max(params.noise_var);
        let hk = second_difference(r_hat, manifold, &base, params.noise_var, k, false, step_i)?;
        g.push(gk.max(params.curvature_floor));
        h.push(hk.max(params.curvature_floor));
    }
    Ok(Curvatures { g, h })
}

/// Scale applied to `R_hat` by the prediction step.
pub fn forgetting_factor(curv: &Curvatures, params: &FilterParams) -> f64 {
    if let PredictionMode::Fixed { factor } = params.mode {
        return factor;
    }
    let n = curv.g.len();
    if n == 0 {
        return 1.0 / (1.0 + params.sigma_theta2 * params.empty_kappa);
    }
    let pos: f64 = curv.g.iter().map(|g| 1.0 / (1.0 + params.sigma_theta2 * g)).sum();
    let int: f64 = curv.h.iter().map(|h| 1.0 / (1.0 + params.sigma_intensity2 * h)).sum();
    (pos + int) / (2 * n) as f64
}

/// `a^H R_+^{-1} R_hat R_+^{-1} a` over the grid, with `R_+ = R(estimate)`.
pub fn fitted_spectrum(
    r_hat: &CMatrix,
    estimate: &HyperState,
    params: &FilterParams,
    dict: &Dictionary,
) -> Result<Vec<f64>> {
    let r_plus = dict
        .manifold()
        .covariance_of(estimate.iter().map(|e| (e.theta, e.intensity)), params.noise_var);
    let p = linalg::hpd_inverse(&r_plus)?;
    let q = &p * r_hat * &p;
    Ok(dict.quad_forms(&q))
}

/// Poisson density of additional elements around the MAP point,
/// `exp(a^H P R_hat P a I / (1 + a^H P a I) - lambda(theta) I)` with `P = R(estimate)^{-1}`.
/// `lambda(theta)` is read at the nearest grid point.
pub fn birth_density(
    state: &FilterState,
    estimate: &HyperState,
    theta: f64,
    intensity: f64,
    params: &FilterParams,
    dict: &Dictionary,
) -> Result<f64> {
    crate::array::check_angle(theta)?;
    if !(intensity >= 0.0) {
        return Err(Error::invalid("intensity", "must be non-negative"));
    }
    let manifold = dict.manifold();
    let r_plus = manifold.covariance_of(estimate.iter().map(|e| (e.theta, e.intensity)), params.noise_var);
    let p = linalg::hpd_inverse(&r_plus)?;
    let a = manifold.steering_unchecked(theta);
    let pa = &p * &a;
    let num = linalg::quad_form(&state.r_hat, &pa) * intensity;
    let den = 1.0 + (a.adjoint() * &pa)[(0, 0)].re * intensity;
    let lambda = state.lambda[dict.grid().nearest_index(theta)];
    Ok((num / den - lambda * intensity).exp())
}

/// Prediction from the updated state: `R_hat <- gamma R_hat`, and per grid point
/// `lambda <- [lambda - delta1/2 (lambda - a^H R_+^{-1} R_hat R_+^{-1} a)]_+`.
pub fn predict(
    state: &FilterState,
    estimate: &HyperState,
    curv: &Curvatures,
    params: &FilterParams,
    dict: &Dictionary,
) -> Result<FilterState> {
    let gamma = forgetting_factor(curv, params);
    let lambda = match params.mode {
        PredictionMode::Fixed { .. } => state.lambda.iter().map(|l| l - params.lambda0).collect(),
        PredictionMode::Laplace => {
            let fitted = fitted_spectrum(&state.r_hat, estimate, params, dict)?;
            state
                .lambda
                .iter()
                .zip(&fitted)
                .enumerate()
                .map(|(k, (&l, &q))| (l - 0.5 * params.birth_moment.at(k) * (l - q)).max(0.0))
                .collect()
        }
    };
    Ok(FilterState {
        r_hat: &state.r_hat * Complex64::new(gamma, 0.0),
        lambda,
        t: state.t + 1,
        warm_start: state.warm_start.clone(),
    })
}

/// Everything produced by one filter tick.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub estimate: HyperState,
    pub solution: SpiceSolution,
    pub curvatures: Curvatures,
    pub gamma: f64,
    /// Weights after the update, i.e. the ones the estimate was computed with.
    pub updated_lambda: Vec<f64>,
    pub next: FilterState,
}

/// update → estimate → curvatures → predict.
pub fn step(
    state: &FilterState,
    x: &Snapshot,
    params: &FilterParams,
    dict: &Dictionary,
) -> Result<StepOutcome> {
    let mut updated = state.update(x, params)?;
    let est = estimate(&updated, params, dict)?;
    let curv = curvatures(&updated.r_hat, &est.support, params, dict.manifold())?;
    let gamma = forgetting_factor(&curv, params);
    updated.warm_start = Some(est.solution.intensities.clone());
    let next = predict(&updated, &est.support, &curv, params, dict)?;
    Ok(StepOutcome {
        estimate: est.support,
        solution: est.solution,
        curvatures: curv,
        gamma,
        updated_lambda: updated.lambda,
        next,
    })
}

/// Stateful wrapper that owns the filter state between ticks.
#[derive(Debug, Clone)]
pub struct RecursiveFilter<'a> {
    dict: &'a Dictionary,
    params: FilterParams,
    state: FilterState,
    last: Option<StepOutcome>,
}

impl<'a> RecursiveFilter<'a> {
    pub fn new(dict: &'a Dictionary, params: FilterParams) -> Result<Self> {
        params.validate(dict.len())?;
        let state = FilterState::with_defaults(dict, &params)?;
        Ok(Self::from_state(dict, params, state))
    }

    pub fn from_state(dict: &'a Dictionary, params: FilterParams, state: FilterState) -> Self {
        Self {
            dict,
            params,
            state,
            last: None,
        }
    }

    pub fn state(&self) -> &FilterState {
        &self.state
    }

    pub fn params(&self) -> &FilterParams {
        &self.params
    }

    pub fn last(&self) -> Option<&StepOutcome> {
        self.last.as_ref()
    }

    pub fn step(&mut self, x: &Snapshot) -> Result<HyperState> {
        let out = step(&self.state, x, &self.params, self.dict)?;
        self.state = out.next.clone();
        let est = out.estimate.clone();
        self.last = Some(out);
        Ok(est)
    }
}
