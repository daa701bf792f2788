//! SPICE on an exponentially forgetting sample covariance.

use serde::{Deserialize, Serialize};

use crate::array::{HyperState, Snapshot};
use crate::linalg;
use crate::spice::{self, Dictionary, SolverConfig, SpiceProblem, SpiceSolution};
use crate::{CMatrix, Complex64, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowParams {
    pub eta: f64,
    pub lambda0: f64,
    pub noise_var: f64,
    pub solver: SolverConfig,
}

impl Default for WindowParams {
    fn default() -> Self {
        Self {
            eta: 0.8,
            lambda0: 2.0,
            noise_var: 0.25,
            solver: SolverConfig::default(),
        }
    }
}

impl WindowParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::invalid("eta", "must lie in (0, 1)"));
        }
        if !(self.lambda0 > 0.0) {
            return Err(Error::invalid("lambda0", "must be positive"));
        }
        if !(self.noise_var > 0.0) {
            return Err(Error::invalid("noise_var", "must be positive"));
        }
        Ok(())
    }

    /// Uniform SPICE weight `lambda0 / (1 - eta)`.
    pub fn weight(&self) -> f64 {
        self.lambda0 / (1.0 - self.eta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowState {
    pub r_hat: CMatrix,
    pub eta: f64,
}

impl WindowState {
    pub fn new(r_hat: CMatrix, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::invalid("eta", "must lie in (0, 1)"));
        }
        if !r_hat.is_square() {
            return Err(Error::invalid("r_hat", "must be square"));
        }
        Ok(Self { r_hat, eta })
    }

    pub fn zeros(sensors: usize, eta: f64) -> Result<Self> {
        Self::new(CMatrix::zeros(sensors, sensors), eta)
    }
}

/// `R_hat <- eta R_hat + x x^H`.
pub fn window_update(state: &WindowState, x: &Snapshot) -> Result<WindowState> {
    if x.len() != state.r_hat.nrows() {
        return Err(Error::DimensionMismatch {
            expected: state.r_hat.nrows(),
            actual: x.len(),
        });
    }
    Ok(WindowState {
        r_hat: &state.r_hat * Complex64::new(state.eta, 0.0) + linalg::outer(&x.x),
        eta: state.eta,
    })
}

pub fn window_solve(
    state: &WindowState,
    lambda0: f64,
    noise_var: f64,
    dict: &Dictionary,
    config: &SolverConfig,
    warm_start: Option<&[f64]>,
) -> Result<SpiceSolution> {
    let weight = lambda0 / (1.0 - state.eta);
    let problem = SpiceProblem::new(state.r_hat.clone(), vec![weight; dict.len()], noise_var)?;
    spice::solve(&problem, dict, config, warm_start)
}

pub fn window_estimate(state: &WindowState, lambda0: f64, noise_var: f64, dict: &Dictionary) -> Result<HyperState> {
    let config = SolverConfig::default();
    let sol = window_solve(state, lambda0, noise_var, dict, &config, None)?;
    Ok(spice::extract_support(
        &sol.intensities,
        dict.grid(),
        config.merge_radius_for(dict.grid()),
        config.rel_threshold,
    ))
}

/// Streaming sliding-window estimator with warm-started solves.
#[derive(Debug, Clone)]
pub struct WindowTracker {
    params: WindowParams,
    state: WindowState,
    last: Option<SpiceSolution>,
}

impl WindowTracker {
    pub fn new(params: WindowParams, sensors: usize) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            state: WindowState::zeros(sensors, params.eta)?,
            last: None,
        })
    }

    pub fn state(&self) -> &WindowState {
        &self.state
    }

    pub fn last_solution(&self) -> Option<&SpiceSolution> {
        self.last.as_ref()
    }

    pub fn step(&mut self, x: &Snapshot, dict: &Dictionary) -> Result<HyperState> {
        self.state = window_update(&self.state, x)?;
        let warm = self.last.as_ref().map(|s| s.intensities.as_slice());
        let sol = window_solve(
            &self.state,
            self.params.lambda0,
            self.params.noise_var,
            dict,
            &self.params.solver,
            warm,
        )?;
        let est = spice::extract_support(
            &sol.intensities,
            dict.grid(),
            self.params.solver.merge_radius_for(dict.grid()),
            self.params.solver.rel_threshold,
        );
        self.last = Some(sol);
        Ok(est)
    }
}
