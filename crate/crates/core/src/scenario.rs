//! Ground-truth trajectories and their realisation as snapshot streams.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::array::{synthesize_with, HyperState, Snapshot, SourceElement, SourceSample, SteeringManifold};
use crate::array::complex_gaussian;
use crate::metrics::wrap_angle;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueSource {
    pub theta: f64,
    /// Variance of the complex amplitude.
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub noise_var: f64,
    /// `truth[t - 1]` lists the sources present at tick `t`.
    pub truth: Vec<Vec<TrueSource>>,
}

/// Snapshot stream together with the state it was drawn from.
#[derive(Debug, Clone)]
pub struct Realization {
    pub snapshots: Vec<Snapshot>,
    pub truth: Vec<HyperState>,
}

fn wrap_into_domain(theta: f64) -> f64 {
    wrap_angle(theta)
}

impl Scenario {
    pub fn new(name: impl Into<String>, noise_var: f64, truth: Vec<Vec<TrueSource>>) -> Result<Self> {
        if truth.is_empty() {
            return Err(Error::invalid("horizon", "must be at least 1"));
        }
        if !(noise_var > 0.0) {
            return Err(Error::invalid("noise_var", "must be positive"));
        }
        for s in truth.iter().flatten() {
            crate::array::check_angle(s.theta)?;
            if !(s.variance >= 0.0) {
                return Err(Error::invalid("variance", "must be non-negative"));
            }
        }
        Ok(Self {
            name: name.into(),
            noise_var,
            truth,
        })
    }

    /// Two unit-variance targets on `-pi/2 + 0.01 pi t` and `pi/2 - 0.01 pi t`.
    pub fn crossing(horizon: usize, noise_var: f64) -> Result<Self> {
        if horizon > 150 {
            return Err(Error::invalid("horizon", "the crossing targets leave [-pi, pi] after t = 150"));
        }
        let truth = (1..=horizon)
            .map(|t| {
                let s = 0.01 * PI * t as f64;
                vec![
                    TrueSource { theta: -PI / 2.0 + s, variance: 1.0 },
                    TrueSource { theta: PI / 2.0 - s, variance: 1.0 },
                ]
            })
            .collect();
        Self::new("crossing", noise_var, truth)
    }

    /// One unit-variance target parked at `-pi/2` up to t = 100, then on
    /// `3 pi/2 - 0.01 pi t` wrapped into `[-pi, pi]`.
    pub fn sudden_change(horizon: usize, noise_var: f64) -> Result<Self> {
        let truth = (1..=horizon)
            .map(|t| {
                let theta = if t <= 100 {
                    -PI / 2.0
                } else {
                    wrap_into_domain(1.5 * PI - 0.01 * PI * t as f64)
                };
                vec![TrueSource { theta, variance: 1.0 }]
            })
            .collect();
        Self::new("sudden-change", noise_var, truth)
    }

    /// Targets alive on `[birth, death)` at fixed angles. Returns warnings
    /// for simultaneously alive targets sharing an angle.
    pub fn birth_death(
        horizon: usize,
        births: &[usize],
        deaths: &[usize],
        angles: &[f64],
        noise_var: f64,
    ) -> Result<(Self, Vec<String>)> {
        if births.len() != deaths.len() || births.len() != angles.len() {
            return Err(Error::invalid("births", "births, deaths and angles must have equal length"));
        }
        for (i, (&b, &d)) in births.iter().zip(deaths).enumerate() {
            if b == 0 || d <= b {
                return Err(Error::invalid("births", format!("target {i} needs 1 <= birth < death")));
            }
        }
        let mut warnings = Vec::new();
        for i in 0..angles.len() {
            for j in i + 1..angles.len() {
                let overlap = births[i].max(births[j]) < deaths[i].min(deaths[j]);
                if overlap && angles[i] == angles[j] {
                    warnings.push(format!("targets {i} and {j} share angle {} while both alive", angles[i]));
                }
            }
        }
        let truth = (1..=horizon)
            .map(|t| {
                (0..angles.len())
                    .filter(|&i| births[i] <= t && t < deaths[i])
                    .map(|i| TrueSource { theta: angles[i], variance: 1.0 })
                    .collect()
            })
            .collect();
        Ok((Self::new("birth-death", noise_var, truth)?, warnings))
    }

    pub fn horizon(&self) -> usize {
        self.truth.len()
    }

    pub fn angles_at(&self, t: usize) -> Vec<f64> {
        self.truth[t - 1].iter().map(|s| s.theta).collect()
    }

    pub fn order_at(&self, t: usize) -> usize {
        self.truth[t - 1].len()
    }

    pub fn max_order(&self) -> usize {
        self.truth.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Draws complex normal amplitudes and noise for every tick.
    pub fn realize<R: Rng + ?Sized>(&self, manifold: &SteeringManifold, rng: &mut R) -> Result<Realization> {
        let samples: Vec<Vec<SourceSample>> = self
            .truth
            .iter()
            .map(|tick| {
                tick.iter()
                    .map(|s| SourceSample {
                        theta: s.theta,
                        amplitude: complex_gaussian(rng, s.variance),
                    })
                    .collect()
            })
            .collect();
        let snapshots = synthesize_with(manifold, &samples, self.noise_var, rng)?;
        let truth = self
            .truth
            .iter()
            .map(|tick| HyperState::new(tick.iter().map(|s| SourceElement::new(s.theta, s.variance)).collect()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Realization { snapshots, truth })
    }
}
