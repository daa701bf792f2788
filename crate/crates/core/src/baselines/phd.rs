//! Probability hypothesis density filter on the angle grid.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::spice::Grid;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Reflect,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhdParams {
    /// Probability that a present target is detected.
    pub detection: f64,
    /// Per-tick survival probability.
    pub survival: f64,
    /// Birth intensity per unit angle.
    pub birth: f64,
    /// Expected number of clutter detections per tick over the whole interval.
    pub clutter_rate: f64,
    /// Detection noise std.
    pub sigma_e: f64,
    /// Motion std per tick.
    pub sigma_theta: f64,
    pub boundary: Boundary,
    /// Minimum local mass for a peak to be reported.
    pub extraction_mass: f64,
}

impl Default for PhdParams {
    fn default() -> Self {
        Self {
            detection: 0.99,
            survival: 0.99,
            birth: 1e-4,
            clutter_rate: 0.04,
            sigma_e: 0.01,
            sigma_theta: 0.03,
            boundary: Boundary::Reflect,
            extraction_mass: 0.5,
        }
    }
}

impl PhdParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("detection", self.detection), ("survival", self.survival)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(name, "must lie in [0, 1]"));
            }
        }
        for (name, v) in [
            ("birth", self.birth),
            ("clutter_rate", self.clutter_rate),
            ("sigma_e", self.sigma_e),
            ("sigma_theta", self.sigma_theta),
        ] {
            if !(v >= 0.0) {
                return Err(Error::invalid(name, "must be non-negative"));
            }
        }
        Ok(())
    }

    /// Clutter intensity per unit angle.
    pub fn clutter_density(&self) -> f64 {
        self.clutter_rate / (2.0 * PI)
    }
}

/// Non-negative intensity per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PhdIntensity {
    pub values: Vec<f64>,
    pub t: usize,
}

impl PhdIntensity {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
            t: 0,
        }
    }

    /// Expected number of targets (trapezoidal integral).
    pub fn mass(&self, grid: &Grid) -> f64 {
        trapezoid(&self.values, grid.spacing())
    }
}

pub fn trapezoid(values: &[f64], spacing: f64) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => 0.0,
        n => spacing * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1])),
    }
}

fn fold_index(p: isize, n: usize, boundary: Boundary) -> usize {
    let n = n as isize;
    match boundary {
        Boundary::Periodic => p.rem_euclid(n) as usize,
        Boundary::Reflect => {
            // Mirror halfway between the edge point and its ghost so the
            // discrete sum is conserved.
            let q = p.rem_euclid(2 * n);
            (if q < n { q } else { 2 * n - 1 - q }) as usize
        }
    }
}

fn gaussian_kernel(sigma: f64, spacing: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (5.0 * sigma / spacing).ceil() as isize;
    let mut w: Vec<f64> = (-radius..=radius)
        .map(|j| {
            let d = j as f64 * spacing;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// `D+(theta) = survival * ∫ p0(theta|theta') D(theta') dtheta' + birth`, with the
/// integral as a normalised discrete Gaussian convolution.
pub fn phd_predict(d: &PhdIntensity, params: &PhdParams, grid: &Grid) -> PhdIntensity {
    let n = grid.len();
    let kernel = gaussian_kernel(params.sigma_theta, grid.spacing());
    let radius = (kernel.len() / 2) as isize;
    let mut out = vec![params.birth; n];
    for (i, &v) in d.values.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let scaled = params.survival * v;
        for (j, &w) in kernel.iter().enumerate() {
            let p = i as isize + j as isize - radius;
            out[fold_index(p, n, params.boundary)] += w * scaled;
        }
    }
    PhdIntensity {
        values: out,
        t: d.t + 1,
    }
}

fn angle_difference(a: f64, b: f64, boundary: Boundary) -> f64 {
    match boundary {
        Boundary::Reflect => a - b,
        Boundary::Periodic => crate::metrics::wrap_angle(a - b),
    }
}

/// Detection likelihood `p1(z|theta)` over the grid.
fn detection_likelihood(z: f64, params: &PhdParams, grid: &Grid) -> Vec<f64> {
    let s2 = params.sigma_e * params.sigma_e;
    let norm = 1.0 / (2.0 * PI * s2).sqrt();
    grid.points()
        .iter()
        .map(|&th| {
            let d = angle_difference(z, th, params.boundary);
            norm * (-d * d / (2.0 * s2)).exp()
        })
        .collect()
}

/// Corrector: `(1-beta) D+ + sum_z beta p1(z|.) D+ / (beta ∫ p1(z|.) D+ + mu(z))`.
pub fn phd_update(d: &PhdIntensity, detections: &[f64], params: &PhdParams, grid: &Grid) -> PhdIntensity {
    let beta = params.detection;
    let mut out: Vec<f64> = d.values.iter().map(|v| (1.0 - beta) * v).collect();
    for &z in detections {
        let lik = detection_likelihood(z, params, grid);
        let weighted: Vec<f64> = lik.iter().zip(&d.values).map(|(l, v)| beta * l * v).collect();
        let denom = trapezoid(&weighted, grid.spacing()) + params.clutter_density();
        if denom <= 0.0 {
            continue;
        }
        for (o, w) in out.iter_mut().zip(&weighted) {
            *o += w / denom;
        }
    }
    PhdIntensity {
        values: out,
        t: d.t,
    }
}

/// Local maxima whose mass within `±3 sigma_e` exceeds `params.extraction_mass`.
pub fn phd_extract(d: &PhdIntensity, params: &PhdParams, grid: &Grid) -> Vec<f64> {
    let v = &d.values;
    let n = v.len();
    let radius = ((3.0 * params.sigma_e / grid.spacing()).round() as usize).max(1);
    let mut out = Vec::new();
    for i in 0..n {
        if v[i] <= 0.0 {
            continue;
        }
        let left_ok = i == 0 || v[i] > v[i - 1];
        let right_ok = i + 1 == n || v[i] >= v[i + 1];
        if !(left_ok && right_ok) {
            continue;
        }
        let lo = i.saturating_sub(radius);
        let hi = (i + radius).min(n - 1);
        if trapezoid(&v[lo..=hi], grid.spacing()) > params.extraction_mass {
            out.push(grid.points()[i]);
        }
    }
    out
}

/// Mass within `±3 sigma_e` of `theta`, used as a per-estimate weight.
pub fn local_mass(d: &PhdIntensity, theta: f64, params: &PhdParams, grid: &Grid) -> f64 {
    let i = grid.nearest_index(theta);
    let radius = ((3.0 * params.sigma_e / grid.spacing()).round() as usize).max(1);
    let lo = i.saturating_sub(radius);
    let hi = (i + radius).min(d.values.len() - 1);
    trapezoid(&d.values[lo..=hi], grid.spacing())
}

/// Grid PHD filter driven by per-tick detection sets.
#[derive(Debug, Clone)]
pub struct PhdFilter {
    params: PhdParams,
    grid: Grid,
    intensity: PhdIntensity,
}

impl PhdFilter {
    pub fn new(params: PhdParams, grid: Grid) -> Result<Self> {
        params.validate()?;
        let n = grid.len();
        Ok(Self {
            params,
            grid,
            intensity: PhdIntensity::zeros(n),
        })
    }

    pub fn intensity(&self) -> &PhdIntensity {
        &self.intensity
    }

    /// Predict, correct with `detections`, and return the extracted angles.
    pub fn step(&mut self, detections: &[f64]) -> Vec<f64> {
        let predicted = phd_predict(&self.intensity, &self.params, &self.grid);
        self.intensity = phd_update(&predicted, detections, &self.params, &self.grid);
        phd_extract(&self.intensity, &self.params, &self.grid)
    }
}
