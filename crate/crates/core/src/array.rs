//! Uniform linear array observation model.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::{CMatrix, CVector, Error, Result};

pub(crate) fn check_angle(theta: f64) -> Result<()> {
    if (-PI..=PI).contains(&theta) {
        Ok(())
    } else {
        Err(Error::AngleOutOfDomain(theta))
    }
}

/// Steering manifold of an `m`-sensor ULA over electrical angle `[-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SteeringManifold {
    sensors: usize,
}

impl SteeringManifold {
    pub fn new(sensors: usize) -> Result<Self> {
        if sensors == 0 {
            return Err(Error::invalid("sensors", "must be positive"));
        }
        Ok(Self { sensors })
    }

    pub fn sensors(&self) -> usize {
        self.sensors
    }

    /// `a(theta)` with entries `exp(i k theta)`, `k = 0..m-1`.
    pub fn steering(&self, theta: f64) -> Result<CVector> {
        check_angle(theta)?;
        Ok(self.steering_unchecked(theta))
    }

    /// Steering vector without the domain check; used by finite differences
    /// that may step slightly past the interval ends.
    pub fn steering_unchecked(&self, theta: f64) -> CVector {
        CVector::from_fn(self.sensors, |k, _| Complex64::from_polar(1.0, k as f64 * theta))
    }

    /// `R = sigma^2 I + sum I a(theta) a(theta)^H` over the elements of `state`.
    pub fn covariance(&self, state: &HyperState, noise_var: f64) -> Result<CMatrix> {
        if !(noise_var > 0.0) {
            return Err(Error::invalid("noise_var", "must be positive"));
        }
        for e in state.iter() {
            check_angle(e.theta)?;
            if !(e.intensity >= 0.0) {
                return Err(Error::invalid("intensity", format!("{} is negative", e.intensity)));
            }
        }
        Ok(self.covariance_of(state.iter().map(|e| (e.theta, e.intensity)), noise_var))
    }

    pub(crate) fn covariance_of(
        &self,
        elements: impl IntoIterator<Item = (f64, f64)>,
        noise_var: f64,
    ) -> CMatrix {
        let m = self.sensors;
        let mut r = CMatrix::identity(m, m) * Complex64::new(noise_var, 0.0);
        for (theta, intensity) in elements {
            let a = self.steering_unchecked(theta);
            r += linalg::outer(&a) * Complex64::new(intensity, 0.0);
        }
        r
    }

    /// `x^H R^{-1} x + lambda0 * sum I`, the negative log of the sparsity-promoting
    /// likelihood up to its normalising constant.
    pub fn neg_log_likelihood(
        &self,
        state: &HyperState,
        snapshot: &Snapshot,
        noise_var: f64,
        lambda0: f64,
    ) -> Result<f64> {
        if snapshot.len() != self.sensors {
            return Err(Error::DimensionMismatch {
                expected: self.sensors,
                actual: snapshot.len(),
            });
        }
        if !(lambda0 >= 0.0) {
            return Err(Error::invalid("lambda0", "must be non-negative"));
        }
        let r = self.covariance(state, noise_var)?;
        let chol = nalgebra::Cholesky::new(r).ok_or(Error::NotPositiveDefinite)?;
        let y = chol.solve(&snapshot.x);
        let quad = (snapshot.x.adjoint() * y)[(0, 0)].re;
        Ok(quad + lambda0 * state.total_intensity())
    }
}

/// One (position, intensity) pair of a hyper-state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceElement {
    pub theta: f64,
    pub intensity: f64,
}

impl SourceElement {
    pub fn new(theta: f64, intensity: f64) -> Self {
        Self { theta, intensity }
    }
}

/// Finite set of (position, intensity) pairs. Equality ignores order.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct HyperState {
    elements: Vec<SourceElement>,
}

impl HyperState {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a validated hyper-state.
    pub fn new(elements: Vec<SourceElement>) -> Result<Self> {
        for e in &elements {
            check_angle(e.theta)?;
            if !(e.intensity >= 0.0) {
                return Err(Error::invalid("intensity", format!("{} is negative", e.intensity)));
            }
        }
        Ok(Self { elements })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(t, i)| SourceElement::new(t, i)).collect())
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SourceElement> {
        self.elements.iter()
    }

    pub fn elements(&self) -> &[SourceElement] {
        &self.elements
    }

    pub fn angles(&self) -> Vec<f64> {
        self.elements.iter().map(|e| e.theta).collect()
    }

    pub fn total_intensity(&self) -> f64 {
        self.elements.iter().map(|e| e.intensity).sum()
    }

    fn sorted(&self) -> Vec<SourceElement> {
        let mut v = self.elements.clone();
        v.sort_by(|a, b| {
            a.theta
                .total_cmp(&b.theta)
                .then(a.intensity.total_cmp(&b.intensity))
        });
        v
    }
}

impl PartialEq for HyperState {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len() && self.sorted() == other.sorted()
    }
}

/// One complex array observation `x(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: usize,
    pub x: CVector,
}

impl Snapshot {
    pub fn new(t: usize, x: CVector) -> Self {
        Self { t, x }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// A source instance at a given tick: position and complex amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSample {
    pub theta: f64,
    pub amplitude: Complex64,
}

/// Circular complex Gaussian sample with `E|z|^2 = variance`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * scale, im * scale)
}

/// `x(t) = sum a(theta_k) s_k + n(t)` for each tick, drawing noise from `rng`.
/// Ticks are numbered from 1.
pub fn synthesize_with<R: Rng + ?Sized>(
    manifold: &SteeringManifold,
    sources: &[Vec<SourceSample>],
    noise_var: f64,
    rng: &mut R,
) -> Result<Vec<Snapshot>> {
    if !(noise_var >= 0.0) {
        return Err(Error::invalid("noise_var", "must be non-negative"));
    }
    let m = manifold.sensors();
    let mut out = Vec::with_capacity(sources.len());
    for (i, tick) in sources.iter().enumerate() {
        let mut x = CVector::zeros(m);
        for s in tick {
            x += manifold.steering(s.theta)? * s.amplitude;
        }
        if noise_var > 0.0 {
            for v in x.iter_mut() {
                *v += complex_gaussian(rng, noise_var);
            }
        }
        out.push(Snapshot::new(i + 1, x));
    }
    Ok(out)
}

/// Seeded variant of [`synthesize_with`]; the same seed replays identical output.
pub fn synthesize(
    manifold: &SteeringManifold,
    sources: &[Vec<SourceSample>],
    noise_var: f64,
    seed: u64,
) -> Result<Vec<Snapshot>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    synthesize_with(manifold, sources, noise_var, &mut rng)
}
