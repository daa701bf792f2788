//! MUSIC pseudo-spectrum and the projection subspace tracker.

use serde::{Deserialize, Serialize};

use crate::array::{HyperState, Snapshot, SourceElement};
use crate::linalg;
use crate::spice::{Dictionary, Grid};
use crate::{CMatrix, Complex64, Error, Result};

/// Projection onto the span of the leading `rank` eigenvectors of `m`.
pub fn leading_projection(m: &CMatrix, rank: usize) -> CMatrix {
    let (_, vectors) = linalg::hermitian_eigen_desc(m);
    let u = vectors.columns(0, rank);
    let mut p = &u * u.adjoint();
    linalg::symmetrize(&mut p);
    p
}

/// `u(theta) = |a - P a|^2 = m - a^H P a` over the grid.
pub fn projection_spectrum(p: &CMatrix, dict: &Dictionary) -> Vec<f64> {
    let m = dict.sensors() as f64;
    dict.quad_forms(p).into_iter().map(|q| (m - q).max(0.0)).collect()
}

pub fn music_spectrum(r_hat: &CMatrix, order: usize, dict: &Dictionary) -> Result<Vec<f64>> {
    let m = dict.sensors();
    if order >= m {
        return Err(Error::invalid("order", format!("must be below the sensor count {m}")));
    }
    if r_hat.nrows() != m || r_hat.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: r_hat.nrows(),
        });
    }
    Ok(projection_spectrum(&leading_projection(r_hat, order), dict))
}

/// The `count` deepest local minima of `spectrum`, deepest first.
pub fn spectrum_minima(spectrum: &[f64], count: usize, grid: &Grid) -> Vec<f64> {
    let n = spectrum.len();
    let mut minima: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || spectrum[i] < spectrum[i - 1];
            let right = i + 1 == n || spectrum[i] <= spectrum[i + 1];
            left && right
        })
        .collect();
    minima.sort_by(|&a, &b| spectrum[a].total_cmp(&spectrum[b]).then(a.cmp(&b)));
    minima.truncate(count);
    minima.into_iter().map(|i| grid.points()[i]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionState {
    pub p: CMatrix,
    pub rank: usize,
}

impl ProjectionState {
    /// Projection onto the first `rank` coordinate axes.
    pub fn canonical(sensors: usize, rank: usize) -> Result<Self> {
        if rank > sensors {
            return Err(Error::invalid("rank", "exceeds the sensor count"));
        }
        let mut p = CMatrix::zeros(sensors, sensors);
        for i in 0..rank {
            p[(i, i)] = Complex64::new(1.0, 0.0);
        }
        Ok(Self { p, rank })
    }

    /// Same subspace estimate re-expressed at another rank.
    pub fn with_rank(&self, rank: usize) -> Result<Self> {
        if rank > self.p.nrows() {
            return Err(Error::invalid("rank", "exceeds the sensor count"));
        }
        Ok(Self {
            p: leading_projection(&self.p, rank),
            rank,
        })
    }

    pub fn idempotency_defect(&self) -> f64 {
        linalg::frobenius(&(&self.p * &self.p - &self.p))
    }
}

/// Projection onto the top-`rank` eigenspace of `x x^H + 2 alpha P`.
pub fn subspace_track(state: &ProjectionState, x: &Snapshot, alpha: f64) -> Result<ProjectionState> {
    if x.len() != state.p.nrows() {
        return Err(Error::DimensionMismatch {
            expected: state.p.nrows(),
            actual: x.len(),
        });
    }
    let m = linalg::outer(&x.x) + &state.p * Complex64::new(2.0 * alpha, 0.0);
    Ok(ProjectionState {
        p: leading_projection(&m, state.rank),
        rank: state.rank,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubspaceParams {
    pub alpha: f64,
}

impl Default for SubspaceParams {
    fn default() -> Self {
        Self { alpha: 2.0 }
    }
}

/// Subspace tracker run at an externally supplied order.
#[derive(Debug, Clone)]
pub struct SubspaceTracker {
    params: SubspaceParams,
    state: ProjectionState,
    spectrum: Vec<f64>,
}

impl SubspaceTracker {
    pub fn new(params: SubspaceParams, sensors: usize) -> Result<Self> {
        Ok(Self {
            params,
            state: ProjectionState::canonical(sensors, 0)?,
            spectrum: Vec::new(),
        })
    }

    pub fn state(&self) -> &ProjectionState {
        &self.state
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    /// Intensities are the least-squares amplitude powers `|a^H x / m|^2`.
    pub fn step(&mut self, x: &Snapshot, order: usize, dict: &Dictionary) -> Result<HyperState> {
        if order >= dict.sensors() {
            return Err(Error::invalid("order", "must be below the sensor count"));
        }
        if order != self.state.rank {
            self.state = self.state.with_rank(order)?;
        }
        self.state = subspace_track(&self.state, x, self.params.alpha)?;
        self.spectrum = projection_spectrum(&self.state.p, dict);
        let m = dict.sensors() as f64;
        let elements = spectrum_minima(&self.spectrum, order, dict.grid())
            .into_iter()
            .map(|theta| {
                let a = dict.manifold().steering_unchecked(theta);
                let amp = a.dotc(&x.x) / m;
                SourceElement::new(theta, amp.norm_sqr())
            })
            .collect();
        HyperState::new(elements)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::SteeringManifold;
    use crate::CVector;

    fn dict() -> Dictionary {
        Dictionary::new(SteeringManifold::new(20).unwrap(), Grid::with_spacing(0.01).unwrap())
    }

    #[test]
    fn noiseless_two_sources() {
        let d = dict();
        let (j1, j2) = (150, 420);
        let pts = d.grid().points();
        let r = d.model_covariance(
            &(0..d.len()).map(|k| if k == j1 || k == j2 { 1.0 } else { 0.0 }).collect::<Vec<_>>(),
            0.0,
        );
        let u = music_spectrum(&r, 2, &d).unwrap();
        assert!(u[j1] < 1e-9 && u[j2] < 1e-9);
        assert!(u.iter().all(|&v| v >= 0.0));
        let mut found = spectrum_minima(&u, 2, d.grid());
        found.sort_by(f64::total_cmp);
        assert_eq!(found, vec![pts[j1], pts[j2]]);
    }

    #[test]
    fn isotropic_spectrum_is_flat() {
        let d = dict();
        for n in [1, 3, 7] {
            let u = music_spectrum(&CMatrix::identity(20, 20), n, &d).unwrap();
            let max = u.iter().cloned().fold(f64::MIN, f64::max);
            let min = u.iter().cloned().fold(f64::MAX, f64::min);
            // The canonical-axis eigenvectors give a^H P a = n exactly.
            assert!(max - min < 1e-6, "n={n}: {}", max - min);
            assert!((max - (20 - n) as f64).abs() < 1e-9);
        }
        assert!(music_spectrum(&CMatrix::identity(20, 20), 20, &d).is_err());
    }

    #[test]
    fn tracker_examples() {
        let x = CVector::from_vec(vec![Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.1), Complex64::new(0.0, 1.0)]);
        let s = ProjectionState::canonical(3, 1).unwrap();
        let out = subspace_track(&s, &Snapshot::new(1, x.clone()), 0.0).unwrap();
        let expect = linalg::outer(&x) / Complex64::new(x.norm_squared(), 0.0);
        assert!(linalg::frobenius(&(out.p - expect)) < 1e-12);

        let s = ProjectionState::canonical(3, 2).unwrap();
        let out = subspace_track(&s, &Snapshot::new(1, CVector::zeros(3)), 2.0).unwrap();
        assert!(linalg::frobenius(&(&out.p - &s.p)) < 1e-12);
    }
}
