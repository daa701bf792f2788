//! Instantaneous RELAX estimator with order selection by `V_n + k n`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{HyperState, Snapshot, SourceElement};
use crate::spice::Dictionary;
use crate::{CVector, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelaxParams {
    pub max_order: usize,
    /// Per-source penalty of the information criterion.
    pub k_ic: f64,
    /// Relative fit improvement that ends the refinement cycles.
    pub tol: f64,
    pub max_cycles: usize,
}

impl Default for RelaxParams {
    fn default() -> Self {
        Self {
            max_order: 6,
            k_ic: 3.0,
            tol: 1e-6,
            max_cycles: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RelaxFit {
    pub estimate: HyperState,
    pub order: usize,
    /// Residual energy `V_n` for `n = 0..=max_order`.
    pub costs: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Component {
    index: usize,
    amplitude: Complex64,
}

/// Grid point maximising `|a^H r|^2` and the least-squares amplitude there.
fn best_atom(dict: &Dictionary, r: &CVector) -> Component {
    let m = dict.sensors() as f64;
    let mut best = (0, Complex64::new(0.0, 0.0), -1.0);
    for k in 0..dict.len() {
        let a = dict.atom(k);
        let mut acc = Complex64::new(0.0, 0.0);
        for (ai, ri) in a.iter().zip(r.iter()) {
            acc += ai.conj() * ri;
        }
        let p = acc.norm_sqr();
        if p > best.2 {
            best = (k, acc, p);
        }
    }
    Component {
        index: best.0,
        amplitude: best.1 / m,
    }
}

fn residual(dict: &Dictionary, x: &CVector, comps: &[Component], skip: Option<usize>) -> CVector {
    let mut r = x.clone();
    for (j, c) in comps.iter().enumerate() {
        if Some(j) != skip {
            r -= dict.atom(c.index) * c.amplitude;
        }
    }
    r
}

/// Runs RELAX for every order up to `params.max_order` and keeps the order
/// minimising `V_n + k_ic n` (smallest order on ties).
pub fn relax_fit(x: &Snapshot, params: &RelaxParams, dict: &Dictionary) -> Result<RelaxFit> {
    if x.len() != dict.sensors() {
        return Err(Error::DimensionMismatch {
            expected: dict.sensors(),
            actual: x.len(),
        });
    }
    let mut comps: Vec<Component> = Vec::new();
    let mut costs = vec![x.x.norm_squared()];
    let mut solutions = vec![Vec::new()];
    for _ in 1..=params.max_order {
        let r = residual(dict, &x.x, &comps, None);
        comps.push(best_atom(dict, &r));
        let mut cost = residual(dict, &x.x, &comps, None).norm_squared();
        for _ in 0..params.max_cycles {
            for j in 0..comps.len() {
                let rj = residual(dict, &x.x, &comps, Some(j));
                comps[j] = best_atom(dict, &rj);
            }
            let next = residual(dict, &x.x, &comps, None).norm_squared();
            let improvement = cost - next;
            cost = next;
            if improvement <= params.tol * cost.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        costs.push(cost);
        solutions.push(comps.clone());
    }
    let order = (0..costs.len())
        .min_by(|&a, &b| {
            let fa = costs[a] + params.k_ic * a as f64;
            let fb = costs[b] + params.k_ic * b as f64;
            fa.total_cmp(&fb)
        })
        .unwrap_or(0);
    let points = dict.grid().points();
    let elements = solutions[order]
        .iter()
        .map(|c| SourceElement::new(points[c.index], c.amplitude.norm_sqr()))
        .collect();
    Ok(RelaxFit {
        estimate: HyperState::new(elements)?,
        order,
        costs,
    })
}

pub fn relax_estimate(x: &Snapshot, max_order: usize, k_ic: f64, dict: &Dictionary) -> Result<HyperState> {
    let params = RelaxParams {
        max_order,
        k_ic,
        ..RelaxParams::default()
    };
    Ok(relax_fit(x, &params, dict)?.estimate)
}
