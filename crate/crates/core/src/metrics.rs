//! Cardinality and position error metrics.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Wraps an angle difference into `(-pi, pi]`.
pub fn wrap_angle(d: f64) -> f64 {
    let w = (d + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

fn sq_dist(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    d * d
}

/// Largest number of injective maps tried exhaustively before switching to
/// the Hungarian algorithm.
const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

fn injection_count(k: usize, n: usize) -> u128 {
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128))
}

/// Rows are the smaller set. Returns column assigned to each row.
fn orient<'a>(truth: &'a [f64], estimate: &'a [f64]) -> (&'a [f64], &'a [f64]) {
    if truth.len() <= estimate.len() {
        (truth, estimate)
    } else {
        (estimate, truth)
    }
}

fn total(rows: &[f64], cols: &[f64], assign: &[usize]) -> f64 {
    rows.iter()
        .zip(assign)
        .map(|(&r, &c)| sq_dist(r, cols[c]))
        .fold(0.0, |acc, v| acc + v)
}

/// Best assignment by enumerating every injective map of the smaller set.
pub fn assignment_error_exhaustive(truth: &[f64], estimate: &[f64]) -> f64 {
    let (rows, cols) = orient(truth, estimate);
    let mut used = vec![false; cols.len()];
    let mut current = Vec::with_capacity(rows.len());
    let mut best = f64::INFINITY;
    fn recurse(rows: &[f64], cols: &[f64], used: &mut [bool], current: &mut Vec<usize>, best: &mut f64) {
        if current.len() == rows.len() {
            let v = total(rows, cols, current);
            if v < *best {
                *best = v;
            }
            return;
        }
        for c in 0..cols.len() {
            if !used[c] {
                used[c] = true;
                current.push(c);
                recurse(rows, cols, used, current, best);
                current.pop();
                used[c] = false;
            }
        }
    }
    recurse(rows, cols, &mut used, &mut current, &mut best);
    if best.is_finite() {
        best
    } else {
        0.0
    }
}

/// Rectangular assignment (rows <= cols) by shortest augmenting paths.
/// Returns the column of each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "hungarian expects rows <= cols");
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

pub fn assignment_error_hungarian(truth: &[f64], estimate: &[f64]) -> f64 {
    let (rows, cols) = orient(truth, estimate);
    let cost: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| cols.iter().map(|&c| sq_dist(r, c)).collect())
        .collect();
    total(rows, cols, &hungarian(&cost))
}

/// Sum of squared wrapped angle errors over the best matching of
/// `min(n, n_hat)` pairs. Unmatched elements contribute nothing.
pub fn assignment_error(truth: &[f64], estimate: &[f64]) -> f64 {
    let k = truth.len().min(estimate.len());
    let n = truth.len().max(estimate.len());
    if k == 0 {
        return 0.0;
    }
    if k <= 6 && injection_count(k, n) <= EXHAUSTIVE_LIMIT {
        assignment_error_exhaustive(truth, estimate)
    } else {
        assignment_error_hungarian(truth, estimate)
    }
}

/// `(missed, false_alarms)` = `((n - n_hat)+, (n_hat - n)+)`.
pub fn cardinality_errors(n: usize, n_hat: usize) -> (usize, usize) {
    (n.saturating_sub(n_hat), n_hat.saturating_sub(n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingRecord {
    pub t: usize,
    pub missed: usize,
    pub false_alarms: usize,
    pub squared_error: f64,
}

impl TrackingRecord {
    pub fn evaluate(t: usize, truth: &[f64], estimate: &[f64]) -> Self {
        let (missed, false_alarms) = cardinality_errors(truth.len(), estimate.len());
        Self {
            t,
            missed,
            false_alarms,
            squared_error: assignment_error(truth, estimate),
        }
    }
}

/// OSPA distance of order `p` with cutoff `c`. Not part of the three
/// tracking figures; reported as an additional combined score.
pub fn ospa(truth: &[f64], estimate: &[f64], cutoff: f64, p: f64) -> f64 {
    let n = truth.len().max(estimate.len());
    if n == 0 {
        return 0.0;
    }
    let (rows, cols) = orient(truth, estimate);
    let dist = |a: f64, b: f64| wrap_angle(a - b).abs().min(cutoff).powf(p);
    let cost: Vec<Vec<f64>> = rows.iter().map(|&r| cols.iter().map(|&c| dist(r, c)).collect()).collect();
    let assign = hungarian(&cost);
    let matched: f64 = rows.iter().zip(&assign).map(|(&r, &c)| dist(r, cols[c])).sum();
    let unmatched = cutoff.powf(p) * (cols.len() - rows.len()) as f64;
    ((matched + unmatched) / n as f64).powf(1.0 / p)
}
