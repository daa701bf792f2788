//! Monte Carlo harness: runs a set of trackers over realisations of a
//! scenario and averages the per-tick tracking records.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::array::{HyperState, Snapshot, SourceElement};
use crate::baselines::music::{SubspaceParams, SubspaceTracker};
use crate::baselines::phd::{local_mass, PhdFilter, PhdParams};
use crate::baselines::relax::{relax_fit, RelaxParams};
use crate::baselines::window::{WindowParams, WindowTracker};
use crate::filter::{FilterParams, RecursiveFilter};
use crate::metrics::TrackingRecord;
use crate::scenario::Scenario;
use crate::spice::Dictionary;
use crate::{Error, Execution, Result};

/// Named diagnostic curve over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub name: &'static str,
    pub values: Vec<f64>,
}

/// A per-tick estimator. `order_hint` is the true order at this tick, used
/// only by trackers that need an order supplied from outside.
pub trait Tracker {
    fn step(&mut self, x: &Snapshot, order_hint: usize) -> Result<HyperState>;

    /// Diagnostic curves from the most recent tick.
    fn spectra(&self) -> Vec<Spectrum> {
        Vec::new()
    }
}

impl Tracker for RecursiveFilter<'_> {
    fn step(&mut self, x: &Snapshot, _order_hint: usize) -> Result<HyperState> {
        RecursiveFilter::step(self, x)
    }

    fn spectra(&self) -> Vec<Spectrum> {
        match self.last() {
            Some(out) => vec![
                Spectrum { name: "lambda", values: out.updated_lambda.clone() },
                Spectrum { name: "spice", values: out.solution.intensities.clone() },
            ],
            None => Vec::new(),
        }
    }
}

struct RelaxTracker<'a> {
    dict: &'a Dictionary,
    params: RelaxParams,
}

impl Tracker for RelaxTracker<'_> {
    fn step(&mut self, x: &Snapshot, _order_hint: usize) -> Result<HyperState> {
        Ok(relax_fit(x, &self.params, self.dict)?.estimate)
    }
}

struct RelaxPhdTracker<'a> {
    dict: &'a Dictionary,
    relax: RelaxParams,
    phd_params: PhdParams,
    phd: PhdFilter,
}

impl Tracker for RelaxPhdTracker<'_> {
    fn step(&mut self, x: &Snapshot, _order_hint: usize) -> Result<HyperState> {
        let detections = relax_fit(x, &self.relax, self.dict)?.estimate.angles();
        let angles = self.phd.step(&detections);
        let grid = self.dict.grid();
        HyperState::new(
            angles
                .into_iter()
                .map(|th| SourceElement::new(th, local_mass(self.phd.intensity(), th, &self.phd_params, grid)))
                .collect(),
        )
    }

    fn spectra(&self) -> Vec<Spectrum> {
        vec![Spectrum { name: "phd", values: self.phd.intensity().values.clone() }]
    }
}

struct WindowAdapter<'a> {
    dict: &'a Dictionary,
    inner: WindowTracker,
}

impl Tracker for WindowAdapter<'_> {
    fn step(&mut self, x: &Snapshot, _order_hint: usize) -> Result<HyperState> {
        self.inner.step(x, self.dict)
    }

    fn spectra(&self) -> Vec<Spectrum> {
        match self.inner.last_solution() {
            Some(s) => vec![Spectrum { name: "spice", values: s.intensities.clone() }],
            None => Vec::new(),
        }
    }
}

struct SubspaceAdapter<'a> {
    dict: &'a Dictionary,
    order: Option<usize>,
    inner: SubspaceTracker,
}

impl Tracker for SubspaceAdapter<'_> {
    fn step(&mut self, x: &Snapshot, order_hint: usize) -> Result<HyperState> {
        self.inner.step(x, self.order.unwrap_or(order_hint), self.dict)
    }

    fn spectra(&self) -> Vec<Spectrum> {
        vec![Spectrum { name: "music", values: self.inner.spectrum().to_vec() }]
    }
}

/// Algorithm selector with its parameter block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmSpec {
    Rbf(FilterParams),
    Relax(RelaxParams),
    RelaxPhd { relax: RelaxParams, phd: PhdParams },
    Window(WindowParams),
    /// `order: None` follows the true order of the scenario.
    Subspace { params: SubspaceParams, order: Option<usize> },
}

impl AlgorithmSpec {
    pub const LABELS: [&'static str; 5] = ["rbf", "relax", "relax-phd", "window", "subspace"];

    /// Spec with default parameters for one of [`Self::LABELS`].
    pub fn from_label(label: &str) -> Result<Self> {
        Ok(match label {
            "rbf" => Self::Rbf(FilterParams::default()),
            "relax" => Self::Relax(RelaxParams::default()),
            "relax-phd" => Self::RelaxPhd {
                relax: RelaxParams::default(),
                phd: PhdParams::default(),
            },
            "window" => Self::Window(WindowParams::default()),
            "subspace" => Self::Subspace {
                params: SubspaceParams::default(),
                order: None,
            },
            other => {
                return Err(Error::invalid(
                    "algorithm",
                    format!("unknown algorithm `{other}`; valid labels: {}", Self::LABELS.join(", ")),
                ))
            }
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Rbf(_) => "rbf",
            Self::Relax(_) => "relax",
            Self::RelaxPhd { .. } => "relax-phd",
            Self::Window(_) => "window",
            Self::Subspace { .. } => "subspace",
        }
    }

    pub fn build<'a>(&self, dict: &'a Dictionary) -> Result<Box<dyn Tracker + 'a>> {
        Ok(match self {
            Self::Rbf(p) => Box::new(RecursiveFilter::new(dict, p.clone())?),
            Self::Relax(p) => Box::new(RelaxTracker { dict, params: *p }),
            Self::RelaxPhd { relax, phd } => Box::new(RelaxPhdTracker {
                dict,
                relax: *relax,
                phd_params: *phd,
                phd: PhdFilter::new(*phd, dict.grid().clone())?,
            }),
            Self::Window(p) => Box::new(WindowAdapter {
                dict,
                inner: WindowTracker::new(*p, dict.sensors())?,
            }),
            Self::Subspace { params, order } => Box::new(SubspaceAdapter {
                dict,
                order: *order,
                inner: SubspaceTracker::new(*params, dict.sensors())?,
            }),
        })
    }
}

/// RNG of trial `trial` under master seed `seed`.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Records of one trial, indexed `[algorithm][tick - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub records: Vec<Vec<TrackingRecord>>,
    /// Ticks at which each algorithm returned an error.
    pub failures: Vec<usize>,
}

/// Runs every algorithm over one realisation of `scenario`.
pub fn run_trial(
    scenario: &Scenario,
    dict: &Dictionary,
    algorithms: &[AlgorithmSpec],
    seed: u64,
    trial: usize,
) -> Result<TrialOutcome> {
    let mut rng = trial_rng(seed, trial);
    let real = scenario.realize(dict.manifold(), &mut rng)?;
    let mut records = Vec::with_capacity(algorithms.len());
    let mut failures = Vec::with_capacity(algorithms.len());
    for spec in algorithms {
        let mut tracker = spec.build(dict)?;
        let mut recs = Vec::with_capacity(real.snapshots.len());
        let mut failed = 0;
        for (x, truth) in real.snapshots.iter().zip(&real.truth) {
            let est = tracker.step(x, truth.len()).unwrap_or_else(|_| {
                failed += 1;
                HyperState::empty()
            });
            recs.push(TrackingRecord::evaluate(x.t, &truth.angles(), &est.angles()));
        }
        records.push(recs);
        failures.push(failed);
    }
    Ok(TrialOutcome { records, failures })
}

/// Across-trial per-tick means for one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub label: String,
    pub trials: usize,
    pub failures: usize,
    pub md_mean: Vec<f64>,
    pub fa_mean: Vec<f64>,
    pub mse_mean: Vec<f64>,
}

impl BenchmarkSummary {
    pub fn horizon(&self) -> usize {
        self.md_mean.len()
    }

    /// Mean of `series` over ticks `t0..=t1` (1-based, clamped to the horizon).
    pub fn window_mean(series: &[f64], t0: usize, t1: usize) -> f64 {
        let lo = t0.max(1) - 1;
        let hi = t1.min(series.len());
        if hi <= lo {
            return f64::NAN;
        }
        series[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
    }
}

/// Runs `trials` independent trials and averages per tick. Trial `i` uses
/// [`trial_rng`]`(seed, i)`; the reduction runs in trial order so the
/// result does not depend on `exec`.
pub fn run_benchmark(
    scenario: &Scenario,
    dict: &Dictionary,
    algorithms: &[AlgorithmSpec],
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<BenchmarkSummary>> {
    if trials == 0 {
        return Err(Error::invalid("trials", "must be at least 1"));
    }
    for spec in algorithms {
        spec.build(dict)?;
    }
    let outcomes = exec.map_indexed(trials, |i| run_trial(scenario, dict, algorithms, seed, i));
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let horizon = scenario.horizon();
    let n = trials as f64;
    Ok(algorithms
        .iter()
        .enumerate()
        .map(|(a, spec)| {
            let mut md = vec![0.0; horizon];
            let mut fa = vec![0.0; horizon];
            let mut se = vec![0.0; horizon];
            let mut failures = 0;
            for o in &outcomes {
                failures += o.failures[a];
                for (k, r) in o.records[a].iter().enumerate() {
                    md[k] += r.missed as f64;
                    fa[k] += r.false_alarms as f64;
                    se[k] += r.squared_error;
                }
            }
            for v in md.iter_mut().chain(fa.iter_mut()).chain(se.iter_mut()) {
                *v /= n;
            }
            BenchmarkSummary {
                label: spec.label().to_string(),
                trials,
                failures,
                md_mean: md,
                fa_mean: fa,
                mse_mean: se,
            }
        })
        .collect())
}

/// One tick of one algorithm in a traced run.
#[derive(Debug, Clone)]
pub struct TickTrace {
    pub label: &'static str,
    pub t: usize,
    pub estimate: HyperState,
    /// `None` when no ground truth was supplied.
    pub record: Option<TrackingRecord>,
    pub failed: bool,
    pub spectra: Vec<Spectrum>,
}

/// Runs each algorithm over a given stream and reports every tick.
/// Spectra are kept for ticks listed in `spectra_ticks`. Without `truth`,
/// `order_hints` (or zero) feed the trackers that need an order.
pub fn trace_stream(
    snapshots: &[Snapshot],
    truth: Option<&[HyperState]>,
    algorithms: &[AlgorithmSpec],
    dict: &Dictionary,
    spectra_ticks: &[usize],
) -> Result<Vec<TickTrace>> {
    if let Some(tr) = truth {
        if tr.len() != snapshots.len() {
            return Err(Error::DimensionMismatch {
                expected: snapshots.len(),
                actual: tr.len(),
            });
        }
    }
    let mut out = Vec::new();
    for spec in algorithms {
        let mut tracker = spec.build(dict)?;
        for (i, x) in snapshots.iter().enumerate() {
            let hint = truth.map(|tr| tr[i].len()).unwrap_or(0);
            let (estimate, failed) = match tracker.step(x, hint) {
                Ok(e) => (e, false),
                Err(_) => (HyperState::empty(), true),
            };
            let record = truth.map(|tr| TrackingRecord::evaluate(x.t, &tr[i].angles(), &estimate.angles()));
            let spectra = if spectra_ticks.contains(&x.t) {
                tracker.spectra()
            } else {
                Vec::new()
            };
            out.push(TickTrace {
                label: spec.label(),
                t: x.t,
                estimate,
                record,
                failed,
                spectra,
            });
        }
    }
    Ok(out)
}
