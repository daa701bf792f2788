//! Run configuration: a TOML file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spicetrack::baselines::music::SubspaceParams;
use spicetrack::baselines::phd::PhdParams;
use spicetrack::baselines::relax::RelaxParams;
use spicetrack::baselines::window::WindowParams;
use spicetrack::filter::FilterParams;
use spicetrack::montecarlo::AlgorithmSpec;
use spicetrack::scenario::Scenario;
use spicetrack::{Dictionary, Grid, SteeringManifold};

use crate::CliError;

pub const OUT_ENV: &str = "SPICETRACK_OUT";
const DEFAULT_OUT: &str = "spicetrack-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScenarioConfig {
    Crossing {
        #[serde(default = "default_horizon")]
        horizon: usize,
        #[serde(default = "default_noise")]
        noise_var: f64,
    },
    SuddenChange {
        #[serde(default = "default_sudden_horizon")]
        horizon: usize,
        #[serde(default = "default_noise")]
        noise_var: f64,
    },
    BirthDeath {
        #[serde(default = "default_horizon")]
        horizon: usize,
        #[serde(default = "default_noise")]
        noise_var: f64,
        births: Vec<usize>,
        deaths: Vec<usize>,
        angles: Vec<f64>,
    },
}

fn default_horizon() -> usize {
    100
}

fn default_sudden_horizon() -> usize {
    300
}

fn default_noise() -> f64 {
    0.25
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig::Crossing {
            horizon: default_horizon(),
            noise_var: default_noise(),
        }
    }
}

impl ScenarioConfig {
    /// Builds the scenario; birth-death overlap warnings go to stderr.
    pub fn build(&self) -> Result<Scenario, CliError> {
        let s = match self {
            ScenarioConfig::Crossing { horizon, noise_var } => Scenario::crossing(*horizon, *noise_var),
            ScenarioConfig::SuddenChange { horizon, noise_var } => Scenario::sudden_change(*horizon, *noise_var),
            ScenarioConfig::BirthDeath {
                horizon,
                noise_var,
                births,
                deaths,
                angles,
            } => Scenario::birth_death(*horizon, births, deaths, angles, *noise_var).map(|(s, warnings)| {
                for w in warnings {
                    eprintln!("warning: {w}");
                }
                s
            }),
        };
        s.map_err(|e| CliError::Config(format!("scenario: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub trials: usize,
    pub sensors: usize,
    pub grid_spacing: f64,
    pub algorithms: Vec<String>,
    /// Ticks at which `run` and `spectra` record diagnostic spectra.
    pub spectra_ticks: Vec<usize>,
    /// Fixed order for the subspace tracker; the true order when absent.
    pub subspace_order: Option<usize>,
    pub out: Option<PathBuf>,
    /// Snapshot file consumed by `run` and `spectra` instead of synthesising.
    pub snapshots: Option<PathBuf>,
    /// Ground-truth file matching `snapshots`.
    pub truth: Option<PathBuf>,
    pub scenario: ScenarioConfig,
    pub rbf: FilterParams,
    pub relax: RelaxParams,
    pub phd: PhdParams,
    pub window: WindowParams,
    pub subspace: SubspaceParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            trials: 20,
            sensors: 20,
            grid_spacing: 0.01,
            algorithms: vec!["rbf".into()],
            spectra_ticks: Vec::new(),
            subspace_order: None,
            out: None,
            snapshots: None,
            truth: None,
            scenario: ScenarioConfig::default(),
            rbf: FilterParams::default(),
            relax: RelaxParams::default(),
            phd: PhdParams::default(),
            window: WindowParams::default(),
            subspace: SubspaceParams::default(),
        }
    }
}

/// Flag values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub algorithms: Option<Vec<String>>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub grid_spacing: Option<f64>,
    pub snapshots: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub spectra_ticks: Option<Vec<usize>>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: Option<&Path>, overrides: Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::parse(&text)?
            }
            None => Self::default(),
        };
        cfg.apply(overrides);
        if cfg.out.is_none() {
            cfg.out = Some(std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUT), PathBuf::from));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, o: Overrides) {
        if let Some(v) = o.algorithms {
            self.algorithms = v;
        }
        if let Some(v) = o.trials {
            self.trials = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.out {
            self.out = Some(v);
        }
        if let Some(v) = o.grid_spacing {
            self.grid_spacing = v;
        }
        if let Some(v) = o.snapshots {
            self.snapshots = Some(v);
        }
        if let Some(v) = o.truth {
            self.truth = Some(v);
        }
        if let Some(v) = o.spectra_ticks {
            self.spectra_ticks = v;
        }
    }

    /// Checks every parameter block by building the trackers once.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.trials == 0 {
            return Err(CliError::Config("trials must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(CliError::Config("no algorithms selected".into()));
        }
        let dict = self.dictionary()?;
        self.scenario.build()?;
        self.algorithm_specs()?;
        // Every block is checked, selected or not.
        for label in AlgorithmSpec::LABELS {
            let spec = self.spec_for(label)?;
            spec.build(&dict)
                .map_err(|e| CliError::Config(format!("{}: {e}", spec.label())))?;
        }
        Ok(())
    }

    pub fn dictionary(&self) -> Result<Dictionary, CliError> {
        let manifold = SteeringManifold::new(self.sensors).map_err(|e| CliError::Config(format!("sensors: {e}")))?;
        let grid = Grid::with_spacing(self.grid_spacing).map_err(|e| CliError::Config(format!("grid_spacing: {e}")))?;
        Ok(Dictionary::new(manifold, grid))
    }

    fn spec_for(&self, label: &str) -> Result<AlgorithmSpec, CliError> {
        let spec = AlgorithmSpec::from_label(label).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(match spec {
            AlgorithmSpec::Rbf(_) => AlgorithmSpec::Rbf(self.rbf.clone()),
            AlgorithmSpec::Relax(_) => AlgorithmSpec::Relax(self.relax),
            AlgorithmSpec::RelaxPhd { .. } => AlgorithmSpec::RelaxPhd {
                relax: self.relax,
                phd: self.phd,
            },
            AlgorithmSpec::Window(_) => AlgorithmSpec::Window(self.window),
            AlgorithmSpec::Subspace { .. } => AlgorithmSpec::Subspace {
                params: self.subspace,
                order: self.subspace_order,
            },
        })
    }

    pub fn algorithm_specs(&self) -> Result<Vec<AlgorithmSpec>, CliError> {
        self.algorithms.iter().map(|l| self.spec_for(l)).collect()
    }

    pub fn out_dir(&self) -> &Path {
        self.out.as_deref().unwrap_or(Path::new(DEFAULT_OUT))
    }

    /// The resolved configuration as TOML, for echoing into output files.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }
}
