use std::path::{Path, PathBuf};

use spicetrack::montecarlo::{run_benchmark, trace_stream, trial_rng, BenchmarkSummary, TickTrace};
use spicetrack::{Execution, HyperState, Snapshot};

use crate::config::RunConfig;
use crate::io::{self, fmt};
use crate::CliError;

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn prepare_out(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.out_dir().to_path_buf();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

/// The scenario realisation of trial 0 under the master seed.
fn synthesize(cfg: &RunConfig) -> Result<(Vec<Snapshot>, Vec<HyperState>), CliError> {
    let dict = cfg.dictionary()?;
    let scenario = cfg.scenario.build()?;
    let real = scenario
        .realize(dict.manifold(), &mut trial_rng(cfg.seed, 0))
        .map_err(runtime)?;
    Ok((real.snapshots, real.truth))
}

pub fn simulate(cfg: &RunConfig, binary: bool) -> Result<Vec<PathBuf>, CliError> {
    let out = prepare_out(cfg)?;
    let (snapshots, truth) = synthesize(cfg)?;
    let echo = cfg.to_toml();
    let snap_path = if binary {
        let p = out.join("snapshots.bin");
        io::write_snapshots_bin(&p, &snapshots)?;
        p
    } else {
        let p = out.join("snapshots.csv");
        io::write_snapshots_csv(&p, &snapshots, &echo)?;
        p
    };
    let truth_path = out.join("truth.csv");
    let states: Vec<(usize, &HyperState)> = snapshots.iter().map(|s| s.t).zip(&truth).collect();
    io::write_states(&truth_path, &states, &echo, None)?;
    Ok(vec![snap_path, truth_path])
}

/// Snapshots and truth for `run`: from files when configured, otherwise
/// synthesised like `simulate`.
fn load_stream(cfg: &RunConfig) -> Result<(Vec<Snapshot>, Option<Vec<HyperState>>), CliError> {
    let Some(path) = &cfg.snapshots else {
        let (s, t) = synthesize(cfg)?;
        return Ok((s, Some(t)));
    };
    let snapshots = io::read_snapshots(path)?;
    if let Some(s) = snapshots.first() {
        if s.len() != cfg.sensors {
            return Err(CliError::Config(format!(
                "{} has {} sensors but the config has {}",
                path.display(),
                s.len(),
                cfg.sensors
            )));
        }
    }
    let truth = cfg.truth.as_deref().map(io::read_truth).transpose()?;
    if let Some(t) = &truth {
        if t.len() != snapshots.len() {
            return Err(CliError::Runtime(format!(
                "truth has {} ticks, snapshots have {}",
                t.len(),
                snapshots.len()
            )));
        }
    }
    Ok((snapshots, truth))
}

fn trace(cfg: &RunConfig, spectra_ticks: &[usize]) -> Result<(Vec<TickTrace>, usize), CliError> {
    let dict = cfg.dictionary()?;
    let specs = cfg.algorithm_specs()?;
    let (snapshots, truth) = load_stream(cfg)?;
    let traces = trace_stream(&snapshots, truth.as_deref(), &specs, &dict, spectra_ticks).map_err(runtime)?;
    Ok((traces, dict.len()))
}

fn write_spectra(path: &Path, cfg: &RunConfig, traces: &[TickTrace]) -> Result<(), CliError> {
    let dict = cfg.dictionary()?;
    let mut w = io::csv_writer(path, &cfg.to_toml())?;
    let mut header: Vec<String> = ["algorithm", "t", "spectrum"].map(String::from).to_vec();
    header.extend(dict.grid().points().iter().map(|&p| fmt(p)));
    io::write_row(&mut w, &header, path)?;
    for tr in traces {
        for s in &tr.spectra {
            let mut row = vec![tr.label.to_string(), tr.t.to_string(), s.name.to_string()];
            row.extend(s.values.iter().map(|&v| fmt(v)));
            io::write_row(&mut w, &row, path)?;
        }
    }
    io::finish(w, path)
}

pub fn run(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let out = prepare_out(cfg)?;
    let (traces, _) = trace(cfg, &cfg.spectra_ticks)?;
    let echo = cfg.to_toml();

    let records = out.join("records.csv");
    let mut w = io::csv_writer(&records, &echo)?;
    let header = ["algorithm", "t", "n_est", "missed", "false_alarms", "squared_error", "failed"];
    io::write_row(&mut w, &header.map(String::from), &records)?;
    for tr in &traces {
        let (md, fa, se) = match &tr.record {
            Some(r) => (r.missed.to_string(), r.false_alarms.to_string(), fmt(r.squared_error)),
            None => Default::default(),
        };
        let row = [
            tr.label.to_string(),
            tr.t.to_string(),
            tr.estimate.len().to_string(),
            md,
            fa,
            se,
            (tr.failed as u8).to_string(),
        ];
        io::write_row(&mut w, &row, &records)?;
    }
    io::finish(w, &records)?;

    let estimates = out.join("estimates.csv");
    let mut w = io::csv_writer(&estimates, &echo)?;
    io::write_row(&mut w, &["algorithm", "t", "n", "theta", "intensity"].map(String::from), &estimates)?;
    for tr in &traces {
        let row = |theta: String, intensity: String| {
            [tr.label.to_string(), tr.t.to_string(), tr.estimate.len().to_string(), theta, intensity]
        };
        if tr.estimate.is_empty() {
            io::write_row(&mut w, &row(String::new(), String::new()), &estimates)?;
        }
        for e in tr.estimate.iter() {
            io::write_row(&mut w, &row(fmt(e.theta), fmt(e.intensity)), &estimates)?;
        }
    }
    io::finish(w, &estimates)?;

    let mut written = vec![records, estimates];
    if !cfg.spectra_ticks.is_empty() {
        let p = out.join("spectra.csv");
        write_spectra(&p, cfg, &traces)?;
        written.push(p);
    }
    Ok(written)
}

/// Diagnostic spectra only; every tick when none are configured.
pub fn spectra(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let out = prepare_out(cfg)?;
    let ticks: Vec<usize> = if cfg.spectra_ticks.is_empty() {
        (1..=cfg.scenario.build()?.horizon()).collect()
    } else {
        cfg.spectra_ticks.clone()
    };
    let (traces, _) = trace(cfg, &ticks)?;
    let p = out.join("spectra.csv");
    write_spectra(&p, cfg, &traces)?;
    Ok(vec![p])
}

pub fn benchmark(cfg: &RunConfig, exec: Execution) -> Result<(Vec<PathBuf>, Vec<BenchmarkSummary>), CliError> {
    let out = prepare_out(cfg)?;
    let dict = cfg.dictionary()?;
    let scenario = cfg.scenario.build()?;
    let specs = cfg.algorithm_specs()?;
    let summaries = run_benchmark(&scenario, &dict, &specs, cfg.trials, cfg.seed, exec).map_err(runtime)?;
    let echo = cfg.to_toml();
    let columns = ["t", "md_mean", "fa_mean", "mse_mean", "trials"].map(String::from);
    let rows = |s: &BenchmarkSummary| -> Vec<Vec<String>> {
        (0..s.horizon())
            .map(|k| {
                vec![
                    (k + 1).to_string(),
                    fmt(s.md_mean[k]),
                    fmt(s.fa_mean[k]),
                    fmt(s.mse_mean[k]),
                    s.trials.to_string(),
                ]
            })
            .collect()
    };

    let mut written = Vec::new();
    for s in &summaries {
        let p = out.join(format!("{}.csv", s.label));
        let mut w = io::csv_writer(&p, &echo)?;
        io::write_row(&mut w, &columns, &p)?;
        for r in rows(s) {
            io::write_row(&mut w, &r, &p)?;
        }
        io::finish(w, &p)?;
        written.push(p);
    }

    let p = out.join("comparison.csv");
    let mut w = io::csv_writer(&p, &echo)?;
    let mut header = vec!["algorithm".to_string()];
    header.extend(columns.iter().cloned());
    io::write_row(&mut w, &header, &p)?;
    for s in &summaries {
        for mut r in rows(s) {
            r.insert(0, s.label.clone());
            io::write_row(&mut w, &r, &p)?;
        }
    }
    io::finish(w, &p)?;
    written.push(p);
    Ok((written, summaries))
}
