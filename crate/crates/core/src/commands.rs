//! The four subcommands. Each takes a parsed configuration and an output
//! directory and returns the summary it wrote.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{emit_train_document, Drive, RunConfig, StateSource};
use crate::designer::{achieved_fractions, design};
use crate::dynamics::{bin_areas, integrate, integrated_alpha, stored_excitation, BinBreakdown, DynamicsTrace};
use crate::franson::{
    analytic_averaged_counts, averaged_counts_with_delay, fit_amplitude, state_from_emission, theta_grid,
    PhaseNoiseModel, TimeBinState,
};
use crate::io::{self, CsvTable, SCHEMA_VERSION};
use crate::pulse_model::PulseTrain;

/// Command-line overrides applied on top of the configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub fixed_step: Option<f64>,
}

impl RunOptions {
    fn apply(&self, config: &mut RunConfig) -> Result<()> {
        if let Some(dt) = self.fixed_step {
            config.force_fixed_step(dt)?;
        }
        Ok(())
    }
}

/// Loads a configuration file and applies the overrides.
pub fn load_config(path: &Path, options: &RunOptions) -> Result<RunConfig> {
    let mut config = RunConfig::load(path).with_context(|| format!("invalid config {}", path.display()))?;
    options.apply(&mut config)?;
    Ok(config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub index: usize,
    pub window_start: f64,
    pub window_end: f64,
    pub center: f64,
    pub phase_rad: f64,
    pub area: f64,
    /// Area over the excitation stored when the first window opens.
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub schema_version: u32,
    pub stepper: String,
    pub grid_points: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// `∫ α dτ` over the write pulse.
    pub integrated_alpha: f64,
    /// `e^{∫α} − 1`, exact without relaxation.
    pub relaxation_free_n_s: f64,
    pub n_s_inf: f64,
    pub n_as_inf: f64,
    pub n_sp_final: f64,
    pub stored_excitation: Option<f64>,
    pub total_area: f64,
    /// Total bin area over the stored excitation.
    pub retrieval: Option<f64>,
    pub bins: Vec<BinSummary>,
}

/// Integrates the configured train without touching the file system.
pub fn run_simulation(config: &RunConfig) -> Result<(DynamicsTrace, BinBreakdown, SimulateSummary)> {
    let train = config
        .train()
        .ok_or_else(|| anyhow!("simulate needs an explicit train: [write] and optional [read.N] sections"))?;
    simulate_train(config, train)
}

fn simulate_train(config: &RunConfig, train: &PulseTrain) -> Result<(DynamicsTrace, BinBreakdown, SimulateSummary)> {
    let trace = integrate(&config.params, train, &config.grid).context("integration failed")?;
    let breakdown = bin_areas(&trace, train)?;
    let stored = stored_excitation(&trace, train);
    let alpha = integrated_alpha(&config.params, train, trace.end());
    let bins = breakdown
        .windows
        .iter()
        .zip(&breakdown.areas)
        .zip(&train.reads)
        .enumerate()
        .map(|(i, ((&(a, b), &area), read))| BinSummary {
            index: i + 1,
            window_start: a,
            window_end: b,
            center: read.center,
            phase_rad: read.phase,
            area,
            fraction: stored.map_or(f64::NAN, |s| area / s),
        })
        .collect();
    let summary = SimulateSummary {
        schema_version: SCHEMA_VERSION,
        stepper: config.grid.stepper.clone(),
        grid_points: trace.len(),
        t_start: trace.start(),
        t_end: trace.end(),
        integrated_alpha: alpha,
        relaxation_free_n_s: alpha.exp_m1(),
        n_s_inf: trace.stokes_total(),
        n_as_inf: trace.antistokes_total(),
        n_sp_final: *trace.n_sp.last().unwrap_or(&0.0),
        stored_excitation: stored,
        total_area: breakdown.total,
        retrieval: stored.filter(|s| *s > 0.0).map(|s| breakdown.total / s),
        bins,
    };
    Ok((trace, breakdown, summary))
}

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn cmd_simulate(config: &RunConfig, out: &Path) -> Result<SimulateSummary> {
    let (trace, _, summary) = run_simulation(config)?;
    if config.output.trace_csv {
        io::trace_table(&trace).write(&out.join(TRACE_FILE))?;
        if config.output.plot_script {
            io::write_plot_script(out, TRACE_FILE)?;
        }
    }
    io::write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignReport {
    pub schema_version: u32,
    pub weights: Vec<f64>,
    pub total_retrieval: f64,
    pub exposures: Vec<f64>,
    pub seed_peaks: Vec<f64>,
    pub peaks: Vec<f64>,
    pub refined: bool,
    pub iterations: usize,
    /// Bin areas of the final train over the stored excitation.
    pub achieved_fractions: Vec<f64>,
    /// `achieved / target − 1` per bin.
    pub residuals: Vec<f64>,
    pub train_file: String,
}

pub const DESIGN_REPORT_FILE: &str = "design.json";
pub const TRAIN_FILE: &str = "train.toml";

pub fn cmd_design(config: &RunConfig, out: &Path) -> Result<DesignReport> {
    let Drive::Design { write, target } = &config.drive else {
        bail!("design needs a [design] target section");
    };
    let (outcome, train) = design(&config.params, write, target, &config.grid)?;
    let achieved = match &outcome.refinement {
        Some(r) => r.fractions.clone(),
        None => achieved_fractions(&config.params, &train, &config.grid)?,
    };
    let residuals = achieved
        .iter()
        .zip(&outcome.weights)
        .map(|(a, w)| a / w - 1.0)
        .collect();
    let report = DesignReport {
        schema_version: SCHEMA_VERSION,
        weights: outcome.weights.clone(),
        total_retrieval: target.total_retrieval,
        exposures: outcome.exposures.clone(),
        seed_peaks: outcome.seed_peaks.clone(),
        peaks: outcome.final_peaks().to_vec(),
        refined: outcome.refinement.is_some(),
        iterations: outcome.refinement.as_ref().map_or(0, |r| r.iterations),
        achieved_fractions: achieved,
        residuals,
        train_file: TRAIN_FILE.into(),
    };
    let doc = emit_train_document(&config.document, &train);
    let text = toml::to_string(&doc).context("rendering designed train")?;
    io::write_atomic(&out.join(TRAIN_FILE), text.as_bytes())?;
    io::write_json(&out.join(DESIGN_REPORT_FILE), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FringeSummary {
    pub variance_rad2: f64,
    pub visibility: f64,
    pub fit_amplitude: f64,
    /// Fringe amplitude of the closed-form Gaussian average (idealized equal
    /// bins only).
    pub analytic_amplitude: Option<f64>,
    pub max_stderr: f64,
    pub samples: usize,
    pub csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FransonReport {
    pub schema_version: u32,
    pub source: String,
    pub bins: usize,
    pub populations: Vec<f64>,
    pub phases_rad: Vec<f64>,
    pub delay_inv_gamma: f64,
    pub noise_model: String,
    pub seed: u64,
    pub theta_points: usize,
    pub fringes: Vec<FringeSummary>,
}

pub const FRANSON_REPORT_FILE: &str = "franson.json";

/// Reads the state left by a `simulate` run in `dir`.
pub fn state_from_run(dir: &Path) -> Result<TimeBinState> {
    let summary_path = dir.join(SUMMARY_FILE);
    let text = std::fs::read_to_string(&summary_path)
        .with_context(|| format!("state source: cannot read {}", summary_path.display()))?;
    let summary: SimulateSummary =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", summary_path.display()))?;
    let trace = io::read_trace(&dir.join(TRACE_FILE)).context("state source needs the run's trace.csv")?;
    let breakdown = BinBreakdown {
        windows: summary.bins.iter().map(|b| (b.window_start, b.window_end)).collect(),
        areas: summary.bins.iter().map(|b| b.area).collect(),
        total: summary.total_area,
    };
    let centers: Vec<f64> = summary.bins.iter().map(|b| b.center).collect();
    let phases: Vec<f64> = summary.bins.iter().map(|b| b.phase_rad).collect();
    Ok(state_from_emission(
        &breakdown,
        &centers,
        &trace.grid,
        &trace.flux_as,
        &phases,
    )?)
}

pub fn cmd_franson(config: &RunConfig, out: &Path, options: &RunOptions) -> Result<FransonReport> {
    let f = config
        .franson
        .as_ref()
        .ok_or_else(|| anyhow!("franson needs a [franson] section with a state source"))?;
    let (state, source) = match &f.source {
        StateSource::Ideal {
            bins,
            spacing,
            modes,
            phases,
        } => {
            let c = (1.0 / *bins as f64).sqrt();
            let amplitudes = phases.iter().map(|&p| Complex64::from_polar(c, p)).collect();
            let centers = (0..*bins).map(|i| i as f64 * spacing).collect();
            (TimeBinState::new(amplitudes, centers, modes.clone())?, "ideal")
        }
        StateSource::Run(dir) => (state_from_run(dir)?, "run"),
    };
    let seed = options.seed.unwrap_or(f.seed);
    let delay = f.delay.unwrap_or(state.tau);
    let thetas = theta_grid(f.theta_points);
    let ideal = matches!(f.source, StateSource::Ideal { .. });

    let mut fringes = Vec::with_capacity(f.variances.len());
    for (i, &variance) in f.variances.iter().enumerate() {
        let noise = PhaseNoiseModel::new(&f.noise, variance, f.samples, seed)?;
        let result = averaged_counts_with_delay(&state, &thetas, &noise, delay)?;
        let csv = format!("fringe_{}.csv", i + 1);
        let mut table = CsvTable::new(&["theta", "n1", "n2", "stderr1", "stderr2"]);
        for k in 0..thetas.len() {
            table.rows.push(vec![
                thetas[k],
                result.counts1[k],
                result.counts2[k],
                result.stderr[k],
                result.stderr[k],
            ]);
        }
        table.write(&out.join(&csv))?;
        if config.output.plot_script {
            io::write_plot_script(out, &csv)?;
        }
        let analytic_amplitude = if ideal {
            thetas
                .iter()
                .map(|&t| analytic_averaged_counts(&state, t, variance).map(|c| c.0))
                .collect::<Result<Vec<_>, _>>()
                .ok()
                .map(|curve| fit_amplitude(&thetas, &curve))
        } else {
            None
        };
        fringes.push(FringeSummary {
            variance_rad2: variance,
            visibility: result.visibility,
            fit_amplitude: result.fit_amplitude,
            analytic_amplitude,
            max_stderr: result.stderr.iter().copied().fold(0.0, f64::max),
            samples: result.samples,
            csv,
        });
    }
    let report = FransonReport {
        schema_version: SCHEMA_VERSION,
        source: source.into(),
        bins: state.bins(),
        populations: state.populations(),
        phases_rad: state.amplitudes.iter().map(|c| c.arg()).collect(),
        delay_inv_gamma: delay,
        noise_model: f.noise.clone(),
        seed,
        theta_points: f.theta_points,
        fringes,
    };
    io::write_json(&out.join(FRANSON_REPORT_FILE), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub integrated_alpha: f64,
    pub relaxation_free_n_s: f64,
    pub n_s_inf: f64,
    pub n_as_inf: f64,
    pub stored_excitation: f64,
    pub bin_areas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub key: String,
    pub points: usize,
    pub table: String,
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_TABLE_FILE: &str = "sweep.csv";
pub const SWEEP_REPORT_FILE: &str = "sweep.json";

/// Runs one simulation per sweep value on the worker pool; rows keep the
/// order of the values.
pub fn cmd_sweep(config: &RunConfig, out: &Path, options: &RunOptions) -> Result<SweepReport> {
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| anyhow!("sweep needs a [sweep] section naming key and values"))?;
    let base_bins = config.train().map_or(0, |t| t.reads.len());
    let rows: Vec<SweepRow> = sweep
        .values
        .par_iter()
        .map(|&value| -> Result<SweepRow> {
            let doc = config.document_with(&sweep.key, value)?;
            let mut point =
                RunConfig::from_document(doc, &config.base_dir).with_context(|| format!("{} = {value}", sweep.key))?;
            options.apply(&mut point)?;
            let (_, _, s) = run_simulation(&point).with_context(|| format!("{} = {value}", sweep.key))?;
            Ok(SweepRow {
                value,
                integrated_alpha: s.integrated_alpha,
                relaxation_free_n_s: s.relaxation_free_n_s,
                n_s_inf: s.n_s_inf,
                n_as_inf: s.n_as_inf,
                stored_excitation: s.stored_excitation.unwrap_or(f64::NAN),
                bin_areas: s.bins.iter().map(|b| b.area).collect(),
            })
        })
        .collect::<Result<_>>()?;

    let key_column = sweep.key.replace('.', "_");
    let mut header: Vec<String> = [
        key_column.as_str(),
        "integrated_alpha",
        "relaxation_free_n_s",
        "n_s_inf",
        "n_as_inf",
        "stored_excitation",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=base_bins).map(|j| format!("bin_{j}")));
    let mut table = CsvTable {
        header,
        rows: Vec::with_capacity(rows.len()),
    };
    for r in &rows {
        let mut row = vec![
            r.value,
            r.integrated_alpha,
            r.relaxation_free_n_s,
            r.n_s_inf,
            r.n_as_inf,
            r.stored_excitation,
        ];
        row.extend(r.bin_areas.iter().copied());
        table.rows.push(row);
    }
    table.write(&out.join(SWEEP_TABLE_FILE))?;
    if config.output.plot_script {
        io::write_plot_script(out, SWEEP_TABLE_FILE)?;
    }
    let report = SweepReport {
        schema_version: SCHEMA_VERSION,
        key: sweep.key.clone(),
        points: rows.len(),
        table: SWEEP_TABLE_FILE.into(),
        rows,
    };
    io::write_json(&out.join(SWEEP_REPORT_FILE), &report)?;
    Ok(report)
}

/// Paths of the files a command leaves in `out`, for messages.
pub fn listing(out: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(out)
        .map(|d| d.filter_map(|e| e.ok().map(|e| e.path())).collect())
        .unwrap_or_default();
    files.sort();
    files
}
