//! Run configuration.
//!
//! A TOML document with the sections `[params]`, `[write]`, `[read.N]`,
//! `[train]`, `[grid]`, `[design]`, `[franson]`, `[output]` and `[sweep]`.
//! Every dimensioned key carries its unit in the name: `_gamma` for rates,
//! `_inv_gamma` for times, `_rad` / `_rad2` for phases and their variances,
//! `_cm` and `_per_s` for the geometry inputs. Every violation is reported
//! against the dotted key that caused it.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use toml::{Table, Value};

use crate::designer::{DesignError, DesignTarget, RefineOptions, WeightSpec};
use crate::dynamics::GridSpec;
use crate::franson::{noise_models, ModeSet, DEFAULT_THETA_POINTS};
use crate::pulse_model::{
    read_peak_for_exposure, write_peak_for_gain_area, ModelError, PhysicalParams, PulseShape, PulseTrain,
    DEFAULT_SEPARATION_FACTOR,
};

/// Speed of light in cm/s, for `χ = c/L`.
pub const SPEED_OF_LIGHT_CM_PER_S: f64 = 2.997_924_58e10;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Syntax(String),
    #[error("{key}: {message}")]
    Key { key: String, message: String },
}

fn key_err(key: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Key {
        key: key.into(),
        message: message.into(),
    }
}

/// Known keys per section; also the schema used to catch unit-less names.
const SCHEMA: &[(&str, &[&str])] = &[
    (
        "params",
        &[
            "gamma32_gamma",
            "gamma41_gamma",
            "gamma_c_gamma",
            "delta_w_gamma",
            "delta_r_gamma",
            "n_atoms",
            "chi_gamma",
            "fiber_length_cm",
            "gamma_per_s",
            "g_s_gamma",
            "g_as_gamma",
        ],
    ),
    (
        "write",
        &[
            "kind",
            "center_inv_gamma",
            "duration_inv_gamma",
            "peak_gamma",
            "gain_area",
        ],
    ),
    (
        "read",
        &[
            "kind",
            "center_inv_gamma",
            "duration_inv_gamma",
            "peak_gamma",
            "exposure",
            "phase_rad",
        ],
    ),
    ("train", &["separation_factor"]),
    (
        "grid",
        &[
            "stepper",
            "atol",
            "rtol",
            "step_inv_gamma",
            "output_dt_inv_gamma",
            "t_start_inv_gamma",
            "t_end_inv_gamma",
            "initial_excitation",
            "max_steps",
        ],
    ),
    (
        "design",
        &[
            "weights",
            "total_retrieval",
            "refine",
            "rel_tol",
            "max_iter",
            "damping",
            "kind",
            "first_center_inv_gamma",
            "spacing_inv_gamma",
            "duration_inv_gamma",
            "phases_rad",
        ],
    ),
    (
        "franson",
        &[
            "source",
            "bins",
            "spacing_inv_gamma",
            "mode_width_inv_gamma",
            "phases_rad",
            "run_dir",
            "delay_inv_gamma",
            "noise",
            "variances_rad2",
            "samples",
            "seed",
            "theta_points",
        ],
    ),
    ("output", &["trace_csv", "plot_script"]),
    ("sweep", &["key", "values", "start", "stop", "points"]),
];

const UNIT_SUFFIXES: &[&str] = &["_gamma", "_inv_gamma", "_rad", "_rad2", "_cm", "_per_s"];

/// Pairs of keys that specify the same quantity; a sweep over one drops the other.
const ALTERNATIVES: &[(&str, &str)] = &[
    ("peak_gamma", "gain_area"),
    ("peak_gamma", "exposure"),
    ("chi_gamma", "fiber_length_cm"),
];

fn section_fields(section: &str) -> Option<&'static [&'static str]> {
    SCHEMA.iter().find(|(s, _)| *s == section).map(|(_, f)| *f)
}

/// Rejects unknown keys, naming the dimensioned form when the key is a bare
/// quantity such as `delta_w`.
fn check_keys(section: &str, prefix: &str, table: &Table) -> Result<(), ConfigError> {
    let fields = section_fields(section).unwrap_or(&[]);
    for key in table.keys() {
        if fields.contains(&key.as_str()) {
            continue;
        }
        let full = format!("{prefix}.{key}");
        if let Some(with_unit) = UNIT_SUFFIXES
            .iter()
            .map(|s| format!("{key}{s}"))
            .find(|k| fields.contains(&k.as_str()))
        {
            return Err(key_err(
                full,
                format!("dimensioned quantity given without a unit; use `{with_unit}`"),
            ));
        }
        return Err(key_err(
            full,
            format!("unknown key; expected one of {}", fields.join(", ")),
        ));
    }
    Ok(())
}

fn check_document(doc: &Table) -> Result<(), ConfigError> {
    for (section, value) in doc {
        if section == "read" {
            let reads = value
                .as_table()
                .ok_or_else(|| key_err("read", "expected sections [read.1], [read.2], ..."))?;
            for (index, pulse) in reads {
                let t = pulse
                    .as_table()
                    .ok_or_else(|| key_err(format!("read.{index}"), "expected a table"))?;
                check_keys("read", &format!("read.{index}"), t)?;
            }
            continue;
        }
        if section_fields(section).is_none() {
            let known: Vec<&str> = SCHEMA.iter().map(|(s, _)| *s).collect();
            return Err(key_err(
                section.clone(),
                format!("unknown section; expected one of {}", known.join(", ")),
            ));
        }
        let t = value
            .as_table()
            .ok_or_else(|| key_err(section.clone(), "expected a table"))?;
        check_keys(section, section, t)?;
    }
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
struct RawParams {
    gamma32_gamma: Option<f64>,
    gamma41_gamma: Option<f64>,
    gamma_c_gamma: Option<f64>,
    delta_w_gamma: Option<f64>,
    delta_r_gamma: Option<f64>,
    n_atoms: Option<f64>,
    chi_gamma: Option<f64>,
    fiber_length_cm: Option<f64>,
    gamma_per_s: Option<f64>,
    g_s_gamma: Option<f64>,
    g_as_gamma: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct RawPulse {
    kind: Option<String>,
    center_inv_gamma: f64,
    duration_inv_gamma: f64,
    peak_gamma: Option<f64>,
    gain_area: Option<f64>,
    exposure: Option<f64>,
    phase_rad: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
struct RawTrain {
    separation_factor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
struct RawGrid {
    stepper: Option<String>,
    atol: Option<f64>,
    rtol: Option<f64>,
    step_inv_gamma: Option<f64>,
    output_dt_inv_gamma: Option<f64>,
    t_start_inv_gamma: Option<f64>,
    t_end_inv_gamma: Option<f64>,
    initial_excitation: Option<f64>,
    max_steps: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct RawDesign {
    weights: String,
    total_retrieval: Option<f64>,
    refine: Option<bool>,
    rel_tol: Option<f64>,
    max_iter: Option<usize>,
    damping: Option<f64>,
    kind: Option<String>,
    first_center_inv_gamma: f64,
    spacing_inv_gamma: f64,
    duration_inv_gamma: f64,
    phases_rad: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
struct RawFranson {
    source: Option<String>,
    bins: Option<usize>,
    spacing_inv_gamma: Option<f64>,
    mode_width_inv_gamma: Option<f64>,
    phases_rad: Option<Vec<f64>>,
    run_dir: Option<String>,
    delay_inv_gamma: Option<f64>,
    noise: Option<String>,
    variances_rad2: Option<Vec<f64>>,
    samples: Option<usize>,
    seed: Option<u64>,
    theta_points: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
struct RawOutput {
    trace_csv: Option<bool>,
    plot_script: Option<bool>,
}

#[derive(Debug, Deserialize)]
struct RawSweep {
    key: String,
    values: Option<Vec<f64>>,
    start: Option<f64>,
    stop: Option<f64>,
    points: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
struct RawConfig {
    #[serde(default)]
    params: RawParams,
    write: Option<RawPulse>,
    read: Option<BTreeMap<String, RawPulse>>,
    #[serde(default)]
    train: RawTrain,
    #[serde(default)]
    grid: RawGrid,
    design: Option<RawDesign>,
    franson: Option<RawFranson>,
    #[serde(default)]
    output: RawOutput,
    sweep: Option<RawSweep>,
}

/// What drives the ensemble in this run.
#[derive(Debug, Clone)]
pub enum Drive {
    /// No pulses configured (idealized interferometer runs only).
    None,
    Train(PulseTrain),
    Design {
        write: PulseShape,
        target: DesignTarget,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum StateSource {
    /// Equal-weight bins with identical modes.
    Ideal {
        bins: usize,
        spacing: f64,
        modes: ModeSet,
        phases: Vec<f64>,
    },
    /// Directory written by a previous `simulate` run.
    Run(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FransonConfig {
    pub source: StateSource,
    pub delay: Option<f64>,
    pub noise: String,
    pub variances: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub theta_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub trace_csv: bool,
    pub plot_script: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub key: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: PhysicalParams,
    pub drive: Drive,
    pub separation_factor: f64,
    pub grid: GridSpec,
    pub franson: Option<FransonConfig>,
    pub output: OutputConfig,
    pub sweep: Option<SweepSpec>,
    /// Parsed document, kept so runs can be re-emitted or varied by key.
    pub document: Table,
    /// Directory relative paths in the document resolve against.
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse_with_base(&text, base)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::parse_with_base(text, Path::new("."))
    }

    /// Relative paths inside the document resolve against `base`.
    pub fn parse_with_base(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let document: Table = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        Self::from_document(document, base)
    }

    pub fn from_document(document: Table, base: &Path) -> Result<Self, ConfigError> {
        check_document(&document)?;
        let raw: RawConfig = Value::Table(document.clone())
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;

        let params = build_params(&raw.params)?;
        let separation_factor = raw.train.separation_factor.unwrap_or(DEFAULT_SEPARATION_FACTOR);
        if !(separation_factor > 0.0) || !separation_factor.is_finite() {
            return Err(key_err(
                "train.separation_factor",
                format!("must be > 0, got {separation_factor}"),
            ));
        }
        let grid = build_grid(&raw.grid)?;

        let drive = match (&raw.write, &raw.read, &raw.design) {
            (_, Some(_), Some(_)) => {
                return Err(key_err(
                    "design",
                    "give either explicit [read.N] pulses or a [design] target, not both",
                ))
            }
            (None, Some(_), None) => return Err(key_err("write", "read pulses need a [write] section")),
            (None, None, Some(_)) => return Err(key_err("write", "a design run needs a [write] section")),
            (None, None, None) => Drive::None,
            (Some(w), reads, None) => {
                let write = build_write(&params, w)?;
                let reads = build_reads(&params, reads.as_ref())?;
                Drive::Train(build_train(write, reads, separation_factor)?)
            }
            (Some(w), None, Some(d)) => {
                let write = build_write(&params, w)?;
                let mut target = build_design(d)?;
                target.separation_factor = separation_factor;
                PulseTrain::with_separation(write.clone(), target.templates.clone(), separation_factor)
                    .map_err(|e| train_error(e, &target.templates, "design.spacing_inv_gamma"))?;
                Drive::Design { write, target }
            }
        };

        let franson = raw.franson.as_ref().map(|f| build_franson(f, base)).transpose()?;
        let output = OutputConfig {
            trace_csv: raw.output.trace_csv.unwrap_or(true),
            plot_script: raw.output.plot_script.unwrap_or(true),
        };
        let sweep = raw.sweep.as_ref().map(|s| build_sweep(s, &document)).transpose()?;
        Ok(Self {
            params,
            drive,
            separation_factor,
            grid,
            franson,
            output,
            sweep,
            document,
            base_dir: base.to_path_buf(),
        })
    }

    /// Forces fixed-step RK4 at `dt`.
    pub fn force_fixed_step(&mut self, dt: f64) -> Result<(), ConfigError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(key_err("--fixed-step", format!("must be > 0, got {dt}")));
        }
        self.grid.stepper = "rk4".into();
        self.grid.control.fixed_dt = Some(dt);
        Ok(())
    }

    pub fn train(&self) -> Option<&PulseTrain> {
        match &self.drive {
            Drive::Train(t) => Some(t),
            _ => None,
        }
    }

    /// Copy of the document with `key` (dotted) set to `value`, any
    /// alternative spelling of the same quantity and the sweep removed.
    pub fn document_with(&self, key: &str, value: f64) -> Result<Table, ConfigError> {
        let mut doc = self.document.clone();
        doc.remove("sweep");
        set_key(&mut doc, key, Value::Float(value))?;
        Ok(doc)
    }
}

fn set_key(doc: &mut Table, key: &str, value: Value) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    let (path, leaf) = parts.split_at(parts.len() - 1);
    let leaf = leaf[0];
    let mut table = doc;
    for part in path {
        table = table
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .ok_or_else(|| key_err(key, format!("`{part}` is not a section")))?;
    }
    for (a, b) in ALTERNATIVES {
        if leaf == *a {
            table.remove(*b);
        } else if leaf == *b {
            table.remove(*a);
        }
    }
    let value = match (leaf, &value) {
        // integer-typed keys
        ("max_steps" | "max_iter" | "samples" | "seed" | "theta_points" | "bins" | "points", Value::Float(x))
            if x.fract() == 0.0 && *x >= 0.0 =>
        {
            Value::Integer(*x as i64)
        }
        _ => value,
    };
    table.insert(leaf.to_string(), value);
    Ok(())
}

fn finite(key: &str, x: f64) -> Result<f64, ConfigError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(key_err(key, format!("must be finite, got {x}")))
    }
}

fn params_key(field: &str) -> String {
    match field {
        "n_atoms" => "params.n_atoms".into(),
        "chi" => "params.chi_gamma".into(),
        other => format!("params.{other}_gamma"),
    }
}

fn build_params(raw: &RawParams) -> Result<PhysicalParams, ConfigError> {
    let d = PhysicalParams::default();
    let chi = match (raw.chi_gamma, raw.fiber_length_cm, raw.gamma_per_s) {
        (Some(_), Some(_), _) => {
            return Err(key_err(
                "params.fiber_length_cm",
                "give either chi_gamma or fiber_length_cm, not both",
            ))
        }
        (Some(chi), None, _) => chi,
        (None, Some(l), Some(g)) => {
            if !(l > 0.0) {
                return Err(key_err("params.fiber_length_cm", format!("must be > 0, got {l}")));
            }
            if !(g > 0.0) {
                return Err(key_err("params.gamma_per_s", format!("must be > 0, got {g}")));
            }
            SPEED_OF_LIGHT_CM_PER_S / l / g
        }
        (None, Some(_), None) => {
            return Err(key_err(
                "params.gamma_per_s",
                "needed to express c/L in units of gamma when fiber_length_cm is given",
            ))
        }
        (None, None, Some(_)) => {
            return Err(key_err(
                "params.gamma_per_s",
                "only meaningful together with fiber_length_cm",
            ))
        }
        (None, None, None) => d.chi,
    };
    let params = PhysicalParams {
        gamma: 1.0,
        gamma32: raw.gamma32_gamma.unwrap_or(d.gamma32),
        gamma41: raw.gamma41_gamma.unwrap_or(d.gamma41),
        gamma_c: raw.gamma_c_gamma.unwrap_or(d.gamma_c),
        delta_w: raw.delta_w_gamma.unwrap_or(d.delta_w),
        delta_r: raw.delta_r_gamma.unwrap_or(d.delta_r),
        n_atoms: raw.n_atoms.unwrap_or(d.n_atoms),
        chi,
        g_s: raw.g_s_gamma.unwrap_or(d.g_s),
        g_as: raw.g_as_gamma.unwrap_or(d.g_as),
    };
    params.validate().map_err(|e| match e {
        ModelError::InvalidParam {
            field,
            requirement,
            value,
        } => {
            let key = if field == "chi" && raw.fiber_length_cm.is_some() {
                "params.fiber_length_cm".to_string()
            } else {
                params_key(field)
            };
            key_err(key, format!("must be {requirement}, got {value}"))
        }
        other => key_err("params", other.to_string()),
    })?;
    Ok(params)
}

fn pulse_error(prefix: &str, e: ModelError) -> ConfigError {
    match e {
        ModelError::InvalidParam {
            field,
            requirement,
            value,
        } => {
            let key = match field {
                "center" => "center_inv_gamma",
                "duration" => "duration_inv_gamma",
                "peak" => "peak_gamma",
                "phase" => "phase_rad",
                other => other,
            };
            key_err(format!("{prefix}.{key}"), format!("must be {requirement}, got {value}"))
        }
        ModelError::UnknownShape(u) => key_err(format!("{prefix}.kind"), u.to_string()),
        other => key_err(prefix, other.to_string()),
    }
}

/// Builds a pulse whose strength is given either as a peak or through the
/// integral it should produce.
fn build_pulse(
    prefix: &str,
    raw: &RawPulse,
    area_key: &str,
    area: Option<f64>,
    peak_for_area: impl Fn(&PulseShape, f64) -> f64,
) -> Result<PulseShape, ConfigError> {
    let kind = raw.kind.as_deref().unwrap_or("gaussian");
    let template = PulseShape::new(
        kind,
        finite(&format!("{prefix}.center_inv_gamma"), raw.center_inv_gamma)?,
        raw.duration_inv_gamma,
        0.0,
    )
    .map_err(|e| pulse_error(prefix, e))?;
    let peak = match (raw.peak_gamma, area) {
        (Some(_), Some(_)) => {
            return Err(key_err(
                format!("{prefix}.{area_key}"),
                "give either peak_gamma or this key, not both",
            ))
        }
        (Some(p), None) => p,
        (None, Some(a)) => {
            if !(a >= 0.0) || !a.is_finite() {
                return Err(key_err(
                    format!("{prefix}.{area_key}"),
                    format!("must be >= 0, got {a}"),
                ));
            }
            peak_for_area(&template, a)
        }
        (None, None) => {
            return Err(key_err(
                format!("{prefix}.peak_gamma"),
                format!("missing; give peak_gamma or {area_key}"),
            ))
        }
    };
    let pulse = template.with_peak(peak).with_phase(raw.phase_rad.unwrap_or(0.0));
    pulse.validate().map_err(|e| pulse_error(prefix, e))?;
    Ok(pulse)
}

fn build_write(params: &PhysicalParams, raw: &RawPulse) -> Result<PulseShape, ConfigError> {
    build_pulse("write", raw, "gain_area", raw.gain_area, |t, a| {
        write_peak_for_gain_area(params, t, a)
    })
}

fn build_reads(
    params: &PhysicalParams,
    raw: Option<&BTreeMap<String, RawPulse>>,
) -> Result<Vec<PulseShape>, ConfigError> {
    let Some(raw) = raw else {
        return Ok(Vec::new());
    };
    let mut indexed = Vec::with_capacity(raw.len());
    for (name, pulse) in raw {
        let index: usize = name
            .parse()
            .ok()
            .filter(|i| *i >= 1)
            .ok_or_else(|| key_err(format!("read.{name}"), "read sections are numbered 1, 2, ..."))?;
        indexed.push((index, name, pulse));
    }
    indexed.sort_by_key(|(i, _, _)| *i);
    for (expected, (index, name, _)) in indexed.iter().enumerate() {
        if *index != expected + 1 {
            return Err(key_err(
                format!("read.{name}"),
                format!("read sections must be numbered 1..{} without gaps", indexed.len()),
            ));
        }
    }
    indexed
        .into_iter()
        .map(|(index, _, pulse)| {
            let prefix = format!("read.{index}");
            build_pulse(&prefix, pulse, "exposure", pulse.exposure, |t, b| {
                read_peak_for_exposure(params, t, b)
            })
        })
        .collect()
}

/// Maps train-level violations back to the read pulse that caused them.
fn train_error(e: ModelError, reads: &[PulseShape], design_key: &str) -> ConfigError {
    let read_key = |center: f64| {
        reads
            .iter()
            .position(|r| r.center == center)
            .map(|i| format!("read.{}.center_inv_gamma", i + 1))
    };
    match e {
        ModelError::UnorderedReads { center, .. } | ModelError::PulsesTooClose { second: center, .. } => {
            let key = if design_key.is_empty() {
                read_key(center).unwrap_or_else(|| "read".into())
            } else {
                design_key.to_string()
            };
            key_err(key, e.to_string())
        }
        ModelError::InvalidParam {
            field: "separation_factor",
            ..
        } => key_err("train.separation_factor", e.to_string()),
        other => key_err("train", other.to_string()),
    }
}

fn build_train(write: PulseShape, reads: Vec<PulseShape>, separation: f64) -> Result<PulseTrain, ConfigError> {
    let copy = reads.clone();
    PulseTrain::with_separation(write, reads, separation).map_err(|e| train_error(e, &copy, ""))
}

fn build_grid(raw: &RawGrid) -> Result<GridSpec, ConfigError> {
    let mut grid = GridSpec::default();
    if let Some(s) = &raw.stepper {
        crate::dynamics::steppers()
            .get(s)
            .map_err(|e| key_err("grid.stepper", e.to_string()))?;
        grid.stepper = s.clone();
    }
    let positive = |key: &str, x: Option<f64>| -> Result<Option<f64>, ConfigError> {
        match x {
            Some(v) if !(v > 0.0) || !v.is_finite() => Err(key_err(key, format!("must be > 0, got {v}"))),
            other => Ok(other),
        }
    };
    if let Some(a) = positive("grid.atol", raw.atol)? {
        grid.control.atol = a;
    }
    if let Some(r) = positive("grid.rtol", raw.rtol)? {
        grid.control.rtol = r;
    }
    grid.control.fixed_dt = positive("grid.step_inv_gamma", raw.step_inv_gamma)?;
    if let Some(m) = raw.max_steps {
        if m == 0 {
            return Err(key_err("grid.max_steps", "must be >= 1"));
        }
        grid.control.max_steps = m;
    }
    grid.output_dt = positive("grid.output_dt_inv_gamma", raw.output_dt_inv_gamma)?;
    grid.t_start = raw
        .t_start_inv_gamma
        .map(|t| finite("grid.t_start_inv_gamma", t))
        .transpose()?;
    grid.t_end = raw
        .t_end_inv_gamma
        .map(|t| finite("grid.t_end_inv_gamma", t))
        .transpose()?;
    if let (Some(a), Some(b)) = (grid.t_start, grid.t_end) {
        if b <= a {
            return Err(key_err(
                "grid.t_end_inv_gamma",
                format!("must exceed t_start_inv_gamma = {a}, got {b}"),
            ));
        }
    }
    if let Some(n) = raw.initial_excitation {
        if !(n >= 0.0) || !n.is_finite() {
            return Err(key_err("grid.initial_excitation", format!("must be >= 0, got {n}")));
        }
        grid.initial_excitation = n;
    }
    Ok(grid)
}

fn build_design(raw: &RawDesign) -> Result<DesignTarget, ConfigError> {
    let spec = WeightSpec::parse(&raw.weights).map_err(|e| key_err("design.weights", e.to_string()))?;
    if spec.is_empty() {
        return Err(key_err("design.weights", "at least one bin required"));
    }
    if let Some(t) = raw.total_retrieval {
        if !(t > 0.0 && t < 1.0) {
            return Err(key_err(
                "design.total_retrieval",
                format!("must lie in (0, 1), got {t}; full retrieval needs infinite exposure"),
            ));
        }
    }
    let weights = spec.weights(raw.total_retrieval).map_err(|e| match e {
        DesignError::InvalidTarget(m) if m.contains("total_retrieval") && raw.total_retrieval.is_some() => {
            key_err("design.total_retrieval", m)
        }
        other => key_err("design.weights", other.to_string()),
    })?;
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0)) {
        return Err(key_err("design.weights", format!("weights must be > 0, got {w}")));
    }
    let total: f64 = weights.iter().sum();
    if total >= 1.0 {
        return Err(key_err(
            "design.weights",
            format!("weights sum to {total}; total retrieval must stay below 1"),
        ));
    }
    let j = weights.len();
    let phases = raw.phases_rad.clone().unwrap_or_else(|| vec![0.0; j]);
    if phases.len() != j {
        return Err(key_err(
            "design.phases_rad",
            format!("expected {j} phases, got {}", phases.len()),
        ));
    }
    if !(raw.spacing_inv_gamma > 0.0) {
        return Err(key_err(
            "design.spacing_inv_gamma",
            format!("must be > 0, got {}", raw.spacing_inv_gamma),
        ));
    }
    let kind = raw.kind.as_deref().unwrap_or("gaussian");
    let templates = phases
        .iter()
        .enumerate()
        .map(|(i, &phase)| {
            let center = raw.first_center_inv_gamma + i as f64 * raw.spacing_inv_gamma;
            PulseShape::new(kind, center, raw.duration_inv_gamma, 0.0)
                .map(|p| p.with_phase(phase))
                .map_err(|e| match e {
                    ModelError::InvalidParam { field: "center", .. } => {
                        key_err("design.first_center_inv_gamma", e.to_string())
                    }
                    other => pulse_error("design", other),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut target = DesignTarget {
        total_retrieval: total,
        weights,
        templates,
        refine: false,
        options: RefineOptions::default(),
        separation_factor: DEFAULT_SEPARATION_FACTOR,
    };
    target.validate().map_err(|e| key_err("design", e.to_string()))?;
    if raw.refine.unwrap_or(true) {
        let d = RefineOptions::default();
        let options = RefineOptions {
            rel_tol: raw.rel_tol.unwrap_or(d.rel_tol),
            max_iter: raw.max_iter.unwrap_or(d.max_iter),
            damping: raw.damping.unwrap_or(d.damping),
        };
        if !(options.rel_tol > 0.0) {
            return Err(key_err(
                "design.rel_tol",
                format!("must be > 0, got {}", options.rel_tol),
            ));
        }
        if !(options.damping > 0.0 && options.damping <= 1.0) {
            return Err(key_err(
                "design.damping",
                format!("must lie in (0, 1], got {}", options.damping),
            ));
        }
        target = target.refined(options);
    }
    Ok(target)
}

fn build_franson(raw: &RawFranson, base: &Path) -> Result<FransonConfig, ConfigError> {
    let source = match raw.source.as_deref() {
        None => {
            return Err(key_err(
                "franson.source",
                "missing state source; use \"ideal\" or \"run\"",
            ))
        }
        Some("ideal") => {
            if raw.run_dir.is_some() {
                return Err(key_err("franson.run_dir", "only used with source = \"run\""));
            }
            let bins = raw
                .bins
                .ok_or_else(|| key_err("franson.bins", "ideal state needs the number of bins"))?;
            if bins == 0 {
                return Err(key_err("franson.bins", "must be >= 1"));
            }
            let spacing = raw.spacing_inv_gamma.unwrap_or(1.0);
            if !(spacing > 0.0) {
                return Err(key_err(
                    "franson.spacing_inv_gamma",
                    format!("must be > 0, got {spacing}"),
                ));
            }
            let modes = match raw.mode_width_inv_gamma {
                None => ModeSet::Orthonormal,
                Some(w) if w > 0.0 && w.is_finite() => ModeSet::Gaussian { width: w },
                Some(w) => return Err(key_err("franson.mode_width_inv_gamma", format!("must be > 0, got {w}"))),
            };
            let phases = raw.phases_rad.clone().unwrap_or_else(|| vec![0.0; bins]);
            if phases.len() != bins {
                return Err(key_err(
                    "franson.phases_rad",
                    format!("expected {bins} phases, got {}", phases.len()),
                ));
            }
            StateSource::Ideal {
                bins,
                spacing,
                modes,
                phases,
            }
        }
        Some("run") => {
            for (set, key) in [
                (raw.bins.is_some(), "franson.bins"),
                (raw.spacing_inv_gamma.is_some(), "franson.spacing_inv_gamma"),
                (raw.mode_width_inv_gamma.is_some(), "franson.mode_width_inv_gamma"),
                (raw.phases_rad.is_some(), "franson.phases_rad"),
            ] {
                if set {
                    return Err(key_err(
                        key,
                        "only used with source = \"ideal\"; a run carries its own state",
                    ));
                }
            }
            let dir = raw
                .run_dir
                .as_ref()
                .ok_or_else(|| key_err("franson.run_dir", "missing directory of a previous simulate run"))?;
            StateSource::Run(base.join(dir))
        }
        Some(other) => {
            return Err(key_err(
                "franson.source",
                format!("unknown state source `{other}`; use \"ideal\" or \"run\""),
            ))
        }
    };
    let noise = raw.noise.clone().unwrap_or_else(|| "shared_gaussian".into());
    noise_models()
        .get(&noise)
        .map_err(|e| key_err("franson.noise", e.to_string()))?;
    let variances = raw.variances_rad2.clone().unwrap_or_else(|| vec![0.0]);
    if let Some(v) = variances.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(key_err(
            "franson.variances_rad2",
            format!("variances must be >= 0, got {v}"),
        ));
    }
    let samples = raw.samples.unwrap_or(100_000);
    if samples == 0 {
        return Err(key_err("franson.samples", "must be >= 1"));
    }
    let theta_points = raw.theta_points.unwrap_or(DEFAULT_THETA_POINTS);
    if theta_points < 2 {
        return Err(key_err(
            "franson.theta_points",
            "need at least 2 points to span [0, 2π]",
        ));
    }
    if let Some(d) = raw.delay_inv_gamma {
        if !(d > 0.0) || !d.is_finite() {
            return Err(key_err("franson.delay_inv_gamma", format!("must be > 0, got {d}")));
        }
    }
    Ok(FransonConfig {
        source,
        delay: raw.delay_inv_gamma,
        noise,
        variances,
        samples,
        seed: raw.seed.unwrap_or(0),
        theta_points,
    })
}

/// Whether a dotted key names a field of the schema.
fn known_key(key: &str) -> bool {
    let parts: Vec<&str> = key.split('.').collect();
    match parts.as_slice() {
        ["read", index, field] => {
            index.parse::<usize>().is_ok_and(|i| i >= 1) && section_fields("read").is_some_and(|f| f.contains(field))
        }
        [section, field] => {
            *section != "read" && *section != "sweep" && section_fields(section).is_some_and(|f| f.contains(field))
        }
        _ => false,
    }
}

fn build_sweep(raw: &RawSweep, document: &Table) -> Result<SweepSpec, ConfigError> {
    if !known_key(&raw.key) {
        return Err(key_err("sweep.key", format!("unknown key `{}`", raw.key)));
    }
    if matches!(
        raw.key.rsplit('.').next(),
        Some(
            "kind"
                | "stepper"
                | "weights"
                | "source"
                | "noise"
                | "run_dir"
                | "refine"
                | "trace_csv"
                | "plot_script"
                | "phases_rad"
                | "variances_rad2"
        )
    ) {
        return Err(key_err("sweep.key", format!("`{}` is not a numeric key", raw.key)));
    }
    let values = match (&raw.values, raw.start, raw.stop, raw.points) {
        (Some(v), None, None, None) => v.clone(),
        (None, Some(a), Some(b), Some(n)) => match n {
            0 => Vec::new(),
            1 => vec![a],
            n => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
        },
        (None, None, None, None) => return Err(key_err("sweep.values", "give values or start, stop and points")),
        _ => {
            return Err(key_err(
                "sweep.values",
                "give either a values list or all of start, stop and points",
            ))
        }
    };
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(key_err("sweep.values", format!("values must be finite, got {v}")));
    }
    // the base document must already be a simulate run
    if !document.contains_key("write") || document.contains_key("design") {
        return Err(key_err(
            "sweep",
            "sweeps vary a simulate run: need [write] and no [design]",
        ));
    }
    Ok(SweepSpec {
        key: raw.key.clone(),
        values,
    })
}

/// Renders a designed train as `[read.N]` sections of `base`, producing a
/// document `simulate` consumes directly.
pub fn emit_train_document(base: &Table, train: &PulseTrain) -> Table {
    let mut doc = base.clone();
    doc.remove("design");
    doc.remove("sweep");
    let mut reads = Table::new();
    for (i, r) in train.reads.iter().enumerate() {
        let mut t = Table::new();
        t.insert("kind".into(), Value::String(r.kind().into()));
        t.insert("center_inv_gamma".into(), Value::Float(r.center));
        t.insert("duration_inv_gamma".into(), Value::Float(r.duration));
        t.insert("peak_gamma".into(), Value::Float(r.peak));
        if r.phase != 0.0 {
            t.insert("phase_rad".into(), Value::Float(r.phase.rem_euclid(TAU)));
        }
        reads.insert((i + 1).to_string(), Value::Table(t));
    }
    doc.insert("read".into(), Value::Table(reads));
    doc
}
