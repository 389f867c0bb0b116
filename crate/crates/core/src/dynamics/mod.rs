//! Spin-wave and photon-flux rate equations.
//!
//! The mean spin-wave excitation number obeys
//!
//! ```text
//! dN/dt = α(t)(N + 1) − [β(t) + Γ_tot(t)] N
//! ```
//!
//! which is the differential form of its integral solution. Stokes and
//! anti-Stokes fluxes are `α(N + 1)` and `βN`; cumulative photon numbers are
//! integrated alongside `N` so that linear invariants (excitation number
//! conservation during retrieval) hold to rounding.

pub mod stepper;

use serde::Serialize;

use crate::pulse_model::{gain_alpha, gain_beta, relaxation_rates, ModelError, PhysicalParams, PulseTrain};
use crate::quadrature;
use crate::registry::UnknownStrategy;
pub use stepper::{steppers, RateState, RateSystem, StepControl, Stepper};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DynamicsError {
    #[error("integration failed on [{t_start}, {t_end}]: {reason}")]
    StepFailure { t_start: f64, t_end: f64, reason: String },
    #[error("grid [{t_start}, {t_end}] does not cover the pulses with the required margin [{need_start}, {need_end}]")]
    NonCoveringGrid {
        t_start: f64,
        t_end: f64,
        need_start: f64,
        need_end: f64,
    },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("trace does not match pulse train: {0}")]
    MismatchedTrace(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    UnknownStepper(#[from] UnknownStrategy),
}

/// Minimum grid margin around the pulses, in pulse durations.
pub const GRID_MARGIN_DURATIONS: f64 = 4.0;

/// Time grid and integrator selection.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub stepper: String,
    pub control: StepControl,
    /// Output sample spacing; defaults to a tenth of the shortest pulse.
    pub output_dt: Option<f64>,
    pub t_start: Option<f64>,
    pub t_end: Option<f64>,
    /// Spin-wave excitation number at the grid start (a heralded single
    /// excitation is 1 with the write pulse switched off).
    pub initial_excitation: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            stepper: "dopri45".into(),
            control: StepControl::default(),
            output_dt: None,
            t_start: None,
            t_end: None,
            initial_excitation: 0.0,
        }
    }
}

impl GridSpec {
    /// Fixed-step RK4 at `dt`, used for byte-stable golden output.
    pub fn fixed(dt: f64) -> Self {
        Self {
            stepper: "rk4".into(),
            control: StepControl {
                fixed_dt: Some(dt),
                ..StepControl::default()
            },
            ..Self::default()
        }
    }

    pub fn with_initial_excitation(mut self, n: f64) -> Self {
        self.initial_excitation = n;
        self
    }

    /// Output sample times covering the train.
    pub fn outputs(&self, train: &PulseTrain) -> Result<Vec<f64>, DynamicsError> {
        let all = std::iter::once(&train.write).chain(&train.reads);
        let mut need_start = f64::INFINITY;
        let mut need_end = f64::NEG_INFINITY;
        let mut default_start = f64::INFINITY;
        let mut default_end = f64::NEG_INFINITY;
        let mut shortest = f64::INFINITY;
        for p in all {
            let margin = GRID_MARGIN_DURATIONS * p.duration;
            need_start = need_start.min(p.center - margin);
            need_end = need_end.max(p.center + margin);
            let reach = margin.max(p.tail());
            default_start = default_start.min(p.center - reach);
            default_end = default_end.max(p.center + reach);
            shortest = shortest.min(p.duration);
        }
        let t_start = self.t_start.unwrap_or(default_start);
        let t_end = self.t_end.unwrap_or(default_end);
        if t_start > need_start || t_end < need_end {
            return Err(DynamicsError::NonCoveringGrid {
                t_start,
                t_end,
                need_start,
                need_end,
            });
        }
        let dt = self.output_dt.unwrap_or(shortest / 10.0);
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(DynamicsError::InvalidGrid(format!(
                "output spacing must be > 0, got {dt}"
            )));
        }
        let n = ((t_end - t_start) / dt).ceil().max(1.0) as usize;
        let h = (t_end - t_start) / n as f64;
        let mut grid: Vec<f64> = (0..n).map(|i| t_start + i as f64 * h).collect();
        grid.push(t_end);
        Ok(grid)
    }
}

/// Sampled solution of the rate equations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynamicsTrace {
    pub grid: Vec<f64>,
    pub n_sp: Vec<f64>,
    pub flux_s: Vec<f64>,
    pub flux_as: Vec<f64>,
    pub cum_s: Vec<f64>,
    pub cum_as: Vec<f64>,
}

impl DynamicsTrace {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.grid[0]
    }

    pub fn end(&self) -> f64 {
        *self.grid.last().expect("nonempty trace")
    }

    /// Total Stokes photon number `n_S(∞)`.
    pub fn stokes_total(&self) -> f64 {
        *self.cum_s.last().expect("nonempty trace")
    }

    /// Total anti-Stokes photon number `n_AS(∞)`.
    pub fn antistokes_total(&self) -> f64 {
        *self.cum_as.last().expect("nonempty trace")
    }

    fn locate(&self, t: f64) -> usize {
        match self.grid.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => i.min(self.grid.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.grid.len() - 2),
        }
    }

    /// Cubic Hermite interpolation of a cumulative series using its flux as
    /// the derivative.
    fn hermite(&self, values: &[f64], derivs: &[f64], t: f64) -> f64 {
        let i = self.locate(t);
        let (t0, t1) = (self.grid[i], self.grid[i + 1]);
        let h = t1 - t0;
        let s = ((t - t0) / h).clamp(0.0, 1.0);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * values[i]
            + (s3 - 2.0 * s2 + s) * h * derivs[i]
            + (-2.0 * s3 + 3.0 * s2) * values[i + 1]
            + (s3 - s2) * h * derivs[i + 1]
    }

    /// Cumulative anti-Stokes photon number at an arbitrary time in the grid.
    pub fn cum_as_at(&self, t: f64) -> f64 {
        self.hermite(&self.cum_as, &self.flux_as, t)
    }

    pub fn cum_s_at(&self, t: f64) -> f64 {
        self.hermite(&self.cum_s, &self.flux_s, t)
    }

    /// Spin-wave excitation number at `t` (linear interpolation).
    pub fn n_sp_at(&self, t: f64) -> f64 {
        let i = self.locate(t);
        let (t0, t1) = (self.grid[i], self.grid[i + 1]);
        let s = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        self.n_sp[i] * (1.0 - s) + self.n_sp[i + 1] * s
    }
}

struct RateEquations<'a> {
    params: &'a PhysicalParams,
    train: &'a PulseTrain,
}

impl RateSystem for RateEquations<'_> {
    fn rhs(&self, t: f64, y: &RateState) -> RateState {
        let alpha = gain_alpha(self.params, self.train, t);
        let beta = gain_beta(self.params, self.train, t);
        let gamma = relaxation_rates(self.params, self.train, t).total;
        let n = y[0];
        [alpha * (n + 1.0) - (beta + gamma) * n, alpha * (n + 1.0), beta * n]
    }
}

/// Integrates the rate equations over the grid described by `spec`.
pub fn integrate(params: &PhysicalParams, train: &PulseTrain, spec: &GridSpec) -> Result<DynamicsTrace, DynamicsError> {
    params.validate()?;
    train.validate()?;
    if !(spec.initial_excitation >= 0.0) {
        return Err(DynamicsError::InvalidGrid(format!(
            "initial excitation must be >= 0, got {}",
            spec.initial_excitation
        )));
    }
    let stepper = steppers().get(&spec.stepper)?;
    let grid = spec.outputs(train)?;
    let system = RateEquations { params, train };
    let states = stepper.solve(&system, &spec.control, [spec.initial_excitation, 0.0, 0.0], &grid)?;

    let mut trace = DynamicsTrace {
        n_sp: Vec::with_capacity(grid.len()),
        flux_s: Vec::with_capacity(grid.len()),
        flux_as: Vec::with_capacity(grid.len()),
        cum_s: Vec::with_capacity(grid.len()),
        cum_as: Vec::with_capacity(grid.len()),
        grid,
    };
    for (t, y) in trace.grid.iter().zip(&states) {
        // round-off can push an emptied spin wave a hair below zero
        let n = y[0].max(0.0);
        trace.n_sp.push(n);
        trace.flux_s.push(gain_alpha(params, train, *t) * (n + 1.0));
        trace.flux_as.push(gain_beta(params, train, *t) * n);
        trace.cum_s.push(y[1]);
        trace.cum_as.push(y[2]);
    }
    Ok(trace)
}

fn quadrature_breaks(train: &PulseTrain, t: f64) -> Vec<f64> {
    let (start, _) = train.span();
    let mut points = vec![start];
    for p in std::iter::once(&train.write).chain(&train.reads) {
        for x in [p.center - p.tail(), p.center, p.center + p.tail()] {
            if x > start && x < t {
                points.push(x);
            }
        }
    }
    points.push(t.max(start));
    points.sort_by(f64::total_cmp);
    points.dedup();
    points
}

/// `∫ α dτ` from the start of the drive up to `t`.
pub fn integrated_alpha(params: &PhysicalParams, train: &PulseTrain, t: f64) -> f64 {
    let pts = quadrature_breaks(train, t);
    quadrature::integrate_pieces(|x| gain_alpha(params, train, x), &pts, 1e-15, 1e-13)
}

/// `∫ β dτ` from the start of the drive up to `t`.
pub fn integrated_beta(params: &PhysicalParams, train: &PulseTrain, t: f64) -> f64 {
    let pts = quadrature_breaks(train, t);
    quadrature::integrate_pieces(|x| gain_beta(params, train, x), &pts, 1e-15, 1e-13)
}

/// Relaxation-free Stokes photon number `exp(∫α) − 1` (valid while the read
/// pulses are still off).
pub fn closed_form_stokes(params: &PhysicalParams, train: &PulseTrain, t: f64) -> f64 {
    integrated_alpha(params, train, t).exp_m1()
}

/// Relaxation-free anti-Stokes photon number `n_S(∞)(1 − exp(−∫β))`
/// (valid after the write pulse).
pub fn closed_form_antistokes(params: &PhysicalParams, train: &PulseTrain, t: f64, n_s_inf: f64) -> f64 {
    -n_s_inf * (-integrated_beta(params, train, t)).exp_m1()
}

/// Anti-Stokes photon numbers per read window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinBreakdown {
    pub windows: Vec<(f64, f64)>,
    pub areas: Vec<f64>,
    pub total: f64,
}

/// Splits the anti-Stokes emission into one window per read pulse, with
/// boundaries at midpoints between consecutive pulse centers.
pub fn bin_areas(trace: &DynamicsTrace, train: &PulseTrain) -> Result<BinBreakdown, DynamicsError> {
    if trace.len() < 2 {
        return Err(DynamicsError::MismatchedTrace(
            "trace has fewer than two samples".into(),
        ));
    }
    let windows = train.bin_windows(trace.end());
    if let (Some(first), Some(last)) = (windows.first(), train.reads.last()) {
        if first.0 < trace.start() || last.center > trace.end() {
            return Err(DynamicsError::MismatchedTrace(format!(
                "trace spans [{}, {}] but read windows span [{}, {}]",
                trace.start(),
                trace.end(),
                first.0,
                last.center
            )));
        }
    }
    let areas: Vec<f64> = windows
        .iter()
        .map(|&(a, b)| trace.cum_as_at(b) - trace.cum_as_at(a))
        .collect();
    let total = areas.iter().sum();
    Ok(BinBreakdown { windows, areas, total })
}

/// Spin-wave excitation stored at the opening of the first read window
/// (`None` without reads).
pub fn stored_excitation(trace: &DynamicsTrace, train: &PulseTrain) -> Option<f64> {
    train.bin_windows(trace.end()).first().map(|&(a, _)| trace.n_sp_at(a))
}
