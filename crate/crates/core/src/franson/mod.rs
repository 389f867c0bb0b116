//! Time-bin single-photon state and the unbalanced interferometer used to
//! test phase coherence between consecutive bins.
//!
//! The photon `Σ_j C_j |1⟩_j` is sent through an interferometer whose arm
//! difference equals the bin spacing `τ`. With a 50/50 lossless output
//! splitter the mean photon numbers at the two detectors are
//!
//! ```text
//! n₁,₂ = ½ [1 ± Σ_{j,k} |C_j||C_k| cos(θ + Δφ_jk) O_jk],
//! O_jk = ∫ Φ_j(t − t_j) Φ_k(t − t_k − τ) dt
//! ```
//!
//! where `Δφ_jk` collects the controllable read-pulse phases and the random
//! conversion phases.

pub mod noise;

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{BinBreakdown, DynamicsTrace};
use crate::pulse_model::PulseTrain;
use crate::quadrature;
use crate::registry::UnknownStrategy;
pub use noise::{noise_models, sample_rng, PhaseNoise};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FransonError {
    #[error("bin breakdown has zero total area")]
    ZeroTotal,
    #[error("{what}: expected {expected} entries, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("amplitudes are not normalized: Σ|C|² = {0}")]
    NotNormalized(f64),
    #[error("bin centers must be strictly increasing")]
    UnorderedCenters,
    #[error(
        "interferometer delay {delay} does not match bin spacing {tau}: consecutive-bin overlap collapsed to {overlap}"
    )]
    DelayMismatch { delay: f64, tau: f64, overlap: f64 },
    #[error("closed-form average requires equal bin weights 1/J, got |C|² = {0:?}")]
    UnequalBins(Vec<f64>),
    #[error("invalid phase-noise model: {0}")]
    InvalidNoise(String),
    #[error(transparent)]
    UnknownNoise(#[from] UnknownStrategy),
}

/// Temporal mode functions of the bins.
#[derive(Debug, Clone, PartialEq)]
pub enum ModeSet {
    /// Identical, exactly orthonormal modes: the overlap between bins `j` and
    /// `k` shifted by the delay is 1 when the shifted center lands on `t_j`
    /// and 0 otherwise.
    Orthonormal,
    /// Identical normalized gaussian amplitudes
    /// `(πw²)^{-1/4} exp(−s²/(2w²))` around each center.
    Gaussian { width: f64 },
    /// Sampled profiles `Φ_j(t − t_j)` on a common absolute time grid.
    Sampled { grid: Vec<f64>, profiles: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeBinState {
    pub amplitudes: Vec<Complex64>,
    pub centers: Vec<f64>,
    /// Spacing of consecutive bins (first pair; zero for a single bin).
    pub tau: f64,
    pub equally_spaced: bool,
    pub modes: ModeSet,
}

const NORMALIZATION_TOL: f64 = 1e-10;

impl TimeBinState {
    pub fn new(amplitudes: Vec<Complex64>, centers: Vec<f64>, modes: ModeSet) -> Result<Self, FransonError> {
        if amplitudes.len() != centers.len() {
            return Err(FransonError::LengthMismatch {
                what: "bin centers",
                expected: amplitudes.len(),
                got: centers.len(),
            });
        }
        if let ModeSet::Sampled { profiles, grid } = &modes {
            if profiles.len() != amplitudes.len() {
                return Err(FransonError::LengthMismatch {
                    what: "mode profiles",
                    expected: amplitudes.len(),
                    got: profiles.len(),
                });
            }
            if let Some(p) = profiles.iter().find(|p| p.len() != grid.len()) {
                return Err(FransonError::LengthMismatch {
                    what: "mode profile samples",
                    expected: grid.len(),
                    got: p.len(),
                });
            }
        }
        if centers.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FransonError::UnorderedCenters);
        }
        let norm: f64 = amplitudes.iter().map(|c| c.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORMALIZATION_TOL {
            return Err(FransonError::NotNormalized(norm));
        }
        let tau = if centers.len() >= 2 {
            centers[1] - centers[0]
        } else {
            0.0
        };
        let equally_spaced = centers
            .windows(2)
            .all(|w| ((w[1] - w[0]) - tau).abs() <= 1e-9 * tau.abs().max(1.0));
        Ok(Self {
            amplitudes,
            centers,
            tau,
            equally_spaced,
            modes,
        })
    }

    /// `J` equal-weight bins with zero relative phases, spaced by `tau`.
    pub fn equal(j: usize, tau: f64, modes: ModeSet) -> Result<Self, FransonError> {
        let c = Complex64::new((1.0 / j as f64).sqrt(), 0.0);
        let centers = (0..j).map(|i| i as f64 * tau).collect();
        Self::new(vec![c; j], centers, modes)
    }

    pub fn bins(&self) -> usize {
        self.amplitudes.len()
    }

    /// Photon number per bin, `|C_j|²`.
    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|c| c.norm_sqr()).collect()
    }

    /// `∫ Φ_j(t − t_j) Φ_k(t − t_k − shift) dt` for every pair.
    pub fn overlap_matrix(&self, shift: f64) -> Vec<Vec<f64>> {
        let j_count = self.bins();
        let mut out = vec![vec![0.0; j_count]; j_count];
        for j in 0..j_count {
            for k in 0..j_count {
                out[j][k] = self.overlap(j, k, shift);
            }
        }
        out
    }

    fn overlap(&self, j: usize, k: usize, shift: f64) -> f64 {
        let (cj, ck) = (self.centers[j], self.centers[k] + shift);
        match &self.modes {
            ModeSet::Orthonormal => {
                let tol = 1e-9 * self.tau.abs().max(1.0);
                if (cj - ck).abs() <= tol {
                    1.0
                } else {
                    0.0
                }
            }
            ModeSet::Gaussian { width } => {
                let norm = (PI * width * width).powf(-0.25);
                let phi = |t: f64, c: f64| norm * (-(t - c).powi(2) / (2.0 * width * width)).exp();
                let reach = 12.0 * width;
                let mut pts = vec![cj - reach, cj, cj + reach, ck - reach, ck, ck + reach];
                pts.sort_by(f64::total_cmp);
                pts.dedup();
                quadrature::integrate_pieces(|t| phi(t, cj) * phi(t, ck), &pts, 1e-16, 1e-12)
            }
            ModeSet::Sampled { grid, profiles } => sampled_overlap(grid, &profiles[j], &profiles[k], shift),
        }
    }
}

/// Linear interpolation of a sampled profile, zero outside the grid.
fn interp(grid: &[f64], values: &[f64], t: f64) -> f64 {
    if grid.is_empty() || t < grid[0] || t > grid[grid.len() - 1] {
        return 0.0;
    }
    let i = match grid.binary_search_by(|x| x.total_cmp(&t)) {
        Ok(i) => return values[i],
        Err(i) => i - 1,
    };
    let s = (t - grid[i]) / (grid[i + 1] - grid[i]);
    values[i] * (1.0 - s) + values[i + 1] * s
}

fn trapezoid(grid: &[f64], values: impl Fn(usize) -> f64) -> f64 {
    (0..grid.len().saturating_sub(1))
        .map(|i| 0.5 * (grid[i + 1] - grid[i]) * (values(i) + values(i + 1)))
        .sum()
}

fn sampled_overlap(grid: &[f64], a: &[f64], b: &[f64], shift: f64) -> f64 {
    trapezoid(grid, |i| a[i] * interp(grid, b, grid[i] - shift))
}

/// Builds the time-bin state from simulated anti-Stokes emission: bin
/// populations from the window areas, phases from the read pulses and mode
/// functions from the normalized flux envelope in each window.
pub fn state_from_trace(
    breakdown: &BinBreakdown,
    train: &PulseTrain,
    trace: &DynamicsTrace,
    read_phases: &[f64],
) -> Result<TimeBinState, FransonError> {
    if train.reads.len() != breakdown.areas.len() {
        return Err(FransonError::LengthMismatch {
            what: "read pulses",
            expected: breakdown.areas.len(),
            got: train.reads.len(),
        });
    }
    state_from_emission(
        breakdown,
        &train.read_centers(),
        &trace.grid,
        &trace.flux_as,
        read_phases,
    )
}

/// Same as [`state_from_trace`] from the raw pieces, e.g. a trace read back
/// from disk.
pub fn state_from_emission(
    breakdown: &BinBreakdown,
    centers: &[f64],
    grid: &[f64],
    flux_as: &[f64],
    read_phases: &[f64],
) -> Result<TimeBinState, FransonError> {
    let j_count = breakdown.areas.len();
    for (what, got) in [
        ("read phases", read_phases.len()),
        ("read centers", centers.len()),
        ("bin windows", breakdown.windows.len()),
    ] {
        if got != j_count {
            return Err(FransonError::LengthMismatch {
                what,
                expected: j_count,
                got,
            });
        }
    }
    if flux_as.len() != grid.len() {
        return Err(FransonError::LengthMismatch {
            what: "anti-Stokes flux samples",
            expected: grid.len(),
            got: flux_as.len(),
        });
    }
    if !(breakdown.total > 0.0) {
        return Err(FransonError::ZeroTotal);
    }
    let mut amplitudes: Vec<Complex64> = breakdown
        .areas
        .iter()
        .zip(read_phases)
        .map(|(a, &phase)| Complex64::from_polar((a.max(0.0) / breakdown.total).sqrt(), phase))
        .collect();
    // the window areas sum to the total only up to rounding
    let norm: f64 = amplitudes.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    for c in &mut amplitudes {
        *c /= norm;
    }

    let profiles = breakdown
        .windows
        .iter()
        .map(|&(a, b)| {
            let raw: Vec<f64> = grid
                .iter()
                .zip(flux_as)
                .map(|(&t, &f)| if t >= a && t < b { f.max(0.0).sqrt() } else { 0.0 })
                .collect();
            let norm = trapezoid(grid, |i| raw[i] * raw[i]).sqrt();
            if norm > 0.0 {
                raw.iter().map(|x| x / norm).collect()
            } else {
                raw
            }
        })
        .collect();
    TimeBinState::new(
        amplitudes,
        centers.to_vec(),
        ModeSet::Sampled {
            grid: grid.to_vec(),
            profiles,
        },
    )
}

/// Precomputed interference terms for a state and interferometer delay.
#[derive(Debug, Clone, PartialEq)]
pub struct Fringe {
    /// `(j, k, |C_j||C_k| O_jk, arg C_j − arg C_k)` for every non-vanishing pair.
    terms: Vec<(usize, usize, f64, f64)>,
    bins: usize,
}

impl Fringe {
    pub fn new(state: &TimeBinState, delay: f64) -> Result<Self, FransonError> {
        let j_count = state.bins();
        if j_count < 2 {
            // a lone bin has nothing to interfere with in the other arm
            return Ok(Self {
                terms: Vec::new(),
                bins: j_count,
            });
        }
        let overlaps = state.overlap_matrix(delay);
        {
            let consecutive: f64 = (1..j_count).map(|j| overlaps[j][j - 1]).sum::<f64>() / (j_count - 1) as f64;
            if consecutive < 0.5 {
                return Err(FransonError::DelayMismatch {
                    delay,
                    tau: state.tau,
                    overlap: consecutive,
                });
            }
        }
        let mut terms = Vec::new();
        for j in 0..j_count {
            for k in 0..j_count {
                let o = overlaps[j][k];
                if o != 0.0 {
                    let (cj, ck) = (state.amplitudes[j], state.amplitudes[k]);
                    terms.push((j, k, cj.norm() * ck.norm() * o, cj.arg() - ck.arg()));
                }
            }
        }
        Ok(Self { terms, bins: j_count })
    }

    /// Number of random phase offsets one draw must supply (consecutive pairs).
    pub fn pair_count(&self) -> usize {
        self.bins.saturating_sub(1)
    }

    /// Interference coefficients `(A, B)` with `n₁ = ½(1 + A cos θ − B sin θ)`
    /// for the given consecutive-pair random phases.
    pub fn coefficients(&self, pair_phases: &[f64]) -> (f64, f64) {
        // random phase of bin j relative to bin 0; consecutive pairs pick up
        // exactly their own offset
        let mut cumulative = Vec::with_capacity(self.bins);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for &p in pair_phases.iter().take(self.pair_count()) {
            acc += p;
            cumulative.push(acc);
        }
        cumulative.resize(self.bins, acc);
        let mut a = 0.0;
        let mut b = 0.0;
        for &(j, k, w, ctrl) in &self.terms {
            let phase = ctrl + cumulative[j] - cumulative[k];
            a += w * phase.cos();
            b += w * phase.sin();
        }
        (a, b)
    }

    pub fn counts(&self, theta: f64, pair_phases: &[f64]) -> (f64, f64) {
        let (a, b) = self.coefficients(pair_phases);
        counts_from_coefficients(a, b, theta)
    }
}

fn counts_from_coefficients(a: f64, b: f64, theta: f64) -> (f64, f64) {
    let x = a * theta.cos() - b * theta.sin();
    (0.5 * (1.0 + x), 0.5 * (1.0 - x))
}

/// Detector photon numbers for one phase-shifter setting, interferometer
/// delay matched to the bin spacing.
pub fn interferometer_counts(
    state: &TimeBinState,
    theta: f64,
    noise_phases: &[f64],
) -> Result<(f64, f64), FransonError> {
    let fringe = Fringe::new(state, state.tau)?;
    if noise_phases.len() != fringe.pair_count() && !noise_phases.is_empty() {
        return Err(FransonError::LengthMismatch {
            what: "pair noise phases",
            expected: fringe.pair_count(),
            got: noise_phases.len(),
        });
    }
    Ok(fringe.counts(theta, noise_phases))
}

#[derive(Clone)]
pub struct PhaseNoiseModel {
    pub kind: Arc<dyn PhaseNoise>,
    /// Variance of the random phase (rad²).
    pub variance: f64,
    pub sample_count: usize,
    pub seed: u64,
}

impl std::fmt::Debug for PhaseNoiseModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PhaseNoiseModel")
            .field("kind", &self.kind.name())
            .field("variance", &self.variance)
            .field("sample_count", &self.sample_count)
            .field("seed", &self.seed)
            .finish()
    }
}

impl PhaseNoiseModel {
    pub fn new(kind: &str, variance: f64, sample_count: usize, seed: u64) -> Result<Self, FransonError> {
        let model = Self {
            kind: noise_models().get(kind)?,
            variance,
            sample_count,
            seed,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn none() -> Self {
        Self::new("none", 0.0, 1, 0).expect("valid noiseless model")
    }

    pub fn validate(&self) -> Result<(), FransonError> {
        if !(self.variance >= 0.0) || !self.variance.is_finite() {
            return Err(FransonError::InvalidNoise(format!(
                "variance must be >= 0, got {}",
                self.variance
            )));
        }
        if self.sample_count < 1 {
            return Err(FransonError::InvalidNoise("sample_count must be >= 1".into()));
        }
        Ok(())
    }

    fn is_deterministic(&self) -> bool {
        self.variance == 0.0 || self.kind.name() == "none"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FransonResult {
    pub theta_grid: Vec<f64>,
    pub counts1: Vec<f64>,
    pub counts2: Vec<f64>,
    /// Monte Carlo standard error per θ (identical for both detectors).
    pub stderr: Vec<f64>,
    pub visibility: f64,
    /// Amplitude of the best-fit sinusoid `½(1 + a cos θ + b sin θ)`, `√(a²+b²)`.
    pub fit_amplitude: f64,
    pub noise_model: String,
    pub variance: f64,
    pub samples: usize,
    pub seed: u64,
}

/// `points` phase-shifter values spanning `[0, 2π]` inclusive.
pub fn theta_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        n => (0..n).map(|i| TAU * i as f64 / (n - 1) as f64).collect(),
    }
}

pub const DEFAULT_THETA_POINTS: usize = 121;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    a: f64,
    b: f64,
    aa: f64,
    bb: f64,
    ab: f64,
}

impl Moments {
    fn push(&mut self, a: f64, b: f64) {
        self.n += 1.0;
        self.a += a;
        self.b += b;
        self.aa += a * a;
        self.bb += b * b;
        self.ab += a * b;
    }

    fn merge(mut self, o: &Moments) -> Self {
        self.n += o.n;
        self.a += o.a;
        self.b += o.b;
        self.aa += o.aa;
        self.bb += o.bb;
        self.ab += o.ab;
        self
    }
}

/// Fringe curves averaged over the random phase distribution.
pub fn averaged_counts(
    state: &TimeBinState,
    thetas: &[f64],
    noise: &PhaseNoiseModel,
) -> Result<FransonResult, FransonError> {
    averaged_counts_with_delay(state, thetas, noise, state.tau)
}

pub fn averaged_counts_with_delay(
    state: &TimeBinState,
    thetas: &[f64],
    noise: &PhaseNoiseModel,
    delay: f64,
) -> Result<FransonResult, FransonError> {
    noise.validate()?;
    let fringe = Fringe::new(state, delay)?;
    let pairs = fringe.pair_count();

    let (counts1, stderr): (Vec<f64>, Vec<f64>) = if noise.is_deterministic() {
        let (a, b) = fringe.coefficients(&vec![0.0; pairs]);
        thetas
            .iter()
            .map(|&t| (counts_from_coefficients(a, b, t).0, 0.0))
            .unzip()
    } else {
        let sigma = noise.variance.sqrt();
        let n = noise.sample_count;
        let chunks = n.div_ceil(CHUNK);
        // fixed chunking and in-order merge keep the sums independent of the
        // worker count
        let partial: Vec<Moments> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut m = Moments::default();
                let mut phases = vec![0.0; pairs];
                for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    let mut rng = sample_rng(noise.seed, i as u64);
                    noise.kind.draw(&mut rng, sigma, &mut phases);
                    let (a, b) = fringe.coefficients(&phases);
                    m.push(a, b);
                }
                m
            })
            .collect();
        let m = partial.iter().fold(Moments::default(), |acc, x| acc.merge(x));
        let mean_a = m.a / m.n;
        let mean_b = m.b / m.n;
        let dof = (m.n - 1.0).max(1.0);
        let var_a = (m.aa - m.n * mean_a * mean_a) / dof;
        let var_b = (m.bb - m.n * mean_b * mean_b) / dof;
        let cov_ab = (m.ab - m.n * mean_a * mean_b) / dof;
        thetas
            .iter()
            .map(|&t| {
                let (c, s) = (t.cos(), t.sin());
                let mean = counts_from_coefficients(mean_a, mean_b, t).0;
                let var = 0.25 * (var_a * c * c + var_b * s * s - 2.0 * cov_ab * c * s);
                (mean, (var.max(0.0) / m.n).sqrt())
            })
            .unzip()
    };
    let counts2 = counts1.iter().map(|x| 1.0 - x).collect();
    Ok(FransonResult {
        theta_grid: thetas.to_vec(),
        visibility: visibility(&counts1),
        fit_amplitude: fit_amplitude(thetas, &counts1),
        counts1,
        counts2,
        stderr,
        noise_model: noise.kind.name().to_string(),
        variance: noise.variance,
        samples: if noise.is_deterministic() {
            0
        } else {
            noise.sample_count
        },
        seed: noise.seed,
    })
}

/// `(max − min)/(max + min)` of a fringe curve.
pub fn visibility(counts: &[f64]) -> f64 {
    let max = counts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = counts.iter().copied().fold(f64::INFINITY, f64::min);
    if counts.is_empty() || max + min <= 0.0 {
        0.0
    } else {
        (max - min) / (max + min)
    }
}

/// Least-squares fit of `c₀ + c₁ cos θ + c₂ sin θ`; returns `2√(c₁² + c₂²)`,
/// the fringe amplitude relative to the `½` background.
pub fn fit_amplitude(thetas: &[f64], counts: &[f64]) -> f64 {
    let mut ata = [[0.0; 3]; 3];
    let mut aty = [0.0; 3];
    for (&t, &y) in thetas.iter().zip(counts) {
        let row = [1.0, t.cos(), t.sin()];
        for r in 0..3 {
            aty[r] += row[r] * y;
            for c in 0..3 {
                ata[r][c] += row[r] * row[c];
            }
        }
    }
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&ata);
    if d.abs() < 1e-12 {
        return 0.0;
    }
    let solve = |col: usize| {
        let mut m = ata;
        for r in 0..3 {
            m[r][col] = aty[r];
        }
        det(&m) / d
    };
    2.0 * solve(1).hypot(solve(2))
}

/// Closed-form Gaussian average for equal-weight bins with identical modes:
/// `n₁,₂ = ½[1 ± (1/J) e^{−σ²/2} Σ_k cos(θ + Δφ_k)]`, which reduces to
/// `½[1 ± ((J−1)/J) e^{−σ²/2} cos θ]` for real read pulses. The mean is the
/// same for shared and independent pair phases.
pub fn analytic_averaged_counts(state: &TimeBinState, theta: f64, variance: f64) -> Result<(f64, f64), FransonError> {
    let j_count = state.bins();
    let pops = state.populations();
    if pops.iter().any(|p| (p - 1.0 / j_count as f64).abs() > 1e-9) {
        return Err(FransonError::UnequalBins(pops));
    }
    let damping = (-0.5 * variance).exp();
    let sum: f64 = (1..j_count)
        .map(|j| {
            let rel = state.amplitudes[j].arg() - state.amplitudes[j - 1].arg();
            (theta + rel).cos()
        })
        .sum();
    let x = damping * sum / j_count as f64;
    Ok((0.5 * (1.0 + x), 0.5 * (1.0 - x)))
}
