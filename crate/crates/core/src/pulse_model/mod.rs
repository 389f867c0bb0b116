//! Physical constants, write/read pulse trains and the time-dependent rates
//! derived from them.
//!
//! All quantities are dimensionless: rates are in units of the upper-state
//! decay rate `γ` and times in units of `1/γ`.

pub mod shapes;

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::registry::UnknownStrategy;
pub use shapes::{envelopes, Envelope};

pub const DEFAULT_SEPARATION_FACTOR: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("{field} must be {requirement}, got {value}")]
    InvalidParam {
        field: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("read pulse {index} centered at {center} does not follow the previous pulse at {previous}")]
    UnorderedReads { index: usize, center: f64, previous: f64 },
    #[error("pulses at {first} and {second} are {spacing} apart, below {required} (separation factor {factor})")]
    PulsesTooClose {
        first: f64,
        second: f64,
        spacing: f64,
        required: f64,
        factor: f64,
    },
    #[error(transparent)]
    UnknownShape(#[from] UnknownStrategy),
}

fn require(ok: bool, field: &'static str, requirement: &'static str, value: f64) -> Result<(), ModelError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidParam {
            field,
            requirement,
            value,
        })
    }
}

/// Dimensionless system constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhysicalParams {
    /// Total upper-state decay rate; the unit of every other rate.
    pub gamma: f64,
    pub gamma32: f64,
    pub gamma41: f64,
    /// Ground-state coherence decay rate.
    pub gamma_c: f64,
    pub delta_w: f64,
    pub delta_r: f64,
    pub n_atoms: f64,
    /// Cavity damping rate `c/L`.
    pub chi: f64,
    pub g_s: f64,
    pub g_as: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            gamma32: 0.5,
            gamma41: 0.5,
            gamma_c: 0.0,
            delta_w: 20.0,
            delta_r: 20.0,
            n_atoms: 1.0e4,
            chi: 100.0,
            g_s: 0.5,
            g_as: 0.5,
        }
    }
}

impl PhysicalParams {
    /// Partial decay rates may be zero: that is the relaxation-free limit in
    /// which the closed-form photon numbers are exact.
    pub fn validate(&self) -> Result<(), ModelError> {
        require(self.gamma > 0.0, "gamma", "> 0", self.gamma)?;
        require(
            self.gamma32 >= 0.0 && self.gamma32 <= self.gamma,
            "gamma32",
            "within [0, gamma]",
            self.gamma32,
        )?;
        require(
            self.gamma41 >= 0.0 && self.gamma41 <= self.gamma,
            "gamma41",
            "within [0, gamma]",
            self.gamma41,
        )?;
        require(self.gamma_c >= 0.0, "gamma_c", ">= 0", self.gamma_c)?;
        require(self.delta_w != 0.0, "delta_w", "nonzero", self.delta_w)?;
        require(self.delta_r != 0.0, "delta_r", "nonzero", self.delta_r)?;
        require(self.n_atoms > 0.0, "n_atoms", "> 0", self.n_atoms)?;
        require(self.chi > 0.0, "chi", "> 0", self.chi)?;
        require(self.g_s > 0.0, "g_s", "> 0", self.g_s)?;
        require(self.g_as > 0.0, "g_as", "> 0", self.g_as)?;
        Ok(())
    }

    /// `2N/χ`, the factor turning squared effective couplings into gains.
    pub fn gain_prefactor(&self) -> f64 {
        2.0 * self.n_atoms / self.chi
    }

    /// `α/Γ_W` inside the write window; independent of time and drive.
    pub fn stokes_signal_to_noise(&self) -> f64 {
        self.gain_prefactor() * self.g_s * self.g_s / self.gamma32
    }

    /// `β/Γ_R` inside a read window.
    pub fn antistokes_signal_to_noise(&self) -> f64 {
        self.gain_prefactor() * self.g_as * self.g_as / self.gamma41
    }
}

/// One laser pulse: envelope, timing and complex peak Rabi frequency.
#[derive(Clone)]
pub struct PulseShape {
    pub envelope: Arc<dyn Envelope>,
    pub center: f64,
    pub duration: f64,
    /// Peak Rabi frequency magnitude.
    pub peak: f64,
    /// Phase of the peak Rabi frequency (radians).
    pub phase: f64,
}

impl fmt::Debug for PulseShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PulseShape")
            .field("kind", &self.envelope.name())
            .field("center", &self.center)
            .field("duration", &self.duration)
            .field("peak", &self.peak)
            .field("phase", &self.phase)
            .finish()
    }
}

impl PulseShape {
    pub fn new(kind: &str, center: f64, duration: f64, peak: f64) -> Result<Self, ModelError> {
        let shape = Self {
            envelope: envelopes().get(kind)?,
            center,
            duration,
            peak,
            phase: 0.0,
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn gaussian(center: f64, duration: f64, peak: f64) -> Self {
        Self::new("gaussian", center, duration, peak).expect("valid gaussian pulse")
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn with_peak(mut self, peak: f64) -> Self {
        self.peak = peak;
        self
    }

    pub fn kind(&self) -> &'static str {
        self.envelope.name()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        require(self.center.is_finite(), "center", "finite", self.center)?;
        require(self.duration > 0.0, "duration", "> 0", self.duration)?;
        require(self.peak >= 0.0, "peak", ">= 0", self.peak)?;
        require(self.phase.is_finite(), "phase", "finite", self.phase)?;
        Ok(())
    }

    /// Unit-peak envelope `f(t - center)`.
    pub fn eval(&self, t: f64) -> f64 {
        self.envelope.profile((t - self.center) / self.duration)
    }

    /// Complex Rabi frequency `Ω e^{iφ} f(t - center)`.
    pub fn rabi(&self, t: f64) -> Complex64 {
        Complex64::from_polar(self.peak * self.eval(t), self.phase)
    }

    /// `∫ f² dt` for this pulse's duration (peak excluded).
    pub fn square_integral(&self) -> f64 {
        self.envelope.square_integral() * self.duration
    }

    /// Half-width of the time interval outside which the drive is negligible.
    pub fn tail(&self) -> f64 {
        self.envelope.tail_half_width() * self.duration
    }
}

/// Eval `f(t)` for a pulse; total function of `t`.
pub fn eval_shape(p: &PulseShape, t: f64) -> f64 {
    p.eval(t)
}

/// Write pulse followed by an ordered train of read sub-pulses.
#[derive(Debug, Clone)]
pub struct PulseTrain {
    pub write: PulseShape,
    pub reads: Vec<PulseShape>,
    pub separation_factor: f64,
}

impl PulseTrain {
    pub fn new(write: PulseShape, reads: Vec<PulseShape>) -> Result<Self, ModelError> {
        Self::with_separation(write, reads, DEFAULT_SEPARATION_FACTOR)
    }

    pub fn with_separation(
        write: PulseShape,
        reads: Vec<PulseShape>,
        separation_factor: f64,
    ) -> Result<Self, ModelError> {
        let train = Self {
            write,
            reads,
            separation_factor,
        };
        train.validate()?;
        Ok(train)
    }

    /// Checks ordering and separation. The write pulse counts as the first
    /// member of the sequence, so the write-to-read delay obeys the same
    /// separation rule as consecutive reads.
    pub fn validate(&self) -> Result<(), ModelError> {
        require(
            self.separation_factor > 0.0,
            "separation_factor",
            "> 0",
            self.separation_factor,
        )?;
        self.write.validate()?;
        let mut previous = &self.write;
        for (index, read) in self.reads.iter().enumerate() {
            read.validate()?;
            if read.center <= previous.center {
                return Err(ModelError::UnorderedReads {
                    index: index + 1,
                    center: read.center,
                    previous: previous.center,
                });
            }
            let spacing = read.center - previous.center;
            let required = self.separation_factor * read.duration.max(previous.duration);
            if spacing < required {
                return Err(ModelError::PulsesTooClose {
                    first: previous.center,
                    second: read.center,
                    spacing,
                    required,
                    factor: self.separation_factor,
                });
            }
            previous = read;
        }
        Ok(())
    }

    /// Write-to-first-read delay, center to center (`None` without reads).
    pub fn delay(&self) -> Option<f64> {
        self.reads.first().map(|r| r.center - self.write.center)
    }

    /// Read Rabi frequency `Ω_R(t) = Σ Ω_i f_i(t - t_i)`.
    pub fn read_rabi(&self, t: f64) -> Complex64 {
        self.reads.iter().map(|r| r.rabi(t)).sum()
    }

    /// Interval outside which every drive is negligible.
    pub fn span(&self) -> (f64, f64) {
        let start = self.write.center - self.write.tail();
        let end = self
            .reads
            .iter()
            .map(|r| r.center + r.tail())
            .fold(self.write.center + self.write.tail(), f64::max);
        (start, end)
    }

    /// Bin window boundaries: midpoints between consecutive pulse centers,
    /// the first opening halfway between the write pulse and the first read.
    /// The last window closes at `end`.
    pub fn bin_windows(&self, end: f64) -> Vec<(f64, f64)> {
        let mut edges = Vec::with_capacity(self.reads.len() + 1);
        let mut previous = self.write.center;
        for read in &self.reads {
            edges.push(0.5 * (previous + read.center));
            previous = read.center;
        }
        edges.push(end);
        edges.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn read_centers(&self) -> Vec<f64> {
        self.reads.iter().map(|r| r.center).collect()
    }

    pub fn read_phases(&self) -> Vec<f64> {
        self.reads.iter().map(|r| r.phase).collect()
    }
}

/// Effective Stokes coupling `G(t) = g_S (Ω_W/Δ_W) f_W(t)`.
pub fn coupling_g(params: &PhysicalParams, train: &PulseTrain, t: f64) -> f64 {
    params.g_s * train.write.peak / params.delta_w * train.write.eval(t)
}

/// Effective anti-Stokes coupling `F(t) = g_AS Ω_R(t)/Δ_R`.
pub fn coupling_f(params: &PhysicalParams, train: &PulseTrain, t: f64) -> Complex64 {
    train.read_rabi(t) * (params.g_as / params.delta_r)
}

/// Stokes gain `α(t) = (2N/χ) G²(t)`.
pub fn gain_alpha(params: &PhysicalParams, train: &PulseTrain, t: f64) -> f64 {
    let g = coupling_g(params, train, t);
    params.gain_prefactor() * g * g
}

/// Anti-Stokes gain `β(t) = (2N/χ) |F(t)|²`.
pub fn gain_beta(params: &PhysicalParams, train: &PulseTrain, t: f64) -> f64 {
    params.gain_prefactor() * coupling_f(params, train, t).norm_sqr()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Relaxation {
    pub write_pumping: f64,
    pub read_pumping: f64,
    pub total: f64,
}

/// Optical-pumping rates `Γ_W`, `Γ_R` and `Γ_tot = γ_c + Γ_W + Γ_R`.
pub fn relaxation_rates(params: &PhysicalParams, train: &PulseTrain, t: f64) -> Relaxation {
    let w = train.write.peak * train.write.eval(t) / params.delta_w;
    let write_pumping = w * w * params.gamma32;
    let read_pumping = train.read_rabi(t).norm_sqr() / (params.delta_r * params.delta_r) * params.gamma41;
    Relaxation {
        write_pumping,
        read_pumping,
        total: params.gamma_c + write_pumping + read_pumping,
    }
}

/// `∫ α dτ` over the whole write pulse.
pub fn write_gain_area(params: &PhysicalParams, write: &PulseShape) -> f64 {
    let g = params.g_s * write.peak / params.delta_w;
    params.gain_prefactor() * g * g * write.square_integral()
}

/// `∫ β dτ` over a single read pulse.
pub fn read_exposure(params: &PhysicalParams, read: &PulseShape) -> f64 {
    let f = params.g_as * read.peak / params.delta_r;
    params.gain_prefactor() * f * f * read.square_integral()
}

/// Write peak Rabi frequency giving `∫ α dτ = area`.
pub fn write_peak_for_gain_area(params: &PhysicalParams, template: &PulseShape, area: f64) -> f64 {
    (area * params.chi * params.delta_w * params.delta_w
        / (2.0 * params.n_atoms * params.g_s * params.g_s * template.square_integral()))
    .sqrt()
}

/// Read peak Rabi frequency giving `∫ β dτ = exposure` for one sub-pulse.
pub fn read_peak_for_exposure(params: &PhysicalParams, template: &PulseShape, exposure: f64) -> f64 {
    (exposure * params.chi * params.delta_r * params.delta_r
        / (2.0 * params.n_atoms * params.g_as * params.g_as * template.square_integral()))
    .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_params() -> PhysicalParams {
        PhysicalParams {
            g_s: 1.0,
            g_as: 1.0,
            ..PhysicalParams::default()
        }
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn eval_shape_examples() {
        let g = PulseShape::gaussian(0.0, 1.0, 1.0);
        assert_eq!(eval_shape(&g, 0.0), 1.0);
        assert!(close(eval_shape(&g, 1.0), (-0.5f64).exp(), 1e-15));
        assert!(close(eval_shape(&g, 1.0), 0.6065, 1e-4));
        let sq = PulseShape::new("square", 5.0, 2.0, 1.0).unwrap();
        assert_eq!(eval_shape(&sq, 6.01), 0.0);
        assert_eq!(eval_shape(&sq, 5.99), 1.0);
    }

    #[test]
    fn unknown_shape_is_rejected() {
        let err = PulseShape::new("lorentzian", 0.0, 1.0, 1.0).unwrap_err();
        assert!(matches!(err, ModelError::UnknownShape(_)));
    }

    #[test]
    fn coupling_g_examples() {
        let p = unit_params();
        let train = PulseTrain::new(PulseShape::gaussian(0.0, 1.0, 2.0), vec![]).unwrap();
        assert!(close(coupling_g(&p, &train, 0.0), 0.1, 1e-15));
        assert!(close(coupling_g(&p, &train, 1.0), 0.1 * (-0.5f64).exp(), 1e-15));
        let sq = PulseTrain::new(PulseShape::new("square", 0.0, 2.0, 2.0).unwrap(), vec![]).unwrap();
        assert_eq!(coupling_g(&p, &sq, 3.0), 0.0);
    }

    #[test]
    fn coupling_f_examples() {
        let p = unit_params();
        let write = PulseShape::gaussian(0.0, 1.0, 1.0);
        let one = PulseTrain::new(write.clone(), vec![PulseShape::gaussian(10.0, 1.0, 3.0)]).unwrap();
        assert!(close(coupling_f(&p, &one, 10.0).re, 0.15, 1e-15));
        assert_eq!(coupling_f(&p, &one, 200.0).norm(), 0.0);

        // two reads exactly at the minimum separation: the neighbour's tail at
        // the second center is Ω_1 e^{-s²/2}
        let two = PulseTrain::new(
            write,
            vec![
                PulseShape::gaussian(10.0, 1.0, 3.0),
                PulseShape::gaussian(16.0, 1.0, 3.0),
            ],
        )
        .unwrap();
        let f2 = coupling_f(&p, &two, 16.0).re;
        let nearest = 3.0 / 20.0;
        let tail = f2 - nearest;
        assert!(close(tail / nearest, (-18.0f64).exp(), 1e-12));
        // e^-18 ≈ 1.52e-8; it drops below 1e-8 once the separation factor
        // exceeds sqrt(2 ln 1e8) ≈ 6.07
        let factor = (2.0 * 1e8f64.ln()).sqrt() + 1e-3;
        assert!((-0.5 * factor * factor).exp() < 1e-8);
    }

    #[test]
    fn gain_examples() {
        let p = PhysicalParams {
            n_atoms: 1e4,
            chi: 1e4,
            g_s: 1.0,
            delta_w: 20.0,
            ..PhysicalParams::default()
        };
        // G = g_S Ω_W/Δ_W = 0.01 → α = (2·10⁴/10⁴)·10⁻⁴ = 2·10⁻⁴
        let train = PulseTrain::new(PulseShape::gaussian(0.0, 1.0, 0.2), vec![]).unwrap();
        assert!(close(coupling_g(&p, &train, 0.0), 0.01, 1e-16));
        assert!(close(gain_alpha(&p, &train, 0.0), 2e-4, 1e-18));
        assert_eq!(gain_alpha(&p, &train, 100.0), 0.0);

        let read = |peak| {
            PulseTrain::new(
                PulseShape::gaussian(0.0, 1.0, 1.0),
                vec![PulseShape::gaussian(10.0, 1.0, peak)],
            )
            .unwrap()
        };
        let b1 = gain_beta(&p, &read(1.0), 10.0);
        let b2 = gain_beta(&p, &read(2.0), 10.0);
        assert!(close(b2 / b1, 4.0, 1e-12));
    }

    #[test]
    fn relaxation_examples() {
        let p = PhysicalParams {
            gamma32: 0.5,
            gamma_c: 0.0,
            ..PhysicalParams::default()
        };
        let off = PulseTrain::new(PulseShape::gaussian(0.0, 1.0, 0.0), vec![]).unwrap();
        assert_eq!(relaxation_rates(&p, &off, 0.0).total, 0.0);

        let on = PulseTrain::new(PulseShape::gaussian(0.0, 1.0, 2.0), vec![]).unwrap();
        let r = relaxation_rates(&p, &on, 0.0);
        assert!(close(r.write_pumping, 0.005, 1e-15));
        assert_eq!(r.read_pumping, 0.0);

        // α/Γ_W = 2N g_S²/(χ γ₃₂) regardless of Ω_W and t
        let expected = 2.0 * p.n_atoms * p.g_s * p.g_s / (p.chi * p.gamma32);
        for peak in [0.5, 2.0, 7.0] {
            let train = PulseTrain::new(PulseShape::gaussian(0.0, 3.0, peak), vec![]).unwrap();
            for t in [-4.0, -1.0, 0.0, 2.5, 5.0] {
                let ratio = gain_alpha(&p, &train, t) / relaxation_rates(&p, &train, t).write_pumping;
                assert!(close(ratio / expected, 1.0, 1e-12));
            }
        }
        assert!(close(p.stokes_signal_to_noise(), expected, 1e-12));
    }

    #[test]
    fn params_validation() {
        assert!(PhysicalParams::default().validate().is_ok());
        let bad = PhysicalParams {
            gamma32: 1.5,
            ..PhysicalParams::default()
        };
        assert!(matches!(
            bad.validate(),
            Err(ModelError::InvalidParam { field: "gamma32", .. })
        ));
        let bad = PhysicalParams {
            delta_r: 0.0,
            ..PhysicalParams::default()
        };
        assert!(matches!(
            bad.validate(),
            Err(ModelError::InvalidParam { field: "delta_r", .. })
        ));
        let bad = PhysicalParams {
            gamma_c: -1e-3,
            ..PhysicalParams::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn train_validation() {
        let w = PulseShape::gaussian(0.0, 1.0, 1.0);
        let r = |c| PulseShape::gaussian(c, 1.0, 1.0);
        assert!(PulseTrain::new(w.clone(), vec![r(10.0), r(20.0)]).is_ok());
        assert!(matches!(
            PulseTrain::new(w.clone(), vec![r(20.0), r(10.0)]),
            Err(ModelError::UnorderedReads { .. })
        ));
        assert!(matches!(
            PulseTrain::new(w.clone(), vec![r(10.0), r(15.0)]),
            Err(ModelError::PulsesTooClose { .. })
        ));
        assert!(matches!(
            PulseTrain::new(w.clone(), vec![r(3.0)]),
            Err(ModelError::PulsesTooClose { .. })
        ));
        assert!(PulseTrain::with_separation(w, vec![r(10.0), r(15.0)], 4.0).is_ok());
    }

    #[test]
    fn windows_use_midpoints() {
        let w = PulseShape::gaussian(0.0, 1.0, 1.0);
        let r = |c| PulseShape::gaussian(c, 1.0, 1.0);
        let train = PulseTrain::new(w, vec![r(20.0), r(30.0), r(40.0)]).unwrap();
        assert_eq!(train.delay(), Some(20.0));
        assert_eq!(train.bin_windows(50.0), vec![(10.0, 25.0), (25.0, 35.0), (35.0, 50.0)]);
        assert_eq!(train.span(), (-6.0, 46.0));
    }

    #[test]
    fn calibration_helpers_invert_areas() {
        let p = PhysicalParams::default();
        let w = PulseShape::gaussian(0.0, 10.0, 1.0);
        let peak = write_peak_for_gain_area(&p, &w, 0.7);
        assert!(close(write_gain_area(&p, &w.clone().with_peak(peak)), 0.7, 1e-14));
        for kind in ["gaussian", "squared_cosine", "square"] {
            let r = PulseShape::new(kind, 100.0, 10.0, 1.0).unwrap();
            let peak = read_peak_for_exposure(&p, &r, 1.3);
            assert!(close(read_exposure(&p, &r.with_peak(peak)), 1.3, 1e-14));
        }
    }
}
