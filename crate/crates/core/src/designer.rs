//! Inverse design of read-pulse trains.
//!
//! Without relaxation the fraction of the stored excitation emitted by the
//! end of read pulse `k` is `1 − exp(−B_k)`, where `B_k` is the cumulative
//! exposure `∫β` of the first `k` pulses. Inverting that per bin gives the
//! seed design; an optional refinement loop then corrects the seed against
//! the full rate equations (optical pumping, ground-state decoherence).

use serde::Serialize;

use crate::dynamics::{bin_areas, integrate, stored_excitation, DynamicsError, GridSpec};
use crate::pulse_model::{read_peak_for_exposure, PhysicalParams, PulseShape, PulseTrain, DEFAULT_SEPARATION_FACTOR};

/// Largest single-pulse exposure the refinement may ask for;
/// `1 − e^{-60}` is one to machine precision.
pub const MAX_EXPOSURE: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DesignError {
    #[error("invalid design target: {0}")]
    InvalidTarget(String),
    #[error("cannot parse weights '{0}': expected 'equal J' or a comma-separated list")]
    BadWeights(String),
    #[error("refinement did not converge after {iterations} iterations; residuals {residuals:?}")]
    NotConverged {
        iterations: usize,
        residuals: Vec<f64>,
        peaks: Vec<f64>,
    },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefineOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub damping: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-4,
            max_iter: 50,
            damping: 0.7,
        }
    }
}

/// Target bin weights as fractions of the stored excitation.
#[derive(Debug, Clone)]
pub struct DesignTarget {
    pub weights: Vec<f64>,
    pub total_retrieval: f64,
    /// One template per bin; peaks are ignored.
    pub templates: Vec<PulseShape>,
    pub refine: bool,
    pub options: RefineOptions,
    /// Separation rule the designed train must honor.
    pub separation_factor: f64,
}

impl DesignTarget {
    pub fn new(weights: Vec<f64>, templates: Vec<PulseShape>) -> Result<Self, DesignError> {
        let total_retrieval = weights.iter().sum();
        let target = Self {
            weights,
            total_retrieval,
            templates,
            refine: false,
            options: RefineOptions::default(),
            separation_factor: DEFAULT_SEPARATION_FACTOR,
        };
        target.validate()?;
        Ok(target)
    }

    pub fn equal(total_retrieval: f64, templates: Vec<PulseShape>) -> Result<Self, DesignError> {
        let j = templates.len();
        if j == 0 {
            return Err(DesignError::InvalidTarget("at least one bin required".into()));
        }
        let weights = vec![total_retrieval / j as f64; j];
        let target = Self {
            weights,
            total_retrieval,
            templates,
            refine: false,
            options: RefineOptions::default(),
            separation_factor: DEFAULT_SEPARATION_FACTOR,
        };
        target.validate()?;
        Ok(target)
    }

    pub fn refined(mut self, options: RefineOptions) -> Self {
        self.refine = true;
        self.options = options;
        self
    }

    pub fn validate(&self) -> Result<(), DesignError> {
        let bad = |msg: String| Err(DesignError::InvalidTarget(msg));
        if self.weights.is_empty() {
            return bad("at least one bin required".into());
        }
        if self.weights.len() != self.templates.len() {
            return bad(format!(
                "{} weights but {} pulse templates",
                self.weights.len(),
                self.templates.len()
            ));
        }
        if let Some(w) = self.weights.iter().find(|w| !(**w > 0.0)) {
            return bad(format!("weights must be > 0, got {w}"));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - self.total_retrieval).abs() > 1e-12 {
            return bad(format!(
                "weights sum to {sum} but total_retrieval is {}",
                self.total_retrieval
            ));
        }
        if !(self.total_retrieval > 0.0 && self.total_retrieval < 1.0) {
            return bad(format!(
                "total retrieval must lie in (0, 1), got {} (full retrieval needs infinite exposure)",
                self.total_retrieval
            ));
        }
        Ok(())
    }
}

/// Parsed form of a weight specification.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightSpec {
    Equal(usize),
    List(Vec<f64>),
}

impl WeightSpec {
    /// Accepts `"equal J"` or `"w1, w2, ..."`.
    pub fn parse(s: &str) -> Result<Self, DesignError> {
        let trimmed = s.trim();
        let err = || DesignError::BadWeights(s.to_string());
        if let Some(rest) = trimmed.strip_prefix("equal") {
            let j: usize = rest.trim().parse().map_err(|_| err())?;
            if j == 0 {
                return Err(err());
            }
            return Ok(Self::Equal(j));
        }
        let list = trimmed
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| err())?;
        Ok(Self::List(list))
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Equal(j) => *j,
            Self::List(w) => w.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Expands to explicit weights; `total` is required for `equal J` and,
    /// for an explicit list, must agree with its sum when given.
    pub fn weights(&self, total: Option<f64>) -> Result<Vec<f64>, DesignError> {
        match self {
            Self::Equal(j) => {
                let total =
                    total.ok_or_else(|| DesignError::InvalidTarget("'equal J' weights need total_retrieval".into()))?;
                Ok(vec![total / *j as f64; *j])
            }
            Self::List(w) => {
                let sum: f64 = w.iter().sum();
                if let Some(t) = total {
                    if (t - sum).abs() > 1e-12 {
                        return Err(DesignError::InvalidTarget(format!(
                            "weights sum to {sum} but total_retrieval is {t}"
                        )));
                    }
                }
                Ok(w.clone())
            }
        }
    }
}

/// Per-pulse exposures `b_k = B_k − B_{k−1}` with `B_k = −ln(1 − Σ_{j≤k} w_j)`.
pub fn design_exposures(target: &DesignTarget) -> Result<Vec<f64>, DesignError> {
    target.validate()?;
    let mut exposures = Vec::with_capacity(target.weights.len());
    let mut cumulative = 0.0;
    let mut previous = 0.0;
    for w in &target.weights {
        cumulative += w;
        let b = -(-cumulative).ln_1p();
        exposures.push(b - previous);
        previous = b;
    }
    Ok(exposures)
}

/// Peak Rabi frequencies realising the given exposures with each template.
pub fn exposures_to_peaks(exposures: &[f64], params: &PhysicalParams, templates: &[PulseShape]) -> Vec<f64> {
    exposures
        .iter()
        .zip(templates)
        .map(|(&b, tpl)| read_peak_for_exposure(params, tpl, b))
        .collect()
}

fn with_peaks(skeleton: &PulseTrain, peaks: &[f64]) -> PulseTrain {
    let mut train = skeleton.clone();
    for (read, &peak) in train.reads.iter_mut().zip(peaks) {
        read.peak = peak;
    }
    train
}

/// Bin areas of a full simulation as fractions of the stored excitation.
pub fn achieved_fractions(
    params: &PhysicalParams,
    train: &PulseTrain,
    grid: &GridSpec,
) -> Result<Vec<f64>, DesignError> {
    let trace = integrate(params, train, grid)?;
    let bins = bin_areas(&trace, train)?;
    let stored = stored_excitation(&trace, train).unwrap_or(0.0);
    if !(stored > 0.0) {
        return Err(DesignError::InvalidTarget(
            "no spin-wave excitation stored before the read pulses".into(),
        ));
    }
    Ok(bins.areas.iter().map(|a| a / stored).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Refinement {
    pub peaks: Vec<f64>,
    /// Achieved bin areas as fractions of the stored excitation.
    pub fractions: Vec<f64>,
    /// `achieved / target − 1` per bin.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// Effective exposure `−ln(1 − q)` for a conditional retrieval fraction `q`.
fn effective_exposure(q: f64) -> f64 {
    if q >= 1.0 {
        f64::INFINITY
    } else {
        -(-q).ln_1p()
    }
}

/// Corrects seed peaks against the full rate equations.
///
/// Each iteration compares, bin by bin, the exposure that would emit the
/// target area from what is actually left in the spin wave with the
/// effective exposure the current pulse achieved, and moves the pulse's log
/// exposure by a damped step of the log ratio. In the relaxation-free limit
/// the two coincide with the seed and the loop exits at iteration zero.
pub fn refine_design(
    seed_peaks: &[f64],
    params: &PhysicalParams,
    skeleton: &PulseTrain,
    target: &DesignTarget,
    grid: &GridSpec,
) -> Result<Refinement, DesignError> {
    target.validate()?;
    if seed_peaks.len() != target.weights.len() || skeleton.reads.len() != target.weights.len() {
        return Err(DesignError::InvalidTarget(format!(
            "{} seed peaks and {} read slots for {} bins",
            seed_peaks.len(),
            skeleton.reads.len(),
            target.weights.len()
        )));
    }
    let opts = &target.options;
    let mut peaks = seed_peaks.to_vec();
    let mut residuals = Vec::new();
    for iteration in 0..=opts.max_iter {
        let train = with_peaks(skeleton, &peaks);
        let trace = integrate(params, &train, grid)?;
        let bins = bin_areas(&trace, &train)?;
        let stored = stored_excitation(&trace, &train).unwrap_or(0.0);
        if !(stored > 0.0) {
            return Err(DesignError::InvalidTarget(
                "no spin-wave excitation stored before the read pulses".into(),
            ));
        }
        let fractions: Vec<f64> = bins.areas.iter().map(|a| a / stored).collect();
        residuals = fractions
            .iter()
            .zip(&target.weights)
            .map(|(a, w)| a / w - 1.0)
            .collect();
        if residuals.iter().all(|r| r.abs() < opts.rel_tol) {
            return Ok(Refinement {
                peaks,
                fractions,
                residuals,
                iterations: iteration,
            });
        }
        if iteration == opts.max_iter {
            break;
        }
        for k in 0..peaks.len() {
            let (start, _) = bins.windows[k];
            let remaining = trace.n_sp_at(start);
            if !(remaining > 0.0) {
                continue;
            }
            let wanted = effective_exposure(target.weights[k] * stored / remaining).min(MAX_EXPOSURE);
            let got = effective_exposure(bins.areas[k] / remaining).min(MAX_EXPOSURE);
            if !(got > 0.0) {
                continue;
            }
            let scale = (opts.damping * (wanted / got).ln()).exp();
            // exposure scales with the square of the peak
            let current = crate::pulse_model::read_exposure(params, &train.reads[k]);
            let next = (current * scale).min(MAX_EXPOSURE);
            peaks[k] = read_peak_for_exposure(params, &train.reads[k], next);
        }
    }
    Err(DesignError::NotConverged {
        iterations: opts.max_iter,
        residuals,
        peaks,
    })
}

/// Result of a complete design run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignOutcome {
    pub weights: Vec<f64>,
    pub exposures: Vec<f64>,
    pub seed_peaks: Vec<f64>,
    pub refinement: Option<Refinement>,
}

impl DesignOutcome {
    pub fn final_peaks(&self) -> &[f64] {
        self.refinement.as_ref().map_or(&self.seed_peaks, |r| &r.peaks)
    }
}

/// Seeds from the closed-form inversion and, when requested, refines against
/// the rate equations using `write` as the storage pulse.
pub fn design(
    params: &PhysicalParams,
    write: &PulseShape,
    target: &DesignTarget,
    grid: &GridSpec,
) -> Result<(DesignOutcome, PulseTrain), DesignError> {
    let exposures = design_exposures(target)?;
    let seed_peaks = exposures_to_peaks(&exposures, params, &target.templates);
    let skeleton = PulseTrain::with_separation(write.clone(), target.templates.clone(), target.separation_factor)
        .map_err(|e| DesignError::Dynamics(e.into()))?;
    let refinement = if target.refine {
        Some(refine_design(&seed_peaks, params, &skeleton, target, grid)?)
    } else {
        None
    };
    let outcome = DesignOutcome {
        weights: target.weights.clone(),
        exposures,
        seed_peaks,
        refinement,
    };
    let train = with_peaks(&skeleton, outcome.final_peaks());
    Ok((outcome, train))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn templates(j: usize) -> Vec<PulseShape> {
        (0..j)
            .map(|i| PulseShape::gaussian(100.0 + 80.0 * i as f64, 10.0, 0.0))
            .collect()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn single_bin_half_retrieval() {
        let t = DesignTarget::new(vec![0.5], templates(1)).unwrap();
        let b = design_exposures(&t).unwrap();
        assert!(close(b[0], 2f64.ln(), 1e-15));
    }

    #[test]
    fn equal_three_bins_at_098() {
        let t = DesignTarget::equal(0.98, templates(3)).unwrap();
        let b = design_exposures(&t).unwrap();
        // B_k = −ln(1 − 0.98k/3), evaluated independently
        let expected = [
            0.395_514_777_254_996_3,
            0.663_876_798_259_832_1,
            2.852_631_429_913_316_6,
        ];
        for (x, e) in b.iter().zip(expected) {
            assert!(close(*x, e, 1e-12), "{x} vs {e}");
        }
        assert!(b[0] < b[1] && b[1] < b[2]);
    }

    #[test]
    fn exposures_diverge_toward_full_retrieval() {
        let mut last = 0.0;
        for total in [0.9, 0.99, 0.999, 0.999_999] {
            let t = DesignTarget::equal(total, templates(3)).unwrap();
            let b3 = design_exposures(&t).unwrap()[2];
            assert!(b3 > last);
            last = b3;
        }
        assert!(last > 10.0);
    }

    #[test]
    fn full_or_excess_retrieval_rejected() {
        assert!(DesignTarget::equal(1.0, templates(3)).is_err());
        assert!(DesignTarget::new(vec![0.6, 0.5], templates(2)).is_err());
        assert!(DesignTarget::new(vec![0.5, 0.0], templates(2)).is_err());
    }

    #[test]
    fn peaks_follow_square_root_of_exposure() {
        let p = PhysicalParams::default();
        let tpl = templates(2);
        let peaks = exposures_to_peaks(&[0.3, 0.6], &p, &tpl);
        assert!(close(peaks[1] / peaks[0], 2f64.sqrt(), 1e-14));
        let same = exposures_to_peaks(&[0.4, 0.4], &p, &tpl);
        assert_eq!(same[0], same[1]);

        let t = DesignTarget::equal(0.98, templates(3)).unwrap();
        let b = design_exposures(&t).unwrap();
        let peaks = exposures_to_peaks(&b, &p, &t.templates);
        assert!(close(peaks[1] / peaks[0], 1.295_574, 1e-6));
        assert!(close(peaks[2] / peaks[0], 2.685_601, 1e-6));
    }

    #[test]
    fn weight_spec_parsing() {
        assert_eq!(WeightSpec::parse("equal 3").unwrap(), WeightSpec::Equal(3));
        assert_eq!(
            WeightSpec::parse(" 0.5, 0.3,0.1 ").unwrap(),
            WeightSpec::List(vec![0.5, 0.3, 0.1])
        );
        assert!(WeightSpec::parse("equal").is_err());
        assert!(WeightSpec::parse("equal 0").is_err());
        assert!(WeightSpec::parse("a,b").is_err());
        assert_eq!(WeightSpec::Equal(2).weights(Some(0.5)).unwrap(), vec![0.25, 0.25]);
        assert!(WeightSpec::Equal(2).weights(None).is_err());
        assert!(WeightSpec::List(vec![0.2, 0.2]).weights(Some(0.5)).is_err());
    }

    fn heralded_grid() -> GridSpec {
        GridSpec::default().with_initial_excitation(1.0)
    }

    fn dark_write() -> PulseShape {
        PulseShape::gaussian(0.0, 10.0, 0.0)
    }

    #[test]
    fn refinement_is_noop_without_relaxation() {
        let p = PhysicalParams {
            gamma32: 0.0,
            gamma41: 0.0,
            gamma_c: 0.0,
            ..PhysicalParams::default()
        };
        let t = DesignTarget::equal(0.98, templates(3))
            .unwrap()
            .refined(RefineOptions::default());
        let (outcome, _) = design(&p, &dark_write(), &t, &heralded_grid()).unwrap();
        let r = outcome.refinement.unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.peaks, outcome.seed_peaks);
    }

    #[test]
    fn refinement_compensates_pumping_loss() {
        let t = DesignTarget::equal(0.98, templates(3))
            .unwrap()
            .refined(RefineOptions::default());
        let mut previous: Option<Vec<f64>> = None;
        for gamma41 in [0.1, 0.3, 0.5] {
            let p = PhysicalParams {
                gamma41,
                ..PhysicalParams::default()
            };
            let (outcome, _) = design(&p, &dark_write(), &t, &heralded_grid()).unwrap();
            let r = outcome.refinement.as_ref().unwrap();
            assert!(r.residuals.iter().all(|x| x.abs() < 1e-4));
            for (refined, seed) in r.peaks.iter().zip(&outcome.seed_peaks) {
                assert!(refined > seed);
            }
            if let Some(prev) = previous {
                assert!(r.peaks.iter().zip(&prev).all(|(a, b)| a > b));
            }
            previous = Some(r.peaks.clone());
        }
    }

    #[test]
    fn refinement_matches_proportional_loss_closed_form() {
        // Γ_R = κβ with κ = γ₄₁χ/(2N g_AS²): the spin wave decays at (1+κ)β and
        // a fraction 1/(1+κ) of the decay is emitted, so the exact exposures are
        // B_k = −ln(1 − (1+κ)Σw)/(1+κ).
        let p = PhysicalParams {
            gamma41: 0.5,
            ..PhysicalParams::default()
        };
        let kappa = 1.0 / p.antistokes_signal_to_noise();
        let t = DesignTarget::equal(0.9, templates(3)).unwrap().refined(RefineOptions {
            rel_tol: 1e-7,
            max_iter: 200,
            ..RefineOptions::default()
        });
        let (outcome, train) = design(&p, &dark_write(), &t, &heralded_grid()).unwrap();
        let mut prev = 0.0;
        for k in 0..3 {
            let cumulative = 0.3 * (k + 1) as f64;
            let big_b = -(-(1.0 + kappa) * cumulative).ln_1p() / (1.0 + kappa);
            let b = crate::pulse_model::read_exposure(&p, &train.reads[k]);
            assert!(close(b / (big_b - prev), 1.0, 1e-5), "bin {k}");
            prev = big_b;
        }
        assert!(outcome.refinement.unwrap().iterations > 0);
    }

    #[test]
    fn infeasible_target_reports_residuals() {
        let p = PhysicalParams {
            gamma_c: 0.05,
            ..PhysicalParams::default()
        };
        let t = DesignTarget::equal(0.98, templates(3))
            .unwrap()
            .refined(RefineOptions::default());
        match design(&p, &dark_write(), &t, &heralded_grid()) {
            Err(DesignError::NotConverged { residuals, .. }) => {
                assert_eq!(residuals.len(), 3);
                assert!(residuals.iter().any(|r| r.abs() >= 1e-4));
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
