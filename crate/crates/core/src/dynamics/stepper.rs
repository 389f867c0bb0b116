//! Explicit Runge-Kutta steppers for the three-component rate system
//! `[N_sp, n_S, n_AS]`.

use std::sync::{Arc, OnceLock};

use crate::registry::{Named, Registry};

use super::DynamicsError;

pub type RateState = [f64; 3];

pub trait RateSystem: Sync {
    fn rhs(&self, t: f64, y: &RateState) -> RateState;
}

impl<F> RateSystem for F
where
    F: Fn(f64, &RateState) -> RateState + Sync,
{
    fn rhs(&self, t: f64, y: &RateState) -> RateState {
        self(t, y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepControl {
    pub atol: f64,
    pub rtol: f64,
    /// Step for fixed-step methods; defaults to the output spacing.
    pub fixed_dt: Option<f64>,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            atol: 1e-10,
            rtol: 1e-8,
            fixed_dt: None,
            max_steps: 5_000_000,
        }
    }
}

pub trait Stepper: Named + Send + Sync {
    /// Integrates from `outputs[0]` with state `y0` and returns the state at
    /// every output time. `outputs` must be strictly increasing.
    fn solve(
        &self,
        system: &dyn RateSystem,
        control: &StepControl,
        y0: RateState,
        outputs: &[f64],
    ) -> Result<Vec<RateState>, DynamicsError>;
}

fn axpy(y: &RateState, h: f64, terms: &[(f64, &RateState)]) -> RateState {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..3 {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Classical fourth-order Runge-Kutta with a fixed step; each output interval
/// is split into equal substeps so the outputs are hit exactly.
pub struct Rk4;

impl Named for Rk4 {
    fn name(&self) -> &'static str {
        "rk4"
    }
}

impl Stepper for Rk4 {
    fn solve(
        &self,
        system: &dyn RateSystem,
        control: &StepControl,
        y0: RateState,
        outputs: &[f64],
    ) -> Result<Vec<RateState>, DynamicsError> {
        let mut states = Vec::with_capacity(outputs.len());
        let mut y = y0;
        states.push(y);
        let mut steps = 0usize;
        for pair in outputs.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let dt = control.fixed_dt.unwrap_or(b - a);
            if !(dt > 0.0) {
                return Err(DynamicsError::InvalidGrid(format!("fixed step must be > 0, got {dt}")));
            }
            let n = ((b - a) / dt).ceil().max(1.0) as usize;
            let h = (b - a) / n as f64;
            for i in 0..n {
                let t = a + i as f64 * h;
                let k1 = system.rhs(t, &y);
                let k2 = system.rhs(t + 0.5 * h, &axpy(&y, 0.5 * h, &[(1.0, &k1)]));
                let k3 = system.rhs(t + 0.5 * h, &axpy(&y, 0.5 * h, &[(1.0, &k2)]));
                let k4 = system.rhs(t + h, &axpy(&y, h, &[(1.0, &k3)]));
                y = axpy(&y, h / 6.0, &[(1.0, &k1), (2.0, &k2), (2.0, &k3), (1.0, &k4)]);
            }
            steps += n;
            if steps > control.max_steps {
                return Err(DynamicsError::StepFailure {
                    t_start: a,
                    t_end: b,
                    reason: format!("exceeded {} steps", control.max_steps),
                });
            }
            states.push(y);
        }
        Ok(states)
    }
}

/// Dormand-Prince 5(4) with embedded error control.
pub struct DormandPrince45;

impl Named for DormandPrince45 {
    fn name(&self) -> &'static str {
        "dopri45"
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

impl DormandPrince45 {
    /// One trial step; returns the fifth-order solution and the scaled error norm.
    fn trial(
        system: &dyn RateSystem,
        control: &StepControl,
        t: f64,
        y: &RateState,
        k1: &RateState,
        h: f64,
    ) -> (RateState, RateState, f64) {
        let k2 = system.rhs(t + C2 * h, &axpy(y, h, &[(A21, k1)]));
        let k3 = system.rhs(t + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]));
        let k4 = system.rhs(t + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
        let k5 = system.rhs(
            t + C5 * h,
            &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = system.rhs(
            t + h,
            &axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        );
        let y_new = axpy(y, h, &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let k7 = system.rhs(t + h, &y_new);
        let mut sum = 0.0;
        for i in 0..3 {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = control.atol + control.rtol * y[i].abs().max(y_new[i].abs());
            sum += (e / scale).powi(2);
        }
        (y_new, k7, (sum / 3.0).sqrt())
    }
}

impl Stepper for DormandPrince45 {
    fn solve(
        &self,
        system: &dyn RateSystem,
        control: &StepControl,
        y0: RateState,
        outputs: &[f64],
    ) -> Result<Vec<RateState>, DynamicsError> {
        let mut states = Vec::with_capacity(outputs.len());
        states.push(y0);
        let Some(&first) = outputs.first() else {
            return Ok(Vec::new());
        };
        let mut t = first;
        let mut y = y0;
        let mut k1 = system.rhs(t, &y);
        let mut h = outputs.get(1).map_or(1.0, |b| (b - first) * 0.5);
        let mut steps = 0usize;

        for &target in &outputs[1..] {
            while t < target {
                let remaining = target - t;
                let hitting = h >= remaining;
                let step = if hitting { remaining } else { h };
                let (y_new, k_new, err) = Self::trial(system, control, t, &y, &k1, step);
                steps += 1;
                if steps > control.max_steps {
                    return Err(DynamicsError::StepFailure {
                        t_start: t,
                        t_end: target,
                        reason: format!("exceeded {} steps", control.max_steps),
                    });
                }
                if !err.is_finite() {
                    return Err(DynamicsError::StepFailure {
                        t_start: t,
                        t_end: t + step,
                        reason: "non-finite error estimate".into(),
                    });
                }
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                if err <= 1.0 {
                    t = if hitting { target } else { t + step };
                    y = y_new;
                    k1 = k_new;
                    // a step shortened to land on an output says nothing about
                    // the size the controller would choose
                    h = if hitting { h.max(step * factor) } else { step * factor };
                } else {
                    h = step * factor;
                    if h < 1e-13 * t.abs().max(1.0) {
                        return Err(DynamicsError::StepFailure {
                            t_start: t,
                            t_end: t + step,
                            reason: format!(
                                "step size underflow; tolerance atol={} rtol={} unreachable",
                                control.atol, control.rtol
                            ),
                        });
                    }
                }
            }
            states.push(y);
        }
        Ok(states)
    }
}

pub fn steppers() -> &'static Registry<dyn Stepper> {
    static REGISTRY: OnceLock<Registry<dyn Stepper>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let reg: Registry<dyn Stepper> = Registry::new("stepper");
        reg.register(Arc::new(DormandPrince45));
        reg.register(Arc::new(Rk4));
        reg
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(_t: f64, y: &RateState) -> RateState {
        [-y[0], y[0], -2.0 * y[2]]
    }

    fn outputs() -> Vec<f64> {
        (0..=20).map(|i| i as f64 * 0.25).collect()
    }

    #[test]
    fn both_steppers_solve_linear_decay() {
        let control = StepControl {
            fixed_dt: Some(0.01),
            ..StepControl::default()
        };
        for name in steppers().names() {
            let stepper = steppers().get(name).unwrap();
            let ts = outputs();
            let ys = stepper.solve(&decay, &control, [1.0, 0.0, 1.0], &ts).unwrap();
            assert_eq!(ys.len(), ts.len());
            for (t, y) in ts.iter().zip(&ys) {
                assert!((y[0] - (-t).exp()).abs() < 1e-8, "{name} at {t}: {}", y[0] - (-t).exp());
                assert!((y[0] + y[1] - 1.0).abs() < 1e-14, "{name} invariant at {t}");
                assert!(
                    (y[2] - (-2.0 * t).exp()).abs() < 1e-8,
                    "{name} at {t}: {}",
                    y[2] - (-2.0 * t).exp()
                );
            }
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let ts = [0.0, 2.0];
        let err = |dt| {
            let control = StepControl {
                fixed_dt: Some(dt),
                ..StepControl::default()
            };
            let y = Rk4.solve(&decay, &control, [1.0, 0.0, 0.0], &ts).unwrap();
            (y[1][0] - (-2.0f64).exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn unreachable_tolerance_is_reported() {
        let blowup = |_t: f64, y: &RateState| [y[0] * y[0], 0.0, 0.0];
        let err = DormandPrince45
            .solve(&blowup, &StepControl::default(), [1.0, 0.0, 0.0], &[0.0, 2.0])
            .unwrap_err();
        match err {
            DynamicsError::StepFailure { t_start, .. } => assert!(t_start < 1.0 + 1e-6 && t_start > 0.9),
            other => panic!("unexpected {other:?}"),
        }
    }
}
