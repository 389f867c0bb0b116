//! Pulse envelope family. Each envelope is a unit-peak profile expressed in
//! the scaled coordinate `x = (t - center) / duration`.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use crate::registry::{Named, Registry};

pub trait Envelope: Named + Send + Sync {
    /// Profile value at scaled time `x`; within `[0, 1]` and equal to 1 at `x = 0`.
    fn profile(&self, x: f64) -> f64;

    /// `∫ f(t)² dt` for a pulse of unit duration.
    fn square_integral(&self) -> f64;

    /// Scaled half-width beyond which the profile is at most `e^-18` of peak
    /// (or identically zero).
    fn tail_half_width(&self) -> f64;
}

/// `exp(-x²/2)`; the duration is the standard deviation of the field profile.
pub struct Gaussian;

/// `cos²(πx)` on `|x| ≤ 1/2`; the duration is the full support width.
pub struct SquaredCosine;

/// Flat top on `|x| ≤ 1/2`; the duration is the full width.
pub struct Square;

impl Named for Gaussian {
    fn name(&self) -> &'static str {
        "gaussian"
    }
}

impl Envelope for Gaussian {
    fn profile(&self, x: f64) -> f64 {
        (-0.5 * x * x).exp()
    }

    fn square_integral(&self) -> f64 {
        PI.sqrt()
    }

    fn tail_half_width(&self) -> f64 {
        6.0
    }
}

impl Named for SquaredCosine {
    fn name(&self) -> &'static str {
        "squared_cosine"
    }
}

impl Envelope for SquaredCosine {
    fn profile(&self, x: f64) -> f64 {
        if x.abs() <= 0.5 {
            let c = (PI * x).cos();
            c * c
        } else {
            0.0
        }
    }

    // ∫ cos⁴(πx) dx over |x| ≤ 1/2
    fn square_integral(&self) -> f64 {
        3.0 / 8.0
    }

    fn tail_half_width(&self) -> f64 {
        0.5
    }
}

impl Named for Square {
    fn name(&self) -> &'static str {
        "square"
    }
}

impl Envelope for Square {
    fn profile(&self, x: f64) -> f64 {
        if x.abs() <= 0.5 {
            1.0
        } else {
            0.0
        }
    }

    fn square_integral(&self) -> f64 {
        1.0
    }

    fn tail_half_width(&self) -> f64 {
        0.5
    }
}

pub fn envelopes() -> &'static Registry<dyn Envelope> {
    static REGISTRY: OnceLock<Registry<dyn Envelope>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let reg: Registry<dyn Envelope> = Registry::new("pulse shape");
        reg.register(Arc::new(Gaussian));
        reg.register(Arc::new(SquaredCosine));
        reg.register(Arc::new(Square));
        reg
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = if n.is_multiple_of(2) { n } else { n + 1 };
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn square_integrals_match_quadrature() {
        for name in envelopes().names() {
            let env = envelopes().get(name).unwrap();
            // compact envelopes are integrated over their exact support
            let w = env.tail_half_width();
            let q = simpson(|x| env.profile(x).powi(2), -w, w, 200_000);
            assert!(
                (q - env.square_integral()).abs() < 1e-6,
                "{name}: quadrature {q} vs {}",
                env.square_integral()
            );
        }
    }

    #[test]
    fn profiles_peak_at_center_and_stay_in_unit_interval() {
        for name in envelopes().names() {
            let env = envelopes().get(name).unwrap();
            assert_eq!(env.profile(0.0), 1.0);
            for i in -400..=400 {
                let v = env.profile(i as f64 * 0.02);
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn tails_are_negligible() {
        for name in envelopes().names() {
            let env = envelopes().get(name).unwrap();
            let edge = env.tail_half_width() * 1.0001;
            assert!(env.profile(edge) < 1.6e-8);
            assert!(env.profile(-edge) < 1.6e-8);
        }
    }
}
