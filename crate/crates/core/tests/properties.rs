//! Randomized invariants of the rate equations and the fringe model.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use proptest::prelude::*;

use timebin::dynamics::{bin_areas, integrate, GridSpec};
use timebin::franson::{
    averaged_counts, interferometer_counts, state_from_trace, theta_grid, ModeSet, PhaseNoiseModel, TimeBinState,
};
use timebin::pulse_model::{
    gain_alpha, gain_beta, read_peak_for_exposure, relaxation_rates, write_peak_for_gain_area, PhysicalParams,
    PulseShape, PulseTrain,
};

fn train(params: &PhysicalParams, gain: f64, exposures: &[f64], phases: &[f64]) -> PulseTrain {
    let tpl = PulseShape::gaussian(0.0, 10.0, 0.0);
    let write = tpl.clone().with_peak(write_peak_for_gain_area(params, &tpl, gain));
    let reads = exposures
        .iter()
        .zip(phases)
        .enumerate()
        .map(|(i, (&b, &phi))| {
            let r = PulseShape::gaussian(80.0 * (i + 1) as f64, 10.0, 0.0);
            r.clone()
                .with_peak(read_peak_for_exposure(params, &r, b))
                .with_phase(phi)
        })
        .collect();
    PulseTrain::new(write, reads).unwrap()
}

fn normalized(raw: &[(f64, f64)]) -> Vec<Complex64> {
    let c: Vec<Complex64> = raw.iter().map(|&(m, p)| Complex64::from_polar(m, p)).collect();
    let norm = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    c.iter().map(|z| z / norm).collect()
}

fn orthonormal_state(amps: Vec<Complex64>) -> TimeBinState {
    let centers = (0..amps.len()).map(|i| 80.0 * i as f64).collect();
    TimeBinState::new(amps, centers, ModeSet::Orthonormal).unwrap()
}

fn amplitudes() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.05f64..1.0, 0.0..TAU), 2..=6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rates_scale_with_intensity(s in 0.1f64..5.0, w in 0.1f64..3.0, r in 0.1f64..3.0, t in -30.0f64..110.0) {
        let params = PhysicalParams::default();
        let base = PulseTrain::new(
            PulseShape::gaussian(0.0, 10.0, w),
            vec![PulseShape::gaussian(80.0, 10.0, r)],
        ).unwrap();
        let mut scaled = base.clone();
        scaled.write.peak *= s;
        scaled.reads[0].peak *= s;
        let (rb, rs) = (relaxation_rates(&params, &base, t), relaxation_rates(&params, &scaled, t));
        for (a, b) in [
            (gain_alpha(&params, &base, t), gain_alpha(&params, &scaled, t)),
            (gain_beta(&params, &base, t), gain_beta(&params, &scaled, t)),
            (rb.write_pumping, rs.write_pumping),
            (rb.read_pumping, rs.read_pumping),
        ] {
            prop_assert!((b - s * s * a).abs() <= 1e-12 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn detector_counts_sum_to_one(
        raw in amplitudes(),
        theta in 0.0f64..TAU,
        noise in prop::collection::vec(-PI..PI, 5),
    ) {
        let state = orthonormal_state(normalized(&raw));
        let (n1, n2) = interferometer_counts(&state, theta, &noise[..raw.len() - 1]).unwrap();
        prop_assert!((n1 + n2 - 1.0).abs() < 1e-12);
        prop_assert!(n1 >= -1e-12 && n2 >= -1e-12);
    }

    /// The largest attainable visibility with J orthonormal bins is the top
    /// eigenvalue of the path-graph adjacency, cos(π/(J+1)).
    #[test]
    fn visibility_below_path_bound(raw in amplitudes()) {
        let j = raw.len();
        let state = orthonormal_state(normalized(&raw));
        let v = averaged_counts(&state, &theta_grid(721), &PhaseNoiseModel::none()).unwrap().visibility;
        prop_assert!(v <= (PI / (j as f64 + 1.0)).cos() + 1e-12, "J = {j}, V = {v}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Without relaxation every spin-wave excitation is accounted for by an
    /// emitted photon: N(t) = N(t0) + cum_S(t) − cum_AS(t).
    #[test]
    fn excitation_bookkeeping(
        gain in 0.1f64..1.2,
        exposures in prop::collection::vec(0.1f64..3.0, 1..=3),
        n0 in 0.0f64..2.0,
    ) {
        let params = PhysicalParams { gamma32: 0.0, gamma41: 0.0, gamma_c: 0.0, ..PhysicalParams::default() };
        let phases = vec![0.0; exposures.len()];
        let train = train(&params, gain, &exposures, &phases);
        let trace = integrate(&params, &train, &GridSpec::default().with_initial_excitation(n0)).unwrap();
        for i in 0..trace.len() {
            let balance = n0 + trace.cum_s[i] - trace.cum_as[i];
            prop_assert!((trace.n_sp[i] - balance).abs() <= 1e-6 * (1.0 + balance.abs()));
        }
    }

    #[test]
    fn state_from_trace_is_normalized(
        gain in 0.2f64..1.2,
        exposures in prop::collection::vec(0.1f64..3.0, 1..=4),
        gamma41 in 0.0f64..0.5,
        gamma_c in 0.0f64..0.01,
        seed_phase in 0.0f64..TAU,
    ) {
        let params = PhysicalParams { gamma41, gamma_c, ..PhysicalParams::default() };
        let phases: Vec<f64> = (0..exposures.len()).map(|i| (seed_phase * (i + 1) as f64) % TAU).collect();
        let train = train(&params, gain, &exposures, &phases);
        let trace = integrate(&params, &train, &GridSpec::default()).unwrap();
        let bins = bin_areas(&trace, &train).unwrap();
        let state = state_from_trace(&bins, &train, &trace, &phases).unwrap();
        let total: f64 = state.populations().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coherence_damage_lowers_retrieval(gamma_c in 1e-4f64..0.05) {
        let clean = PhysicalParams { gamma_c: 0.0, ..PhysicalParams::default() };
        let damaged = PhysicalParams { gamma_c, ..clean.clone() };
        let train = train(&clean, 0.7, &[1.3, 1.3], &[0.0, 0.0]);
        let a = integrate(&clean, &train, &GridSpec::default()).unwrap().antistokes_total();
        let b = integrate(&damaged, &train, &GridSpec::default()).unwrap().antistokes_total();
        prop_assert!(b < a);
    }
}

/// Three bins with amplitudes (1/2, 1/√2, 1/2) beat the (J−1)/J bound and
/// reach the path bound cos(π/4) exactly.
#[test]
fn unequal_amplitudes_exceed_equal_weight_bound() {
    let amps = [0.5, 0.5f64.sqrt(), 0.5].map(|m| Complex64::new(m, 0.0)).to_vec();
    let state = orthonormal_state(amps);
    let v = averaged_counts(&state, &theta_grid(721), &PhaseNoiseModel::none())
        .unwrap()
        .visibility;
    assert!(v > 2.0 / 3.0 + 0.04);
    assert!((v - (PI / 4.0).cos()).abs() < 1e-12, "V = {v}");
}

#[test]
fn equal_amplitudes_give_equal_weight_bound() {
    for j in 2..=6 {
        let state = TimeBinState::equal(j, 80.0, ModeSet::Orthonormal).unwrap();
        let v = averaged_counts(&state, &theta_grid(721), &PhaseNoiseModel::none())
            .unwrap()
            .visibility;
        let expected = (j as f64 - 1.0) / j as f64;
        assert!((v - expected).abs() < 1e-12, "J = {j}: V = {v}");
    }
}
