//! Heralded single-photon source entangled across multiple time bins.
//!
//! A weak write pulse stores one collective spin excitation in a cold atomic
//! ensemble (heralded by a Stokes photon); a train of read pulses converts it
//! into one anti-Stokes photon spread over several time bins. The crate
//! integrates the Raman rate equations for the photon waveforms, designs read
//! trains that hit target bin weights, and simulates the unbalanced
//! interferometer used to check phase coherence across the bins.

pub mod commands;
pub mod config;
pub mod designer;
pub mod dynamics;
pub mod franson;
pub mod io;
pub mod pulse_model;
pub mod quadrature;
pub mod registry;
