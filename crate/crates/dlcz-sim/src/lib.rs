//! Simulator and analysis toolkit for a cavity-enhanced atomic-ensemble
//! quantum memory node.
//!
//! The library models a DLCZ-style node in which a heralded collective spin
//! excitation is read out through a low-finesse ring cavity as a polarization
//! qubit, and covers the quantities such a node is characterized by:
//!
//! - [`qstate`] — two-qubit density matrices, the entangled photon-pair
//!   state, a phenomenological noise channel, correlations and outcome
//!   probabilities;
//! - [`memory`] — cavity-enhanced retrieval-efficiency models (free-space,
//!   single-mode, double-mode) and the double-exponential efficiency decay
//!   with 1/e-lifetime extraction;
//! - [`fitter`] — weighted nonlinear least-squares fitting of the decay model
//!   with parameter covariance;
//! - [`entangle`] — visibilities, noise-model inversion, fidelity estimate
//!   and exact fidelity, and the plateau model of the stored state;
//! - [`bell`] — CHSH values, optimal settings, a brute-force cross-check, and
//!   Poisson error propagation for counted coincidences;
//! - [`sequencer`] — a seeded Monte Carlo simulation of the full experiment
//!   cycle (loading, write attempts, heralding, storage, read-out, detection)
//!   with rate accounting and coincidence tallies;
//! - [`swapnet`] — composition of two simulated nodes into a remote entangled
//!   pair through a photonic Bell-state measurement;
//! - [`cli`] — configuration ingestion and the report/CSV export used by the
//!   `dlcz-sim` binary.
//!
//! The `examples/` directory contains one runnable walk-through per
//! capability; `cargo run --example bell_test` is a good starting point.

pub mod bell;
pub mod cli;
pub mod entangle;
pub mod fitter;
pub mod memory;
pub mod qstate;
pub mod sequencer;
pub mod swapnet;
