//! Desk-scale numerical simulator and benchmark harness for transforming the
//! eigenvalues of an unknown Hamiltonian given only black-box access to its
//! dynamics `e^{±iHτ}`.
//!
//! Three routes to the target dynamics `e^{-if(H0)t}` are implemented and
//! cross-checked against an exact dense-matrix oracle on 1–4 qubits:
//!
//! * [`uncompiled`] — controlization (random controlled-Pauli sandwiches)
//!   concatenated with Fourier-series simulation, both driven by the
//!   randomized product-formula engine in [`qdrift`];
//! * [`compiled`] — the correlated-randomness version, where the inner
//!   controlization layer runs a fixed `10k²` iterations and the residual
//!   amplitude/phase error is compensated by correction pairs `(Â_k, θ̂_k)`
//!   computed exactly or estimated through robust phase estimation;
//! * [`qsvt`] — a block-encoding baseline with an idealized polynomial
//!   application standing in for the QSVT phase sequence, plus a query-cost
//!   model for runtime comparison.
//!
//! [`metrics`] provides the 1-norm error estimators, Choi-state channel
//! distances, bootstrap confidence intervals, and log-log scaling fits used
//! by the benchmark harness.

pub mod compiled;
pub mod controlization;
pub mod error;
pub mod fourier;
pub mod metrics;
pub mod qdrift;
pub mod qsvt;
pub mod quantum;
pub mod rng;
pub mod uncompiled;

pub use error::{Error, Result};
