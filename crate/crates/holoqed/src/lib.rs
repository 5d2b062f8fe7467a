//! Simulation and variational-control toolkit for a transmon qubit coupled to
//! a superconducting cavity, used to sequentially prepare matrix-product-state
//! approximations of spin-chain ground states.
//!
//! The crate is organized around a small set of subsystems:
//!
//! - [`device`]: truncated qubit ⊗ cavity operators and Hamiltonians.
//! - [`pulse`]: piecewise-constant drive propagation and exact drive gradients.
//! - [`grape`]: pulse-level unitary synthesis by trace-fidelity ascent.
//! - [`snap`]: gate-based synthesis from displacement / rotation / number-phase
//!   layers, with a fixed per-layer time cost.
//! - [`qmps`]: site-tensor extraction, transfer-channel expectation values,
//!   and shot-based sequential sampling.
//! - [`noise`]: Lindblad dissipators and the discretized noisy site channel.
//! - [`vqe`]: variational ground-state search over drive waveforms, ideal and
//!   noisy, with batched restarts.
//! - [`classical`]: exact diagonalization, finite-chain DMRG, and the
//!   isometry-to-unitary embedding used to build synthesis targets.

// Force linkage of the BLAS/LAPACK provider.
extern crate blas_src;
extern crate openblas_src;

pub mod classical;
pub mod device;
pub mod error;
pub mod grape;
pub mod linalg;
pub mod noise;
pub mod optimizer;
pub mod pulse;
pub mod qmps;
pub mod snap;
pub mod vqe;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
