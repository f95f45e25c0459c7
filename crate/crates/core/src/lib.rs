//! Quasiparticle band structures from quantum-selected configuration
//! interaction (QSCI) combined with quantum subspace expansion (QSE).
//!
//! The pipeline runs entirely on classical hardware:
//!
//! 1. [`hamiltonian`] ingests a second-quantized periodic Hamiltonian for a
//!    single k-point.
//! 2. [`qubit`] maps it onto qubits with the Jordan–Wigner transformation and
//!    provides the determinant-level Pauli action used by every matrix
//!    element in the crate.
//! 3. [`statevector`] and [`vqe`] prepare a partially optimized ansatz state
//!    and sample computational-basis configurations from it.
//! 4. [`qsci`] diagonalizes the Hamiltonian in the space of the most frequent
//!    configurations; it also hosts the exact FCI solver.
//! 5. [`qse`] builds electron-removal/addition subspaces on the compact QSCI
//!    wave function and solves the generalized eigenvalue problem for the
//!    valence and conduction bands.
//! 6. [`diagnostics`] classifies samples by excitation level and measures
//!    distribution similarity.
//!
//! [`pipeline`] wires the stages together per k-point.

pub mod diagnostics;
pub mod error;
pub mod hamiltonian;
pub mod linalg;
pub mod optimize;
pub mod pipeline;
pub mod qse;
pub mod qsci;
pub mod qubit;
pub mod statevector;
pub mod vqe;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
