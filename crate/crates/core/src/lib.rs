// Copyright 2026 Backflow Contributors
// SPDX-License-Identifier: Apache-2.0

//! Quantum-trajectory simulation of open free-fermion lattices with
//! correlation-matrix measures of non-Markovianity.
//!
//! The crate evolves pure Gaussian trajectories (Slater determinants) under
//! hopping Hamiltonians plus dephasing quantum jumps, and computes
//! information-backflow measures directly from two-point correlation
//! matrices:
//!
//! * `N_BLP,2` — positive variation of the ensemble Hilbert-Schmidt distance
//!   `d_2` between two evolutions started from orthogonal states;
//! * `N_LFS,2` — positive variation of the purity-based Renyi-2 mutual
//!   information `I_2` between the system and an idle ancilla.
//!
//! Everything reduces to determinant identities on `L x L` correlation
//! matrices, so the cost scales polynomially in system size, while a dense
//! Fock-space oracle ([`oracle`]) provides the exact reference (and the
//! exponential baseline) at small `L`. The [`bench`] harness measures both
//! pipelines and fits the scaling exponents; [`run`] wires everything into
//! the `backflow` CLI.

pub mod alloccount;
pub mod bench;
pub mod config;
pub mod error;
pub mod gaussian;
pub mod lattice;
pub mod linalg;
pub mod measures;
pub mod oracle;
pub mod output;
pub mod run;
pub mod samples;
pub mod trajectory;

pub use error::{Error, Result};
