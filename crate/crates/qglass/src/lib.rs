//! Desk-scale toolkit for the quantum-glass phenomenology of a disordered
//! 2D XY spin-1/2 model.
//!
//! The Hamiltonian is
//!
//! ```text
//! H = -J sum_<i,j> (S+_i S-_j + S-_i S+_j) + sum_i h_i S^z_i
//! ```
//!
//! with nearest-neighbor bonds on a finite open rectangle and random fields
//! h_i drawn from a zero-mean box distribution of width W (w = W/J, J = 1).
//! Everything that can be computed exactly at n <= ~24 spins is: sector
//! enumeration, sparse Hamiltonians, Krylov time evolution, return
//! probability, Edwards-Anderson freezing, Laplacian-mode diffusion, 1/f
//! spin noise.  Cayley-tree analytics (relaxation/dephasing thresholds,
//! population dynamics) work at any branching number.
//!
//! Modules map onto the pipeline:
//! - [`lattice`]: geometry, disorder realizations, graph-Laplacian modes
//! - [`hilbert`]: fixed-magnetization basis and sparse Hamiltonian
//! - [`evolve`]: Krylov propagation and measurement (R(t), sigma^z, noise)
//! - [`analysis`]: filtering, fit-model zoo, Q_EA / eta / diffusion fits
//! - [`pairapprox`]: independent-pair closed forms for R(t)
//! - [`cayley`]: recursion pools and the four threshold solvers
//! - [`campaign`]: config-driven sweeps, persistence, presets, tables

pub mod analysis;
pub mod campaign;
pub mod cayley;
pub mod evolve;
pub mod hilbert;
pub mod lattice;
pub mod numeric;
pub mod pairapprox;
pub mod rngkey;
