//! Desk-scale simulation of pure-state thermalization in a system–bath
//! random-matrix model.
//!
//! A small system with `n_s` evenly spaced levels is coupled to a bath whose
//! level density grows exponentially with energy, `rho_E(E) = A e^{E/T}`
//! (Boltzmann's constant is 1 throughout; entropies are in nats). The joint
//! zero-order basis `|s>|eps>` is truncated to an energy window around a
//! central energy `E0`, and the coupling fills the off-diagonal of the
//! Hamiltonian with independent Gaussians of scale `k`.
//!
//! The crate provides:
//!
//! * [`model`] — model specification, bath level placement, zero-order basis,
//!   and Hamiltonian assembly;
//! * [`spectral`] — dense symmetric eigendecomposition, exact time evolution
//!   through the eigenbasis, eigenstate envelopes, and an optional on-disk
//!   cache of decompositions;
//! * [`states`] — initial pure states: single zero-order basis states and
//!   random-phase states with a Lorentzian energy envelope;
//! * [`observables`] — Shannon entropy of the zero-order occupation
//!   distribution and its exact system/environment split, system free energy,
//!   heat, and excess entropy production;
//! * [`analytic`] — closed-form predictions: Lorentzian-state entropy,
//!   spreading widths, and the piecewise master expressions for equilibrium
//!   entropy and excess entropy production;
//! * [`stats`] — energy-binned profiles, damped Gauss–Newton Lorentzian fits,
//!   and fluctuation statistics of envelope-rescaled coefficients.
//!
//! All randomness flows through the named streams in [`rng`], so every result
//! is reproducible from a seed.

pub mod analytic;
pub mod error;
pub mod model;
pub mod observables;
pub mod rng;
pub mod spectral;
pub mod states;
pub mod stats;

pub use error::{Error, Result};
