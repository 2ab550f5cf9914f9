//! Deterministic solver for the coupled kinetics of rod-like polymers and free
//! monomers in a prescribed incompressible flow.
//!
//! The polymer population is described by a density `psi(r, eta, y, t)` over
//! length `r`, orientation `eta` on the unit sphere and position `y`; the free
//! monomer concentration `phi(y, t)` lives on the spatial grid alone. Polymers
//! lengthen at rate `tau0 * phi`, rotate under diffusion and the flow gradient,
//! and split at rate `g * r` with a uniform redistribution of fragment lengths.
//!
//! Time stepping is a first-order semi-discretization: spatial transport is
//! handled by backward characteristics of the flow, then one coercive implicit
//! solve per unknown advances the step. The bounds that make the scheme
//! well-posed (step-size limits, exponential envelopes, maximum principles,
//! energy budgets) are tracked at runtime by [`ledger::StabilityLedger`] and
//! the diagnostics pass.

pub mod config;
pub mod diagnostics;
pub mod flow;
pub mod fragmentation;
pub mod greer;
pub mod ledger;
pub mod length;
pub mod linalg;
pub mod monomer;
pub mod params;
pub mod polymer;
pub mod simulation;
pub mod snapshot;
pub mod solver;
pub mod space;
pub mod sphere;
