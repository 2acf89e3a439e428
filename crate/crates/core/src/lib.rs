//! Finite-volume simulator for a two-species chemotaxis model coupled to an
//! incompressible fluid, with Lotka-Volterra competition between the species
//! and an optional Yosida regularization of the advecting velocity.
//!
//! Layout: [`grid`] and [`ops`] hold the staggered geometry and the discrete
//! operators, [`model`] the constants and kinetics, [`flow`] the velocity
//! step, [`transport`] the scalar step, [`diagnostics`] the energies and
//! bound monitors, and [`harness`] configuration, scenario execution and the
//! verification drivers.

pub mod diagnostics;
pub mod expr;
pub mod flow;
pub mod grid;
pub mod model;
pub mod ops;
pub mod solver;
pub mod transport;
pub mod harness;
