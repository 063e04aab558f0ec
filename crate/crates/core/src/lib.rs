//! Simulation and verification toolkit for a chemotaxis-driven compressible
//! Navier–Stokes system.
//!
//! The crate evolves density, velocity and chemoattractant concentration on a
//! uniform box grid and measures how closely the discrete solution follows
//! the continuous energy law, the relative energy inequality and weak–strong
//! convergence.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod energetics;
pub mod error;
pub mod fields;
pub mod io;
pub mod mms;
pub mod operators;
pub mod relenergy;
pub mod thermo;

pub use dynamics::{rhs, run, run_with_observer, step, Forcing, Rates, RunFailure, SchemeSettings};
pub use error::{Error, Result};
pub use fields::{integrate_cellwise, BcKind, Grid, PhysParams, RunDiagnostics, ScalarField, State, Trajectory, VectorField};
pub use operators::StencilOps;
pub use thermo::{sugiyama_exponents, PressureLaw, SugiyamaExponents};
