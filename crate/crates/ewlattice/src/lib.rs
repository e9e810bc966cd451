//! Abrikosov-type vortex lattices in the Weinberg–Salam vacuum just above the
//! critical magnetic field.
//!
//! The crate builds lowest-Landau-level lattice states from theta series,
//! discretises the linearised Yang–Mills–Higgs operators on a flat torus,
//! evaluates the rescaled energy and its gradient, follows the bifurcating
//! lattice branch with a Galerkin/Newton solver and optimises the lattice
//! shape over the modular fundamental domain.

pub mod bifurcation;
pub mod config;
pub mod energy;
pub mod error;
pub mod fields;
pub mod green;
pub mod lattice;
pub mod lll;
pub mod params;
pub mod shapeopt;
pub mod spectrum;
pub mod verify;

pub use error::{Error, Result};
pub use fields::{Calculus, FieldState, GridField, Sector, C64};
pub use lattice::{make_grid, reduce_to_fundamental, Grid, LatticeShape};
pub use params::{ParamSpec, PhysParams};
