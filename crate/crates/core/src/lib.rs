//! Thickness-graded gyroid lattice design for bone in-growth.
//!
//! The crate is organised bottom-up:
//!
//! - [`tpms`]: gyroid level function, distance field, projection, porosity,
//!   surface area and pore size of one unit cell.
//! - [`homogenize`]: periodic voxel homogenization of the lattice filled with
//!   bone, plus full-factorial sampling of the (thickness, bone density) space.
//! - [`surrogate`]: quadratic tensor-product spline surrogates with analytic
//!   derivatives fitted to the samples.
//! - [`mech`]: linear static hexahedral finite elements.
//! - [`growth`]: the mechanobiological growth laws and the transient simulation.
//! - [`design`]: control-grid thickness field and the volume fraction.
//! - [`sensitivity`]: direct differentiation of the transient simulation.
//! - [`optimize`]: problem configuration, the moving-asymptotes optimizer and
//!   result reporting.

pub mod design;
pub mod error;
pub mod growth;
pub mod homogenize;
pub mod material;
pub mod mech;
pub mod optimize;
pub mod sensitivity;
pub mod sparse;
pub mod surrogate;
pub mod tpms;
pub mod vtk;

pub use error::{Error, Result};

/// Cartesian point or vector in millimetres.
pub type Point3 = [f64; 3];
