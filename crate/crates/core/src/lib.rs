//! Blast-wave simulation core: compressible, viscous flow on a regular voxel
//! grid with shock-capturing donor-cell convection, two-way fluid/rigid-body
//! coupling, and post-process secondary effects (fireball tracers, dust,
//! volumetric refraction).
//!
//! The crate is organized around the stages of a simulation step:
//!
//! - [`constants`]: physical constants and the thermodynamic state relations.
//! - [`fluid`]: the double-buffered voxel grid and its per-cell state.
//! - [`boundary`]: free/hard boundary semantics for stencil reads and the
//!   active-set pruning optimization.
//! - [`integrate`]: the explicit two-phase integrator (non-convective forces,
//!   then donor-acceptor convection).
//! - [`geometry`]: triangle meshes, fractional-occupancy voxelization, and
//!   explosive charge initialization.
//! - [`coupling`]: pressure loading of rigid bodies and fluid displacement by
//!   moving solids (the piston model).
//! - [`effects`]: tracer particles, dust metaparticles, blackbody coloring,
//!   refractive ray marching, and particle splatting. Effects read the grid
//!   but never mutate it.

pub mod boundary;
pub mod constants;


pub mod fluid;

pub mod integrate;

pub mod coupling;
pub mod geometry;
pub use constants::PhysicalConstants;
pub use fluid::{CellFlag, FluidGrid, GridDims, VoxelState};

/// 3-vector of f64, used for velocities, forces, and positions throughout.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3-point of f64 (mesh vertices, particle positions).
pub type Point3 = nalgebra::Point3<f64>;

/// One standard atmosphere in pascals.
pub const ATM: f64 = 101_325.0;
