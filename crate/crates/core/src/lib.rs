//! Multimesh finite element solver for the 2D Stokes problem.
//!
//! An arbitrary number of triangle meshes are stacked on top of a
//! background mesh of the unit square. Each mesh carries its own Taylor–Hood
//! space; the meshes are coupled weakly along the visible part of each
//! mesh boundary by Nitsche's method, the overlapped regions carry a
//! gradient-jump (or value-jump) stabilization and cut cells carry a
//! least-squares residual term.
//!
//! The pipeline is
//!
//! 1. [`mesh`]: structured premeshes and random placements,
//! 2. [`multimesh`]: cell classification and the quadrature databases for
//!    cut cells, interfaces and overlaps (built on [`geometry`]),
//! 3. [`fem`]: reference elements and the direct-sum function space,
//! 4. [`assembly`]: the saddle-point system,
//! 5. [`solver`]: sparse direct solve,
//! 6. [`study`]: manufactured-solution convergence studies.

pub mod assembly;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod mesh;
pub mod multimesh;
pub mod quadrature;
pub mod solver;
pub mod study;

pub use error::{Error, Result};

/// 2D point type used throughout the crate.
pub type Point = nalgebra::Point2<f64>;
/// 2D vector type used throughout the crate.
pub type Vector = nalgebra::Vector2<f64>;
