//! Geometry kernel and mesh pipeline for printable designs that live in the 3-sphere.
//!
//! Designs (regular 4-polytope skeletons, the Clifford torus, Möbius strips,
//! Klein bottles and torus-knot bands) are built in S³, thickened there, and
//! stereographically projected to R³ as watertight triangle meshes.

pub mod error;
pub mod meshkit;
pub mod polytope;
pub mod quat;
pub mod s3geom;
pub mod scene;
pub mod surfaces;
pub mod tubes;

pub use error::{Error, Result};
