//! Ramified domains with prefractal interfaces.
//!
//! Geometry of the two-map similitude family, quadrature for the self-similar
//! measure, slit finite-element meshes, the transmission problems on truncated
//! domains and the convergence studies built on top of them.

pub mod cli;
pub mod experiments;
pub mod fem;
pub mod geometry;
pub mod measure;
pub mod meshing;
pub mod point;

pub use point::Point;
