//! Steady incompressible Navier-Stokes on the unit square with Picard and
//! Newton iterations, continuous data assimilation nudging and Anderson
//! acceleration.

pub mod anderson;
pub mod bench;
pub mod cda;
pub mod error;
pub mod fem;
pub mod linsolve;
pub mod mesh;
pub mod metrics;
pub mod plot;
pub mod solvers;
pub mod sparse;

pub use error::{Error, Result};
pub use mesh::{build_uniform_triangulation, observation_nodes, BoundaryTag, Mesh, ObservationNodeSet};
