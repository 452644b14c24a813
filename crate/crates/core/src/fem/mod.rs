//! Taylor-Hood finite element discretization of the cavity problem.

pub mod assembly;
pub mod bc;
pub mod element;
pub mod norms;
pub mod space;
pub mod system;

pub use assembly::{assemble_convection, assemble_linear_blocks, load_vector, ConvectionMode, LinearBlocks};
pub use bc::{apply_constraints, apply_dirichlet, normalize_pressure, ConstrainedSystem, Constraints};
pub use norms::{discrete_dual_norm, h1_seminorm, l2_norm, nonlinear_residual, DualNorm};
pub use space::{MixedSpace, State};
pub use system::SaddleSystem;
