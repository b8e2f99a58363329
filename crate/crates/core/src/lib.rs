//! Incremental variational thermomechanics for gradient-extended dissipative solids.
//!
//! Every model is written as an incremental potential density whose
//! stationarity gives the coupled update for one time step. The crate holds
//! the constitutive engines (rheological device, Cahn-Hilliard diffusion,
//! gradient damage, gradient plasticity), the finite element machinery that
//! assembles and solves the resulting saddle-point systems, and the scenario
//! drivers used by the command line tool.

pub mod cahn_hilliard;
pub mod damage;
pub mod error;
pub mod fem;
pub mod numerics;
pub mod plasticity;
pub mod point0d;
pub mod shearband;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{SymTensor3, Tensor3};
