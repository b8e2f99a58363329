//! Finite element machinery shared by the field models.

pub mod assembly;
pub mod dofmap;
pub mod mesh;
pub mod newton;
pub mod sparse;
pub mod vtk;

pub use assembly::{Assembler, Evaluation, LocalEval};
pub use dofmap::{DofMap, Ramp};
pub use mesh::{gauss_legendre, quad4_eval, quad4_shape, quad_rule, ElementKind, Mesh, QuadPoint, ShapeEval};
pub use newton::{advance_with_halving, is_recoverable, minimize_bounded, solve_newton, LineSearch, NewtonControl, NewtonReport};
pub use sparse::{factor_solve, LdltFactor, SymSparse};
pub use vtk::{write_vtk, VtkField};
