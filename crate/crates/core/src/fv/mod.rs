//! Finite-volume mesh, fields, inner products and discrete operators shared
//! by the full-order solver and every projection step.

pub mod assemble;
pub mod bc;
pub mod field;
pub mod mesh;
pub mod ops;

pub use bc::{BcKind, BoundaryConditions};
pub use field::Field;
pub use mesh::{Direction, Mesh, Neighbor, Shape, TeeSpec};
pub use ops::{
    convective_term, divergence, gradient, inner_product, laplacian, norm, Scheme,
};
