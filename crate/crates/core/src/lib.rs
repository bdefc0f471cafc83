//! # romkit
//!
//! Offline/online reduced-order modelling of parametric, weakly coupled
//! flow and heat transport:
//!
//! * [`fv`]: Cartesian finite-volume mesh, fields and discrete operators;
//! * [`fom`]: full-order projection solver with an algebraic eddy-viscosity
//!   closure, used to generate snapshots;
//! * [`pod`]: proper orthogonal decomposition (standard and nested);
//! * [`lifting`]: control functions that homogenise Dirichlet data;
//! * [`galerkin`]: reduced operators and supremizer enrichment;
//! * [`rbf`]: Gaussian RBF interpolation of eddy-viscosity coefficients;
//! * [`rom`]: online integration of the reduced system;
//! * [`eval`]: error metrics and reporting;
//! * [`pipeline`]: run configuration and the cached offline/online stages.

pub mod error;
pub mod eval;
pub mod fom;
pub mod fv;
pub mod galerkin;
pub mod io;
pub mod lifting;
pub mod linalg;
pub mod pipeline;
pub mod pod;
pub mod rbf;
pub mod rom;

pub use error::{Result, RomError};
