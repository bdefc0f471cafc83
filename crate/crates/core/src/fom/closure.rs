//! Algebraic eddy-viscosity closure.

use crate::error::{Result, RomError};
use crate::fv::ops::strain_rate_magnitude;
use crate::fv::{BoundaryConditions, Field, Mesh};

/// ν_t = (C_s h)² |S| with |S| = sqrt(2 S:S) and h = sqrt(dx dy).
pub fn eddy_viscosity_model(mesh: &Mesh, u: &Field, bc: &BoundaryConditions, c_s: f64) -> Result<Field> {
    if !(c_s >= 0.0) {
        return Err(RomError::config(format!("Smagorinsky constant {c_s} must be nonnegative")));
    }
    let mut s = strain_rate_magnitude(mesh, u, bc)?;
    let scale = (c_s * mesh.h()).powi(2);
    s.scale(scale);
    Ok(s)
}

/// Pointwise ν_t / Pr_t.
pub fn turbulent_diffusivity(nut: &Field, pr_t: f64) -> Result<Field> {
    if !(pr_t > 0.0) {
        return Err(RomError::config(format!("turbulent Prandtl number {pr_t} must be positive")));
    }
    if nut.components() != 1 {
        return Err(RomError::dim("eddy viscosity must be a scalar field"));
    }
    Ok(nut.scaled(1.0 / pr_t))
}
