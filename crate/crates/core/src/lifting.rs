//! Control functions that carry parametrized Dirichlet data, so that the
//! remaining snapshot content has homogeneous boundary values.
//!
//! A lift is a cell field together with its own boundary data: the unit
//! value (times a direction for vectors) on its patch and zero on every
//! other Dirichlet patch. Snapshots are homogenized as `w − Σ u_D ζ`, and
//! the same affine combination is applied to the boundary data.

use crate::error::{Result, RomError};
use crate::fv::assemble::laplacian_matrix;
use crate::fv::{laplacian, BcKind, BoundaryConditions, Field, Mesh};
use crate::linalg::BandedLu;
use crate::pod::SnapshotSet;

#[derive(Clone, Debug)]
pub struct LiftingFunction {
    pub patch: String,
    pub patch_id: usize,
    /// Boundary value on `patch`; `[1]` for scalars, a unit direction for
    /// velocity.
    pub direction: Vec<f64>,
    pub field: Field,
    pub bc: BoundaryConditions,
}

/// Boundary data of a lift: `direction` on the target patch, zero on the
/// other Dirichlet patches of `base`, non-Dirichlet kinds unchanged.
fn lift_bc(mesh: &Mesh, base: &BoundaryConditions, patch: &str, direction: &[f64]) -> Result<(usize, BoundaryConditions)> {
    let id = mesh
        .patch_id(patch)
        .ok_or_else(|| RomError::config(format!("unknown patch `{patch}`")))?;
    if !base.is_dirichlet(id) {
        return Err(RomError::config(format!("patch `{patch}` is not a Dirichlet patch")));
    }
    if direction.len() != base.components() {
        return Err(RomError::dim("lift direction has the wrong component count"));
    }
    let bc = base.homogeneous().with_value(mesh, patch, direction)?;
    Ok((id, bc))
}

/// Harmonic control function: Δζ = 0 with ζ = 1 on `patch`, 0 on the other
/// Dirichlet patches of `base`, zero normal gradient elsewhere. For vector
/// fields the scalar solution is multiplied by `direction`.
pub fn compute_control_function(
    mesh: &Mesh,
    base: &BoundaryConditions,
    patch: &str,
    direction: &[f64],
) -> Result<LiftingFunction> {
    let (id, bc) = lift_bc(mesh, base, patch, direction)?;
    let mut scalar = BoundaryConditions::zero_gradient(mesh, 1);
    for p in 0..mesh.patches.len() {
        if base.is_dirichlet(p) {
            scalar.set_kind(p, BcKind::Dirichlet(vec![if p == id { 1.0 } else { 0.0 }]))?;
        }
    }
    let a = laplacian_matrix(mesh, &scalar);
    let offset = laplacian(mesh, &Field::zeros(mesh, 1), &scalar)?;
    // −Δ is an M-matrix here, so the unpivoted banded factorization is safe
    let lu = BandedLu::factor(&a.add(-1.0, &a, 0.0))
        .map_err(|_| RomError::config(format!("lift for `{patch}` is singular")))?;
    let zeta = lu.solve(offset.values());
    let values = zeta
        .iter()
        .flat_map(|z| direction.iter().map(move |d| d * z))
        .collect();
    Ok(LiftingFunction {
        patch: patch.to_string(),
        patch_id: id,
        direction: direction.to_vec(),
        field: Field::from_values(mesh, direction.len(), values)?,
        bc,
    })
}

/// Alternative control function: the snapshot mean divided by the mean
/// scaling coefficient. Only well defined when a single patch is
/// parametrized, since the mean cannot separate several patches.
pub fn snapshot_average_lift(
    mesh: &Mesh,
    base: &BoundaryConditions,
    patch: &str,
    direction: &[f64],
    snapshots: &SnapshotSet,
    coefficients: &[f64],
) -> Result<LiftingFunction> {
    let (id, bc) = lift_bc(mesh, base, patch, direction)?;
    let parametrized = (0..mesh.patches.len())
        .filter(|&p| base.dirichlet_value(p).is_some_and(|v| v.iter().any(|x| *x != 0.0)))
        .count();
    if parametrized > 1 {
        return Err(RomError::config(
            "snapshot-average lifting supports a single parametrized patch",
        ));
    }
    if coefficients.len() != snapshots.n_snapshots() {
        return Err(RomError::dim("one scaling coefficient per snapshot is required"));
    }
    let mean_coeff = coefficients.iter().sum::<f64>() / coefficients.len() as f64;
    if mean_coeff == 0.0 {
        return Err(RomError::data("scaling coefficients average to zero"));
    }
    let mean = snapshots.data.column_mean() / mean_coeff;
    Ok(LiftingFunction {
        patch: patch.to_string(),
        patch_id: id,
        direction: direction.to_vec(),
        field: Field::from_values(mesh, direction.len(), mean.iter().copied().collect())?,
        bc,
    })
}

fn check_coefficients(lifts: &[LiftingFunction], u_d: &[f64]) -> Result<()> {
    if lifts.len() != u_d.len() {
        return Err(RomError::dim(format!(
            "{} scaling coefficients for {} lifts",
            u_d.len(),
            lifts.len()
        )));
    }
    Ok(())
}

/// Σ u_D ζ as a cell field.
pub fn lift_combination(mesh: &Mesh, lifts: &[LiftingFunction], u_d: &[f64]) -> Result<Field> {
    check_coefficients(lifts, u_d)?;
    let comps = lifts.first().map_or(1, |l| l.field.components());
    let mut out = Field::zeros(mesh, comps);
    for (l, &c) in lifts.iter().zip(u_d) {
        out.axpy(c, &l.field)?;
    }
    Ok(out)
}

/// `coefficients[j]` holds the per-lift scaling of snapshot column `j`.
pub fn homogenize(set: &SnapshotSet, lifts: &[LiftingFunction], coefficients: &[Vec<f64>]) -> Result<SnapshotSet> {
    if coefficients.len() != set.n_snapshots() {
        return Err(RomError::dim(format!(
            "{} coefficient rows for {} snapshots",
            coefficients.len(),
            set.n_snapshots()
        )));
    }
    let mut data = set.data.clone();
    for (j, u_d) in coefficients.iter().enumerate() {
        check_coefficients(lifts, u_d)?;
        for (l, &c) in lifts.iter().zip(u_d) {
            if l.field.values().len() != set.n_dofs() {
                return Err(RomError::dim("lift and snapshots have different sizes"));
            }
            for (x, z) in data.column_mut(j).iter_mut().zip(l.field.values()) {
                *x -= c * z;
            }
        }
    }
    Ok(set.with_data(data))
}

/// Adds Σ u_D ζ back to a homogeneous field.
pub fn reapply(field: &Field, lifts: &[LiftingFunction], u_d: &[f64]) -> Result<Field> {
    check_coefficients(lifts, u_d)?;
    let mut out = field.clone();
    for (l, &c) in lifts.iter().zip(u_d) {
        out.axpy(c, &l.field)?;
    }
    Ok(out)
}

/// Boundary data of Σ u_D ζ: the lift patches carry their scaled
/// directions, everything else the homogeneous version of `base`.
pub fn lifted_bc(mesh: &Mesh, base: &BoundaryConditions, lifts: &[LiftingFunction], u_d: &[f64]) -> Result<BoundaryConditions> {
    check_coefficients(lifts, u_d)?;
    let mut bc = base.homogeneous();
    for p in 0..mesh.patches.len() {
        if !base.is_dirichlet(p) {
            continue;
        }
        let mut v = vec![0.0; base.components()];
        for (l, &c) in lifts.iter().zip(u_d) {
            for (k, x) in v.iter_mut().enumerate() {
                *x += c * l.bc.dirichlet_value(p).map_or(0.0, |d| d[k]);
            }
        }
        bc.set_kind(p, BcKind::Dirichlet(v))?;
    }
    Ok(bc)
}

/// Largest Dirichlet value left on any Dirichlet patch after subtracting
/// Σ u_D ζ from a field whose boundary data is `snapshot_bc`.
pub fn boundary_residual(mesh: &Mesh, snapshot_bc: &BoundaryConditions, lifts: &[LiftingFunction], u_d: &[f64]) -> Result<f64> {
    let lifted = lifted_bc(mesh, snapshot_bc, lifts, u_d)?;
    let mut worst = 0.0f64;
    for p in 0..mesh.patches.len() {
        if let (Some(a), Some(b)) = (snapshot_bc.dirichlet_value(p), lifted.dirichlet_value(p)) {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    Ok(worst)
}
