//! Exact finite-rank snapshot sets for testing the reduction machinery.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Result, RomError};
use crate::fv::{Field, Mesh};
use crate::pod::{dof_weights, orthonormalize, FieldKind, SnapshotSet};

/// Snapshots w(μ, t) = Σ_{i<mode_count} a_i(μ, t) φ_i with smooth
/// orthonormal shapes φ_i. With `time_dependent = false` the coefficients
/// depend on μ only.
#[derive(Clone, Debug)]
pub struct Manufactured {
    pub set: SnapshotSet,
    pub shapes: Vec<Field>,
}

pub fn coefficient(i: usize, mu: &[f64], t: f64, time_dependent: bool) -> f64 {
    let base = 1.0 + mu.first().copied().unwrap_or(0.0);
    let tilt = 1.0 + 0.3 * mu.get(1).copied().unwrap_or(0.0);
    let amp = base.powi(i as i32) * tilt / (1.0 + i as f64);
    if time_dependent {
        amp * ((i as f64 + 1.0) * t + 0.4 * i as f64).cos()
    } else {
        amp
    }
}

fn raw_shape(i: usize, x: f64, y: f64, lx: f64, ly: f64, comp: usize) -> f64 {
    let kx = (i % 4 + 1) as f64;
    let ky = (i / 4 + comp + 1) as f64;
    (kx * PI * x / lx).sin() * (ky * PI * y / ly).cos() + 0.1 * comp as f64 * x
}

pub fn manufactured_snapshots(
    mesh: &Mesh,
    kind: FieldKind,
    params: &[Vec<f64>],
    times: &[f64],
    mode_count: usize,
    time_dependent: bool,
) -> Result<Manufactured> {
    let n_s = if time_dependent { params.len() * times.len() } else { params.len() };
    if mode_count == 0 || mode_count > n_s.min(mesh.n_cells()) {
        return Err(RomError::config(format!(
            "mode count {mode_count} exceeds the available grid sizes"
        )));
    }
    let comps = kind.components();
    let (lx, ly) = (mesh.nx as f64 * mesh.dx, mesh.ny as f64 * mesh.dy);
    let weights = dof_weights(mesh, comps);
    let mut shapes = DMatrix::from_fn(mesh.n_cells() * comps, mode_count, |r, i| {
        let [x, y] = mesh.center(r / comps);
        raw_shape(i, x, y, lx, ly, r % comps)
    });
    orthonormalize(&mut shapes, &weights)?;

    let mut fields = Vec::with_capacity(params.len() * times.len());
    for mu in params {
        for &t in times {
            let coeffs: Vec<f64> = (0..mode_count)
                .map(|i| coefficient(i, mu, t, time_dependent))
                .collect();
            let col = &shapes * nalgebra::DVector::from_vec(coeffs);
            fields.push(Field::from_values(mesh, comps, col.iter().copied().collect())?);
        }
    }
    let shape_fields = (0..mode_count)
        .map(|i| Field::from_values(mesh, comps, shapes.column(i).iter().copied().collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Manufactured {
        set: SnapshotSet::new(kind, mesh, &fields, params.to_vec(), times.to_vec())?,
        shapes: shape_fields,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pod::{assemble_correlation, eigendecompose, principal_angles, standard_pod, Truncation};

    fn grid() -> (Vec<Vec<f64>>, Vec<f64>) {
        let params = (0..4).map(|k| vec![0.535 + 0.01 * k as f64, 0.715 + 0.01 * k as f64]).collect();
        let times = (1..=6).map(|j| 0.1 * j as f64).collect();
        (params, times)
    }

    #[test]
    fn rank_one_has_single_nonzero_eigenvalue() {
        let mesh = Mesh::rectangle(12, 8, 2.0, 1.0).unwrap();
        let (p, t) = grid();
        let m = manufactured_snapshots(&mesh, FieldKind::Velocity, &p, &t, 1, true).unwrap();
        let (l, _) = eigendecompose(&assemble_correlation(&m.set).unwrap()).unwrap();
        assert!(l[0] > 0.0);
        assert!(l[1..].iter().all(|x| *x < 1e-12 * l[0]));
    }

    #[test]
    fn pod_recovers_rank_three_shapes() {
        let mesh = Mesh::rectangle(12, 8, 2.0, 1.0).unwrap();
        let (p, t) = grid();
        let m = manufactured_snapshots(&mesh, FieldKind::Temperature, &p, &t, 3, true).unwrap();
        let basis = standard_pod(&m.set, Truncation::Energy(1.0)).unwrap();
        assert_eq!(basis.rank(), 3);
        let shapes = SnapshotSet::from_fields(FieldKind::Temperature, &mesh, &m.shapes).unwrap();
        let angles = principal_angles(&basis.modes, &shapes.data, &basis.weights).unwrap();
        assert!(angles.iter().all(|a| *a < 1e-8), "{angles:?}");
    }

    #[test]
    fn time_independent_coefficients_repeat_over_time() {
        let mesh = Mesh::rectangle(6, 6, 1.0, 1.0).unwrap();
        let (p, t) = grid();
        let m = manufactured_snapshots(&mesh, FieldKind::Pressure, &p, &t, 2, false).unwrap();
        for k in 0..p.len() {
            let first = m.set.data.column(m.set.column_index(k, 0)).into_owned();
            for j in 1..t.len() {
                assert_eq!(m.set.data.column(m.set.column_index(k, j)), first);
            }
        }
        assert!(manufactured_snapshots(&mesh, FieldKind::Pressure, &p, &t, 5, false).is_err());
    }
}
