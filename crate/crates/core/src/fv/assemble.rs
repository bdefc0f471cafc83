//! Sparse matrices of the homogeneous (zero Dirichlet data) parts of the
//! operators in [`crate::fv::ops`]. The affine boundary contribution of an
//! operator is obtained by applying it to a zero field with the real data.

use crate::error::{Result, RomError};
use crate::fv::bc::{BcKind, BoundaryConditions};
use crate::fv::field::Field;
use crate::fv::mesh::{Direction, Mesh, Neighbor};
use crate::fv::ops::Scheme;
use crate::linalg::Csr;

/// Scalar Laplacian acting on cell values.
pub fn laplacian_matrix(mesh: &Mesh, bc: &BoundaryConditions) -> Csr {
    let mut trip = Vec::with_capacity(5 * mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let v = mesh.cell_volumes[c];
        let mut diag = 0.0;
        for dir in Direction::ALL {
            let a = mesh.face_area(dir);
            let h = mesh.face_spacing(dir);
            match mesh.neighbor(c, dir) {
                Neighbor::Cell(o) => {
                    trip.push((c, o, a / (h * v)));
                    diag -= a / (h * v);
                }
                Neighbor::Boundary(face) => {
                    if let BcKind::Dirichlet(_) = bc.kind(mesh.boundary_faces[face].patch) {
                        diag -= 2.0 * a / (h * v);
                    }
                }
            }
        }
        trip.push((c, c, diag));
    }
    Csr::from_triplets(mesh.n_cells(), mesh.n_cells(), trip)
}

/// Divergence: rows are cells, columns are `2*cell + component`.
pub fn divergence_matrix(mesh: &Mesh, bc: &BoundaryConditions) -> Csr {
    let mut trip = Vec::with_capacity(8 * mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let v = mesh.cell_volumes[c];
        for dir in Direction::ALL {
            let a = mesh.face_area(dir) / v;
            let n = dir.normal();
            for k in 0..2 {
                if n[k] == 0.0 {
                    continue;
                }
                match mesh.neighbor(c, dir) {
                    Neighbor::Cell(o) => {
                        trip.push((c, 2 * c + k, 0.5 * a * n[k]));
                        trip.push((c, 2 * o + k, 0.5 * a * n[k]));
                    }
                    Neighbor::Boundary(face) => {
                        for (o, w) in bc.face_weights(mesh, face) {
                            trip.push((c, 2 * o + k, w * a * n[k]));
                        }
                    }
                }
            }
        }
    }
    Csr::from_triplets(mesh.n_cells(), 2 * mesh.n_cells(), trip)
}

/// Gradient of a scalar: rows `2*cell + component`, columns cells.
pub fn gradient_matrix(mesh: &Mesh, bc: &BoundaryConditions) -> Csr {
    let mut trip = Vec::with_capacity(8 * mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let v = mesh.cell_volumes[c];
        for dir in Direction::ALL {
            let a = mesh.face_area(dir) / v;
            let n = dir.normal();
            for k in 0..2 {
                if n[k] == 0.0 {
                    continue;
                }
                match mesh.neighbor(c, dir) {
                    Neighbor::Cell(o) => {
                        trip.push((2 * c + k, c, 0.5 * a * n[k]));
                        trip.push((2 * c + k, o, 0.5 * a * n[k]));
                    }
                    Neighbor::Boundary(face) => {
                        for (o, w) in bc.face_weights(mesh, face) {
                            trip.push((2 * c + k, o, w * a * n[k]));
                        }
                    }
                }
            }
        }
    }
    Csr::from_triplets(2 * mesh.n_cells(), mesh.n_cells(), trip)
}

/// Linear part of div(u w) for a scalar w transported by a fixed velocity.
pub fn convection_matrix(
    mesh: &Mesh,
    u: &Field,
    u_bc: &BoundaryConditions,
    w_bc: &BoundaryConditions,
    scheme: Scheme,
) -> Result<Csr> {
    u.check_mesh(mesh)?;
    if u.components() != 2 {
        return Err(RomError::dim("convecting velocity must be a vector field"));
    }
    let mut trip = Vec::with_capacity(5 * mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let v = mesh.cell_volumes[c];
        for dir in Direction::ALL {
            let nb = mesh.neighbor(c, dir);
            let n = dir.normal();
            let uf = |k: usize| match nb {
                Neighbor::Cell(o) => 0.5 * (u.get(c, k) + u.get(o, k)),
                Neighbor::Boundary(face) => u_bc.face_value(mesh, u, face, k),
            };
            let flux = mesh.face_area(dir) * (n[0] * uf(0) + n[1] * uf(1)) / v;
            if flux == 0.0 {
                continue;
            }
            match (nb, scheme) {
                (Neighbor::Cell(o), Scheme::Central) => {
                    trip.push((c, c, 0.5 * flux));
                    trip.push((c, o, 0.5 * flux));
                }
                (Neighbor::Cell(o), Scheme::Upwind) => {
                    if flux >= 0.0 {
                        trip.push((c, c, flux));
                    } else {
                        trip.push((c, o, flux));
                    }
                }
                (Neighbor::Boundary(_), Scheme::Upwind) if flux >= 0.0 => trip.push((c, c, flux)),
                (Neighbor::Boundary(face), _) => {
                    for (o, w) in w_bc.face_weights(mesh, face) {
                        trip.push((c, o, w * flux));
                    }
                }
            }
        }
    }
    Ok(Csr::from_triplets(mesh.n_cells(), mesh.n_cells(), trip))
}
