//! Discrete differential operators on cell-centred fields.
//!
//! Every operator is a Gauss (face-sum) scheme: volume integrals become sums
//! of face values times outward area vectors. Interior faces use the
//! arithmetic mean of the two adjacent cells; boundary faces take their value
//! from the supplied [`BoundaryConditions`]. All operators are affine in the
//! pair (cell values, Dirichlet data) and linear in the cell values when the
//! Dirichlet data are zero.

use std::str::FromStr;

use crate::error::{Result, RomError};
use crate::fv::bc::{BcKind, BoundaryConditions};
use crate::fv::field::Field;
use crate::fv::mesh::{Direction, Mesh, Neighbor};

/// Face interpolation for the transported quantity in convective terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Central,
    Upwind,
}

impl FromStr for Scheme {
    type Err = RomError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "central" => Ok(Scheme::Central),
            "upwind" => Ok(Scheme::Upwind),
            other => Err(RomError::config(format!("unknown convection scheme `{other}`"))),
        }
    }
}

/// Volume-weighted L2 inner product, summed over components.
pub fn inner_product(mesh: &Mesh, f: &Field, g: &Field) -> Result<f64> {
    f.check_mesh(mesh)?;
    f.check_compatible(g)?;
    let k = f.components();
    Ok(f.values()
        .chunks(k)
        .zip(g.values().chunks(k))
        .zip(&mesh.cell_volumes)
        .map(|((a, b), v)| v * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
        .sum())
}

pub fn norm(mesh: &Mesh, f: &Field) -> Result<f64> {
    Ok(inner_product(mesh, f, f)?.sqrt())
}

#[inline]
fn face_value(mesh: &Mesh, f: &Field, bc: &BoundaryConditions, c: usize, nb: Neighbor, k: usize) -> f64 {
    match nb {
        Neighbor::Cell(o) => 0.5 * (f.get(c, k) + f.get(o, k)),
        Neighbor::Boundary(face) => bc.face_value(mesh, f, face, k),
    }
}

/// Gauss gradient of a scalar field.
pub fn gradient(mesh: &Mesh, f: &Field, bc: &BoundaryConditions) -> Result<Field> {
    f.check_mesh(mesh)?;
    if f.components() != 1 {
        return Err(RomError::dim("gradient expects a scalar field"));
    }
    bc.check(mesh, f)?;
    let mut out = Field::zeros(mesh, 2);
    for c in 0..mesh.n_cells() {
        let mut g = [0.0; 2];
        for dir in Direction::ALL {
            let pf = face_value(mesh, f, bc, c, mesh.neighbor(c, dir), 0);
            let [nx, ny] = dir.normal();
            let a = mesh.face_area(dir);
            g[0] += a * nx * pf;
            g[1] += a * ny * pf;
        }
        let v = mesh.cell_volumes[c];
        out.set(c, 0, g[0] / v);
        out.set(c, 1, g[1] / v);
    }
    Ok(out)
}

/// Gauss divergence of a 2D vector field.
pub fn divergence(mesh: &Mesh, w: &Field, bc: &BoundaryConditions) -> Result<Field> {
    w.check_mesh(mesh)?;
    if w.components() != 2 {
        return Err(RomError::dim("divergence expects a vector field"));
    }
    bc.check(mesh, w)?;
    let mut out = Field::zeros(mesh, 1);
    for c in 0..mesh.n_cells() {
        let mut s = 0.0;
        for dir in Direction::ALL {
            let nb = mesh.neighbor(c, dir);
            let [nx, ny] = dir.normal();
            let wf = nx * face_value(mesh, w, bc, c, nb, 0) + ny * face_value(mesh, w, bc, c, nb, 1);
            s += mesh.face_area(dir) * wf;
        }
        out.set(c, 0, s / mesh.cell_volumes[c]);
    }
    Ok(out)
}

/// Compact central Laplacian, applied per component. Dirichlet faces use the
/// half-cell distance to the face; zero-gradient faces carry no flux.
pub fn laplacian(mesh: &Mesh, f: &Field, bc: &BoundaryConditions) -> Result<Field> {
    f.check_mesh(mesh)?;
    bc.check(mesh, f)?;
    let k = f.components();
    let mut out = Field::zeros(mesh, k);
    for c in 0..mesh.n_cells() {
        for comp in 0..k {
            let fc = f.get(c, comp);
            let mut s = 0.0;
            for dir in Direction::ALL {
                let a = mesh.face_area(dir);
                let h = mesh.face_spacing(dir);
                match mesh.neighbor(c, dir) {
                    Neighbor::Cell(o) => s += a * (f.get(o, comp) - fc) / h,
                    Neighbor::Boundary(face) => {
                        if let BcKind::Dirichlet(v) = bc.kind(mesh.boundary_faces[face].patch) {
                            s += a * (v[comp] - fc) / (0.5 * h);
                        }
                    }
                }
            }
            out.set(c, comp, s / mesh.cell_volumes[c]);
        }
    }
    Ok(out)
}

/// Face-flux form of div(u ⊗ w) (or div(u w) for scalar w). The volume flux
/// through each face always uses the mean face velocity; `scheme` selects
/// the face value of the transported quantity.
pub fn convective_term(
    mesh: &Mesh,
    u: &Field,
    u_bc: &BoundaryConditions,
    w: &Field,
    w_bc: &BoundaryConditions,
    scheme: Scheme,
) -> Result<Field> {
    u.check_mesh(mesh)?;
    w.check_mesh(mesh)?;
    if u.components() != 2 {
        return Err(RomError::dim("convecting velocity must be a vector field"));
    }
    u_bc.check(mesh, u)?;
    w_bc.check(mesh, w)?;
    let k = w.components();
    let mut out = Field::zeros(mesh, k);
    for c in 0..mesh.n_cells() {
        let mut acc = [0.0; 2];
        for dir in Direction::ALL {
            let nb = mesh.neighbor(c, dir);
            let [nx, ny] = dir.normal();
            let flux = mesh.face_area(dir)
                * (nx * face_value(mesh, u, u_bc, c, nb, 0) + ny * face_value(mesh, u, u_bc, c, nb, 1));
            if flux == 0.0 {
                continue;
            }
            for comp in 0..k {
                let wf = match scheme {
                    Scheme::Central => face_value(mesh, w, w_bc, c, nb, comp),
                    Scheme::Upwind => {
                        if flux >= 0.0 {
                            w.get(c, comp)
                        } else {
                            match nb {
                                Neighbor::Cell(o) => w.get(o, comp),
                                Neighbor::Boundary(face) => w_bc.face_value(mesh, w, face, comp),
                            }
                        }
                    }
                };
                acc[comp] += flux * wf;
            }
        }
        let v = mesh.cell_volumes[c];
        for comp in 0..k {
            out.set(c, comp, acc[comp] / v);
        }
    }
    Ok(out)
}

/// Gradients of each velocity component: `grads[b]` holds ∂u_b/∂x_a in
/// component a.
pub fn velocity_gradient(mesh: &Mesh, u: &Field, bc: &BoundaryConditions) -> Result<[Field; 2]> {
    if u.components() != 2 {
        return Err(RomError::dim("velocity gradient expects a vector field"));
    }
    let comp_bc = |k: usize| component_bc(mesh, bc, k);
    Ok([
        gradient(mesh, &u.component(0), &comp_bc(0)?)?,
        gradient(mesh, &u.component(1), &comp_bc(1)?)?,
    ])
}

/// Scalar conditions for one component of a vector condition set.
pub fn component_bc(mesh: &Mesh, bc: &BoundaryConditions, k: usize) -> Result<BoundaryConditions> {
    let conds: Vec<(String, BcKind)> = mesh
        .patches
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let kind = match bc.kind(i) {
                BcKind::Dirichlet(v) => BcKind::Dirichlet(vec![v[k]]),
                other => other.clone(),
            };
            (p.name.clone(), kind)
        })
        .collect();
    let refs: Vec<(&str, BcKind)> = conds.iter().map(|(n, k)| (n.as_str(), k.clone())).collect();
    BoundaryConditions::new(mesh, 1, &refs)
}

/// div(ξ (∇u)ᵀ): component b is Σ_a ∂_a(ξ ∂_b u_a). `xi = None` means ξ ≡ 1.
/// The intermediate tensor rows are extrapolated to boundary faces with
/// zero gradient.
pub fn transpose_stress_divergence(
    mesh: &Mesh,
    u: &Field,
    bc: &BoundaryConditions,
    xi: Option<&Field>,
) -> Result<Field> {
    let grads = velocity_gradient(mesh, u, bc)?;
    if let Some(x) = xi {
        x.check_mesh(mesh)?;
        if x.components() != 1 {
            return Err(RomError::dim("coefficient field must be scalar"));
        }
    }
    let copy = BoundaryConditions::zero_gradient(mesh, 2);
    let mut out = Field::zeros(mesh, 2);
    for b in 0..2 {
        let mut row = Field::zeros(mesh, 2);
        for c in 0..mesh.n_cells() {
            let s = xi.map_or(1.0, |x| x.get(c, 0));
            for a in 0..2 {
                row.set(c, a, s * grads[a].get(c, b));
            }
        }
        let d = divergence(mesh, &row, &copy)?;
        for c in 0..mesh.n_cells() {
            out.set(c, b, d.get(c, 0));
        }
    }
    Ok(out)
}

/// Pointwise product of a scalar field with any field.
pub fn pointwise_scale(xi: &Field, f: &Field) -> Result<Field> {
    if xi.components() != 1 || xi.mesh_id() != f.mesh_id() || xi.n_cells() != f.n_cells() {
        return Err(RomError::dim("pointwise scaling needs a scalar on the same mesh"));
    }
    let k = f.components();
    let mut out = f.clone();
    for (chunk, s) in out.values_mut().chunks_mut(k).zip(xi.values()) {
        chunk.iter_mut().for_each(|v| *v *= s);
    }
    Ok(out)
}

/// |S| = sqrt(2 S:S) with S the symmetric part of the velocity gradient.
pub fn strain_rate_magnitude(mesh: &Mesh, u: &Field, bc: &BoundaryConditions) -> Result<Field> {
    let g = velocity_gradient(mesh, u, bc)?;
    let mut out = Field::zeros(mesh, 1);
    for c in 0..mesh.n_cells() {
        // g[b].get(c, a) = ∂u_b/∂x_a
        let sxx = g[0].get(c, 0);
        let syy = g[1].get(c, 1);
        let sxy = 0.5 * (g[0].get(c, 1) + g[1].get(c, 0));
        out.set(c, 0, (2.0 * (sxx * sxx + syy * syy + 2.0 * sxy * sxy)).sqrt());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fv::mesh::TeeSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(n: usize) -> Mesh {
        Mesh::rectangle(n, n, 1.0, 1.0).unwrap()
    }

    fn random_field(mesh: &Mesh, k: usize, rng: &mut ChaCha8Rng) -> Field {
        let v = (0..mesh.n_cells() * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Field::from_values(mesh, k, v).unwrap()
    }

    fn dirichlet_all(mesh: &Mesh, k: usize) -> BoundaryConditions {
        BoundaryConditions::uniform(mesh, k, BcKind::Dirichlet(vec![0.0; k]))
    }

    #[test]
    fn inner_product_cases() {
        let mesh = unit(8);
        let one = Field::constant(&mesh, &[1.0]);
        assert!((inner_product(&mesh, &one, &one).unwrap() - 1.0).abs() < 1e-14);

        let mut a = Field::zeros(&mesh, 1);
        let mut b = Field::zeros(&mesh, 1);
        a.set(3, 0, 2.0);
        b.set(10, 0, 5.0);
        assert_eq!(inner_product(&mesh, &a, &b).unwrap(), 0.0);

        let v = Field::zeros(&mesh, 2);
        assert!(matches!(inner_product(&mesh, &a, &v), Err(RomError::Dimension(_))));
    }

    #[test]
    fn inner_product_matches_elementwise_sum() {
        let mesh = unit(4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_field(&mesh, 2, &mut rng);
        let g = random_field(&mesh, 2, &mut rng);
        let mut oracle = 0.0;
        for c in 0..mesh.n_cells() {
            for k in 0..2 {
                oracle += mesh.cell_volumes[c] * f.get(c, k) * g.get(c, k);
            }
        }
        assert!((inner_product(&mesh, &f, &g).unwrap() - oracle).abs() < 1e-14);
    }

    #[test]
    fn gradient_of_constant_and_linear() {
        let mesh = unit(16);
        let bc = BoundaryConditions::zero_gradient(&mesh, 1);
        let g = gradient(&mesh, &Field::constant(&mesh, &[3.0]), &bc).unwrap();
        assert!(g.max_abs() < 1e-12);

        let fx = Field::scalar_fn(&mesh, |x, _| x);
        let g = gradient(&mesh, &fx, &bc).unwrap();
        for c in (0..mesh.n_cells()).filter(|&c| mesh.is_interior(c)) {
            assert!((g.get(c, 0) - 1.0).abs() < 1e-12);
            assert!(g.get(c, 1).abs() < 1e-12);
        }
        assert!(gradient(&mesh, &Field::zeros(&mesh, 2), &bc).is_err());
    }

    #[test]
    fn gradient_refinement_is_second_order() {
        // f = x^2 is differentiated exactly by the central stencil away from
        // the boundary; a non-polynomial field shows the asymptotic order.
        let mut errs = Vec::new();
        for n in [16, 32, 64] {
            let mesh = unit(n);
            let bc = BoundaryConditions::zero_gradient(&mesh, 1);
            let sq = gradient(&mesh, &Field::scalar_fn(&mesh, |x, _| x * x), &bc).unwrap();
            let f = Field::scalar_fn(&mesh, |x, y| (2.0 * x).sin() * y.cos());
            let g = gradient(&mesh, &f, &bc).unwrap();
            let mut e: f64 = 0.0;
            for c in (0..mesh.n_cells()).filter(|&c| mesh.is_interior(c)) {
                let [x, y] = mesh.center(c);
                assert!((sq.get(c, 0) - 2.0 * x).abs() < 1e-12);
                e = e.max((g.get(c, 0) - 2.0 * (2.0 * x).cos() * y.cos()).abs());
                e = e.max((g.get(c, 1) + (2.0 * x).sin() * y.sin()).abs());
            }
            errs.push(e);
        }
        for w in errs.windows(2) {
            let rate = (w[0] / w[1]).log2();
            assert!(rate > 1.9, "observed order {rate}");
        }
    }

    #[test]
    fn divergence_exactness() {
        let mesh = unit(16);
        let bc = BoundaryConditions::zero_gradient(&mesh, 2);
        let d = divergence(&mesh, &Field::constant(&mesh, &[1.5, -2.0]), &bc).unwrap();
        for c in (0..mesh.n_cells()).filter(|&c| mesh.is_interior(c)) {
            assert!(d.get(c, 0).abs() < 1e-12);
        }
        let w = Field::vector_fn(&mesh, |x, y| [x, y]);
        let d = divergence(&mesh, &w, &bc).unwrap();
        for c in (0..mesh.n_cells()).filter(|&c| mesh.is_interior(c)) {
            assert!((d.get(c, 0) - 2.0).abs() < 1e-12);
        }
        assert!(divergence(&mesh, &Field::zeros(&mesh, 1), &bc).is_err());
    }

    #[test]
    fn divergence_theorem_on_tee() {
        let mesh = Mesh::tee(TeeSpec::default(), 1.0 / 32.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = random_field(&mesh, 2, &mut rng);
        let zero_flux = dirichlet_all(&mesh, 2);
        let d = divergence(&mesh, &w, &zero_flux).unwrap();
        let total: f64 = (0..mesh.n_cells()).map(|c| mesh.cell_volumes[c] * d.get(c, 0)).sum();
        assert!(total.abs() < 1e-12 * w.max_abs());

        // with boundary data, the sum equals the net boundary flux
        let bc = BoundaryConditions::zero_gradient(&mesh, 2);
        let d = divergence(&mesh, &w, &bc).unwrap();
        let total: f64 = (0..mesh.n_cells()).map(|c| mesh.cell_volumes[c] * d.get(c, 0)).sum();
        let flux: f64 = mesh
            .boundary_faces
            .iter()
            .map(|f| {
                let n = f.dir.normal();
                f.area * (n[0] * w.get(f.cell, 0) + n[1] * w.get(f.cell, 1))
            })
            .sum();
        assert!((total - flux).abs() < 1e-12 * (1.0 + flux.abs()));
    }

    #[test]
    fn laplacian_exactness() {
        let mesh = unit(16);
        let bc = BoundaryConditions::zero_gradient(&mesh, 1);
        let l = laplacian(&mesh, &Field::scalar_fn(&mesh, |x, y| 2.0 * x - y), &bc).unwrap();
        for c in (0..mesh.n_cells()).filter(|&c| mesh.is_interior(c)) {
            assert!(l.get(c, 0).abs() < 1e-10);
        }
        let l = laplacian(&mesh, &Field::scalar_fn(&mesh, |x, y| x * x + y * y), &bc).unwrap();
        for c in (0..mesh.n_cells()).filter(|&c| mesh.is_interior(c)) {
            assert!((l.get(c, 0) - 4.0).abs() < 1e-10);
        }
    }

    #[test]
    fn laplacian_is_self_adjoint_with_homogeneous_dirichlet() {
        let mesh = Mesh::tee(TeeSpec::default(), 1.0 / 32.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_field(&mesh, 1, &mut rng);
        let g = random_field(&mesh, 1, &mut rng);
        let bc = dirichlet_all(&mesh, 1);
        let lf = laplacian(&mesh, &f, &bc).unwrap();
        let lg = laplacian(&mesh, &g, &bc).unwrap();
        let a = inner_product(&mesh, &lf, &g).unwrap();
        let b = inner_product(&mesh, &f, &lg).unwrap();
        assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn convective_term_cases() {
        let mesh = unit(16);
        let bc2 = BoundaryConditions::zero_gradient(&mesh, 2);
        let bc1 = BoundaryConditions::zero_gradient(&mesh, 1);
        let w = Field::scalar_fn(&mesh, |x, y| 3.0 * x + y);
        let zero = Field::zeros(&mesh, 2);
        let c = convective_term(&mesh, &zero, &bc2, &w, &bc1, Scheme::Central).unwrap();
        assert_eq!(c.max_abs(), 0.0);

        let u = Field::constant(&mesh, &[0.7, -0.2]);
        let c = convective_term(&mesh, &u, &bc2, &w, &bc1, Scheme::Central).unwrap();
        for cell in (0..mesh.n_cells()).filter(|&c| mesh.is_interior(c)) {
            assert!((c.get(cell, 0) - (0.7 * 3.0 - 0.2)).abs() < 1e-12);
        }
        assert!("quick".parse::<Scheme>().is_err());
    }

    /// Independent per-face assembly: visit every face once and scatter.
    fn convection_oracle(mesh: &Mesh, u: &Field, w: &Field, upwind: bool) -> Vec<f64> {
        let k = w.components();
        let mut out = vec![0.0; mesh.n_cells() * k];
        for c in 0..mesh.n_cells() {
            for dir in [Direction::East, Direction::North] {
                if let Neighbor::Cell(o) = mesh.neighbor(c, dir) {
                    let n = dir.normal();
                    let uf = [(u.get(c, 0) + u.get(o, 0)) / 2.0, (u.get(c, 1) + u.get(o, 1)) / 2.0];
                    let flux = mesh.face_area(dir) * (uf[0] * n[0] + uf[1] * n[1]);
                    for comp in 0..k {
                        let wf = if upwind {
                            if flux >= 0.0 { w.get(c, comp) } else { w.get(o, comp) }
                        } else {
                            (w.get(c, comp) + w.get(o, comp)) / 2.0
                        };
                        out[c * k + comp] += flux * wf / mesh.cell_volumes[c];
                        out[o * k + comp] -= flux * wf / mesh.cell_volumes[o];
                    }
                }
            }
        }
        for f in &mesh.boundary_faces {
            let n = f.dir.normal();
            let flux = f.area * (u.get(f.cell, 0) * n[0] + u.get(f.cell, 1) * n[1]);
            for comp in 0..k {
                out[f.cell * k + comp] += flux * w.get(f.cell, comp) / mesh.cell_volumes[f.cell];
            }
        }
        out
    }

    #[test]
    fn convective_term_matches_face_oracle() {
        let mesh = Mesh::tee(TeeSpec { main_nx: 12, main_ny: 6, branch_x0: 4, branch_nx: 3, branch_ny: 4 }, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = random_field(&mesh, 2, &mut rng);
        for k in [1, 2] {
            let w = random_field(&mesh, k, &mut rng);
            let wbc = BoundaryConditions::zero_gradient(&mesh, k);
            let ubc = BoundaryConditions::zero_gradient(&mesh, 2);
            for (scheme, up) in [(Scheme::Central, false), (Scheme::Upwind, true)] {
                let c = convective_term(&mesh, &u, &ubc, &w, &wbc, scheme).unwrap();
                let o = convection_oracle(&mesh, &u, &w, up);
                for (a, b) in c.values().iter().zip(&o) {
                    assert!((a - b).abs() < 1e-13 * (1.0 + b.abs()));
                }
            }
        }
    }

    #[test]
    fn strain_rate_of_shear() {
        let mesh = unit(10);
        let u = Field::vector_fn(&mesh, |_, y| [y, 0.0]);
        let bc = BoundaryConditions::zero_gradient(&mesh, 2);
        let s = strain_rate_magnitude(&mesh, &u, &bc).unwrap();
        for c in (0..mesh.n_cells()).filter(|&c| mesh.is_interior(c)) {
            assert!((s.get(c, 0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn transpose_term_vanishes_for_solenoidal_linear_field() {
        // div((∇u)^T) = ∇(div u) = 0 for a linear field with constant divergence
        let mesh = unit(12);
        let u = Field::vector_fn(&mesh, |x, y| [x + 2.0 * y, -y + 0.5 * x]);
        let bc = BoundaryConditions::zero_gradient(&mesh, 2);
        let t = transpose_stress_divergence(&mesh, &u, &bc, None).unwrap();
        for c in (0..mesh.n_cells()).filter(|&c| mesh.is_deep_interior(c)) {
            assert!(t.get(c, 0).abs() < 1e-10 && t.get(c, 1).abs() < 1e-10);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn operators_are_linear(alpha in -3.0f64..3.0, beta in -3.0f64..3.0, seed in any::<u64>()) {
                let mesh = Mesh::tee(TeeSpec::default(), 1.0 / 8.0).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (f, g) = (random_field(&mesh, 1, &mut rng), random_field(&mesh, 1, &mut rng));
                let (v, w) = (random_field(&mesh, 2, &mut rng), random_field(&mesh, 2, &mut rng));
                let bc1 = BoundaryConditions::zero_gradient(&mesh, 1);
                let bc2 = dirichlet_all(&mesh, 2);
                let combo = |a: &Field, b: &Field| {
                    let mut c = a.scaled(alpha);
                    c.axpy(beta, b).unwrap();
                    c
                };
                let checks = [
                    (gradient(&mesh, &combo(&f, &g), &bc1).unwrap(), combo(&gradient(&mesh, &f, &bc1).unwrap(), &gradient(&mesh, &g, &bc1).unwrap())),
                    (laplacian(&mesh, &combo(&f, &g), &bc1).unwrap(), combo(&laplacian(&mesh, &f, &bc1).unwrap(), &laplacian(&mesh, &g, &bc1).unwrap())),
                    (divergence(&mesh, &combo(&v, &w), &bc2).unwrap(), combo(&divergence(&mesh, &v, &bc2).unwrap(), &divergence(&mesh, &w, &bc2).unwrap())),
                ];
                for (lhs, rhs) in checks {
                    let mut d = lhs.clone();
                    d.axpy(-1.0, &rhs).unwrap();
                    prop_assert!(d.max_abs() < 1e-12 * rhs.max_abs().max(1.0));
                }
            }
        }
    }
}
