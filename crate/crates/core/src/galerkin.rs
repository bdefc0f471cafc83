//! Reduced operators by Galerkin projection.
//!
//! Trial functions are the lifts followed by the homogeneous modes, so the
//! full coefficient vector is `ā = [u_D; a]`; test functions are the modes
//! only. Every entry is an inner product of a discrete operator applied to
//! trial fields, each carrying its own boundary data.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Result, RomError};
use crate::fv::assemble::laplacian_matrix;
use crate::fv::ops::{component_bc, pointwise_scale, transpose_stress_divergence};
use crate::fv::{convective_term, divergence, gradient, laplacian, BoundaryConditions, Field, Mesh, Scheme};
use crate::io::Bundle;
use crate::lifting::LiftingFunction;
use crate::linalg::{BandedLu, Csr};
use crate::pod::{dof_weights, weighted_cross};

/// Dense rank-3 array, row-major: `(i, j, k) → (i·d1 + j)·d2 + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    pub dims: [usize; 3],
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Tensor3 {
        Tensor3 {
            dims,
            data: vec![0.0; dims[0] * dims[1] * dims[2]],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.dims[1] + j) * self.dims[2] + k]
    }

    /// Slice `(i, ·, ·)` as a `d1 × d2` matrix.
    pub fn slab(&self, i: usize) -> DMatrix<f64> {
        let [_, d1, d2] = self.dims;
        DMatrix::from_row_slice(d1, d2, &self.data[i * d1 * d2..(i + 1) * d1 * d2])
    }

    /// Σ_i x_i T(i, ·, ·).
    pub fn contract_first(&self, x: &[f64]) -> DMatrix<f64> {
        let [d0, d1, d2] = self.dims;
        debug_assert_eq!(x.len(), d0);
        let mut out = DMatrix::zeros(d1, d2);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let base = i * d1 * d2;
            for j in 0..d1 {
                for k in 0..d2 {
                    out[(j, k)] += xi * self.data[base + j * d2 + k];
                }
            }
        }
        out
    }

    fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A trial function: cell values plus boundary data.
#[derive(Clone, Debug)]
pub struct Trial {
    pub field: Field,
    pub bc: BoundaryConditions,
}

/// `[lifts…, modes…]` with modes carrying the homogeneous conditions.
pub fn trial_space(mesh: &Mesh, lifts: &[LiftingFunction], modes: &DMatrix<f64>, homogeneous: &BoundaryConditions) -> Result<Vec<Trial>> {
    let comps = homogeneous.components();
    let mut out: Vec<Trial> = lifts
        .iter()
        .map(|l| Trial {
            field: l.field.clone(),
            bc: l.bc.clone(),
        })
        .collect();
    for col in modes.column_iter() {
        out.push(Trial {
            field: Field::from_values(mesh, comps, col.iter().copied().collect())?,
            bc: homogeneous.clone(),
        });
    }
    Ok(out)
}

fn columns(fields: &[Field]) -> DMatrix<f64> {
    let n = fields.first().map_or(0, |f| f.values().len());
    let mut m = DMatrix::zeros(n, fields.len());
    for (j, f) in fields.iter().enumerate() {
        m.column_mut(j).copy_from_slice(f.values());
    }
    m
}

/// Test-mode inner products of every field: `out[(a, k)] = ⟨f_a, φ_k⟩`.
fn project(fields: &[Field], test: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    weighted_cross(&columns(fields), test, weights)
}

fn tensor_from_slabs(slabs: Vec<DMatrix<f64>>, d1: usize, d2: usize) -> Tensor3 {
    let mut t = Tensor3::zeros([slabs.len(), d1, d2]);
    for (i, s) in slabs.iter().enumerate() {
        for j in 0..d1 {
            for k in 0..d2 {
                t.data[(i * d1 + j) * d2 + k] = s[(j, k)];
            }
        }
    }
    t
}

#[derive(Clone, Debug, PartialEq)]
pub struct VelocityOperators {
    pub n_lifts: usize,
    /// ⟨φ_i, φ_k⟩
    pub m: DMatrix<f64>,
    /// ⟨ΔΦ̄_i, φ_k⟩, n̄_u × n_u
    pub b: DMatrix<f64>,
    /// ⟨∇·(∇Φ̄_i)ᵀ, φ_k⟩
    pub bt: DMatrix<f64>,
    /// ⟨∇·(Φ̄_i ⊗ Φ̄_j), φ_k⟩
    pub q: Tensor3,
    /// ⟨ξ_m ΔΦ̄_j, φ_k⟩
    pub qt1: Tensor3,
    /// ⟨∇·(ξ_m (∇Φ̄_j)ᵀ), φ_k⟩
    pub qt2: Tensor3,
    /// ⟨∇ψ_j, φ_k⟩, n_p × n_u
    pub p: DMatrix<f64>,
    /// ⟨∇·Φ̄_i, ψ_j⟩ stored as n_p × n̄_u
    pub r: DMatrix<f64>,
}

impl VelocityOperators {
    pub fn n_modes(&self) -> usize {
        self.m.nrows()
    }

    pub fn n_trial(&self) -> usize {
        self.b.nrows()
    }

    pub fn n_pressure(&self) -> usize {
        self.p.nrows()
    }

    pub fn n_nut(&self) -> usize {
        self.qt1.dims[0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThermalOperators {
    pub n_lifts: usize,
    /// ⟨χ_i, χ_k⟩
    pub k: DMatrix<f64>,
    /// ⟨∇·(Φ̄_i X̄_j), χ_k⟩, n̄_u × n̄_θ × n_θ
    pub g: Tensor3,
    /// ⟨ΔX̄_j, χ_k⟩, n̄_θ × n_θ
    pub n: DMatrix<f64>,
    /// ⟨ξ_m ΔX̄_j, χ_k⟩
    pub nt: Tensor3,
}

impl ThermalOperators {
    pub fn n_modes(&self) -> usize {
        self.k.nrows()
    }

    pub fn n_trial(&self) -> usize {
        self.n.nrows()
    }
}

fn nut_fields(mesh: &Mesh, nut_modes: &DMatrix<f64>) -> Result<Vec<Field>> {
    nut_modes
        .column_iter()
        .map(|c| Field::from_values(mesh, 1, c.iter().copied().collect()))
        .collect()
}

/// Projects the momentum operators. `u_modes` are the homogeneous velocity
/// modes (supremizers included) and double as test functions.
pub fn assemble_velocity_operators(
    mesh: &Mesh,
    u_lifts: &[LiftingFunction],
    u_modes: &DMatrix<f64>,
    u_homogeneous: &BoundaryConditions,
    p_modes: &DMatrix<f64>,
    p_bc: &BoundaryConditions,
    nut_modes: &DMatrix<f64>,
) -> Result<VelocityOperators> {
    let n = mesh.n_cells();
    for (name, m, rows) in [("velocity", u_modes, 2 * n), ("pressure", p_modes, n), ("eddy viscosity", nut_modes, n)] {
        if m.nrows() != rows {
            return Err(RomError::dim(format!("{name} modes have {} rows, expected {rows}", m.nrows())));
        }
    }
    let w2 = dof_weights(mesh, 2);
    let w1 = dof_weights(mesh, 1);
    let trial = trial_space(mesh, u_lifts, u_modes, u_homogeneous)?;
    let nb = trial.len();
    let nu_modes = u_modes.ncols();
    let xi = nut_fields(mesh, nut_modes)?;

    let lap: Vec<Field> = trial
        .iter()
        .map(|t| laplacian(mesh, &t.field, &t.bc))
        .collect::<Result<_>>()?;
    let tr: Vec<Field> = trial
        .iter()
        .map(|t| transpose_stress_divergence(mesh, &t.field, &t.bc, None))
        .collect::<Result<_>>()?;
    let m = weighted_cross(u_modes, u_modes, &w2);
    let b = project(&lap, u_modes, &w2);
    let bt = project(&tr, u_modes, &w2);

    let q_slabs: Vec<DMatrix<f64>> = (0..nb)
        .into_par_iter()
        .map(|i| {
            let conv = trial
                .iter()
                .map(|tj| convective_term(mesh, &trial[i].field, &trial[i].bc, &tj.field, &tj.bc, Scheme::Central))
                .collect::<Result<Vec<_>>>()?;
            Ok(project(&conv, u_modes, &w2))
        })
        .collect::<Result<_>>()?;
    let q = tensor_from_slabs(q_slabs, nb, nu_modes);

    let turb: Vec<(DMatrix<f64>, DMatrix<f64>)> = xi
        .par_iter()
        .map(|x| {
            let scaled = lap.iter().map(|l| pointwise_scale(x, l)).collect::<Result<Vec<_>>>()?;
            let stress = trial
                .iter()
                .map(|t| transpose_stress_divergence(mesh, &t.field, &t.bc, Some(x)))
                .collect::<Result<Vec<_>>>()?;
            Ok((project(&scaled, u_modes, &w2), project(&stress, u_modes, &w2)))
        })
        .collect::<Result<_>>()?;
    let (t1, t2): (Vec<_>, Vec<_>) = turb.into_iter().unzip();
    let qt1 = tensor_from_slabs(t1, nb, nu_modes);
    let qt2 = tensor_from_slabs(t2, nb, nu_modes);

    let grads: Vec<Field> = p_modes
        .column_iter()
        .map(|c| gradient(mesh, &Field::from_values(mesh, 1, c.iter().copied().collect())?, p_bc))
        .collect::<Result<_>>()?;
    let p = project(&grads, u_modes, &w2);
    let divs: Vec<Field> = trial
        .iter()
        .map(|t| divergence(mesh, &t.field, &t.bc))
        .collect::<Result<_>>()?;
    let r = project(&divs, p_modes, &w1).transpose();

    let ops = VelocityOperators {
        n_lifts: u_lifts.len(),
        m,
        b,
        bt,
        q,
        qt1,
        qt2,
        p,
        r,
    };
    let finite = [&ops.m, &ops.b, &ops.bt, &ops.p, &ops.r].iter().all(|x| x.iter().all(|v| v.is_finite()))
        && ops.q.is_finite()
        && ops.qt1.is_finite()
        && ops.qt2.is_finite();
    if !finite {
        return Err(RomError::data("velocity operators contain non-finite entries"));
    }
    Ok(ops)
}

/// Projects the heat-equation operators.
#[allow(clippy::too_many_arguments)]
pub fn assemble_thermal_operators(
    mesh: &Mesh,
    u_lifts: &[LiftingFunction],
    u_modes: &DMatrix<f64>,
    u_homogeneous: &BoundaryConditions,
    t_lifts: &[LiftingFunction],
    t_modes: &DMatrix<f64>,
    t_homogeneous: &BoundaryConditions,
    nut_modes: &DMatrix<f64>,
) -> Result<ThermalOperators> {
    let n = mesh.n_cells();
    if t_modes.nrows() != n || u_modes.nrows() != 2 * n || nut_modes.nrows() != n {
        return Err(RomError::dim("mode matrices do not match the mesh"));
    }
    let w1 = dof_weights(mesh, 1);
    let u_trial = trial_space(mesh, u_lifts, u_modes, u_homogeneous)?;
    let t_trial = trial_space(mesh, t_lifts, t_modes, t_homogeneous)?;
    let nt_modes = t_modes.ncols();
    let xi = nut_fields(mesh, nut_modes)?;

    let k = weighted_cross(t_modes, t_modes, &w1);
    let lap: Vec<Field> = t_trial
        .iter()
        .map(|t| laplacian(mesh, &t.field, &t.bc))
        .collect::<Result<_>>()?;
    let n_op = project(&lap, t_modes, &w1);
    let g_slabs: Vec<DMatrix<f64>> = u_trial
        .par_iter()
        .map(|ui| {
            let conv = t_trial
                .iter()
                .map(|tj| convective_term(mesh, &ui.field, &ui.bc, &tj.field, &tj.bc, Scheme::Central))
                .collect::<Result<Vec<_>>>()?;
            Ok(project(&conv, t_modes, &w1))
        })
        .collect::<Result<_>>()?;
    let g = tensor_from_slabs(g_slabs, t_trial.len(), nt_modes);
    let nt_slabs: Vec<DMatrix<f64>> = xi
        .iter()
        .map(|x| {
            let scaled = lap.iter().map(|l| pointwise_scale(x, l)).collect::<Result<Vec<_>>>()?;
            Ok(project(&scaled, t_modes, &w1))
        })
        .collect::<Result<_>>()?;
    let nt = tensor_from_slabs(nt_slabs, t_trial.len(), nt_modes);
    let ops = ThermalOperators {
        n_lifts: t_lifts.len(),
        k,
        g,
        n: n_op,
        nt,
    };
    if !(ops.k.iter().chain(ops.n.iter()).all(|v| v.is_finite()) && ops.g.is_finite() && ops.nt.is_finite()) {
        return Err(RomError::data("thermal operators contain non-finite entries"));
    }
    Ok(ops)
}

/// Supremizer modes for each pressure mode: `(I − Δ₀) s = D₀ᵀ ψ` per
/// component with homogeneous velocity conditions, so that
/// `⟨∇·s, ψ⟩ = ‖(I − Δ₀)^{-1/2} D₀ᵀ ψ‖² > 0`. The results are
/// orthonormalized against `velocity_modes` and each other; numerically
/// dependent supremizers (for instance from a zero pressure mode) are
/// dropped. Returns the accepted supremizers as columns.
pub fn supremizer_enrichment(
    mesh: &Mesh,
    u_homogeneous: &BoundaryConditions,
    p_modes: &DMatrix<f64>,
    p_bc: &BoundaryConditions,
    velocity_modes: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = mesh.n_cells();
    let w2 = dof_weights(mesh, 2);
    let lap = laplacian_matrix(mesh, &component_bc(mesh, u_homogeneous, 0)?);
    let a = Csr::identity(n).add(1.0, &lap, -1.0);
    let lu = BandedLu::factor(&a).map_err(|e| RomError::Enrichment {
        mode: 0,
        reason: e.to_string(),
    })?;
    let mut accepted: Vec<DVector<f64>> = Vec::new();
    for (idx, psi) in p_modes.column_iter().enumerate() {
        let psi_field = Field::from_values(mesh, 1, psi.iter().copied().collect())?;
        let g = gradient(mesh, &psi_field, p_bc)?;
        let mut s = DVector::zeros(2 * n);
        for k in 0..2 {
            let rhs: Vec<f64> = (0..n).map(|c| -g.get(c, k)).collect();
            let sol = lu.solve(&rhs);
            if !sol.iter().all(|v| v.is_finite()) {
                return Err(RomError::Enrichment {
                    mode: idx,
                    reason: "supremizer solve produced non-finite values".into(),
                });
            }
            for c in 0..n {
                s[2 * c + k] = sol[c];
            }
        }
        let norm0 = s.iter().zip(&w2).map(|(x, w)| w * x * x).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            log::warn!("pressure mode {idx} yields a zero supremizer; dropped");
            continue;
        }
        for _ in 0..2 {
            for basis in velocity_modes.column_iter().map(|c| c.into_owned()).chain(accepted.iter().cloned()) {
                let proj: f64 = basis.iter().zip(s.iter()).zip(&w2).map(|((a, b), w)| w * a * b).sum();
                s.axpy(-proj, &basis, 1.0);
            }
        }
        let norm = s.iter().zip(&w2).map(|(x, w)| w * x * x).sum::<f64>().sqrt();
        if norm < 1e-8 * norm0 {
            log::warn!("supremizer of pressure mode {idx} lies in the velocity space; dropped");
            continue;
        }
        accepted.push(s / norm);
    }
    Ok(if accepted.is_empty() {
        DMatrix::zeros(2 * n, 0)
    } else {
        DMatrix::from_columns(&accepted)
    })
}

/// Coefficients `c_ij = ⟨mode_i, snapshot_j⟩`.
pub fn project_snapshots(data: &DMatrix<f64>, modes: &DMatrix<f64>, weights: &[f64]) -> Result<DMatrix<f64>> {
    if data.nrows() != modes.nrows() || weights.len() != data.nrows() {
        return Err(RomError::dim("snapshots and modes have different sizes"));
    }
    Ok(weighted_cross(modes, data, weights))
}

/// All projected operators plus the physical constants they are combined
/// with online.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedOperators {
    pub velocity: VelocityOperators,
    pub thermal: ThermalOperators,
    pub nu: f64,
    pub alpha: f64,
    pub pr_t: f64,
}

impl ReducedOperators {
    pub fn to_bundle(&self) -> Bundle {
        let mut b = Bundle::default();
        let v = &self.velocity;
        let t = &self.thermal;
        b.insert("nu", vec![1], vec![self.nu]);
        b.insert("alpha", vec![1], vec![self.alpha]);
        b.insert("pr_t", vec![1], vec![self.pr_t]);
        b.insert("u_lifts", vec![1], vec![v.n_lifts as f64]);
        b.insert("t_lifts", vec![1], vec![t.n_lifts as f64]);
        for (name, m) in [("M", &v.m), ("B", &v.b), ("BT", &v.bt), ("P", &v.p), ("R", &v.r), ("K", &t.k), ("N", &t.n)] {
            b.insert_matrix(name, m);
        }
        for (name, x) in [("Q", &v.q), ("QT1", &v.qt1), ("QT2", &v.qt2), ("G", &t.g), ("NT", &t.nt)] {
            b.insert(name, x.dims.to_vec(), x.data.clone());
        }
        b
    }

    pub fn from_bundle(b: &Bundle) -> Result<ReducedOperators> {
        let tensor = |name: &str| -> Result<Tensor3> {
            let (shape, data) = b.get(name)?;
            if shape.len() != 3 {
                return Err(RomError::Format(format!("`{name}` is not rank 3")));
            }
            Ok(Tensor3 {
                dims: [shape[0], shape[1], shape[2]],
                data: data.clone(),
            })
        };
        let ops = ReducedOperators {
            velocity: VelocityOperators {
                n_lifts: b.scalar("u_lifts")? as usize,
                m: b.matrix("M")?,
                b: b.matrix("B")?,
                bt: b.matrix("BT")?,
                q: tensor("Q")?,
                qt1: tensor("QT1")?,
                qt2: tensor("QT2")?,
                p: b.matrix("P")?,
                r: b.matrix("R")?,
            },
            thermal: ThermalOperators {
                n_lifts: b.scalar("t_lifts")? as usize,
                k: b.matrix("K")?,
                g: tensor("G")?,
                n: b.matrix("N")?,
                nt: tensor("NT")?,
            },
            nu: b.scalar("nu")?,
            alpha: b.scalar("alpha")?,
            pr_t: b.scalar("pr_t")?,
        };
        ops.check()?;
        Ok(ops)
    }

    /// Shape consistency between all blocks.
    pub fn check(&self) -> Result<()> {
        let v = &self.velocity;
        let t = &self.thermal;
        let (nu_m, nbar, np, nn) = (v.n_modes(), v.n_trial(), v.n_pressure(), v.n_nut());
        let (nt_m, ntbar) = (t.n_modes(), t.n_trial());
        let ok = v.m.shape() == (nu_m, nu_m)
            && nbar == v.n_lifts + nu_m
            && v.b.shape() == (nbar, nu_m)
            && v.bt.shape() == (nbar, nu_m)
            && v.q.dims == [nbar, nbar, nu_m]
            && v.qt1.dims == [nn, nbar, nu_m]
            && v.qt2.dims == [nn, nbar, nu_m]
            && v.p.shape() == (np, nu_m)
            && v.r.shape() == (np, nbar)
            && t.k.shape() == (nt_m, nt_m)
            && ntbar == t.n_lifts + nt_m
            && t.g.dims == [nbar, ntbar, nt_m]
            && t.nt.dims == [nn, ntbar, nt_m];
        if ok {
            Ok(())
        } else {
            Err(RomError::dim("reduced operator shapes are inconsistent"))
        }
    }
}
