//! Proper orthogonal decomposition by the method of snapshots.
//!
//! Snapshot matrices are `N_h × N_s` with columns ordered parameter-major:
//! all times of the first parameter, then all times of the second, and so
//! on. Inner products carry per-degree-of-freedom volume weights, so modes
//! are orthonormal in the discrete L2(Ω) sense.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RomError};
use crate::fv::{Field, Mesh};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Velocity,
    Pressure,
    Temperature,
    EddyViscosity,
    Supremizer,
}

impl FieldKind {
    pub fn components(self) -> usize {
        match self {
            FieldKind::Velocity | FieldKind::Supremizer => 2,
            _ => 1,
        }
    }

    /// File stem used in snapshot directories.
    pub fn file_stem(self) -> &'static str {
        match self {
            FieldKind::Velocity => "U",
            FieldKind::Pressure => "p",
            FieldKind::Temperature => "T",
            FieldKind::EddyViscosity => "nut",
            FieldKind::Supremizer => "sup",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SnapshotSet {
    pub kind: FieldKind,
    pub components: usize,
    /// Quadrature weight of every degree of freedom (cell volume).
    pub weights: Vec<f64>,
    pub data: DMatrix<f64>,
    /// Parameter axis; empty for derived sets without a grid layout.
    pub params: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    pub mesh_id: u64,
}

pub fn dof_weights(mesh: &Mesh, components: usize) -> Vec<f64> {
    mesh.cell_volumes
        .iter()
        .flat_map(|&v| std::iter::repeat(v).take(components))
        .collect()
}

impl SnapshotSet {
    /// Global set on a parameter × time grid; `fields[k * Nt + j]` is the
    /// snapshot at `(params[k], times[j])`.
    pub fn new(
        kind: FieldKind,
        mesh: &Mesh,
        fields: &[Field],
        params: Vec<Vec<f64>>,
        times: Vec<f64>,
    ) -> Result<SnapshotSet> {
        if fields.is_empty() {
            return Err(RomError::data("empty snapshot set"));
        }
        if fields.len() != params.len() * times.len() {
            return Err(RomError::dim(format!(
                "{} snapshots do not fill a {}×{} parameter-time grid",
                fields.len(),
                params.len(),
                times.len()
            )));
        }
        let set = Self::from_fields(kind, mesh, fields)?;
        Ok(SnapshotSet { params, times, ..set })
    }

    /// Set without grid layout.
    pub fn from_fields(kind: FieldKind, mesh: &Mesh, fields: &[Field]) -> Result<SnapshotSet> {
        let components = kind.components();
        let n_h = mesh.n_cells() * components;
        let mut data = DMatrix::zeros(n_h, fields.len());
        for (j, f) in fields.iter().enumerate() {
            f.check_mesh(mesh)?;
            if f.components() != components {
                return Err(RomError::dim(format!("snapshot {j} has the wrong component count")));
            }
            data.column_mut(j).copy_from_slice(f.values());
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(RomError::data("snapshot set contains non-finite values"));
        }
        Ok(SnapshotSet {
            kind,
            components,
            weights: dof_weights(mesh, components),
            data,
            params: Vec::new(),
            times: Vec::new(),
            mesh_id: mesh.id(),
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_snapshots(&self) -> usize {
        self.data.ncols()
    }

    /// Column holding snapshot (μ^k, t^j), both zero-based.
    pub fn column_index(&self, k: usize, j: usize) -> usize {
        k * self.times.len() + j
    }

    pub fn column_field(&self, j: usize) -> Field {
        Field::from_parts(self.mesh_id, self.components, self.data.column(j).iter().copied().collect())
    }

    /// The `Nt` columns of parameter `k` as a local set.
    pub fn local(&self, k: usize) -> Result<SnapshotSet> {
        let nt = self.times.len();
        if nt == 0 || k >= self.params.len() {
            return Err(RomError::dim("snapshot set has no parameter layout"));
        }
        Ok(SnapshotSet {
            data: self.data.columns(k * nt, nt).into_owned(),
            params: vec![self.params[k].clone()],
            ..self.clone_empty()
        })
    }

    pub fn with_data(&self, data: DMatrix<f64>) -> SnapshotSet {
        SnapshotSet {
            data,
            ..self.clone_empty()
        }
        .with_layout(self.params.clone())
    }

    fn with_layout(mut self, params: Vec<Vec<f64>>) -> SnapshotSet {
        self.params = params;
        self
    }

    fn clone_empty(&self) -> SnapshotSet {
        SnapshotSet {
            kind: self.kind,
            components: self.components,
            weights: self.weights.clone(),
            data: DMatrix::zeros(0, 0),
            params: Vec::new(),
            times: self.times.clone(),
            mesh_id: self.mesh_id,
        }
    }

    /// Σ_i ‖w_i‖²
    pub fn total_energy(&self) -> f64 {
        weighted_gram_diag_sum(&self.data, &self.weights)
    }
}

fn weighted_gram_diag_sum(m: &DMatrix<f64>, w: &[f64]) -> f64 {
    let mut s = 0.0;
    for col in m.column_iter() {
        s += col.iter().zip(w).map(|(x, wi)| wi * x * x).sum::<f64>();
    }
    s
}

/// `Aᵀ W B` with W = diag(weights).
pub fn weighted_cross(a: &DMatrix<f64>, b: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let mut wb = b.clone();
    for (mut row, w) in wb.row_iter_mut().zip(weights) {
        row *= *w;
    }
    a.transpose() * wb
}

#[derive(Clone, Debug)]
pub struct PodBasis {
    pub kind: FieldKind,
    pub components: usize,
    pub weights: Vec<f64>,
    /// N_h × N_r, columns orthonormal in the weighted inner product.
    pub modes: DMatrix<f64>,
    /// Full spectrum, descending.
    pub eigenvalues: Vec<f64>,
    /// Cumulative energy fraction after 1, 2, … modes, over the full spectrum.
    pub cumulative_energy: Vec<f64>,
    pub mesh_id: u64,
}

impl PodBasis {
    pub fn rank(&self) -> usize {
        self.modes.ncols()
    }

    pub fn mode_field(&self, i: usize) -> Field {
        Field::from_parts(self.mesh_id, self.components, self.modes.column(i).iter().copied().collect())
    }

    /// Largest deviation of the weighted Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = weighted_cross(&self.modes, &self.modes, &self.weights);
        let n = g.nrows();
        (g - DMatrix::identity(n, n)).amax()
    }

    /// Orthonormal basis assembled from explicit fields.
    pub fn from_modes(kind: FieldKind, mesh: &Mesh, modes: &[Field]) -> Result<PodBasis> {
        let set = SnapshotSet::from_fields(kind, mesh, modes)?;
        let n = modes.len();
        Ok(PodBasis {
            kind,
            components: set.components,
            weights: set.weights,
            modes: set.data,
            eigenvalues: vec![1.0; n],
            cumulative_energy: (1..=n).map(|i| i as f64 / n as f64).collect(),
            mesh_id: mesh.id(),
        })
    }
}

/// How many modes to retain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truncation {
    /// Smallest rank whose cumulative eigenvalue fraction reaches the value.
    Energy(f64),
    Rank(usize),
}

/// Weighted correlation matrix C_ij = ⟨w_i, w_j⟩.
pub fn assemble_correlation(set: &SnapshotSet) -> Result<DMatrix<f64>> {
    if set.n_snapshots() == 0 {
        return Err(RomError::data("empty snapshot set"));
    }
    if !set.data.iter().all(|v| v.is_finite()) {
        return Err(RomError::data("snapshot set contains non-finite values"));
    }
    let c = weighted_cross(&set.data, &set.data, &set.weights);
    Ok((&c + c.transpose()) * 0.5)
}

/// Symmetric eigendecomposition with eigenvalues sorted descending.
/// Small negative eigenvalues (above −1e-12·λ₁) are clipped to zero.
pub fn eigendecompose(c: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if c.nrows() != c.ncols() || c.nrows() == 0 {
        return Err(RomError::dim("correlation matrix must be square and nonempty"));
    }
    let scale = c.amax().max(f64::MIN_POSITIVE);
    let asym = (c - c.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(RomError::data(format!("matrix is not symmetric (defect {asym:.3e})")));
    }
    let eig = SymmetricEigen::new(c.clone());
    let mut order: Vec<usize> = (0..c.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lambda1 = eig.eigenvalues[order[0]].max(0.0);
    let mut values = Vec::with_capacity(order.len());
    let mut vectors = DMatrix::zeros(c.nrows(), c.ncols());
    for (dst, &src) in order.iter().enumerate() {
        let mut l = eig.eigenvalues[src];
        if l < 0.0 {
            if l < -1e-12 * lambda1 {
                return Err(RomError::data(format!(
                    "matrix is not positive semidefinite (eigenvalue {l:.3e})"
                )));
            }
            l = 0.0;
        }
        values.push(l);
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Number of eigenvalues above 1e-14·λ₁.
pub fn numerical_rank(eigenvalues: &[f64]) -> usize {
    let l1 = eigenvalues.first().copied().unwrap_or(0.0);
    if l1 <= 0.0 {
        return 0;
    }
    eigenvalues.iter().take_while(|&&l| l > 1e-14 * l1).count()
}

pub fn cumulative_energy(eigenvalues: &[f64]) -> Vec<f64> {
    let total: f64 = eigenvalues.iter().sum();
    let mut acc = 0.0;
    eigenvalues
        .iter()
        .map(|l| {
            acc += l;
            if total > 0.0 {
                acc / total
            } else {
                0.0
            }
        })
        .collect()
}

/// Smallest rank whose cumulative energy reaches `threshold`.
pub fn truncate_by_energy(eigenvalues: &[f64], threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(RomError::config(format!("energy threshold {threshold} outside (0, 1]")));
    }
    let total: f64 = eigenvalues.iter().sum();
    if !(total > 0.0) {
        return Err(RomError::data("eigenvalue spectrum carries no energy"));
    }
    let target = threshold * total * (1.0 - 1e-12);
    let mut acc = 0.0;
    for (i, l) in eigenvalues.iter().enumerate() {
        acc += l;
        if acc >= target {
            return Ok(i + 1);
        }
    }
    Ok(eigenvalues.len())
}

/// Modes φ_i = S W_i / √λ_i, then re-orthonormalised in the weighted inner
/// product (two Gram–Schmidt sweeps) to remove the round-off that the
/// squared conditioning of the correlation matrix introduces.
pub fn compute_modes(
    set: &SnapshotSet,
    eigenvalues: &[f64],
    eigenvectors: &DMatrix<f64>,
    rank: usize,
) -> Result<PodBasis> {
    let usable = numerical_rank(eigenvalues);
    if rank > usable {
        return Err(RomError::Rank {
            requested: rank,
            first_defective: usable,
        });
    }
    let mut modes = DMatrix::zeros(set.n_dofs(), rank);
    for i in 0..rank {
        let col = &set.data * eigenvectors.column(i) / eigenvalues[i].sqrt();
        modes.set_column(i, &col);
    }
    orthonormalize(&mut modes, &set.weights)?;
    Ok(PodBasis {
        kind: set.kind,
        components: set.components,
        weights: set.weights.clone(),
        modes,
        eigenvalues: eigenvalues.to_vec(),
        cumulative_energy: cumulative_energy(eigenvalues),
        mesh_id: set.mesh_id,
    })
}

/// In-place weighted modified Gram–Schmidt, two sweeps. Fails on a column
/// that is numerically dependent on its predecessors.
pub fn orthonormalize(m: &mut DMatrix<f64>, weights: &[f64]) -> Result<()> {
    for _sweep in 0..2 {
        for i in 0..m.ncols() {
            for j in 0..i {
                let proj = weighted_dot(&m.column(j).into_owned(), &m.column(i).into_owned(), weights);
                let cj = m.column(j).into_owned();
                m.column_mut(i).axpy(-proj, &cj, 1.0);
            }
            let n = weighted_dot(&m.column(i).into_owned(), &m.column(i).into_owned(), weights).sqrt();
            if !(n > 0.0) || !n.is_finite() {
                return Err(RomError::data(format!("column {i} is numerically dependent")));
            }
            m.column_mut(i).scale_mut(1.0 / n);
        }
    }
    Ok(())
}

pub fn weighted_dot(a: &DVector<f64>, b: &DVector<f64>, w: &[f64]) -> f64 {
    a.iter().zip(b.iter()).zip(w).map(|((x, y), wi)| wi * x * y).sum()
}

/// Method-of-snapshots POD with truncation.
pub fn standard_pod(set: &SnapshotSet, truncation: Truncation) -> Result<PodBasis> {
    let c = assemble_correlation(set)?;
    let (lambda, w) = eigendecompose(&c)?;
    let rank = match truncation {
        Truncation::Energy(t) => truncate_by_energy(&lambda, t)?.min(numerical_rank(&lambda)),
        Truncation::Rank(r) => r,
    };
    compute_modes(set, &lambda, &w, rank)
}

/// Result of a nested POD, with the size of the intermediate matrix.
#[derive(Clone, Debug)]
pub struct NestedPod {
    pub basis: PodBasis,
    pub local_ranks: Vec<usize>,
    pub nested_columns: usize,
}

/// Two-stage POD: a local POD per parameter, truncated by `local_threshold`
/// and scaled by the local eigenvalues, then a global POD of the
/// concatenated weighted modes.
pub fn nested_pod(
    local_sets: &[SnapshotSet],
    local_threshold: f64,
    truncation: Truncation,
) -> Result<NestedPod> {
    let first = local_sets
        .first()
        .ok_or_else(|| RomError::data("nested POD needs at least one local set"))?;
    let mut columns: Vec<DVector<f64>> = Vec::new();
    let mut local_ranks = Vec::with_capacity(local_sets.len());
    for (k, set) in local_sets.iter().enumerate() {
        if set.n_dofs() != first.n_dofs() || set.mesh_id != first.mesh_id {
            return Err(RomError::dim("local snapshot sets live on different spaces"));
        }
        let c = assemble_correlation(set)?;
        let (lambda, w) = eigendecompose(&c)?;
        let total: f64 = lambda.iter().sum();
        if !(total > 0.0) {
            let mu = set.params.first().cloned().unwrap_or_default();
            return Err(RomError::data(format!("local set {k} (μ = {mu:?}) has zero energy")));
        }
        let r = truncate_by_energy(&lambda, local_threshold)?.min(numerical_rank(&lambda));
        let local = compute_modes(set, &lambda, &w, r)?;
        for i in 0..r {
            columns.push(local.modes.column(i) * lambda[i]);
        }
        local_ranks.push(r);
    }
    let data = DMatrix::from_columns(&columns);
    let nested = SnapshotSet {
        kind: first.kind,
        components: first.components,
        weights: first.weights.clone(),
        data,
        params: Vec::new(),
        times: Vec::new(),
        mesh_id: first.mesh_id,
    };
    let basis = standard_pod(&nested, truncation)?;
    Ok(NestedPod {
        basis,
        local_ranks,
        nested_columns: columns.len(),
    })
}

/// Leading-order flop counts of the eigenproblems: the standard POD of the
/// full `Nt·Np` correlation matrix versus `Np` local problems plus the
/// eigenproblem of the nested matrix.
pub fn cost_model(nt: u64, np: u64, local_rank: u64) -> (f64, f64) {
    let standard = ((nt * np) as f64).powi(3);
    let nested = (nt as f64).powi(3) * np as f64 + ((local_rank * np) as f64).powi(3);
    (standard, nested)
}

/// Relative L2 residual of projecting every snapshot onto the basis:
/// sqrt(Σ‖w − ΠΦ w‖² / Σ‖w‖²).
pub fn reconstruction_error(set: &SnapshotSet, basis: &PodBasis) -> Result<f64> {
    if set.n_dofs() != basis.modes.nrows() {
        return Err(RomError::dim("basis and snapshots have different sizes"));
    }
    let total = set.total_energy();
    if !(total > 0.0) {
        return Ok(0.0);
    }
    let coeff = weighted_cross(&basis.modes, &set.data, &set.weights);
    let residual = &set.data - &basis.modes * coeff;
    Ok((weighted_gram_diag_sum(&residual, &set.weights) / total).sqrt())
}

/// Principal angles (radians, ascending) between the column spans of `a`
/// and `b` in the weighted inner product. Computed from sines so that
/// angles near zero are resolved to round-off.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>, weights: &[f64]) -> Result<Vec<f64>> {
    let mut qa = a.clone();
    let mut qb = b.clone();
    orthonormalize(&mut qa, weights)?;
    orthonormalize(&mut qb, weights)?;
    let (small, large) = if qb.ncols() <= qa.ncols() { (qb, qa) } else { (qa, qb) };
    let resid = &small - &large * weighted_cross(&large, &small, weights);
    let mut scaled = resid;
    for (mut row, w) in scaled.row_iter_mut().zip(weights) {
        row *= w.sqrt();
    }
    let sv = scaled.svd(false, false).singular_values;
    let mut angles: Vec<f64> = sv.iter().map(|s| s.min(1.0).asin()).collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}
