use crate::error::{Result, RomError};
use crate::fv::field::Field;
use crate::fv::mesh::Mesh;

#[derive(Clone, Debug, PartialEq)]
pub enum BcKind {
    /// Prescribed face value, one entry per component.
    Dirichlet(Vec<f64>),
    /// Zero normal gradient: the face takes the owner cell value.
    NeumannZero,
    /// Outflow: zero-gradient for transported quantities.
    Outlet,
}

/// One condition per mesh patch, for a field with a fixed component count.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryConditions {
    components: usize,
    kinds: Vec<BcKind>,
}

impl BoundaryConditions {
    /// Every patch must appear exactly once in `conditions`.
    pub fn new(mesh: &Mesh, components: usize, conditions: &[(&str, BcKind)]) -> Result<Self> {
        let mut kinds: Vec<Option<BcKind>> = vec![None; mesh.patches.len()];
        for (name, kind) in conditions {
            let id = mesh
                .patch_id(name)
                .ok_or_else(|| RomError::config(format!("unknown patch `{name}`")))?;
            if kinds[id].is_some() {
                return Err(RomError::config(format!("patch `{name}` has two conditions")));
            }
            if let BcKind::Dirichlet(v) = kind {
                if v.len() != components {
                    return Err(RomError::dim(format!(
                        "Dirichlet value on `{name}` has {} components, field has {components}",
                        v.len()
                    )));
                }
            }
            kinds[id] = Some(kind.clone());
        }
        let kinds = kinds
            .into_iter()
            .enumerate()
            .map(|(i, k)| {
                k.ok_or_else(|| {
                    RomError::config(format!("patch `{}` has no condition", mesh.patches[i].name))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BoundaryConditions { components, kinds })
    }

    pub fn uniform(mesh: &Mesh, components: usize, kind: BcKind) -> Self {
        BoundaryConditions {
            components,
            kinds: vec![kind; mesh.patches.len()],
        }
    }

    pub fn zero_gradient(mesh: &Mesh, components: usize) -> Self {
        Self::uniform(mesh, components, BcKind::NeumannZero)
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn kind(&self, patch: usize) -> &BcKind {
        &self.kinds[patch]
    }

    pub fn is_dirichlet(&self, patch: usize) -> bool {
        matches!(self.kinds[patch], BcKind::Dirichlet(_))
    }

    pub fn has_dirichlet(&self) -> bool {
        self.kinds.iter().any(|k| matches!(k, BcKind::Dirichlet(_)))
    }

    /// Same kinds, all Dirichlet values set to zero.
    pub fn homogeneous(&self) -> Self {
        let kinds = self
            .kinds
            .iter()
            .map(|k| match k {
                BcKind::Dirichlet(v) => BcKind::Dirichlet(vec![0.0; v.len()]),
                other => other.clone(),
            })
            .collect();
        BoundaryConditions {
            components: self.components,
            kinds,
        }
    }

    /// Replaces the Dirichlet value on one patch.
    pub fn with_value(&self, mesh: &Mesh, patch: &str, value: &[f64]) -> Result<Self> {
        let id = mesh
            .patch_id(patch)
            .ok_or_else(|| RomError::config(format!("unknown patch `{patch}`")))?;
        if !self.is_dirichlet(id) {
            return Err(RomError::config(format!("patch `{patch}` is not a Dirichlet patch")));
        }
        if value.len() != self.components {
            return Err(RomError::dim("Dirichlet value has the wrong component count"));
        }
        let mut out = self.clone();
        out.kinds[id] = BcKind::Dirichlet(value.to_vec());
        Ok(out)
    }

    /// Replaces the condition on patch `id`, keeping the component count.
    pub fn set_kind(&mut self, id: usize, kind: BcKind) -> Result<()> {
        if let BcKind::Dirichlet(v) = &kind {
            if v.len() != self.components {
                return Err(RomError::dim("Dirichlet value has the wrong component count"));
            }
        }
        self.kinds[id] = kind;
        Ok(())
    }

    /// Dirichlet value on patch `id`, if any.
    pub fn dirichlet_value(&self, id: usize) -> Option<&[f64]> {
        match &self.kinds[id] {
            BcKind::Dirichlet(v) => Some(v),
            _ => None,
        }
    }

    /// Face value seen by the discrete operators on boundary face `face`.
    #[inline]
    pub fn face_value(&self, mesh: &Mesh, field: &Field, face: usize, comp: usize) -> f64 {
        let bf = &mesh.boundary_faces[face];
        match &self.kinds[bf.patch] {
            BcKind::Dirichlet(v) => v[comp],
            BcKind::NeumannZero | BcKind::Outlet => field.get(bf.cell, comp),
        }
    }

    /// Cell weights of the face value on a non-Dirichlet boundary face
    /// (empty for Dirichlet faces, whose value is data).
    pub fn face_weights(&self, mesh: &Mesh, face: usize) -> Vec<(usize, f64)> {
        let bf = &mesh.boundary_faces[face];
        match &self.kinds[bf.patch] {
            BcKind::Dirichlet(_) => Vec::new(),
            BcKind::NeumannZero | BcKind::Outlet => vec![(bf.cell, 1.0)],
        }
    }

    pub fn check(&self, mesh: &Mesh, field: &Field) -> Result<()> {
        if self.kinds.len() != mesh.patches.len() {
            return Err(RomError::dim("boundary conditions built for another mesh"));
        }
        if self.components != field.components() {
            return Err(RomError::dim("boundary condition component count differs from field"));
        }
        Ok(())
    }
}
