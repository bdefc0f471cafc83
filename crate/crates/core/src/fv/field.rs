use crate::error::{Result, RomError};
use crate::fv::mesh::Mesh;

/// Cell-centred field with one (scalar) or two (2D vector) components.
/// Values are stored cell-major, component-minor.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    mesh_id: u64,
    components: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(mesh: &Mesh, components: usize) -> Field {
        Field {
            mesh_id: mesh.id(),
            components,
            values: vec![0.0; mesh.n_cells() * components],
        }
    }

    pub fn from_values(mesh: &Mesh, components: usize, values: Vec<f64>) -> Result<Field> {
        if components == 0 || components > 2 {
            return Err(RomError::dim(format!("unsupported component count {components}")));
        }
        if values.len() != mesh.n_cells() * components {
            return Err(RomError::dim(format!(
                "expected {} values, got {}",
                mesh.n_cells() * components,
                values.len()
            )));
        }
        Ok(Field {
            mesh_id: mesh.id(),
            components,
            values,
        })
    }

    /// Raw constructor used by deserialisation, where only the mesh id is known.
    pub(crate) fn from_parts(mesh_id: u64, components: usize, values: Vec<f64>) -> Field {
        Field {
            mesh_id,
            components,
            values,
        }
    }

    pub fn scalar_fn(mesh: &Mesh, f: impl Fn(f64, f64) -> f64) -> Field {
        let values = (0..mesh.n_cells())
            .map(|c| {
                let [x, y] = mesh.center(c);
                f(x, y)
            })
            .collect();
        Field {
            mesh_id: mesh.id(),
            components: 1,
            values,
        }
    }

    pub fn vector_fn(mesh: &Mesh, f: impl Fn(f64, f64) -> [f64; 2]) -> Field {
        let mut values = Vec::with_capacity(2 * mesh.n_cells());
        for c in 0..mesh.n_cells() {
            let [x, y] = mesh.center(c);
            values.extend_from_slice(&f(x, y));
        }
        Field {
            mesh_id: mesh.id(),
            components: 2,
            values,
        }
    }

    pub fn constant(mesh: &Mesh, value: &[f64]) -> Field {
        let mut values = Vec::with_capacity(value.len() * mesh.n_cells());
        for _ in 0..mesh.n_cells() {
            values.extend_from_slice(value);
        }
        Field {
            mesh_id: mesh.id(),
            components: value.len(),
            values,
        }
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn n_cells(&self) -> usize {
        self.values.len() / self.components
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, cell: usize, comp: usize) -> f64 {
        self.values[cell * self.components + comp]
    }

    #[inline]
    pub fn set(&mut self, cell: usize, comp: usize, v: f64) {
        self.values[cell * self.components + comp] = v;
    }

    pub fn component(&self, comp: usize) -> Field {
        Field {
            mesh_id: self.mesh_id,
            components: 1,
            values: self
                .values
                .chunks(self.components)
                .map(|c| c[comp])
                .collect(),
        }
    }

    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if self.mesh_id != mesh.id() || self.n_cells() != mesh.n_cells() {
            return Err(RomError::dim("field does not live on this mesh"));
        }
        Ok(())
    }

    pub fn check_compatible(&self, other: &Field) -> Result<()> {
        if self.mesh_id != other.mesh_id {
            return Err(RomError::dim("fields live on different meshes"));
        }
        if self.components != other.components {
            return Err(RomError::dim(format!(
                "component mismatch: {} vs {}",
                self.components, other.components
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// self += alpha * other
    pub fn axpy(&mut self, alpha: f64, other: &Field) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn scaled(&self, alpha: f64) -> Field {
        let mut f = self.clone();
        f.scale(alpha);
        f
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}
