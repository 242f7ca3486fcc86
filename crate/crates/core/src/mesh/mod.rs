//! Mesh samples and their file formats.
//!
//! Two plain-text formats are read and written:
//!
//! * OFF with extra `ATTRIBUTE` and `TARGET` blocks after the faces
//!   (triangles only);
//! * legacy VTK `UNSTRUCTURED_GRID` with ASCII `POINT_DATA` (triangles or
//!   tetrahedra).

mod off;
mod text;
mod vtk;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::pga::{dot3, norm3, GeometricObject, RigidMotion, Vec3};

pub use off::{read_off, write_off, AttributeEncoding};
pub use vtk::{read_vtk, write_vtk};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeshError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unsupported cell with {vertices} vertices")]
    UnsupportedCell { line: usize, vertices: usize },
    #[error("line {line}: mixed cell types ({first} and {second})")]
    MixedCells { line: usize, first: String, second: String },
    #[error("cell {cell} references vertex {index} but the mesh has {n} vertices")]
    CellIndex { cell: usize, index: usize, n: usize },
    #[error("descriptor `{name}` has {found} values for {n} vertices")]
    DescriptorLength { name: String, found: usize, n: usize },
    #[error("descriptor `{0}` appears twice")]
    DuplicateDescriptor(String),
    #[error("mesh has no vertices")]
    Empty,
    #[error("mesh has no descriptors")]
    NoDescriptors,
    #[error("vertex {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("unknown mesh format for {0}")]
    UnknownFormat(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cells {
    Triangles(Vec<[usize; 3]>),
    Tetrahedra(Vec<[usize; 4]>),
}

impl Cells {
    pub fn len(&self) -> usize {
        match self {
            Cells::Triangles(c) => c.len(),
            Cells::Tetrahedra(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_surface(&self) -> bool {
        matches!(self, Cells::Triangles(_))
    }

    fn indices(&self) -> Box<dyn Iterator<Item = (usize, &[usize])> + '_> {
        match self {
            Cells::Triangles(c) => Box::new(c.iter().enumerate().map(|(i, t)| (i, &t[..]))),
            Cells::Tetrahedra(c) => Box::new(c.iter().enumerate().map(|(i, t)| (i, &t[..]))),
        }
    }
}

/// One named per-vertex geometric attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub name: String,
    pub values: Vec<GeometricObject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    None,
    VertexVectors(Vec<Vec3>),
    VertexScalars(Vec<f64>),
    MeshScalar(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSample {
    pub positions: Vec<Vec3>,
    pub cells: Cells,
    pub descriptors: Vec<Descriptor>,
    pub target: Target,
}

/// Name under which vertex normals are stored.
pub const NORMAL_DESCRIPTOR: &str = "normal";
/// Schema entry that embeds vertex positions as points.
pub const POSITION_DESCRIPTOR: &str = "position";

impl MeshSample {
    pub fn n_vertices(&self) -> usize {
        self.positions.len()
    }

    pub fn descriptor(&self, name: &str) -> Option<&Descriptor> {
        self.descriptors.iter().find(|d| d.name == name)
    }

    /// Checks cell indices, attribute lengths, finiteness and that surface
    /// meshes carry normals.
    pub fn validate(&self) -> Result<(), MeshError> {
        let n = self.n_vertices();
        if n == 0 {
            return Err(MeshError::Empty);
        }
        if let Some(i) = self.positions.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(MeshError::NonFinite(i));
        }
        for (cell, idx) in self.cells.indices() {
            if let Some(&index) = idx.iter().find(|&&i| i >= n) {
                return Err(MeshError::CellIndex { cell, index, n });
            }
        }
        if self.descriptors.is_empty() {
            return Err(MeshError::NoDescriptors);
        }
        for (i, d) in self.descriptors.iter().enumerate() {
            if d.values.len() != n {
                return Err(MeshError::DescriptorLength { name: d.name.clone(), found: d.values.len(), n });
            }
            if self.descriptors[..i].iter().any(|e| e.name == d.name) {
                return Err(MeshError::DuplicateDescriptor(d.name.clone()));
            }
        }
        let target_len = match &self.target {
            Target::VertexVectors(v) => Some(v.len()),
            Target::VertexScalars(v) => Some(v.len()),
            _ => None,
        };
        if let Some(found) = target_len.filter(|&l| l != n) {
            return Err(MeshError::DescriptorLength { name: "target".into(), found, n });
        }
        if self.cells.is_surface() && self.descriptor(NORMAL_DESCRIPTOR).is_none() {
            return Err(MeshError::Parse { line: 0, message: "surface mesh without normals".into() });
        }
        Ok(())
    }

    /// Adds area-weighted vertex normals (as planes through each vertex)
    /// when a surface mesh lacks them.
    pub fn ensure_normals(&mut self) {
        if let Cells::Triangles(tris) = &self.cells {
            if self.descriptor(NORMAL_DESCRIPTOR).is_none() {
                let normals = vertex_normals(&self.positions, tris);
                let values = self
                    .positions
                    .iter()
                    .zip(normals)
                    .map(|(&p, n)| GeometricObject::Plane { normal: n, offset: -dot3(n, p) })
                    .collect();
                self.descriptors.push(Descriptor { name: NORMAL_DESCRIPTOR.into(), values });
            }
        }
    }

    /// The sample moved by `g`: geometry, descriptors and vector targets.
    pub fn transformed(&self, g: &RigidMotion) -> MeshSample {
        MeshSample {
            positions: self.positions.iter().map(|&p| g.apply_point(p)).collect(),
            cells: self.cells.clone(),
            descriptors: self
                .descriptors
                .iter()
                .map(|d| Descriptor {
                    name: d.name.clone(),
                    values: d.values.iter().map(|o| transform_object(g, o)).collect(),
                })
                .collect(),
            target: match &self.target {
                Target::VertexVectors(v) => Target::VertexVectors(v.iter().map(|&x| g.apply_direction(x)).collect()),
                t => t.clone(),
            },
        }
    }
}

pub fn transform_object(g: &RigidMotion, obj: &GeometricObject) -> GeometricObject {
    match *obj {
        GeometricObject::Scalar { value } => GeometricObject::Scalar { value },
        GeometricObject::Plane { normal, offset } => {
            let (normal, offset) = g.apply_plane(normal, offset);
            GeometricObject::Plane { normal, offset }
        }
        GeometricObject::Point { position } => GeometricObject::Point { position: g.apply_point(position) },
        GeometricObject::Translation { shift } => GeometricObject::Translation { shift: g.apply_direction(shift) },
    }
}

/// Unit normals from the area-weighted sum of incident face normals;
/// isolated vertices get `+z`.
pub fn vertex_normals(positions: &[Vec3], tris: &[[usize; 3]]) -> Vec<Vec3> {
    let mut acc = vec![[0.0; 3]; positions.len()];
    for t in tris {
        let (a, b, c) = (positions[t[0]], positions[t[1]], positions[t[2]]);
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        // Cross product length is twice the area, so this is area weighting.
        let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
        for &i in t {
            for a in 0..3 {
                acc[i][a] += n[a];
            }
        }
    }
    acc.into_iter()
        .map(|n| {
            let len = norm3(n);
            if len > 0.0 {
                [n[0] / len, n[1] / len, n[2] / len]
            } else {
                [0.0, 0.0, 1.0]
            }
        })
        .collect()
}

/// Reads `.off` or `.vtk` by extension.
pub fn load_mesh(path: &Path) -> Result<MeshSample, MeshError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| MeshError::Io { path: path.display().to_string(), message: e.to_string() })?;
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("off") => read_off(&text),
        Some("vtk") => read_vtk(&text),
        _ => Err(MeshError::UnknownFormat(path.display().to_string())),
    }
}

/// Writes `.off` (base64 attributes) or `.vtk` by extension.
pub fn save_mesh(sample: &MeshSample, path: &Path) -> Result<(), MeshError> {
    let text = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("off") => write_off(sample, AttributeEncoding::Base64)?,
        Some("vtk") => write_vtk(sample)?,
        _ => return Err(MeshError::UnknownFormat(path.display().to_string())),
    };
    std::fs::write(path, text).map_err(|e| MeshError::Io { path: path.display().to_string(), message: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normals_of_a_tetrahedron_are_unit() {
        let pos = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let tris = vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]];
        let n = vertex_normals(&pos, &tris);
        for v in &n {
            assert!((norm3(*v) - 1.0).abs() < 1e-15);
        }
        // Outward orientation: the origin's normal points into the negative octant.
        assert!(n[0].iter().all(|&c| c < 0.0));
    }
}
