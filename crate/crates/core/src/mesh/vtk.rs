use std::fmt::Write as _;

use super::text::Tokens;
use super::{Cells, Descriptor, MeshError, MeshSample, Target};
use crate::pga::{dot3, GeometricObject, Vec3};

const VTK_TRIANGLE: usize = 5;
const VTK_TETRA: usize = 10;

fn is_target(name: &str) -> bool {
    name.starts_with("target")
}

fn check_type(t: &mut Tokens<'_>) -> Result<(), MeshError> {
    let ty = t.next("data type")?;
    match ty {
        "float" | "double" | "int" | "long" => Ok(()),
        _ => Err(t.error(format!("unsupported data type `{ty}`"))),
    }
}

struct Reader<'a> {
    t: Tokens<'a>,
    n: usize,
    positions: Vec<Vec3>,
    descriptors: Vec<Descriptor>,
    target: Target,
}

impl Reader<'_> {
    fn values(&mut self, count: usize, what: &str) -> Result<Vec<f64>, MeshError> {
        (0..count).map(|_| self.t.f64(what)).collect()
    }

    fn set_target(&mut self, target: Target) -> Result<(), MeshError> {
        if !matches!(self.target, Target::None) {
            return Err(self.t.error("more than one target array"));
        }
        self.target = target;
        Ok(())
    }

    fn add(&mut self, name: &str, values: Vec<GeometricObject>) -> Result<(), MeshError> {
        if self.descriptors.iter().any(|d| d.name == name) {
            return Err(self.t.error(format!("array `{name}` appears twice")));
        }
        self.descriptors.push(Descriptor { name: name.to_string(), values });
        Ok(())
    }

    fn planes_through_vertices(&self, dirs: &[f64]) -> Vec<GeometricObject> {
        dirs.chunks_exact(3)
            .zip(&self.positions)
            .map(|(d, &p)| {
                let normal = [d[0], d[1], d[2]];
                GeometricObject::Plane { normal, offset: -dot3(normal, p) }
            })
            .collect()
    }

    fn point_field(&mut self, name: &str, comps: usize, vals: Vec<f64>) -> Result<(), MeshError> {
        match (comps, is_target(name)) {
            (1, true) => self.set_target(Target::VertexScalars(vals)),
            (3, true) => {
                self.set_target(Target::VertexVectors(vals.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()))
            }
            (1, false) => self.add(name, vals.into_iter().map(|value| GeometricObject::Scalar { value }).collect()),
            (3, false) => self.add(
                name,
                vals.chunks_exact(3).map(|c| GeometricObject::Point { position: [c[0], c[1], c[2]] }).collect(),
            ),
            (4, false) => self.add(
                name,
                vals.chunks_exact(4)
                    .map(|c| GeometricObject::Plane { normal: [c[0], c[1], c[2]], offset: c[3] })
                    .collect(),
            ),
            _ => Err(self.t.error(format!("cannot interpret field `{name}` with {comps} components"))),
        }
    }

    fn point_data(&mut self) -> Result<(), MeshError> {
        while !self.t.at_end() {
            let kw = self.t.next("point data array")?;
            match kw {
                "SCALARS" => {
                    let name = self.t.next("array name")?.to_string();
                    check_type(&mut self.t)?;
                    if self.t.peek().is_some_and(|p| p.chars().all(|c| c.is_ascii_digit())) {
                        let comps = self.t.usize("component count")?;
                        if comps != 1 {
                            return Err(self.t.error(format!("SCALARS `{name}` with {comps} components")));
                        }
                    }
                    self.t.expect("LOOKUP_TABLE")?;
                    self.t.next("lookup table name")?;
                    let vals = self.values(self.n, "scalar value")?;
                    self.point_field(&name, 1, vals)?;
                }
                "VECTORS" | "NORMALS" => {
                    let name = self.t.next("array name")?.to_string();
                    check_type(&mut self.t)?;
                    let vals = self.values(3 * self.n, "vector component")?;
                    if kw == "VECTORS" && is_target(&name) {
                        self.point_field(&name, 3, vals)?;
                    } else {
                        let planes = self.planes_through_vertices(&vals);
                        if planes
                            .iter()
                            .any(|p| matches!(p, GeometricObject::Plane { normal, .. } if normal == &[0.0; 3]))
                        {
                            return Err(self.t.error(format!("array `{name}` has a zero direction")));
                        }
                        self.add(&name, planes)?;
                    }
                }
                "FIELD" => {
                    self.t.next("field name")?;
                    let arrays = self.t.usize("array count")?;
                    for _ in 0..arrays {
                        let name = self.t.next("array name")?.to_string();
                        let comps = self.t.usize("component count")?;
                        let tuples = self.t.usize("tuple count")?;
                        check_type(&mut self.t)?;
                        if tuples != self.n {
                            return Err(self
                                .t
                                .error(format!("field `{name}` has {tuples} tuples for {} points", self.n)));
                        }
                        let vals = self.values(comps * tuples, "field value")?;
                        self.point_field(&name, comps, vals)?;
                    }
                }
                other => return Err(self.t.error(format!("unsupported point data section `{other}`"))),
            }
        }
        Ok(())
    }
}

pub fn read_vtk(text: &str) -> Result<MeshSample, MeshError> {
    let header: Vec<&str> = text.lines().take(3).collect();
    if header.len() < 3 || !header[0].starts_with("# vtk DataFile") {
        return Err(MeshError::Parse { line: 1, message: "missing `# vtk DataFile` header".into() });
    }
    if header[2].trim() != "ASCII" {
        return Err(MeshError::Parse {
            line: 3,
            message: format!("only ASCII files are supported, found `{}`", header[2].trim()),
        });
    }
    let mut t = Tokens::new(text, 3);
    t.expect("DATASET")?;
    let kind = t.next("dataset type")?;
    if kind != "UNSTRUCTURED_GRID" {
        return Err(t.error(format!("unsupported dataset `{kind}`")));
    }
    t.expect("POINTS")?;
    let n = t.usize("point count")?;
    check_type(&mut t)?;
    let mut positions = Vec::with_capacity(n);
    for _ in 0..n {
        positions.push([t.f64("coordinate")?, t.f64("coordinate")?, t.f64("coordinate")?]);
    }
    t.expect("CELLS")?;
    let m = t.usize("cell count")?;
    let size = t.usize("cell list size")?;
    let mut raw: Vec<(usize, Vec<usize>)> = Vec::with_capacity(m);
    let mut used = 0;
    for cell in 0..m {
        let line = t.line_no();
        let count = t.usize("cell size")?;
        let mut idx = Vec::with_capacity(count);
        for _ in 0..count {
            let i = t.usize("vertex index")?;
            if i >= n {
                return Err(MeshError::CellIndex { cell, index: i, n });
            }
            idx.push(i);
        }
        used += count + 1;
        raw.push((line, idx));
    }
    if used != size {
        return Err(t.error(format!("CELLS declares size {size}, cells use {used}")));
    }
    t.expect("CELL_TYPES")?;
    if t.usize("cell type count")? != m {
        return Err(t.error("CELL_TYPES count differs from CELLS"));
    }
    let mut tris = Vec::new();
    let mut tets = Vec::new();
    let mut first: Option<(usize, &str)> = None;
    for (line, idx) in &raw {
        let ty = t.usize("cell type")?;
        let (name, expected) = match ty {
            VTK_TRIANGLE => ("triangle", 3),
            VTK_TETRA => ("tetrahedron", 4),
            _ => return Err(MeshError::UnsupportedCell { line: *line, vertices: idx.len() }),
        };
        if idx.len() != expected {
            return Err(MeshError::Parse { line: *line, message: format!("{name} with {} vertices", idx.len()) });
        }
        match first {
            Some((_, f)) if f != name => {
                return Err(MeshError::MixedCells { line: *line, first: f.to_string(), second: name.to_string() })
            }
            None => first = Some((ty, name)),
            _ => {}
        }
        if ty == VTK_TRIANGLE {
            tris.push([idx[0], idx[1], idx[2]]);
        } else {
            tets.push([idx[0], idx[1], idx[2], idx[3]]);
        }
    }
    let cells = if tets.is_empty() { Cells::Triangles(tris) } else { Cells::Tetrahedra(tets) };

    let mut r = Reader { t, n, positions, descriptors: Vec::new(), target: Target::None };
    if r.t.peek() == Some("FIELD") {
        r.t.next("FIELD")?;
        r.t.next("field name")?;
        let arrays = r.t.usize("array count")?;
        for _ in 0..arrays {
            let name = r.t.next("array name")?.to_string();
            let comps = r.t.usize("component count")?;
            let tuples = r.t.usize("tuple count")?;
            check_type(&mut r.t)?;
            if !(is_target(&name) && comps == 1 && tuples == 1) {
                return Err(r.t.error(format!("dataset field `{name}` is not a mesh-level target")));
            }
            let v = r.t.f64("target value")?;
            r.set_target(Target::MeshScalar(v))?;
        }
    }
    if !r.t.at_end() {
        r.t.expect("POINT_DATA")?;
        if r.t.usize("point count")? != n {
            return Err(r.t.error("POINT_DATA count differs from POINTS"));
        }
        r.point_data()?;
    }
    let mut sample = MeshSample { positions: r.positions, cells, descriptors: r.descriptors, target: r.target };
    sample.ensure_normals();
    sample.validate()?;
    Ok(sample)
}

pub fn write_vtk(sample: &MeshSample) -> Result<String, MeshError> {
    let n = sample.n_vertices();
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\nmesh sample\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {n} double");
    for p in &sample.positions {
        let _ = writeln!(s, "{} {} {}", p[0], p[1], p[2]);
    }
    let (rows, ty): (Vec<Vec<usize>>, usize) = match &sample.cells {
        Cells::Triangles(c) => (c.iter().map(|x| x.to_vec()).collect(), VTK_TRIANGLE),
        Cells::Tetrahedra(c) => (c.iter().map(|x| x.to_vec()).collect(), VTK_TETRA),
    };
    let size: usize = rows.iter().map(|r| r.len() + 1).sum();
    let _ = writeln!(s, "CELLS {} {size}", rows.len());
    for r in &rows {
        let idx: Vec<String> = r.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "{} {}", r.len(), idx.join(" "));
    }
    let _ = writeln!(s, "CELL_TYPES {}", rows.len());
    for _ in &rows {
        let _ = writeln!(s, "{ty}");
    }
    if let Target::MeshScalar(v) = sample.target {
        let _ = writeln!(s, "FIELD FieldData 1\ntarget 1 1 double\n{v}");
    }
    let _ = writeln!(s, "POINT_DATA {n}");
    let mut fields: Vec<(String, usize, Vec<f64>)> = Vec::new();
    for d in &sample.descriptors {
        if d.name.split_whitespace().count() != 1 || d.name.contains('#') || is_target(&d.name) {
            return Err(MeshError::Parse {
                line: 0,
                message: format!("descriptor name `{}` cannot be stored", d.name),
            });
        }
        let mut comps = None;
        let mut vals = Vec::new();
        for obj in &d.values {
            let (c, v): (usize, Vec<f64>) = match *obj {
                GeometricObject::Scalar { value } => (1, vec![value]),
                GeometricObject::Point { position } => (3, position.to_vec()),
                GeometricObject::Plane { normal, offset } => (4, vec![normal[0], normal[1], normal[2], offset]),
                GeometricObject::Translation { .. } => {
                    return Err(MeshError::Parse {
                        line: 0,
                        message: format!("translation descriptor `{}` has no VTK form", d.name),
                    })
                }
            };
            if comps.is_some_and(|x| x != c) {
                return Err(MeshError::Parse {
                    line: 0,
                    message: format!("descriptor `{}` mixes object kinds", d.name),
                });
            }
            comps = Some(c);
            vals.extend(v);
        }
        fields.push((d.name.clone(), comps.unwrap_or(1), vals));
    }
    match &sample.target {
        Target::VertexVectors(v) => {
            let _ = writeln!(s, "VECTORS target double");
            for x in v {
                let _ = writeln!(s, "{} {} {}", x[0], x[1], x[2]);
            }
        }
        Target::VertexScalars(v) => {
            let _ = writeln!(s, "SCALARS target double 1\nLOOKUP_TABLE default");
            for x in v {
                let _ = writeln!(s, "{x}");
            }
        }
        _ => {}
    }
    if !fields.is_empty() {
        let _ = writeln!(s, "FIELD FieldData {}", fields.len());
        for (name, comps, vals) in fields {
            let _ = writeln!(s, "{name} {comps} {n} double");
            for row in vals.chunks(comps) {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                let _ = writeln!(s, "{}", line.join(" "));
            }
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TET: &str = "# vtk DataFile Version 3.0\ntet\nASCII\nDATASET UNSTRUCTURED_GRID\nPOINTS 4 double\n0 0 0 1 0 0\n0 1 0 0 0 1\nCELLS 1 5\n4 0 1 2 3\nCELL_TYPES 1\n10\nPOINT_DATA 4\nSCALARS wall double 1\nLOOKUP_TABLE default\n0 1 2 3\nVECTORS target_velocity double\n1 0 0 1 0 0 1 0 0 1 0 0\nVECTORS axis float\n0 0 1 0 0 1 0 0 1 0 0 1\n";

    #[test]
    fn reads_a_tetrahedron() {
        let m = read_vtk(TET).unwrap();
        assert!(!m.cells.is_surface());
        assert_eq!(m.descriptors.len(), 2);
        assert!(matches!(m.target, Target::VertexVectors(ref v) if v.len() == 4));
        let axis = &m.descriptor("axis").unwrap().values[3];
        assert_eq!(*axis, GeometricObject::Plane { normal: [0.0, 0.0, 1.0], offset: -1.0 });
    }

    #[test]
    fn roundtrip() {
        let m = read_vtk(TET).unwrap();
        assert_eq!(read_vtk(&write_vtk(&m).unwrap()).unwrap(), m);
        let mut mesh_level = m.clone();
        mesh_level.target = Target::MeshScalar(-0.25);
        assert_eq!(read_vtk(&write_vtk(&mesh_level).unwrap()).unwrap(), mesh_level);
    }

    #[test]
    fn rejects_mixed_and_unknown_cells() {
        let mixed =
            TET.replace("CELLS 1 5\n4 0 1 2 3\nCELL_TYPES 1\n10", "CELLS 2 9\n4 0 1 2 3\n3 0 1 2\nCELL_TYPES 2\n10 5");
        assert!(matches!(read_vtk(&mixed), Err(MeshError::MixedCells { line: 10, .. })));
        let quad = TET.replace("CELL_TYPES 1\n10", "CELL_TYPES 1\n9");
        assert!(matches!(read_vtk(&quad), Err(MeshError::UnsupportedCell { vertices: 4, .. })));
        let bad = TET.replace("SCALARS wall double 1", "COLOR_SCALARS wall 1");
        assert!(matches!(read_vtk(&bad), Err(MeshError::Parse { line: 13, .. })));
    }
}
