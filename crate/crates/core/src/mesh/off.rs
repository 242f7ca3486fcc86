use std::fmt::Write as _;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;

use super::text::Tokens;
use super::{Cells, Descriptor, MeshError, MeshSample, Target};
use crate::pga::GeometricObject;

/// How `ATTRIBUTE` payloads are stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttributeEncoding {
    /// One line of decimal values per vertex.
    Ascii,
    /// A single base64 token of little-endian `f64` values.
    Base64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Point,
    Plane,
    Scalar,
    Translation,
    TargetVector,
    TargetScalar,
}

impl Role {
    fn parse(s: &str) -> Option<Role> {
        Some(match s {
            "point" => Role::Point,
            "plane" => Role::Plane,
            "scalar" => Role::Scalar,
            "translation" => Role::Translation,
            "target_vector" => Role::TargetVector,
            "target_scalar" => Role::TargetScalar,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Role::Point => "point",
            Role::Plane => "plane",
            Role::Scalar => "scalar",
            Role::Translation => "translation",
            Role::TargetVector => "target_vector",
            Role::TargetScalar => "target_scalar",
        }
    }

    fn dim(self) -> usize {
        match self {
            Role::Scalar | Role::TargetScalar => 1,
            Role::Point | Role::Translation | Role::TargetVector => 3,
            Role::Plane => 4,
        }
    }
}

fn object(role: Role, v: &[f64]) -> GeometricObject {
    match role {
        Role::Point => GeometricObject::Point { position: [v[0], v[1], v[2]] },
        Role::Plane => GeometricObject::Plane { normal: [v[0], v[1], v[2]], offset: v[3] },
        Role::Translation => GeometricObject::Translation { shift: [v[0], v[1], v[2]] },
        _ => GeometricObject::Scalar { value: v[0] },
    }
}

fn flatten(obj: &GeometricObject) -> (Role, Vec<f64>) {
    match *obj {
        GeometricObject::Scalar { value } => (Role::Scalar, vec![value]),
        GeometricObject::Plane { normal, offset } => (Role::Plane, vec![normal[0], normal[1], normal[2], offset]),
        GeometricObject::Point { position } => (Role::Point, position.to_vec()),
        GeometricObject::Translation { shift } => (Role::Translation, shift.to_vec()),
    }
}

pub fn read_off(text: &str) -> Result<MeshSample, MeshError> {
    let mut t = Tokens::new(text, 0);
    t.expect("OFF")?;
    let nv = t.usize("vertex count")?;
    let nf = t.usize("face count")?;
    t.usize("edge count")?;
    let mut positions = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, toks) = t.rest_of_line("vertex coordinates")?;
        if toks.len() != 3 {
            return Err(MeshError::Parse {
                line,
                message: format!("vertex needs 3 coordinates, found {}", toks.len()),
            });
        }
        let mut p = [0.0; 3];
        for (c, s) in p.iter_mut().zip(&toks) {
            *c = super::text::parse_f64(s)
                .ok_or_else(|| MeshError::Parse { line, message: format!("bad coordinate `{s}`") })?;
        }
        positions.push(p);
    }
    let mut tris = Vec::with_capacity(nf);
    for f in 0..nf {
        let (line, toks) = t.rest_of_line("face")?;
        let count: usize =
            toks[0].parse().map_err(|_| MeshError::Parse { line, message: format!("bad face size `{}`", toks[0]) })?;
        if count != 3 {
            return Err(MeshError::UnsupportedCell { line, vertices: count });
        }
        if toks.len() != 4 {
            return Err(MeshError::Parse {
                line,
                message: format!("triangle needs 3 indices, found {}", toks.len() - 1),
            });
        }
        let mut tri = [0usize; 3];
        for (c, s) in tri.iter_mut().zip(&toks[1..]) {
            *c = s.parse().map_err(|_| MeshError::Parse { line, message: format!("bad vertex index `{s}`") })?;
            if *c >= nv {
                return Err(MeshError::CellIndex { cell: f, index: *c, n: nv });
            }
        }
        tris.push(tri);
    }

    let mut descriptors: Vec<Descriptor> = Vec::new();
    let mut target = Target::None;
    while !t.at_end() {
        let keyword = t.next("block keyword")?;
        match keyword {
            "ATTRIBUTE" => {
                let name = t.next("attribute name")?.to_string();
                let role_s = t.next("attribute role")?;
                let role = Role::parse(role_s).ok_or_else(|| t.error(format!("unknown attribute role `{role_s}`")))?;
                let dim = t.usize("attribute dimension")?;
                if dim != role.dim() {
                    return Err(t.error(format!(
                        "role {} has dimension {}, header says {dim}",
                        role.name(),
                        role.dim()
                    )));
                }
                let values = match t.next("attribute encoding")? {
                    "ascii" => {
                        let mut v = Vec::with_capacity(nv * dim);
                        for _ in 0..nv {
                            let (line, toks) = t.rest_of_line("attribute values")?;
                            if toks.len() != dim {
                                return Err(MeshError::Parse {
                                    line,
                                    message: format!(
                                        "attribute `{name}` needs {dim} values per vertex, found {}",
                                        toks.len()
                                    ),
                                });
                            }
                            for s in toks {
                                v.push(super::text::parse_f64(s).ok_or_else(|| MeshError::Parse {
                                    line,
                                    message: format!("bad value `{s}` in attribute `{name}`"),
                                })?);
                            }
                        }
                        v
                    }
                    "base64" => {
                        let payload = t.next("base64 payload")?;
                        let bytes =
                            STANDARD.decode(payload).map_err(|e| t.error(format!("attribute `{name}`: {e}")))?;
                        if bytes.len() != nv * dim * 8 {
                            return Err(t.error(format!(
                                "attribute `{name}` payload has {} bytes, expected {}",
                                bytes.len(),
                                nv * dim * 8
                            )));
                        }
                        let v: Vec<f64> =
                            bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
                        if v.iter().any(|x| !x.is_finite()) {
                            return Err(t.error(format!("attribute `{name}` has non-finite values")));
                        }
                        v
                    }
                    other => return Err(t.error(format!("unknown encoding `{other}`"))),
                };
                match role {
                    Role::TargetVector | Role::TargetScalar if !matches!(target, Target::None) => {
                        return Err(t.error("more than one target"));
                    }
                    Role::TargetVector => {
                        target = Target::VertexVectors(values.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
                    }
                    Role::TargetScalar => target = Target::VertexScalars(values),
                    _ => {
                        if descriptors.iter().any(|d| d.name == name) {
                            return Err(t.error(format!("attribute `{name}` appears twice")));
                        }
                        let objs = values.chunks_exact(dim).map(|c| object(role, c)).collect();
                        descriptors.push(Descriptor { name, values: objs });
                    }
                }
            }
            "TARGET" => {
                let kind = t.next("target kind")?;
                if kind != "mesh_scalar" {
                    return Err(t.error(format!("unknown target kind `{kind}`")));
                }
                if !matches!(target, Target::None) {
                    return Err(t.error("more than one target"));
                }
                target = Target::MeshScalar(t.f64("target value")?);
            }
            other => return Err(t.error(format!("unexpected `{other}` after faces"))),
        }
    }
    let mut sample = MeshSample { positions, cells: Cells::Triangles(tris), descriptors, target };
    sample.ensure_normals();
    sample.validate()?;
    Ok(sample)
}

pub fn write_off(sample: &MeshSample, encoding: AttributeEncoding) -> Result<String, MeshError> {
    let Cells::Triangles(tris) = &sample.cells else {
        return Err(MeshError::Parse { line: 0, message: "OFF stores triangle meshes only".into() });
    };
    let n = sample.n_vertices();
    let mut s = String::new();
    let _ = writeln!(s, "OFF\n{} {} 0", n, tris.len());
    for p in &sample.positions {
        let _ = writeln!(s, "{} {} {}", p[0], p[1], p[2]);
    }
    for t in tris {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let mut emit = |name: &str, role: Role, rows: Vec<Vec<f64>>| {
        let enc = match encoding {
            AttributeEncoding::Ascii => "ascii",
            AttributeEncoding::Base64 => "base64",
        };
        let _ = writeln!(s, "ATTRIBUTE {name} {} {} {enc}", role.name(), role.dim());
        match encoding {
            AttributeEncoding::Ascii => {
                for r in rows {
                    let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
                    let _ = writeln!(s, "{}", line.join(" "));
                }
            }
            AttributeEncoding::Base64 => {
                let bytes: Vec<u8> = rows.iter().flatten().flat_map(|v| v.to_le_bytes()).collect();
                let _ = writeln!(s, "{}", STANDARD.encode(bytes));
            }
        }
    };
    for d in &sample.descriptors {
        if d.name.split_whitespace().count() != 1 || d.name.contains('#') {
            return Err(MeshError::Parse {
                line: 0,
                message: format!("descriptor name `{}` is not a single token", d.name),
            });
        }
        let mut role = None;
        let mut rows = Vec::with_capacity(n);
        for obj in &d.values {
            let (r, v) = flatten(obj);
            if role.is_some_and(|x| x != r) {
                return Err(MeshError::Parse {
                    line: 0,
                    message: format!("descriptor `{}` mixes object kinds", d.name),
                });
            }
            role = Some(r);
            rows.push(v);
        }
        emit(&d.name, role.unwrap_or(Role::Scalar), rows);
    }
    match &sample.target {
        Target::None => {}
        Target::VertexVectors(v) => emit("target", Role::TargetVector, v.iter().map(|x| x.to_vec()).collect()),
        Target::VertexScalars(v) => emit("target", Role::TargetScalar, v.iter().map(|&x| vec![x]).collect()),
        Target::MeshScalar(v) => {
            let _ = writeln!(s, "TARGET mesh_scalar {v}");
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TETRA: &str = "OFF\n# a tetrahedron\n4 4 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n";

    #[test]
    fn tetrahedron_gets_unit_normals() {
        let m = read_off(TETRA).unwrap();
        assert_eq!(m.n_vertices(), 4);
        assert!(m.cells.is_surface());
        for obj in &m.descriptor("normal").unwrap().values {
            let GeometricObject::Plane { normal, .. } = obj else { panic!("{obj:?}") };
            assert!((crate::pga::norm3(*normal) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn pentagon_is_rejected_with_line() {
        let text = "OFF\n5 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n0 2 0\n5 0 1 2 3 4\n";
        assert_eq!(read_off(text), Err(MeshError::UnsupportedCell { line: 8, vertices: 5 }));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "OFF\n3 1 0\n0 0 0\n1 x 0\n0 1 0\n3 0 1 2\n";
        assert!(matches!(read_off(text), Err(MeshError::Parse { line: 4, .. })));
        let text = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n";
        assert!(matches!(read_off(text), Err(MeshError::CellIndex { index: 7, .. })));
        let text = format!("{TETRA}ATTRIBUTE d scalar 1 ascii\n1\n2\n3\n");
        assert!(matches!(read_off(&text), Err(MeshError::Parse { .. })));
        let text = format!("{TETRA}COLOR 1 2 3\n");
        assert!(matches!(read_off(&text), Err(MeshError::Parse { line: 12, .. })));
    }

    #[test]
    fn roundtrip_both_encodings() {
        let mut m = read_off(TETRA).unwrap();
        m.descriptors.push(Descriptor {
            name: "dist".into(),
            values: (0..4).map(|i| GeometricObject::Scalar { value: 0.1 * i as f64 + 1e-17 }).collect(),
        });
        m.target = Target::VertexVectors(vec![[0.1, 0.2, 0.3]; 4]);
        for enc in [AttributeEncoding::Ascii, AttributeEncoding::Base64] {
            assert_eq!(read_off(&write_off(&m, enc).unwrap()).unwrap(), m);
        }
        m.target = Target::MeshScalar(std::f64::consts::PI);
        assert_eq!(read_off(&write_off(&m, AttributeEncoding::Base64).unwrap()).unwrap(), m);
    }
}
