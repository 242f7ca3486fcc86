//! Procedural tube meshes with analytic targets.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mesh::{Cells, Descriptor, MeshSample, Target};
use crate::pga::{dot3, GeometricObject, RigidMotion, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToyKind {
    /// Triangulated tube with a sinusoidal radius, capped at the inlet;
    /// target `R(s)·t`.
    Surface,
    /// Tetrahedralised straight tube; target `(1 − r²/R²)·t`.
    Volume,
    /// Bent surface tube; target is the total bending angle.
    MeshLevel,
}

impl std::str::FromStr for ToyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "surface" => Ok(ToyKind::Surface),
            "volume" => Ok(ToyKind::Volume),
            "mesh-level" | "mesh_level" => Ok(ToyKind::MeshLevel),
            _ => Err(format!("unknown toy dataset `{s}` (expected surface, volume or mesh-level)")),
        }
    }
}

/// `n_samples` meshes, each in a random pose drawn from the same stream.
pub fn make_toy_dataset(kind: ToyKind, n_samples: usize, seed: u64) -> Vec<MeshSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_samples)
        .map(|_| {
            let local = match kind {
                ToyKind::Surface => surface_tube(&mut rng),
                ToyKind::Volume => volume_tube(&mut rng),
                ToyKind::MeshLevel => bent_tube(&mut rng),
            };
            let pose = RigidMotion::random(&mut rng, false);
            local.transformed(&pose)
        })
        .collect()
}

fn scalars(name: &str, v: impl IntoIterator<Item = f64>) -> Descriptor {
    Descriptor { name: name.into(), values: v.into_iter().map(|value| GeometricObject::Scalar { value }).collect() }
}

fn ring_triangles(rings: usize, per_ring: usize) -> Vec<[usize; 3]> {
    let mut tris = Vec::new();
    for s in 0..rings - 1 {
        for j in 0..per_ring {
            let a = s * per_ring + j;
            let b = s * per_ring + (j + 1) % per_ring;
            let (c, d) = (a + per_ring, b + per_ring);
            // Counter-clockwise seen from outside for a tube along +z.
            tris.push([a, b, d]);
            tris.push([a, d, c]);
        }
    }
    tris
}

const SURFACE_AROUND: usize = 16;
const SURFACE_ALONG: usize = 15;

/// Tube closed by a flat cap at the inlet (`s = 0`) and open at the outlet,
/// so the flow direction is visible in the cap normals.
fn surface_tube<R: Rng>(rng: &mut R) -> MeshSample {
    let length = rng.random_range(3.0..5.0);
    let r0 = rng.random_range(0.6..1.0);
    let amp = rng.random_range(0.1..0.3);
    let freq = rng.random_range(0.5..1.5);
    let phase = rng.random_range(0.0..TAU);
    let radius = |s: f64| r0 * (1.0 + amp * (TAU * freq * s / length + phase).sin());
    let mut positions = Vec::new();
    let mut inlet = Vec::new();
    let mut target = Vec::new();
    for i in 0..SURFACE_ALONG {
        let s = length * i as f64 / (SURFACE_ALONG - 1) as f64;
        let r = radius(s);
        for j in 0..SURFACE_AROUND {
            let th = TAU * (j as f64 + 0.5 * (i % 2) as f64) / SURFACE_AROUND as f64;
            positions.push([r * th.cos(), r * th.sin(), s]);
            inlet.push(s);
            target.push([0.0, 0.0, r]);
        }
    }
    let mut tris = ring_triangles(SURFACE_ALONG, SURFACE_AROUND);
    // Cap: a centre vertex fanned to the first ring, facing -z.
    let centre = positions.len();
    positions.push([0.0, 0.0, 0.0]);
    inlet.push(0.0);
    target.push([0.0, 0.0, radius(0.0)]);
    for j in 0..SURFACE_AROUND {
        tris.push([centre, (j + 1) % SURFACE_AROUND, j]);
    }
    let mut m = MeshSample {
        positions,
        cells: Cells::Triangles(tris),
        descriptors: vec![scalars("inlet", inlet)],
        target: Target::VertexVectors(target),
    };
    m.ensure_normals();
    m
}

fn bent_tube<R: Rng>(rng: &mut R) -> MeshSample {
    let length = rng.random_range(3.0..5.0);
    let r = rng.random_range(0.4..0.7);
    let angle = rng.random_range(0.0..PI / 2.0);
    // Centreline: arc of the given angle in the x-z plane, starting along +z.
    let centre = |s: f64| -> (Vec3, Vec3, Vec3) {
        let a = angle * s / length;
        if angle < 1e-9 {
            return ([0.0, 0.0, s], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]);
        }
        let rc = length / angle;
        let c = [rc * (1.0 - a.cos()), 0.0, rc * a.sin()];
        let t = [a.sin(), 0.0, a.cos()];
        let n = [a.cos(), 0.0, -a.sin()];
        (c, t, n)
    };
    let mut positions = Vec::new();
    let mut inlet = Vec::new();
    for i in 0..SURFACE_ALONG {
        let s = length * i as f64 / (SURFACE_ALONG - 1) as f64;
        let (c, _, n) = centre(s);
        let b = [0.0, 1.0, 0.0];
        for j in 0..SURFACE_AROUND {
            let th = TAU * (j as f64 + 0.5 * (i % 2) as f64) / SURFACE_AROUND as f64;
            let (cs, sn) = (th.cos(), th.sin());
            positions.push(std::array::from_fn(|a| c[a] + r * (cs * n[a] + sn * b[a])));
            inlet.push(s);
        }
    }
    let mut m = MeshSample {
        positions,
        cells: Cells::Triangles(ring_triangles(SURFACE_ALONG, SURFACE_AROUND)),
        descriptors: vec![scalars("inlet", inlet)],
        target: Target::MeshScalar(angle),
    };
    m.ensure_normals();
    m
}

const VOLUME_RINGS: usize = 3;

/// Zipper triangulation of a disc made of a centre point and rings of
/// `6j` points; indices are local to one slice.
fn disc_triangles() -> Vec<[usize; 3]> {
    let ring_start = |j: usize| if j == 0 { 0 } else { 1 + 3 * j * (j - 1) };
    let ring_len = |j: usize| if j == 0 { 1 } else { 6 * j };
    let mut tris = Vec::new();
    for j in 1..=VOLUME_RINGS {
        let (inner, outer) = (ring_len(j - 1), ring_len(j));
        let (is, os) = (ring_start(j - 1), ring_start(j));
        if inner == 1 {
            for k in 0..outer {
                tris.push([is, os + k, os + (k + 1) % outer]);
            }
            continue;
        }
        // Walk both rings by angle, always advancing the one that lags.
        let (mut a, mut b) = (0usize, 0usize);
        while a < inner || b < outer {
            let next_a = (a + 1) as f64 / inner as f64;
            let next_b = (b + 1) as f64 / outer as f64;
            if b < outer && (a == inner || next_b <= next_a) {
                tris.push([is + a % inner, os + b, os + (b + 1) % outer]);
                b += 1;
            } else {
                tris.push([is + a, os + b % outer, is + (a + 1) % inner]);
                a += 1;
            }
        }
    }
    tris
}

fn volume_tube<R: Rng>(rng: &mut R) -> MeshSample {
    let length = rng.random_range(3.0..5.0);
    let big_r = rng.random_range(0.5..1.0);
    let slices = rng.random_range(11..=14usize);
    let per_slice = 1 + 3 * VOLUME_RINGS * (VOLUME_RINGS + 1);
    let mut positions = Vec::new();
    let (mut wall, mut radius, mut inlet, mut target) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..slices {
        let z = length * i as f64 / (slices - 1) as f64;
        for j in 0..=VOLUME_RINGS {
            let count = if j == 0 { 1 } else { 6 * j };
            let frac = j as f64 / VOLUME_RINGS as f64;
            for k in 0..count {
                let th = TAU * k as f64 / count as f64;
                let r = big_r * frac;
                positions.push([r * th.cos(), r * th.sin(), z]);
                wall.push(big_r - r);
                radius.push(frac);
                inlet.push(z);
                target.push([0.0, 0.0, 1.0 - frac * frac]);
            }
        }
    }
    let disc = disc_triangles();
    let mut tets = Vec::new();
    for i in 0..slices - 1 {
        for t in &disc {
            let mut v = t.map(|x| x + i * per_slice);
            v.sort_unstable();
            let w = v.map(|x| x + per_slice);
            tets.push([v[0], v[1], v[2], w[2]]);
            tets.push([v[0], v[1], w[1], w[2]]);
            tets.push([v[0], w[0], w[1], w[2]]);
        }
    }
    let axis = positions
        .iter()
        .map(|&p| {
            let normal = [0.0, 0.0, 1.0];
            GeometricObject::Plane { normal, offset: -dot3(normal, p) }
        })
        .collect();
    MeshSample {
        positions,
        cells: Cells::Tetrahedra(tets),
        descriptors: vec![
            Descriptor { name: "axis".into(), values: axis },
            scalars("wall", wall),
            scalars("radius", radius),
            scalars("inlet", inlet),
        ],
        target: Target::VertexVectors(target),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signed_volume(p: &[Vec3], t: &[usize; 4]) -> f64 {
        let d = |i: usize| std::array::from_fn::<f64, 3, _>(|a| p[t[i]][a] - p[t[0]][a]);
        let (a, b, c) = (d(1), d(2), d(3));
        a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) + a[2] * (b[0] * c[1] - b[1] * c[0])
    }

    #[test]
    fn volume_tube_is_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = volume_tube(&mut rng);
        m.validate().unwrap();
        assert!((200..=2000).contains(&m.n_vertices()));
        let Cells::Tetrahedra(tets) = &m.cells else { panic!() };
        // Tetrahedra tile the tube without degenerate elements.
        let total: f64 = tets.iter().map(|t| signed_volume(&m.positions, t).abs() / 6.0).sum();
        assert!(tets.iter().all(|t| signed_volume(&m.positions, t).abs() > 1e-9));
        let Target::VertexVectors(v) = &m.target else { panic!() };
        let r = m.descriptor("wall").unwrap();
        let z = m.positions.iter().map(|p| p[2]).fold(0.0, f64::max);
        let outer_r = match r.values[0] {
            GeometricObject::Scalar { value } => value,
            _ => unreachable!(),
        };
        // Inscribed hexagon-ish polygon: area below πR², above the hexagon.
        assert!(total < PI * outer_r * outer_r * z + 1e-9);
        assert!(total > 1.5 * 3f64.sqrt() * outer_r * outer_r * z * 0.99);
        // Zero velocity at the wall, one on the axis.
        for (d, t) in r.values.iter().zip(v) {
            if let GeometricObject::Scalar { value } = d {
                if *value == 0.0 {
                    assert_eq!(t[2], 0.0);
                }
                if (*value - outer_r).abs() < 1e-15 {
                    assert_eq!(t[2], 1.0);
                }
            }
        }
    }

    #[test]
    fn datasets_are_seeded() {
        for kind in [ToyKind::Surface, ToyKind::Volume, ToyKind::MeshLevel] {
            let a = make_toy_dataset(kind, 3, 7);
            assert_eq!(a, make_toy_dataset(kind, 3, 7));
            assert_ne!(a, make_toy_dataset(kind, 3, 8));
            for m in &a {
                m.validate().unwrap();
                assert!((200..=2000).contains(&m.n_vertices()), "{}", m.n_vertices());
            }
        }
    }

    #[test]
    fn surface_target_scales_with_radius() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = surface_tube(&mut rng);
        let Target::VertexVectors(v) = &m.target else { panic!() };
        let ring = SURFACE_ALONG * SURFACE_AROUND;
        for (p, t) in m.positions.iter().zip(v).take(ring) {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!((t[2] - r).abs() < 1e-12 && t[0] == 0.0 && t[1] == 0.0);
        }
        // The cap centre faces upstream.
        let GeometricObject::Plane { normal, .. } = m.descriptor("normal").unwrap().values[ring] else { panic!() };
        assert!((normal[2] + 1.0).abs() < 1e-12);
    }
}
