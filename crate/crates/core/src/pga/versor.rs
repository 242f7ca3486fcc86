//! Versors and the E(3) action on multivectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::blade::{E12, E13, E23, S};
use super::embed::{embed, embed_translation, GeometricObject, Vec3};
use super::{Multivector, PgaError};

/// Even versors (rotors, translators and their products) act by `v x ṽ`,
/// odd ones (reflections) by `v x̂ ṽ`, both divided by the scalar `v ṽ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Versor {
    pub mv: Multivector,
    pub odd: bool,
}

const INVERTIBLE_TOL: f64 = 1e-12;

impl Versor {
    pub fn identity() -> Self {
        Versor { mv: Multivector::scalar(1.0), odd: false }
    }

    pub fn translator(shift: Vec3) -> Self {
        Versor { mv: embed_translation(shift), odd: false }
    }

    /// Right-handed rotation by `angle` about `axis` through the origin.
    pub fn rotor(axis: Vec3, angle: f64) -> Result<Self, PgaError> {
        let n = norm3(axis);
        if n == 0.0 {
            return Err(PgaError::ZeroNormal);
        }
        let (s, c) = (0.5 * angle).sin_cos();
        Ok(Self::from_quaternion([c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n]))
    }

    /// Rotor of a unit quaternion `(w, x, y, z)`.
    pub fn from_quaternion(q: [f64; 4]) -> Self {
        let mut mv = Multivector::ZERO;
        mv[S] = q[0];
        mv[E12] = -q[1];
        mv[E13] = -q[2];
        mv[E23] = -q[3];
        Versor { mv, odd: false }
    }

    /// Reflection in the plane `{x : normal·x + offset = 0}`.
    pub fn reflection(normal: Vec3, offset: f64) -> Result<Self, PgaError> {
        let n = norm3(normal);
        let plane = embed(&GeometricObject::Plane { normal, offset })?;
        Ok(Versor { mv: plane * (1.0 / n), odd: true })
    }

    /// `self ∘ other`: `other` acts first.
    pub fn compose(&self, other: &Versor) -> Versor {
        Versor { mv: self.mv * other.mv, odd: self.odd ^ other.odd }
    }

    /// The versor undoing this one.
    pub fn inverse(&self) -> Result<Versor, PgaError> {
        let n = self.norm_sq()?;
        Ok(Versor { mv: self.mv.reverse() * (1.0 / n), odd: self.odd })
    }

    fn norm_sq(&self) -> Result<f64, PgaError> {
        let n = (self.mv * self.mv.reverse())[S];
        if !(n.abs() > INVERTIBLE_TOL) {
            return Err(PgaError::NonInvertibleVersor);
        }
        Ok(n)
    }

    pub fn apply(&self, x: &Multivector) -> Result<Multivector, PgaError> {
        apply_versor(self, x)
    }
}

pub fn apply_versor(v: &Versor, x: &Multivector) -> Result<Multivector, PgaError> {
    let n = v.norm_sq()?;
    let arg = if v.odd { x.grade_involution() } else { *x };
    Ok(v.mv * arg * v.mv.reverse() * (1.0 / n))
}

/// A rigid motion `x ↦ L x + t` with orthogonal `L` (possibly improper), kept
/// together with its versor so tests can compare both routes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidMotion {
    pub linear: [[f64; 3]; 3],
    pub translation: Vec3,
    pub versor: Versor,
}

impl RigidMotion {
    pub fn identity() -> Self {
        RigidMotion {
            linear: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
            versor: Versor::identity(),
        }
    }

    /// Uniform random rotation, translation uniform in `[-10, 10]³`, and with
    /// `reflections` a reflection through a random plane with probability ½.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, reflections: bool) -> Self {
        let mut q = [0.0f64; 4];
        loop {
            for c in q.iter_mut() {
                *c = rng.sample(StandardNormal);
            }
            let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
            if n > 1e-6 {
                q.iter_mut().for_each(|c| *c /= n);
                break;
            }
        }
        let translation: Vec3 = std::array::from_fn(|_| rng.random_range(-10.0..=10.0));
        let mut motion = Self::from_parts(q, translation, None);
        if reflections && rng.random_bool(0.5) {
            let m = random_unit(rng);
            motion = Self::from_parts(q, translation, Some(m));
        }
        motion
    }

    /// `x ↦ R(q) S x + t` where `S` reflects through the origin plane with the
    /// given unit normal.
    pub fn from_parts(q: [f64; 4], translation: Vec3, mirror: Option<Vec3>) -> Self {
        let rot = quaternion_matrix(q);
        let mut versor = Versor::translator(translation).compose(&Versor::from_quaternion(q));
        let mut linear = rot;
        if let Some(m) = mirror {
            let s = householder(m);
            linear = matmul3(&rot, &s);
            versor = versor.compose(&Versor::reflection(m, 0.0).expect("unit normal"));
        }
        RigidMotion { linear, translation, versor }
    }

    pub fn is_reflection(&self) -> bool {
        self.versor.odd
    }

    pub fn apply_point(&self, p: Vec3) -> Vec3 {
        let lp = matvec3(&self.linear, p);
        [lp[0] + self.translation[0], lp[1] + self.translation[1], lp[2] + self.translation[2]]
    }

    pub fn apply_direction(&self, v: Vec3) -> Vec3 {
        matvec3(&self.linear, v)
    }

    /// Image of the plane `{x : normal·x + offset = 0}`.
    pub fn apply_plane(&self, normal: Vec3, offset: f64) -> (Vec3, f64) {
        let n = self.apply_direction(normal);
        (n, offset - dot3(n, self.translation))
    }

    pub fn apply_mv(&self, x: &Multivector) -> Multivector {
        apply_versor(&self.versor, x).expect("rigid motions are invertible")
    }

    /// Applies the motion to a flat array of multivectors.
    pub fn apply_mv_slice(&self, data: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(data.len());
        for chunk in data.chunks_exact(16) {
            let x = Multivector::from_slice(chunk).expect("chunks of 16");
            out.extend_from_slice(self.apply_mv(&x).coeffs());
        }
        out
    }
}

/// Seeded random rigid motion including reflections.
pub fn random_rigid_motion(seed: u64) -> Versor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RigidMotion::random(&mut rng, true).versor
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v: Vec3 = std::array::from_fn(|_| rng.sample(StandardNormal));
        let n = norm3(v);
        if n > 1e-6 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

pub fn quaternion_matrix(q: [f64; 4]) -> [[f64; 3]; 3] {
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn householder(m: Vec3) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| if i == j { 1.0 } else { 0.0 } - 2.0 * m[i] * m[j]))
}

pub fn matvec3(a: &[[f64; 3]; 3], v: Vec3) -> Vec3 {
    std::array::from_fn(|i| a[i][0] * v[0] + a[i][1] * v[1] + a[i][2] * v[2])
}

fn matmul3(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum()))
}

#[inline]
pub fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm3(a: Vec3) -> f64 {
    dot3(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pga::embed::{embed_point, extract_point, grade1_to_direction};
    use std::f64::consts::FRAC_PI_2;

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn translator_moves_points() {
        let t = Versor::translator([1.0, 0.0, 0.0]);
        let p = extract_point(&t.apply(&embed_point([0.0; 3])).unwrap()).unwrap();
        assert_eq!(p, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = Versor::rotor([0.0, 0.0, 1.0], FRAC_PI_2).unwrap();
        let p = extract_point(&r.apply(&embed_point([1.0, 0.0, 0.0])).unwrap()).unwrap();
        assert!(close(p, [0.0, 1.0, 0.0], 1e-10), "{p:?}");
    }

    #[test]
    fn reflection_moves_points_and_normals() {
        let n = [1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0];
        let d = 0.7;
        let refl = Versor::reflection(n, d).unwrap();
        let p = [0.3, -1.2, 2.0];
        let got = extract_point(&refl.apply(&embed_point(p)).unwrap()).unwrap();
        let k = 2.0 * (dot3(n, p) + d);
        assert!(close(got, [p[0] - k * n[0], p[1] - k * n[1], p[2] - k * n[2]], 1e-12));

        let plane = embed(&GeometricObject::Plane { normal: [0.0, 0.0, 1.0], offset: 0.0 }).unwrap();
        let mirrored = Versor::reflection([0.0, 0.0, 1.0], 0.0).unwrap().apply(&plane).unwrap();
        assert!(close(grade1_to_direction(&mirrored), [0.0, 0.0, -1.0], 1e-15));
    }

    #[test]
    fn identity_and_non_invertible() {
        let x = Multivector([0.5; 16]);
        assert_eq!(Versor::identity().apply(&x).unwrap(), x);
        let bad = Versor { mv: Multivector::basis(crate::pga::blade::E01), odd: false };
        assert!(matches!(bad.apply(&x), Err(PgaError::NonInvertibleVersor)));
    }

    #[test]
    fn seeded_motions_are_reproducible() {
        assert_eq!(random_rigid_motion(9), random_rigid_motion(9));
        assert_ne!(random_rigid_motion(9), random_rigid_motion(10));
    }

    #[test]
    fn matrix_and_versor_routes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let g = RigidMotion::random(&mut rng, true);
            let p = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let via_versor = extract_point(&g.apply_mv(&embed_point(p))).unwrap();
            assert!(close(via_versor, g.apply_point(p), 1e-9));

            let nrm = [0.2, -0.4, 0.9];
            let plane = embed(&GeometricObject::Plane { normal: nrm, offset: 0.3 }).unwrap();
            let moved = g.apply_mv(&plane);
            let (n2, d2) = g.apply_plane(nrm, 0.3);
            assert!(close(grade1_to_direction(&moved), n2, 1e-12));
            assert!((moved[crate::pga::blade::E0] - d2).abs() < 1e-9);
        }
    }
}
