//! Embedding of geometric objects as multivectors and extraction back.
//!
//! Points use the layout `(x012, x013, x023, x123) = (ρ, 1)`. The product
//! fixes how trivector blades relate to the generator planes, so this layout
//! also fixes the world axes: world x pairs with `e012`, y with `e013` and z
//! with `e023`. Everything else is expressed in the same frame so that one
//! versor moves every embedded object consistently:
//!
//! * a plane `{x : ν·x + δ = 0}` sits on `(e0, e1, e2, e3)` as
//!   `(δ, -ν_z, ν_y, -ν_x)`;
//! * a translation by `τ` is the translator `1 + ½(τ_z e01 - τ_y e02 + τ_x e03)`;
//! * scalars sit on `s`.

use serde::{Deserialize, Serialize};

use super::blade::{E0, E01, E012, E013, E02, E023, E03, E1, E123, E2, E3, S};
use super::{Multivector, PgaError};

pub type Vec3 = [f64; 3];

/// Default bound on `|x123|` below which a multivector is a point at infinity.
pub const POINT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeometricObject {
    Scalar {
        value: f64,
    },
    /// Oriented plane `{x : normal·x + offset = 0}`; the normal is not normalised.
    Plane {
        normal: Vec3,
        offset: f64,
    },
    Point {
        position: Vec3,
    },
    Translation {
        shift: Vec3,
    },
}

pub fn embed(obj: &GeometricObject) -> Result<Multivector, PgaError> {
    let mut x = Multivector::ZERO;
    match *obj {
        GeometricObject::Scalar { value } => x[S] = value,
        GeometricObject::Plane { normal, offset } => {
            if normal.iter().all(|&c| c == 0.0) {
                return Err(PgaError::ZeroNormal);
            }
            x[E0] = offset;
            let g = direction_to_grade1(normal);
            x[E1] = g[0];
            x[E2] = g[1];
            x[E3] = g[2];
        }
        GeometricObject::Point { position } => {
            x[E012] = position[0];
            x[E013] = position[1];
            x[E023] = position[2];
            x[E123] = 1.0;
        }
        GeometricObject::Translation { shift } => {
            x[S] = 1.0;
            x[E01] = 0.5 * shift[2];
            x[E02] = -0.5 * shift[1];
            x[E03] = 0.5 * shift[0];
        }
    }
    Ok(x)
}

pub fn embed_point(position: Vec3) -> Multivector {
    embed(&GeometricObject::Point { position }).expect("points always embed")
}

pub fn embed_translation(shift: Vec3) -> Multivector {
    embed(&GeometricObject::Translation { shift }).expect("translations always embed")
}

pub fn extract_point(x: &Multivector) -> Result<Vec3, PgaError> {
    extract_point_with_tolerance(x, POINT_TOLERANCE)
}

/// `(x012, x013, x023) / x123`.
pub fn extract_point_with_tolerance(x: &Multivector, tol: f64) -> Result<Vec3, PgaError> {
    let w = x[E123];
    if !(w.abs() > tol) {
        return Err(PgaError::PointAtInfinity { weight: w });
    }
    Ok([x[E012] / w, x[E013] / w, x[E023] / w])
}

/// World direction to `(e1, e2, e3)` coefficients.
#[inline]
pub fn direction_to_grade1(v: Vec3) -> Vec3 {
    [-v[2], v[1], -v[0]]
}

/// Inverse of [`direction_to_grade1`]: reads the plane normal of the grade-1
/// part as a world vector.
#[inline]
pub fn grade1_to_direction(x: &Multivector) -> Vec3 {
    [-x[E3], x[E2], -x[E1]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_layouts() {
        let p = embed_point([1.0, 2.0, 3.0]);
        assert_eq!([p[E012], p[E013], p[E023], p[E123]], [1.0, 2.0, 3.0, 1.0]);
        assert_eq!(p.grade_project(3).unwrap(), p);

        let s = embed(&GeometricObject::Scalar { value: 7.0 }).unwrap();
        assert_eq!(s, Multivector::scalar(7.0));

        let t = embed_translation([0.0, 0.0, 0.0]);
        assert_eq!(t, Multivector::scalar(1.0));

        let plane = embed(&GeometricObject::Plane { normal: [0.0, 0.0, 2.0], offset: 0.5 }).unwrap();
        assert_eq!(plane.grade_project(2).unwrap(), Multivector::ZERO);
        assert_eq!(plane.grade_project(1).unwrap(), plane);
        assert_eq!(grade1_to_direction(&plane), [0.0, 0.0, 2.0]);
    }

    #[test]
    fn zero_normal_is_rejected() {
        let err = embed(&GeometricObject::Plane { normal: [0.0; 3], offset: 1.0 });
        assert!(matches!(err, Err(PgaError::ZeroNormal)));
    }

    #[test]
    fn extraction() {
        assert_eq!(extract_point(&embed_point([1.0, 2.0, 3.0])).unwrap(), [1.0, 2.0, 3.0]);
        let mut x = Multivector::ZERO;
        x[E012] = 2.0;
        x[E013] = 4.0;
        x[E023] = 6.0;
        x[E123] = 2.0;
        assert_eq!(extract_point(&x).unwrap(), [1.0, 2.0, 3.0]);
        x[E123] = 0.0;
        assert!(matches!(extract_point(&x), Err(PgaError::PointAtInfinity { .. })));
    }
}
