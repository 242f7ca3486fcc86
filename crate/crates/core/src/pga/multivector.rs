use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::blade::{blade_from_name, contains_e0, BLADE_NAMES, DIM, GRADE, NON_DEGENERATE};
use super::cayley::cayley;
use super::PgaError;

/// Element of G(3,0,1), stored as 16 coefficients in canonical blade order.
#[derive(Clone, Copy, PartialEq, Default)]
pub struct Multivector(pub [f64; DIM]);

impl Multivector {
    pub const ZERO: Multivector = Multivector([0.0; DIM]);

    pub fn scalar(s: f64) -> Self {
        let mut c = [0.0; DIM];
        c[0] = s;
        Multivector(c)
    }

    /// Unit basis blade.
    pub fn basis(blade: usize) -> Self {
        let mut c = [0.0; DIM];
        c[blade] = 1.0;
        Multivector(c)
    }

    pub fn from_slice(values: &[f64]) -> Result<Self, PgaError> {
        let coeffs: [f64; DIM] =
            values.try_into().map_err(|_| PgaError::Length { expected: DIM, found: values.len() })?;
        Ok(Multivector(coeffs))
    }

    #[inline]
    pub fn coeffs(&self) -> &[f64; DIM] {
        &self.0
    }

    pub fn geometric_product(&self, rhs: &Multivector) -> Multivector {
        geometric_product(self, rhs)
    }

    pub fn grade_project(&self, grade: usize) -> Result<Multivector, PgaError> {
        grade_project(self, grade)
    }

    pub fn reverse(&self) -> Multivector {
        reverse(self)
    }

    /// Negates odd grades.
    pub fn grade_involution(&self) -> Multivector {
        let mut out = *self;
        for (c, g) in out.0.iter_mut().zip(GRADE) {
            if g % 2 == 1 {
                *c = -*c;
            }
        }
        out
    }

    pub fn inv_norm_sq(&self) -> f64 {
        inv_norm_sq(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn to_le_bytes(&self) -> [u8; DIM * 8] {
        let mut out = [0u8; DIM * 8];
        for (chunk, c) in out.chunks_exact_mut(8).zip(self.0) {
            chunk.copy_from_slice(&c.to_le_bytes());
        }
        out
    }

    pub fn from_le_bytes(bytes: &[u8]) -> Result<Self, PgaError> {
        if bytes.len() != DIM * 8 {
            return Err(PgaError::Length { expected: DIM * 8, found: bytes.len() });
        }
        let mut c = [0.0; DIM];
        for (v, chunk) in c.iter_mut().zip(bytes.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
        }
        Ok(Multivector(c))
    }
}

/// Bilinear product expanded over the Cayley table.
pub fn geometric_product(a: &Multivector, b: &Multivector) -> Multivector {
    let mut out = [0.0; DIM];
    for t in cayley().terms() {
        out[t.out] += t.sign * a.0[t.lhs] * b.0[t.rhs];
    }
    Multivector(out)
}

pub fn grade_project(a: &Multivector, grade: usize) -> Result<Multivector, PgaError> {
    if grade > 4 {
        return Err(PgaError::Grade(grade));
    }
    let mut out = [0.0; DIM];
    for (i, g) in GRADE.iter().enumerate() {
        if *g == grade {
            out[i] = a.0[i];
        }
    }
    Ok(Multivector(out))
}

/// Grade-k blades pick up `(-1)^(k(k-1)/2)`.
pub fn reverse(a: &Multivector) -> Multivector {
    let mut out = *a;
    for (c, g) in out.0.iter_mut().zip(GRADE) {
        if (g * g.saturating_sub(1) / 2) % 2 == 1 {
            *c = -*c;
        }
    }
    out
}

/// Squared magnitude over the blades without `e0`.
pub fn inv_norm_sq(a: &Multivector) -> f64 {
    NON_DEGENERATE.iter().map(|&i| a.0[i] * a.0[i]).sum()
}

/// Invariant inner product: componentwise product summed over blades without `e0`.
pub fn inv_inner(a: &Multivector, b: &Multivector) -> f64 {
    NON_DEGENERATE.iter().map(|&i| a.0[i] * b.0[i]).sum()
}

/// Left product with `e0`: lifts every blade without `e0`, annihilates the rest.
pub fn e0_left(a: &Multivector) -> Multivector {
    let e0 = Multivector::basis(super::blade::E0);
    let out = geometric_product(&e0, a);
    debug_assert!((0..DIM).all(|i| contains_e0(i) || out.0[i] == 0.0));
    out
}

impl Index<usize> for Multivector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Multivector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for Multivector {
    type Output = Multivector;
    fn add(mut self, rhs: Multivector) -> Multivector {
        self += rhs;
        self
    }
}

impl AddAssign for Multivector {
    fn add_assign(&mut self, rhs: Multivector) {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
    }
}

impl Sub for Multivector {
    type Output = Multivector;
    fn sub(mut self, rhs: Multivector) -> Multivector {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a -= b;
        }
        self
    }
}

impl Neg for Multivector {
    type Output = Multivector;
    fn neg(mut self) -> Multivector {
        for a in self.0.iter_mut() {
            *a = -*a;
        }
        self
    }
}

impl Mul<f64> for Multivector {
    type Output = Multivector;
    fn mul(mut self, rhs: f64) -> Multivector {
        for a in self.0.iter_mut() {
            *a *= rhs;
        }
        self
    }
}

impl Mul for Multivector {
    type Output = Multivector;
    fn mul(self, rhs: Multivector) -> Multivector {
        geometric_product(&self, &rhs)
    }
}

impl fmt::Debug for Multivector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for (name, c) in BLADE_NAMES.iter().zip(self.0) {
            if c != 0.0 {
                m.entry(name, &c);
            }
        }
        m.finish()
    }
}

// JSON debug form: an object keyed by blade name, all 16 keys present.
impl Serialize for Multivector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(DIM))?;
        for (name, c) in BLADE_NAMES.iter().zip(self.0) {
            map.serialize_entry(name, &c)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Multivector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct MvVisitor;
        impl<'de> Visitor<'de> for MvVisitor {
            type Value = Multivector;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object keyed by blade names")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Multivector, A::Error> {
                let mut out = [0.0; DIM];
                let mut seen = [false; DIM];
                while let Some(key) = map.next_key::<String>()? {
                    let i = blade_from_name(&key).ok_or_else(|| de::Error::unknown_field(&key, &BLADE_NAMES))?;
                    if seen[i] {
                        return Err(de::Error::duplicate_field(BLADE_NAMES[i]));
                    }
                    seen[i] = true;
                    out[i] = map.next_value()?;
                }
                Ok(Multivector(out))
            }
        }
        deserializer.deserialize_map(MvVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pga::blade::*;

    #[test]
    fn reverse_signs_by_grade() {
        let s = Multivector::scalar(3.0);
        assert_eq!(reverse(&s), s);
        assert_eq!(reverse(&Multivector::basis(E12)), -Multivector::basis(E12));
        assert_eq!(reverse(&Multivector::basis(E123)), -Multivector::basis(E123));
        assert_eq!(reverse(&Multivector::basis(E0123)), Multivector::basis(E0123));
        assert_eq!(reverse(&Multivector::basis(E2)), Multivector::basis(E2));
    }

    #[test]
    fn grade_out_of_range() {
        assert!(matches!(grade_project(&Multivector::ZERO, 5), Err(PgaError::Grade(5))));
    }

    #[test]
    fn scalar_identity_and_unit_vectors() {
        let mut b = Multivector::ZERO;
        for (i, c) in b.0.iter_mut().enumerate() {
            *c = i as f64 - 7.5;
        }
        assert_eq!(Multivector::scalar(1.0) * b, b);
        assert_eq!(Multivector::basis(E1) * Multivector::basis(E1), Multivector::scalar(1.0));
        assert_eq!(Multivector::basis(E0) * Multivector::basis(E0), Multivector::ZERO);
    }

    #[test]
    fn e0_left_lifts_points_to_pseudoscalar() {
        let p = Multivector::basis(E123) * 2.0;
        let lifted = e0_left(&p);
        assert_eq!(lifted, Multivector::basis(E0123) * 2.0);
    }

    #[test]
    fn json_and_bytes() {
        let mut a = Multivector::ZERO;
        a[E013] = -0.1;
        a[S] = 1.0 / 3.0;
        let text = serde_json::to_string(&a).unwrap();
        assert!(text.contains("\"e013\":-0.1"));
        let back: Multivector = serde_json::from_str(&text).unwrap();
        assert_eq!(back, a);
        assert_eq!(Multivector::from_le_bytes(&a.to_le_bytes()).unwrap(), a);
        assert!(serde_json::from_str::<Multivector>("{\"e4\":1.0}").is_err());
    }
}
