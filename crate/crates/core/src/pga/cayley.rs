//! Multiplication table of the basis blades.

use std::sync::OnceLock;

use super::blade::{blade_from_bits, BLADE_BITS, BLADE_NAMES, DIM, E0, E1, E2, E3, S};
use super::PgaError;

/// Result of multiplying two basis blades: `sign * blade`. A zero sign means
/// the product vanishes because `e0` appears twice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BladeProduct {
    pub blade: usize,
    pub sign: i8,
}

/// One structurally nonzero entry of the product tensor.
#[derive(Debug, Clone, Copy)]
pub struct ProductTerm {
    pub lhs: usize,
    pub rhs: usize,
    pub out: usize,
    pub sign: f64,
}

#[derive(Debug, Clone)]
pub struct CayleyTable {
    entries: [[BladeProduct; DIM]; DIM],
    terms: Vec<ProductTerm>,
}

impl CayleyTable {
    #[inline]
    pub fn get(&self, lhs: usize, rhs: usize) -> BladeProduct {
        self.entries[lhs][rhs]
    }

    /// Nonzero entries in row-major `(lhs, rhs)` order.
    pub fn terms(&self) -> &[ProductTerm] {
        &self.terms
    }
}

/// Sign and blade of the product of two generator bitmasks, from the axioms
/// `e0 e0 = 0`, `ei ei = 1` and `ei ej = -ej ei`.
fn bitmask_product(a: u8, b: u8) -> (u8, i8) {
    if a & b & 1 != 0 {
        return (a ^ b, 0);
    }
    // Moving each generator of `b` left past the higher generators of `a`.
    let mut swaps = 0u32;
    for i in 0..4 {
        if b & (1 << i) != 0 {
            swaps += (a >> (i + 1)).count_ones();
        }
    }
    let sign = if swaps % 2 == 0 { 1 } else { -1 };
    (a ^ b, sign)
}

/// Builds the 16×16 table and checks the defining axioms and associativity on
/// every basis triple.
pub fn build_cayley_table() -> Result<CayleyTable, PgaError> {
    let mut entries = [[BladeProduct { blade: 0, sign: 0 }; DIM]; DIM];
    let mut terms = Vec::with_capacity(192);
    for lhs in 0..DIM {
        for rhs in 0..DIM {
            let (bits, sign) = bitmask_product(BLADE_BITS[lhs], BLADE_BITS[rhs]);
            let blade = blade_from_bits(bits).ok_or_else(|| {
                PgaError::TableConstruction(format!("{} * {} left the blade basis", BLADE_NAMES[lhs], BLADE_NAMES[rhs]))
            })?;
            entries[lhs][rhs] = BladeProduct { blade, sign };
            if sign != 0 {
                terms.push(ProductTerm { lhs, rhs, out: blade, sign: f64::from(sign) });
            }
        }
    }
    let table = CayleyTable { entries, terms };
    verify_axioms(&table)?;
    verify_associativity(&table)?;
    Ok(table)
}

fn verify_axioms(table: &CayleyTable) -> Result<(), PgaError> {
    let fail = |what: &str| Err(PgaError::TableConstruction(what.to_string()));
    if table.get(E0, E0).sign != 0 {
        return fail("e0 e0 must vanish");
    }
    let euclid = [E1, E2, E3];
    for &i in &euclid {
        if table.get(i, i) != (BladeProduct { blade: S, sign: 1 }) {
            return fail("ei ei must be 1");
        }
    }
    let gens = [E0, E1, E2, E3];
    for &i in &gens {
        for &j in &gens {
            if i == j {
                continue;
            }
            let (a, b) = (table.get(i, j), table.get(j, i));
            if a.blade != b.blade || a.sign != -b.sign {
                return fail("distinct generators must anticommute");
            }
        }
    }
    Ok(())
}

fn verify_associativity(table: &CayleyTable) -> Result<(), PgaError> {
    for a in 0..DIM {
        for b in 0..DIM {
            let ab = table.get(a, b);
            for c in 0..DIM {
                let left = table.get(ab.blade, c);
                let bc = table.get(b, c);
                let right = table.get(a, bc.blade);
                let ls = ab.sign * left.sign;
                let rs = bc.sign * right.sign;
                if ls != rs || (ls != 0 && left.blade != right.blade) {
                    return Err(PgaError::TableConstruction(format!(
                        "associativity fails for ({}, {}, {})",
                        BLADE_NAMES[a], BLADE_NAMES[b], BLADE_NAMES[c]
                    )));
                }
            }
        }
    }
    Ok(())
}

static TABLE: OnceLock<CayleyTable> = OnceLock::new();

/// Process-wide table, built on first use.
pub fn cayley() -> &'static CayleyTable {
    TABLE.get_or_init(|| build_cayley_table().expect("blade basis is closed under the product"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pga::blade::E12;

    #[test]
    fn axioms_from_the_table() {
        let t = cayley();
        assert_eq!(t.get(E0, E0).sign, 0);
        assert_eq!(t.get(E1, E2), BladeProduct { blade: E12, sign: 1 });
        assert_eq!(t.get(E2, E1), BladeProduct { blade: E12, sign: -1 });
        for i in [E1, E2, E3] {
            assert_eq!(t.get(i, i), BladeProduct { blade: S, sign: 1 });
        }
    }

    #[test]
    fn degenerate_pairs_are_the_only_zeros() {
        // 8 blades contain e0, so 64 pairs annihilate.
        assert_eq!(cayley().terms().len(), 256 - 64);
    }
}
