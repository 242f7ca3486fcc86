//! Basis blades of G(3,0,1) and their canonical component order.
//!
//! The order is `s, e0, e1, e2, e3, e01, e02, e03, e12, e13, e23, e012, e013,
//! e023, e123, e0123`. Every module indexes multivector components through
//! the constants below; nothing else may hard-code an offset.

pub const S: usize = 0;
pub const E0: usize = 1;
pub const E1: usize = 2;
pub const E2: usize = 3;
pub const E3: usize = 4;
pub const E01: usize = 5;
pub const E02: usize = 6;
pub const E03: usize = 7;
pub const E12: usize = 8;
pub const E13: usize = 9;
pub const E23: usize = 10;
pub const E012: usize = 11;
pub const E013: usize = 12;
pub const E023: usize = 13;
pub const E123: usize = 14;
pub const E0123: usize = 15;

/// Number of components of a multivector.
pub const DIM: usize = 16;

pub const BLADE_NAMES: [&str; DIM] =
    ["s", "e0", "e1", "e2", "e3", "e01", "e02", "e03", "e12", "e13", "e23", "e012", "e013", "e023", "e123", "e0123"];

/// Generator bitmask of each blade: bit `i` set means `e_i` is a factor.
pub const BLADE_BITS: [u8; DIM] = [
    0b0000, 0b0001, 0b0010, 0b0100, 0b1000, 0b0011, 0b0101, 0b1001, 0b0110, 0b1010, 0b1100, 0b0111, 0b1011, 0b1101,
    0b1110, 0b1111,
];

pub const GRADE: [usize; DIM] = [0, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2, 3, 3, 3, 3, 4];

/// Blades that do not contain the degenerate generator `e0`. These carry the
/// E(3)-invariant part of the squared magnitude.
pub const NON_DEGENERATE: [usize; 8] = [S, E1, E2, E3, E12, E13, E23, E123];

/// True when the blade has `e0` as a factor.
#[inline]
pub const fn contains_e0(blade: usize) -> bool {
    BLADE_BITS[blade] & 1 == 1
}

/// Index of the blade with the given generator bitmask.
pub fn blade_from_bits(bits: u8) -> Option<usize> {
    BLADE_BITS.iter().position(|&b| b == bits)
}

pub fn blade_from_name(name: &str) -> Option<usize> {
    BLADE_NAMES.iter().position(|&n| n == name)
}

/// Blade `e0 ∧ b` for a blade without `e0`; `e0` is the lowest generator, so
/// the left product `e0 b` carries sign +1.
pub fn e0_wedge(blade: usize) -> Option<usize> {
    if contains_e0(blade) {
        None
    } else {
        blade_from_bits(BLADE_BITS[blade] | 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bits_are_consistent_with_names_and_grades() {
        for i in 0..DIM {
            assert_eq!(BLADE_BITS[i].count_ones() as usize, GRADE[i]);
            let digits: Vec<u8> =
                BLADE_NAMES[i].trim_start_matches('e').trim_start_matches('s').bytes().map(|c| c - b'0').collect();
            let bits = digits.iter().fold(0u8, |acc, d| acc | (1 << d));
            assert_eq!(bits, BLADE_BITS[i], "blade {}", BLADE_NAMES[i]);
        }
        for w in BLADE_BITS.windows(2) {
            assert_ne!(w[0], w[1]);
        }
    }

    #[test]
    fn non_degenerate_blades_exclude_e0() {
        let expected: Vec<usize> = (0..DIM).filter(|&b| !contains_e0(b)).collect();
        assert_eq!(expected, NON_DEGENERATE.to_vec());
    }
}
