//! Arithmetic in GF(2^m), 2 <= m <= 16, via log/antilog tables.

use std::sync::{Arc, OnceLock};

/// Primitive polynomials (including the x^m term), indexed by m.
const PRIMITIVE: [u32; 17] = [
    0, 0, 0x7, 0xB, 0x13, 0x25, 0x43, 0x89, 0x11D, 0x211, 0x409, 0x805, 0x1053, 0x201B, 0x4443,
    0x8003, 0x1100B,
];

pub const MAX_M: usize = 16;

#[derive(Debug)]
pub struct Field {
    pub m: usize,
    /// Multiplicative order `2^m - 1`.
    pub order: usize,
    /// `exp[i] = alpha^i`, doubled so sums of two logs index directly.
    exp: Vec<u16>,
    /// `log[x]` for nonzero `x`.
    log: Vec<u32>,
}

impl Field {
    fn build(m: usize) -> Field {
        assert!((2..=MAX_M).contains(&m), "unsupported field exponent {m}");
        let order = (1usize << m) - 1;
        let poly = PRIMITIVE[m];
        let mut exp = vec![0u16; 2 * order];
        let mut log = vec![0u32; order + 1];
        let mut x: u32 = 1;
        for i in 0..order {
            exp[i] = x as u16;
            log[x as usize] = i as u32;
            x <<= 1;
            if x & (1 << m) != 0 {
                x ^= poly;
            }
            assert!(x != 1 || i == order - 1, "polynomial for m={m} is not primitive");
        }
        for i in order..2 * order {
            exp[i] = exp[i - order];
        }
        Field { m, order, exp, log }
    }

    /// Shared table for `m`.
    pub fn get(m: usize) -> Arc<Field> {
        static FIELDS: [OnceLock<Arc<Field>>; MAX_M + 1] = [const { OnceLock::new() }; MAX_M + 1];
        FIELDS[m].get_or_init(|| Arc::new(Field::build(m))).clone()
    }

    #[inline]
    pub fn alpha_pow(&self, e: usize) -> u16 {
        self.exp[e % self.order]
    }

    #[inline]
    pub fn mul(&self, a: u16, b: u16) -> u16 {
        if a == 0 || b == 0 {
            return 0;
        }
        self.exp[(self.log[a as usize] + self.log[b as usize]) as usize]
    }

    #[inline]
    pub fn div(&self, a: u16, b: u16) -> u16 {
        assert!(b != 0, "division by zero in GF(2^m)");
        if a == 0 {
            return 0;
        }
        let la = self.log[a as usize] as usize;
        let lb = self.log[b as usize] as usize;
        self.exp[la + self.order - lb]
    }

    #[inline]
    pub fn log(&self, a: u16) -> usize {
        debug_assert!(a != 0);
        self.log[a as usize] as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_tables_build_and_invert() {
        for m in 2..=MAX_M {
            let f = Field::get(m);
            for a in [1u16, 2, 3, (f.order as u16) / 2 + 1] {
                let inv = f.div(1, a);
                assert_eq!(f.mul(a, inv), 1, "m={m} a={a}");
            }
        }
    }

    #[test]
    fn gf16_known_products() {
        let f = Field::get(4);
        // alpha^4 = alpha + 1 for x^4 + x + 1
        assert_eq!(f.alpha_pow(4), 0b0011);
        assert_eq!(f.mul(0b1000, 0b0010), 0b0011);
    }
}
