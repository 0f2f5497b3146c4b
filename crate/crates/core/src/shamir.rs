//! `(t, s)` threshold secret sharing over GF(2^8), byte-wise.
//!
//! Share `i` (1-based) is the evaluation at `x = i` of a random polynomial
//! of degree `t - 1` whose constant term is the secret byte.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::gf::Field;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecretShares {
    /// `shares[i]` belongs to evaluation point `i + 1`.
    pub shares: Vec<Vec<u8>>,
    pub t: usize,
}

pub fn split_secret(secret: &[u8], t: usize, s: usize, rng: &mut impl RngCore) -> Result<SecretShares> {
    if t == 0 || t > s || s > 255 {
        return Err(Error::InvalidParam(format!("invalid sharing threshold t={t} s={s}")));
    }
    let f = Field::get(8);
    let mut shares = vec![Vec::with_capacity(secret.len()); s];
    let mut coeffs = vec![0u8; t];
    for &byte in secret {
        coeffs[0] = byte;
        rng.fill_bytes(&mut coeffs[1..]);
        for (i, share) in shares.iter_mut().enumerate() {
            let x = (i + 1) as u16;
            // Horner
            let mut acc = 0u16;
            for &c in coeffs.iter().rev() {
                acc = f.mul(acc, x) ^ c as u16;
            }
            share.push(acc as u8);
        }
    }
    Ok(SecretShares { shares, t })
}

/// Lagrange interpolation at zero through `points` (1-based index, bytes),
/// without any threshold check.
pub fn interpolate_at_zero(points: &[(usize, &[u8])]) -> Result<Vec<u8>> {
    let Some(&(_, first)) = points.first() else {
        return Err(Error::ReconstructionRefused { needed: 1, got: 0 });
    };
    let len = first.len();
    if points.iter().any(|(_, p)| p.len() != len) {
        return Err(Error::InvalidParam("shares differ in length".into()));
    }
    for (a, (xa, _)) in points.iter().enumerate() {
        if *xa == 0 || *xa > 255 || points[..a].iter().any(|(xb, _)| xb == xa) {
            return Err(Error::InvalidParam(format!("bad or repeated share index {xa}")));
        }
    }
    let f = Field::get(8);
    // basis_j(0) = prod_{m != j} x_m / (x_m - x_j); subtraction is xor
    let basis: Vec<u16> = points
        .iter()
        .map(|&(xj, _)| {
            points.iter().filter(|&&(xm, _)| xm != xj).fold(1u16, |acc, &(xm, _)| {
                f.mul(acc, f.div(xm as u16, (xm ^ xj) as u16))
            })
        })
        .collect();
    Ok((0..len)
        .map(|b| {
            points
                .iter()
                .zip(&basis)
                .fold(0u16, |acc, ((_, share), &l)| acc ^ f.mul(l, share[b] as u16)) as u8
        })
        .collect())
}

/// Reconstructs the secret from at least `t` shares; uses the first `t`.
pub fn combine_shares(subset: &[(usize, &[u8])], t: usize) -> Result<Vec<u8>> {
    if subset.len() < t {
        return Err(Error::ReconstructionRefused {
            needed: t,
            got: subset.len(),
        });
    }
    interpolate_at_zero(&subset[..t])
}

/// All `k`-element subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= n {
        rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn pts(shares: &SecretShares, idx: &[usize]) -> Vec<(usize, Vec<u8>)> {
        idx.iter().map(|&i| (i + 1, shares.shares[i].clone())).collect()
    }

    fn view(p: &[(usize, Vec<u8>)]) -> Vec<(usize, &[u8])> {
        p.iter().map(|(i, s)| (*i, s.as_slice())).collect()
    }

    #[test]
    fn threshold_one_copies_secret() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let sh = split_secret(b"secret", 1, 4, &mut rng).unwrap();
        for s in &sh.shares {
            assert_eq!(s.as_slice(), b"secret");
        }
        assert_eq!(combine_shares(&view(&pts(&sh, &[2])), 1).unwrap(), b"secret");
    }

    #[test]
    fn three_of_five_every_subset() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let secret: Vec<u8> = (0..16).collect();
        let sh = split_secret(&secret, 3, 5, &mut rng).unwrap();
        let subs = subsets(5, 3);
        assert_eq!(subs.len(), 10);
        for sub in subs {
            assert_eq!(combine_shares(&view(&pts(&sh, &sub)), 3).unwrap(), secret);
        }
        assert!(matches!(
            combine_shares(&view(&pts(&sh, &[0, 1])), 3),
            Err(Error::ReconstructionRefused { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn t_equals_s_exhaustive_single_byte() {
        // t = s = 3: all shares reconstruct; a pair interpolated as a line
        // recovers the secret only by chance (about 1 in 256).
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut lucky = 0;
        for x in 0u8..=255 {
            let sh = split_secret(&[x], 3, 3, &mut rng).unwrap();
            assert_eq!(combine_shares(&view(&pts(&sh, &[0, 1, 2])), 3).unwrap(), vec![x]);
            if interpolate_at_zero(&view(&pts(&sh, &[0, 1]))).unwrap() == vec![x] {
                lucky += 1;
            }
        }
        assert!(lucky <= 8, "pairs recovered the secret {lucky} times out of 256");
    }

    #[test]
    fn fewer_than_t_shares_are_independent_of_secret() {
        // For t = 2, share i alone is uniform over GF(256) for every secret:
        // enumerate the single random coefficient exhaustively.
        let f = Field::get(8);
        for x in [0u16, 1, 77, 255] {
            for point in 1u16..=5 {
                let mut seen = [false; 256];
                for a in 0u16..256 {
                    seen[(f.mul(a, point) ^ x) as usize] = true;
                }
                assert!(seen.iter().all(|&b| b));
            }
        }
    }

    #[test]
    fn subset_enumeration() {
        assert_eq!(subsets(4, 2).len(), 6);
        assert_eq!(subsets(5, 5), vec![vec![0, 1, 2, 3, 4]]);
        assert!(subsets(2, 3).is_empty());
    }
}
