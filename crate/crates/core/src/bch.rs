//! Shortened binary BCH codes with bounded-distance syndrome decoding
//! (Berlekamp-Massey + Chien search).
//!
//! A code for length `n` is the narrow-sense primitive BCH code of length
//! `2^m - 1` (smallest such `m` with `2^m - 1 >= n`) with roots
//! `alpha^1 ..= alpha^(2c)`, shortened by pinning its top message bits to
//! zero. Codewords are systematic: bits `[0, n - k)` hold parity and bits
//! `[n - k, n)` hold the message, both as polynomial coefficients in
//! ascending degree.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf::{Field, MAX_M};
use crate::types::Imageprint;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BchCodeSpec {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub c: usize,
    /// Generator coefficients `g_0 ..= g_(n-k)`.
    pub generator: Imageprint,
}

impl BchCodeSpec {
    pub fn parity_bits(&self) -> usize {
        self.n - self.k
    }
}

fn field_exponent(n: usize) -> Result<usize> {
    (2..=MAX_M)
        .find(|&m| (1usize << m) - 1 >= n)
        .ok_or_else(|| Error::InvalidParam(format!("code length {n} exceeds GF(2^{MAX_M})")))
}

/// Exponents `j` with `alpha^j` a root of the generator: union of the
/// cyclotomic cosets of `1 ..= 2c` modulo `2^m - 1`.
fn root_exponents(order: usize, c: usize) -> Vec<bool> {
    let mut is_root = vec![false; order];
    for i in 1..=2 * c {
        let mut j = i % order;
        if is_root[j] {
            continue;
        }
        loop {
            is_root[j] = true;
            j = (2 * j) % order;
            if is_root[j] {
                break;
            }
        }
    }
    is_root
}

fn generator_poly(field: &Field, c: usize) -> Vec<bool> {
    let mut g: Vec<u16> = vec![1];
    for (j, root) in root_exponents(field.order, c).into_iter().enumerate() {
        if !root {
            continue;
        }
        // g *= (x + alpha^j)
        let a = field.alpha_pow(j);
        let mut next = vec![0u16; g.len() + 1];
        for (i, &coef) in g.iter().enumerate() {
            next[i + 1] ^= coef;
            next[i] ^= field.mul(coef, a);
        }
        g = next;
    }
    g.into_iter()
        .map(|coef| {
            assert!(coef <= 1, "generator of a binary BCH code must be binary");
            coef == 1
        })
        .collect()
}

/// Parity bits needed to correct `c` errors at field exponent `m`.
fn parity_degree(m: usize, c: usize) -> usize {
    let order = (1usize << m) - 1;
    root_exponents(order, c).into_iter().filter(|&r| r).count()
}

/// Designs the shortened BCH code of length `lambda` correcting `c` errors.
pub fn design_code(lambda: usize, c: usize) -> Result<BchCodeSpec> {
    design_code_min_k(lambda, c, 1)
}

/// Like [`design_code`] but also demands at least `min_k` message bits.
pub fn design_code_min_k(lambda: usize, c: usize, min_k: usize) -> Result<BchCodeSpec> {
    if lambda < 8 {
        return Err(Error::InvalidParam(format!("code length must be >= 8, got {lambda}")));
    }
    let m = field_exponent(lambda)?;
    let r = parity_degree(m, c);
    if r + min_k.max(1) > lambda {
        let max_feasible = (0..c)
            .rev()
            .find(|&cc| parity_degree(m, cc) + min_k.max(1) <= lambda)
            .unwrap_or(0);
        return Err(Error::CapacityInfeasible {
            n: lambda,
            requested: c,
            min_k: min_k.max(1),
            max_feasible,
        });
    }
    let field = Field::get(m);
    let generator = Imageprint::from_bits(&generator_poly(&field, c));
    Ok(BchCodeSpec {
        m,
        n: lambda,
        k: lambda - r,
        c,
        generator,
    })
}

/// Largest correction capacity whose code at length `lambda` keeps at least
/// `min_k` message bits.
pub fn max_capacity(lambda: usize, min_k: usize) -> Result<usize> {
    let m = field_exponent(lambda)?;
    if lambda < min_k.max(1) {
        return Err(Error::InvalidParam(format!("length {lambda} below min_k {min_k}")));
    }
    let mut c = 0;
    while parity_degree(m, c + 1) + min_k.max(1) <= lambda {
        c += 1;
    }
    Ok(c)
}

/// Outcome of bounded-distance decoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded {
    /// Nearest codeword within distance `c`, its message and the number of
    /// corrected bits.
    Message { message: Imageprint, corrected: usize },
    Failure,
}

impl Decoded {
    pub fn message(&self) -> Option<&Imageprint> {
        match self {
            Decoded::Message { message, .. } => Some(message),
            Decoded::Failure => None,
        }
    }
}

/// Encoder/decoder for one [`BchCodeSpec`].
#[derive(Debug, Clone)]
pub struct BchCode {
    spec: BchCodeSpec,
    field: Arc<Field>,
    /// Generator without its leading term, as a packed `r`-bit register.
    feedback: Vec<u64>,
}

impl BchCode {
    pub fn new(spec: BchCodeSpec) -> Result<Self> {
        let r = spec.n.checked_sub(spec.k).filter(|_| spec.k >= 1).ok_or_else(|| {
            Error::Integrity(format!("invalid code dimensions n={} k={}", spec.n, spec.k))
        })?;
        let expected = design_code(spec.n, spec.c)?;
        if expected != spec {
            return Err(Error::Integrity(format!(
                "code spec (n={}, k={}, c={}) does not match the canonical design",
                spec.n, spec.k, spec.c
            )));
        }
        let mut feedback = vec![0u64; r.div_ceil(64).max(1)];
        for i in 0..r {
            if spec.generator.get(i) {
                feedback[i / 64] |= 1 << (i % 64);
            }
        }
        Ok(BchCode {
            field: Field::get(spec.m),
            spec,
            feedback,
        })
    }

    pub fn design(lambda: usize, c: usize) -> Result<Self> {
        Self::new(design_code(lambda, c)?)
    }

    pub fn spec(&self) -> &BchCodeSpec {
        &self.spec
    }

    /// Feeds bits `[from, len)` of `word`, highest degree first, through the
    /// division register. Yields `(sum_{i >= from} w_i x^i) * x^r / x^from mod g`;
    /// with `from = r` that is the systematic parity, with `from = 0` it is
    /// zero exactly for codewords.
    fn remainder(&self, word: &Imageprint, from: usize) -> Vec<u64> {
        let r = self.spec.parity_bits();
        let mut reg = vec![0u64; self.feedback.len()];
        if r == 0 {
            return reg;
        }
        let top_word = (r - 1) / 64;
        let top_bit = (r - 1) % 64;
        let tail_mask = if r % 64 == 0 { u64::MAX } else { (1u64 << (r % 64)) - 1 };
        for i in (from..word.len()).rev() {
            let fb = word.get(i) ^ ((reg[top_word] >> top_bit) & 1 == 1);
            // reg <<= 1
            let mut carry = 0u64;
            for w in reg.iter_mut() {
                let next = *w >> 63;
                *w = (*w << 1) | carry;
                carry = next;
            }
            reg[top_word] &= tail_mask;
            if fb {
                for (w, f) in reg.iter_mut().zip(&self.feedback) {
                    *w ^= f;
                }
            }
        }
        reg
    }

    pub fn encode(&self, msg: &Imageprint) -> Result<Imageprint> {
        let (n, k) = (self.spec.n, self.spec.k);
        if msg.len() != k {
            return Err(Error::Dimension {
                expected: k,
                actual: msg.len(),
            });
        }
        let r = n - k;
        let mut word = Imageprint::zeros(n);
        for i in 0..k {
            if msg.get(i) {
                word.set(r + i, true);
            }
        }
        let parity = self.remainder(&word, r);
        for i in 0..r {
            if (parity[i / 64] >> (i % 64)) & 1 == 1 {
                word.set(i, true);
            }
        }
        Ok(word)
    }

    pub fn is_codeword(&self, word: &Imageprint) -> bool {
        word.len() == self.spec.n && self.remainder(word, 0).iter().all(|&w| w == 0)
    }

    fn message_of(&self, word: &Imageprint) -> Imageprint {
        word.slice(self.spec.parity_bits(), self.spec.k)
    }

    /// Syndromes `S_1 ..= S_2c` (index 0 unused).
    fn syndromes(&self, word: &Imageprint) -> Vec<u16> {
        let f = &*self.field;
        let two_c = 2 * self.spec.c;
        let mut s = vec![0u16; two_c + 1];
        let ones: Vec<usize> = (0..word.len()).filter(|&i| word.get(i)).collect();
        for j in (1..=two_c).step_by(2) {
            let mut acc = 0u16;
            for &i in &ones {
                acc ^= f.alpha_pow(i * j);
            }
            s[j] = acc;
        }
        // S_2j = S_j^2 for binary words
        for j in (2..=two_c).step_by(2) {
            s[j] = f.mul(s[j / 2], s[j / 2]);
        }
        s
    }

    pub fn decode(&self, word: &Imageprint) -> Result<Decoded> {
        let n = self.spec.n;
        if word.len() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: word.len(),
            });
        }
        let c = self.spec.c;
        if c == 0 {
            return Ok(Decoded::Message {
                message: self.message_of(word),
                corrected: 0,
            });
        }
        let s = self.syndromes(word);
        if s[1..].iter().all(|&x| x == 0) {
            if !self.is_codeword(word) {
                return Ok(Decoded::Failure);
            }
            return Ok(Decoded::Message {
                message: self.message_of(word),
                corrected: 0,
            });
        }

        let f = &*self.field;
        // Berlekamp-Massey
        let mut sigma = vec![0u16; 2 * c + 2];
        let mut prev = vec![0u16; 2 * c + 2];
        sigma[0] = 1;
        prev[0] = 1;
        let mut l = 0usize;
        let mut shift = 1usize;
        let mut b = 1u16;
        for step in 0..2 * c {
            let mut d = s[step + 1];
            for i in 1..=l {
                d ^= f.mul(sigma[i], s[step + 1 - i]);
            }
            if d == 0 {
                shift += 1;
                continue;
            }
            let coef = f.div(d, b);
            if 2 * l <= step {
                let saved = sigma.clone();
                for i in 0..sigma.len() - shift {
                    sigma[i + shift] ^= f.mul(coef, prev[i]);
                }
                l = step + 1 - l;
                prev = saved;
                b = d;
                shift = 1;
            } else {
                for i in 0..sigma.len() - shift {
                    sigma[i + shift] ^= f.mul(coef, prev[i]);
                }
                shift += 1;
            }
        }
        let degree = sigma.iter().rposition(|&x| x != 0).unwrap_or(0);
        if l > c || degree != l {
            return Ok(Decoded::Failure);
        }

        // Chien search over the unshortened positions only
        let mut positions = Vec::with_capacity(l);
        let order = f.order;
        for pos in 0..n {
            // evaluate sigma at alpha^(-pos)
            let inv = (order - pos % order) % order;
            let mut acc = 0u16;
            for (i, &coef) in sigma.iter().enumerate().take(l + 1) {
                if coef != 0 {
                    acc ^= f.mul(coef, f.alpha_pow(inv * i));
                }
            }
            if acc == 0 {
                positions.push(pos);
            }
        }
        if positions.len() != l {
            return Ok(Decoded::Failure);
        }
        let mut fixed = word.clone();
        for &p in &positions {
            fixed.flip(p);
        }
        if !self.is_codeword(&fixed) {
            return Ok(Decoded::Failure);
        }
        Ok(Decoded::Message {
            message: self.message_of(&fixed),
            corrected: l,
        })
    }
}
