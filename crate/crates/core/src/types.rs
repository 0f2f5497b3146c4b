//! Shared domain types: parameter sets, embeddings, packed imageprints and
//! Hamming arithmetic.

use std::fmt;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Verification hash length in bits.
pub const HASH_BITS: usize = 256;

/// Slack used when flooring `lambda * (1 - tau)`; decimal taus such as 0.682
/// are not exactly representable and would otherwise lose a whole bit.
const CAPACITY_EPS: f64 = 1e-9;

/// Number of bit errors tolerated by a `lambda`-bit print at similarity
/// threshold `tau`: `floor(lambda * (1 - tau))`.
pub fn correction_capacity(lambda: usize, tau: f64) -> usize {
    let raw = lambda as f64 * (1.0 - tau);
    if raw <= 0.0 {
        return 0;
    }
    (raw + CAPACITY_EPS).floor() as usize
}

/// Pipeline variant: single/multi layer crossed with single/multi segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Slss,
    Mlss,
    Slms,
    Mlms,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Slss, Variant::Mlss, Variant::Slms, Variant::Mlms];

    /// `(segments, layers)` for this variant.
    pub fn shape(self) -> (usize, usize) {
        match self {
            Variant::Slss => (1, 1),
            Variant::Mlss => (1, 2),
            Variant::Slms => (5, 1),
            Variant::Mlms => (5, 2),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Slss => "slss",
            Variant::Mlss => "mlss",
            Variant::Slms => "slms",
            Variant::Mlms => "mlms",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "slss" => Ok(Variant::Slss),
            "mlss" => Ok(Variant::Mlss),
            "slms" => Ok(Variant::Slms),
            "mlms" => Ok(Variant::Mlms),
            other => Err(Error::Config(format!(
                "unknown variant {other:?}, expected one of slss|mlss|slms|mlms"
            ))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Pipeline parameters shared by enrollment, authentication and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSet {
    /// Bits per (segment, layer) imageprint.
    pub lambda: usize,
    /// Similarity threshold; a print matches when its normalized Hamming
    /// similarity is at least `tau`.
    pub tau: f64,
    pub pc_lo: usize,
    pub pc_hi: usize,
    /// Segment count.
    pub s: usize,
    /// Segments that must match.
    pub t: usize,
    /// Layer count.
    pub l: usize,
    pub hash_len: usize,
}

impl ParamSet {
    pub fn new(variant: Variant, lambda: usize, tau: f64, pc_lo: usize, pc_hi: usize) -> Result<Self> {
        let (s, l) = variant.shape();
        let t = if s == 1 { 1 } else { 3 };
        let p = ParamSet {
            lambda,
            tau,
            pc_lo,
            pc_hi,
            s,
            t,
            l,
            hash_len: HASH_BITS,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if !(self.tau > 0.5 && self.tau <= 1.0) {
            return bad(format!("tau must lie in (0.5, 1.0], got {}", self.tau));
        }
        if self.lambda < 8 {
            return bad(format!("lambda must be >= 8, got {}", self.lambda));
        }
        if self.pc_lo >= self.pc_hi {
            return bad(format!("empty PC range [{}, {})", self.pc_lo, self.pc_hi));
        }
        if self.s == 0 || self.t == 0 || self.t > self.s {
            return bad(format!("need 1 <= t <= s, got t={} s={}", self.t, self.s));
        }
        if self.s != 1 && self.s != 5 {
            return bad(format!("segment count must be 1 or 5, got {}", self.s));
        }
        if self.l == 0 {
            return bad("layer count must be >= 1".into());
        }
        if self.hash_len != HASH_BITS {
            return bad(format!("hash_len is fixed at {HASH_BITS}"));
        }
        Ok(())
    }

    /// Total imageprint length `s * l * lambda`.
    pub fn total_bits(&self) -> usize {
        self.s * self.l * self.lambda
    }

    /// Bits matched per segment: the layer prints of a segment are
    /// concatenated before thresholding.
    pub fn segment_bits(&self) -> usize {
        self.l * self.lambda
    }

    pub fn capacity(&self) -> usize {
        correction_capacity(self.segment_bits(), self.tau)
    }

    pub fn variant(&self) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.shape() == (self.s, self.l))
    }
}

/// Real-valued feature vector for one image, segment and layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub source_tag: String,
}

impl Embedding {
    pub fn new(values: Vec<f64>, source_tag: impl Into<String>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParam(format!("embedding entry {i} is not finite")));
        }
        Ok(Embedding {
            values,
            source_tag: source_tag.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Packed bitstring. Bit `i` lives in byte `i / 8` at position `i % 8`
/// (little-endian within bytes); internally words are little-endian u64.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Imageprint {
    words: Vec<u64>,
    len: usize,
}

impl Imageprint {
    pub fn zeros(len: usize) -> Self {
        Imageprint {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut p = Imageprint {
            words: vec![u64::MAX; len.div_ceil(64)],
            len,
        };
        p.mask_tail();
        p
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut p = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            p.set(i, b);
        }
        p
    }

    /// Unpacks `len` bits from little-endian packed bytes.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::Dimension {
                expected: len.div_ceil(8),
                actual: bytes.len(),
            });
        }
        let mut p = Self::zeros(len);
        for (i, &b) in bytes.iter().enumerate() {
            p.words[i / 8] |= (b as u64) << (8 * (i % 8));
        }
        if p.words.iter().zip(Self::ones(len).words.iter()).any(|(w, m)| w & !m != 0) {
            return Err(Error::Integrity("bits set beyond bitstring length".into()));
        }
        Ok(p)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        (0..self.len.div_ceil(8))
            .map(|i| (self.words[i / 8] >> (8 * (i % 8))) as u8)
            .collect()
    }

    pub fn to_bits(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.get(i)).collect()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, bit: bool) {
        debug_assert!(i < self.len);
        let mask = 1u64 << (i % 64);
        if bit {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn xor(&self, other: &Imageprint) -> Result<Imageprint> {
        check_len(self, other)?;
        Ok(Imageprint {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a ^ b).collect(),
            len: self.len,
        })
    }

    pub fn complement(&self) -> Imageprint {
        let mut p = Imageprint {
            words: self.words.iter().map(|w| !w).collect(),
            len: self.len,
        };
        p.mask_tail();
        p
    }

    /// Concatenates prints in order.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a Imageprint>) -> Imageprint {
        let parts: Vec<&Imageprint> = parts.into_iter().collect();
        let total = parts.iter().map(|p| p.len).sum();
        let mut out = Imageprint::zeros(total);
        let mut at = 0;
        for p in parts {
            for i in 0..p.len {
                if p.get(i) {
                    out.set(at + i, true);
                }
            }
            at += p.len;
        }
        out
    }

    /// Copies bits `[start, start + len)`.
    pub fn slice(&self, start: usize, len: usize) -> Imageprint {
        assert!(start + len <= self.len, "slice out of range");
        let mut out = Imageprint::zeros(len);
        for i in 0..len {
            if self.get(start + i) {
                out.set(i, true);
            }
        }
        out
    }

    /// Hamming distance without the length check; callers guarantee equal lengths.
    #[inline]
    pub fn distance_unchecked(&self, other: &Imageprint) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    fn mask_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn to_base64(&self) -> String {
        B64.encode(self.to_bytes())
    }

    pub fn from_base64(s: &str, len: usize) -> Result<Self> {
        let bytes = B64
            .decode(s)
            .map_err(|e| Error::Integrity(format!("bad base64 bitstring: {e}")))?;
        Self::from_bytes(&bytes, len)
    }
}

impl fmt::Debug for Imageprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Imageprint({} bits: ", self.len)?;
        for i in 0..self.len.min(64) {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        if self.len > 64 {
            f.write_str("...")?;
        }
        f.write_str(")")
    }
}

#[derive(Serialize, Deserialize)]
struct PackedBits {
    len: usize,
    bits: String,
}

impl Serialize for Imageprint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PackedBits {
            len: self.len,
            bits: self.to_base64(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Imageprint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let packed = PackedBits::deserialize(d)?;
        Imageprint::from_base64(&packed.bits, packed.len).map_err(serde::de::Error::custom)
    }
}

fn check_len(a: &Imageprint, b: &Imageprint) -> Result<()> {
    if a.len != b.len {
        return Err(Error::Dimension {
            expected: a.len,
            actual: b.len,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HammingStats {
    pub distance: usize,
    pub length: usize,
    pub normalized_distance: f64,
    pub similarity: f64,
}

impl HammingStats {
    pub fn from_distance(distance: usize, length: usize) -> Self {
        let normalized_distance = distance as f64 / length as f64;
        HammingStats {
            distance,
            length,
            normalized_distance,
            similarity: 1.0 - normalized_distance,
        }
    }

    /// Match decision at threshold `tau`, evaluated on the integer error
    /// budget so it agrees exactly with a decoder of capacity
    /// `correction_capacity(length, tau)`.
    pub fn matches(&self, tau: f64) -> bool {
        self.distance <= correction_capacity(self.length, tau)
    }
}

pub fn hamming(a: &Imageprint, b: &Imageprint) -> Result<HammingStats> {
    check_len(a, b)?;
    if a.is_empty() {
        return Err(Error::InvalidParam("hamming distance of empty prints".into()));
    }
    Ok(HammingStats::from_distance(a.distance_unchecked(b), a.len))
}
