//! Code-offset secure sketch over imageprints.
//!
//! Enrollment draws a secret `x`, stores `SS1 = print XOR ECC(x)` and
//! `SS2 = H(x)`. Authentication decodes `candidate XOR SS1` and compares the
//! hash. With `s` segments the secret is split into `(t, s)` shares and
//! segment `i` masks `ECC(x_i)`; any `t` recovered shares that hash back to
//! `SS2` authenticate.
//!
//! The layer prints of one segment are concatenated into a single
//! `l * lambda`-bit word protected by one code. `SS1` is stored as
//! `s * l` chunks of `lambda` bits, segment-major.
//!
//! Messages shorter than the code dimension are completed with a hash
//! expansion of the secret (or share). Decoding only succeeds when the
//! recovered completion matches, so a decoder miscorrection can never
//! produce an accepted secret.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bch::{design_code_min_k, BchCode, BchCodeSpec, Decoded};
use crate::codec::bytes_b64;
use crate::error::{Error, Result};
use crate::shamir::{combine_shares, split_secret, subsets};
use crate::types::{correction_capacity, Imageprint, ParamSet, HASH_BITS};

pub const RECORD_VERSION: &str = "ailock.record.v1";
const SS2_DOMAIN: &[u8] = b"ailock.v1.ss2";
const PAD_DOMAIN: &[u8] = b"ailock.v1.pad";
const KDF_INFO: &[u8] = b"ailock.v1.x";

/// Upper bound on the secret length in bits.
pub const MAX_SECRET_BITS: usize = 128;
/// Secrets shorter than this trigger a warning in the CLI.
pub const WEAK_SECRET_BITS: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShareScheme {
    None,
    Threshold { t: usize, s: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnrollmentRecord {
    pub version: String,
    pub params: ParamSet,
    /// One code per segment.
    pub code_specs: Vec<BchCodeSpec>,
    pub secret_bits: usize,
    pub share_scheme: ShareScheme,
    /// Present in two-factor records.
    #[serde(default, with = "opt_b64", skip_serializing_if = "Option::is_none")]
    pub salt: Option<Vec<u8>>,
    pub ss1: Vec<Imageprint>,
    #[serde(with = "bytes_b64")]
    pub ss2: Vec<u8>,
}

mod opt_b64 {
    use base64::engine::general_purpose::STANDARD as B64;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(b) => s.serialize_str(&B64.encode(b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| B64.decode(s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Reject,
}

impl Decision {
    pub fn is_accept(self) -> bool {
        self == Decision::Accept
    }
}

/// Where the protected secret comes from.
#[derive(Debug, Clone)]
pub enum SecretSource<'a> {
    Random,
    /// Two-factor mode: `x = KDF(secondary, salt)` with a fresh salt.
    Secondary(&'a [u8]),
}

/// `H(x)`: SHA-256 over a domain tag, the bit length and the packed bits.
pub fn secret_hash(x: &Imageprint) -> Vec<u8> {
    let mut h = Sha256::new();
    h.update(SS2_DOMAIN);
    h.update((x.len() as u32).to_le_bytes());
    h.update(x.to_bytes());
    let out = h.finalize().to_vec();
    debug_assert_eq!(out.len() * 8, HASH_BITS);
    out
}

/// HKDF-SHA256 of the secondary secret under `salt`, truncated to
/// `out_len_bits`.
pub fn derive_locked_secret(secondary: &[u8], salt: &[u8], out_len_bits: usize) -> Result<Imageprint> {
    if out_len_bits == 0 || out_len_bits > 255 * 256 {
        return Err(Error::InvalidParam(format!("cannot derive {out_len_bits} bits")));
    }
    let hk = hkdf::Hkdf::<Sha256>::new(Some(salt), secondary);
    let mut okm = vec![0u8; out_len_bits.div_ceil(8)];
    hk.expand(KDF_INFO, &mut okm)
        .map_err(|e| Error::InvalidParam(format!("hkdf expand: {e}")))?;
    Ok(truncate_bits(&okm, out_len_bits))
}

fn truncate_bits(bytes: &[u8], bits: usize) -> Imageprint {
    let mut p = Imageprint::zeros(bits);
    for i in 0..bits {
        if (bytes[i / 8] >> (i % 8)) & 1 == 1 {
            p.set(i, true);
        }
    }
    p
}

/// Message for a code of dimension `k`: the payload followed by a hash
/// expansion of it (tagged with the segment index).
fn complete_message(payload: &Imageprint, k: usize, segment: usize) -> Imageprint {
    debug_assert!(payload.len() <= k);
    let fill = k - payload.len();
    let mut bytes = Vec::with_capacity(fill.div_ceil(8));
    let mut counter = 0u32;
    while bytes.len() * 8 < fill {
        let mut h = Sha256::new();
        h.update(PAD_DOMAIN);
        h.update((segment as u32).to_le_bytes());
        h.update(counter.to_le_bytes());
        h.update((payload.len() as u32).to_le_bytes());
        h.update(payload.to_bytes());
        bytes.extend_from_slice(&h.finalize());
        counter += 1;
    }
    let pad = truncate_bits(&bytes, fill);
    Imageprint::concat([payload, &pad])
}

/// Splits a decoded message back into its payload, or `None` when the
/// completion does not match.
fn verify_message(message: &Imageprint, payload_bits: usize, segment: usize) -> Option<Imageprint> {
    let payload = message.slice(0, payload_bits);
    (complete_message(&payload, message.len(), segment) == *message).then_some(payload)
}

fn segment_prints(prints: &[Imageprint], params: &ParamSet) -> Result<Vec<Imageprint>> {
    let expected = params.s * params.l;
    if prints.len() != expected {
        return Err(Error::Dimension {
            expected,
            actual: prints.len(),
        });
    }
    if let Some(p) = prints.iter().find(|p| p.len() != params.lambda) {
        return Err(Error::Dimension {
            expected: params.lambda,
            actual: p.len(),
        });
    }
    Ok(prints.chunks(params.l).map(Imageprint::concat).collect())
}

fn secret_len(k_min: usize, sharing: bool) -> usize {
    let bits = k_min.min(MAX_SECRET_BITS);
    if sharing {
        bits / 8 * 8
    } else {
        bits
    }
}

/// Designs one code per segment for the given per-segment thresholds.
pub fn design_segment_codes(params: &ParamSet, taus: &[f64]) -> Result<Vec<BchCodeSpec>> {
    if taus.len() != params.s {
        return Err(Error::Dimension {
            expected: params.s,
            actual: taus.len(),
        });
    }
    let n = params.segment_bits();
    let min_k = if params.s > 1 { 8 } else { 1 };
    taus.iter()
        .map(|&tau| design_code_min_k(n, correction_capacity(n, tau), min_k))
        .collect()
}

/// Enrollment with a single threshold `params.tau` for every segment.
pub fn enroll(prints: &[Imageprint], params: &ParamSet, rng_seed: u64) -> Result<EnrollmentRecord> {
    let taus = vec![params.tau; params.s];
    let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
    enroll_with(prints, params, &taus, SecretSource::Random, &mut rng)
}

pub fn enroll_with(
    prints: &[Imageprint],
    params: &ParamSet,
    taus: &[f64],
    source: SecretSource<'_>,
    rng: &mut impl RngCore,
) -> Result<EnrollmentRecord> {
    params.validate()?;
    let seg_prints = segment_prints(prints, params)?;
    let code_specs = design_segment_codes(params, taus)?;
    let codes = code_specs
        .iter()
        .cloned()
        .map(BchCode::new)
        .collect::<Result<Vec<_>>>()?;
    let sharing = params.s > 1;
    let k_min = code_specs.iter().map(|c| c.k).min().expect("s >= 1");
    let secret_bits = secret_len(k_min, sharing);

    let (x, salt) = match source {
        SecretSource::Random => {
            let mut bytes = vec![0u8; secret_bits.div_ceil(8)];
            rng.fill_bytes(&mut bytes);
            (truncate_bits(&bytes, secret_bits), None)
        }
        SecretSource::Secondary(secondary) => {
            let mut salt = vec![0u8; 16];
            rng.fill_bytes(&mut salt);
            (derive_locked_secret(secondary, &salt, secret_bits)?, Some(salt))
        }
    };

    let payloads: Vec<Imageprint> = if sharing {
        let shares = split_secret(&x.to_bytes(), params.t, params.s, rng)?;
        shares
            .shares
            .iter()
            .map(|s| Imageprint::from_bytes(s, secret_bits))
            .collect::<Result<_>>()?
    } else {
        vec![x.clone()]
    };

    let mut ss1 = Vec::with_capacity(params.s * params.l);
    for (seg, ((code, payload), print)) in codes.iter().zip(&payloads).zip(&seg_prints).enumerate() {
        let msg = complete_message(payload, code.spec().k, seg);
        let masked = print.xor(&code.encode(&msg)?)?;
        for layer in 0..params.l {
            ss1.push(masked.slice(layer * params.lambda, params.lambda));
        }
    }

    Ok(EnrollmentRecord {
        version: RECORD_VERSION.to_string(),
        params: params.clone(),
        code_specs,
        secret_bits,
        share_scheme: if sharing {
            ShareScheme::Threshold {
                t: params.t,
                s: params.s,
            }
        } else {
            ShareScheme::None
        },
        salt,
        ss1,
        ss2: secret_hash(&x),
    })
}

impl EnrollmentRecord {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Integrity(m));
        if self.version != RECORD_VERSION {
            return bad(format!("unsupported record version {:?}", self.version));
        }
        self.params.validate().map_err(|e| Error::Integrity(e.to_string()))?;
        let p = &self.params;
        if self.ss1.len() != p.s * p.l || self.ss1.iter().any(|e| e.len() != p.lambda) {
            return bad("ss1 shape does not match parameters".into());
        }
        if self.ss2.len() * 8 != HASH_BITS {
            return bad("ss2 must be 256 bits".into());
        }
        if self.code_specs.len() != p.s || self.code_specs.iter().any(|c| c.n != p.segment_bits()) {
            return bad("code specs do not match parameters".into());
        }
        let k_min = self.code_specs.iter().map(|c| c.k).min().unwrap_or(0);
        if self.secret_bits == 0 || self.secret_bits != secret_len(k_min, p.s > 1) {
            return bad("secret length inconsistent with codes".into());
        }
        let expected_scheme = if p.s > 1 {
            ShareScheme::Threshold { t: p.t, s: p.s }
        } else {
            ShareScheme::None
        };
        if self.share_scheme != expected_scheme {
            return bad("share scheme inconsistent with parameters".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: EnrollmentRecord =
            serde_json::from_str(text).map_err(|e| Error::Integrity(format!("unreadable record: {e}")))?;
        rec.validate()?;
        Ok(rec)
    }

    pub fn is_two_factor(&self) -> bool {
        self.salt.is_some()
    }
}

/// Recovers the secret `x` if the candidate prints are close enough.
pub fn recover_secret(record: &EnrollmentRecord, prints: &[Imageprint]) -> Result<Option<Imageprint>> {
    record.validate()?;
    let p = &record.params;
    let seg_prints = segment_prints(prints, p)?;
    let codes = record
        .code_specs
        .iter()
        .cloned()
        .map(BchCode::new)
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::Integrity(e.to_string()))?;

    let mut payloads: Vec<Option<Imageprint>> = Vec::with_capacity(p.s);
    for (seg, (code, print)) in codes.iter().zip(&seg_prints).enumerate() {
        let masked = Imageprint::concat(&record.ss1[seg * p.l..(seg + 1) * p.l]);
        let payload = match code.decode(&print.xor(&masked)?)? {
            Decoded::Message { message, .. } => verify_message(&message, record.secret_bits, seg),
            Decoded::Failure => None,
        };
        payloads.push(payload);
    }

    match record.share_scheme {
        ShareScheme::None => Ok(payloads
            .into_iter()
            .next()
            .flatten()
            .filter(|x| secret_hash(x) == record.ss2)),
        ShareScheme::Threshold { t, .. } => {
            let decoded: Vec<(usize, Vec<u8>)> = payloads
                .iter()
                .enumerate()
                .filter_map(|(i, p)| p.as_ref().map(|p| (i + 1, p.to_bytes())))
                .collect();
            for subset in subsets(decoded.len(), t) {
                let pts: Vec<(usize, &[u8])> = subset.iter().map(|&i| (decoded[i].0, decoded[i].1.as_slice())).collect();
                let bytes = combine_shares(&pts, t)?;
                let x = Imageprint::from_bytes(&bytes, record.secret_bits)?;
                if secret_hash(&x) == record.ss2 {
                    return Ok(Some(x));
                }
            }
            Ok(None)
        }
    }
}

pub fn authenticate(record: &EnrollmentRecord, prints: &[Imageprint]) -> Result<Decision> {
    if record.is_two_factor() {
        return Err(Error::InvalidParam("two-factor record needs the secondary secret".into()));
    }
    Ok(match recover_secret(record, prints)? {
        Some(_) => Decision::Accept,
        None => Decision::Reject,
    })
}

/// Two-factor check: the prints must unlock `x` and `x` must equal the key
/// derived from `secondary` under the stored salt.
pub fn authenticate_two_factor(record: &EnrollmentRecord, prints: &[Imageprint], secondary: &[u8]) -> Result<Decision> {
    let salt = record
        .salt
        .as_ref()
        .ok_or_else(|| Error::InvalidParam("record has no salt; not a two-factor record".into()))?;
    let expected = derive_locked_secret(secondary, salt, record.secret_bits)?;
    Ok(match recover_secret(record, prints)? {
        Some(x) if x == expected => Decision::Accept,
        _ => Decision::Reject,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Variant;
    use rand::Rng;

    fn random_print(rng: &mut ChaCha20Rng, n: usize) -> Imageprint {
        Imageprint::from_bits(&(0..n).map(|_| rng.random::<bool>()).collect::<Vec<_>>())
    }

    fn noisy(rng: &mut ChaCha20Rng, p: &Imageprint, flips: usize) -> Imageprint {
        let mut q = p.clone();
        for i in rand::seq::index::sample(rng, p.len(), flips) {
            q.flip(i);
        }
        q
    }

    #[test]
    fn single_segment_round_trip() {
        let params = ParamSet::new(Variant::Slss, 255, 0.9, 0, 10).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let print = random_print(&mut rng, 255);
        let rec = enroll(std::slice::from_ref(&print), &params, 7).unwrap();
        assert_eq!(authenticate(&rec, &[print.clone()]).unwrap(), Decision::Accept);
        let c = rec.code_specs[0].c;
        assert_eq!(c, 25);
        assert!(authenticate(&rec, &[noisy(&mut rng, &print, c)]).unwrap().is_accept());
        assert!(!authenticate(&rec, &[print.complement()]).unwrap().is_accept());
        assert!(!authenticate(&rec, &[noisy(&mut rng, &print, c + 1)]).unwrap().is_accept());
    }

    #[test]
    fn masked_entry_is_a_codeword_offset() {
        let params = ParamSet::new(Variant::Slss, 127, 0.9, 0, 10).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let print = random_print(&mut rng, 127);
        let rec = enroll(std::slice::from_ref(&print), &params, 3).unwrap();
        let code = BchCode::new(rec.code_specs[0].clone()).unwrap();
        assert!(code.is_codeword(&rec.ss1[0].xor(&print).unwrap()));
    }

    #[test]
    fn multi_layer_splits_ss1_into_lambda_chunks() {
        let params = ParamSet::new(Variant::Mlms, 64, 0.9, 0, 10).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let prints: Vec<Imageprint> = (0..10).map(|_| random_print(&mut rng, 64)).collect();
        let rec = enroll(&prints, &params, 1).unwrap();
        assert_eq!(rec.ss1.len(), 10);
        assert!(rec.ss1.iter().all(|e| e.len() == 64));
        assert_eq!(rec.code_specs.len(), 5);
        assert!(authenticate(&rec, &prints).unwrap().is_accept());
    }

    #[test]
    fn threshold_boundary_three_of_five() {
        let params = ParamSet::new(Variant::Slms, 127, 0.9, 0, 10).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let prints: Vec<Imageprint> = (0..5).map(|_| random_print(&mut rng, 127)).collect();
        let rec = enroll(&prints, &params, 9).unwrap();
        let c = rec.code_specs[0].c;
        for good in 0..=5usize {
            for sub in subsets(5, good) {
                let cand: Vec<Imageprint> = (0..5)
                    .map(|i| if sub.contains(&i) { noisy(&mut rng, &prints[i], c) } else { prints[i].complement() })
                    .collect();
                let d = authenticate(&rec, &cand).unwrap();
                assert_eq!(d.is_accept(), good >= 3, "good segments {sub:?}");
            }
        }
    }

    #[test]
    fn two_factor() {
        let params = ParamSet::new(Variant::Slss, 255, 0.9, 0, 10).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let print = random_print(&mut rng, 255);
        let rec = enroll_with(std::slice::from_ref(&print), &params, &[0.9], SecretSource::Secondary(b"1234"), &mut rng).unwrap();
        assert!(rec.salt.is_some());
        assert!(authenticate_two_factor(&rec, &[print.clone()], b"1234").unwrap().is_accept());
        assert!(!authenticate_two_factor(&rec, &[print.clone()], b"1235").unwrap().is_accept());
        assert!(!authenticate_two_factor(&rec, &[print.complement()], b"1234").unwrap().is_accept());
        assert!(authenticate(&rec, &[print]).is_err());
    }

    #[test]
    fn derived_secret_is_deterministic_and_salted() {
        let a = derive_locked_secret(b"pin", b"salt-a", 100).unwrap();
        assert_eq!(a, derive_locked_secret(b"pin", b"salt-a", 100).unwrap());
        assert_ne!(a, derive_locked_secret(b"pin", b"salt-b", 100).unwrap());
        assert_eq!(a.len(), 100);
        assert!(derive_locked_secret(b"pin", b"s", 0).is_err());
    }

    #[test]
    fn record_json_round_trip_is_byte_exact() {
        let params = ParamSet::new(Variant::Slms, 64, 0.9, 0, 10).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let prints: Vec<Imageprint> = (0..5).map(|_| random_print(&mut rng, 64)).collect();
        let rec = enroll(&prints, &params, 2).unwrap();
        let text = rec.to_json().unwrap();
        let back = EnrollmentRecord::from_json(&text).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn corrupted_records_are_integrity_errors() {
        let params = ParamSet::new(Variant::Slss, 64, 0.9, 0, 10).unwrap();
        let print = Imageprint::zeros(64);
        let rec = enroll(std::slice::from_ref(&print), &params, 2).unwrap();
        let mut bad = rec.clone();
        bad.ss1.pop();
        assert!(matches!(authenticate(&bad, &[print.clone()]), Err(Error::Integrity(_))));
        let mut bad = rec.clone();
        bad.ss2.truncate(16);
        assert!(matches!(authenticate(&bad, &[print.clone()]), Err(Error::Integrity(_))));
        assert!(EnrollmentRecord::from_json("{\"version\": 1}").is_err());
        let text = rec.to_json().unwrap().replace("ailock.record.v1", "ailock.record.v0");
        assert!(matches!(EnrollmentRecord::from_json(&text), Err(Error::Integrity(_))));
    }

    #[test]
    fn ss1_passes_frequency_and_serial_tests() {
        // fixed all-zero print: ss1 is the bare codeword of a fresh secret
        let params = ParamSet::new(Variant::Slss, 255, 0.9, 0, 10).unwrap();
        let print = Imageprint::zeros(255);
        let mut bits = Vec::new();
        for seed in 0..200 {
            let rec = enroll(std::slice::from_ref(&print), &params, seed).unwrap();
            bits.extend(rec.ss1[0].to_bits());
        }
        let n = bits.len() as f64;
        let ones = bits.iter().filter(|&&b| b).count() as f64;
        // monobit: z ~ N(0, 1); two-sided 0.01 critical value 2.576
        let z = (2.0 * ones - n) / n.sqrt();
        assert!(z.abs() < 2.576, "monobit z = {z}");
        // serial test on overlapping pairs, chi-square with 2 dof is
        // computed as psi2_2 - psi2_1 (critical 9.21 at 0.01)
        let mut pairs = [0f64; 4];
        for i in 0..bits.len() {
            let a = bits[i] as usize;
            let b = bits[(i + 1) % bits.len()] as usize;
            pairs[2 * a + b] += 1.0;
        }
        let singles = [n - ones, ones];
        let psi2 = 4.0 / n * pairs.iter().map(|c| c * c).sum::<f64>() - n;
        let psi1 = 2.0 / n * singles.iter().map(|c| c * c).sum::<f64>() - n;
        assert!(psi2 - psi1 < 9.21, "serial statistic {}", psi2 - psi1);
    }
}
