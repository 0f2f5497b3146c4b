//! Synthetic object model standing in for DNN embeddings.
//!
//! Every object owns a latent vector with a decaying variance spectrum;
//! captures add isotropic noise of scale `noise_sigma` plus a per-capture
//! nuisance of scale `nuisance_ratio * noise_sigma` on the leading latent
//! axes. Segments mix the object latent with a per-segment latent, layers
//! share a fraction of their latent, and each layer is observed through its
//! own fixed random rotation. Outputs are unit vectors.
//!
//! All randomness is a pure function of `(seed, object, capture, segment,
//! layer)`, so embeddings can be requested in any order or concurrently.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::provider::{CorpusEntry, EmbeddingProvider, ImageId, Segment, Split};
use crate::error::{Error, Result};
use crate::lsh::{expected_collision, GaussianStream};
use crate::pca::{fit_pca, RankRange};
use crate::types::Embedding;

/// Object ids with this bit set are blends of training objects.
pub const ATTACK_BIT: u64 = 1 << 63;

const TAG_ROTATION: u64 = 1;
const TAG_OBJECT: u64 = 2;
const TAG_KIND: u64 = 3;
const TAG_SEGMENT: u64 = 4;
const TAG_NUISANCE: u64 = 5;
const TAG_NOISE: u64 = 6;
const TAG_BLEND: u64 = 7;
const TAG_QUALITY: u64 = 8;
const SHARED_LAYER: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Embedding length per layer.
    pub dim: usize,
    pub layers: usize,
    pub n_objects: usize,
    pub captures_per_object: usize,
    /// The last `test_objects` objects form the test split.
    pub test_objects: usize,
    /// Single-capture blend images in the attack split.
    pub attack_images: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    pub n_kinds: usize,
    /// Weight of the kind latent in an object latent, in `[0, 1]`.
    pub kind_weight: f64,
    /// Latent axis `k` has variance `exp(-k / spectrum_scale)`.
    pub spectrum_scale: f64,
    pub nuisance_dims: usize,
    pub nuisance_ratio: f64,
    /// Weight of the whole-object latent in a segment latent, in `[0, 1]`.
    pub segment_share: f64,
    /// Weight of the cross-layer latent in a layer latent, in `[0, 1]`.
    pub layer_share: f64,
    /// Training objects averaged into one attack image.
    pub blend: usize,
    /// Log-normal spread of the per-capture noise scale; 0 gives every
    /// capture the same quality.
    pub noise_spread: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            dim: 512,
            layers: 2,
            n_objects: 155,
            captures_per_object: 4,
            test_objects: 55,
            attack_images: 200,
            noise_sigma: 0.28,
            seed: 1,
            n_kinds: 10,
            kind_weight: 0.3,
            spectrum_scale: 256.0,
            nuisance_dims: 8,
            nuisance_ratio: 8.0,
            segment_share: 0.7,
            layer_share: 0.5,
            blend: 8,
            noise_spread: 0.4,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic corpus: {m}")));
        if self.dim < 2 || self.layers == 0 {
            return bad("dim must be >= 2 and layers >= 1");
        }
        if self.n_objects == 0 || self.captures_per_object == 0 {
            return bad("need at least one object and one capture");
        }
        if self.test_objects > self.n_objects {
            return bad("test_objects exceeds n_objects");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be finite and >= 0");
        }
        for (name, w) in [
            ("kind_weight", self.kind_weight),
            ("segment_share", self.segment_share),
            ("layer_share", self.layer_share),
        ] {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::Config(format!("synthetic corpus: {name} must lie in [0, 1]")));
            }
        }
        if self.n_kinds == 0 || self.spectrum_scale <= 0.0 || self.nuisance_ratio < 0.0 || !(self.noise_spread >= 0.0) {
            return bad("n_kinds, spectrum_scale must be positive; nuisance_ratio, noise_spread >= 0");
        }
        if self.attack_images > 0 && (self.blend == 0 || self.n_objects == self.test_objects) {
            return bad("attack images need blend >= 1 and at least one training object");
        }
        Ok(())
    }

    /// Variance of latent axis `k`.
    pub fn spectrum(&self, k: usize) -> f64 {
        (-(k as f64) / self.spectrum_scale).exp()
    }

    /// Noise scale at which a same-object pair has expected angle `angle`
    /// inside the principal band `[lo, hi)`. Ignores kind structure and
    /// sampling error of the fitted components.
    pub fn sigma_for_band_angle(&self, lo: usize, hi: usize, angle: f64) -> f64 {
        let band = (lo..hi.min(self.dim)).collect::<Vec<_>>();
        let signal: f64 = band.iter().map(|&k| self.spectrum(k)).sum();
        // cos(angle) = S / (S + p sigma^2)
        (signal * (1.0 / angle.cos() - 1.0) / band.len() as f64).sqrt()
    }

    pub fn train_objects(&self) -> usize {
        self.n_objects - self.test_objects
    }

    pub fn kind_of(&self, object: u64) -> u32 {
        if object & ATTACK_BIT != 0 {
            self.kind_of(self.blend_members(object)[0])
        } else {
            (object % self.n_kinds as u64) as u32
        }
    }

    /// Training objects averaged into attack object `object`.
    pub fn blend_members(&self, object: u64) -> Vec<u64> {
        let n = self.train_objects() as u64;
        (0..self.blend as u64)
            .map(|b| mix(&[self.seed, TAG_BLEND, object, b]) % n)
            .collect()
    }

    /// Train and test captures followed by attack images.
    pub fn corpus(&self) -> Vec<CorpusEntry> {
        let mut out = Vec::with_capacity(self.n_objects * self.captures_per_object + self.attack_images);
        let first_test = self.train_objects() as u64;
        for o in 0..self.n_objects as u64 {
            let split = if o >= first_test { Split::Test } else { Split::Train };
            for c in 0..self.captures_per_object as u64 {
                out.push(CorpusEntry {
                    id: ImageId::synthetic(o, c),
                    object: o,
                    split,
                    kind: self.kind_of(o),
                });
            }
        }
        for a in 0..self.attack_images as u64 {
            let o = ATTACK_BIT | a;
            out.push(CorpusEntry {
                id: ImageId::synthetic(o, 0),
                object: o,
                split: Split::Attack,
                kind: self.kind_of(o),
            });
        }
        out
    }
}

/// splitmix64 finalizer folded over `parts`.
fn mix(parts: &[u64]) -> u64 {
    let mut h = 0x6A09_E667_F3BC_C908u64;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

#[derive(Debug, Clone)]
pub struct SyntheticProvider {
    cfg: SynthConfig,
    rotations: Vec<DMatrix<f64>>,
    sqrt_spectrum: Vec<f64>,
}

impl SyntheticProvider {
    pub fn new(cfg: SynthConfig) -> Result<Self> {
        cfg.validate()?;
        let e = cfg.dim;
        let rotations = (0..cfg.layers as u64)
            .map(|j| {
                let mut g = GaussianStream::new(mix(&[cfg.seed, TAG_ROTATION, j]));
                let m = DMatrix::from_fn(e, e, |_, _| g.next_normal());
                m.qr().q()
            })
            .collect();
        let sqrt_spectrum = (0..e).map(|k| cfg.spectrum(k).sqrt()).collect();
        Ok(SyntheticProvider {
            cfg,
            rotations,
            sqrt_spectrum,
        })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }

    fn normals(&self, parts: &[u64]) -> Vec<f64> {
        let mut g = GaussianStream::new(mix(parts));
        (0..self.cfg.dim).map(|_| g.next_normal()).collect()
    }

    /// Unit-variance latent of one (object or kind, layer).
    fn layered(&self, tag: u64, key: u64, layer: u64) -> Vec<f64> {
        let rho = self.cfg.layer_share;
        let shared = self.normals(&[self.cfg.seed, tag, key, SHARED_LAYER]);
        let own = self.normals(&[self.cfg.seed, tag, key, layer]);
        let w = (1.0 - rho * rho).sqrt();
        shared.iter().zip(&own).map(|(a, b)| rho * a + w * b).collect()
    }

    fn object_latent(&self, object: u64, layer: u64) -> Vec<f64> {
        if object & ATTACK_BIT != 0 {
            let members = self.cfg.blend_members(object);
            let norm = (members.len() as f64).sqrt();
            let mut acc = vec![0.0; self.cfg.dim];
            for m in members {
                for (a, x) in acc.iter_mut().zip(self.object_latent(m, layer)) {
                    *a += x / norm;
                }
            }
            return acc;
        }
        let gamma = self.cfg.kind_weight;
        let own = self.layered(TAG_OBJECT, object, layer);
        let kind = self.layered(TAG_KIND, self.cfg.kind_of(object) as u64, layer);
        let w = (1.0 - gamma * gamma).sqrt();
        own.iter().zip(&kind).map(|(a, b)| w * a + gamma * b).collect()
    }

    fn segment_latent(&self, object: u64, segment: Segment, layer: u64) -> Vec<f64> {
        let base = self.object_latent(object, layer);
        match segment {
            Segment::Whole => base,
            Segment::Part(i) => {
                let a = self.cfg.segment_share;
                let b = (1.0 - a * a).sqrt();
                let own = self.normals(&[self.cfg.seed, TAG_SEGMENT, object, i as u64, layer]);
                base.iter().zip(&own).map(|(x, y)| a * x + b * y).collect()
            }
        }
    }
}

impl EmbeddingProvider for SyntheticProvider {
    fn layer_dims(&self) -> Vec<usize> {
        vec![self.cfg.dim; self.cfg.layers]
    }

    fn embed(&self, id: &ImageId, segment: Segment, layer: usize) -> Result<Embedding> {
        if layer >= self.cfg.layers {
            return Err(Error::MissingKey(format!("layer {layer} of {id}")));
        }
        if let Segment::Part(i) = segment {
            if i >= 5 {
                return Err(Error::MissingKey(format!("segment {i} of {id}")));
            }
        }
        let (object, capture) = (id.object_part(), id.capture_part());
        let l = layer as u64;
        let seg_key = match segment {
            Segment::Whole => u64::MAX,
            Segment::Part(i) => i as u64,
        };
        let mut sigma = self.cfg.noise_sigma;
        if sigma > 0.0 && self.cfg.noise_spread > 0.0 {
            let eta = self.cfg.noise_spread;
            let g = GaussianStream::new(mix(&[self.cfg.seed, TAG_QUALITY, object, capture])).next_normal();
            sigma *= (eta * g - eta * eta / 2.0).exp();
        }
        let mut latent = self.segment_latent(object, segment, l);
        for (x, s) in latent.iter_mut().zip(&self.sqrt_spectrum) {
            *x *= s;
        }
        if sigma > 0.0 {
            let nu = self.cfg.nuisance_ratio * sigma;
            let nuisance = self.normals(&[self.cfg.seed, TAG_NUISANCE, object, capture, l]);
            for (x, n) in latent.iter_mut().zip(nuisance).take(self.cfg.nuisance_dims) {
                *x += nu * n;
            }
            let noise = self.normals(&[self.cfg.seed, TAG_NOISE, object, capture, seg_key, l]);
            for (x, n) in latent.iter_mut().zip(noise) {
                *x += sigma * n;
            }
        }
        let v = &self.rotations[layer] * nalgebra::DVector::from_vec(latent);
        let norm = v.norm();
        let values = if norm > 0.0 { (v / norm).data.into() } else { v.data.into() };
        Embedding::new(values, format!("synthetic/{id}/{segment:?}/{layer}"))
    }
}

/// Mean analytic collision `1 - theta / pi` over same-object capture pairs
/// of the training split, measured on whole-image layer-0 features after a
/// PCA band `[lo, hi)` fitted on the same split.
pub fn valid_pair_collision(cfg: &SynthConfig, lo: usize, hi: usize) -> Result<f64> {
    let provider = SyntheticProvider::new(cfg.clone())?;
    let train: Vec<CorpusEntry> = cfg.corpus().into_iter().filter(|e| e.split == Split::Train).collect();
    let embs = train
        .par_iter()
        .map(|e| provider.embed(&e.id, Segment::Whole, 0).map(|x| x.values))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[f64]> = embs.iter().map(|v| v.as_slice()).collect();
    let pca = fit_pca(&refs, RankRange::new(lo, hi)?)?;
    let feats = embs.iter().map(|v| pca.project(v)).collect::<Result<Vec<_>>>()?;
    let (mut sum, mut count) = (0.0, 0usize);
    for i in 0..train.len() {
        for j in i + 1..train.len() {
            if train[i].object == train[j].object {
                sum += expected_collision(&feats[i], &feats[j])?;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::InsufficientData { needed: 2, got: 1 });
    }
    Ok(sum / count as f64)
}

/// Noise scale at which [`valid_pair_collision`] equals `target`, by
/// bisection (the collision falls as the noise grows).
pub fn calibrate_noise_sigma(cfg: &SynthConfig, lo: usize, hi: usize, target: f64) -> Result<f64> {
    if !(0.5 < target && target < 1.0) {
        return Err(Error::InvalidParam(format!("target collision {target} outside (0.5, 1)")));
    }
    let at = |sigma: f64| {
        valid_pair_collision(
            &SynthConfig {
                noise_sigma: sigma,
                ..cfg.clone()
            },
            lo,
            hi,
        )
    };
    let (mut a, mut b) = (0.0, cfg.sigma_for_band_angle(lo, hi, (1.0 - target) * std::f64::consts::PI).max(1e-3));
    while at(b)? > target {
        a = b;
        b *= 2.0;
        if b > 1e6 {
            return Err(Error::InvalidParam("noise calibration diverged".into()));
        }
    }
    while b - a > 1e-6 * b {
        let mid = 0.5 * (a + b);
        if at(mid)? > target {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Synthetic provider and its labeled corpus. All objects land in the
/// training split; use [`SynthConfig`] directly for test and attack splits.
pub fn synth_object_provider(
    e: usize,
    n_objects: usize,
    captures_per_object: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<(SyntheticProvider, Vec<CorpusEntry>)> {
    let cfg = SynthConfig {
        dim: e,
        n_objects,
        captures_per_object,
        noise_sigma,
        seed,
        test_objects: 0,
        attack_images: 0,
        ..SynthConfig::default()
    };
    let corpus = cfg.corpus();
    Ok((SyntheticProvider::new(cfg)?, corpus))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pca::dot;

    fn cos(a: &[f64], b: &[f64]) -> f64 {
        dot(a, b) / (dot(a, a) * dot(b, b)).sqrt()
    }

    #[test]
    fn deterministic_unit_vectors() {
        let (p, corpus) = synth_object_provider(32, 3, 2, 0.3, 9).unwrap();
        assert_eq!(corpus.len(), 6);
        let id = corpus[1].id;
        let a = p.embed(&id, Segment::Part(2), 1).unwrap();
        let b = p.embed(&id, Segment::Part(2), 1).unwrap();
        assert_eq!(a, b);
        assert!((dot(&a.values, &a.values) - 1.0).abs() < 1e-12);
        assert!(p.embed(&id, Segment::Whole, 2).is_err());
        assert!(p.embed(&id, Segment::Part(5), 0).is_err());
    }

    #[test]
    fn zero_noise_captures_are_identical() {
        let (p, _) = synth_object_provider(32, 2, 3, 0.0, 1).unwrap();
        let a = p.embed(&ImageId::synthetic(1, 0), Segment::Whole, 0).unwrap();
        let b = p.embed(&ImageId::synthetic(1, 2), Segment::Whole, 0).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn same_object_closer_than_different() {
        let (p, _) = synth_object_provider(64, 20, 2, 0.2, 3).unwrap();
        let mut same = 0.0;
        let mut diff = 0.0;
        for o in 0..20u64 {
            let a = p.embed(&ImageId::synthetic(o, 0), Segment::Part(0), 0).unwrap();
            let b = p.embed(&ImageId::synthetic(o, 1), Segment::Part(0), 0).unwrap();
            let c = p.embed(&ImageId::synthetic((o + 1) % 20, 1), Segment::Part(0), 0).unwrap();
            same += cos(&a.values, &b.values);
            diff += cos(&a.values, &c.values);
        }
        assert!(same > diff + 2.0, "same {same} diff {diff}");
    }

    #[test]
    fn corpus_splits() {
        let cfg = SynthConfig {
            n_objects: 10,
            test_objects: 3,
            captures_per_object: 2,
            attack_images: 4,
            ..SynthConfig::default()
        };
        let c = cfg.corpus();
        assert_eq!(c.iter().filter(|e| e.split == Split::Train).count(), 14);
        assert_eq!(c.iter().filter(|e| e.split == Split::Test).count(), 6);
        let attacks: Vec<_> = c.iter().filter(|e| e.split == Split::Attack).collect();
        assert_eq!(attacks.len(), 4);
        for a in attacks {
            assert!(cfg.blend_members(a.object).iter().all(|&m| m < 7));
        }
    }

    #[test]
    fn calibration_formula() {
        let cfg = SynthConfig::default();
        let sigma = cfg.sigma_for_band_angle(16, 96, 0.21 * std::f64::consts::PI);
        let s: f64 = (16..96).map(|k| cfg.spectrum(k)).sum();
        let cos = s / (s + 80.0 * sigma * sigma);
        assert!((cos.acos() / std::f64::consts::PI - 0.21).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SynthConfig { segment_share: 1.5, ..SynthConfig::default() };
        assert!(SyntheticProvider::new(cfg).is_err());
        let cfg = SynthConfig { test_objects: 200, ..SynthConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
