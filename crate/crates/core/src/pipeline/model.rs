//! The fitted pipeline: per-layer feature selection, per-(segment, layer)
//! projections and per-segment thresholds. Everything here is public data.

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::provider::{EmbeddingProvider, ImageId, Segment};
use crate::error::{Error, Result};
use crate::lsh::{Projection, ProjectionSpec};
use crate::pca::FeatureSelector;
use crate::sketch::{self, Decision, EnrollmentRecord, SecretSource};
use crate::types::{Imageprint, ParamSet};

pub const MODEL_VERSION: &str = "ailock.model.v1";

/// Projection seed of `(segment, layer)`. Keyed by the pair rather than a
/// flat index, so every variant draws the same hyperplanes for the same
/// position.
pub fn projection_seed(master: u64, segment: usize, layer: usize) -> u64 {
    let mut z = master.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(1 + ((segment as u64) << 16 | layer as u64)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineModel {
    pub version: String,
    pub params: ParamSet,
    /// One selector per layer, shared by all segments.
    pub selectors: Vec<FeatureSelector>,
    pub master_seed: u64,
    /// `s * l` specs, segment-major.
    pub projections: Vec<ProjectionSpec>,
    /// One threshold per segment.
    pub taus: Vec<f64>,
    #[serde(skip)]
    cache: OnceLock<Vec<Projection>>,
}

impl PartialEq for PipelineModel {
    fn eq(&self, other: &Self) -> bool {
        self.version == other.version
            && self.params == other.params
            && self.selectors == other.selectors
            && self.master_seed == other.master_seed
            && self.projections == other.projections
            && self.taus == other.taus
    }
}

impl PipelineModel {
    /// `taus = None` uses `params.tau` for every segment.
    pub fn new(params: ParamSet, selectors: Vec<FeatureSelector>, master_seed: u64, taus: Option<Vec<f64>>) -> Result<Self> {
        params.validate()?;
        if selectors.len() != params.l {
            return Err(Error::Dimension {
                expected: params.l,
                actual: selectors.len(),
            });
        }
        let projections = (0..params.s)
            .flat_map(|seg| {
                let selectors = &selectors;
                let lambda = params.lambda;
                (0..params.l).map(move |layer| ProjectionSpec {
                    seed: projection_seed(master_seed, seg, layer),
                    p: selectors[layer].output_dim(),
                    lambda,
                })
            })
            .collect();
        let taus = taus.unwrap_or_else(|| vec![params.tau; params.s]);
        let model = PipelineModel {
            version: MODEL_VERSION.to_string(),
            params,
            selectors,
            master_seed,
            projections,
            taus,
            cache: OnceLock::new(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Integrity(format!("pipeline model: {m}")));
        if self.version != MODEL_VERSION {
            return bad(format!("unsupported version {:?}", self.version));
        }
        self.params.validate()?;
        let p = &self.params;
        if self.selectors.len() != p.l {
            return bad(format!("{} selectors for {} layers", self.selectors.len(), p.l));
        }
        for sel in &self.selectors {
            if let FeatureSelector::Pca(m) = sel {
                m.check()?;
            }
            if sel.output_dim() == 0 {
                return bad("selector with empty output".into());
            }
        }
        if self.projections.len() != p.s * p.l {
            return bad(format!("{} projections for s*l = {}", self.projections.len(), p.s * p.l));
        }
        for seg in 0..p.s {
            for layer in 0..p.l {
                let spec = &self.projections[seg * p.l + layer];
                let want = ProjectionSpec {
                    seed: projection_seed(self.master_seed, seg, layer),
                    p: self.selectors[layer].output_dim(),
                    lambda: p.lambda,
                };
                if *spec != want {
                    return bad(format!("projection ({seg}, {layer}) does not match its derivation"));
                }
            }
        }
        if self.taus.len() != p.s || self.taus.iter().any(|t| !(*t > 0.5 && *t <= 1.0)) {
            return bad("need one tau in (0.5, 1] per segment".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: PipelineModel =
            serde_json::from_str(text).map_err(|e| Error::Integrity(format!("unreadable pipeline model: {e}")))?;
        model.validate()?;
        Ok(model)
    }

    /// Copy with different per-segment thresholds.
    pub fn with_taus(&self, taus: Vec<f64>) -> Result<Self> {
        let mut m = self.clone();
        m.taus = taus;
        m.validate()?;
        Ok(m)
    }

    fn projection_cache(&self) -> &[Projection] {
        self.cache
            .get_or_init(|| self.projections.iter().map(|&s| Projection::new(s)).collect())
    }

    pub fn check_provider(&self, provider: &dyn EmbeddingProvider) -> Result<()> {
        let dims = provider.layer_dims();
        if dims.len() < self.params.l {
            return Err(Error::Dimension {
                expected: self.params.l,
                actual: dims.len(),
            });
        }
        for (sel, &d) in self.selectors.iter().zip(&dims) {
            if sel.input_dim() != d {
                return Err(Error::Dimension {
                    expected: sel.input_dim(),
                    actual: d,
                });
            }
        }
        Ok(())
    }

    /// Selected features of every (segment, layer), segment-major.
    pub fn features(&self, provider: &dyn EmbeddingProvider, id: &ImageId) -> Result<Vec<Vec<f64>>> {
        self.check_provider(provider)?;
        let p = &self.params;
        let mut out = Vec::with_capacity(p.s * p.l);
        for seg in 0..p.s {
            for layer in 0..p.l {
                let emb = provider.embed(id, Segment::of(p.s, seg), layer)?;
                out.push(self.selectors[layer].apply(&emb.values)?);
            }
        }
        Ok(out)
    }

    /// Binarizes features produced by [`PipelineModel::features`].
    pub fn prints_from_features(&self, features: &[Vec<f64>]) -> Result<Vec<Imageprint>> {
        let proj = self.projection_cache();
        if features.len() != proj.len() {
            return Err(Error::Dimension {
                expected: proj.len(),
                actual: features.len(),
            });
        }
        proj.iter().zip(features).map(|(pr, f)| pr.binarize(f)).collect()
    }
}

/// `s * l` prints for one image, segment-major and layer-minor.
pub fn make_print(model: &PipelineModel, provider: &dyn EmbeddingProvider, id: &ImageId) -> Result<Vec<Imageprint>> {
    model.prints_from_features(&model.features(provider, id)?)
}

pub fn enroll_image(
    model: &PipelineModel,
    provider: &dyn EmbeddingProvider,
    id: &ImageId,
    rng_seed: u64,
) -> Result<EnrollmentRecord> {
    enroll_image_with(model, provider, id, SecretSource::Random, rng_seed)
}

pub fn enroll_image_with(
    model: &PipelineModel,
    provider: &dyn EmbeddingProvider,
    id: &ImageId,
    source: SecretSource<'_>,
    rng_seed: u64,
) -> Result<EnrollmentRecord> {
    let prints = make_print(model, provider, id)?;
    let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
    sketch::enroll_with(&prints, &model.params, &model.taus, source, &mut rng)
}

pub fn auth_image(
    model: &PipelineModel,
    provider: &dyn EmbeddingProvider,
    id: &ImageId,
    record: &EnrollmentRecord,
) -> Result<Decision> {
    if record.params != model.params {
        return Err(Error::Integrity("record parameters differ from the pipeline model".into()));
    }
    sketch::authenticate(record, &make_print(model, provider, id)?)
}

pub fn auth_image_two_factor(
    model: &PipelineModel,
    provider: &dyn EmbeddingProvider,
    id: &ImageId,
    record: &EnrollmentRecord,
    secondary: &[u8],
) -> Result<Decision> {
    if record.params != model.params {
        return Err(Error::Integrity("record parameters differ from the pipeline model".into()));
    }
    sketch::authenticate_two_factor(record, &make_print(model, provider, id)?, secondary)
}
