//! Image to imageprint pipeline for the four variants: embedding providers,
//! segment geometry, per-layer feature selection, per-(segment, layer)
//! projections, and the enrollment/authentication entry points.

pub mod file;
pub mod geometry;
pub mod model;
pub mod provider;
pub mod synth;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use file::{export_embeddings, write_embedding_file, EmbeddingFileHeader, FileEmbeddingProvider};
pub use geometry::{segment_rects, Rect, SegmentGeometry};
pub use model::{
    auth_image, auth_image_two_factor, enroll_image, enroll_image_with, make_print, projection_seed, PipelineModel,
    MODEL_VERSION,
};
pub use provider::{load_manifest, read_manifest, select_split, write_manifest, CorpusEntry, EmbeddingProvider, ImageId, Segment, Split};
pub use synth::{
    calibrate_noise_sigma, synth_object_provider, valid_pair_collision, SynthConfig, SyntheticProvider, ATTACK_BIT,
};

use crate::error::{Error, Result};
use crate::pca::{fit_pca, random_subset, FeatureSelector, RankRange};
use crate::types::{Embedding, ParamSet};

/// How each layer's features are chosen before projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SelectionMode {
    /// Principal components `[pc_lo, pc_hi)`.
    Pca,
    /// All coordinates.
    Raw,
    /// `k` coordinates drawn with `seed`.
    RandomK { k: usize, seed: u64 },
}

/// Embeddings of a fixed id set, computed once. Serves as a provider.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    s: usize,
    dims: Vec<usize>,
    index: HashMap<ImageId, usize>,
    /// `(row * s + seg) * l + layer`.
    data: Vec<Vec<f64>>,
}

impl EmbeddingTable {
    /// Embeds every id for the segment layout of an `s`-segment pipeline.
    pub fn build(provider: &dyn EmbeddingProvider, ids: &[ImageId], s: usize) -> Result<Self> {
        let dims = provider.layer_dims();
        let l = dims.len();
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            index.entry(*id).or_insert(i);
        }
        let rows: Vec<Vec<Vec<f64>>> = ids
            .par_iter()
            .map(|id| {
                let mut row = Vec::with_capacity(s * l);
                for seg in 0..s {
                    for layer in 0..l {
                        row.push(provider.embed(id, Segment::of(s, seg), layer)?.values);
                    }
                }
                Ok(row)
            })
            .collect::<Result<_>>()?;
        Ok(EmbeddingTable {
            s,
            dims,
            index,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn get(&self, id: &ImageId, seg: usize, layer: usize) -> Result<&[f64]> {
        let row = *self
            .index
            .get(id)
            .ok_or_else(|| Error::MissingKey(format!("image {id} not in embedding table")))?;
        if seg >= self.s || layer >= self.dims.len() {
            return Err(Error::MissingKey(format!("segment {seg} layer {layer} of {id}")));
        }
        Ok(&self.data[(row * self.s + seg) * self.dims.len() + layer])
    }
}

impl EmbeddingProvider for EmbeddingTable {
    fn layer_dims(&self) -> Vec<usize> {
        self.dims.clone()
    }

    fn embed(&self, id: &ImageId, segment: Segment, layer: usize) -> Result<Embedding> {
        let seg = match (segment, self.s) {
            (Segment::Whole, 1) => 0,
            (Segment::Part(i), 5) => i,
            _ => return Err(Error::MissingKey(format!("{segment:?} of {id} (table has s={})", self.s))),
        };
        Embedding::new(self.get(id, seg, layer)?.to_vec(), "table")
    }
}

/// Fits one selector per layer. PCA pools the embeddings of every training
/// id and every segment used by the pipeline.
pub fn fit_selectors(
    provider: &dyn EmbeddingProvider,
    ids: &[ImageId],
    params: &ParamSet,
    mode: SelectionMode,
) -> Result<Vec<FeatureSelector>> {
    let dims = provider.layer_dims();
    if dims.len() < params.l {
        return Err(Error::Dimension {
            expected: params.l,
            actual: dims.len(),
        });
    }
    (0..params.l)
        .map(|layer| match mode {
            SelectionMode::Raw => Ok(FeatureSelector::Raw { dim: dims[layer] }),
            SelectionMode::RandomK { k, seed } => Ok(FeatureSelector::RandomK {
                dim: dims[layer],
                indices: random_subset(dims[layer], k, seed.wrapping_add(layer as u64))?,
            }),
            SelectionMode::Pca => {
                let rows: Vec<Vec<f64>> = ids
                    .par_iter()
                    .map(|id| {
                        (0..params.s)
                            .map(|seg| provider.embed(id, Segment::of(params.s, seg), layer).map(|e| e.values))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .flatten()
                    .collect();
                let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
                Ok(FeatureSelector::Pca(fit_pca(&refs, RankRange::new(params.pc_lo, params.pc_hi)?)?))
            }
        })
        .collect()
}

/// Fits selectors on `ids` and assembles a model with the given thresholds.
pub fn fit_model(
    provider: &dyn EmbeddingProvider,
    ids: &[ImageId],
    params: &ParamSet,
    mode: SelectionMode,
    master_seed: u64,
    taus: Option<Vec<f64>>,
) -> Result<PipelineModel> {
    let selectors = fit_selectors(provider, ids, params, mode)?;
    PipelineModel::new(params.clone(), selectors, master_seed, taus)
}
