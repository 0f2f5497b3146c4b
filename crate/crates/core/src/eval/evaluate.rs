//! Pair decisions and the evaluation report.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pairs::AuthSample;
use super::stats::{entropy_estimate, EntropyEstimate};
use super::threshold::{grid, Counts, ScoreSet, GRID_SIZE};
use crate::error::{Error, Result};
use crate::pipeline::{make_print, EmbeddingProvider, ImageId, PipelineModel};
use crate::sketch::{authenticate, enroll_with, EnrollmentRecord, SecretSource};
use crate::types::{correction_capacity, Imageprint, ParamSet};

/// Prints of a set of images under one model.
#[derive(Debug, Clone)]
pub struct PrintBook {
    index: HashMap<ImageId, usize>,
    prints: Vec<Vec<Imageprint>>,
}

impl PrintBook {
    pub fn compute(model: &PipelineModel, provider: &dyn EmbeddingProvider, ids: &[ImageId]) -> Result<Self> {
        model.check_provider(provider)?;
        let mut uniq: Vec<ImageId> = ids.to_vec();
        uniq.sort_unstable();
        uniq.dedup();
        let prints = uniq
            .par_iter()
            .map(|id| make_print(model, provider, id))
            .collect::<Result<Vec<_>>>()?;
        Ok(PrintBook::from_parts(uniq, prints))
    }

    pub fn from_parts(ids: Vec<ImageId>, prints: Vec<Vec<Imageprint>>) -> Self {
        assert_eq!(ids.len(), prints.len());
        let index = ids.into_iter().enumerate().map(|(i, id)| (id, i)).collect();
        PrintBook { index, prints }
    }

    pub fn get(&self, id: &ImageId) -> Result<&[Imageprint]> {
        self.index
            .get(id)
            .map(|&i| self.prints[i].as_slice())
            .ok_or_else(|| Error::MissingKey(format!("no print for image {id}")))
    }

    pub fn len(&self) -> usize {
        self.prints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prints.is_empty()
    }
}

/// Hamming distance per segment, layers concatenated.
pub fn segment_distances(params: &ParamSet, a: &[Imageprint], b: &[Imageprint]) -> Vec<usize> {
    debug_assert_eq!(a.len(), params.s * params.l);
    debug_assert_eq!(b.len(), params.s * params.l);
    (0..params.s)
        .map(|seg| {
            (seg * params.l..(seg + 1) * params.l)
                .map(|i| a[i].distance_unchecked(&b[i]))
                .sum()
        })
        .collect()
}

/// Per-segment correction capacities `c_i` implied by the model thresholds.
pub fn capacities(model: &PipelineModel) -> Vec<usize> {
    let n = model.params.segment_bits();
    model.taus.iter().map(|&t| correction_capacity(n, t)).collect()
}

/// `t`-of-`s` rule: at least `t` segments within their capacity.
pub fn threshold_accepts(model: &PipelineModel, caps: &[usize], a: &[Imageprint], b: &[Imageprint]) -> bool {
    let d = segment_distances(&model.params, a, b);
    d.iter().zip(caps).filter(|(d, c)| d <= c).count() >= model.params.t
}

/// Score whose threshold crossing reproduces the `t`-of-`s` rule under a
/// common threshold: the `t`-th largest segment similarity.
pub fn pair_score(params: &ParamSet, a: &[Imageprint], b: &[Imageprint]) -> f64 {
    let n = params.segment_bits() as f64;
    let mut sims: Vec<f64> = segment_distances(params, a, b)
        .into_iter()
        .map(|d| 1.0 - d as f64 / n)
        .collect();
    sims.sort_by(|x, y| y.total_cmp(x));
    sims[params.t - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    /// Compare segment distances with the capacities directly.
    DistanceThreshold,
    /// Enroll every reference and run the full authentication protocol.
    FullSketch,
}

/// Accept/reject for every pair, in pair order.
pub fn pair_decisions(
    model: &PipelineModel,
    book: &PrintBook,
    pairs: &[AuthSample],
    mode: EvalMode,
    seed: u64,
) -> Result<Vec<bool>> {
    let caps = capacities(model);
    match mode {
        EvalMode::DistanceThreshold => pairs
            .par_iter()
            .map(|p| Ok(threshold_accepts(model, &caps, book.get(&p.ref_id)?, book.get(&p.cand_id)?)))
            .collect(),
        EvalMode::FullSketch => {
            let refs: Vec<ImageId> = pairs
                .iter()
                .map(|p| p.ref_id)
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            let records: BTreeMap<ImageId, EnrollmentRecord> = refs
                .par_iter()
                .enumerate()
                .map(|(i, id)| {
                    use rand::SeedableRng;
                    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed.wrapping_add(i as u64));
                    let rec = enroll_with(book.get(id)?, &model.params, &model.taus, SecretSource::Random, &mut rng)?;
                    Ok((*id, rec))
                })
                .collect::<Result<_>>()?;
            pairs
                .par_iter()
                .map(|p| Ok(authenticate(&records[&p.ref_id], book.get(&p.cand_id)?)?.is_accept()))
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackStats {
    pub attack: String,
    pub references: u64,
    pub attempts_per_reference: u64,
    pub false_accepts: u64,
    pub far: Option<f64>,
    /// References with at least one false accept.
    pub broken_fraction: Option<f64>,
    /// Mean trials until the first false accept; unbroken references count
    /// as `attempts_per_reference`.
    pub mean_trials: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: String,
    pub lambda: usize,
    pub mode: EvalMode,
    pub pairs: u64,
    pub counts: Counts,
    pub far: Option<f64>,
    pub frr: Option<f64>,
    pub f1: Option<f64>,
    pub eer: Option<f64>,
    pub entropy: Option<EntropyEstimate>,
    pub tau_used: Vec<f64>,
    pub capacities: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack_stats: Option<AttackStats>,
}

pub fn evaluate(
    model: &PipelineModel,
    provider: &dyn EmbeddingProvider,
    pairs: &[AuthSample],
    mode: EvalMode,
    seed: u64,
) -> Result<EvalReport> {
    let ids: Vec<ImageId> = pairs.iter().flat_map(|p| [p.ref_id, p.cand_id]).collect();
    let book = PrintBook::compute(model, provider, &ids)?;
    evaluate_prints(model, &book, pairs, mode, seed)
}

pub fn evaluate_prints(
    model: &PipelineModel,
    book: &PrintBook,
    pairs: &[AuthSample],
    mode: EvalMode,
    seed: u64,
) -> Result<EvalReport> {
    let decisions = pair_decisions(model, book, pairs, mode, seed)?;
    let mut counts = Counts::default();
    for (p, &acc) in pairs.iter().zip(&decisions) {
        counts.record(p.label.is_valid(), acc);
    }
    let scores = pairs
        .par_iter()
        .map(|p| Ok((pair_score(&model.params, book.get(&p.ref_id)?, book.get(&p.cand_id)?), p.label.is_valid())))
        .collect::<Result<Vec<_>>>()?;
    let eer = ScoreSet::new(&scores).eer(&grid(GRID_SIZE));
    let far = counts.far();
    let entropy = far.map(|f| entropy_estimate(f, counts.fp + counts.tn)).transpose()?;
    Ok(EvalReport {
        variant: model.params.variant().map(|v| v.name().to_string()).unwrap_or_default(),
        lambda: model.params.lambda,
        mode,
        pairs: pairs.len() as u64,
        counts,
        far,
        frr: counts.frr(),
        f1: counts.f1(),
        eer,
        entropy,
        tau_used: model.taus.clone(),
        capacities: capacities(model),
        attack_stats: None,
    })
}
