//! k-fold threshold discovery with optional vaccine samples.

use std::collections::{BTreeSet, HashMap};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evaluate::{segment_distances, PrintBook};
use super::pairs::{build_pairs, vaccine_pairs, AuthSample, PairPolicy};
use super::threshold::{argmax_last, grid, ScoreSet, GRID_SIZE};
use crate::error::{Error, Result};
use crate::pipeline::{fit_selectors, CorpusEntry, EmbeddingTable, ImageId, PipelineModel, SelectionMode};
use crate::types::ParamSet;

/// Which training stages see the vaccine samples. Thresholds always do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VaccineMode {
    #[serde(rename = "tau-only")]
    TauOnly,
    #[serde(rename = "pca+tau")]
    PcaTau,
}

impl FromStr for VaccineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau-only" => Ok(VaccineMode::TauOnly),
            "pca+tau" => Ok(VaccineMode::PcaTau),
            other => Err(Error::Config(format!("unknown vaccine mode {other:?} (expected tau-only or pca+tau)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// `params.tau` is ignored; thresholds come from the sweep.
    pub params: ParamSet,
    pub folds: usize,
    pub selection: SelectionMode,
    pub master_seed: u64,
    pub fold_seed: u64,
    pub grid_size: usize,
    pub vaccine_mode: VaccineMode,
}

impl TrainConfig {
    pub fn new(params: ParamSet, master_seed: u64) -> Self {
        TrainConfig {
            params,
            folds: 5,
            selection: SelectionMode::Pca,
            master_seed,
            fold_seed: master_seed,
            grid_size: GRID_SIZE,
            vaccine_mode: VaccineMode::TauOnly,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub train_images: usize,
    pub test_images: usize,
    pub valid_pairs: u64,
    pub invalid_pairs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub model: PipelineModel,
    /// Per-segment thresholds (also stored in the model).
    pub taus: Vec<f64>,
    /// Fold-averaged F1 at each chosen threshold.
    pub mean_f1: Vec<f64>,
    pub folds: Vec<FoldSummary>,
}

/// Object-stratified fold index of every corpus entry.
pub fn fold_assignment(corpus: &[CorpusEntry], k: usize, seed: u64) -> Result<Vec<usize>> {
    let mut objects: Vec<u64> = corpus.iter().map(|e| e.object).collect::<BTreeSet<_>>().into_iter().collect();
    if objects.len() < k {
        return Err(Error::InvalidParam(format!(
            "{} objects cannot fill {k} folds",
            objects.len()
        )));
    }
    objects.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let fold: HashMap<u64, usize> = objects.iter().enumerate().map(|(i, &o)| (o, i % k)).collect();
    Ok(corpus.iter().map(|e| fold[&e.object]).collect())
}

fn ids(entries: &[CorpusEntry]) -> Vec<ImageId> {
    entries.iter().map(|e| e.id).collect()
}

pub fn kfold_train(
    provider: &dyn crate::pipeline::EmbeddingProvider,
    corpus: &[CorpusEntry],
    cfg: &TrainConfig,
    vaccine: Option<&[CorpusEntry]>,
) -> Result<TrainOutcome> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if cfg.folds < 2 {
        return Err(Error::InvalidParam(format!("need at least 2 folds, got {}", cfg.folds)));
    }
    let params = &cfg.params;
    params.validate()?;
    let vaccine = vaccine.unwrap_or(&[]);
    let assignment = fold_assignment(corpus, cfg.folds, cfg.fold_seed)?;

    let mut all_ids = ids(corpus);
    all_ids.extend(ids(vaccine));
    let table = EmbeddingTable::build(provider, &all_ids, params.s)?;
    let taus_grid = grid(cfg.grid_size);

    let mut sums = vec![vec![0.0; taus_grid.len()]; params.s];
    let mut informative = 0usize;
    let mut folds = Vec::with_capacity(cfg.folds);
    for f in 0..cfg.folds {
        let (test, train): (Vec<_>, Vec<_>) = corpus
            .iter()
            .zip(&assignment)
            .partition(|(_, &a)| a == f);
        let test: Vec<CorpusEntry> = test.into_iter().map(|(e, _)| e.clone()).collect();
        let train: Vec<CorpusEntry> = train.into_iter().map(|(e, _)| e.clone()).collect();
        if cfg.selection == SelectionMode::Pca && train.len() < params.pc_hi {
            return Err(Error::InsufficientData {
                needed: params.pc_hi,
                got: train.len(),
            });
        }
        let mut fit_ids = ids(&train);
        if cfg.vaccine_mode == VaccineMode::PcaTau {
            fit_ids.extend(ids(vaccine));
        }
        let selectors = fit_selectors(&table, &fit_ids, params, cfg.selection)?;
        let model = PipelineModel::new(params.clone(), selectors, cfg.master_seed, None)?;

        let mut pairs: Vec<AuthSample> = if test.len() >= 2 {
            build_pairs(&test, PairPolicy::AllPairs)?
        } else {
            Vec::new()
        };
        pairs.extend(vaccine_pairs(&test, vaccine));
        let mut book_ids = ids(&test);
        book_ids.extend(ids(vaccine));
        let book = PrintBook::compute(&model, &table, &book_ids)?;
        let n = params.segment_bits() as f64;
        let dists = pairs
            .par_iter()
            .map(|p| Ok(segment_distances(params, book.get(&p.ref_id)?, book.get(&p.cand_id)?)))
            .collect::<Result<Vec<_>>>()?;
        let valid = pairs.iter().filter(|p| p.label.is_valid()).count() as u64;
        folds.push(FoldSummary {
            fold: f,
            train_images: train.len(),
            test_images: test.len(),
            valid_pairs: valid,
            invalid_pairs: pairs.len() as u64 - valid,
        });
        // folds without a valid pair carry no F1 information
        if valid == 0 {
            continue;
        }
        informative += 1;
        for (seg, sum) in sums.iter_mut().enumerate() {
            let samples: Vec<(f64, bool)> = dists
                .iter()
                .zip(&pairs)
                .map(|(d, p)| (1.0 - d[seg] as f64 / n, p.label.is_valid()))
                .collect();
            let curve = ScoreSet::new(&samples).f1_curve(&taus_grid);
            for (s, v) in sum.iter_mut().zip(curve) {
                *s += v.expect("defined with valid pairs present");
            }
        }
    }
    if informative == 0 {
        return Err(Error::UndefinedF1("no fold contains a valid pair".into()));
    }

    // thresholds must stay above 1/2
    let floor = taus_grid.iter().copied().find(|&t| t > 0.5).unwrap_or(1.0);
    let mut taus = Vec::with_capacity(params.s);
    let mut mean_f1 = Vec::with_capacity(params.s);
    for sum in &sums {
        let mean: Vec<f64> = sum.iter().map(|s| s / informative as f64).collect();
        let best = argmax_last(&mean).expect("non-empty grid");
        taus.push(taus_grid[best].max(floor));
        mean_f1.push(mean[best]);
    }

    let mut fit_ids = ids(corpus);
    if cfg.vaccine_mode == VaccineMode::PcaTau {
        fit_ids.extend(ids(vaccine));
    }
    let selectors = fit_selectors(&table, &fit_ids, params, cfg.selection)?;
    let mut final_params = params.clone();
    let mut sorted = taus.clone();
    sorted.sort_by(f64::total_cmp);
    final_params.tau = sorted[sorted.len() / 2];
    let model = PipelineModel::new(final_params, selectors, cfg.master_seed, Some(taus.clone()))?;
    Ok(TrainOutcome {
        model,
        taus,
        mean_f1,
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::synth_object_provider;
    use crate::types::Variant;

    #[test]
    fn folds_stratify_by_object() {
        let (_, corpus) = synth_object_provider(16, 10, 3, 0.1, 1).unwrap();
        let a = fold_assignment(&corpus, 5, 4).unwrap();
        for (e, f) in corpus.iter().zip(&a) {
            for (e2, f2) in corpus.iter().zip(&a) {
                if e.object == e2.object {
                    assert_eq!(f, f2);
                }
            }
        }
        for f in 0..5 {
            assert_eq!(a.iter().filter(|&&x| x == f).count(), 6);
        }
        assert!(fold_assignment(&corpus, 11, 4).is_err());
    }

    #[test]
    fn two_objects_two_folds_smoke() {
        let (p, corpus) = synth_object_provider(16, 2, 3, 0.2, 1).unwrap();
        let params = ParamSet::new(Variant::Slss, 32, 0.75, 0, 2).unwrap();
        let mut cfg = TrainConfig::new(params, 9);
        cfg.folds = 2;
        let out = kfold_train(&p, &corpus, &cfg, None).unwrap();
        assert_eq!(out.taus.len(), 1);
        assert!(out.taus[0].is_finite() && out.taus[0] > 0.5 && out.taus[0] <= 1.0);
        assert_eq!(out.model.taus, out.taus);
    }

    #[test]
    fn tiny_folds_are_rejected() {
        let (p, corpus) = synth_object_provider(64, 5, 2, 0.2, 1).unwrap();
        let params = ParamSet::new(Variant::Slss, 32, 0.75, 4, 20).unwrap();
        let cfg = TrainConfig::new(params, 9);
        assert!(matches!(kfold_train(&p, &corpus, &cfg, None), Err(Error::InsufficientData { .. })));
        assert!(matches!(kfold_train(&p, &[], &cfg, None), Err(Error::EmptyCorpus)));
    }
}
