//! Collision-probability checks: per-bit and whole-print P1/P2 with a
//! Mann-Whitney test, and agreement with the analytic `1 - theta / pi`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evaluate::{capacities, threshold_accepts, PrintBook};
use super::pairs::AuthSample;
use super::stats::mann_whitney_greater;
use crate::error::{Error, Result};
use crate::lsh::expected_collision;
use crate::pipeline::{EmbeddingProvider, ImageId, PipelineModel};
use crate::types::Imageprint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    /// Fraction of agreeing bits over the full `s * l * lambda` print.
    PerBit,
    /// Whether the pair is accepted by the model thresholds.
    WholePrint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsimReport {
    pub granularity: Granularity,
    pub lambda: usize,
    pub p1: f64,
    pub p2: f64,
    pub u: f64,
    pub p_value: f64,
    pub exact_test: bool,
    pub n_valid: u64,
    pub n_invalid: u64,
}

fn bit_agreement(a: &[Imageprint], b: &[Imageprint]) -> f64 {
    let n: usize = a.iter().map(|p| p.len()).sum();
    let d: usize = a.iter().zip(b).map(|(x, y)| x.distance_unchecked(y)).sum();
    1.0 - d as f64 / n as f64
}

pub fn lsim_verify(model: &PipelineModel, book: &PrintBook, pairs: &[AuthSample], granularity: Granularity) -> Result<LsimReport> {
    let caps = capacities(model);
    let stats = pairs
        .par_iter()
        .map(|p| {
            let (a, b) = (book.get(&p.ref_id)?, book.get(&p.cand_id)?);
            let x = match granularity {
                Granularity::PerBit => bit_agreement(a, b),
                Granularity::WholePrint => threshold_accepts(model, &caps, a, b) as u8 as f64,
            };
            Ok((x, p.label.is_valid()))
        })
        .collect::<Result<Vec<_>>>()?;
    let valid: Vec<f64> = stats.iter().filter(|s| s.1).map(|s| s.0).collect();
    let invalid: Vec<f64> = stats.iter().filter(|s| !s.1).map(|s| s.0).collect();
    if valid.is_empty() || invalid.is_empty() {
        return Err(Error::UndefinedF1(format!(
            "collision test needs both labels, got {} valid and {} invalid",
            valid.len(),
            invalid.len()
        )));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mw = mann_whitney_greater(&valid, &invalid)?;
    Ok(LsimReport {
        granularity,
        lambda: model.params.lambda,
        p1: mean(&valid),
        p2: mean(&invalid),
        u: mw.u,
        p_value: mw.p_value,
        exact_test: mw.exact,
        n_valid: valid.len() as u64,
        n_invalid: invalid.len() as u64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleReport {
    pub analytic_valid: Option<f64>,
    pub analytic_invalid: Option<f64>,
    pub empirical_valid: Option<f64>,
    pub empirical_invalid: Option<f64>,
    pub gap_valid: Option<f64>,
    pub gap_invalid: Option<f64>,
}

/// Mean analytic collision `1 - theta / pi` of the selected features
/// against the observed per-bit agreement, per label.
pub fn angle_collision_check(model: &PipelineModel, provider: &dyn EmbeddingProvider, pairs: &[AuthSample]) -> Result<AngleReport> {
    let mut ids: Vec<ImageId> = pairs.iter().flat_map(|p| [p.ref_id, p.cand_id]).collect();
    ids.sort_unstable();
    ids.dedup();
    let feats = ids
        .par_iter()
        .map(|id| model.features(provider, id))
        .collect::<Result<Vec<_>>>()?;
    let prints = feats
        .par_iter()
        .map(|f| model.prints_from_features(f))
        .collect::<Result<Vec<_>>>()?;
    let pos = |id: &ImageId| ids.binary_search(id).expect("id collected above");
    let per_pair = pairs
        .par_iter()
        .map(|p| {
            let (i, j) = (pos(&p.ref_id), pos(&p.cand_id));
            let mut analytic = 0.0;
            for (a, b) in feats[i].iter().zip(&feats[j]) {
                analytic += expected_collision(a, b)?;
            }
            analytic /= feats[i].len() as f64;
            Ok((analytic, bit_agreement(&prints[i], &prints[j]), p.label.is_valid()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = |valid: bool, pick: fn(&(f64, f64, bool)) -> f64| {
        let v: Vec<f64> = per_pair.iter().filter(|x| x.2 == valid).map(pick).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let av = mean(true, |x| x.0);
    let ai = mean(false, |x| x.0);
    let ev = mean(true, |x| x.1);
    let ei = mean(false, |x| x.1);
    let gap = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(a, b)| (a - b).abs());
    Ok(AngleReport {
        analytic_valid: av,
        analytic_invalid: ai,
        empirical_valid: ev,
        empirical_invalid: ei,
        gap_valid: gap(av, ev),
        gap_invalid: gap(ai, ei),
    })
}
