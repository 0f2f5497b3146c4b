//! Synthetic-credential and guessing attacks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evaluate::{capacities, threshold_accepts, AttackStats, PrintBook};
use crate::error::{Error, Result};
use crate::pipeline::{CorpusEntry, PipelineModel};
use crate::types::Imageprint;

/// Samples whose bit `i` is 1 with the corpus frequency of 1 at `i`,
/// independently per position.
pub fn bernoulli_attack(corpus: &[Imageprint], n_samples: usize, seed: u64) -> Result<Vec<Imageprint>> {
    let first = corpus.first().ok_or(Error::EmptyCorpus)?;
    let n = first.len();
    if let Some(p) = corpus.iter().find(|p| p.len() != n) {
        return Err(Error::Dimension {
            expected: n,
            actual: p.len(),
        });
    }
    let mut ones = vec![0u64; n];
    for p in corpus {
        for (i, o) in ones.iter_mut().enumerate() {
            *o += p.get(i) as u64;
        }
    }
    let total = corpus.len() as f64;
    let probs: Vec<f64> = ones.iter().map(|&o| o as f64 / total).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    Ok((0..n_samples)
        .map(|_| {
            let mut s = Imageprint::zeros(n);
            for (i, &p) in probs.iter().enumerate() {
                // u in [0, 1): never set when p = 0, always when p = 1
                if rng.random::<f64>() < p {
                    s.set(i, true);
                }
            }
            s
        })
        .collect())
}

/// [`bernoulli_attack`] over multi-part prints: parts are concatenated,
/// sampled, and split back.
pub fn bernoulli_attack_parts(corpus: &[Vec<Imageprint>], n_samples: usize, seed: u64) -> Result<Vec<Vec<Imageprint>>> {
    let first = corpus.first().ok_or(Error::EmptyCorpus)?;
    let lens: Vec<usize> = first.iter().map(|p| p.len()).collect();
    let flat: Vec<Imageprint> = corpus
        .iter()
        .map(|parts| {
            if parts.iter().map(|p| p.len()).ne(lens.iter().copied()) {
                return Err(Error::InvalidParam("attack corpus prints differ in shape".into()));
            }
            Ok(Imageprint::concat(parts))
        })
        .collect::<Result<_>>()?;
    Ok(bernoulli_attack(&flat, n_samples, seed)?
        .into_iter()
        .map(|s| {
            let mut at = 0;
            lens.iter()
                .map(|&len| {
                    let part = s.slice(at, len);
                    at += len;
                    part
                })
                .collect()
        })
        .collect())
}

/// Tries every attempt, in order, against every reference.
pub fn attack_stats(
    model: &PipelineModel,
    attack: &str,
    references: &[&[Imageprint]],
    attempts: &[Vec<Imageprint>],
) -> AttackStats {
    let caps = capacities(model);
    let per_ref: Vec<(u64, Option<u64>)> = references
        .par_iter()
        .map(|r| {
            let mut accepts = 0u64;
            let mut first = None;
            for (i, a) in attempts.iter().enumerate() {
                if threshold_accepts(model, &caps, r, a) {
                    accepts += 1;
                    first.get_or_insert(i as u64 + 1);
                }
            }
            (accepts, first)
        })
        .collect();
    summarize(attack, per_ref, attempts.len() as u64)
}

fn summarize(attack: &str, per_ref: Vec<(u64, Option<u64>)>, attempts: u64) -> AttackStats {
    let refs = per_ref.len() as u64;
    let false_accepts: u64 = per_ref.iter().map(|r| r.0).sum();
    let broken = per_ref.iter().filter(|r| r.1.is_some()).count() as u64;
    let trials: u64 = per_ref.iter().map(|r| r.1.unwrap_or(attempts)).sum();
    let tried = refs * attempts;
    AttackStats {
        attack: attack.to_string(),
        references: refs,
        attempts_per_reference: attempts,
        false_accepts,
        far: (tried > 0).then(|| false_accepts as f64 / tried as f64),
        broken_fraction: (refs > 0).then(|| broken as f64 / refs as f64),
        mean_trials: (refs > 0).then(|| trials as f64 / refs as f64),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuessOrdering {
    /// Attack images of the reference's kind first, each group shuffled.
    SameTypeFirst,
    Shuffled,
}

/// Order in which the attacker tries `attack` against `reference`.
pub fn guess_order(reference: &CorpusEntry, attack: &[CorpusEntry], ordering: GuessOrdering, rng: &mut ChaCha20Rng) -> Vec<usize> {
    match ordering {
        GuessOrdering::Shuffled => {
            let mut idx: Vec<usize> = (0..attack.len()).collect();
            idx.shuffle(rng);
            idx
        }
        GuessOrdering::SameTypeFirst => {
            let (mut same, mut other): (Vec<usize>, Vec<usize>) =
                (0..attack.len()).partition(|&i| attack[i].kind == reference.kind);
            same.shuffle(rng);
            other.shuffle(rng);
            same.extend(other);
            same
        }
    }
}

/// Counts trials to the first false accept per reference; references never
/// broken count as `attack.len()` trials.
pub fn guessing_attack(
    model: &PipelineModel,
    book: &PrintBook,
    references: &[CorpusEntry],
    attack: &[CorpusEntry],
    ordering: GuessOrdering,
    seed: u64,
) -> Result<AttackStats> {
    if attack.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let caps = capacities(model);
    let per_ref = references
        .par_iter()
        .enumerate()
        .map(|(ri, r)| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_add(ri as u64));
            let rp = book.get(&r.id)?;
            let mut accepts = 0u64;
            let mut first = None;
            for (trial, &ai) in guess_order(r, attack, ordering, &mut rng).iter().enumerate() {
                if threshold_accepts(model, &caps, rp, book.get(&attack[ai].id)?) {
                    accepts += 1;
                    first.get_or_insert(trial as u64 + 1);
                }
            }
            Ok((accepts, first))
        })
        .collect::<Result<Vec<_>>>()?;
    let name = match ordering {
        GuessOrdering::SameTypeFirst => "guessing/same-type-first",
        GuessOrdering::Shuffled => "guessing/shuffled",
    };
    Ok(summarize(name, per_ref, attack.len() as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_positions_are_reproduced() {
        let zeros = vec![Imageprint::zeros(40); 5];
        for s in bernoulli_attack(&zeros, 50, 1).unwrap() {
            assert_eq!(s.count_ones(), 0);
        }
        let ones = vec![Imageprint::ones(40); 5];
        for s in bernoulli_attack(&ones, 50, 1).unwrap() {
            assert_eq!(s.count_ones(), 40);
        }
        assert!(matches!(bernoulli_attack(&[], 1, 1), Err(Error::EmptyCorpus)));
        assert!(bernoulli_attack(&[Imageprint::zeros(3), Imageprint::zeros(4)], 1, 1).is_err());
    }

    #[test]
    fn means_converge_to_frequencies() {
        // position i set in a fraction (i mod 5) / 4 of the corpus (clamped)
        let corpus: Vec<Imageprint> = (0..8)
            .map(|r| Imageprint::from_bits(&(0..30).map(|i| r < 2 * (i % 5)).collect::<Vec<_>>()))
            .collect();
        let samples = bernoulli_attack(&corpus, 100_000, 7).unwrap();
        for i in 0..30 {
            let p = corpus.iter().filter(|c| c.get(i)).count() as f64 / 8.0;
            let m = samples.iter().filter(|s| s.get(i)).count() as f64 / 1e5;
            assert!((m - p).abs() <= 0.02, "position {i}: {m} vs {p}");
        }
    }

    #[test]
    fn parts_round_trip_shape() {
        let corpus = vec![vec![Imageprint::zeros(5), Imageprint::ones(7)]; 3];
        let s = bernoulli_attack_parts(&corpus, 4, 2).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s[0][0], Imageprint::zeros(5));
        assert_eq!(s[0][1], Imageprint::ones(7));
    }

    #[test]
    fn summary_counts_unbroken_at_full_size() {
        let s = summarize("x", vec![(2, Some(3)), (0, None)], 10);
        assert_eq!(s.broken_fraction, Some(0.5));
        assert_eq!(s.mean_trials, Some(6.5));
        assert_eq!(s.far, Some(0.1));
    }
}
