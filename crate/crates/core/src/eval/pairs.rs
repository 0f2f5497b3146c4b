//! Authentication samples: one reference and one candidate image.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{CorpusEntry, ImageId, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Valid,
    Invalid,
}

impl Label {
    pub fn is_valid(self) -> bool {
        self == Label::Valid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthSample {
    pub ref_id: ImageId,
    pub cand_id: ImageId,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairPolicy {
    /// Every unordered pair of distinct images.
    AllPairs,
    /// Every non-attack image against every attack-split image.
    ReferenceVsAttack,
}

pub fn build_pairs(corpus: &[CorpusEntry], policy: PairPolicy) -> Result<Vec<AuthSample>> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let label = |a: &CorpusEntry, b: &CorpusEntry| {
        if a.object == b.object {
            Label::Valid
        } else {
            Label::Invalid
        }
    };
    let mut out = Vec::new();
    match policy {
        PairPolicy::AllPairs => {
            out.reserve(corpus.len() * (corpus.len() - 1) / 2);
            for (i, a) in corpus.iter().enumerate() {
                for b in &corpus[i + 1..] {
                    if a.id != b.id {
                        out.push(AuthSample {
                            ref_id: a.id,
                            cand_id: b.id,
                            label: label(a, b),
                        });
                    }
                }
            }
        }
        PairPolicy::ReferenceVsAttack => {
            let (attack, refs): (Vec<&CorpusEntry>, Vec<&CorpusEntry>) =
                corpus.iter().partition(|e| e.split == Split::Attack);
            if attack.is_empty() || refs.is_empty() {
                return Err(Error::EmptyCorpus);
            }
            for r in &refs {
                for a in &attack {
                    out.push(AuthSample {
                        ref_id: r.id,
                        cand_id: a.id,
                        label: label(r, a),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Appends `reference x vaccine` pairs, all labeled invalid.
pub fn vaccine_pairs(refs: &[CorpusEntry], vaccine: &[CorpusEntry]) -> Vec<AuthSample> {
    refs.iter()
        .flat_map(|r| {
            vaccine.iter().map(move |v| AuthSample {
                ref_id: r.id,
                cand_id: v.id,
                label: Label::Invalid,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(objects: u64, captures: u64) -> Vec<CorpusEntry> {
        (0..objects)
            .flat_map(|o| {
                (0..captures).map(move |c| CorpusEntry {
                    id: ImageId::synthetic(o, c),
                    object: o,
                    split: Split::Test,
                    kind: 0,
                })
            })
            .collect()
    }

    #[test]
    fn hand_enumerated_small_case() {
        let p = build_pairs(&corpus(2, 2), PairPolicy::AllPairs).unwrap();
        assert_eq!(p.len(), 6);
        assert_eq!(p.iter().filter(|s| s.label.is_valid()).count(), 2);
        assert!(p.iter().all(|s| s.ref_id != s.cand_id));
    }

    #[test]
    fn holdout_combinatorics() {
        let p = build_pairs(&corpus(55, 4), PairPolicy::AllPairs).unwrap();
        assert_eq!(p.len(), 24_090);
        assert_eq!(p.iter().filter(|s| s.label.is_valid()).count(), 330);
    }

    #[test]
    fn attack_policy_and_empty() {
        let mut c = corpus(3, 2);
        for a in 0..4 {
            c.push(CorpusEntry {
                id: ImageId::synthetic(100 + a, 0),
                object: 100 + a,
                split: Split::Attack,
                kind: 0,
            });
        }
        let p = build_pairs(&c, PairPolicy::ReferenceVsAttack).unwrap();
        assert_eq!(p.len(), 24);
        assert!(p.iter().all(|s| !s.label.is_valid()));
        assert!(matches!(build_pairs(&[], PairPolicy::AllPairs), Err(Error::EmptyCorpus)));
        assert!(build_pairs(&corpus(2, 2), PairPolicy::ReferenceVsAttack).is_err());
    }
}
