//! Entropy estimate and the one-sided Mann-Whitney U test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest combined sample size tested by exact enumeration.
pub const EXACT_LIMIT: usize = 20;

/// `-log2(far)` bits.
pub fn entropy_bits(far: f64) -> Result<f64> {
    if !(far > 0.0 && far <= 1.0) {
        return Err(Error::InvalidParam(format!("entropy needs 0 < FAR <= 1, got {far}")));
    }
    Ok(-far.log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub bits: f64,
    /// Set when no false accept was observed; `bits` is then
    /// `log2(trials)`.
    pub lower_bound: bool,
}

pub fn entropy_estimate(far: f64, trials: u64) -> Result<EntropyEstimate> {
    if far == 0.0 {
        if trials == 0 {
            return Err(Error::InvalidParam("entropy bound needs at least one trial".into()));
        }
        return Ok(EntropyEstimate {
            bits: (trials as f64).log2(),
            lower_bound: true,
        });
    }
    Ok(EntropyEstimate {
        bits: entropy_bits(far)?,
        lower_bound: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// `U` of the first sample.
    pub u: f64,
    /// `P(U >= u)` under the null.
    pub p_value: f64,
    pub exact: bool,
}

/// Midranks of `values` (1-based), plus the tie-group sizes.
fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        ties.push(j - i);
        i = j;
    }
    (ranks, ties)
}

/// Tests `x > y` (one-sided). Exact over all rank assignments when
/// `x.len() + y.len() <= EXACT_LIMIT`, else the normal approximation with
/// tie and continuity correction.
pub fn mann_whitney_greater(x: &[f64], y: &[f64]) -> Result<MannWhitney> {
    let (n1, n2) = (x.len(), y.len());
    if n1 == 0 || n2 == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParam("Mann-Whitney input must be finite".into()));
    }
    let all: Vec<f64> = x.iter().chain(y).copied().collect();
    let (ranks, ties) = midranks(&all);
    let r1: f64 = ranks[..n1].iter().sum();
    let base = (n1 * (n1 + 1)) as f64 / 2.0;
    let u = r1 - base;
    let n = n1 + n2;

    if n <= EXACT_LIMIT {
        // rank sums of every n1-subset of the pooled midranks
        let mut hits = 0u64;
        let mut total = 0u64;
        let mut idx: Vec<usize> = (0..n1).collect();
        loop {
            let s: f64 = idx.iter().map(|&i| ranks[i]).sum();
            total += 1;
            if s >= r1 - 1e-9 {
                hits += 1;
            }
            // next combination
            let mut i = n1;
            while i > 0 && idx[i - 1] == n - n1 + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..n1 {
                idx[j] = idx[j - 1] + 1;
            }
        }
        return Ok(MannWhitney {
            u,
            p_value: hits as f64 / total as f64,
            exact: true,
        });
    }

    let (f1, f2, nf) = (n1 as f64, n2 as f64, n as f64);
    let mean = f1 * f2 / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (nf * (nf - 1.0));
    let var = f1 * f2 / 12.0 * ((nf + 1.0) - tie_term);
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = (u - mean - 0.5) / var.sqrt();
        1.0 - Normal::standard().cdf(z)
    };
    Ok(MannWhitney {
        u,
        p_value,
        exact: false,
    })
}
