//! Threshold grid, confusion counts, F1 sweeps and EER.
//!
//! A score `x` is accepted at threshold `tau` when `x >= tau - TAU_EPS`.
//! Scores are similarities `1 - d / n`; on the grid this coincides with the
//! integer rule `d <= correction_capacity(n, tau)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of evenly spaced thresholds in `[0, 1]`.
pub const GRID_SIZE: usize = 4001;
pub const TAU_EPS: f64 = 1e-9;

pub fn grid(size: usize) -> Vec<f64> {
    assert!(size >= 2, "threshold grid needs at least 2 points");
    (0..size).map(|g| g as f64 / (size - 1) as f64).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    pub fn record(&mut self, valid: bool, accepted: bool) {
        match (valid, accepted) {
            (true, true) => self.tp += 1,
            (true, false) => self.fn_ += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn merge(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// `FP / (FP + TN)`, absent without invalid samples.
    pub fn far(&self) -> Option<f64> {
        let d = self.fp + self.tn;
        (d > 0).then(|| self.fp as f64 / d as f64)
    }

    /// `FN / (FN + TP)`, absent without valid samples.
    pub fn frr(&self) -> Option<f64> {
        let d = self.fn_ + self.tp;
        (d > 0).then(|| self.fn_ as f64 / d as f64)
    }

    /// Valid-as-positive F1, `2TP / (2TP + FP + FN)`.
    pub fn f1(&self) -> Option<f64> {
        let d = 2 * self.tp + self.fp + self.fn_;
        (d > 0).then(|| 2.0 * self.tp as f64 / d as f64)
    }
}

pub fn accepts(score: f64, tau: f64) -> bool {
    score >= tau - TAU_EPS
}

/// Scores split by label and sorted ascending.
#[derive(Debug, Clone)]
pub struct ScoreSet {
    valid: Vec<f64>,
    invalid: Vec<f64>,
}

impl ScoreSet {
    pub fn new(samples: &[(f64, bool)]) -> Self {
        let mut valid: Vec<f64> = samples.iter().filter(|s| s.1).map(|s| s.0).collect();
        let mut invalid: Vec<f64> = samples.iter().filter(|s| !s.1).map(|s| s.0).collect();
        valid.sort_by(f64::total_cmp);
        invalid.sort_by(f64::total_cmp);
        ScoreSet { valid, invalid }
    }

    pub fn n_valid(&self) -> usize {
        self.valid.len()
    }

    pub fn n_invalid(&self) -> usize {
        self.invalid.len()
    }

    fn accepted(sorted: &[f64], tau: f64) -> u64 {
        (sorted.len() - sorted.partition_point(|&x| !accepts(x, tau))) as u64
    }

    pub fn counts_at(&self, tau: f64) -> Counts {
        let tp = Self::accepted(&self.valid, tau);
        let fp = Self::accepted(&self.invalid, tau);
        Counts {
            tp,
            fp,
            tn: self.invalid.len() as u64 - fp,
            fn_: self.valid.len() as u64 - tp,
        }
    }

    /// F1 on every grid point; `None` where undefined.
    pub fn f1_curve(&self, taus: &[f64]) -> Vec<Option<f64>> {
        taus.iter().map(|&t| self.counts_at(t).f1()).collect()
    }

    /// Equal error rate over `taus`, interpolating linearly between the
    /// last grid point with `FAR > FRR` and the first with `FAR <= FRR`.
    pub fn eer(&self, taus: &[f64]) -> Option<f64> {
        if self.valid.is_empty() || self.invalid.is_empty() {
            return None;
        }
        let rates = |t: f64| {
            let c = self.counts_at(t);
            (c.far().expect("invalid present"), c.frr().expect("valid present"))
        };
        let mut prev = rates(taus[0]);
        if prev.0 <= prev.1 {
            return Some((prev.0 + prev.1) / 2.0);
        }
        for &t in &taus[1..] {
            let cur = rates(t);
            if cur.0 <= cur.1 {
                let d0 = prev.0 - prev.1;
                let d1 = cur.0 - cur.1;
                let w = d0 / (d0 - d1);
                return Some(prev.0 + w * (cur.0 - prev.0));
            }
            prev = cur;
        }
        Some((prev.0 + prev.1) / 2.0)
    }
}

/// Index of the maximum, ties resolved toward the larger index.
pub fn argmax_last(curve: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in curve.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|b| *v >= curve[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSweep {
    pub tau: f64,
    pub f1: f64,
    pub f1_curve: Vec<f64>,
}

/// Max-F1 threshold over a `grid_size`-point grid; ties go to the larger
/// (stricter) threshold.
pub fn sweep_threshold(samples: &[(f64, bool)], grid_size: usize) -> Result<ThresholdSweep> {
    let set = ScoreSet::new(samples);
    if set.n_valid() == 0 || set.n_invalid() == 0 {
        return Err(Error::UndefinedF1(format!(
            "need both labels, got {} valid and {} invalid",
            set.n_valid(),
            set.n_invalid()
        )));
    }
    let taus = grid(grid_size);
    let curve: Vec<f64> = set.f1_curve(&taus).into_iter().map(|f| f.unwrap_or(0.0)).collect();
    let best = argmax_last(&curve).expect("non-empty grid");
    Ok(ThresholdSweep {
        tau: taus[best],
        f1: curve[best],
        f1_curve: curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn separable_case() {
        let samples = vec![(0.91, true), (0.9, true), (0.89, true), (0.51, false), (0.5, false), (0.49, false)];
        let s = sweep_threshold(&samples, GRID_SIZE).unwrap();
        assert_eq!(s.f1, 1.0);
        assert!(s.tau > 0.51 && s.tau <= 0.89 + TAU_EPS);
        // stricter tie-break: the largest grid point that still accepts 0.89
        assert!((s.tau - 0.89).abs() < 1e-12);
        assert_eq!(ScoreSet::new(&samples).eer(&grid(GRID_SIZE)), Some(0.0));
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(sweep_threshold(&[(0.9, true), (0.8, true)], 101), Err(Error::UndefinedF1(_))));
        assert!(sweep_threshold(&[(0.9, false)], 101).is_err());
    }

    /// Exact F1 at every midpoint between consecutive distinct scores plus
    /// both extremes.
    fn midpoint_oracle(samples: &[(f64, bool)]) -> f64 {
        let mut xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let mut cands = vec![xs[0] - 1.0, xs[xs.len() - 1] + 1.0];
        cands.extend(xs.windows(2).map(|w| (w[0] + w[1]) / 2.0));
        cands
            .into_iter()
            .map(|t| {
                let mut c = Counts::default();
                for &(x, v) in samples {
                    c.record(v, x > t);
                }
                c.f1().unwrap_or(0.0)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn grid_matches_midpoint_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        for n in [50usize, 127, 500] {
            let samples: Vec<(f64, bool)> = (0..400)
                .map(|i| {
                    let valid = i % 5 == 0;
                    let p = if valid { 0.8 } else { 0.5 };
                    let d = (0..n).filter(|_| !rng.random_bool(p)).count();
                    (1.0 - d as f64 / n as f64, valid)
                })
                .collect();
            let s = sweep_threshold(&samples, GRID_SIZE).unwrap();
            assert!((s.f1 - midpoint_oracle(&samples)).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn eer_interpolates() {
        // valid {0.6, 0.8}, invalid {0.4, 0.7}: FAR and FRR both 0.5 on (0.6, 0.7]
        let samples = [(0.6, true), (0.8, true), (0.4, false), (0.7, false)];
        let e = ScoreSet::new(&samples).eer(&grid(11)).unwrap();
        assert!((e - 0.5).abs() < 1e-12);
        assert_eq!(ScoreSet::new(&[(0.9, true)]).eer(&grid(11)), None);
    }

    #[test]
    fn rates_absent_without_class() {
        let c = Counts { tp: 3, fp: 0, tn: 0, fn_: 0 };
        assert_eq!(c.far(), None);
        assert_eq!(c.frr(), Some(0.0));
        assert_eq!(Counts::default().f1(), None);
    }

    proptest! {
        #[test]
        fn far_frr_monotone_in_tau(scores in proptest::collection::vec((0u16..=100, any::<bool>()), 2..60)) {
            let samples: Vec<(f64, bool)> = scores.iter().map(|&(x, v)| (x as f64 / 100.0, v)).collect();
            let set = ScoreSet::new(&samples);
            let taus = grid(201);
            let mut prev = set.counts_at(taus[0]);
            for &t in &taus[1..] {
                let c = set.counts_at(t);
                prop_assert!(c.fp <= prev.fp);
                prop_assert!(c.fn_ >= prev.fn_);
                prop_assert_eq!(c.total(), samples.len() as u64);
                prev = c;
            }
        }
    }
}
