//! Feature selection: PCA with principal-component rank band selection, plus
//! the raw and random-subset baselines used for comparison runs.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::codec::f64_b64;
use crate::error::{Error, Result};
use crate::types::Embedding;

/// Eigenvalues below `RANK_TOL * max_eigenvalue` count as zero.
const RANK_TOL: f64 = 1e-10;

/// Half-open rank band `[lo, hi)` of principal components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankRange {
    pub lo: usize,
    pub hi: usize,
}

impl RankRange {
    pub fn new(lo: usize, hi: usize) -> Result<Self> {
        if lo >= hi {
            return Err(Error::InvalidParam(format!("empty rank range [{lo}, {hi})")));
        }
        Ok(RankRange { lo, hi })
    }

    pub fn width(&self) -> usize {
        self.hi - self.lo
    }
}

/// Fitted PCA. Only the leading `rank_range.hi` components are retained;
/// rows are unit vectors sorted by descending explained variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    #[serde(with = "f64_b64")]
    pub mean: Vec<f64>,
    /// Row-major, `rank_range.hi` rows of length `mean.len()`.
    #[serde(with = "f64_b64")]
    pub components: Vec<f64>,
    #[serde(with = "f64_b64")]
    pub explained_variance: Vec<f64>,
    pub rank_range: RankRange,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.rank_range.width()
    }

    pub fn component(&self, rank: usize) -> &[f64] {
        let e = self.dim();
        &self.components[rank * e..(rank + 1) * e]
    }

    /// Projects onto components `[lo, hi)` after centering.
    pub fn project(&self, emb: &[f64]) -> Result<Vec<f64>> {
        if emb.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                actual: emb.len(),
            });
        }
        let centered: Vec<f64> = emb.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        Ok((self.rank_range.lo..self.rank_range.hi)
            .map(|r| dot(self.component(r), &centered))
            .collect())
    }

    pub(crate) fn check(&self) -> Result<()> {
        let e = self.dim();
        if e == 0
            || self.components.len() != self.rank_range.hi * e
            || self.explained_variance.len() != self.rank_range.hi
        {
            return Err(Error::Integrity("PCA model arrays have inconsistent sizes".into()));
        }
        Ok(())
    }
}

/// Mean-centered PCA by eigendecomposition of the sample covariance
/// (denominator `n - 1`). Components carry a fixed sign: the entry with the
/// largest magnitude is positive.
pub fn fit_pca(corpus: &[&[f64]], rank_range: RankRange) -> Result<PcaModel> {
    let n = corpus.len();
    if n < rank_range.hi || n < 2 {
        return Err(Error::InsufficientData {
            needed: rank_range.hi.max(2),
            got: n,
        });
    }
    let e = corpus[0].len();
    if let Some(bad) = corpus.iter().find(|v| v.len() != e) {
        return Err(Error::Dimension {
            expected: e,
            actual: bad.len(),
        });
    }
    if rank_range.hi > e {
        return Err(Error::RankDeficient {
            requested: rank_range.hi,
            achievable: e.min(n - 1),
        });
    }

    let mut mean = vec![0.0; e];
    for v in corpus {
        for (m, x) in mean.iter_mut().zip(v.iter()) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    let centered = DMatrix::from_fn(n, e, |i, j| corpus[i][j] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..e).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let max_eig = eig.eigenvalues[order[0]].max(0.0);
    let rank = order
        .iter()
        .take_while(|&&i| max_eig > 0.0 && eig.eigenvalues[i] > RANK_TOL * max_eig)
        .count();
    if rank < rank_range.hi {
        return Err(Error::RankDeficient {
            requested: rank_range.hi,
            achievable: rank,
        });
    }

    let mut components = Vec::with_capacity(rank_range.hi * e);
    let mut explained_variance = Vec::with_capacity(rank_range.hi);
    for &col in order.iter().take(rank_range.hi) {
        let mut v: Vec<f64> = eig.eigenvectors.column(col).iter().copied().collect();
        let norm = dot(&v, &v).sqrt();
        let pivot = v
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, x)| if x.abs() > best.1 { (i, x.abs()) } else { best })
            .0;
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for x in &mut v {
            *x *= sign / norm;
        }
        components.extend_from_slice(&v);
        explained_variance.push(eig.eigenvalues[col]);
    }

    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        rank_range,
    })
}

/// Convenience wrapper over [`fit_pca`] for owned embeddings.
pub fn fit_pca_embeddings(corpus: &[Embedding], rank_range: RankRange) -> Result<PcaModel> {
    let views: Vec<&[f64]> = corpus.iter().map(|e| e.values.as_slice()).collect();
    fit_pca(&views, rank_range)
}

/// The "raw" baseline: features pass through untouched.
pub fn select_raw(emb: &[f64]) -> Vec<f64> {
    emb.to_vec()
}

/// Sorted coordinate subset of size `k` drawn from `0..e` with a seeded PRNG.
pub fn random_subset(e: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > e {
        return Err(Error::InvalidParam(format!("cannot select {k} of {e} features")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut idx = index::sample(&mut rng, e, k).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// The random-feature baseline: keeps a seeded k-subset of coordinates in
/// their original order.
pub fn select_random_k(emb: &[f64], k: usize, seed: u64) -> Result<Vec<f64>> {
    Ok(random_subset(emb.len(), k, seed)?
        .into_iter()
        .map(|i| emb[i])
        .collect())
}

/// Feature selection stage of a pipeline layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSelector {
    Pca(PcaModel),
    Raw { dim: usize },
    RandomK { dim: usize, indices: Vec<usize> },
}

impl FeatureSelector {
    pub fn input_dim(&self) -> usize {
        match self {
            FeatureSelector::Pca(m) => m.dim(),
            FeatureSelector::Raw { dim } | FeatureSelector::RandomK { dim, .. } => *dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            FeatureSelector::Pca(m) => m.output_dim(),
            FeatureSelector::Raw { dim } => *dim,
            FeatureSelector::RandomK { indices, .. } => indices.len(),
        }
    }

    pub fn apply(&self, emb: &[f64]) -> Result<Vec<f64>> {
        if emb.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                actual: emb.len(),
            });
        }
        Ok(match self {
            FeatureSelector::Pca(m) => m.project(emb)?,
            FeatureSelector::Raw { .. } => select_raw(emb),
            FeatureSelector::RandomK { indices, .. } => indices.iter().map(|&i| emb[i]).collect(),
        })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Cyclic Jacobi eigenvalue iteration; an oracle independent of nalgebra.
    fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = a.len();
        let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| (i == j) as u8 as f64).collect()).collect();
        for _sweep in 0..100 {
            let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
            if off < 1e-22 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                    for row in v.iter_mut() {
                        let vkp = row[p];
                        let vkq = row[q];
                        row[p] = c * vkp - s * vkq;
                        row[q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let vals: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
        let vecs: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| v[i][j]).collect()).collect();
        (vals, vecs)
    }

    fn random_corpus(n: usize, e: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        // anisotropic scales keep eigenvalues well separated
        (0..n)
            .map(|_| (0..e).map(|j| rng.random_range(-1.0..1.0) * (1.0 + j as f64)).collect())
            .collect()
    }

    fn views(c: &[Vec<f64>]) -> Vec<&[f64]> {
        c.iter().map(|v| v.as_slice()).collect()
    }

    #[test]
    fn constant_corpus_is_rank_deficient() {
        let c = vec![vec![1.0, 2.0, 3.0]; 10];
        let err = fit_pca(&views(&c), RankRange::new(0, 1).unwrap()).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { achievable: 0, .. }));
    }

    #[test]
    fn too_small_corpus() {
        let c = random_corpus(3, 5, 1);
        assert!(matches!(
            fit_pca(&views(&c), RankRange::new(0, 4).unwrap()),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn two_dimensional_hand_example() {
        let c = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![2.0, 0.0], vec![-2.0, 0.0]];
        let m = fit_pca(&views(&c), RankRange::new(0, 1).unwrap()).unwrap();
        assert!((m.component(0)[0].abs() - 1.0).abs() < 1e-12);
        assert!(m.component(0)[1].abs() < 1e-12);
        // sample variance of x: (1 + 1 + 4 + 4) / 3
        assert!((m.explained_variance[0] - 10.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn matches_jacobi_oracle() {
        let (n, e) = (50, 10);
        let c = random_corpus(n, e, 7);
        let m = fit_pca(&views(&c), RankRange::new(0, e).unwrap()).unwrap();

        let mean: Vec<f64> = (0..e).map(|j| c.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        let cov: Vec<Vec<f64>> = (0..e)
            .map(|a| {
                (0..e)
                    .map(|b| c.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / (n as f64 - 1.0))
                    .collect()
            })
            .collect();
        let (vals, vecs) = jacobi_eigen(cov);
        let mut order: Vec<usize> = (0..e).collect();
        order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());
        for (rank, &i) in order.iter().enumerate() {
            assert!((vals[i] - m.explained_variance[rank]).abs() < 1e-6 * vals[i].max(1.0));
            let d = dot(&vecs[i], m.component(rank));
            assert!((d.abs() - 1.0).abs() < 1e-6, "rank {rank}: |dot| = {}", d.abs());
        }
    }

    #[test]
    fn components_orthonormal_and_variance_reproduced() {
        let (n, e) = (80, 12);
        let c = random_corpus(n, e, 3);
        let m = fit_pca(&views(&c), RankRange::new(2, 9).unwrap()).unwrap();
        for a in 0..9 {
            for b in 0..9 {
                let d = dot(m.component(a), m.component(b));
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-6);
            }
        }
        assert!(m.explained_variance.windows(2).all(|w| w[0] >= w[1]));
        let scores: Vec<Vec<f64>> = c.iter().map(|v| m.project(v).unwrap()).collect();
        for (j, r) in (2..9).enumerate() {
            let var = scores.iter().map(|s| s[j] * s[j]).sum::<f64>() / (n as f64 - 1.0);
            let want = m.explained_variance[r];
            assert!(((var - want) / want).abs() < 1e-5);
        }
        assert!(m.project(&m.mean).unwrap().iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn refit_is_bit_stable() {
        let c = random_corpus(40, 8, 11);
        let a = fit_pca(&views(&c), RankRange::new(1, 5).unwrap()).unwrap();
        let b = fit_pca(&views(&c), RankRange::new(1, 5).unwrap()).unwrap();
        assert_eq!(a, b);
        for r in 0..5 {
            let comp = a.component(r);
            let pivot = comp.iter().cloned().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn band_width_and_dimension_errors() {
        let c = random_corpus(400, 420, 5);
        let m = fit_pca(&views(&c), RankRange::new(200, 300).unwrap()).unwrap();
        assert_eq!(m.project(&c[0]).unwrap().len(), 100);
        assert!(matches!(m.project(&[0.0; 3]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn projection_is_contractive() {
        let c = random_corpus(60, 10, 9);
        let m = fit_pca(&views(&c), RankRange::new(3, 8).unwrap()).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..200 {
            let a: Vec<f64> = (0..10).map(|_| rng.random_range(-5.0..5.0)).collect();
            let b: Vec<f64> = (0..10).map(|_| rng.random_range(-5.0..5.0)).collect();
            let pa = m.project(&a).unwrap();
            let pb = m.project(&b).unwrap();
            let dp: f64 = pa.iter().zip(&pb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let d: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            assert!(dp <= d + 1e-9);
        }
    }

    #[test]
    fn random_k_baseline() {
        let emb: Vec<f64> = (0..2048).map(|i| i as f64).collect();
        let full = select_random_k(&emb, 2048, 1).unwrap();
        assert_eq!(full, emb);
        let a = select_random_k(&emb, 200, 42).unwrap();
        let b = select_random_k(&emb, 200, 42).unwrap();
        assert_eq!(a.len(), 200);
        assert_eq!(a, b);
        assert_ne!(a, select_random_k(&emb, 200, 43).unwrap());
        assert!(select_random_k(&emb, 2049, 1).is_err());
        assert_eq!(select_raw(&emb), emb);
    }
}
