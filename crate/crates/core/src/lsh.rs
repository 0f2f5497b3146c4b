//! Sign-random-projection LSH (Charikar): a `p x lambda` Gaussian matrix maps
//! a feature vector to `lambda` bits, bit `j` set iff the `j`-th hyperplane
//! has a non-negative dot product with the input.
//!
//! The matrix is never stored. It is regenerated from `(seed, p, lambda)`:
//!
//! * generator: ChaCha20 (`rand_chacha::ChaCha20Rng::from_seed`) keyed with
//!   the seed as 8 little-endian bytes followed by 24 zero bytes;
//! * uniforms: `u = (next_u64() >> 11) * 2^-53`, the first of each pair
//!   mapped to `1 - u` so it lies in `(0, 1]`;
//! * normals: Box-Muller, `r = sqrt(-2 ln u1)`, emitting `r cos(2 pi u2)`
//!   then `r sin(2 pi u2)`;
//! * order: column-major, all `p` entries of hyperplane 0 first.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pca::dot;
use crate::types::Imageprint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    pub seed: u64,
    pub p: usize,
    pub lambda: usize,
}

/// Deterministic standard-normal stream (ChaCha20 + Box-Muller).
pub struct GaussianStream {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        GaussianStream {
            rng: ChaCha20Rng::from_seed(key),
            spare: None,
        }
    }

    fn unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }
}

/// Materialized hyperplanes for one [`ProjectionSpec`].
#[derive(Debug, Clone)]
pub struct Projection {
    spec: ProjectionSpec,
    /// Column-major: hyperplane `j` occupies `[j * p, (j + 1) * p)`.
    planes: Vec<f64>,
}

impl Projection {
    pub fn new(spec: ProjectionSpec) -> Self {
        let mut g = GaussianStream::new(spec.seed);
        let planes = (0..spec.p * spec.lambda).map(|_| g.next_normal()).collect();
        Projection { spec, planes }
    }

    pub fn spec(&self) -> ProjectionSpec {
        self.spec
    }

    pub fn hyperplane(&self, j: usize) -> &[f64] {
        &self.planes[j * self.spec.p..(j + 1) * self.spec.p]
    }

    pub fn binarize(&self, v: &[f64]) -> Result<Imageprint> {
        if v.len() != self.spec.p {
            return Err(Error::Dimension {
                expected: self.spec.p,
                actual: v.len(),
            });
        }
        let mut out = Imageprint::zeros(self.spec.lambda);
        for j in 0..self.spec.lambda {
            if dot(self.hyperplane(j), v) >= 0.0 {
                out.set(j, true);
            }
        }
        Ok(out)
    }
}

/// One-shot binarization; prefer a cached [`Projection`] for repeated use.
pub fn binarize(spec: ProjectionSpec, v: &[f64]) -> Result<Imageprint> {
    Projection::new(spec).binarize(v)
}

/// Angle between two nonzero vectors, via clamped arccos of the cosine.
pub fn angle(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let nu = dot(u, u).sqrt();
    let nv = dot(v, v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::UndefinedAngle);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0).acos())
}

/// Per-bit collision probability `1 - theta(u, v) / pi`.
pub fn expected_collision(u: &[f64], v: &[f64]) -> Result<f64> {
    Ok(1.0 - angle(u, v)? / std::f64::consts::PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn zero_vector_maps_to_all_ones() {
        let spec = ProjectionSpec { seed: 1, p: 16, lambda: 100 };
        let b = binarize(spec, &[0.0; 16]).unwrap();
        assert_eq!(b.count_ones(), 100);
    }

    #[test]
    fn scale_invariant() {
        let spec = ProjectionSpec { seed: 9, p: 8, lambda: 256 };
        let v: Vec<f64> = (0..8).map(|i| (i as f64 - 3.3).sin()).collect();
        let v2: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
        assert_eq!(binarize(spec, &v).unwrap(), binarize(spec, &v2).unwrap());
    }

    #[test]
    fn dimension_mismatch() {
        let spec = ProjectionSpec { seed: 9, p: 8, lambda: 16 };
        assert!(matches!(binarize(spec, &[1.0; 7]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn deterministic_matrix() {
        let spec = ProjectionSpec { seed: 123, p: 5, lambda: 7 };
        let a = Projection::new(spec);
        let b = Projection::new(spec);
        assert_eq!(a.planes, b.planes);
        assert_ne!(a.planes, Projection::new(ProjectionSpec { seed: 124, ..spec }).planes);
        // first draws of seed 0, from an independent ChaCha20 keystream + Box-Muller;
        // a silent generator change shows up here
        let mut g = GaussianStream::new(0);
        assert!((g.next_normal() - 0.6957334291781295).abs() < 1e-12);
        assert!((g.next_normal() - 1.0833455943130545).abs() < 1e-12);
    }

    #[test]
    fn normal_moments() {
        let mut g = GaussianStream::new(77);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| g.next_normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.02);
    }

    #[test]
    fn analytic_collision_values() {
        let u = [1.0, 0.0];
        assert!((expected_collision(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        assert!(expected_collision(&u, &[-1.0, 0.0]).unwrap().abs() < 1e-12);
        let v45 = [1.0, 1.0];
        assert!((expected_collision(&u, &v45).unwrap() - 0.75).abs() < 1e-12);
        assert!(matches!(expected_collision(&u, &[0.0, 0.0]), Err(Error::UndefinedAngle)));
    }

    #[test]
    fn orthogonal_vectors_collide_half_the_time() {
        let spec = ProjectionSpec { seed: 5, p: 4, lambda: 10_000 };
        let proj = Projection::new(spec);
        let a = proj.binarize(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        let b = proj.binarize(&[0.0, 1.0, 0.0, 0.0]).unwrap();
        let rate = 1.0 - a.distance_unchecked(&b) as f64 / 10_000.0;
        assert!((rate - 0.5).abs() <= 0.02, "rate {rate}");
    }

    #[test]
    fn empirical_collision_within_three_sigma() {
        let lambda = 4000;
        let proj = Projection::new(ProjectionSpec { seed: 31, p: 6, lambda });
        let mut g = GaussianStream::new(8);
        for _ in 0..10 {
            let u: Vec<f64> = (0..6).map(|_| g.next_normal()).collect();
            let v: Vec<f64> = (0..6).map(|_| g.next_normal()).collect();
            let p = expected_collision(&u, &v).unwrap();
            let a = proj.binarize(&u).unwrap();
            let b = proj.binarize(&v).unwrap();
            let emp = 1.0 - a.distance_unchecked(&b) as f64 / lambda as f64;
            let sigma = (p * (1.0 - p) / lambda as f64).sqrt().max(1e-9);
            assert!((emp - p).abs() <= 3.0 * sigma + 1e-9, "emp {emp} vs {p} (angle {})", angle(&u, &v).unwrap() / PI);
        }
    }
}
