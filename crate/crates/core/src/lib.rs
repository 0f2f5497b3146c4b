//! Image-derived authentication credentials.
//!
//! Embeddings are reduced to a band of principal components, hashed to
//! bitstrings ("imageprints") with sign-random-projection LSH, and bound to
//! a random secret through a BCH code-offset secure sketch. Multi-segment
//! prints split the secret with a `(t, s)` threshold scheme. The [`eval`]
//! module holds the measurement harness (threshold discovery, FAR/FRR/EER,
//! attacks, LSH similarity checks).

pub mod bch;
pub mod cli;
pub mod codec;
pub mod error;
pub mod eval;
pub mod gf;
pub mod lsh;
pub mod pca;
pub mod pipeline;
pub mod shamir;
pub mod sketch;
pub mod types;

pub use error::{Error, Result};
pub use types::{correction_capacity, hamming, Embedding, HammingStats, Imageprint, ParamSet, Variant};
