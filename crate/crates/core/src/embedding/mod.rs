//! Embedding-space primitives and the provider abstraction.
//!
//! Every text and image vector enters the engine through a [`TextEmbedder`] or
//! [`EmbeddingProvider`]. Vectors are persisted as `f32` and all similarity
//! math runs in `f64`.

mod remote;
mod store;
mod stub;

pub use remote::RemoteProvider;
pub use store::{EmbeddingStore, STORE_MAGIC, STORE_VERSION};
pub use stub::{HashEmbedder, StubServer};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::CaptionRecord;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("empty input")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("zero vector")]
    ZeroVector,
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("unknown image ref `{0}`")]
    UnknownImageRef(String),
    #[error("no embedding for text `{0}`")]
    UnknownText(String),
    #[error("duplicate key `{0}`")]
    DuplicateKey(String),
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("corrupt embedding store: {0}")]
    CorruptStore(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = EmbeddingError> = std::result::Result<T, E>;

/// A finite, non-empty vector in the shared embedding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(EmbeddingError::EmptyInput);
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite(pos));
        }
        Ok(Self { values })
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| v as f64).collect())
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| v as f32).collect()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_unit(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        Ok(dot(&self.values, &other.values))
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = EmbeddingError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.values
    }
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(EmbeddingError::DimensionMismatch { expected, actual });
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Inner product of an `f64` query against a stored `f32` row, accumulated in `f64`.
pub(crate) fn dot_row(query: &[f64], row: &[f32]) -> f64 {
    query.iter().zip(row).map(|(q, &r)| q * r as f64).sum()
}

pub fn normalize(v: &EmbeddingVector) -> Result<EmbeddingVector> {
    let norm = v.norm();
    if norm == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok(EmbeddingVector {
        values: v.values.iter().map(|x| x / norm).collect(),
    })
}

/// `dot(a, b) / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok((dot(&a.values, &b.values) / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    PrecomputedStore,
    RemoteService,
    /// Deterministic in-process embedders (hash stub, synthetic worlds).
    InProcess,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderDescriptor {
    pub kind: ProviderKind,
    pub dim: usize,
    pub identity: String,
}

/// Source of text embeddings. Also serves as the sentence embedder for
/// semantic-similarity evaluation.
pub trait TextEmbedder: Send + Sync {
    fn descriptor(&self) -> &ProviderDescriptor;

    /// One vector per input, in input order.
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;

    fn dim(&self) -> usize {
        self.descriptor().dim
    }
}

/// Multimodal provider: text and image encoders sharing one space.
pub trait EmbeddingProvider: TextEmbedder {
    fn embed_image(&self, image_ref: &str) -> Result<EmbeddingVector>;

    /// Embeds corpus captions. Stores keyed by caption id override this.
    fn embed_captions(&self, records: &[CaptionRecord]) -> Result<Vec<EmbeddingVector>> {
        let texts: Vec<String> = records.iter().map(|r| r.text.clone()).collect();
        self.embed_texts(&texts)
    }
}

pub(crate) fn check_text_batch(texts: &[String]) -> Result<()> {
    if texts.is_empty() || texts.iter().any(|t| t.trim().is_empty()) {
        return Err(EmbeddingError::EmptyInput);
    }
    Ok(())
}

pub(crate) fn check_batch_dims(vectors: &[EmbeddingVector], dim: usize) -> Result<()> {
    vectors.iter().try_for_each(|v| check_dim(dim, v.dim()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(xs.to_vec()).unwrap()
    }

    #[test]
    fn normalize_three_four_five() {
        let n = normalize(&v(&[3.0, 4.0])).unwrap();
        assert!((n.values()[0] - 0.6).abs() < 1e-12);
        assert!((n.values()[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn normalize_unit_is_identity() {
        let u = v(&[0.0, 1.0, 0.0]);
        let n = normalize(&u).unwrap();
        for (a, b) in n.values().iter().zip(u.values()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn normalize_zero_fails() {
        assert!(matches!(normalize(&v(&[0.0, 0.0])), Err(EmbeddingError::ZeroVector)));
    }

    #[test]
    fn cosine_basic_cases() {
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
    }

    #[test]
    fn cosine_matches_exact_rational_oracle() {
        // dot = 32, |a|^2 = 14, |b|^2 = 77, so cos = 32 / sqrt(1078).
        // 1078 = 2 * 7^2 * 11, hence cos = 32 / (7 sqrt(22)) = 0.974631846197076...
        let oracle = 0.974_631_846_197_076_2_f64;
        let got = cosine_similarity(&v(&[1.0, 2.0, 3.0]), &v(&[4.0, 5.0, 6.0])).unwrap();
        assert!((got - oracle).abs() < 1e-9, "{got}");
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine_similarity(&v(&[1.0]), &v(&[1.0, 0.0])),
            Err(EmbeddingError::DimensionMismatch { expected: 1, actual: 2 })
        ));
        assert!(matches!(
            cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])),
            Err(EmbeddingError::ZeroVector)
        ));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            EmbeddingVector::new(vec![1.0, f64::NAN]),
            Err(EmbeddingError::NonFinite(1))
        ));
        assert!(EmbeddingVector::new(vec![]).is_err());
    }

    #[test]
    fn serde_validates() {
        let ok: EmbeddingVector = serde_json::from_str("[1.0, 2.0]").unwrap();
        assert_eq!(ok.dim(), 2);
        assert!(serde_json::from_str::<EmbeddingVector>("[]").is_err());
    }
}
