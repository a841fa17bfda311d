//! Embedded caption corpus: build, persist, and top-k retrieval.

mod file;
mod partition;

pub use file::{INDEX_MAGIC, INDEX_VERSION};

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{
    check_dim, dot_row, normalize, EmbeddingError, EmbeddingProvider, EmbeddingVector,
};
use partition::Partitions;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty index")]
    EmptyIndex,
    #[error("duplicate caption id `{0}`")]
    DuplicateId(String),
    #[error("caption `{0}` has empty text")]
    EmptyText(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("corrupt index file: {0}")]
    CorruptFile(String),
    #[error(transparent)]
    Embedding(EmbeddingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<EmbeddingError> for IndexError {
    fn from(e: EmbeddingError) -> Self {
        match e {
            EmbeddingError::DimensionMismatch { expected, actual } => {
                IndexError::DimensionMismatch { expected, actual }
            }
            other => IndexError::Embedding(other),
        }
    }
}

pub type Result<T, E = IndexError> = std::result::Result<T, E>;

/// One corpus entry. Field order is the canonical JSON-lines order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub source: String,
}

impl CaptionRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>, source: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            source: source.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedCaption {
    pub record: CaptionRecord,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructureKind {
    #[default]
    Flat,
    Partitioned,
}

impl FromStr for StructureKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "flat" => Ok(Self::Flat),
            "partitioned" | "ivf" => Ok(Self::Partitioned),
            other => Err(format!("unknown structure `{other}` (expected flat|partitioned)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildConfig {
    pub structure: StructureKind,
    pub num_partitions: usize,
    /// Seeds the farthest-point initialization of the partition centroids.
    pub seed: u64,
    /// Drop records whose text repeats an earlier record verbatim.
    pub dedup: bool,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            structure: StructureKind::Flat,
            num_partitions: 16,
            seed: 42,
            dedup: false,
        }
    }
}

impl BuildConfig {
    pub fn partitioned(num_partitions: usize) -> Self {
        Self {
            structure: StructureKind::Partitioned,
            num_partitions,
            ..Self::default()
        }
    }
}

/// Number of partitions scanned per query. Ignored by flat indexes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Probes {
    All,
    Count(usize),
}

impl Default for Probes {
    fn default() -> Self {
        Probes::Count(8)
    }
}

impl FromStr for Probes {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(Probes::All);
        }
        match s.parse::<usize>() {
            Ok(0) | Err(_) => Err(format!("probes must be a positive integer or `all`, got `{s}`")),
            Ok(n) => Ok(Probes::Count(n)),
        }
    }
}

impl fmt::Display for Probes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Probes::All => f.write_str("all"),
            Probes::Count(n) => write!(f, "{n}"),
        }
    }
}

/// Immutable embedded corpus. Rows are unit-normalized `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionIndex {
    dim: usize,
    records: Vec<CaptionRecord>,
    vectors: Vec<f32>,
    partitions: Option<Partitions>,
    provider_identity: String,
}

impl CaptionIndex {
    /// Embeds `records` through `provider` and builds the search structure.
    pub fn build(
        records: Vec<CaptionRecord>,
        provider: &dyn EmbeddingProvider,
        config: &BuildConfig,
    ) -> Result<Self> {
        let records = prepare_records(records, config.dedup)?;
        let vectors = provider.embed_captions(&records)?;
        Self::from_vectors(records, vectors, &provider.descriptor().identity, config)
    }

    /// Builds from caller-supplied embeddings, one per record.
    pub fn from_vectors(
        records: Vec<CaptionRecord>,
        vectors: Vec<EmbeddingVector>,
        provider_identity: &str,
        config: &BuildConfig,
    ) -> Result<Self> {
        if records.len() != vectors.len() {
            return Err(IndexError::InvalidConfig(format!(
                "{} records but {} vectors",
                records.len(),
                vectors.len()
            )));
        }
        let (records, vectors): (Vec<_>, Vec<_>) = if config.dedup {
            let mut seen = HashSet::new();
            records
                .into_iter()
                .zip(vectors)
                .filter(|(r, _)| seen.insert(r.text.clone()))
                .unzip()
        } else {
            (records, vectors)
        };
        let records = prepare_records(records, false)?;
        let dim = vectors[0].dim();
        let mut flat = Vec::with_capacity(records.len() * dim);
        for v in &vectors {
            check_dim(dim, v.dim())?;
            flat.extend(normalize(v)?.to_f32());
        }
        let partitions = match config.structure {
            StructureKind::Flat => None,
            StructureKind::Partitioned => {
                if config.num_partitions == 0 {
                    return Err(IndexError::InvalidConfig("num_partitions must be >= 1".into()));
                }
                Some(Partitions::train(&flat, dim, config.num_partitions, config.seed))
            }
        };
        Ok(Self {
            dim,
            records,
            vectors: flat,
            partitions,
            provider_identity: provider_identity.to_string(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[CaptionRecord] {
        &self.records
    }

    pub fn provider_identity(&self) -> &str {
        &self.provider_identity
    }

    pub fn structure(&self) -> StructureKind {
        if self.partitions.is_some() {
            StructureKind::Partitioned
        } else {
            StructureKind::Flat
        }
    }

    pub fn num_partitions(&self) -> usize {
        self.partitions.as_ref().map_or(1, |p| p.len())
    }

    /// Member lists of each partition, or `None` for a flat index.
    pub fn partition_members(&self) -> Option<Vec<Vec<usize>>> {
        self.partitions.as_ref().map(|p| {
            p.members
                .iter()
                .map(|m| m.iter().map(|&i| i as usize).collect())
                .collect()
        })
    }

    /// The raw `f32` row payload, `len() * dim()` values.
    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vector(&self, i: usize) -> EmbeddingVector {
        EmbeddingVector::from_f32(self.row(i)).expect("index rows are finite")
    }

    /// Top-k by cosine similarity. Probes only matter for partitioned indexes.
    pub fn retrieve_topk(
        &self,
        query: &EmbeddingVector,
        k: usize,
        probes: Probes,
    ) -> Result<Vec<RetrievedCaption>> {
        Ok(self.materialize(self.retrieve_rows(query, k, probes)?))
    }

    /// Like [`Self::retrieve_topk`] but returns `(row, score)` pairs.
    pub fn retrieve_rows(
        &self,
        query: &EmbeddingVector,
        k: usize,
        probes: Probes,
    ) -> Result<Vec<(usize, f64)>> {
        self.check_query(query, k)?;
        let q = query_unit(query)?;
        Ok(match &self.partitions {
            None => self.scan(&q, 0..self.len(), k),
            Some(parts) => {
                let n = match probes {
                    Probes::All => parts.len(),
                    Probes::Count(n) => n.min(parts.len()),
                };
                let order = parts.rank(&q, self.dim);
                let members = order[..n]
                    .iter()
                    .flat_map(|&p| parts.members[p].iter().map(|&i| i as usize));
                self.scan(&q, members, k)
            }
        })
    }

    /// Exhaustive linear scan; the exactness reference for [`Self::retrieve_topk`].
    pub fn exact_topk(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<RetrievedCaption>> {
        self.check_query(query, k)?;
        let q = query_unit(query)?;
        Ok(self.materialize(self.scan(&q, 0..self.len(), k)))
    }

    fn check_query(&self, query: &EmbeddingVector, k: usize) -> Result<()> {
        if self.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        if k == 0 {
            return Err(IndexError::InvalidConfig("k must be >= 1".into()));
        }
        check_dim(self.dim, query.dim())?;
        Ok(())
    }

    fn scan(&self, q: &[f64], rows: impl Iterator<Item = usize>, k: usize) -> Vec<(usize, f64)> {
        let mut hits: Vec<(usize, f64)> = rows
            .map(|i| (i, dot_row(q, self.row(i)).clamp(-1.0, 1.0)))
            .collect();
        let cmp = |a: &(usize, f64), b: &(usize, f64)| self.rank_order(a, b);
        if hits.len() > k {
            hits.select_nth_unstable_by(k - 1, cmp);
            hits.truncate(k);
        }
        hits.sort_unstable_by(cmp);
        hits
    }

    /// Score descending, then record id ascending.
    fn rank_order(&self, a: &(usize, f64), b: &(usize, f64)) -> Ordering {
        b.1.total_cmp(&a.1)
            .then_with(|| self.records[a.0].id.cmp(&self.records[b.0].id))
    }

    pub(crate) fn materialize(&self, hits: Vec<(usize, f64)>) -> Vec<RetrievedCaption> {
        hits.into_iter()
            .map(|(i, score)| RetrievedCaption {
                record: self.records[i].clone(),
                score,
            })
            .collect()
    }

    /// Retrieves for many queries in parallel, preserving input order.
    pub fn retrieve_batch(
        &self,
        queries: &[EmbeddingVector],
        k: usize,
        probes: Probes,
    ) -> Vec<Result<Vec<RetrievedCaption>>> {
        queries
            .par_iter()
            .map(|q| self.retrieve_topk(q, k, probes))
            .collect()
    }
}

fn query_unit(query: &EmbeddingVector) -> Result<Vec<f64>> {
    Ok(normalize(query)?.into_values())
}

fn prepare_records(records: Vec<CaptionRecord>, dedup: bool) -> Result<Vec<CaptionRecord>> {
    if records.is_empty() {
        return Err(IndexError::EmptyCorpus);
    }
    let mut ids = HashSet::with_capacity(records.len());
    let mut texts = HashSet::new();
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        if r.text.trim().is_empty() {
            return Err(IndexError::EmptyText(r.id));
        }
        if !ids.insert(r.id.clone()) {
            return Err(IndexError::DuplicateId(r.id));
        }
        if dedup && !texts.insert(r.text.clone()) {
            continue;
        }
        out.push(r);
    }
    Ok(out)
}
