//! Multimodal candidate scoring and the end-to-end classification pipeline.
//!
//! Each candidate gets an image-to-text score (query vs. candidate name) and a
//! text-to-text score (caption centroid vs. candidate name). Both score vectors
//! go through a softmax and are mixed with weight `alpha` on the visual side.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidates::{extract_candidates, CandidateError, FilterConfig, PosTagger};
use crate::embedding::{
    check_dim, cosine_similarity, EmbeddingError, EmbeddingProvider, EmbeddingVector,
};
use crate::index::{CaptionIndex, IndexError, Probes, RetrievedCaption};

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("no candidates to score")]
    EmptyCandidates,
    #[error("no captions to average")]
    EmptyCaptions,
    #[error("score vectors differ in length: {visual} visual vs {textual} textual")]
    LengthMismatch { visual: usize, textual: usize },
    #[error("invalid classifier configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Candidates(#[from] CandidateError),
}

pub type Result<T, E = ScoringError> = std::result::Result<T, E>;

/// Softmax normalization axis used when fusing the two score vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMode {
    /// Softmax over the candidate set, separately per modality. The fused
    /// scores form a distribution over candidates.
    #[default]
    CandidateSoftmax,
    /// Two-way softmax over each candidate's (visual, textual) pair.
    PairSoftmax,
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionMode::CandidateSoftmax => "candidate",
            FusionMode::PairSoftmax => "pair",
        })
    }
}

impl FromStr for FusionMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "candidate" | "candidate-softmax" => Ok(FusionMode::CandidateSoftmax),
            "pair" | "pair-softmax" => Ok(FusionMode::PairSoftmax),
            other => Err(format!("unknown fusion mode `{other}` (expected candidate|pair)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub candidate: String,
    pub visual: f64,
    pub textual: f64,
    pub fused: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub k: usize,
    pub alpha: f64,
    /// Template with a `{}` placeholder applied to candidate names before
    /// embedding. Empty means bare names.
    pub prompt_template: String,
    pub probes: Probes,
    pub filter: FilterConfig,
    pub fusion: FusionMode,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            k: 10,
            alpha: 0.7,
            prompt_template: String::new(),
            probes: Probes::default(),
            filter: FilterConfig::default(),
            fusion: FusionMode::CandidateSoftmax,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(ScoringError::InvalidConfig("k must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(ScoringError::InvalidConfig(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !self.prompt_template.is_empty() && !self.prompt_template.contains("{}") {
            return Err(ScoringError::InvalidConfig(
                "prompt template needs a `{}` placeholder".into(),
            ));
        }
        self.filter.validate()?;
        Ok(())
    }

    pub fn prompt(&self, candidate: &str) -> String {
        if self.prompt_template.is_empty() {
            candidate.to_string()
        } else {
            self.prompt_template.replace("{}", candidate)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    /// Sorted by fused score, descending; ties by candidate name ascending.
    pub ranked: Vec<ScoreBreakdown>,
    pub retrieved: Vec<RetrievedCaption>,
    /// Set when filtering left no candidates and the most frequent
    /// pre-count-filter token was used instead.
    #[serde(default)]
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Query {
    Embedding(EmbeddingVector),
    ImageRef(String),
}

fn cosines(query: &EmbeddingVector, candidates: &[EmbeddingVector]) -> Result<Vec<f64>> {
    if candidates.is_empty() {
        return Err(ScoringError::EmptyCandidates);
    }
    candidates
        .iter()
        .map(|c| cosine_similarity(query, c).map_err(Into::into))
        .collect()
}

/// Image-to-text score of each candidate.
pub fn visual_scores(image: &EmbeddingVector, candidates: &[EmbeddingVector]) -> Result<Vec<f64>> {
    cosines(image, candidates)
}

/// Arithmetic mean of the caption embeddings, not re-normalized.
pub fn caption_centroid(captions: &[EmbeddingVector]) -> Result<EmbeddingVector> {
    let first = captions.first().ok_or(ScoringError::EmptyCaptions)?;
    let dim = first.dim();
    let mut sum = vec![0.0f64; dim];
    for c in captions {
        check_dim(dim, c.dim())?;
        for (s, v) in sum.iter_mut().zip(c.values()) {
            *s += v;
        }
    }
    let n = captions.len() as f64;
    Ok(EmbeddingVector::new(sum.into_iter().map(|s| s / n).collect())?)
}

/// Text-to-text score of each candidate against the caption centroid.
pub fn text_scores(centroid: &EmbeddingVector, candidates: &[EmbeddingVector]) -> Result<Vec<f64>> {
    cosines(centroid, candidates)
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `alpha * softmax(visual) + (1 - alpha) * softmax(textual)` over the candidate axis.
pub fn fuse(visual: &[f64], textual: &[f64], alpha: f64) -> Result<Vec<f64>> {
    fuse_with(visual, textual, alpha, FusionMode::CandidateSoftmax)
}

pub fn fuse_with(visual: &[f64], textual: &[f64], alpha: f64, mode: FusionMode) -> Result<Vec<f64>> {
    if visual.len() != textual.len() {
        return Err(ScoringError::LengthMismatch {
            visual: visual.len(),
            textual: textual.len(),
        });
    }
    if visual.is_empty() {
        return Err(ScoringError::EmptyCandidates);
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ScoringError::InvalidConfig(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(match mode {
        FusionMode::CandidateSoftmax => {
            let (sv, st) = (softmax(visual), softmax(textual));
            sv.iter()
                .zip(&st)
                .map(|(v, t)| alpha * v + (1.0 - alpha) * t)
                .collect()
        }
        FusionMode::PairSoftmax => visual
            .iter()
            .zip(textual)
            .map(|(&v, &t)| {
                let p = softmax(&[v, t]);
                alpha * p[0] + (1.0 - alpha) * p[1]
            })
            .collect(),
    })
}

fn rank_order(a: &ScoreBreakdown, b: &ScoreBreakdown) -> Ordering {
    b.fused
        .total_cmp(&a.fused)
        .then_with(|| a.candidate.cmp(&b.candidate))
}

/// Scores `names` for one query and returns them ranked.
pub fn score_candidates(
    image: &EmbeddingVector,
    caption_vectors: &[EmbeddingVector],
    names: &[String],
    provider: &dyn EmbeddingProvider,
    config: &ClassifierConfig,
) -> Result<Vec<ScoreBreakdown>> {
    if names.is_empty() {
        return Err(ScoringError::EmptyCandidates);
    }
    let prompts: Vec<String> = names.iter().map(|n| config.prompt(n)).collect();
    let cand_vecs = provider.embed_texts(&prompts)?;
    let visual = visual_scores(image, &cand_vecs)?;
    let centroid = caption_centroid(caption_vecs_or_err(caption_vectors)?)?;
    let textual = match text_scores(&centroid, &cand_vecs) {
        // Captions that cancel out carry no textual signal.
        Err(ScoringError::Embedding(EmbeddingError::ZeroVector)) if centroid.norm() == 0.0 => {
            vec![0.0; names.len()]
        }
        other => other?,
    };
    let fused = fuse_with(&visual, &textual, config.alpha, config.fusion)?;
    let mut ranked: Vec<ScoreBreakdown> = names
        .iter()
        .enumerate()
        .map(|(i, n)| ScoreBreakdown {
            candidate: n.clone(),
            visual: visual[i],
            textual: textual[i],
            fused: fused[i],
        })
        .collect();
    ranked.sort_by(rank_order);
    Ok(ranked)
}

fn caption_vecs_or_err(v: &[EmbeddingVector]) -> Result<&[EmbeddingVector]> {
    if v.is_empty() {
        Err(ScoringError::EmptyCaptions)
    } else {
        Ok(v)
    }
}

/// Retrieval, candidate extraction, multimodal scoring, argmax.
pub fn classify(
    query: &Query,
    index: &CaptionIndex,
    provider: &dyn EmbeddingProvider,
    tagger: &dyn PosTagger,
    config: &ClassifierConfig,
) -> Result<Prediction> {
    config.validate()?;
    let image = match query {
        Query::Embedding(v) => v.clone(),
        Query::ImageRef(r) => provider.embed_image(r)?,
    };
    check_dim(index.dim(), image.dim())?;
    let rows = index.retrieve_rows(&image, config.k, config.probes)?;
    let caption_vectors: Vec<EmbeddingVector> = rows.iter().map(|&(i, _)| index.vector(i)).collect();
    let retrieved = index.materialize(rows);
    let records: Vec<_> = retrieved.iter().map(|r| r.record.clone()).collect();
    let (names, fallback) = match extract_candidates(&records, tagger, &config.filter) {
        Ok(set) => (set.names(), false),
        Err(CandidateError::EmptyCandidateSet {
            fallback: Some(word),
        }) => (vec![word], true),
        Err(e) => return Err(e.into()),
    };
    let ranked = score_candidates(&image, &caption_vectors, &names, provider, config)?;
    Ok(Prediction {
        label: ranked[0].candidate.clone(),
        ranked,
        retrieved,
        fallback,
    })
}

/// Classifies each query independently, in parallel. Errors are reported
/// per query and never abort the batch.
pub fn classify_batch(
    queries: &[Query],
    index: &CaptionIndex,
    provider: &dyn EmbeddingProvider,
    tagger: &dyn PosTagger,
    config: &ClassifierConfig,
) -> Vec<Result<Prediction>> {
    queries
        .par_iter()
        .map(|q| classify(q, index, provider, tagger, config))
        .collect()
}
