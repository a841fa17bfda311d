//! Training-free open-vocabulary classification by caption retrieval.
//!
//! A query embedding retrieves its nearest captions from an embedded corpus,
//! candidate class names are parsed out of those captions, and each candidate
//! is scored against both the query and the caption centroid.

mod codec;
pub mod embedding;
pub mod index;
pub mod candidates;
pub mod scoring;
pub mod evaluation;
pub mod ingestion;
pub mod synthetic;
pub mod ablation;
