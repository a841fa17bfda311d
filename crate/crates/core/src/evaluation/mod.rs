//! Open-vocabulary evaluation: Cluster Accuracy, Semantic Similarity,
//! Semantic IoU, and grounding of free-form labels onto a fixed vocabulary.

mod hungarian;
mod report;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_similarity, EmbeddingError, EmbeddingVector, TextEmbedder};

pub use hungarian::{assignment_cost, hungarian};
pub use report::{
    average_reports, evaluate, parse_predictions, parse_truths, read_predictions, read_truths,
    ClassStats, DatasetAverage, EvaluationConfig, EvaluationReport,
};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no predictions to evaluate")]
    EmptyInput,
    #[error("cost matrix is empty")]
    EmptyMatrix,
    #[error("cost matrix rows differ in length")]
    RaggedMatrix,
    #[error("cost matrix contains a non-finite value")]
    NonFiniteCost,
    #[error("empty label for sample {0:?}")]
    EmptyLabel(String),
    #[error("no ground-truth label for prediction {0:?}")]
    MissingTruth(String),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("embedder: {0}")]
    Embedding(#[from] EmbeddingError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPrediction {
    pub id: String,
    pub predicted: String,
    pub truth: String,
}

impl LabeledPrediction {
    pub fn new(id: impl Into<String>, predicted: impl Into<String>, truth: impl Into<String>) -> Self {
        Self { id: id.into(), predicted: predicted.into(), truth: truth.into() }
    }
}

/// Word set used by Semantic IoU: lowercased, split on whitespace and hyphens.
pub fn label_words(label: &str) -> BTreeSet<String> {
    label
        .to_lowercase()
        .split(|c: char| c.is_whitespace() || c == '-')
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn semantic_iou(predicted: &str, truth: &str) -> f64 {
    let a = label_words(predicted);
    let b = label_words(truth);
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Cosine similarity of the two label embeddings, floored at 0.
pub fn semantic_similarity(predicted: &str, truth: &str, embedder: &dyn TextEmbedder) -> Result<f64> {
    if predicted == truth {
        let v = embedder.embed_texts(&[predicted.to_string()])?;
        return Ok(if v.is_empty() { 0.0 } else { 1.0 });
    }
    let v = embedder.embed_texts(&[predicted.to_string(), truth.to_string()])?;
    match v.as_slice() {
        [a, b] => Ok(floor_cosine(a, b)?),
        _ => Err(EmbeddingError::MalformedResponse("expected two vectors".into()).into()),
    }
}

pub(crate) fn floor_cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    Ok(cosine_similarity(a, b)?.max(0.0))
}

/// Nearest vocabulary entry in embedding space; exact matches short-circuit,
/// ties resolve to the lexicographically smallest entry.
pub fn ground_to_vocabulary(
    predicted: &str,
    vocabulary: &[String],
    embedder: &dyn TextEmbedder,
) -> Result<String> {
    if vocabulary.is_empty() {
        return Err(EvalError::EmptyVocabulary);
    }
    if vocabulary.iter().any(|v| v == predicted) {
        return Ok(predicted.to_string());
    }
    let mut texts = Vec::with_capacity(vocabulary.len() + 1);
    texts.push(predicted.to_string());
    texts.extend(vocabulary.iter().cloned());
    let vectors = embedder.embed_texts(&texts)?;
    if vectors.len() != texts.len() {
        return Err(EmbeddingError::MalformedResponse("vector count mismatch".into()).into());
    }
    let query = &vectors[0];
    let mut best: Option<(f64, &String)> = None;
    for (entry, v) in vocabulary.iter().zip(&vectors[1..]) {
        let s = cosine_similarity(query, v)?;
        best = match best {
            Some((bs, be)) if bs > s || (bs == s && be <= entry) => Some((bs, be)),
            _ => Some((s, entry)),
        };
    }
    Ok(best.map(|(_, e)| e.clone()).unwrap_or_default())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterMode {
    /// One-to-one when there are no more clusters than labels, else many-to-one.
    #[default]
    Auto,
    OneToOne,
    ManyToOne,
}

impl fmt::Display for ClusterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Auto => "auto",
            Self::OneToOne => "one-to-one",
            Self::ManyToOne => "many-to-one",
        })
    }
}

impl FromStr for ClusterMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "auto" => Ok(Self::Auto),
            "one-to-one" | "hungarian" => Ok(Self::OneToOne),
            "many-to-one" | "majority" => Ok(Self::ManyToOne),
            other => Err(format!("unknown cluster mode {other:?}")),
        }
    }
}

/// Co-occurrence counts of predicted clusters (rows) against truth labels
/// (columns), both in sorted order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AssignmentMatrix {
    pub clusters: Vec<String>,
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl AssignmentMatrix {
    pub fn from_predictions(preds: &[LabeledPrediction]) -> Self {
        let clusters: Vec<String> = preds
            .iter()
            .map(|p| p.predicted.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let labels: Vec<String> = preds
            .iter()
            .map(|p| p.truth.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let ci: HashMap<&str, usize> =
            clusters.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let li: HashMap<&str, usize> =
            labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let mut counts = vec![vec![0u64; labels.len()]; clusters.len()];
        for p in preds {
            counts[ci[p.predicted.as_str()]][li[p.truth.as_str()]] += 1;
        }
        Self { clusters, labels, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterMatch {
    pub accuracy: f64,
    /// Mode actually applied after resolving `Auto`.
    pub mode: ClusterMode,
    /// Predicted cluster to truth label; unmatched clusters are absent.
    pub mapping: BTreeMap<String, String>,
}

impl ClusterMatch {
    pub fn is_correct(&self, p: &LabeledPrediction) -> bool {
        self.mapping.get(&p.predicted) == Some(&p.truth)
    }
}

pub fn resolve_mode(mode: ClusterMode, clusters: usize, labels: usize) -> ClusterMode {
    match mode {
        ClusterMode::Auto if clusters <= labels => ClusterMode::OneToOne,
        ClusterMode::Auto => ClusterMode::ManyToOne,
        m => m,
    }
}

pub fn match_clusters(preds: &[LabeledPrediction], mode: ClusterMode) -> Result<ClusterMatch> {
    if preds.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if let Some(p) = preds.iter().find(|p| p.predicted.is_empty() || p.truth.is_empty()) {
        return Err(EvalError::EmptyLabel(p.id.clone()));
    }
    let m = AssignmentMatrix::from_predictions(preds);
    let mode = resolve_mode(mode, m.clusters.len(), m.labels.len());
    let mut mapping = BTreeMap::new();
    let mut correct = 0u64;
    match mode {
        ClusterMode::OneToOne => {
            let cost: Vec<Vec<f64>> = m
                .counts
                .iter()
                .map(|row| row.iter().map(|&c| -(c as f64)).collect())
                .collect();
            for (r, c) in hungarian(&cost)? {
                correct += m.counts[r][c];
                mapping.insert(m.clusters[r].clone(), m.labels[c].clone());
            }
        }
        _ => {
            for (r, row) in m.counts.iter().enumerate() {
                // First maximum in sorted label order.
                let (c, &best) = row
                    .iter()
                    .enumerate()
                    .fold((0, &row[0]), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc });
                correct += best;
                mapping.insert(m.clusters[r].clone(), m.labels[c].clone());
            }
        }
    }
    Ok(ClusterMatch { accuracy: correct as f64 / m.total() as f64, mode, mapping })
}

pub fn cluster_accuracy(preds: &[LabeledPrediction], mode: ClusterMode) -> Result<f64> {
    Ok(match_clusters(preds, mode)?.accuracy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{EmbeddingStore, EmbeddingVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lp(pairs: &[(&str, &str)]) -> Vec<LabeledPrediction> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, (p, t))| LabeledPrediction::new(format!("s{i}"), *p, *t))
            .collect()
    }

    fn store(entries: &[(&str, Vec<f64>)]) -> EmbeddingStore {
        let mut s = EmbeddingStore::new(entries[0].1.len()).unwrap();
        for (k, v) in entries {
            s.insert_vector(*k, &EmbeddingVector::new(v.clone()).unwrap()).unwrap();
        }
        s
    }

    #[test]
    fn iou_fixtures() {
        assert_eq!(semantic_iou("cassowary", "cassowary"), 1.0);
        assert_eq!(semantic_iou("stanford cars", "cars"), 0.5);
        assert_eq!(semantic_iou("great white shark", "white shark"), 2.0 / 3.0);
        assert_eq!(semantic_iou("dog", "cat"), 0.0);
        assert_eq!(semantic_iou("Red-Winged Blackbird", "red winged blackbird"), 1.0);
    }

    #[test]
    fn similarity_under_stub() {
        let s = store(&[
            ("dog", vec![1.0, 0.0, 0.0]),
            ("cat", vec![0.0, 1.0, 0.0]),
            ("anti", vec![-1.0, 0.0, 0.0]),
            // (1,1,0) and (1,0,1) are 60 degrees apart.
            ("wolf", vec![1.0, 1.0, 0.0]),
            ("fox", vec![1.0, 0.0, 1.0]),
        ]);
        assert_eq!(semantic_similarity("dog", "dog", &s).unwrap(), 1.0);
        assert_eq!(semantic_similarity("dog", "cat", &s).unwrap(), 0.0);
        assert!((semantic_similarity("wolf", "fox", &s).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(semantic_similarity("dog", "anti", &s).unwrap(), 0.0);
        assert!(matches!(
            semantic_similarity("dog", "zebra", &s),
            Err(EvalError::Embedding(EmbeddingError::UnknownText(_)))
        ));
    }

    #[test]
    fn grounding() {
        let s = store(&[
            ("husky", vec![0.9, 0.1, 0.0]),
            ("dog", vec![1.0, 0.0, 0.0]),
            ("cat", vec![0.0, 1.0, 0.0]),
            ("car", vec![0.0, 0.0, 1.0]),
            ("auto", vec![0.0, 0.0, 1.0]),
            ("automobile", vec![0.0, 0.1, 1.0]),
        ]);
        let vocab: Vec<String> = ["cat", "dog", "car"].iter().map(|s| s.to_string()).collect();
        assert_eq!(ground_to_vocabulary("cat", &vocab, &s).unwrap(), "cat");
        assert_eq!(ground_to_vocabulary("husky", &vocab, &s).unwrap(), "dog");
        assert_eq!(ground_to_vocabulary("husky", &vocab[2..], &s).unwrap(), "car");
        // "auto" and "car" share a vector: tie resolves lexicographically.
        let tied: Vec<String> = vec!["car".into(), "auto".into()];
        assert_eq!(ground_to_vocabulary("automobile", &tied, &s).unwrap(), "auto");
        assert_eq!(ground_to_vocabulary("husky", &["cat".to_string()], &s).unwrap(), "cat");
        assert!(ground_to_vocabulary("husky", &["zz".to_string()], &s).is_err());
        assert!(matches!(ground_to_vocabulary("x", &[], &s), Err(EvalError::EmptyVocabulary)));
    }

    #[test]
    fn grounding_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let words: Vec<String> = (0..12).map(|i| format!("w{i}")).collect();
            let entries: Vec<(&str, Vec<f64>)> = words
                .iter()
                .map(|w| (w.as_str(), (0..6).map(|_| rng.random::<f64>() - 0.5).collect()))
                .collect();
            let s = store(&entries);
            let vocab = words[1..].to_vec();
            let q = EmbeddingVector::new(entries[0].1.clone()).unwrap();
            let expected = vocab
                .iter()
                .zip(&entries[1..])
                .map(|(w, (_, v))| {
                    (cosine_similarity(&q, &EmbeddingVector::new(v.clone()).unwrap()).unwrap(), w)
                })
                .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(a.1)))
                .unwrap()
                .1
                .clone();
            assert_eq!(ground_to_vocabulary(&words[0], &vocab, &s).unwrap(), expected);
        }
    }

    #[test]
    fn cluster_accuracy_fixtures() {
        let perfect = lp(&[("a", "a"), ("b", "b"), ("c", "c"), ("a", "a")]);
        assert_eq!(cluster_accuracy(&perfect, ClusterMode::Auto).unwrap(), 1.0);
        let constant = lp(&[("x", "a"), ("x", "b"), ("x", "c"), ("x", "d")]);
        assert_eq!(cluster_accuracy(&constant, ClusterMode::ManyToOne).unwrap(), 0.25);
        let relabeled = lp(&[("p", "a"), ("q", "b"), ("p", "a"), ("r", "c")]);
        assert_eq!(cluster_accuracy(&relabeled, ClusterMode::OneToOne).unwrap(), 1.0);
        assert!(matches!(cluster_accuracy(&[], ClusterMode::Auto), Err(EvalError::EmptyInput)));
    }

    #[test]
    fn auto_mode_switches_on_cluster_count() {
        let more_clusters = lp(&[("p", "a"), ("q", "a"), ("r", "b")]);
        let m = match_clusters(&more_clusters, ClusterMode::Auto).unwrap();
        assert_eq!(m.mode, ClusterMode::ManyToOne);
        assert_eq!(m.accuracy, 1.0);
        let one = match_clusters(&more_clusters, ClusterMode::OneToOne).unwrap();
        assert!((one.accuracy - 2.0 / 3.0).abs() < 1e-15);
    }

    /// Best injective cluster → label map by enumeration.
    fn brute_force_ca(preds: &[LabeledPrediction]) -> f64 {
        let m = AssignmentMatrix::from_predictions(preds);
        fn rec(r: usize, m: &AssignmentMatrix, used: &mut Vec<bool>, acc: u64, best: &mut u64) {
            if r == m.clusters.len() {
                *best = (*best).max(acc);
                return;
            }
            // Cluster r left unmatched.
            rec(r + 1, m, used, acc, best);
            for c in 0..m.labels.len() {
                if !used[c] {
                    used[c] = true;
                    rec(r + 1, m, used, acc + m.counts[r][c], best);
                    used[c] = false;
                }
            }
        }
        let mut best = 0;
        rec(0, &m, &mut vec![false; m.labels.len()], 0, &mut best);
        best as f64 / preds.len() as f64
    }

    #[test]
    fn one_to_one_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let preds: Vec<LabeledPrediction> = (0..30)
                .map(|i| {
                    LabeledPrediction::new(
                        format!("s{i}"),
                        format!("c{}", rng.random_range(0..5)),
                        format!("t{}", rng.random_range(0..4)),
                    )
                })
                .collect();
            let got = cluster_accuracy(&preds, ClusterMode::OneToOne).unwrap();
            assert!((got - brute_force_ca(&preds)).abs() < 1e-12);
        }
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("one-to-one".parse::<ClusterMode>().unwrap(), ClusterMode::OneToOne);
        assert_eq!("many_to_one".parse::<ClusterMode>().unwrap(), ClusterMode::ManyToOne);
        assert_eq!(ClusterMode::Auto.to_string().parse::<ClusterMode>().unwrap(), ClusterMode::Auto);
        assert!("best".parse::<ClusterMode>().is_err());
    }
}
