//! Prediction/truth file parsing and report assembly.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{floor_cosine, match_clusters, semantic_iou, ClusterMode, EvalError, LabeledPrediction, Result};
use crate::embedding::{EmbeddingError, TextEmbedder};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    pub mode: ClusterMode,
    /// Identity of the Semantic Similarity embedder, filled in by `evaluate`.
    #[serde(default)]
    pub embedder: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub label: String,
    pub count: usize,
    pub cluster_accuracy: f64,
    pub semantic_similarity: Option<f64>,
    pub semantic_iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub samples: usize,
    pub cluster_accuracy: f64,
    /// Matching mode applied after resolving `auto`.
    pub cluster_mode: ClusterMode,
    pub semantic_similarity: Option<f64>,
    pub semantic_iou: f64,
    pub per_class: Vec<ClassStats>,
    pub config: EvaluationConfig,
}

#[derive(Deserialize)]
struct LabelRow {
    id: String,
    label: String,
}

fn parse_json_row(line: &str, n: usize) -> Result<(String, String)> {
    let row: LabelRow =
        serde_json::from_str(line).map_err(|e| EvalError::Parse { line: n, message: e.to_string() })?;
    Ok((row.id, row.label))
}

fn insert_unique(out: &mut Vec<(String, String)>, seen: &mut BTreeSet<String>, row: (String, String)) -> Result<()> {
    if !seen.insert(row.0.clone()) {
        return Err(EvalError::DuplicateId(row.0));
    }
    out.push(row);
    Ok(())
}

/// Predictions as JSON lines carrying at least `id` and `label`; other
/// fields (ranked candidates, retrieved captions) are ignored.
pub fn parse_predictions(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        insert_unique(&mut out, &mut seen, parse_json_row(line, i + 1)?)?;
    }
    Ok(out)
}

/// Truths as JSON lines `{"id", "label"}` or two-column TSV, decided per line.
pub fn parse_truths(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let row = if trimmed.starts_with('{') {
            parse_json_row(trimmed, i + 1)?
        } else {
            let mut cols = line.trim_end_matches(['\r', '\n']).split('\t');
            match (cols.next(), cols.next(), cols.next()) {
                (Some(id), Some(label), None) if !id.trim().is_empty() => {
                    (id.trim().to_string(), label.trim().to_string())
                }
                _ => {
                    return Err(EvalError::Parse {
                        line: i + 1,
                        message: "expected two tab-separated columns".into(),
                    })
                }
            }
        };
        insert_unique(&mut out, &mut seen, row)?;
    }
    Ok(out.into_iter().collect())
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    parse_predictions(&std::fs::read_to_string(path)?)
}

pub fn read_truths(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    parse_truths(&std::fs::read_to_string(path)?)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Per-sample Semantic Similarity, embedding each distinct label once.
fn similarities(preds: &[LabeledPrediction], embedder: &dyn TextEmbedder) -> Result<Vec<f64>> {
    let unique: Vec<String> = preds
        .iter()
        .flat_map(|p| [p.predicted.clone(), p.truth.clone()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let vectors = embedder.embed_texts(&unique)?;
    if vectors.len() != unique.len() {
        return Err(EmbeddingError::MalformedResponse("vector count mismatch".into()).into());
    }
    let lookup: HashMap<&str, usize> = unique.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    preds
        .iter()
        .map(|p| {
            if p.predicted == p.truth {
                return Ok(1.0);
            }
            floor_cosine(&vectors[lookup[p.predicted.as_str()]], &vectors[lookup[p.truth.as_str()]])
        })
        .collect()
}

/// Joins predictions with truths and computes every metric. Dataset-level
/// values are arithmetic means over samples.
pub fn evaluate(
    predictions: &[(String, String)],
    truths: &BTreeMap<String, String>,
    embedder: Option<&dyn TextEmbedder>,
    config: &EvaluationConfig,
) -> Result<EvaluationReport> {
    if predictions.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let preds = predictions
        .iter()
        .map(|(id, label)| match truths.get(id) {
            Some(t) => Ok(LabeledPrediction::new(id.clone(), label.clone(), t.clone())),
            None => Err(EvalError::MissingTruth(id.clone())),
        })
        .collect::<Result<Vec<_>>>()?;
    let matched = match_clusters(&preds, config.mode)?;
    let ious: Vec<f64> = preds.iter().map(|p| semantic_iou(&p.predicted, &p.truth)).collect();
    let sims = embedder.map(|e| similarities(&preds, e)).transpose()?;

    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in preds.iter().enumerate() {
        by_class.entry(p.truth.as_str()).or_default().push(i);
    }
    let per_class = by_class
        .into_iter()
        .map(|(label, idx)| ClassStats {
            label: label.to_string(),
            count: idx.len(),
            cluster_accuracy: mean(idx.iter().map(|&i| f64::from(u8::from(matched.is_correct(&preds[i]))))),
            semantic_similarity: sims.as_ref().map(|s| mean(idx.iter().map(|&i| s[i]))),
            semantic_iou: mean(idx.iter().map(|&i| ious[i])),
        })
        .collect();

    Ok(EvaluationReport {
        samples: preds.len(),
        cluster_accuracy: matched.accuracy,
        cluster_mode: matched.mode,
        semantic_similarity: sims.as_ref().map(|s| mean(s.iter().copied())),
        semantic_iou: mean(ious.iter().copied()),
        per_class,
        config: EvaluationConfig {
            mode: config.mode,
            embedder: embedder.map(|e| e.descriptor().identity.clone()),
        },
    })
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Flat table: one `overall` row followed by one `class` row per label.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record(["scope", "label", "count", "cluster_accuracy", "semantic_similarity", "semantic_iou"])
            .expect("in-memory write");
        w.write_record([
            "overall".to_string(),
            String::new(),
            self.samples.to_string(),
            self.cluster_accuracy.to_string(),
            opt(self.semantic_similarity),
            self.semantic_iou.to_string(),
        ])
        .expect("in-memory write");
        for c in &self.per_class {
            w.write_record([
                "class".to_string(),
                c.label.clone(),
                c.count.to_string(),
                c.cluster_accuracy.to_string(),
                opt(c.semantic_similarity),
                c.semantic_iou.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetAverage {
    pub datasets: usize,
    pub cluster_accuracy: f64,
    /// Present only when every report carries Semantic Similarity.
    pub semantic_similarity: Option<f64>,
    pub semantic_iou: f64,
}

/// Mean of per-dataset means.
pub fn average_reports(reports: &[EvaluationReport]) -> Result<DatasetAverage> {
    if reports.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let sims: Option<Vec<f64>> = reports.iter().map(|r| r.semantic_similarity).collect();
    Ok(DatasetAverage {
        datasets: reports.len(),
        cluster_accuracy: mean(reports.iter().map(|r| r.cluster_accuracy)),
        semantic_similarity: sims.map(|s| mean(s.into_iter())),
        semantic_iou: mean(reports.iter().map(|r| r.semantic_iou)),
    })
}
