//! Parameter sweeps over a labeled benchmark.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::candidates::{PosTagger, Stages};
use crate::embedding::{EmbeddingProvider, TextEmbedder};
use crate::evaluation::{evaluate, ClusterMode, EvalError, EvaluationConfig, EvaluationReport};
use crate::index::CaptionIndex;
use crate::scoring::{classify_batch, ClassifierConfig, FusionMode, Prediction, Query, ScoringError};

#[derive(Debug, thiserror::Error)]
pub enum AblationError {
    #[error("sweep has no values")]
    NoValues,
    #[error("invalid value {value:?} for {variable}: {message}")]
    InvalidValue { variable: SweepVariable, value: String, message: String },
    #[error("query {id}: {source}")]
    Query { id: String, source: ScoringError },
    #[error(transparent)]
    Evaluation(#[from] EvalError),
}

pub type Result<T, E = AblationError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepVariable {
    Alpha,
    K,
    /// Values name caption indexes supplied with the benchmark.
    Database,
    /// `visual`, `textual`, `fused` or `pair`.
    ScoringMode,
    /// `none`, `remove`, `remove+standardize`, `all`.
    FilterStages,
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Alpha => "alpha",
            Self::K => "k",
            Self::Database => "database",
            Self::ScoringMode => "scoring-mode",
            Self::FilterStages => "filter-stages",
        })
    }
}

impl FromStr for SweepVariable {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "alpha" => Ok(Self::Alpha),
            "k" => Ok(Self::K),
            "database" | "db" => Ok(Self::Database),
            "scoring-mode" | "scoring" => Ok(Self::ScoringMode),
            "filter-stages" | "stages" => Ok(Self::FilterStages),
            other => Err(format!("unknown sweep variable {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub variable: SweepVariable,
    pub values: Vec<String>,
    /// Configuration shared by every point; the swept field is overridden.
    pub base: ClassifierConfig,
    pub cluster_mode: ClusterMode,
}

impl AblationSpec {
    pub fn new(variable: SweepVariable, values: impl IntoIterator<Item = impl ToString>) -> Self {
        Self {
            variable,
            values: values.into_iter().map(|v| v.to_string()).collect(),
            base: ClassifierConfig::default(),
            cluster_mode: ClusterMode::default(),
        }
    }
}

/// Everything a sweep point needs besides its configuration.
pub struct Benchmark<'a> {
    pub index: &'a CaptionIndex,
    pub provider: &'a dyn EmbeddingProvider,
    pub tagger: &'a dyn PosTagger,
    pub queries: &'a [(String, Query)],
    pub truths: &'a BTreeMap<String, String>,
    /// Sentence embedder for Semantic Similarity; omitted from rows when absent.
    pub similarity: Option<&'a dyn TextEmbedder>,
    /// Alternative corpora for the `database` sweep, by name.
    pub databases: BTreeMap<String, &'a CaptionIndex>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variable: SweepVariable,
    pub value: String,
    pub metric: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationResult {
    pub rows: Vec<AblationRow>,
    pub reports: Vec<(String, EvaluationReport)>,
}

impl AblationResult {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["variable", "value", "metric", "score"]).expect("in-memory write");
        for r in &self.rows {
            w.write_record([r.variable.to_string(), r.value.clone(), r.metric.clone(), r.score.to_string()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn score(&self, value: &str, metric: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.value == value && r.metric == metric).map(|r| r.score)
    }
}

/// Classifies every query under `config`, in query order.
pub fn predict_all(bench: &Benchmark<'_>, index: &CaptionIndex, config: &ClassifierConfig) -> Result<Vec<Prediction>> {
    let queries: Vec<Query> = bench.queries.iter().map(|(_, q)| q.clone()).collect();
    classify_batch(&queries, index, bench.provider, bench.tagger, config)
        .into_iter()
        .zip(bench.queries)
        .map(|(r, (id, _))| r.map_err(|source| AblationError::Query { id: id.clone(), source }))
        .collect()
}

/// One sweep point: classify, then evaluate against the truths.
pub fn run_point(
    bench: &Benchmark<'_>,
    index: &CaptionIndex,
    config: &ClassifierConfig,
    mode: ClusterMode,
) -> Result<EvaluationReport> {
    let preds = predict_all(bench, index, config)?;
    let pairs: Vec<(String, String)> = bench
        .queries
        .iter()
        .zip(preds)
        .map(|((id, _), p)| (id.clone(), p.label))
        .collect();
    Ok(evaluate(&pairs, bench.truths, bench.similarity, &EvaluationConfig { mode, embedder: None })?)
}

fn point<'a>(
    spec: &AblationSpec,
    value: &str,
    bench: &Benchmark<'a>,
) -> Result<(ClassifierConfig, &'a CaptionIndex)> {
    let invalid = |message: String| AblationError::InvalidValue {
        variable: spec.variable,
        value: value.to_string(),
        message,
    };
    let mut cfg = spec.base.clone();
    let mut index = bench.index;
    match spec.variable {
        SweepVariable::Alpha => cfg.alpha = value.parse().map_err(|e| invalid(format!("{e}")))?,
        SweepVariable::K => cfg.k = value.parse().map_err(|e| invalid(format!("{e}")))?,
        SweepVariable::Database => {
            index = bench
                .databases
                .get(value)
                .copied()
                .ok_or_else(|| invalid("no such database".into()))?
        }
        SweepVariable::ScoringMode => match value {
            "visual" => cfg.alpha = 1.0,
            "textual" => cfg.alpha = 0.0,
            "fused" => {}
            "pair" => cfg.fusion = FusionMode::PairSoftmax,
            _ => return Err(invalid("expected visual, textual, fused or pair".into())),
        },
        SweepVariable::FilterStages => cfg.filter.stages = value.parse::<Stages>().map_err(invalid)?,
    }
    cfg.validate().map_err(|e| invalid(e.to_string()))?;
    Ok((cfg, index))
}

/// Runs every point of the sweep. Rows come out per value, then per metric
/// (`cluster_accuracy`, `semantic_similarity` when available, `semantic_iou`).
pub fn ablate(spec: &AblationSpec, bench: &Benchmark<'_>) -> Result<AblationResult> {
    if spec.values.is_empty() {
        return Err(AblationError::NoValues);
    }
    let points = spec
        .values
        .iter()
        .map(|v| point(spec, v, bench))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (value, (cfg, index)) in spec.values.iter().zip(points) {
        log::info!("ablation {}={value}", spec.variable);
        let report = run_point(bench, index, &cfg, spec.cluster_mode)?;
        let mut metrics = vec![("cluster_accuracy", report.cluster_accuracy)];
        if let Some(s) = report.semantic_similarity {
            metrics.push(("semantic_similarity", s));
        }
        metrics.push(("semantic_iou", report.semantic_iou));
        for (metric, score) in metrics {
            rows.push(AblationRow { variable: spec.variable, value: value.clone(), metric: metric.into(), score });
        }
        reports.push((value.clone(), report));
    }
    Ok(AblationResult { rows, reports })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::LexiconTagger;
    use crate::index::BuildConfig;
    use crate::synthetic::{SyntheticBenchmark, SyntheticConfig};

    fn setup() -> (SyntheticBenchmark, CaptionIndex) {
        let b = SyntheticBenchmark::generate(&SyntheticConfig { captions: 600, queries: 40, ..Default::default() }).unwrap();
        let index = CaptionIndex::build(b.corpus.clone(), &b.model, &BuildConfig::default()).unwrap();
        (b, index)
    }

    #[test]
    fn alpha_one_equals_visual_mode() {
        let (b, index) = setup();
        let tagger = LexiconTagger::bundled();
        let queries = b.queries();
        let truths = b.truths();
        let bench = Benchmark {
            index: &index,
            provider: &b.model,
            tagger: &tagger,
            queries: &queries,
            truths: &truths,
            similarity: Some(&b.model),
            databases: BTreeMap::new(),
        };
        let alpha = ablate(&AblationSpec::new(SweepVariable::Alpha, ["0", "0.5", "1"]), &bench).unwrap();
        assert_eq!(alpha.reports.len(), 3);
        assert_eq!(alpha.rows.len(), 9);
        let visual = ablate(&AblationSpec::new(SweepVariable::ScoringMode, ["visual"]), &bench).unwrap();
        assert_eq!(alpha.reports[2].1, visual.reports[0].1);
        let csv = alpha.to_csv();
        assert!(csv.starts_with("variable,value,metric,score\nalpha,0,cluster_accuracy,"));
    }

    #[test]
    fn invalid_values_fail_before_running() {
        let (b, index) = setup();
        let tagger = LexiconTagger::bundled();
        let queries = b.queries();
        let truths = b.truths();
        let bench = Benchmark {
            index: &index,
            provider: &b.model,
            tagger: &tagger,
            queries: &queries,
            truths: &truths,
            similarity: None,
            databases: BTreeMap::new(),
        };
        for (var, value) in [
            (SweepVariable::Alpha, "1.5"),
            (SweepVariable::K, "0"),
            (SweepVariable::Database, "pmd"),
            (SweepVariable::ScoringMode, "both"),
            (SweepVariable::FilterStages, "everything"),
        ] {
            let r = ablate(&AblationSpec::new(var, [value]), &bench);
            assert!(matches!(r, Err(AblationError::InvalidValue { .. })), "{var} {value}");
        }
        assert!(matches!(ablate(&AblationSpec::new(SweepVariable::K, Vec::<String>::new()), &bench), Err(AblationError::NoValues)));
    }

    #[test]
    fn variable_names_round_trip() {
        for v in [
            SweepVariable::Alpha,
            SweepVariable::K,
            SweepVariable::Database,
            SweepVariable::ScoringMode,
            SweepVariable::FilterStages,
        ] {
            assert_eq!(v.to_string().parse::<SweepVariable>().unwrap(), v);
        }
    }
}
