//! Python bindings: embedding stores, caption indexes, the classifier and
//! the evaluation metrics.

use std::collections::BTreeMap;
use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use vfc_core::candidates::{self, CandidateError, FilterConfig, LexiconTagger, Stages};
use vfc_core::embedding::{self, EmbeddingError, EmbeddingStore, EmbeddingVector};
use vfc_core::evaluation::{self, ClusterMode, EvalError, EvaluationConfig, LabeledPrediction};
use vfc_core::index::{BuildConfig, CaptionIndex, CaptionRecord, IndexError, Probes, RetrievedCaption, StructureKind};
use vfc_core::scoring::{self, ClassifierConfig, FusionMode, Query, ScoringError};
use vfc_core::synthetic::{SyntheticBenchmark, SyntheticConfig};

create_exception!(vfc, VfcError, PyException);

trait IntoPyResult<T> {
    fn py(self) -> PyResult<T>;
}

macro_rules! map_errors {
    ($($err:ty),*) => {$(
        impl<T> IntoPyResult<T> for Result<T, $err> {
            fn py(self) -> PyResult<T> {
                self.map_err(|e| VfcError::new_err(e.to_string()))
            }
        }
    )*};
}

map_errors!(EmbeddingError, IndexError, CandidateError, ScoringError, EvalError);

fn parse<T: std::str::FromStr<Err = String>>(what: &str, s: &str) -> PyResult<T> {
    s.parse().map_err(|e| PyValueError::new_err(format!("{what}: {e}")))
}

fn vector(values: Vec<f64>) -> PyResult<EmbeddingVector> {
    EmbeddingVector::new(values).py()
}

/// Serializes through JSON so Python receives plain dicts and lists.
fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| VfcError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn hit(r: &RetrievedCaption) -> (String, String, f64) {
    (r.record.id.clone(), r.record.text.clone(), r.score)
}

#[pyclass(name = "EmbeddingStore", module = "vfc", skip_from_py_object)]
#[derive(Clone)]
pub struct PyEmbeddingStore {
    inner: Arc<EmbeddingStore>,
}

#[pymethods]
impl PyEmbeddingStore {
    #[new]
    #[pyo3(signature = (dim, identity=None))]
    fn new(dim: usize, identity: Option<String>) -> PyResult<Self> {
        let mut store = EmbeddingStore::new(dim).py()?;
        if let Some(id) = identity {
            store = store.with_identity(id);
        }
        Ok(Self { inner: Arc::new(store) })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: Arc::new(EmbeddingStore::load(path).py()?) })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).py()
    }

    /// Stores the vector at f32 precision.
    fn insert(&mut self, key: String, values: Vec<f64>) -> PyResult<()> {
        let v = vector(values)?;
        Arc::make_mut(&mut self.inner).insert_vector(key, &v).py()
    }

    fn get(&self, key: &str) -> Option<Vec<f64>> {
        self.inner.get(key).map(EmbeddingVector::into_values)
    }

    fn keys(&self) -> Vec<String> {
        self.inner.keys().to_vec()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __contains__(&self, key: &str) -> bool {
        self.inner.contains(key)
    }

    fn __repr__(&self) -> String {
        format!("EmbeddingStore(dim={}, len={})", self.inner.dim(), self.inner.len())
    }
}

fn records_from(rows: Vec<(String, String, Option<String>)>) -> Vec<CaptionRecord> {
    rows.into_iter()
        .map(|(id, text, source)| CaptionRecord::new(id, text, source.unwrap_or_default()))
        .collect()
}

#[pyclass(name = "CaptionIndex", module = "vfc", skip_from_py_object)]
#[derive(Clone)]
pub struct PyCaptionIndex {
    inner: Arc<CaptionIndex>,
}

#[pymethods]
impl PyCaptionIndex {
    /// Embeds `(id, text, source)` rows through the store, keyed by caption id.
    #[staticmethod]
    #[pyo3(signature = (records, store, structure="flat", partitions=16, seed=42, dedup=false))]
    fn build(
        py: Python<'_>,
        records: Vec<(String, String, Option<String>)>,
        store: &PyEmbeddingStore,
        structure: &str,
        partitions: usize,
        seed: u64,
        dedup: bool,
    ) -> PyResult<Self> {
        let config = BuildConfig {
            structure: parse::<StructureKind>("structure", structure)?,
            num_partitions: partitions,
            seed,
            dedup,
        };
        let records = records_from(records);
        let store = Arc::clone(&store.inner);
        let index = py.detach(move || CaptionIndex::build(records, store.as_ref(), &config)).py()?;
        Ok(Self { inner: Arc::new(index) })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: Arc::new(CaptionIndex::load(path).py()?) })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).py()
    }

    /// Top-k `(id, text, score)` triples. `probes` is a count or `"all"`.
    #[pyo3(signature = (query, k=10, probes="all"))]
    fn search(&self, py: Python<'_>, query: Vec<f64>, k: usize, probes: &str) -> PyResult<Vec<(String, String, f64)>> {
        let q = vector(query)?;
        let probes = parse::<Probes>("probes", probes)?;
        let hits = py.detach(|| self.inner.retrieve_topk(&q, k, probes)).py()?;
        Ok(hits.iter().map(hit).collect())
    }

    /// Linear scan; the exactness reference for `search`.
    #[pyo3(signature = (query, k=10))]
    fn exact(&self, query: Vec<f64>, k: usize) -> PyResult<Vec<(String, String, f64)>> {
        let hits = self.inner.exact_topk(&vector(query)?, k).py()?;
        Ok(hits.iter().map(hit).collect())
    }

    fn records(&self) -> Vec<(String, String, String)> {
        self.inner.records().iter().map(|r| (r.id.clone(), r.text.clone(), r.source.clone())).collect()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn num_partitions(&self) -> usize {
        self.inner.num_partitions()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "CaptionIndex(len={}, dim={}, partitions={})",
            self.inner.len(),
            self.inner.dim(),
            self.inner.num_partitions()
        )
    }
}

#[pyclass(name = "Classifier", module = "vfc")]
pub struct PyClassifier {
    index: Arc<CaptionIndex>,
    store: Arc<EmbeddingStore>,
    tagger: LexiconTagger,
    config: ClassifierConfig,
}

impl PyClassifier {
    fn query(image_ref: Option<String>, embedding: Option<Vec<f64>>) -> PyResult<Query> {
        match (image_ref, embedding) {
            (Some(r), None) => Ok(Query::ImageRef(r)),
            (None, Some(v)) => Ok(Query::Embedding(vector(v)?)),
            _ => Err(PyValueError::new_err("pass exactly one of image_ref or embedding")),
        }
    }
}

#[pymethods]
impl PyClassifier {
    #[new]
    #[pyo3(signature = (index, store, alpha=0.7, k=10, probes="8", prompt="", fusion="candidate", stages="all", min_count=2))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        index: &PyCaptionIndex,
        store: &PyEmbeddingStore,
        alpha: f64,
        k: usize,
        probes: &str,
        prompt: &str,
        fusion: &str,
        stages: &str,
        min_count: u32,
    ) -> PyResult<Self> {
        let config = ClassifierConfig {
            k,
            alpha,
            prompt_template: prompt.to_string(),
            probes: parse("probes", probes)?,
            fusion: parse::<FusionMode>("fusion", fusion)?,
            filter: FilterConfig { stages: parse::<Stages>("stages", stages)?, min_count, ..FilterConfig::default() },
        };
        config.validate().map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self {
            index: Arc::clone(&index.inner),
            store: Arc::clone(&store.inner),
            tagger: LexiconTagger::bundled(),
            config,
        })
    }

    /// Full prediction as a dict: label, ranked score breakdown, retrieved
    /// captions and the fallback flag.
    #[pyo3(signature = (image_ref=None, embedding=None))]
    fn classify<'py>(&self, py: Python<'py>, image_ref: Option<String>, embedding: Option<Vec<f64>>) -> PyResult<Bound<'py, PyAny>> {
        let q = Self::query(image_ref, embedding)?;
        let p = py
            .detach(|| scoring::classify(&q, &self.index, self.store.as_ref(), &self.tagger, &self.config))
            .py()?;
        to_py(py, &p)
    }

    /// Labels for a batch of image references, classified in parallel.
    fn labels(&self, py: Python<'_>, image_refs: Vec<String>) -> PyResult<Vec<String>> {
        let queries: Vec<Query> = image_refs.into_iter().map(Query::ImageRef).collect();
        let results = py.detach(|| {
            scoring::classify_batch(&queries, &self.index, self.store.as_ref(), &self.tagger, &self.config)
        });
        results.into_iter().map(|r| r.map(|p| p.label).py()).collect()
    }

    fn __repr__(&self) -> String {
        format!("Classifier(alpha={}, k={}, probes={})", self.config.alpha, self.config.k, self.config.probes)
    }
}

#[pyfunction]
fn cosine_similarity(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    embedding::cosine_similarity(&vector(a)?, &vector(b)?).py()
}

#[pyfunction]
fn normalize(v: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(embedding::normalize(&vector(v)?).py()?.into_values())
}

#[pyfunction]
#[pyo3(signature = (visual, textual, alpha=0.7, mode="candidate"))]
fn fuse(visual: Vec<f64>, textual: Vec<f64>, alpha: f64, mode: &str) -> PyResult<Vec<f64>> {
    scoring::fuse_with(&visual, &textual, alpha, parse("mode", mode)?).py()
}

#[pyfunction]
fn remove_noise(text: &str) -> Vec<String> {
    candidates::remove_noise(text, &FilterConfig::default())
}

#[pyfunction]
fn standardize(tokens: Vec<String>) -> Vec<String> {
    candidates::standardize(&tokens)
}

/// Candidate names with counts from a list of caption texts.
#[pyfunction]
#[pyo3(signature = (captions, stages="all", min_count=2))]
fn extract_candidates(captions: Vec<String>, stages: &str, min_count: u32) -> PyResult<BTreeMap<String, u32>> {
    let records: Vec<CaptionRecord> = captions
        .into_iter()
        .enumerate()
        .map(|(i, t)| CaptionRecord::new(format!("c{i}"), t, ""))
        .collect();
    let config = FilterConfig { stages: parse("stages", stages)?, min_count, ..FilterConfig::default() };
    Ok(candidates::extract_candidates(&records, &LexiconTagger::bundled(), &config).py()?.entries)
}

#[pyfunction]
fn semantic_iou(predicted: &str, truth: &str) -> f64 {
    evaluation::semantic_iou(predicted, truth)
}

/// Minimum-cost assignment as `(row, col)` pairs.
#[pyfunction]
fn hungarian(cost: Vec<Vec<f64>>) -> PyResult<Vec<(usize, usize)>> {
    evaluation::hungarian(&cost).py()
}

#[pyfunction]
#[pyo3(signature = (predicted, truth, mode="auto"))]
fn cluster_accuracy(predicted: Vec<String>, truth: Vec<String>, mode: &str) -> PyResult<f64> {
    if predicted.len() != truth.len() {
        return Err(PyValueError::new_err("predicted and truth differ in length"));
    }
    let preds: Vec<LabeledPrediction> = predicted
        .into_iter()
        .zip(truth)
        .enumerate()
        .map(|(i, (p, t))| LabeledPrediction::new(i.to_string(), p, t))
        .collect();
    evaluation::cluster_accuracy(&preds, parse::<ClusterMode>("mode", mode)?).py()
}

/// Full evaluation report as a dict. `predictions` maps id to predicted
/// label; Semantic Similarity is included when `store` is given.
#[pyfunction]
#[pyo3(signature = (predictions, truths, mode="auto", store=None))]
fn evaluate<'py>(
    py: Python<'py>,
    predictions: BTreeMap<String, String>,
    truths: BTreeMap<String, String>,
    mode: &str,
    store: Option<&PyEmbeddingStore>,
) -> PyResult<Bound<'py, PyAny>> {
    let pairs: Vec<(String, String)> = predictions.into_iter().collect();
    let config = EvaluationConfig { mode: parse("mode", mode)?, embedder: None };
    let embedder = store.map(|s| s.inner.as_ref() as &dyn embedding::TextEmbedder);
    let report = evaluation::evaluate(&pairs, &truths, embedder, &config).py()?;
    to_py(py, &report)
}

/// Synthetic labeled world: `(records, store, queries, truths)` where
/// queries are `(id, image_ref)` pairs resolvable in the store.
#[pyfunction]
#[pyo3(signature = (seed=42, classes=10, captions=5000, queries=500, dim=128, noise=0.1, distractors=0.15))]
#[allow(clippy::type_complexity)]
fn synthetic_benchmark(
    seed: u64,
    classes: usize,
    captions: usize,
    queries: usize,
    dim: usize,
    noise: f64,
    distractors: f64,
) -> PyResult<(Vec<(String, String, String)>, PyEmbeddingStore, Vec<(String, String)>, BTreeMap<String, String>)> {
    let config = SyntheticConfig {
        classes,
        dim,
        captions,
        queries,
        noise_sigma: noise,
        distractor_rate: distractors,
        seed,
    };
    let bench = SyntheticBenchmark::generate(&config).py()?;
    let store = bench.to_store().py()?;
    let records = bench.corpus.iter().map(|r| (r.id.clone(), r.text.clone(), r.source.clone())).collect();
    let queries = bench.manifest.entries.iter().map(|e| (e.id.clone(), e.reference().to_string())).collect();
    Ok((records, PyEmbeddingStore { inner: Arc::new(store) }, queries, bench.truths()))
}

#[pymodule]
fn vfc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("VfcError", m.py().get_type::<VfcError>())?;
    m.add_class::<PyEmbeddingStore>()?;
    m.add_class::<PyCaptionIndex>()?;
    m.add_class::<PyClassifier>()?;
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(remove_noise, m)?)?;
    m.add_function(wrap_pyfunction!(standardize, m)?)?;
    m.add_function(wrap_pyfunction!(extract_candidates, m)?)?;
    m.add_function(wrap_pyfunction!(semantic_iou, m)?)?;
    m.add_function(wrap_pyfunction!(hungarian, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_benchmark, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
