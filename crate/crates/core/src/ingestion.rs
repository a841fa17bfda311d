//! Corpus files, embedding dumps, and dataset manifests.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::candidates::{remove_noise, standardize, CandidateError, FilterConfig, Pos, PosTagger};
use crate::embedding::{EmbeddingError, EmbeddingStore, EmbeddingVector};
use crate::index::CaptionRecord;
use crate::scoring::Query;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("manifest: {0}")]
    Schema(String),
    #[error("embedding: {0}")]
    Embedding(#[from] EmbeddingError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T, E = IngestError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    #[default]
    Jsonl,
    Plain,
}

impl CorpusFormat {
    /// `.jsonl`/`.json`/`.ndjson` are JSON lines; anything else is plain text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("jsonl" | "json" | "ndjson") => Self::Jsonl,
            _ => Self::Plain,
        }
    }
}

impl fmt::Display for CorpusFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Jsonl => "jsonl",
            Self::Plain => "plain",
        })
    }
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" | "ndjson" => Ok(Self::Jsonl),
            "plain" | "text" | "txt" => Ok(Self::Plain),
            other => Err(format!("unknown corpus format {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MalformedLine {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub records: Vec<CaptionRecord>,
    /// Lines skipped in lenient mode, in file order.
    pub skipped: Vec<MalformedLine>,
}

fn parse_line(line: &str, n: usize, format: CorpusFormat) -> std::result::Result<CaptionRecord, String> {
    let record = match format {
        CorpusFormat::Jsonl => serde_json::from_str::<CaptionRecord>(line).map_err(|e| e.to_string())?,
        CorpusFormat::Plain => CaptionRecord::new(format!("line-{n}"), line.trim_end_matches('\r'), ""),
    };
    if record.id.is_empty() {
        return Err("empty id".into());
    }
    if record.text.trim().is_empty() {
        return Err("empty text".into());
    }
    Ok(record)
}

/// Reads a corpus. Malformed lines (bad JSON, empty text or id, duplicate id)
/// are skipped and reported, or abort the read when `strict` is set.
pub fn parse_corpus(reader: impl BufRead, format: CorpusFormat, strict: bool) -> Result<IngestReport> {
    let mut report = IngestReport::default();
    let mut ids = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if format == CorpusFormat::Jsonl && line.trim().is_empty() {
            continue;
        }
        let parsed = parse_line(&line, n, format).and_then(|r| {
            if ids.insert(r.id.clone()) {
                Ok(r)
            } else {
                Err(format!("duplicate id {:?}", r.id))
            }
        });
        match parsed {
            Ok(r) => report.records.push(r),
            Err(message) if strict => return Err(IngestError::Parse { line: n, message }),
            Err(message) => {
                log::warn!("corpus line {n} skipped: {message}");
                report.skipped.push(MalformedLine { line: n, message });
            }
        }
    }
    Ok(report)
}

pub fn ingest_corpus(path: impl AsRef<Path>, format: CorpusFormat, strict: bool) -> Result<IngestReport> {
    parse_corpus(BufReader::new(File::open(path)?), format, strict)
}

/// Canonical JSON lines: one record per line, fields `id`, `text`, `source`.
pub fn write_corpus(records: &[CaptionRecord], w: &mut impl Write) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_corpus(records: &[CaptionRecord], path: impl AsRef<Path>) -> io::Result<()> {
    let mut w = io::BufWriter::new(File::create(path)?);
    write_corpus(records, &mut w)?;
    w.flush()
}

#[derive(Deserialize)]
struct DumpRow {
    key: String,
    vector: Vec<f64>,
}

/// Converts a JSON-lines dump of `{"key", "vector"}` rows into a store.
/// Every row must share the first row's dimension; rows are L2-normalized
/// when `normalize` is set.
pub fn import_embeddings(reader: impl BufRead, normalize: bool) -> Result<EmbeddingStore> {
    let mut store: Option<EmbeddingStore> = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |message: String| IngestError::Parse { line: i + 1, message };
        let row: DumpRow = serde_json::from_str(&line).map_err(|e| at(e.to_string()))?;
        let mut v = EmbeddingVector::new(row.vector).map_err(|e| at(e.to_string()))?;
        if normalize {
            v = crate::embedding::normalize(&v).map_err(|e| at(e.to_string()))?;
        }
        let s = match &mut store {
            Some(s) => s,
            None => store.insert(EmbeddingStore::new(v.dim())?),
        };
        s.insert_vector(row.key, &v).map_err(|e| at(e.to_string()))?;
    }
    store.ok_or_else(|| IngestError::Parse { line: 0, message: "no embeddings".into() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub captions: usize,
    pub tokens: usize,
    pub unique_words: usize,
    pub pos_counts: BTreeMap<Pos, usize>,
    /// Share of tokens per POS category, in percent; all zero for an empty
    /// token stream.
    pub pos_percent: BTreeMap<Pos, f64>,
}

/// POS distribution over the tokens surviving noise removal and
/// standardization.
pub fn corpus_stats(
    records: &[CaptionRecord],
    tagger: &dyn PosTagger,
    config: &FilterConfig,
) -> std::result::Result<CorpusStats, CandidateError> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in records {
        for t in standardize(&remove_noise(&r.text, config)) {
            *counts.entry(t).or_insert(0) += 1;
        }
    }
    let mut pos_counts: BTreeMap<Pos, usize> = Pos::ALL.iter().map(|&p| (p, 0)).collect();
    for (word, n) in &counts {
        *pos_counts.entry(tagger.tag(word)?).or_insert(0) += n;
    }
    let tokens: usize = counts.values().sum();
    let pos_percent = pos_counts
        .iter()
        .map(|(&p, &n)| (p, if tokens == 0 { 0.0 } else { 100.0 * n as f64 / tokens as f64 }))
        .collect();
    Ok(CorpusStats { captions: records.len(), tokens, unique_words: counts.len(), pos_counts, pos_percent })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_ref: Option<String>,
    pub label: String,
}

impl ManifestEntry {
    /// Store key the entry resolves through; `embedding_ref` wins.
    pub fn reference(&self) -> &str {
        self.embedding_ref.as_deref().or(self.image_ref.as_deref()).unwrap_or_default()
    }

    pub fn query(&self) -> Query {
        Query::ImageRef(self.reference().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    /// Identity of the embedding provider the references resolve against.
    #[serde(default)]
    pub embedder: String,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn check_schema(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            if e.id.is_empty() {
                return Err(IngestError::Schema(format!("entry {i} has an empty id")));
            }
            if !ids.insert(e.id.as_str()) {
                return Err(IngestError::Schema(format!("duplicate id {:?}", e.id)));
            }
            if e.reference().is_empty() {
                return Err(IngestError::Schema(format!("entry {:?} has no image_ref or embedding_ref", e.id)));
            }
            if e.label.trim().is_empty() {
                return Err(IngestError::Schema(format!("entry {:?} has an empty label", e.id)));
            }
        }
        Ok(())
    }

    pub fn truths(&self) -> BTreeMap<String, String> {
        self.entries.iter().map(|e| (e.id.clone(), e.label.clone())).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

pub fn parse_manifest(text: &str) -> Result<DatasetManifest> {
    let m: DatasetManifest = serde_json::from_str(text).map_err(|e| IngestError::Schema(e.to_string()))?;
    m.check_schema()?;
    Ok(m)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    parse_manifest(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DanglingRef {
    pub id: String,
    pub reference: String,
}

/// Entries whose reference is absent from the store; empty when valid.
pub fn validate_manifest(manifest: &DatasetManifest, store: &EmbeddingStore) -> Vec<DanglingRef> {
    manifest
        .entries
        .iter()
        .filter(|e| !store.contains(e.reference()))
        .map(|e| DanglingRef { id: e.id.clone(), reference: e.reference().to_string() })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::LexiconTagger;

    const THREE: &str = concat!(
        "{\"id\":\"a\",\"text\":\"a dog in a park\",\"source\":\"web\"}\n",
        "{\"id\":\"b\",\"text\":\"the dog runs\",\"source\":\"web\"}\n",
        "{\"id\":\"c\",\"text\":\"a red car\",\"source\":\"\"}\n",
    );

    #[test]
    fn three_line_jsonl() {
        let r = parse_corpus(THREE.as_bytes(), CorpusFormat::Jsonl, true).unwrap();
        assert_eq!(r.records.len(), 3);
        assert!(r.skipped.is_empty());
        let mut out = Vec::new();
        write_corpus(&r.records, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), THREE);
    }

    #[test]
    fn missing_source_defaults_to_empty() {
        let r = parse_corpus(&b"{\"text\":\"x y\",\"id\":\"q\"}\n"[..], CorpusFormat::Jsonl, true).unwrap();
        assert_eq!(r.records[0], CaptionRecord::new("q", "x y", ""));
    }

    #[test]
    fn plain_text_ids() {
        let r = parse_corpus(&b"first caption\nsecond caption\n"[..], CorpusFormat::Plain, true).unwrap();
        assert_eq!(r.records[0].id, "line-1");
        assert_eq!(r.records[1].id, "line-2");
        assert_eq!(r.records[1].text, "second caption");
    }

    #[test]
    fn malformed_lines() {
        let text = "{\"id\":\"a\",\"text\":\"ok\"}\n{\"id\":\"b\",\"text\":\"  \"}\nnot json\n{\"id\":\"a\",\"text\":\"again\"}\n";
        let strict = parse_corpus(text.as_bytes(), CorpusFormat::Jsonl, true);
        assert!(matches!(strict, Err(IngestError::Parse { line: 2, .. })));
        let lenient = parse_corpus(text.as_bytes(), CorpusFormat::Jsonl, false).unwrap();
        assert_eq!(lenient.records.len(), 1);
        let lines: Vec<usize> = lenient.skipped.iter().map(|m| m.line).collect();
        assert_eq!(lines, vec![2, 3, 4]);
        let plain = parse_corpus(&b"one\n\nthree\n"[..], CorpusFormat::Plain, true);
        assert!(matches!(plain, Err(IngestError::Parse { line: 2, .. })));
    }

    #[test]
    fn format_detection() {
        assert_eq!(CorpusFormat::from_path(Path::new("c.jsonl")), CorpusFormat::Jsonl);
        assert_eq!(CorpusFormat::from_path(Path::new("c.txt")), CorpusFormat::Plain);
        assert_eq!("plain".parse::<CorpusFormat>().unwrap(), CorpusFormat::Plain);
    }

    #[test]
    fn stats_examples() {
        let tagger = LexiconTagger::bundled();
        let cfg = FilterConfig::default();
        let s = corpus_stats(&[CaptionRecord::new("1", "dog dog cat", "")], &tagger, &cfg).unwrap();
        assert_eq!(s.tokens, 3);
        assert_eq!(s.unique_words, 2);
        assert_eq!(s.pos_percent[&Pos::Noun], 100.0);
        let empty = corpus_stats(&[CaptionRecord::new("1", "a of 42", "")], &tagger, &cfg).unwrap();
        assert_eq!(empty.tokens, 0);
        assert!(empty.pos_percent.values().all(|&p| p == 0.0));
    }

    #[test]
    fn embedding_import() {
        let dump = "{\"key\":\"a\",\"vector\":[3,4]}\n{\"key\":\"b\",\"vector\":[0,2]}\n";
        let s = import_embeddings(dump.as_bytes(), true).unwrap();
        assert_eq!(s.row("a").unwrap(), &[0.6f32, 0.8]);
        assert_eq!(s.row("b").unwrap(), &[0.0f32, 1.0]);
        let mixed = "{\"key\":\"a\",\"vector\":[3,4]}\n{\"key\":\"b\",\"vector\":[0,2,1]}\n";
        assert!(matches!(import_embeddings(mixed.as_bytes(), true), Err(IngestError::Parse { line: 2, .. })));
    }

    fn manifest_json(entries: &str) -> String {
        format!("{{\"name\":\"toy\",\"embedder\":\"stub\",\"entries\":[{entries}]}}")
    }

    #[test]
    fn manifests() {
        let five: Vec<String> = (0..5)
            .map(|i| format!("{{\"id\":\"q{i}\",\"embedding_ref\":\"img{i}\",\"label\":\"dog\"}}"))
            .collect();
        let m = parse_manifest(&manifest_json(&five.join(","))).unwrap();
        let mut store = EmbeddingStore::new(2).unwrap();
        for i in 0..5 {
            store.insert(format!("img{i}"), &[1.0, 0.0]).unwrap();
        }
        assert!(validate_manifest(&m, &store).is_empty());
        let dangling = parse_manifest(&manifest_json("{\"id\":\"x\",\"image_ref\":\"nope\",\"label\":\"cat\"}")).unwrap();
        assert_eq!(
            validate_manifest(&dangling, &store),
            vec![DanglingRef { id: "x".into(), reference: "nope".into() }]
        );
        let dup = manifest_json(
            "{\"id\":\"x\",\"image_ref\":\"a\",\"label\":\"cat\"},{\"id\":\"x\",\"image_ref\":\"b\",\"label\":\"cat\"}",
        );
        assert!(matches!(parse_manifest(&dup), Err(IngestError::Schema(_))));
        assert_eq!(parse_manifest(&m.to_json()).unwrap(), m);
    }
}
