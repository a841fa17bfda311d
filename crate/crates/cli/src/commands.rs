use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use vfc_core::ablation::{ablate, AblationSpec, Benchmark, SweepVariable};
use vfc_core::candidates::{load_word_list, FilterConfig, LexiconTagger};
use vfc_core::embedding::{
    EmbeddingProvider, EmbeddingStore, EmbeddingVector, HashEmbedder, RemoteProvider, StubServer,
};
use vfc_core::evaluation::{evaluate, read_predictions, read_truths, ClusterMode, EvaluationConfig};
use vfc_core::index::{BuildConfig, CaptionIndex, CaptionRecord, Probes, StructureKind};
use vfc_core::ingestion::{
    corpus_stats, import_embeddings, ingest_corpus, load_manifest, validate_manifest, write_corpus,
    CorpusFormat, DatasetManifest,
};
use vfc_core::scoring::{classify_batch, ClassifierConfig, FusionMode, Prediction, Query};
use vfc_core::synthetic::{SyntheticBenchmark, SyntheticConfig};

use crate::args::*;
use crate::config::ConfigFile;
use crate::error::CliError;

type Result<T, E = CliError> = std::result::Result<T, E>;

pub struct Context {
    pub config: ConfigFile,
    pub seed: u64,
    pub threads: Option<usize>,
}

fn is_stdout(path: &Path) -> bool {
    path.as_os_str() == "-"
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    if is_stdout(path) {
        let mut out = io::stdout().lock();
        out.write_all(bytes)?;
        out.flush()?;
    } else {
        fs::write(path, bytes).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

fn json_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("serializable");
    s.push('\n');
    s
}

fn load_records(ctx: &Context, args: &CorpusArgs) -> Result<Vec<CaptionRecord>> {
    let format = ctx.config.pick_opt(args.format, "format")?.unwrap_or_else(|| CorpusFormat::from_path(&args.corpus));
    let report = ingest_corpus(&args.corpus, format, args.strict)?;
    for bad in &report.skipped {
        log::warn!("{}:{}: skipped: {}", args.corpus.display(), bad.line, bad.message);
    }
    log::info!("{} captions from {}", report.records.len(), args.corpus.display());
    Ok(report.records)
}

fn provider(ctx: &Context, args: &ProviderArgs) -> Result<Option<Box<dyn EmbeddingProvider>>> {
    let cfg = &ctx.config;
    let remote = match (&args.embeddings, &args.remote) {
        (Some(_), _) => None,
        (None, Some(url)) => Some(url.clone()),
        (None, None) => cfg.raw("remote").map(str::to_string),
    };
    let embeddings = match (&args.embeddings, &args.remote) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(_)) => None,
        (None, None) => cfg.get::<PathBuf>("embeddings")?,
    };
    if let Some(path) = embeddings {
        if remote.is_some() {
            return Err(CliError::Config("both `embeddings` and `remote` are configured".into()));
        }
        let store = EmbeddingStore::load(&path)?;
        log::info!("{} vectors of dim {} from {}", store.len(), store.dim(), path.display());
        return Ok(Some(Box::new(store)));
    }
    let Some(url) = remote else { return Ok(None) };
    let dim = cfg
        .pick_opt(args.dim, "dim")?
        .ok_or_else(|| CliError::Usage("--remote needs --dim".into()))?;
    let secs = cfg.pick(args.timeout, "timeout", 30.0)?;
    if !(secs.is_finite() && secs > 0.0) {
        return Err(CliError::Usage(format!("timeout must be positive, got {secs}")));
    }
    Ok(Some(Box::new(RemoteProvider::new(&url, dim, Duration::from_secs_f64(secs))?)))
}

fn require_provider(ctx: &Context, args: &ProviderArgs) -> Result<Box<dyn EmbeddingProvider>> {
    provider(ctx, args)?.ok_or_else(|| CliError::Usage("an embedding provider is required: pass --embeddings or --remote".into()))
}

fn tagger(ctx: &Context, lexicon: &Option<PathBuf>) -> Result<LexiconTagger> {
    match ctx.config.pick_opt(lexicon.clone(), "lexicon")? {
        Some(path) => Ok(LexiconTagger::load(path)?),
        None => Ok(LexiconTagger::bundled()),
    }
}

fn classifier_config(ctx: &Context, s: &ScoringArgs) -> Result<ClassifierConfig> {
    let cfg = &ctx.config;
    let d = ClassifierConfig::default();
    let mut filter = FilterConfig {
        stages: cfg.pick(s.stages, "stages", d.filter.stages)?,
        min_count: cfg.pick(s.min_count, "min-count", d.filter.min_count)?,
        min_word_length: cfg.pick(s.min_word_length, "min-word-length", d.filter.min_word_length)?,
        ..d.filter.clone()
    };
    if let Some(p) = cfg.pick_opt(s.stop_words.clone(), "stop-words")? {
        filter.stop_words = load_word_list(p)?;
    }
    if let Some(p) = cfg.pick_opt(s.meta_words.clone(), "meta-words")? {
        filter.meta_words = load_word_list(p)?;
    }
    let config = ClassifierConfig {
        k: cfg.pick(s.k, "k", d.k)?,
        alpha: cfg.pick(s.alpha, "alpha", d.alpha)?,
        prompt_template: cfg.pick(s.prompt.clone(), "prompt", d.prompt_template)?,
        probes: cfg.pick::<Probes>(s.probes, "probes", d.probes)?,
        fusion: cfg.pick::<FusionMode>(s.fusion, "fusion", d.fusion)?,
        filter,
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

pub fn ingest(ctx: &Context, args: IngestArgs) -> Result<()> {
    if let Some(corpus) = &args.corpus {
        let records = load_records(ctx, &CorpusArgs { corpus: corpus.clone(), format: args.format, strict: args.strict })?;
        let mut out = Vec::new();
        write_corpus(&records, &mut out)?;
        return write_output(&args.out, &out);
    }
    if let Some(vectors) = &args.vectors {
        let file = fs::File::open(vectors)?;
        let store = import_embeddings(io::BufReader::new(file), args.normalize)?;
        log::info!("imported {} vectors of dim {}", store.len(), store.dim());
        let mut out = Vec::new();
        store.write_to(&mut out)?;
        return write_output(&args.out, &out);
    }
    let manifest = load_manifest(args.manifest.as_ref().expect("clap enforces one source"))?;
    let store = EmbeddingStore::load(args.embeddings.as_ref().expect("clap enforces --embeddings"))?;
    let dangling = validate_manifest(&manifest, &store);
    let report = serde_json::json!({
        "name": manifest.name,
        "entries": manifest.entries.len(),
        "dangling": dangling,
    });
    write_output(&args.out, json_line(&report).as_bytes())?;
    if dangling.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invalid(format!("{} manifest entries do not resolve", dangling.len())))
    }
}

pub fn build_index(ctx: &Context, args: BuildIndexArgs) -> Result<()> {
    let records = load_records(ctx, &args.corpus)?;
    let provider = require_provider(ctx, &args.provider)?;
    let d = BuildConfig::default();
    let config = BuildConfig {
        structure: ctx.config.pick::<StructureKind>(args.structure, "structure", d.structure)?,
        num_partitions: ctx.config.pick(args.partitions, "partitions", d.num_partitions)?,
        seed: ctx.seed,
        dedup: args.dedup || ctx.config.get::<bool>("dedup")?.unwrap_or(false),
    };
    let index = CaptionIndex::build(records, provider.as_ref(), &config)?;
    log::info!("index: {} records, {:?}, {} partitions", index.len(), index.structure(), index.num_partitions());
    let bytes = index.to_bytes()?;
    write_output(&args.out, &bytes)
}

#[derive(Deserialize)]
struct QueryRow {
    id: String,
    #[serde(default)]
    embedding: Option<Vec<f64>>,
    #[serde(default)]
    image_ref: Option<String>,
}

fn parse_queries(text: &str) -> Result<Vec<(String, Query)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: String| CliError::Invalid(format!("queries line {}: {m}", n + 1));
        let row: QueryRow = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let query = match (row.embedding, row.image_ref) {
            (Some(v), None) => Query::Embedding(EmbeddingVector::new(v).map_err(|e| bad(e.to_string()))?),
            (None, Some(r)) => Query::ImageRef(r),
            _ => return Err(bad("expected exactly one of `embedding` or `image_ref`".into())),
        };
        out.push((row.id, query));
    }
    if out.is_empty() {
        return Err(CliError::Invalid("no queries".into()));
    }
    Ok(out)
}

fn manifest_queries(manifest: &DatasetManifest) -> Vec<(String, Query)> {
    manifest.entries.iter().map(|e| (e.id.clone(), e.query())).collect()
}

#[derive(Serialize)]
struct PredictionRow<'a> {
    id: &'a str,
    #[serde(flatten)]
    prediction: &'a Prediction,
}

pub fn classify(ctx: &Context, args: ClassifyArgs) -> Result<()> {
    let config = classifier_config(ctx, &args.scoring)?;
    let index = CaptionIndex::load(&args.index)?;
    let provider = require_provider(ctx, &args.provider)?;
    let tagger = tagger(ctx, &args.scoring.lexicon)?;
    let queries = match (&args.queries, &args.manifest) {
        (Some(q), _) => parse_queries(&read_text(q)?)?,
        (None, Some(m)) => manifest_queries(&load_manifest(m)?),
        (None, None) => unreachable!("clap enforces a query source"),
    };
    let batch: Vec<Query> = queries.iter().map(|(_, q)| q.clone()).collect();
    let results = classify_batch(&batch, &index, provider.as_ref(), &tagger, &config);
    let mut out = String::new();
    for ((id, _), result) in queries.iter().zip(results) {
        let prediction = result.map_err(|source| CliError::Query { what: "query", id: id.clone(), source })?;
        out.push_str(&json_line(&PredictionRow { id, prediction: &prediction }));
    }
    write_output(&args.out, out.as_bytes())
}

pub fn evaluate_cmd(ctx: &Context, args: EvaluateArgs) -> Result<()> {
    let predictions = read_predictions(&args.predictions)?;
    let truths = read_truths(&args.truths)?;
    let mode = ctx.config.pick::<ClusterMode>(args.mode, "mode", ClusterMode::Auto)?;
    let embedder = provider(ctx, &args.provider)?;
    let report = evaluate(
        &predictions,
        &truths,
        embedder.as_deref().map(|p| p as _),
        &EvaluationConfig { mode, embedder: None },
    )?;
    let body = match args.format {
        ReportFormat::Json => report.to_json() + "\n",
        ReportFormat::Csv => report.to_csv(),
    };
    write_output(&args.out, body.as_bytes())
}

pub fn stats(ctx: &Context, args: StatsArgs) -> Result<()> {
    let records = load_records(ctx, &args.corpus)?;
    let tagger = tagger(ctx, &args.lexicon)?;
    let d = FilterConfig::default();
    let filter = FilterConfig {
        min_word_length: ctx.config.pick(args.min_word_length, "min-word-length", d.min_word_length)?,
        ..d
    };
    let stats = corpus_stats(&records, &tagger, &filter)?;
    write_output(&args.out, (serde_json::to_string_pretty(&stats).expect("serializable") + "\n").as_bytes())
}

pub fn ablate_cmd(ctx: &Context, args: AblateArgs) -> Result<()> {
    let base = classifier_config(ctx, &args.scoring)?;
    let index = CaptionIndex::load(&args.index)?;
    let provider = require_provider(ctx, &args.provider)?;
    let tagger = tagger(ctx, &args.scoring.lexicon)?;
    let manifest = load_manifest(&args.manifest)?;
    let queries = manifest_queries(&manifest);
    let truths = manifest.truths();

    let mut databases = BTreeMap::new();
    for spec in &args.databases {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--database expects NAME=PATH, got {spec:?}")))?;
        databases.insert(name.to_string(), CaptionIndex::load(path)?);
    }
    let mut values = args.values.clone();
    if values.is_empty() && args.variable == SweepVariable::Database {
        values = databases.keys().cloned().collect();
    }
    if values.is_empty() {
        return Err(CliError::Usage("--values is required".into()));
    }

    let bench = Benchmark {
        index: &index,
        provider: provider.as_ref(),
        tagger: &tagger,
        queries: &queries,
        truths: &truths,
        similarity: (!args.no_similarity).then_some(provider.as_ref() as _),
        databases: databases.iter().map(|(k, v)| (k.clone(), v)).collect(),
    };
    let spec = AblationSpec {
        variable: args.variable,
        values,
        base,
        cluster_mode: ctx.config.pick::<ClusterMode>(args.mode, "mode", ClusterMode::Auto)?,
    };
    let result = ablate(&spec, &bench)?;
    if let Some(path) = &args.reports {
        let reports: BTreeMap<&str, _> = result.reports.iter().map(|(v, r)| (v.as_str(), r)).collect();
        let ordered: Vec<_> = spec.values.iter().map(|v| serde_json::json!({ "value": v, "report": reports[v.as_str()] })).collect();
        write_output(path, (serde_json::to_string_pretty(&ordered).expect("serializable") + "\n").as_bytes())?;
    }
    write_output(&args.out, result.to_csv().as_bytes())
}

fn synthetic_config(ctx: &Context, w: &SynthArgs) -> Result<SyntheticConfig> {
    let cfg = &ctx.config;
    let d = SyntheticConfig::default();
    Ok(SyntheticConfig {
        classes: cfg.pick(w.classes, "classes", d.classes)?,
        dim: cfg.pick(w.world_dim, "world-dim", d.dim)?,
        captions: cfg.pick(w.captions, "captions", d.captions)?,
        queries: cfg.pick(w.num_queries, "num-queries", d.queries)?,
        noise_sigma: cfg.pick(w.noise, "noise", d.noise_sigma)?,
        distractor_rate: cfg.pick(w.distractors, "distractors", d.distractor_rate)?,
        seed: ctx.seed,
    })
}

pub fn serve_stub(ctx: &Context, args: ServeStubArgs) -> Result<()> {
    let provider: Arc<dyn EmbeddingProvider> = if let Some(path) = &args.embeddings {
        Arc::new(EmbeddingStore::load(path)?)
    } else if args.synthetic {
        Arc::new(SyntheticBenchmark::generate(&synthetic_config(ctx, &args.world)?)?.model)
    } else {
        let dim = ctx.config.pick(args.dim, "dim", 64)?;
        if dim == 0 {
            return Err(CliError::Usage("dim must be positive".into()));
        }
        Arc::new(HashEmbedder::new(dim, ctx.seed))
    };
    let workers = args
        .workers
        .or(ctx.threads)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(4, |n| n.get()));
    let server = StubServer::start_shared(&args.bind, Arc::clone(&provider), workers)?;
    let mut out = io::stdout().lock();
    writeln!(out, "listening on {} dim={} identity={}", server.url(), provider.dim(), provider.descriptor().identity)?;
    out.flush()?;
    drop(out);
    server.join();
    Ok(())
}

pub fn synth(ctx: &Context, args: SynthCommand) -> Result<()> {
    let config = synthetic_config(ctx, &args.world)?;
    let bench = SyntheticBenchmark::generate(&config)?;
    let dir = &args.out_dir;
    fs::create_dir_all(dir)?;

    let mut corpus = Vec::new();
    write_corpus(&bench.corpus, &mut corpus)?;
    fs::write(dir.join("corpus.jsonl"), corpus)?;
    bench.to_store()?.save(dir.join("embeddings.vfce"))?;
    fs::write(dir.join("manifest.json"), bench.manifest.to_json() + "\n")?;

    let (mut queries, mut truths) = (String::new(), String::new());
    for e in &bench.manifest.entries {
        queries.push_str(&json_line(&serde_json::json!({ "id": e.id, "image_ref": e.reference() })));
        truths.push_str(&json_line(&serde_json::json!({ "id": e.id, "label": e.label })));
    }
    fs::write(dir.join("queries.jsonl"), queries)?;
    fs::write(dir.join("truths.jsonl"), truths)?;
    log::info!("wrote synthetic benchmark {} to {}", bench.manifest.name, dir.display());
    Ok(())
}
