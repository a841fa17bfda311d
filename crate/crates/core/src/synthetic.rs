//! Seeded synthetic benchmark with planted classes.
//!
//! Each class owns a unit text vector. A word embeds to its class vector when
//! its lowercase singular form names a class, otherwise to a hash-derived
//! unit vector; surface forms that differ from that canonical form (plurals,
//! capitals) get a fixed perturbation. A text embeds to the normalized sum of
//! its word vectors. Query images are class vectors plus isotropic Gaussian
//! noise, renormalized. Captions mention their class word among scene words,
//! adjectives, verbs, markup, file names and URLs.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::candidates::{caption_tokens, singularize, FilterConfig, Stages};
use crate::embedding::{
    check_text_batch, EmbeddingError, EmbeddingProvider, EmbeddingStore, EmbeddingVector,
    ProviderDescriptor, ProviderKind, Result, TextEmbedder,
};
use crate::index::CaptionRecord;
use crate::ingestion::{DatasetManifest, ManifestEntry};
use crate::scoring::Query;

pub const CLASS_NAMES: [&str; 20] = [
    "dog", "cat", "horse", "bird", "car", "boat", "tree", "flower", "house", "train", "bicycle",
    "bridge", "chair", "clock", "guitar", "lamp", "mountain", "rabbit", "tower", "turtle",
];

const SCENES: &[&str] = &["park", "street", "beach", "garden", "field", "river", "lake", "forest", "city", "road"];
const ADJECTIVES: &[&str] = &["small", "large", "old", "young", "little", "red", "white", "black", "brown", "beautiful", "cute"];
const VERBS: &[&str] = &["running", "sitting", "standing", "playing", "resting", "sleeping"];

/// Weight of the surface-form perturbation relative to the canonical vector.
const SURFACE_WEIGHT: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub dim: usize,
    pub captions: usize,
    pub queries: usize,
    /// Per-coordinate standard deviation of the image noise, added to the
    /// unit class vector before renormalization.
    pub noise_sigma: f64,
    /// Probability that a caption carries a second, unrelated class word.
    pub distractor_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            classes: 10,
            dim: 128,
            captions: 5000,
            queries: 500,
            noise_sigma: 0.1,
            distractor_rate: 0.15,
            seed: 42,
        }
    }
}

fn hash_unit(seed: u64, tag: &str, text: &str, dim: usize) -> Vec<f64> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    h.update([0u8]);
    h.update(text.as_bytes());
    let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    unit(v)
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Unit-normalizes and rounds to `f32` precision so stores reproduce it exactly.
fn finish(v: Vec<f64>) -> Result<EmbeddingVector> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    EmbeddingVector::new(v.into_iter().map(|x| (x / n) as f32 as f64).collect())
}

/// In-process provider for the synthetic world.
#[derive(Debug, Clone)]
pub struct SyntheticModel {
    descriptor: ProviderDescriptor,
    seed: u64,
    classes: BTreeMap<String, Vec<f64>>,
    images: HashMap<String, EmbeddingVector>,
}

impl SyntheticModel {
    pub fn new(dim: usize, seed: u64, class_names: &[&str]) -> Self {
        assert!(dim > 0, "dimension must be positive");
        let classes = class_names
            .iter()
            .map(|c| (c.to_string(), hash_unit(seed, "class", c, dim)))
            .collect();
        Self {
            descriptor: ProviderDescriptor {
                kind: ProviderKind::InProcess,
                dim,
                identity: format!("synthetic/dim={dim}/seed={seed}"),
            },
            seed,
            classes,
            images: HashMap::new(),
        }
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.keys().cloned().collect()
    }

    pub fn class_vector(&self, name: &str) -> Option<&[f64]> {
        self.classes.get(name).map(Vec::as_slice)
    }

    fn word_vector(&self, token: &str) -> Vec<f64> {
        let dim = self.descriptor.dim;
        let canonical = singularize(&token.to_lowercase());
        let mut v = match self.classes.get(&canonical) {
            Some(c) => c.clone(),
            None => hash_unit(self.seed, "word", &canonical, dim),
        };
        if token != canonical {
            let p = hash_unit(self.seed, "surface", token, dim);
            v.iter_mut().zip(p).for_each(|(a, b)| *a += SURFACE_WEIGHT * b);
        }
        v
    }

    pub fn text_vector(&self, text: &str) -> Result<EmbeddingVector> {
        let mut sum = vec![0.0; self.descriptor.dim];
        let mut any = false;
        for token in text.split_whitespace() {
            any = true;
            sum.iter_mut().zip(self.word_vector(token)).for_each(|(a, b)| *a += b);
        }
        if !any {
            return Err(EmbeddingError::EmptyInput);
        }
        finish(sum)
    }

    /// Class vector plus N(0, sigma^2) per coordinate, renormalized.
    pub fn sample_image(&self, class: &str, sigma: f64, rng: &mut impl Rng) -> Result<EmbeddingVector> {
        let c = self
            .class_vector(class)
            .ok_or_else(|| EmbeddingError::UnknownText(class.to_string()))?;
        let noise = Normal::new(0.0, sigma).map_err(|e| EmbeddingError::MalformedResponse(e.to_string()))?;
        finish(c.iter().map(|x| x + noise.sample(rng)).collect())
    }

    pub fn add_image(&mut self, image_ref: impl Into<String>, v: EmbeddingVector) -> Result<()> {
        if v.dim() != self.descriptor.dim {
            return Err(EmbeddingError::DimensionMismatch { expected: self.descriptor.dim, actual: v.dim() });
        }
        self.images.insert(image_ref.into(), v);
        Ok(())
    }
}

impl TextEmbedder for SyntheticModel {
    fn descriptor(&self) -> &ProviderDescriptor {
        &self.descriptor
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        check_text_batch(texts)?;
        texts.iter().map(|t| self.text_vector(t)).collect()
    }
}

impl EmbeddingProvider for SyntheticModel {
    fn embed_image(&self, image_ref: &str) -> Result<EmbeddingVector> {
        self.images
            .get(image_ref)
            .cloned()
            .ok_or_else(|| EmbeddingError::UnknownImageRef(image_ref.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticBenchmark {
    pub config: SyntheticConfig,
    pub model: SyntheticModel,
    pub corpus: Vec<CaptionRecord>,
    pub manifest: DatasetManifest,
}

fn surface_form(class: &str, rng: &mut impl Rng) -> String {
    let plural = format!("{class}s");
    let capital = |w: &str| {
        let mut c = w.chars();
        c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
    };
    match rng.random_range(0..10) {
        0 | 1 => class.to_string(),
        2..=5 => plural,
        6 | 7 => capital(class),
        _ => capital(&plural),
    }
}

fn caption_text(class: &str, distractor: Option<&str>, rng: &mut impl Rng) -> String {
    let w = surface_form(class, rng);
    let scene = SCENES.choose(rng).expect("non-empty");
    let adj = ADJECTIVES.choose(rng).expect("non-empty");
    let verb = VERBS.choose(rng).expect("non-empty");
    let num: u32 = rng.random_range(1000..10000);
    let year: u32 = rng.random_range(1990..2024);
    let mut text = match rng.random_range(0..6) {
        0 => format!("a photo of a {adj} {w} in the {scene}"),
        1 => format!("{w} {verb} near the {scene}"),
        2 => format!("{adj} {w} at the {scene}, {year}"),
        3 => format!("IMG_{num}.jpg {w} by the {scene}"),
        4 => format!("<PERSON> and the {adj} {w} http://example.com/{scene}/{num}.html"),
        _ => format!("stock image: {w} {verb} in the {adj} {scene}"),
    };
    if let Some(d) = distractor {
        text.push_str(&format!(" with a {d}"));
    }
    text
}

impl SyntheticBenchmark {
    pub fn generate(config: &SyntheticConfig) -> Result<Self> {
        if config.classes == 0 || config.classes > CLASS_NAMES.len() {
            return Err(EmbeddingError::MalformedResponse(format!(
                "class count must be in 1..={}",
                CLASS_NAMES.len()
            )));
        }
        let names = &CLASS_NAMES[..config.classes];
        let mut model = SyntheticModel::new(config.dim, config.seed, names);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

        let corpus = (0..config.captions)
            .map(|i| {
                let class = names[i % names.len()];
                let distractor = (names.len() > 1 && rng.random_bool(config.distractor_rate)).then(|| {
                    let others: Vec<&&str> = names.iter().filter(|n| **n != class).collect();
                    **others.choose(&mut rng).expect("at least one other class")
                });
                CaptionRecord::new(format!("cap-{i:05}"), caption_text(class, distractor, &mut rng), "synthetic")
            })
            .collect();

        let mut entries = Vec::with_capacity(config.queries);
        for q in 0..config.queries {
            let class = names[q % names.len()];
            let image_ref = format!("img-{q:04}");
            let v = model.sample_image(class, config.noise_sigma, &mut rng)?;
            model.add_image(image_ref.clone(), v)?;
            entries.push(ManifestEntry {
                id: format!("q-{q:04}"),
                image_ref: Some(image_ref),
                embedding_ref: None,
                label: class.to_string(),
            });
        }
        let manifest = DatasetManifest {
            name: format!("synthetic-{}", config.seed),
            embedder: model.descriptor().identity.clone(),
            entries,
        };
        Ok(Self { config: config.clone(), model, corpus, manifest })
    }

    pub fn queries(&self) -> Vec<(String, Query)> {
        self.manifest.entries.iter().map(|e| (e.id.clone(), e.query())).collect()
    }

    pub fn truths(&self) -> BTreeMap<String, String> {
        self.manifest.truths()
    }

    /// Every string a classifier or evaluator may ask to embed: candidate
    /// tokens under each filtering configuration, and the class names.
    pub fn vocabulary(&self) -> BTreeSet<String> {
        let mut vocab: BTreeSet<String> = self.model.class_names().into_iter().collect();
        for stages in Stages::ABLATION {
            let cfg = FilterConfig::with_stages(stages);
            for r in &self.corpus {
                vocab.extend(caption_tokens(&r.text, &cfg));
            }
        }
        vocab
    }

    /// The whole world dumped to a store: captions by id, images by
    /// reference, and the vocabulary by text.
    pub fn to_store(&self) -> Result<EmbeddingStore> {
        let mut store = EmbeddingStore::new(self.config.dim)?.with_identity(self.model.descriptor().identity.clone());
        for r in &self.corpus {
            store.insert_vector(r.id.clone(), &self.model.text_vector(&r.text)?)?;
        }
        for e in &self.manifest.entries {
            let key = e.reference();
            store.insert_vector(key, &self.model.embed_image(key)?)?;
        }
        for word in self.vocabulary() {
            if !store.contains(&word) {
                store.insert_vector(word.clone(), &self.model.text_vector(&word)?)?;
            }
        }
        Ok(store)
    }
}
