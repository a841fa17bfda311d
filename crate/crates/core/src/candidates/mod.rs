//! Candidate class names from retrieved captions.
//!
//! Three groups of operations run in order: noise removal, standardization,
//! and filtering by part of speech and occurrence count. Each group can be
//! switched off through [`Stages`] to reproduce the filtering ablation.

mod normalize;
mod tagger;

pub use normalize::{remove_noise, singularize, standardize};
pub use tagger::{LexiconTagger, Pos, PosTagger};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::CaptionRecord;

#[derive(Debug, Error)]
pub enum CandidateError {
    #[error("POS tagger unavailable: {0}")]
    TaggerUnavailable(String),
    #[error("lexicon line {line}: {message}")]
    InvalidLexicon { line: usize, message: String },
    #[error("no candidate survived filtering")]
    EmptyCandidateSet {
        /// Most frequent POS-accepted token before the count filter, if any.
        fallback: Option<String>,
    },
    #[error("invalid filter configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const BUNDLED_STOP_WORDS: &str = include_str!("../../data/stopwords.txt");
const BUNDLED_META_WORDS: &str = include_str!("../../data/meta_words.txt");

fn word_list(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

/// Reads a one-word-per-line list.
pub fn load_word_list(path: impl AsRef<Path>) -> Result<BTreeSet<String>, CandidateError> {
    Ok(word_list(&fs::read_to_string(path)?))
}

pub fn default_stop_words() -> BTreeSet<String> {
    word_list(BUNDLED_STOP_WORDS)
}

pub fn default_meta_words() -> BTreeSet<String> {
    word_list(BUNDLED_META_WORDS)
}

/// Which operation groups run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stages {
    pub remove: bool,
    pub standardize: bool,
    pub filter: bool,
}

impl Stages {
    pub const NONE: Stages = Stages {
        remove: false,
        standardize: false,
        filter: false,
    };
    pub const REMOVE: Stages = Stages {
        remove: true,
        standardize: false,
        filter: false,
    };
    pub const REMOVE_STANDARDIZE: Stages = Stages {
        remove: true,
        standardize: true,
        filter: false,
    };
    pub const ALL: Stages = Stages {
        remove: true,
        standardize: true,
        filter: true,
    };

    /// The four cumulative configurations of the filtering ablation.
    pub const ABLATION: [Stages; 4] = [
        Stages::NONE,
        Stages::REMOVE,
        Stages::REMOVE_STANDARDIZE,
        Stages::ALL,
    ];
}

impl Default for Stages {
    fn default() -> Self {
        Stages::ALL
    }
}

impl fmt::Display for Stages {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match (self.remove, self.standardize, self.filter) {
            (false, false, false) => "none",
            (true, false, false) => "remove",
            (true, true, false) => "remove+standardize",
            (true, true, true) => "all",
            (r, s, fl) => {
                let mut parts = Vec::new();
                if r {
                    parts.push("remove");
                }
                if s {
                    parts.push("standardize");
                }
                if fl {
                    parts.push("filter");
                }
                return f.write_str(&parts.join("+"));
            }
        };
        f.write_str(name)
    }
}

impl FromStr for Stages {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "none" => return Ok(Stages::NONE),
            "all" => return Ok(Stages::ALL),
            _ => {}
        }
        let mut stages = Stages::NONE;
        for part in s.split(['+', ',']) {
            match part.trim() {
                "remove" => stages.remove = true,
                "standardize" => stages.standardize = true,
                "filter" => stages.filter = true,
                other => return Err(format!("unknown filter stage `{other}`")),
            }
        }
        Ok(stages)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub min_word_length: usize,
    pub min_count: u32,
    pub meta_words: BTreeSet<String>,
    pub stop_words: BTreeSet<String>,
    pub allowed_pos: BTreeSet<Pos>,
    pub split_compounds: bool,
    pub stages: Stages,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_word_length: 3,
            min_count: 2,
            meta_words: default_meta_words(),
            stop_words: default_stop_words(),
            allowed_pos: [Pos::Noun, Pos::Adjective].into_iter().collect(),
            split_compounds: true,
            stages: Stages::ALL,
        }
    }
}

impl FilterConfig {
    pub fn with_stages(stages: Stages) -> Self {
        Self {
            stages,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), CandidateError> {
        if self.min_word_length < 1 {
            return Err(CandidateError::InvalidConfig("min_word_length must be >= 1".into()));
        }
        if self.min_count < 1 {
            return Err(CandidateError::InvalidConfig("min_count must be >= 1".into()));
        }
        Ok(())
    }
}

/// Filtered candidate names with their occurrence counts.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CandidateSet {
    pub entries: BTreeMap<String, u32>,
    /// Ids of the captions the candidates were extracted from.
    pub provenance: Vec<String>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Names in lexicographic order.
    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn count(&self, name: &str) -> Option<u32> {
        self.entries.get(name).copied()
    }
}

fn count_tokens(tokens: &[String]) -> BTreeMap<String, u32> {
    let mut counts = BTreeMap::new();
    for t in tokens {
        *counts.entry(t.clone()).or_insert(0) += 1;
    }
    counts
}

/// Third group: keeps tokens whose POS is allowed and that occur at least
/// `min_count` times.
pub fn filter_candidates(
    tokens: &[String],
    tagger: &dyn PosTagger,
    config: &FilterConfig,
) -> Result<CandidateSet, CandidateError> {
    let mut entries = BTreeMap::new();
    for (word, count) in pos_filtered_counts(tokens, tagger, config)? {
        if count >= config.min_count {
            entries.insert(word, count);
        }
    }
    Ok(CandidateSet {
        entries,
        provenance: Vec::new(),
    })
}

fn pos_filtered_counts(
    tokens: &[String],
    tagger: &dyn PosTagger,
    config: &FilterConfig,
) -> Result<BTreeMap<String, u32>, CandidateError> {
    let mut kept = BTreeMap::new();
    for (word, count) in count_tokens(tokens) {
        if config.allowed_pos.contains(&tagger.tag(&word)?) {
            kept.insert(word, count);
        }
    }
    Ok(kept)
}

/// Tokens of one caption after the enabled removal and standardization groups.
pub fn caption_tokens(text: &str, config: &FilterConfig) -> Vec<String> {
    let tokens = if config.stages.remove {
        remove_noise(text, config)
    } else {
        text.split_whitespace().map(str::to_string).collect()
    };
    if config.stages.standardize {
        standardize(&tokens)
    } else {
        tokens
    }
}

/// Runs the enabled groups over all captions.
///
/// An empty result is reported as [`CandidateError::EmptyCandidateSet`],
/// carrying the most frequent token that passed the POS filter (ties broken
/// lexicographically) so callers can fall back to it.
pub fn extract_candidates(
    captions: &[CaptionRecord],
    tagger: &dyn PosTagger,
    config: &FilterConfig,
) -> Result<CandidateSet, CandidateError> {
    config.validate()?;
    let tokens: Vec<String> = captions
        .iter()
        .flat_map(|c| caption_tokens(&c.text, config))
        .collect();
    let mut set = if config.stages.filter {
        filter_candidates(&tokens, tagger, config)?
    } else {
        CandidateSet {
            entries: count_tokens(&tokens),
            provenance: Vec::new(),
        }
    };
    if set.is_empty() {
        let fallback = if config.stages.filter {
            pos_filtered_counts(&tokens, tagger, config)?
                .into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
                .map(|(w, _)| w)
        } else {
            None
        };
        return Err(CandidateError::EmptyCandidateSet { fallback });
    }
    set.provenance = captions.iter().map(|c| c.id.clone()).collect();
    Ok(set)
}
