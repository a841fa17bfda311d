//! Part-of-speech tagging for candidate filtering.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CandidateError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pos {
    Noun,
    Adjective,
    Verb,
    Article,
    Pronoun,
    Other,
}

impl Pos {
    pub const ALL: [Pos; 6] = [
        Pos::Noun,
        Pos::Adjective,
        Pos::Verb,
        Pos::Article,
        Pos::Pronoun,
        Pos::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Pos::Noun => "noun",
            Pos::Adjective => "adjective",
            Pos::Verb => "verb",
            Pos::Article => "article",
            Pos::Pronoun => "pronoun",
            Pos::Other => "other",
        }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pos {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "noun" | "n" => Ok(Pos::Noun),
            "adjective" | "adj" | "a" => Ok(Pos::Adjective),
            "verb" | "v" => Ok(Pos::Verb),
            "article" | "det" => Ok(Pos::Article),
            "pronoun" | "pron" => Ok(Pos::Pronoun),
            "other" | "x" => Ok(Pos::Other),
            other => Err(format!("unknown POS category `{other}`")),
        }
    }
}

pub trait PosTagger: Send + Sync {
    fn tag(&self, word: &str) -> Result<Pos, CandidateError>;
}

const ARTICLES: &[&str] = &["a", "an", "the"];

const PRONOUNS: &[&str] = &[
    "i", "me", "my", "mine", "myself", "you", "your", "yours", "yourself", "yourselves", "he",
    "him", "his", "himself", "she", "her", "hers", "herself", "it", "its", "itself", "we", "us",
    "our", "ours", "ourselves", "they", "them", "their", "theirs", "themselves", "this", "that",
    "these", "those", "who", "whom", "whose", "which", "what", "someone", "somebody",
    "something", "anyone", "anybody", "anything", "everyone", "everybody", "everything",
    "nobody", "nothing",
];

const FUNCTION_WORDS: &[&str] = &[
    "and", "but", "or", "nor", "because", "although", "though", "unless", "whether", "either",
    "neither", "while", "about", "above", "across", "after", "against", "along", "among",
    "around", "before", "behind", "below", "beneath", "beside", "besides", "between", "beyond",
    "during", "except", "from", "inside", "into", "near", "onto", "outside", "over", "through",
    "toward", "towards", "under", "underneath", "until", "upon", "with", "within", "without",
    "also", "very", "really", "there", "here", "just", "even", "still", "yet", "ever", "never",
    "always", "often", "sometimes", "together", "away", "maybe", "perhaps", "please", "however",
    "etc", "via", "per", "then", "than", "when", "where", "why", "how", "not", "only", "some",
    "any", "each", "every", "all", "both", "few", "many", "much", "more", "most", "such",
];

const BUNDLED_LEXICON: &str = include_str!("../../data/lexicon.tsv");

/// Offline tagger: closed-class word lists, a `word<TAB>pos` lexicon, suffix
/// heuristics, and `noun` for everything else.
#[derive(Debug, Clone)]
pub struct LexiconTagger {
    entries: HashMap<String, Pos>,
}

impl Default for LexiconTagger {
    fn default() -> Self {
        Self::bundled()
    }
}

impl LexiconTagger {
    /// Closed-class lists only.
    pub fn closed_class() -> Self {
        let mut entries = HashMap::new();
        for (words, pos) in [
            (ARTICLES, Pos::Article),
            (PRONOUNS, Pos::Pronoun),
            (FUNCTION_WORDS, Pos::Other),
        ] {
            for w in words {
                entries.insert((*w).to_string(), pos);
            }
        }
        Self { entries }
    }

    pub fn bundled() -> Self {
        let mut t = Self::closed_class();
        t.extend_from_str(BUNDLED_LEXICON)
            .expect("bundled lexicon is well-formed");
        t
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CandidateError> {
        let text = fs::read_to_string(path.as_ref()).map_err(|e| {
            CandidateError::TaggerUnavailable(format!("{}: {e}", path.as_ref().display()))
        })?;
        let mut t = Self::closed_class();
        t.extend_from_str(&text)?;
        Ok(t)
    }

    /// Adds `word<TAB>pos` lines. Blank lines and `#` comments are skipped.
    /// Later lines do not override earlier ones.
    pub fn extend_from_str(&mut self, text: &str) -> Result<(), CandidateError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, pos) = line.split_once('\t').ok_or_else(|| CandidateError::InvalidLexicon {
                line: n + 1,
                message: "expected `word<TAB>pos`".into(),
            })?;
            let pos = pos.parse::<Pos>().map_err(|message| CandidateError::InvalidLexicon {
                line: n + 1,
                message,
            })?;
            self.entries.entry(word.trim().to_lowercase()).or_insert(pos);
        }
        Ok(())
    }

    pub fn insert(&mut self, word: &str, pos: Pos) {
        self.entries.insert(word.to_lowercase(), pos);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn by_suffix(word: &str) -> Option<Pos> {
        let n = word.chars().count();
        if n >= 6 && word.ends_with("ing") {
            return Some(Pos::Verb);
        }
        if n >= 5 && word.ends_with("ly") {
            return Some(Pos::Other);
        }
        if n >= 6 && word.ends_with("ed") {
            return Some(Pos::Adjective);
        }
        const ADJ: &[&str] = &["ous", "ful", "less", "able", "ible", "ical"];
        if n >= 6 && ADJ.iter().any(|s| word.ends_with(s)) {
            return Some(Pos::Adjective);
        }
        None
    }
}

impl PosTagger for LexiconTagger {
    fn tag(&self, word: &str) -> Result<Pos, CandidateError> {
        let lower = word.to_lowercase();
        Ok(self
            .entries
            .get(&lower)
            .copied()
            .or_else(|| Self::by_suffix(&lower))
            .unwrap_or(Pos::Noun))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_examples() {
        let t = LexiconTagger::bundled();
        assert_eq!(t.tag("dog").unwrap(), Pos::Noun);
        assert_eq!(t.tag("the").unwrap(), Pos::Article);
        assert_eq!(t.tag("zzxyq").unwrap(), Pos::Noun);
        assert_eq!(t.tag("blue").unwrap(), Pos::Adjective);
        assert_eq!(t.tag("run").unwrap(), Pos::Verb);
        assert_eq!(t.tag("they").unwrap(), Pos::Pronoun);
    }

    #[test]
    fn suffix_heuristics_defer_to_lexicon() {
        let t = LexiconTagger::bundled();
        assert_eq!(t.tag("running").unwrap(), Pos::Verb);
        assert_eq!(t.tag("building").unwrap(), Pos::Noun);
        assert_eq!(t.tag("quickly").unwrap(), Pos::Other);
        assert_eq!(t.tag("butterfly").unwrap(), Pos::Noun);
        assert_eq!(t.tag("wrinkled").unwrap(), Pos::Adjective);
        assert_eq!(t.tag("king").unwrap(), Pos::Noun);
    }

    #[test]
    fn bad_lexicon_line() {
        let mut t = LexiconTagger::closed_class();
        assert!(matches!(
            t.extend_from_str("dog\tnoun\ncat noun\n"),
            Err(CandidateError::InvalidLexicon { line: 2, .. })
        ));
        assert!(matches!(
            t.extend_from_str("dog\tthing\n"),
            Err(CandidateError::InvalidLexicon { line: 1, .. })
        ));
    }

    #[test]
    fn missing_lexicon_file() {
        assert!(matches!(
            LexiconTagger::load("/nonexistent/lexicon.tsv"),
            Err(CandidateError::TaggerUnavailable(_))
        ));
    }
}
