//! Noise removal and surface-form standardization of caption words.

use std::sync::LazyLock;

use regex::Regex;

use super::FilterConfig;

static ANGLE_TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<[^<>]*>").unwrap());

static FILE_EXTENSION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)^(.+)\.(jpe?g|png|gif|bmp|tiff?|webp|svg|ico|heic|pdf|html?|php|aspx?|mp4|mov|avi|txt|docx?)$",
    )
    .unwrap()
});

const EDGE_PUNCTUATION: &[char] = &[
    '.', ',', ';', ':', '!', '?', '"', '\'', '(', ')', '[', ']', '{', '}', '`', '*',
];

fn is_url(token: &str) -> bool {
    let lower = token.to_ascii_lowercase();
    lower.contains("://") || lower.starts_with("www.")
}

/// URLs are dropped except for a trailing file name with a known extension,
/// whose stem may still name the depicted object.
fn url_file_name(token: &str) -> Option<&str> {
    let path = token.split(['?', '#']).next().unwrap_or(token);
    let last = path.rsplit('/').next()?;
    FILE_EXTENSION.is_match(last).then_some(last)
}

fn strip_extension(token: &str) -> &str {
    match FILE_EXTENSION.captures(token) {
        Some(c) => c.get(1).map_or(token, |m| m.as_str()),
        None => token,
    }
}

/// First filtering group: drops markup tokens, URLs, file extensions, short
/// words, words with digits or symbols, meta words and stop words.
pub fn remove_noise(caption: &str, config: &FilterConfig) -> Vec<String> {
    let text = ANGLE_TOKEN.replace_all(caption, " ");
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        let token = raw.trim_matches(EDGE_PUNCTUATION);
        if token.is_empty() {
            continue;
        }
        let token = if is_url(token) {
            match url_file_name(token) {
                Some(name) => name,
                None => continue,
            }
        } else {
            token
        };
        let stem = strip_extension(token);
        let parts: Vec<&str> = if config.split_compounds {
            stem.split(['_', '-']).collect()
        } else {
            vec![stem]
        };
        for part in parts {
            if keep_word(part, config) {
                out.push(part.to_string());
            }
        }
    }
    out
}

fn keep_word(word: &str, config: &FilterConfig) -> bool {
    if word.chars().count() < config.min_word_length {
        return false;
    }
    if !word.chars().all(char::is_alphabetic) {
        return false;
    }
    let lower = word.to_lowercase();
    !config.meta_words.contains(&lower) && !config.stop_words.contains(&lower)
}

/// Second group: lowercase, then singular form.
pub fn standardize(tokens: &[String]) -> Vec<String> {
    tokens.iter().map(|t| singularize(&t.to_lowercase())).collect()
}

const IRREGULAR: &[(&str, &str)] = &[
    ("sheep", "sheep"),
    ("fish", "fish"),
    ("deer", "deer"),
    ("moose", "moose"),
    ("bison", "bison"),
    ("salmon", "salmon"),
    ("trout", "trout"),
    ("aircraft", "aircraft"),
    ("series", "series"),
    ("species", "species"),
    ("news", "news"),
    ("lens", "lens"),
    ("means", "means"),
    ("christmas", "christmas"),
    ("canvas", "canvas"),
    ("atlas", "atlas"),
    ("bias", "bias"),
    ("texas", "texas"),
    ("paris", "paris"),
    ("mars", "mars"),
    ("physics", "physics"),
    ("mathematics", "mathematics"),
    ("gymnastics", "gymnastics"),
    ("athletics", "athletics"),
    ("politics", "politics"),
    ("billiards", "billiards"),
    ("clothes", "clothes"),
    ("jeans", "jeans"),
    ("pants", "pants"),
    ("shorts", "shorts"),
    ("trousers", "trousers"),
    ("scissors", "scissors"),
    ("binoculars", "binoculars"),
    ("rhinoceros", "rhinoceros"),
    ("mice", "mouse"),
    ("lice", "louse"),
    ("geese", "goose"),
    ("feet", "foot"),
    ("teeth", "tooth"),
    ("men", "man"),
    ("women", "woman"),
    ("children", "child"),
    ("people", "person"),
    ("oxen", "ox"),
    ("dice", "die"),
    ("cacti", "cactus"),
    ("fungi", "fungus"),
    ("buses", "bus"),
    ("gases", "gas"),
    ("knives", "knife"),
    ("wives", "wife"),
    ("lives", "life"),
    ("gloves", "glove"),
    ("doves", "dove"),
    ("olives", "olive"),
    ("caves", "cave"),
    ("waves", "wave"),
    ("stoves", "stove"),
    ("curves", "curve"),
    ("valves", "valve"),
    ("grooves", "groove"),
    ("sleeves", "sleeve"),
    ("hives", "hive"),
    ("coves", "cove"),
    ("groves", "grove"),
    ("nerves", "nerve"),
    ("drives", "drive"),
    ("archives", "archive"),
    ("locomotives", "locomotive"),
    ("detectives", "detective"),
    ("potatoes", "potato"),
    ("tomatoes", "tomato"),
    ("heroes", "hero"),
    ("echoes", "echo"),
    ("volcanoes", "volcano"),
    ("tornadoes", "tornado"),
    ("mosquitoes", "mosquito"),
    ("buffaloes", "buffalo"),
    ("dominoes", "domino"),
    ("headaches", "headache"),
    ("niches", "niche"),
    ("moustaches", "moustache"),
    ("avalanches", "avalanche"),
];

fn irregular(word: &str) -> Option<&'static str> {
    IRREGULAR
        .iter()
        .find_map(|&(plural, singular)| (plural == word).then_some(singular))
}

/// Rule table, first match wins: irregulars, `-ies → -y`, `-ves → -f`,
/// `-es` after ss/x/zz/ch/sh, then a bare trailing `-s`. Words ending in
/// `ss`, `us` or `is`, and words of three letters or fewer, are left alone.
pub fn singularize(word: &str) -> String {
    if let Some(s) = irregular(word) {
        return s.to_string();
    }
    if word.chars().count() <= 3
        || word.ends_with("ss")
        || word.ends_with("us")
        || word.ends_with("is")
    {
        return word.to_string();
    }
    if word.len() > 4 {
        if let Some(stem) = word.strip_suffix("ies") {
            return format!("{stem}y");
        }
    }
    if let Some(stem) = word.strip_suffix("ves") {
        return format!("{stem}f");
    }
    if let Some(stem) = word.strip_suffix("es") {
        if ["ss", "x", "zz", "ch", "sh"].iter().any(|s| stem.ends_with(s)) {
            return stem.to_string();
        }
    }
    match word.strip_suffix('s') {
        Some(stem) => stem.to_string(),
        None => word.to_string(),
    }
}
