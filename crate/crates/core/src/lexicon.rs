//! Word-level helpers: lemma keys, function words, relation shapes.

use std::sync::OnceLock;

use rust_stemmers::{Algorithm, Stemmer};

fn stemmer() -> &'static Stemmer {
    static STEMMER: OnceLock<Stemmer> = OnceLock::new();
    STEMMER.get_or_init(|| Stemmer::create(Algorithm::English))
}

const IRREGULAR: &[(&str, &str)] = &[
    ("men", "man"),
    ("women", "woman"),
    ("people", "person"),
    ("children", "child"),
    ("feet", "foot"),
    ("teeth", "tooth"),
    ("mice", "mouse"),
    ("geese", "goose"),
    ("rode", "ride"),
    ("ridden", "ride"),
    ("wore", "wear"),
    ("worn", "wear"),
    ("held", "hold"),
    ("sat", "sit"),
    ("stood", "stand"),
    ("ate", "eat"),
    ("eaten", "eat"),
    ("has", "have"),
    ("had", "have"),
];

/// Comparison key for the vocabulary-closure check: lowercased,
/// irregular forms mapped, then Snowball-stemmed.
pub fn lemma_key(word: &str) -> String {
    let w = word
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    let base = IRREGULAR
        .iter()
        .find(|(form, _)| *form == w)
        .map_or(w.as_str(), |(_, lemma)| lemma);
    stemmer().stem(base).into_owned()
}

/// Words that carry no object or relation content.
pub const FUNCTION_WORDS: &[&str] = &[
    "a", "an", "the", "is", "are", "was", "were", "be", "been", "being", "am", "that", "which",
    "who", "whom", "whose", "this", "these", "those", "it", "its", "there", "and", "some", "one",
];

pub fn is_function_word(word: &str) -> bool {
    let w = word.to_lowercase();
    FUNCTION_WORDS.contains(&w.as_str())
}

/// Alphanumeric words of `text` (apostrophes kept inside words).
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(|w| w.trim_matches('\''))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Content words of `text` as lemma keys.
pub fn content_keys(text: &str) -> Vec<String> {
    words(text)
        .into_iter()
        .filter(|w| !is_function_word(w))
        .map(|w| lemma_key(&w))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationKind {
    /// `riding`, `sitting on`: participle, optionally followed by prepositions.
    Participle,
    /// `behind`, `next to`, `on top of`.
    Preposition,
    /// `has`, `wears`: finite verb, optionally followed by prepositions.
    FiniteVerb,
}

const FINITE_VERBS: &[&str] = &[
    "has",
    "have",
    "wears",
    "wear",
    "holds",
    "hold",
    "carries",
    "carry",
    "contains",
    "contain",
    "eats",
    "eat",
    "covers",
    "cover",
    "owns",
    "own",
    "uses",
    "use",
    "rides",
    "ride",
    "sits",
    "stands",
    "hangs",
    "watches",
    "pulls",
    "pushes",
    "touches",
    "drives",
    "throws",
    "catches",
    "supports",
    "surrounds",
    "faces",
    "overlooks",
    "reads",
    "plays",
];

/// Relation words with a leading copula removed (`is on` → `on`).
pub fn relation_words(relation: &str) -> Vec<String> {
    let mut ws: Vec<String> = relation.split_whitespace().map(str::to_lowercase).collect();
    while ws.len() > 1 && matches!(ws[0].as_str(), "is" | "are") {
        ws.remove(0);
    }
    ws
}

pub fn classify_relation(relation: &str) -> RelationKind {
    let ws = relation_words(relation);
    let first = ws.first().map(String::as_str).unwrap_or("");
    if first.len() > 4 && first.ends_with("ing") {
        RelationKind::Participle
    } else if FINITE_VERBS.contains(&first) {
        RelationKind::FiniteVerb
    } else {
        RelationKind::Preposition
    }
}

const ADJECTIVES: &[&str] = &[
    "blue", "red", "white", "black", "green", "yellow", "brown", "gray", "grey", "orange", "pink",
    "purple", "silver", "gold", "dark", "light", "large", "small", "big", "little", "tall",
    "short", "long", "young", "old", "wooden", "metal", "plastic", "glass", "open", "closed",
    "empty", "full", "striped", "round", "square", "wet", "dry", "green", "bright",
];

pub fn is_adjective(word: &str) -> bool {
    ADJECTIVES.contains(&word.to_lowercase().as_str())
}

/// Entity name with any leading article removed.
pub fn bare_name(name: &str) -> String {
    let mut ws: Vec<&str> = name.split_whitespace().collect();
    if ws.len() > 1 && matches!(ws[0].to_lowercase().as_str(), "a" | "an" | "the") {
        ws.remove(0);
    }
    ws.join(" ")
}

pub fn indefinite_article(name: &str) -> &'static str {
    match name.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}
