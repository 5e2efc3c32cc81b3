//! Meaningful-noun extraction by lexicon matching against the detector's
//! category vocabulary.
//!
//! A question token (or run of tokens, for multiword categories such as
//! "traffic light") is a meaningful noun when its canonical form is a
//! detected category and not a stop noun. Plural surface forms are mapped
//! back to the singular category with a small set of English inflection
//! rules plus an irregulars table.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::corpus::Corpus;

pub const DEFAULT_STOP_NOUNS: [&str; 4] = ["picture", "photo", "image", "photograph"];

/// `(singular, plural)` pairs not covered by the suffix rules.
pub const IRREGULAR_PLURALS: [(&str, &str); 10] = [
    ("man", "men"),
    ("woman", "women"),
    ("person", "people"),
    ("child", "children"),
    ("foot", "feet"),
    ("tooth", "teeth"),
    ("mouse", "mice"),
    ("leaf", "leaves"),
    ("knife", "knives"),
    ("shelf", "shelves"),
];

/// A lowercased token with its byte span in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Splits on non-alphanumeric boundaries and lowercases.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            tokens.push(Token { text: text[s..i].to_lowercase(), start: s, end: i });
        }
    }
    if let Some(s) = start {
        tokens.push(Token { text: text[s..].to_lowercase(), start: s, end: text.len() });
    }
    tokens
}

/// Lowercased tokens joined by single spaces, e.g. `"Traffic-Light"` to
/// `"traffic light"`. Category names are stored in this form so that they
/// compare equal to token runs from question text.
pub fn normalize_phrase(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for (i, t) in tokenize(s).iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&t.text);
    }
    out
}

/// Regular plural surface forms of a single word.
fn regular_plurals(word: &str) -> Vec<String> {
    let ends = |s: &str| word.ends_with(s);
    if ends("s") || ends("x") || ends("z") || ends("ch") || ends("sh") {
        return alloc::vec![alloc::format!("{word}es")];
    }
    let bytes = word.as_bytes();
    if bytes.len() >= 2 && ends("y") && !b"aeiou".contains(&bytes[bytes.len() - 2]) {
        return alloc::vec![alloc::format!("{}ies", &word[..word.len() - 1])];
    }
    if ends("o") {
        return alloc::vec![alloc::format!("{word}s"), alloc::format!("{word}es")];
    }
    alloc::vec![alloc::format!("{word}s")]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NounLexicon {
    canonical: BTreeSet<String>,
    plural_map: BTreeMap<String, String>,
    stop_nouns: BTreeSet<String>,
    max_words: usize,
}

/// A located meaningful noun (or stop noun) inside a question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NounMatch {
    pub canonical: String,
    pub start: usize,
    pub end: usize,
    pub stop: bool,
}

impl NounLexicon {
    /// `irregulars` are extra `(singular, plural)` pairs; they override the
    /// built-in table for the same singular.
    pub fn new<'a>(
        categories: impl IntoIterator<Item = &'a str>,
        extra_stop_nouns: impl IntoIterator<Item = &'a str>,
        extra_irregulars: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Self {
        let canonical: BTreeSet<String> =
            categories.into_iter().map(normalize_phrase).filter(|c| !c.is_empty()).collect();
        let mut irregular: BTreeMap<String, String> =
            IRREGULAR_PLURALS.iter().map(|(s, p)| (s.to_string(), p.to_string())).collect();
        for (s, p) in extra_irregulars {
            irregular.insert(normalize_phrase(s), normalize_phrase(p));
        }
        let stop_nouns = DEFAULT_STOP_NOUNS
            .iter()
            .copied()
            .chain(extra_stop_nouns)
            .map(normalize_phrase)
            .filter(|s| !s.is_empty())
            .collect();

        let mut plural_map = BTreeMap::new();
        let mut max_words = 1;
        for c in &canonical {
            let (head, last) = match c.rfind(' ') {
                Some(i) => (&c[..=i], &c[i + 1..]),
                None => ("", c.as_str()),
            };
            max_words = max_words.max(c.split(' ').count());
            let forms = match irregular.get(last) {
                Some(p) => alloc::vec![p.clone()],
                None => regular_plurals(last),
            };
            for f in forms {
                let surface = alloc::format!("{head}{f}");
                if !canonical.contains(&surface) {
                    // iteration is sorted, so the smallest canonical wins collisions
                    plural_map.entry(surface).or_insert_with(|| c.clone());
                }
            }
        }
        Self { canonical, plural_map, stop_nouns, max_words }
    }

    /// Lexicon over every detected category of the corpus.
    pub fn from_corpus<'a>(
        corpus: &'a Corpus,
        extra_stop_nouns: impl IntoIterator<Item = &'a str>,
        extra_irregulars: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Self {
        Self::new(corpus.categories(), extra_stop_nouns, extra_irregulars)
    }

    pub fn canonical(&self) -> &BTreeSet<String> {
        &self.canonical
    }

    pub fn plural_map(&self) -> &BTreeMap<String, String> {
        &self.plural_map
    }

    pub fn stop_nouns(&self) -> &BTreeSet<String> {
        &self.stop_nouns
    }

    /// Canonical category for a normalized surface phrase.
    pub fn canonical_of(&self, surface: &str) -> Option<&str> {
        self.canonical.get(surface).map(String::as_str).or_else(|| self.plural_map.get(surface).map(String::as_str))
    }

    /// Left-to-right scan, longest run first at each position. Stop-noun
    /// matches are reported (flagged) so callers can locate them.
    pub fn scan(&self, text: &str) -> Vec<NounMatch> {
        let tokens = tokenize(text);
        let mut out = Vec::new();
        let mut i = 0;
        let mut phrase = String::new();
        while i < tokens.len() {
            let mut matched = None;
            for n in (1..=self.max_words.min(tokens.len() - i)).rev() {
                phrase.clear();
                for (k, t) in tokens[i..i + n].iter().enumerate() {
                    if k > 0 {
                        phrase.push(' ');
                    }
                    phrase.push_str(&t.text);
                }
                if let Some(c) = self.canonical_of(&phrase) {
                    matched = Some((n, c.to_string()));
                    break;
                }
            }
            match matched {
                Some((n, canonical)) => {
                    let stop = self.stop_nouns.contains(&canonical);
                    out.push(NounMatch { canonical, start: tokens[i].start, end: tokens[i + n - 1].end, stop });
                    i += n;
                }
                None => i += 1,
            }
        }
        out
    }

    /// Sorted, deduplicated canonical meaningful nouns of `text`.
    pub fn extract(&self, text: &str) -> Vec<String> {
        let set: BTreeSet<String> = self.scan(text).into_iter().filter(|m| !m.stop).map(|m| m.canonical).collect();
        set.into_iter().collect()
    }
}

/// Fills [`crate::corpus::QuestionRecord::nouns`] for every question.
pub fn extract_all(corpus: &mut Corpus, lexicon: &NounLexicon) {
    for q in corpus.questions_mut() {
        q.nouns = lexicon.extract(&q.text);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneReport {
    pub total: usize,
    pub removed: usize,
}

impl PruneReport {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.removed as f64 / self.total as f64
        }
    }
}

/// Marks questions without meaningful nouns as non-composable. They stay in
/// the corpus for evaluation and prior statistics.
pub fn prune_nounless(corpus: &mut Corpus) -> PruneReport {
    let mut removed = 0;
    let questions = corpus.questions_mut();
    for q in questions.iter_mut() {
        if q.nouns.is_empty() {
            q.composable = false;
        }
        if !q.composable {
            removed += 1;
        }
    }
    PruneReport { total: questions.len(), removed }
}
