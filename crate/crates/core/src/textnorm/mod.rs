//! TTS front-end text normalization.
//!
//! Three passes run in a fixed order: abbreviation and title expansion, then
//! number verbalization, then verbalization of the punctuation marks that
//! readers spoke aloud (brackets, colon, semicolon). The output contains no
//! ASCII digits and none of the mapped symbols, and normalizing it again
//! leaves it unchanged.

mod numbers;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use numbers::{cardinal, ordinalize, year, NumberGrammar};

#[derive(Debug, Error)]
pub enum RulesError {
    #[error("cannot read rules file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed rules file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("abbreviation key '{0}' must be non-empty and alphabetic")]
    BadKey(String),
    #[error("abbreviation keys '{0}' and '{1}' collide under the matching rule")]
    CollidingKeys(String, String),
    #[error("expansion for '{0}' contains a digit")]
    DigitInExpansion(String),
    #[error("expansion for '{key}' contains the abbreviation '{other}'")]
    RecursiveExpansion { key: String, other: String },
    #[error("punctuation map is missing '{0}'")]
    MissingSymbol(char),
    #[error("spoken form for '{0}' contains a digit or a mapped symbol")]
    BadSpokenForm(char),
}

/// Abbreviation, punctuation and number rules.
///
/// The default table is a small superset of the titles seen in the corpus
/// (Alh, Maj, Dr, Mr, Mrs, Prof, St); it is not exhaustive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRules {
    #[serde(default)]
    pub abbreviations: BTreeMap<String, String>,
    #[serde(default = "default_punctuation")]
    pub punctuation: BTreeMap<char, String>,
    #[serde(default)]
    pub numbers: NumberGrammar,
}

fn default_punctuation() -> BTreeMap<char, String> {
    [
        ('(', "open bracket"),
        (')', "closed bracket"),
        (':', "colon"),
        (';', "semicolon"),
    ]
    .into_iter()
    .map(|(c, s)| (c, s.to_string()))
    .collect()
}

impl Default for NormalizationRules {
    fn default() -> Self {
        let abbreviations = [
            ("Alh", "Alhaji"),
            ("Maj", "Major"),
            ("Dr", "Doctor"),
            ("Mr", "Mister"),
            ("Mrs", "Missus"),
            ("Prof", "Professor"),
            ("St", "Saint"),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        NormalizationRules {
            abbreviations,
            punctuation: default_punctuation(),
            numbers: NumberGrammar::default(),
        }
    }
}

/// Matching key: exact first letter, lowercase remainder.
fn match_key(token: &str) -> (char, String) {
    let mut chars = token.chars();
    let first = chars.next().unwrap_or_default();
    (first, chars.as_str().to_lowercase())
}

fn alphabetic_runs(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !c.is_alphabetic()).filter(|t| !t.is_empty())
}

impl NormalizationRules {
    /// Loads a JSON rules file, e.g.
    /// `{"abbreviations": {"Alh": "Alhaji"}, "punctuation": {"(": "open bracket", ...}}`.
    /// Omitted sections fall back to defaults, except that an omitted
    /// abbreviation table means no abbreviations.
    pub fn from_json_file(path: &Path) -> Result<Self, RulesError> {
        let text = std::fs::read_to_string(path).map_err(|source| RulesError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Self, RulesError> {
        let rules: NormalizationRules = serde_json::from_str(text)?;
        rules.validate()?;
        Ok(rules)
    }

    pub fn validate(&self) -> Result<(), RulesError> {
        let mut seen: HashMap<(char, String), &str> = HashMap::new();
        for (key, expansion) in &self.abbreviations {
            if key.is_empty() || !key.chars().all(char::is_alphabetic) {
                return Err(RulesError::BadKey(key.clone()));
            }
            if let Some(prev) = seen.insert(match_key(key), key) {
                return Err(RulesError::CollidingKeys(prev.to_string(), key.clone()));
            }
            if expansion.chars().any(|c| c.is_ascii_digit()) {
                return Err(RulesError::DigitInExpansion(key.clone()));
            }
        }
        let index = self.abbreviation_index();
        for (key, expansion) in &self.abbreviations {
            if let Some(other) = alphabetic_runs(expansion).find(|t| index.contains_key(&match_key(t))) {
                return Err(RulesError::RecursiveExpansion {
                    key: key.clone(),
                    other: other.to_string(),
                });
            }
        }
        for required in ['(', ')', ':', ';'] {
            if !self.punctuation.contains_key(&required) {
                return Err(RulesError::MissingSymbol(required));
            }
        }
        for (&sym, spoken) in &self.punctuation {
            let bad = spoken
                .chars()
                .any(|c| c.is_ascii_digit() || self.punctuation.contains_key(&c));
            if bad || spoken.trim().is_empty() {
                return Err(RulesError::BadSpokenForm(sym));
            }
        }
        Ok(())
    }

    fn abbreviation_index(&self) -> HashMap<(char, String), &str> {
        self.abbreviations
            .iter()
            .map(|(k, v)| (match_key(k), v.as_str()))
            .collect()
    }
}

/// Replaces whole-token abbreviations (with or without a trailing period)
/// by their expansions. Tokens are maximal runs of letters; matching is exact
/// on the first letter and case-insensitive on the rest. A trailing period is
/// consumed only when followed by whitespace or the end of the text.
pub fn expand_abbreviations(text: &str, rules: &NormalizationRules) -> String {
    let index = rules.abbreviation_index();
    if index.is_empty() {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find(char::is_alphabetic) {
        out.push_str(&rest[..start]);
        let run = &rest[start..];
        let len = run.find(|c: char| !c.is_alphabetic()).unwrap_or(run.len());
        let token = &run[..len];
        let mut after = &run[len..];
        match index.get(&match_key(token)) {
            Some(expansion) => {
                out.push_str(expansion);
                if let Some(tail) = after.strip_prefix('.') {
                    if tail.is_empty() || tail.starts_with(char::is_whitespace) {
                        after = tail;
                    }
                }
            }
            None => out.push_str(token),
        }
        rest = after;
    }
    out.push_str(rest);
    out
}

pub fn verbalize_numbers(text: &str, rules: &NormalizationRules) -> String {
    numbers::verbalize(text, rules.numbers)
}

/// Replaces each mapped symbol by its spoken form, separated from
/// neighbouring words by single spaces. Unmapped punctuation is kept.
pub fn verbalize_punctuation(text: &str, rules: &NormalizationRules) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match rules.punctuation.get(&c) {
            Some(spoken) => {
                if out.chars().next_back().is_some_and(|p| !p.is_whitespace()) {
                    out.push(' ');
                }
                out.push_str(spoken);
                if chars.peek().is_some_and(|n| n.is_alphanumeric()) {
                    out.push(' ');
                }
            }
            None => out.push(c),
        }
    }
    out
}

/// Abbreviations, then numbers, then punctuation.
pub fn normalize_text(text: &str, rules: &NormalizationRules) -> String {
    let expanded = expand_abbreviations(text, rules);
    let spoken_numbers = verbalize_numbers(&expanded, rules);
    verbalize_punctuation(&spoken_numbers, rules)
}
