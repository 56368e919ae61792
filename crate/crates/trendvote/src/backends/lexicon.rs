//! Deterministic keyword classifier used for offline runs and fixtures.
//!
//! Rules are phrases with signed weights. The query text (never the
//! exemplars) is scored as the occurrence-weighted sum; the label is the
//! sign of the sum, with `Irrelevant` on zero or no match in the 3-class
//! set and `Up` on ties in the 2-class set.

use std::path::Path;

use serde::Deserialize;

use crate::prompting::{ItemLabel, LabelSet};

use super::{extract_query, BackendError, Classifier, ClassifierRequest, ClassifierResponse, ResponseSource};

#[derive(Debug, Clone, Deserialize)]
pub struct LexiconRule {
    pub phrase: String,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct LexiconBackend {
    rules: Vec<(Vec<String>, f64)>,
}

fn words_of(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

impl LexiconBackend {
    pub fn new(rules: impl IntoIterator<Item = LexiconRule>) -> Self {
        LexiconBackend {
            rules: rules
                .into_iter()
                .map(|r| (words_of(&r.phrase), r.weight))
                .filter(|(ws, _)| !ws.is_empty())
                .collect(),
        }
    }

    /// Load rules from a file with one JSON record per line: `phrase`, `weight`.
    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path).map_err(|source| BackendError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut rules = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rule: LexiconRule =
                serde_json::from_str(line).map_err(|e| BackendError::LexiconParse {
                    path: path.display().to_string(),
                    line: idx + 1,
                    reason: e.to_string(),
                })?;
            rules.push(rule);
        }
        Ok(LexiconBackend::new(rules))
    }

    /// Occurrence-weighted score of the text (word-boundary phrase matches).
    pub fn score(&self, text: &str) -> f64 {
        let words = words_of(text);
        let mut total = 0.0;
        for (phrase, weight) in &self.rules {
            if phrase.len() > words.len() {
                continue;
            }
            let hits = words
                .windows(phrase.len())
                .filter(|w| *w == &phrase[..])
                .count();
            total += weight * hits as f64;
        }
        total
    }
}

impl Classifier for LexiconBackend {
    fn classify(&self, request: &ClassifierRequest) -> Result<ClassifierResponse, BackendError> {
        let query = extract_query(&request.prompt);
        let score = self.score(query);
        let label = match request.label_set {
            LabelSet::ThreeClass => {
                if score > 0.0 {
                    ItemLabel::Up
                } else if score < 0.0 {
                    ItemLabel::Down
                } else {
                    ItemLabel::Irrelevant
                }
            }
            LabelSet::TwoClass => {
                if score < 0.0 {
                    ItemLabel::Down
                } else {
                    ItemLabel::Up
                }
            }
        };
        Ok(ClassifierResponse {
            raw: format!("{label} (lexicon score {score})"),
            label,
            source: ResponseSource::Lexicon,
        })
    }

    fn name(&self) -> &'static str {
        "lexicon"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompting::LabelSet;

    fn backend() -> LexiconBackend {
        LexiconBackend::new([
            LexiconRule { phrase: "fall".into(), weight: -2.0 },
            LexiconRule { phrase: "bull over".into(), weight: -2.0 },
            LexiconRule { phrase: "raising".into(), weight: 2.0 },
            LexiconRule { phrase: "surplus climbs".into(), weight: 2.0 },
        ])
    }

    fn req(query: &str, set: LabelSet) -> ClassifierRequest {
        ClassifierRequest::new("lex", 0.0, format!("instr\n\nTitle: {query}\nLabel:"), set).unwrap()
    }

    #[test]
    fn down_keyword_classifies_down() {
        let resp = backend()
            .classify(&req(
                "Australia banks fall most in year as investors sell out of rally.",
                LabelSet::ThreeClass,
            ))
            .unwrap();
        assert_eq!(resp.label, ItemLabel::Down);
        assert_eq!(resp.source, ResponseSource::Lexicon);
    }

    #[test]
    fn no_keyword_is_irrelevant_in_three_class() {
        let resp = backend()
            .classify(&req("Voluntourism in Bali as a family vacation.", LabelSet::ThreeClass))
            .unwrap();
        assert_eq!(resp.label, ItemLabel::Irrelevant);
    }

    #[test]
    fn no_keyword_is_up_in_two_class() {
        let resp = backend()
            .classify(&req("Voluntourism in Bali as a family vacation.", LabelSet::TwoClass))
            .unwrap();
        assert_eq!(resp.label, ItemLabel::Up);
    }

    #[test]
    fn phrase_matches_respect_word_boundaries() {
        let b = backend();
        // "falls" must not trigger the "fall" rule; "rainfall" neither.
        assert_eq!(b.score("rainfall falls on plains"), 0.0);
        assert_eq!(b.score("markets fall and fall again"), -4.0);
        assert_eq!(b.score("gross says bull over."), -2.0);
    }

    #[test]
    fn exemplars_are_ignored() {
        let b = backend();
        let prompt = "instr\n\nTitle: markets fall hard\nLabel: Down\n\nTitle: calm quiet day\nLabel:";
        let resp = b
            .classify(&ClassifierRequest::new("lex", 0.0, prompt, LabelSet::ThreeClass).unwrap())
            .unwrap();
        assert_eq!(resp.label, ItemLabel::Irrelevant);
    }
}
