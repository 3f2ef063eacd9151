use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tags::{Sentence, Tag};
use crate::error::{Error, Result};

pub const UNK_TOKEN: &str = "<unk>";

/// Token surface forms to dense ids. Id 0 is reserved for unknown tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    pub fn build<'a>(sentences: impl IntoIterator<Item = &'a Sentence>) -> Self {
        let mut seen = std::collections::BTreeSet::new();
        for s in sentences {
            for t in &s.tokens {
                seen.insert(t.clone());
            }
        }
        let mut tokens = vec![UNK_TOKEN.to_string()];
        tokens.extend(seen.into_iter().filter(|t| t != UNK_TOKEN));
        Self::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }

    /// Restores the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }
}

/// The BIOES class set over a list of semantic labels: `O` first, then
/// `B`, `I`, `E`, `S` for each label in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSet {
    labels: Vec<String>,
    tags: Vec<Tag>,
}

impl TagSet {
    pub fn new(labels: &[String]) -> Self {
        let mut tags = vec![Tag::Outside];
        for l in labels {
            tags.push(Tag::Begin(l.clone()));
            tags.push(Tag::Inside(l.clone()));
            tags.push(Tag::End(l.clone()));
            tags.push(Tag::Single(l.clone()));
        }
        Self {
            labels: labels.to_vec(),
            tags,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.tags.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn tag(&self, class: usize) -> &Tag {
        &self.tags[class]
    }

    pub fn class_of(&self, tag: &Tag) -> Result<usize> {
        self.tags
            .iter()
            .position(|t| t == tag)
            .ok_or_else(|| Error::InvalidInput(format!("tag {tag} is not in the tag set")))
    }

    pub fn classes(&self, tags: &[Tag]) -> Result<Vec<usize>> {
        tags.iter().map(|t| self.class_of(t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_tokens_map_to_zero() {
        let s = Sentence::new(vec!["b".into(), "a".into()], vec![Tag::Outside; 2]).unwrap();
        let v = Vocabulary::build([&s]);
        assert_eq!(v.len(), 3);
        assert_eq!(v.id("a"), 1);
        assert_eq!(v.id("zzz"), 0);
        assert_eq!(v.token(0), Some(UNK_TOKEN));
    }

    #[test]
    fn tagset_layout() {
        let ts = TagSet::new(&["LOC".into(), "PER".into()]);
        assert_eq!(ts.num_classes(), 9);
        assert_eq!(ts.class_of(&Tag::Outside).unwrap(), 0);
        assert_eq!(ts.class_of(&Tag::Single("PER".into())).unwrap(), 8);
        assert!(ts.class_of(&Tag::Single("ORG".into())).is_err());
    }
}
