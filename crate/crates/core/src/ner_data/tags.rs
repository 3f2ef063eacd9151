use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One BIOES tag.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    Outside,
    Begin(String),
    Inside(String),
    End(String),
    Single(String),
}

impl Tag {
    pub fn label(&self) -> Option<&str> {
        match self {
            Tag::Outside => None,
            Tag::Begin(l) | Tag::Inside(l) | Tag::End(l) | Tag::Single(l) => Some(l),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Outside => f.write_str("O"),
            Tag::Begin(l) => write!(f, "B-{l}"),
            Tag::Inside(l) => write!(f, "I-{l}"),
            Tag::End(l) => write!(f, "E-{l}"),
            Tag::Single(l) => write!(f, "S-{l}"),
        }
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "O" {
            return Ok(Tag::Outside);
        }
        let bad = || Error::InvalidInput(format!("tag {s:?} is not O or [BIES]-LABEL"));
        let (prefix, label) = s.split_once('-').ok_or_else(bad)?;
        if label.is_empty() || label.chars().any(char::is_whitespace) {
            return Err(bad());
        }
        let label = label.to_string();
        match prefix {
            "B" => Ok(Tag::Begin(label)),
            "I" => Ok(Tag::Inside(label)),
            "E" => Ok(Tag::End(label)),
            "S" => Ok(Tag::Single(label)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for Tag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A tagged sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub tags: Vec<Tag>,
}

impl Sentence {
    pub fn new(tokens: Vec<String>, tags: Vec<Tag>) -> Result<Self> {
        if tokens.is_empty() || tokens.len() != tags.len() {
            return Err(Error::InvalidInput(format!(
                "sentence needs matching non-empty tokens and tags ({} vs {})",
                tokens.len(),
                tags.len()
            )));
        }
        Ok(Self { tokens, tags })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn entities(&self) -> Vec<Entity> {
        decode_bioes(&self.tags)
    }
}

/// A labeled span with inclusive bounds.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Entity {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl Entity {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        Self {
            start,
            end,
            label: label.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlaps(&self, other: &Entity) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

/// Conservative BIOES decoding: only complete `S-X` or `B-X (I-X)* E-X`
/// patterns become entities, anything else is dropped.
pub fn decode_bioes(tags: &[Tag]) -> Vec<Entity> {
    let mut out = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    for (i, tag) in tags.iter().enumerate() {
        open = match tag {
            Tag::Outside => None,
            Tag::Single(l) => {
                out.push(Entity::new(i, i, l.clone()));
                None
            }
            Tag::Begin(l) => Some((i, l.as_str())),
            Tag::Inside(l) => match open {
                Some((s, ol)) if ol == l => Some((s, ol)),
                _ => None,
            },
            Tag::End(l) => {
                if let Some((s, ol)) = open {
                    if ol == l {
                        out.push(Entity::new(s, i, l.clone()));
                    }
                }
                None
            }
        };
    }
    out
}

/// Inverse of [`decode_bioes`] on non-overlapping, in-bounds entities.
pub fn encode_bioes(entities: &[Entity], length: usize) -> Result<Vec<Tag>> {
    let mut tags = vec![Tag::Outside; length];
    let mut sorted: Vec<&Entity> = entities.iter().collect();
    sorted.sort();
    for (i, e) in sorted.iter().enumerate() {
        if e.start > e.end || e.end >= length {
            return Err(Error::InvalidInput(format!(
                "entity {e:?} out of bounds for length {length}"
            )));
        }
        if i > 0 && sorted[i - 1].overlaps(e) {
            return Err(Error::InvalidInput(format!(
                "entities {:?} and {e:?} overlap",
                sorted[i - 1]
            )));
        }
        if e.start == e.end {
            tags[e.start] = Tag::Single(e.label.clone());
        } else {
            tags[e.start] = Tag::Begin(e.label.clone());
            for t in &mut tags[e.start + 1..e.end] {
                *t = Tag::Inside(e.label.clone());
            }
            tags[e.end] = Tag::End(e.label.clone());
        }
    }
    Ok(tags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tags(xs: &[&str]) -> Vec<Tag> {
        xs.iter().map(|t| t.parse().unwrap()).collect()
    }

    #[test]
    fn tag_grammar() {
        assert_eq!("S-LOC".parse::<Tag>().unwrap(), Tag::Single("LOC".into()));
        assert_eq!("O".parse::<Tag>().unwrap(), Tag::Outside);
        assert!("Q-LOC".parse::<Tag>().is_err());
        assert!("B-".parse::<Tag>().is_err());
        assert!("LOC".parse::<Tag>().is_err());
        assert_eq!(Tag::Inside("ORG".into()).to_string(), "I-ORG");
    }

    #[test]
    fn decode_examples() {
        assert_eq!(
            decode_bioes(&tags(&["B-PER", "E-PER", "O", "S-LOC"])),
            vec![Entity::new(0, 1, "PER"), Entity::new(3, 3, "LOC")]
        );
        assert!(decode_bioes(&tags(&["I-PER", "E-PER"])).is_empty());
        assert!(decode_bioes(&tags(&["B-PER", "I-LOC", "E-PER"])).is_empty());
    }

    #[test]
    fn decode_drops_dangling_spans() {
        assert!(decode_bioes(&tags(&["B-PER", "O"])).is_empty());
        assert!(decode_bioes(&tags(&["B-PER", "I-PER"])).is_empty());
        assert_eq!(
            decode_bioes(&tags(&["B-PER", "B-LOC", "E-LOC"])),
            vec![Entity::new(1, 2, "LOC")]
        );
        assert_eq!(
            decode_bioes(&tags(&["B-PER", "S-LOC", "E-PER"])),
            vec![Entity::new(1, 1, "LOC")]
        );
    }

    #[test]
    fn encode_examples() {
        assert_eq!(
            encode_bioes(&[Entity::new(0, 0, "LOC")], 2).unwrap(),
            tags(&["S-LOC", "O"])
        );
        assert_eq!(encode_bioes(&[], 3).unwrap(), tags(&["O", "O", "O"]));
        assert_eq!(
            encode_bioes(&[Entity::new(1, 3, "X")], 4).unwrap(),
            tags(&["O", "B-X", "I-X", "E-X"])
        );
        assert!(encode_bioes(&[Entity::new(0, 1, "A"), Entity::new(1, 2, "B")], 3).is_err());
        assert!(encode_bioes(&[Entity::new(2, 3, "A")], 3).is_err());
    }

    fn entity_sets() -> impl Strategy<Value = (Vec<Entity>, usize)> {
        // Gap/length pairs laid out left to right give non-overlapping spans.
        (
            proptest::collection::vec((0usize..3, 1usize..4, 0usize..3), 0..6),
            0usize..3,
        )
            .prop_map(|(spans, tail)| {
                let labels = ["PER", "LOC", "ORG"];
                let mut pos = 0;
                let mut out = Vec::new();
                for (gap, len, l) in spans {
                    pos += gap;
                    out.push(Entity::new(pos, pos + len - 1, labels[l]));
                    pos += len;
                }
                (out, pos + tail)
            })
            .prop_filter("non-empty sentence", |(_, n)| *n > 0)
    }

    proptest! {
        #[test]
        fn decode_inverts_encode((entities, n) in entity_sets()) {
            let encoded = encode_bioes(&entities, n).unwrap();
            prop_assert_eq!(decode_bioes(&encoded), entities);
        }

        #[test]
        fn decoded_entities_are_within_bounds(raw in proptest::collection::vec(0usize..9, 1..20)) {
            let alphabet = ["O", "B-A", "I-A", "E-A", "S-A", "B-B", "I-B", "E-B", "S-B"];
            let t: Vec<Tag> = raw.iter().map(|&i| alphabet[i].parse().unwrap()).collect();
            let ents = decode_bioes(&t);
            for w in ents.windows(2) {
                prop_assert!(w[0].end < w[1].start);
            }
            for e in &ents {
                prop_assert!(e.start <= e.end && e.end < t.len());
            }
            // Re-encoding the decoded spans and decoding again is stable.
            let again = decode_bioes(&encode_bioes(&ents, t.len()).unwrap());
            prop_assert_eq!(again, ents);
        }
    }
}
