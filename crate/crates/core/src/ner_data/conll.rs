//! Two-column CoNLL-style files: `token<whitespace>tag` per line, blank line
//! between sentences. Extra middle columns are ignored; the tag is the last
//! field.

use std::fmt::Write as _;
use std::path::Path;

use super::tags::{Sentence, Tag};
use crate::error::{Error, Result};

pub fn parse_conll(path: impl AsRef<Path>) -> Result<Vec<Sentence>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conll_str(&text, path)
}

pub fn parse_conll_str(text: &str, origin: impl AsRef<Path>) -> Result<Vec<Sentence>> {
    let origin = origin.as_ref();
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };

    let mut sentences = Vec::new();
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.starts_with("-DOCSTART-") {
            continue;
        }
        if line.is_empty() {
            if !tokens.is_empty() {
                sentences.push(Sentence {
                    tokens: std::mem::take(&mut tokens),
                    tags: std::mem::take(&mut tags),
                });
            }
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 2 {
            return Err(err(lineno, format!("expected `token tag`, found {line:?}")));
        }
        let tag: Tag = fields[fields.len() - 1]
            .parse()
            .map_err(|e: Error| err(lineno, e.to_string()))?;
        tokens.push(fields[0].to_string());
        tags.push(tag);
    }
    if !tokens.is_empty() {
        sentences.push(Sentence { tokens, tags });
    }
    if sentences.is_empty() {
        return Err(err(0, "file contains no sentences".into()));
    }
    Ok(sentences)
}

pub fn write_conll(sentences: &[Sentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        for (tok, tag) in s.tokens.iter().zip(&s.tags) {
            let _ = writeln!(out, "{tok}\t{tag}");
        }
        out.push('\n');
    }
    out
}
