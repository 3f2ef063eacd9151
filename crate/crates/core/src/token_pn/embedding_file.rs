//! Line-oriented file of precomputed contextual embeddings.
//!
//! Each line is `token_id v_1 … v_d` (whitespace separated, decimal reals);
//! a blank line ends a sentence. All vectors in a file share one width.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ContextualSentence {
    pub token_ids: Vec<usize>,
    pub embeddings: Array2<f64>,
}

pub fn parse_embedding_file(text: &str, origin: impl AsRef<Path>) -> Result<Vec<ContextualSentence>> {
    let origin = origin.as_ref();
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut width: Option<usize> = None;
    let mut out = Vec::new();
    let mut ids = Vec::new();
    let mut values = Vec::new();
    let flush =
        |ids: &mut Vec<usize>, values: &mut Vec<f64>, width: Option<usize>, out: &mut Vec<ContextualSentence>| {
            if ids.is_empty() {
                return;
            }
            let d = width.expect("width known once a row was read");
            let embeddings =
                Array2::from_shape_vec((ids.len(), d), std::mem::take(values)).expect("rows have equal width");
            out.push(ContextualSentence {
                token_ids: std::mem::take(ids),
                embeddings,
            });
        };
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() {
            flush(&mut ids, &mut values, width, &mut out);
            continue;
        }
        let mut fields = line.split_whitespace();
        let id: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| err(lineno, "expected a token id".into()))?;
        let row: Vec<f64> = fields
            .map(|f| f.parse::<f64>().map_err(|_| err(lineno, format!("bad number {f:?}"))))
            .collect::<Result<_>>()?;
        if row.is_empty() {
            return Err(err(lineno, "token without embedding values".into()));
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(err(lineno, "non-finite embedding value".into()));
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(err(lineno, format!("expected {w} values, found {}", row.len())));
            }
            _ => {}
        }
        ids.push(id);
        values.extend(row);
    }
    flush(&mut ids, &mut values, width, &mut out);
    if out.is_empty() {
        return Err(err(0, "no embeddings found".into()));
    }
    Ok(out)
}

pub fn write_embedding_file(sentences: &[ContextualSentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        for (id, row) in s.token_ids.iter().zip(s.embeddings.rows()) {
            let _ = write!(out, "{id}");
            for v in row {
                let _ = write!(out, " {v:?}");
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn parses_two_sentences() {
        let text = "3 0.5 -1\n4 1e-3 2.25\n\n7 0 0\n";
        let s = parse_embedding_file(text, "emb.txt").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].token_ids, vec![3, 4]);
        assert_eq!(s[0].embeddings, array![[0.5, -1.0], [1e-3, 2.25]]);
        assert_eq!(s[1].embeddings.dim(), (1, 2));
    }

    #[test]
    fn rejects_ragged_rows() {
        let e = parse_embedding_file("1 0.1 0.2\n2 0.3\n", "emb.txt").unwrap_err();
        assert!(e.to_string().contains("emb.txt:2"));
        assert!(parse_embedding_file("x 0.1\n", "e").is_err());
        assert!(parse_embedding_file("1\n", "e").is_err());
        assert!(parse_embedding_file("\n", "e").is_err());
    }

    #[test]
    fn write_parse_is_bitwise() {
        let s = vec![ContextualSentence {
            token_ids: vec![1, 2],
            embeddings: array![[0.1 + 0.2, -1.0 / 3.0], [1e-300, 12345.678]],
        }];
        assert_eq!(parse_embedding_file(&write_embedding_file(&s), "e").unwrap(), s);
    }
}
