use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tags::Sentence;
use crate::error::{Error, Result};

/// Leave-out split of a corpus into training, validation and the two test
/// partitions. Index lists refer to positions in the original corpus and are
/// kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub in_domain_labels: Vec<String>,
    pub left_out_labels: Vec<String>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test_in: Vec<usize>,
    pub test_out: Vec<usize>,
}

impl SplitSpec {
    /// `test_in ∪ test_out`, sorted.
    pub fn test(&self) -> Vec<usize> {
        let mut t: Vec<usize> = self.test_in.iter().chain(&self.test_out).copied().collect();
        t.sort_unstable();
        t
    }

    pub fn is_ood_label(&self, label: &str) -> bool {
        self.left_out_labels.iter().any(|l| l == label)
    }
}

/// Entity counts per semantic label over the whole corpus.
pub fn label_counts(sentences: &[Sentence]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for s in sentences {
        for e in s.entities() {
            *counts.entry(e.label).or_insert(0) += 1;
        }
    }
    counts
}

/// Leaves out the `m` labels with the fewest entities (ties broken
/// lexicographically), then splits the remaining in-domain sentences 80/10/10
/// after a seeded shuffle. Train and validation sizes are floored.
pub fn leave_out_split(sentences: &[Sentence], m: usize, seed: u64) -> Result<SplitSpec> {
    let counts = label_counts(sentences);
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    if m >= counts.len() {
        return Err(Error::InvalidParameter(format!(
            "cannot leave out {m} labels from a corpus with {} labels",
            counts.len()
        )));
    }
    let mut ranked: Vec<(&String, &usize)> = counts.iter().collect();
    ranked.sort_by(|a, b| a.1.cmp(b.1).then_with(|| a.0.cmp(b.0)));
    let left_out: BTreeSet<String> = ranked[..m].iter().map(|(l, _)| (*l).clone()).collect();
    let in_domain: Vec<String> = counts.keys().filter(|l| !left_out.contains(*l)).cloned().collect();

    let mut d_in = Vec::new();
    let mut d_out = Vec::new();
    for (i, s) in sentences.iter().enumerate() {
        if s.entities().iter().any(|e| left_out.contains(&e.label)) {
            d_out.push(i);
        } else {
            d_in.push(i);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    d_in.shuffle(&mut rng);
    let n = d_in.len();
    let n_train = n * 8 / 10;
    let n_val = n / 10;
    let mut train = d_in[..n_train].to_vec();
    let mut val = d_in[n_train..n_train + n_val].to_vec();
    let mut test_in = d_in[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test_in.sort_unstable();

    Ok(SplitSpec {
        in_domain_labels: in_domain,
        left_out_labels: left_out.into_iter().collect(),
        train,
        val,
        test_in,
        test_out: d_out,
    })
}

const SECTIONS: [&str; 4] = ["#train", "#val", "#test_in", "#test_out"];

/// Plain-text manifest: one index per line under `#train`, `#val`,
/// `#test_in` and `#test_out` headers.
pub fn write_manifest(split: &SplitSpec) -> String {
    let mut out = String::new();
    for (header, idx) in SECTIONS
        .iter()
        .zip([&split.train, &split.val, &split.test_in, &split.test_out])
    {
        out.push_str(header);
        out.push('\n');
        for i in idx {
            let _ = writeln!(out, "{i}");
        }
    }
    out
}

/// Parses the four index lists of a manifest. Label sets are not part of the
/// manifest and come back empty.
pub fn parse_manifest(text: &str) -> Result<SplitSpec> {
    let mut lists: [Vec<usize>; 4] = Default::default();
    let mut current: Option<usize> = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            current = Some(
                SECTIONS
                    .iter()
                    .position(|h| *h == line)
                    .ok_or_else(|| Error::InvalidInput(format!("manifest line {}: unknown section {line}", i + 1)))?,
            );
            continue;
        }
        let section =
            current.ok_or_else(|| Error::InvalidInput(format!("manifest line {}: index before any section", i + 1)))?;
        let idx = line
            .parse()
            .map_err(|_| Error::InvalidInput(format!("manifest line {}: bad index {line:?}", i + 1)))?;
        lists[section].push(idx);
    }
    let [train, val, test_in, test_out] = lists;
    Ok(SplitSpec {
        in_domain_labels: Vec::new(),
        left_out_labels: Vec::new(),
        train,
        val,
        test_in,
        test_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ner_data::{encode_bioes, Entity, Tag};

    fn corpus(counts: &[(&str, usize)]) -> Vec<Sentence> {
        let mut out = Vec::new();
        for (label, n) in counts {
            for _ in 0..*n {
                let tags = encode_bioes(&[Entity::new(0, 0, *label)], 2).unwrap();
                out.push(Sentence::new(vec!["x".into(), "y".into()], tags).unwrap());
            }
        }
        out.push(Sentence::new(vec!["z".into()], vec![Tag::Outside]).unwrap());
        out
    }

    #[test]
    fn lowest_count_label_is_left_out() {
        let c = corpus(&[("A", 100), ("B", 50), ("C", 10)]);
        let s = leave_out_split(&c, 1, 0).unwrap();
        assert_eq!(s.left_out_labels, vec!["C"]);
        assert_eq!(s.in_domain_labels, vec!["A", "B"]);
        assert_eq!(s.test_out.len(), 10);
    }

    #[test]
    fn ties_break_lexicographically() {
        let c = corpus(&[("B", 10), ("A", 10)]);
        assert_eq!(leave_out_split(&c, 1, 3).unwrap().left_out_labels, vec!["A"]);
    }

    #[test]
    fn m_too_large() {
        let c = corpus(&[("A", 3), ("B", 2)]);
        assert!(matches!(leave_out_split(&c, 2, 0), Err(Error::InvalidParameter(_))));
        assert!(leave_out_split(&c, 0, 0).is_err());
    }

    #[test]
    fn partitions_are_pure_and_exhaustive() {
        let c = corpus(&[("A", 57), ("B", 31), ("C", 8)]);
        let s = leave_out_split(&c, 1, 42).unwrap();
        let mut all: Vec<usize> = [&s.train, &s.val, &s.test_in, &s.test_out]
            .iter()
            .flat_map(|v| v.iter().copied())
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..c.len()).collect::<Vec<_>>());
        for &i in s.train.iter().chain(&s.val) {
            assert!(c[i].entities().iter().all(|e| !s.is_ood_label(&e.label)));
        }
        for &i in &s.test_out {
            assert!(c[i].entities().iter().any(|e| s.is_ood_label(&e.label)));
        }
        let n_in = c.len() - 8;
        assert_eq!(s.train.len(), n_in * 8 / 10);
        assert_eq!(s.val.len(), n_in / 10);
    }

    #[test]
    fn deterministic_under_seed() {
        let c = corpus(&[("A", 40), ("B", 20), ("C", 5)]);
        assert_eq!(leave_out_split(&c, 1, 9).unwrap(), leave_out_split(&c, 1, 9).unwrap());
        assert_ne!(
            leave_out_split(&c, 1, 9).unwrap().train,
            leave_out_split(&c, 1, 10).unwrap().train
        );
    }

    #[test]
    fn manifest_round_trip() {
        let c = corpus(&[("A", 12), ("B", 7), ("C", 3)]);
        let s = leave_out_split(&c, 1, 1).unwrap();
        let text = write_manifest(&s);
        assert!(text.starts_with("#train\n"));
        let back = parse_manifest(&text).unwrap();
        assert_eq!(back.train, s.train);
        assert_eq!(back.test_out, s.test_out);
        assert!(parse_manifest("3\n").is_err());
        assert!(parse_manifest("#bogus\n").is_err());
    }
}
