//! Corpus ingestion, the BIOES tag codec, synthetic corpora and the
//! leave-out OOD split.

mod conll;
mod split;
mod synthetic;
mod tags;
mod vocab;

pub use conll::{parse_conll, parse_conll_str, write_conll};
pub use split::{label_counts, leave_out_split, parse_manifest, write_manifest, SplitSpec};
pub use synthetic::{generate_synthetic_corpus, SyntheticHints, SyntheticSpec};
pub use tags::{decode_bioes, encode_bioes, Entity, Sentence, Tag};
pub use vocab::{TagSet, Vocabulary, UNK_TOKEN};
