//! Token-level posterior network: per-token categorical priors, the latent
//! encoder, class-wise radial flows and the pseudo-evidence counts
//! `β_ik = N · P(z_i | k) · P(k | token_i)`.

mod embedding_file;
mod encoder;
mod evidence;
mod flow;
mod priors;

pub use embedding_file::{parse_embedding_file, write_embedding_file, ContextualSentence};
pub use encoder::{BiRnn, BiRnnCache, Embedding, LatentMlp, LatentMlpCache, RnnCell};
pub use evidence::{beta_post, beta_post_matrix, EvidenceMatrix};
pub use flow::{RadialFlowStack, RadialTransform};
pub use priors::{build_token_priors, LabeledSequence, TokenPriorTable};
