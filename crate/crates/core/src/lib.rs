//! Evidential sequence labeling.
//!
//! A token-level posterior network turns contextual token embeddings into
//! per-class Dirichlet evidence through class-wise radial flows; a revised
//! self-attention then transmits evidence between the tokens of a sentence.
//! The crate also carries the NER data pipeline and the entity-level
//! OOD / wrong-span evaluation protocol.

pub mod error;
pub mod evaluation;
pub mod evidential;
pub mod ner_data;
pub mod params;
pub mod special;
pub mod token_pn;
pub mod training;
pub mod transmission;

pub use error::{Error, Result};
pub use evidential::{DirichletParams, ProbabilityVector, UncertaintyReport};
