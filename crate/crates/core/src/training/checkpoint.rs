use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::ModelState;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "slpn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<M> {
    format: String,
    version: u32,
    model: M,
}

/// Serializes a model; floats round-trip bitwise.
pub fn checkpoint_to_string(model: &ModelState) -> Result<String> {
    let env = Envelope {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        model,
    };
    Ok(serde_json::to_string(&env)?)
}

pub fn checkpoint_from_str(text: &str) -> Result<ModelState> {
    #[derive(Deserialize)]
    struct Header {
        format: String,
        version: u32,
    }
    let header: Header = serde_json::from_str(text)?;
    if header.format != CHECKPOINT_FORMAT || header.version != CHECKPOINT_VERSION {
        return Err(Error::SchemaMismatch {
            expected: format!("{CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION}"),
            found: format!("{} v{}", header.format, header.version),
        });
    }
    let env: Envelope<ModelState> = serde_json::from_str(text)?;
    let mut model = env.model;
    model.priors.rebuild_cache();
    if let Some(corpus) = &mut model.corpus {
        corpus.vocabulary.reindex();
    }
    Ok(model)
}

pub fn save_checkpoint(model: &ModelState, path: &Path) -> Result<()> {
    fs::write(path, checkpoint_to_string(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelState> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_str(&text)
}
