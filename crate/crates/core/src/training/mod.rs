//! Training under the evidential loss, prediction, the MC-dropout baseline,
//! finite-difference gradient auditing and checkpoints.

mod checkpoint;
mod config;
mod gradcheck;
mod network;
mod optim;
mod predict;
mod train;

pub use checkpoint::{
    checkpoint_from_str, checkpoint_to_string, load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use config::{ModelConfig, ModelVariant, TrainingConfig};
pub use gradcheck::{gradient_check, relative_error, GradientAudit, FD_STEP, RELATIVE_ERROR_FLOOR};
pub use network::{slpn_loss, ForwardSpec, Network, SentenceInput, SoftmaxHead, Trace};
pub use optim::Adam;
pub use predict::{mc_decompose, mc_dropout_predict, predict, McPrediction, TokenPrediction};
pub use train::{train, CorpusInfo, Dataset, ModelState, TrainingMetadata};
