//! The strong learner: a frame-level neural scorer over backend features,
//! conditioned on listener, domain and phoneme context.

mod checkpoint;
mod config;
mod model;
mod train;

pub use crate::backend::FrameFeatures;
pub use crate::losses::make_frame_targets;
pub use checkpoint::{StrongCheckpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{lr_schedule, HeadConfig, OptimizerConfig, PhonemeEncoderConfig, StrongConfig};
pub use model::{ModelInput, StrongModel, Vocabulary};
pub use train::{
    join_text, train_strong, utterance_score, EvalRecord, PhonemeContext, StrongCorpus,
};
