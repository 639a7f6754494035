//! Loss stack, alternating training schedule, recurrent batching, ablation
//! variants, and frozen-bundle prediction.

pub mod config;
pub mod losses;
pub mod predict;
pub mod train;
pub mod variant;
#[cfg(test)]
mod tests;

pub use config::{OptimizerChoice, ScheduleSegment, TrainConfig};
pub use losses::{
    cgan_loss, classifier_loss, clamp_prob, coupled_loss, coupled_total_composed,
    coupled_total_expanded, generator_objective, LossReport, StreamProbs, PROB_CLAMP,
};
pub use predict::{evaluate_split, predict_batch, predict_sequence, predict_split};
pub use train::{
    discriminator_update, forward_generators, generator_update, mean_report,
    restore_train_state, train_one_epoch, train_sequences, train_step, training_checkpoint,
    DiscriminatorMeasures, FrameBatch, StepForward, StepOutput, TrainState,
};
pub use variant::{VariantFlags, VariantId};
