//! Forward noising processes, schedules estimated from search sequences,
//! and denoiser training.

mod data;
mod denoiser;
mod schedule;

pub use data::{binarize_table, bits_to_table, fit_schedule, fit_schedule_from_sequences, prepare_sequences, PreparedData, Standardizer};
pub use denoiser::{t_embedding, train_denoiser, train_denoiser_checkpoints, Denoiser, DenoiserConfig, TrainingSet, T_EMBED_DIM};
pub use schedule::{
    bernoulli_posterior, forward_sample_continuous, forward_sample_discrete, forward_step_continuous, forward_step_discrete,
    isotonic_nondecreasing, make_schedule, NoiseSchedule, ScheduleKind, ScheduleShape, BETA_CEIL, BETA_FLOOR,
};
