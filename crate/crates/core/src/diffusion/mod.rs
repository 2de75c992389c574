//! Conditional denoising diffusion: schedule, noise predictor, training and sampling.

mod denoiser;
mod process;
mod schedule;

pub use denoiser::{Denoiser, DenoiserConfig, ForwardCache};
pub use process::{
    loss_eps, masked_mse, p_sample_loop, q_sample, train_denoiser, NoisePredictor, TrainConfig, TrainingExample,
};
pub use schedule::{make_linear_schedule, NoiseSchedule};
