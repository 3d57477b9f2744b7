//! Loss assembly, SGD, augmentation, the synthetic dataset and the training loop.

pub mod augment;
pub mod loss;
pub mod optim;
pub mod sample;
pub mod synth;
pub mod trainer;

pub use augment::{augment, AugmentDraw, AugmentParams};
pub use loss::{total_loss, LossBreakdown, LossGraph, LossOptions, BCE_EPS};
pub use optim::Sgd;
pub use sample::{Sample, SampleBatch};
pub use synth::{sample_seed, synth_dataset, synth_sample, Contrast};
pub use trainer::{
    derive_seed, evaluate_model, final_checkpoint, init_model, predict, train_loop, train_step, Prediction,
    TrainConfig, TrainOutcome,
};
