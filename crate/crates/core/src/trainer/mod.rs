//! Joint training of the classifier encoder and its partner encoder.

pub mod bank;
pub mod fit;
pub mod loss;
pub mod model;

pub use bank::{BankEntry, MemoryBank};
pub use fit::{
    build_objective, evaluate, fit, make_views, EpochRecord, Evaluation, FitResult, LossReport, Objective, StepBatch,
    TrainConfig, Trainer, View,
};
pub use model::{ClassifierParams, Encoder, EncoderKind, Model, ModelSpec, Variant};
