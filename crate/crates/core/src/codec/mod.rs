//! Transforms, loss, training and the compress/decompress pipeline.

mod config;
mod data;
mod loss;
mod model;
mod optim;
mod pipeline;
mod schedule;
mod train;
pub mod weights;

pub use config::{
    ModelConfig, TrainConfig, REFERENCE_BATCH, REFERENCE_CHANNELS_HIGH_RATE, REFERENCE_CHANNELS_LOW_RATE,
    REFERENCE_CROP, REFERENCE_LAMBDAS, REFERENCE_LR_INIT,
};
pub use data::{center_crop, crop, crop_to, pad_replicate, random_crop_flip, Dataset};
pub use loss::{rd_loss, RdTerms, PEAK};
pub use model::{Model, IMAGE_CHANNELS};
pub use optim::Adam;
pub use pipeline::{compress, decode_symbols, decompress, reconstruct, Compressed};
pub use schedule::{Plateau, PlateauEvent};
pub use train::{eval_loss, noise_seed, train, train_with, validation_loss, EpochLog, TrainReport};
pub use weights::{LoadedWeights, WEIGHTS_MAGIC, WEIGHTS_VERSION};
