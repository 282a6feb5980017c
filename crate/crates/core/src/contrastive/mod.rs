//! Contrastive pre-training: InfoNCE loss, MLP encoders with manual
//! backprop, optimizers, and the training loop with its positive-pair
//! policies.

mod encoder;
mod loss;
mod train;

pub use encoder::{Activation, EncoderGradients, ForwardTrace, MlpEncoder};
pub use loss::{infonce_batch, infonce_loss, InfoNceConfig};
pub use train::{
    embed, infonce_gradient, train_encoder, ContrastiveBatch, OptimizerKind, PositivePairPolicy,
    TrainConfig, TrainReport, TrainingSet,
};
