//! Trainable BiLSTM sequence labeler with exact gradients.

mod bilstm;
mod gradcheck;
mod io;
mod matrix;
mod params;

pub use bilstm::{
    backward, forward, predict_word_labels, stable_softmax, DirectionTrace, ForwardTrace,
};
pub use gradcheck::{finite_difference_check, loss_at, loss_difference};
pub use io::{
    checkpoint_bytes, hyperparameters_from, load_checkpoint, load_external_features,
    parse_checkpoint, save_checkpoint, FeatureStore, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
    FEATURE_MAGIC, FEATURE_VERSION,
};
pub use matrix::Matrix;
pub use params::{
    init_parameters, FeatureMode, Hyperparameters, LstmWeights, Parameters, TENSOR_NAMES,
};
