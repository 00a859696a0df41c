//! PSE-CRNN model: architecture, parameters, forward/backward, checkpoints.

pub mod checkpoint;
pub mod config;
pub mod gru;
pub mod ops;
pub mod params;
pub mod real;

mod network;

pub use checkpoint::{load as load_checkpoint, save as save_checkpoint, Checkpoint};
pub use config::ArchitectureConfig;
pub use network::{
    backward, forward, forward_training, pyramid_conv, se_gated_conv_layer, strong_head,
    weak_head, ForwardCache, Predictions,
};
pub use params::ModelParams;
pub use real::Real;
