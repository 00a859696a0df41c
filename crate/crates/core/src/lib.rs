//! Semi-supervised sound event detection at desk scale.
//!
//! The crate covers the full pipeline: synthetic dataset generation, log-mel
//! feature extraction, temporal-frequency augmentation, a pyramid
//! squeeze-excitation CRNN with hand-verified gradients, mean-teacher training
//! under composition consistency (CCT) and multi-hot MixMatch (M3) objectives,
//! median-filter event decoding, and collar-based event F-score evaluation.

pub mod augment;
pub mod error;
pub mod features;
pub mod model;
pub mod data;
pub mod evaluation;
pub mod postprocess;
pub mod rng;

pub use error::{Result, SedError};
