//! Geometric core of supervised face-cartoon generation.
//!
//! A coarse `(dx, dy)` warp field is bilinearly upsampled to image resolution
//! and applied to a portrait by differentiable bilinear resampling. The crate
//! provides the warp engine with analytic gradients, the training losses,
//! recovery of ground-truth fields from image pairs, a small trainable field
//! predictor, and paired-data handling.

pub mod dataset;
pub mod error;
pub mod field;
pub mod fit;
pub mod image;
pub mod losses;
pub mod optim;
pub mod perceiver;
pub mod warp;

pub use dataset::{load_dataset, synth_dataset, FieldStyle, PairedSample, SynthConfig};
pub use error::{Error, Result};
pub use field::{
    hflip_field, load_field, save_field, scale_field, upsample, visualize_field, zero_field,
    CoarseField, DenseField, UpsamplePlan, WarpField,
};
pub use fit::{fit_dataset, fit_field, FitConfig, FitOutcome};
pub use image::ImageBuffer;
pub use losses::{recon_loss, smooth_loss, total_loss, warp_field_loss, LossReport, LossWeights};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use perceiver::{
    infer, perceiver_backward, perceiver_forward, train, TinyPerceiver, TrainConfig,
};
pub use warp::{sample_bilinear, warp, warp_backward, WarpGradients};
