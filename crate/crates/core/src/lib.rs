//! EEG-to-visual-saliency pipeline.
//!
//! The crate turns multi-channel EEG recorded during free picture viewing
//! into saliency maps of the viewed image. The stages, in data order:
//!
//! 1. [`signal`]: trial segmentation, low-pass filtering, decimation.
//! 2. [`montage`] and [`interp`]: electrode geometry and scattered-data
//!    interpolation used to picture each EEG sample on a 2-D grid.
//! 3. [`imaging`]: EEG-image assembly ("EEG movies" of interpolated frames).
//! 4. [`saliency`]: gaze rasterization into blurred fixation-density maps.
//! 5. [`nn`] and [`models`]: a small f64 layer library and the two VAEs,
//!    the latent translator and the discriminator built from it.
//! 6. [`train`]: the three-phase schedule (two VAE phases, then an
//!    adversarial phase that trains the translator between the frozen
//!    latent spaces) and cross-validated evaluation.
//! 7. [`metrics`]: AUC, normalized scanpath saliency, correlation.
//! 8. [`data`] and [`checkpoint`]: dataset layout, synthetic data,
//!    parameter persistence.
//!
//! Everything is deterministic given the seeds in the configuration:
//! reruns produce bit-identical parameters, logs and metrics.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod imaging;
pub mod interp;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod montage;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod saliency;
pub mod signal;
pub mod train;

pub use ndarray;

pub use config::{
    ArchPreset, ExperimentConfig, ModelConfig, PipelineConfig, SyntheticConfig, TrainConfig,
    TrainPhase, UpsampleMode,
};
pub use error::{Error, Result};
pub use imaging::{EEGImage, NormStats, Rasterizer};
pub use montage::MontageGeometry;
pub use saliency::SaliencyMap;
pub use signal::{GazePoint, RawRecording, Trial};
