//! Face recognition over fused visual/thermal imagery.
//!
//! The pipeline has four stages, each in its own module:
//!
//! 1. [`fusion`] blends a registered visual/thermal pair pixel by pixel with
//!    convex weights (visual 0.70, thermal 0.30 by default).
//! 2. [`eigenspace`] builds an eigenface basis from the fused training images
//!    with the snapshot (Gram matrix) method and projects images into it.
//! 3. [`mlp`] classifies the projected coordinates with a sigmoid multilayer
//!    perceptron trained by online backpropagation with momentum.
//! 4. [`eval`] runs the train/test protocol end to end and produces a
//!    recognition report with a confusion matrix.
//!
//! [`imageio`] holds the shared raster type plus PGM and manifest I/O, and
//! [`linalg`] the symmetric eigensolver used by the eigenspace stage.

pub mod eigenspace;
pub mod eval;
pub mod fusion;
pub mod imageio;
pub mod linalg;
pub mod mlp;

mod codec;

pub use eigenspace::{EigenError, Eigenspace, FeatureVector};
pub use eval::{EvalError, EvalReport, ProtocolConfig, SynthConfig};
pub use fusion::{FusedEntry, FusedManifest, FusionError, FusionWeights};
pub use imageio::{
    DatasetManifest, GrayImage, ImageDims, ImageError, ManifestEntry, PixelVector, Split,
};
pub use linalg::{Matrix, SymmetricEigen};
pub use mlp::{Hyperparameters, InputScaler, MlpError, MlpModel, TrainingHistory};
