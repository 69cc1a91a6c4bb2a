//! Hyperspectral woody-breast assessment pipeline.
//!
//! The crate covers every stage from raw line-scan cubes to per-pixel maps:
//!
//! - [`hsi`]: ENVI-subset cube I/O and dark/white reflectance calibration.
//! - [`preproc`]: pseudo-RGB, CIE L*a*b* masking, region partitioning, spectra tables.
//! - [`nn`]: a small dense-network engine with explicit backpropagation and Adam.
//! - [`widedeep`]: the jointly trained wide (linear) + deep (dense stack) model.
//! - [`nas`]: Gaussian-process Bayesian optimization over architecture specs.
//! - [`baselines`]: NIPALS partial least squares and the deep-only MLP.
//! - [`eval`]: k-fold cross-validation, classification/regression metrics, ANOVA.
//! - [`maps`]: class and hardness maps rendered to PNG plus pixel percentages.
//! - [`synth`]: the seeded synthetic fillet generator.
//! - [`config`]: JSON pipeline configs and run manifests.
//!
//! All randomness is derived from a single seed through named sub-streams
//! ([`rng::stream`]), so every stage is reproducible on its own.

pub mod baselines;
pub mod config;
pub mod error;
pub mod eval;
pub mod hsi;
pub mod linalg;
pub mod maps;
pub mod nas;
pub mod nn;
pub mod png_io;
pub mod preproc;
pub mod rng;
pub mod special;
pub mod synth;
pub mod widedeep;

pub use error::{Error, Result};
pub use hsi::{BandAxis, CubeKind, DataType, HyperCube, Interleave};
pub use nn::{Activation, LossKind, TrainConfig};
pub use preproc::{Mask, Normalization, Region, Severity, SpectraTable, Spectrum, SpectrumRow};
pub use widedeep::{ArchSpec, Task, WideDeepModel};
