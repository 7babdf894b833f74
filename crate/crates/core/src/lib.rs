//! Wafer dicing inspection with stacked classifiers: synthetic wafer
//! generation, classical localization of chips and dicing streets,
//! from-scratch convolutional networks, baseline classifiers, the staged
//! inspection pipeline, evaluation protocol and wafer-map output.

pub mod augment;
pub mod baselines;
pub mod config;
pub mod error;
pub mod eval;
pub mod image;
pub mod imgproc;
pub mod label;
pub mod localization;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod synthwafer;
pub mod wafermap;

pub use augment::AugmentationLevel;
pub use error::{Error, Result, Stage};
pub use image::{BinaryImage, GrayImage};
pub use label::{ChipIndex, ChipPosition, Label, Orientation, StreetIndex};
pub use pipeline::WaferVerdict;
pub use synthwafer::WaferLayout;
