//! Glioma segmentation and survival pipeline.
//!
//! Multi-modal MR volumes are intensity-standardized, segmented slice by
//! slice with an encoder-decoder network trained from scratch, cleaned with
//! 3-D connected components, summarized by first-order and shape radiomics,
//! and fed to a gradient-boosted tree regressor that predicts survival.

// `!(x > 0.0)` style checks are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod postprocess;
pub mod preprocess;
pub mod radiomics;
pub mod survival;
pub mod synthetic;
pub mod tensor;
pub mod training;
pub mod volume_io;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor4};
pub use volume_io::{Modality, SegmentationVolume, Study, Volume};
