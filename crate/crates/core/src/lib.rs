//! Two-stage convolutional pipeline for microcalcification detection and
//! segmentation in mammograms.
//!
//! A *Detector* network triages overlapping `N x N` tiles of the breast
//! region; a *Segmentator* network then classifies every pixel inside the
//! positive tiles from its centered patch. Connected components of the
//! resulting mask are grouped into clusters (more than five calcifications
//! per square centimeter).
//!
//! Everything runs on the CPU with a small hand-written network engine
//! ([`neuralcore`]), so results are bitwise reproducible from seeds.

pub mod analysis;
pub mod dataset;
pub mod error;
pub mod imaging;
pub mod netarch;
pub mod neuralcore;
pub mod pipeline;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
