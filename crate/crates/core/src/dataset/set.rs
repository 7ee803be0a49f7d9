use std::path::Path;

use super::index::{build_patch_index, LabeledImage, PatchIndex, SamplingConfig};
use super::sampler::{sample_minibatch, Minibatch};
use super::taxonomy::Target;
use crate::error::Result;
use crate::imaging::{read_pgm, GrayImage};

/// A patch index together with the images its records point into.
#[derive(Debug, Clone)]
pub struct PatchSet {
    pub index: PatchIndex,
    pub images: Vec<GrayImage>,
}

impl PatchSet {
    pub fn build(images: &[LabeledImage], n: usize, config: SamplingConfig, seed: u64) -> Result<Self> {
        Ok(Self {
            index: build_patch_index(images, n, config, seed)?,
            images: images.iter().map(|li| li.image.clone()).collect(),
        })
    }

    /// Loads an index and reads every image its manifest lists.
    pub fn load(index_path: impl AsRef<Path>, manifest_path: impl AsRef<Path>) -> Result<Self> {
        let index = PatchIndex::load(index_path, manifest_path)?;
        let images = index
            .manifest
            .iter()
            .map(|e| read_pgm(&e.image_path))
            .collect::<Result<_>>()?;
        Ok(Self { index, images })
    }

    pub fn patch_size(&self) -> usize {
        self.index.patch_size
    }

    pub fn minibatch(&self, target: Target, b: usize, seed: u64) -> Result<Minibatch> {
        sample_minibatch(&self.index, &self.images, target, b, seed)
    }
}
