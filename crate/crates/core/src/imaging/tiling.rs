use super::image::GrayImage;
use crate::error::{Error, Result};

/// Overlapping `N x N` tiles with stride `floor(N/2)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileGrid {
    pub patch_size: usize,
    pub stride: usize,
    /// Top-left corners `(x, y)`, row-major.
    pub origins: Vec<(usize, usize)>,
}

/// Positions `0, s, 2s, ...` that fit inside `extent`, plus a final position
/// clamped so the last window touches the border.
pub fn axis_origins(extent: usize, window: usize, stride: usize) -> Vec<usize> {
    let last = extent - window;
    let mut v: Vec<usize> = (0..=last).step_by(stride.max(1)).collect();
    if v.last() != Some(&last) {
        v.push(last);
    }
    v
}

pub fn tile_image(image: &GrayImage, patch_size: usize) -> Result<TileGrid> {
    tile_extent(image.width(), image.height(), patch_size)
}

pub fn tile_extent(width: usize, height: usize, patch_size: usize) -> Result<TileGrid> {
    if patch_size == 0 || patch_size > width.min(height) {
        return Err(Error::invalid(format!(
            "patch size {patch_size} does not fit a {width}x{height} image"
        )));
    }
    let stride = (patch_size / 2).max(1);
    let xs = axis_origins(width, patch_size, stride);
    let ys = axis_origins(height, patch_size, stride);
    let origins = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
    Ok(TileGrid {
        patch_size,
        stride,
        origins,
    })
}
