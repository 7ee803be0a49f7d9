use crate::error::{Error, Result};
use crate::imaging::{BinaryMask, ClusterReport, GrayImage, RgbImage};

/// Color mask pixels are blended toward.
pub const MC_TINT: [u8; 3] = [255, 32, 32];
/// Cluster box outline color.
pub const CLUSTER_BOX: [u8; 3] = [255, 230, 0];

/// Grayscale base, mask pixels tinted red, cluster boxes outlined in yellow.
pub fn render_overlay(image: &GrayImage, mask: &BinaryMask, report: &ClusterReport) -> Result<RgbImage> {
    if !mask.same_size(image) {
        return Err(Error::Dimension(format!(
            "mask is {}x{}, image is {}x{}",
            mask.width(),
            mask.height(),
            image.width(),
            image.height()
        )));
    }
    let (w, h) = (image.width(), image.height());
    let full = image.maxval() as u32;
    let pixels = image
        .pixels()
        .iter()
        .zip(mask.bits())
        .map(|(&p, &on)| {
            let g = ((p as u32 * 255 + full / 2) / full) as u8;
            if on {
                MC_TINT.map(|t| ((t as u16 * 3 + g as u16) / 4) as u8)
            } else {
                [g; 3]
            }
        })
        .collect();
    let mut out = RgbImage::from_pixels(w, h, pixels)?;
    for c in &report.clusters {
        let (x0, y0, x1, y1) = c.bbox;
        let clamp_x = |v: f64| (v.max(0.0) as usize).min(w - 1);
        let clamp_y = |v: f64| (v.max(0.0) as usize).min(h - 1);
        let (x0, x1) = (clamp_x(x0.floor()), clamp_x(x1.ceil()));
        let (y0, y1) = (clamp_y(y0.floor()), clamp_y(y1.ceil()));
        for x in x0..=x1 {
            out.set(x, y0, CLUSTER_BOX);
            out.set(x, y1, CLUSTER_BOX);
        }
        for y in y0..=y1 {
            out.set(x0, y, CLUSTER_BOX);
            out.set(x1, y, CLUSTER_BOX);
        }
    }
    Ok(out)
}
