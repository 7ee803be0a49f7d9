use crate::error::{Error, Result};
use crate::imaging::{fill_patch, foreground_mask, otsu_threshold, tile_image, BinaryMask, GrayImage};
use crate::netarch::{InferenceNet, NetworkWeights};

/// Fraction of Otsu-background pixels above which a tile is skipped.
pub const DEFAULT_SKIP_FRACTION: f64 = 0.99;

/// Positive-class probability at or above which a patch is called positive.
pub const DECISION_THRESHOLD: f64 = 0.5;

/// Patches classified per network call.
const BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Roi {
    /// Top-left corner `(x, y)` of the tile.
    pub origin: (usize, usize),
    pub probability: f64,
}

/// Tiles the Detector called positive.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiSet {
    pub patch_size: usize,
    pub rois: Vec<Roi>,
    pub tiles_total: usize,
    /// Tiles that survived background exclusion and went through the network.
    pub tiles_evaluated: usize,
}

impl RoiSet {
    pub fn is_empty(&self) -> bool {
        self.rois.is_empty()
    }

    /// Pixels covered by at least one ROI.
    pub fn coverage(&self, width: usize, height: usize) -> BinaryMask {
        let mut m = BinaryMask::new(width, height);
        let n = self.patch_size;
        for roi in &self.rois {
            let (x0, y0) = roi.origin;
            for y in y0..(y0 + n).min(height) {
                for x in x0..(x0 + n).min(width) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    /// Positive-class probability per pixel; meaningful where `evaluated`.
    pub probability: Vec<f32>,
    pub evaluated: BinaryMask,
    pub mask: BinaryMask,
    /// Segmentator forward evaluations, one per evaluated pixel.
    pub forward_passes: usize,
}

fn check_patch_size(weights: &NetworkWeights, n: usize, role: &str) -> Result<()> {
    if weights.spec.patch_size != n {
        return Err(Error::SpecMismatch(format!(
            "{role} weights expect {} px patches, pipeline uses {n} px",
            weights.spec.patch_size
        )));
    }
    Ok(())
}

/// Classifies `points` (patch centers) in batches; returns one probability
/// per point.
fn classify_centers(net: &InferenceNet, image: &GrayImage, points: &[(usize, usize)]) -> Vec<f64> {
    let n = net.spec().patch_size;
    let mut ws = net.workspace();
    let mut buf = vec![0.0f32; BATCH * n * n];
    let mut out = Vec::with_capacity(points.len());
    for chunk in points.chunks(BATCH) {
        let buf = &mut buf[..chunk.len() * n * n];
        for (&(x, y), slot) in chunk.iter().zip(buf.chunks_exact_mut(n * n)) {
            fill_patch(image, x, y, n, slot);
        }
        out.extend(net.positive_probabilities(buf, &mut ws));
    }
    out
}

/// Tiles the image, drops tiles that are almost entirely Otsu background,
/// and keeps the tiles the Detector calls positive.
pub fn run_detector(image: &GrayImage, detector: &NetworkWeights, n: usize, skip_fraction: f64) -> Result<RoiSet> {
    check_patch_size(detector, n, "detector")?;
    let grid = tile_image(image, n)?;
    let fg = foreground_mask(image, otsu_threshold(image));
    let limit = skip_fraction * (n * n) as f64;
    let kept: Vec<(usize, usize)> = grid
        .origins
        .iter()
        .copied()
        .filter(|&(x0, y0)| {
            let background = (y0..y0 + n)
                .map(|y| (x0..x0 + n).filter(|&x| !fg.get(x, y)).count())
                .sum::<usize>();
            (background as f64) <= limit
        })
        .collect();
    let net = InferenceNet::new(detector)?;
    let half = n / 2;
    let centers: Vec<(usize, usize)> = kept.iter().map(|&(x, y)| (x + half, y + half)).collect();
    let probs = classify_centers(&net, image, &centers);
    let rois = kept
        .iter()
        .zip(probs)
        .filter(|(_, p)| *p >= DECISION_THRESHOLD)
        .map(|(&origin, probability)| Roi { origin, probability })
        .collect();
    Ok(RoiSet {
        patch_size: n,
        rois,
        tiles_total: grid.origins.len(),
        tiles_evaluated: kept.len(),
    })
}

/// Classifies every pixel of the union of ROIs once, from its centered patch.
pub fn run_segmentator(image: &GrayImage, rois: &RoiSet, segmentator: &NetworkWeights) -> Result<SegmentationResult> {
    check_patch_size(segmentator, rois.patch_size, "segmentator")?;
    let (w, h) = (image.width(), image.height());
    if let Some(r) = rois
        .rois
        .iter()
        .find(|r| r.origin.0 + rois.patch_size > w || r.origin.1 + rois.patch_size > h)
    {
        return Err(Error::Dimension(format!(
            "ROI at {:?} lies outside the {w}x{h} image",
            r.origin
        )));
    }
    let evaluated = rois.coverage(w, h);
    let points: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| evaluated.get(x, y))
        .collect();
    let mut probability = vec![0.0f32; w * h];
    let mut mask = BinaryMask::new(w, h);
    if !points.is_empty() {
        let net = InferenceNet::new(segmentator)?;
        for (&(x, y), p) in points.iter().zip(classify_centers(&net, image, &points)) {
            probability[y * w + x] = p as f32;
            if p >= DECISION_THRESHOLD {
                mask.set(x, y, true);
            }
        }
    }
    Ok(SegmentationResult {
        probability,
        evaluated,
        mask,
        forward_passes: points.len(),
    })
}
