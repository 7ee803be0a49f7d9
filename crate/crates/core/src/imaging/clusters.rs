use super::components::{LabeledRegions, UnionFind};
use super::tiling::axis_origins;
use crate::error::{Error, Result};

/// Windows holding strictly more than `more_than` centroids are flagged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterRule {
    pub window_mm: f64,
    pub more_than: usize,
}

impl Default for ClusterRule {
    /// More than five calcifications per square centimeter.
    fn default() -> Self {
        Self {
            window_mm: 10.0,
            more_than: 5,
        }
    }
}

impl ClusterRule {
    pub fn window_px(&self, pixel_spacing_mm: f64) -> usize {
        ((self.window_mm / pixel_spacing_mm).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterRegion {
    /// Inclusive bounding box `(x0, y0, x1, y1)` of the member centroids.
    pub bbox: (f64, f64, f64, f64),
    /// Distinct components whose centroid lies in one of the merged windows.
    pub members: Vec<u32>,
}

impl ClusterRegion {
    pub fn mc_count(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, (x, y): (f64, f64), tolerance: f64) -> bool {
        let (x0, y0, x1, y1) = self.bbox;
        x >= x0 - tolerance && x <= x1 + tolerance && y >= y0 - tolerance && y <= y1 + tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterReport {
    /// `(centroid, area)` per component, in label order.
    pub components: Vec<((f64, f64), usize)>,
    pub clusters: Vec<ClusterRegion>,
    pub window_px: usize,
}

pub fn detect_clusters(regions: &LabeledRegions, pixel_spacing_mm: f64) -> Result<ClusterReport> {
    detect_clusters_with(regions, pixel_spacing_mm, ClusterRule::default())
}

pub fn detect_clusters_with(
    regions: &LabeledRegions,
    pixel_spacing_mm: f64,
    rule: ClusterRule,
) -> Result<ClusterReport> {
    let centroids = regions.centroids();
    let mut report = cluster_centroids(&centroids, regions.width, regions.height, pixel_spacing_mm, rule)?;
    report.components = regions.components.iter().map(|c| (c.centroid, c.area)).collect();
    Ok(report)
}

/// Slides a square window of side `round(window_mm / spacing)` with stride
/// `side / 4` over the image (last window clamped to the border), flags
/// windows holding more than `rule.more_than` centroids, and merges flagged
/// windows that overlap with positive area. Images smaller than the window
/// are covered by one window anchored at the origin.
pub fn cluster_centroids(
    centroids: &[(f64, f64)],
    width: usize,
    height: usize,
    pixel_spacing_mm: f64,
    rule: ClusterRule,
) -> Result<ClusterReport> {
    if !(pixel_spacing_mm > 0.0 && pixel_spacing_mm.is_finite()) {
        return Err(Error::invalid(format!(
            "pixel spacing must be positive, got {pixel_spacing_mm}"
        )));
    }
    let side = rule.window_px(pixel_spacing_mm);
    let stride = (side / 4).max(1);
    let origins = |extent: usize| {
        if extent > side {
            axis_origins(extent, side, stride)
        } else {
            vec![0]
        }
    };
    let (xs, ys) = (origins(width), origins(height));

    let mut flagged: Vec<((usize, usize), Vec<u32>)> = Vec::new();
    for &y0 in &ys {
        for &x0 in &xs {
            let inside: Vec<u32> = centroids
                .iter()
                .enumerate()
                .filter(|(_, &(x, y))| {
                    x >= x0 as f64 && x < (x0 + side) as f64 && y >= y0 as f64 && y < (y0 + side) as f64
                })
                .map(|(i, _)| i as u32 + 1)
                .collect();
            if inside.len() > rule.more_than {
                flagged.push(((x0, y0), inside));
            }
        }
    }

    let mut sets = UnionFind::new(flagged.len());
    for i in 0..flagged.len() {
        for j in i + 1..flagged.len() {
            let ((ax, ay), _) = flagged[i];
            let ((bx, by), _) = flagged[j];
            if ax.abs_diff(bx) < side && ay.abs_diff(by) < side {
                sets.union(i as u32, j as u32);
            }
        }
    }

    let mut groups: Vec<(u32, Vec<u32>)> = Vec::new();
    for (i, (_, members)) in flagged.iter().enumerate() {
        let root = sets.find(i as u32);
        match groups.iter_mut().find(|(r, _)| *r == root) {
            Some((_, m)) => m.extend(members),
            None => groups.push((root, members.clone())),
        }
    }

    let clusters = groups
        .into_iter()
        .map(|(_, mut members)| {
            members.sort_unstable();
            members.dedup();
            let pts = members.iter().map(|&m| centroids[m as usize - 1]);
            let bbox = pts.fold((f64::MAX, f64::MAX, f64::MIN, f64::MIN), |b, (x, y)| {
                (b.0.min(x), b.1.min(y), b.2.max(x), b.3.max(y))
            });
            ClusterRegion { bbox, members }
        })
        .collect();

    Ok(ClusterReport {
        components: centroids.iter().map(|&c| (c, 0)).collect(),
        clusters,
        window_px: side,
    })
}
