use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use super::stages::{run_detector, run_segmentator, RoiSet, SegmentationResult, DEFAULT_SKIP_FRACTION};
use crate::error::Result;
use crate::imaging::{
    connected_components, detect_clusters_with, ClusterReport, ClusterRule, GrayImage, LabeledRegions, PlantedCluster,
    PlantedMc,
};
use crate::netarch::{load_weights, NetworkWeights};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub patch_size: usize,
    pub skip_fraction: f64,
    pub cluster_rule: ClusterRule,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            patch_size: crate::netarch::DEFAULT_PATCH_SIZE,
            skip_fraction: DEFAULT_SKIP_FRACTION,
            cluster_rule: ClusterRule::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Timing {
    pub detector_seconds: f64,
    pub segmentator_seconds: f64,
    /// Detector plus Segmentator network evaluations.
    pub forward_passes: usize,
}

impl Timing {
    pub fn patches_per_second(&self) -> f64 {
        let t = self.detector_seconds + self.segmentator_seconds;
        if t > 0.0 {
            self.forward_passes as f64 / t
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub rois: RoiSet,
    pub segmentation: SegmentationResult,
    pub regions: LabeledRegions,
    pub report: ClusterReport,
    pub timing: Timing,
}

/// Detector triage, Segmentator pass over the ROIs, labeling and cluster
/// detection. Errors name the stage they came from.
pub fn run_pipeline(
    image: &GrayImage,
    detector: &NetworkWeights,
    segmentator: &NetworkWeights,
    config: &PipelineConfig,
) -> Result<PipelineOutput> {
    let t = Instant::now();
    let rois =
        run_detector(image, detector, config.patch_size, config.skip_fraction).map_err(|e| e.in_stage("detector"))?;
    let detector_seconds = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let segmentation = run_segmentator(image, &rois, segmentator).map_err(|e| e.in_stage("segmentator"))?;
    let segmentator_seconds = t.elapsed().as_secs_f64();
    let regions = connected_components(&segmentation.mask);
    let report = detect_clusters_with(&regions, image.pixel_spacing_mm, config.cluster_rule)
        .map_err(|e| e.in_stage("clustering"))?;
    let timing = Timing {
        detector_seconds,
        segmentator_seconds,
        forward_passes: rois.tiles_evaluated + segmentation.forward_passes,
    };
    Ok(PipelineOutput {
        rois,
        segmentation,
        regions,
        report,
        timing,
    })
}

/// [`run_pipeline`] with both networks read from weight files.
pub fn run_pipeline_files(
    image: &GrayImage,
    detector_path: impl AsRef<Path>,
    segmentator_path: impl AsRef<Path>,
    config: &PipelineConfig,
) -> Result<PipelineOutput> {
    let detector = load_weights(detector_path).map_err(|e| e.in_stage("load detector"))?;
    let segmentator = load_weights(segmentator_path).map_err(|e| e.in_stage("load segmentator"))?;
    run_pipeline(image, &detector, &segmentator, config)
}

/// Component list, then cluster boxes, then run statistics.
pub fn report_text(output: &PipelineOutput) -> String {
    let mut s = String::new();
    let r = &output.report;
    let _ = writeln!(s, "components {}", r.components.len());
    for (i, ((x, y), area)) in r.components.iter().enumerate() {
        let _ = writeln!(s, "  mc {} x={:.2} y={:.2} area={}", i + 1, x, y, area);
    }
    let _ = writeln!(s, "clusters {} window_px={}", r.clusters.len(), r.window_px);
    for (i, c) in r.clusters.iter().enumerate() {
        let (x0, y0, x1, y1) = c.bbox;
        let _ = writeln!(
            s,
            "  cluster {} x0={:.2} y0={:.2} x1={:.2} y1={:.2} mcs={}",
            i + 1,
            x0,
            y0,
            x1,
            y1,
            c.mc_count()
        );
    }
    let t = &output.timing;
    let _ = writeln!(
        s,
        "tiles total={} evaluated={} positive={}",
        output.rois.tiles_total,
        output.rois.tiles_evaluated,
        output.rois.rois.len()
    );
    let _ = writeln!(
        s,
        "forward_passes {} detector_s={:.2} segmentator_s={:.2} patches_per_s={:.1}",
        t.forward_passes,
        t.detector_seconds,
        t.segmentator_seconds,
        t.patches_per_second()
    );
    s
}

/// Planted clusters for which some reported cluster region holds more than
/// `rule.more_than` of the planted member centroids (within `tolerance_px`).
pub fn recovered_clusters(
    planted: &[PlantedCluster],
    mcs: &[PlantedMc],
    report: &ClusterReport,
    rule: ClusterRule,
    tolerance_px: f64,
) -> usize {
    planted
        .iter()
        .filter(|pc| {
            report.clusters.iter().any(|rc| {
                pc.members
                    .iter()
                    .filter(|&&m| rc.contains(mcs[m].centroid, tolerance_px))
                    .count()
                    > rule.more_than
            })
        })
        .count()
}
