//! End-to-end inference: background exclusion, Detector triage, Segmentator
//! pass, cluster report and overlay rendering.

mod config;
mod overlay;
mod run;
mod stages;

pub use config::KeyValueConfig;
pub use overlay::{render_overlay, CLUSTER_BOX, MC_TINT};
pub use run::{
    recovered_clusters, report_text, run_pipeline, run_pipeline_files, PipelineConfig, PipelineOutput, Timing,
};
pub use stages::{
    run_detector, run_segmentator, Roi, RoiSet, SegmentationResult, DECISION_THRESHOLD, DEFAULT_SKIP_FRACTION,
};
