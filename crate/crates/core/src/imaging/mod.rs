//! Classical image primitives: netpbm I/O, Otsu thresholding, tiling, patch
//! extraction, connected components, cluster detection, and the synthetic
//! phantom generator.

mod clusters;
mod components;
mod dihedral;
mod image;
mod netpbm;
mod otsu;
mod patch;
mod phantom;
mod tiling;

pub use clusters::{
    cluster_centroids, detect_clusters, detect_clusters_with, ClusterRegion, ClusterReport, ClusterRule,
};
pub use components::{connected_components, Component, LabeledRegions};
pub use dihedral::{dihedral_source, dihedral_target, transform_square, DIHEDRAL_ORDER, ROT90};
pub use image::{BinaryMask, GrayImage, RgbImage, DEFAULT_PIXEL_SPACING_MM};
pub use netpbm::{decode_pgm, encode_pgm, read_mask_pgm, read_pgm, read_ppm, write_mask_pgm, write_pgm, write_ppm};
pub use otsu::{foreground_mask, otsu_threshold, OtsuThreshold};
pub use patch::{extract_patch, fill_patch, reflect_index};
pub use phantom::{
    generate_phantom, read_sidecar, sidecar_text, write_sidecar, Phantom, PhantomConfig, PlantedCluster, PlantedMc,
    MIN_PHANTOM_SIDE,
};
pub use tiling::{axis_origins, tile_extent, tile_image, TileGrid};
