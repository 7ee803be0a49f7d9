//! Feature-space diagnostics: penultimate-layer embeddings, exact t-SNE, and
//! nearest-neighbour inspection of misclassified patches.

mod embed;
mod neighbors;
mod tsne;

pub use embed::{collect_embeddings, EmbeddingSet, FEATURE_WIDTH};
pub use neighbors::{
    feature_neighbors, misclassification_report, MisclassificationReport, Misclassified, NeighborFilter,
};
pub use tsne::{
    calibrate_affinities, joint_affinities, kl_divergence, tsne_project, tsne_project_from, ProjectedPoints, TsneConfig,
};

use std::fmt::Write as _;

/// Tab-separated `x, y, class, true, predicted` rows for plotting.
pub fn projection_tsv(set: &EmbeddingSet, projected: &ProjectedPoints) -> String {
    let mut s = String::from("x\ty\tclass\ttrue\tpredicted\n");
    for (i, p) in projected.points.iter().enumerate() {
        let _ = writeln!(
            s,
            "{:.6}\t{:.6}\t{}\t{}\t{}",
            p[0], p[1], set.classes[i], set.true_labels[i], set.predicted[i]
        );
    }
    s
}
