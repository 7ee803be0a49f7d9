//! Patch taxonomy, patch index construction, balanced minibatch sampling and
//! dihedral augmentation.

mod index;
mod sampler;
mod set;
mod split;
mod taxonomy;

pub use index::{build_patch_index, LabeledImage, ManifestEntry, PatchIndex, PatchRecord, SamplingConfig};
pub use sampler::{dihedral_augment, sample_minibatch, Minibatch};
pub use set::PatchSet;
pub use split::seeded_split;
pub use taxonomy::{assign_patch_class, chessboard_distance, derive_labels, PatchClass, Target, NEAR_CENTER_RADIUS};
