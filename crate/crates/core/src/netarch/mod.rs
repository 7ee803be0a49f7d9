//! The shared Detector/Segmentator architecture: construction, whole-network
//! forward/backward, penultimate features, and the binary weight file.

mod infer;
mod io;
mod network;
mod spec;

pub use infer::{InferenceNet, Workspace};
pub use io::{
    decode_weights, encode_weights, load_weights, load_weights_expecting, save_weights, WEIGHT_FILE_MAGIC,
    WEIGHT_FILE_VERSION,
};
pub use network::{build_network, BatchNormLayer, ConvLayer, DenseLayer, ForwardCache, Gradients, NetworkWeights};
pub use spec::{
    NetworkSpec, CLASS_COUNT, CONV_LAYERS, DEFAULT_DROPOUT_KEEP, DEFAULT_FILTERS, DEFAULT_PATCH_SIZE, FC_UNITS,
    POOLED_LAYERS,
};
