//! Multilayer bootstrap networks.
//!
//! An MBN is a stack of hidden layers, each made of `V` independent
//! k-centroids clusterings, topped by a PCA projection. A clustering picks
//! a random subset of input dimensions and `k` random training points as
//! its centroids; it encodes an input as the one-hot indicator of the
//! nearest centroid. The one-hot outputs of all `V` clusterings are
//! concatenated (a [`SparseCodes`] row) and fed to the next layer, whose
//! `k` is smaller. The bottom layer compares by squared Euclidean distance,
//! upper layers by inner product.
//!
//! Training of the clusterings in a layer runs in parallel. Each clustering
//! draws from its own random stream derived from `(seed, layer, index)`,
//! so models do not depend on the number of worker threads.

mod clustering;
mod config;
mod io;
mod layer;
mod model;
mod pca;

pub use clustering::{train_clustering, Centroids, KCentroidsClustering, LayerInput, Metric, Sample};
pub use config::{plan_k_schedule, MbnConfig};
pub use io::{read_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use layer::{train_layer, MbnLayer, SparseCodes};
pub use model::MbnModel;
pub use pca::{pca_fit, pca_fit_codes, Pca};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random stream for clustering `index` of layer `layer`.
pub fn clustering_rng(seed: u64, layer: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((layer as u64) << 32) | index as u64);
    rng
}
