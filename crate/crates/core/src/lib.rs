//! Speaker-independent source separation by deep clustering with
//! multilayer bootstrap network (MBN) denoising of the embedding vectors.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! 1. [`signal`]: STFT analysis / overlap-add synthesis and WAV I/O.
//! 2. [`features`]: per T-F unit log-magnitudes of both channels plus the
//!    cosine of the interchannel phase difference.
//! 3. [`dpcl`]: the deep-clustering affinity objective, ground-truth
//!    indicator matrices and the [`dpcl::Embedder`] interface.
//! 4. [`mbn`]: the bootstrap-network stack that turns embeddings into
//!    low-dimensional m-vectors.
//! 5. [`separate`]: k-means on m-vectors, binary masks and resynthesis.
//! 6. [`metrics`]: SI-SDR, permutation-invariant scoring, accuracy and NMI.
//!
//! [`simulate`] generates two-channel test mixtures, [`tensor`] and
//! [`config`] define the on-disk formats shared with the command-line tool.

pub mod config;
pub mod dpcl;
mod error;
pub mod features;
pub mod linalg;
pub mod mbn;
pub mod metrics;
pub mod separate;
pub mod signal;
pub mod simulate;
pub mod tensor;

pub use error::{Error, Result};
