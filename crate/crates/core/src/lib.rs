//! Multi-label cluster discrimination at desk scale.
//!
//! Offline spherical k-means produces pseudo-classes, every sample takes its
//! top-`l` most similar centers as positive labels, and an encoder plus
//! normalized class centers are trained with the CD, MLC or MLCD loss under
//! negative class sampling. Frozen embeddings are evaluated with k-NN,
//! a linear probe, positive/negative similarity statistics and a PCA-to-RGB
//! projection.

pub mod checkpoint;
pub mod cli;
pub mod clustering;
pub mod config;
pub mod error;
pub mod eval;
pub mod fmat;
pub mod labeling;
pub mod loss;
pub mod sampler;
pub mod selftest;
pub mod synthetic;
pub mod tensor;
pub mod trainer;
