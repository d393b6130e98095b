//! Detection of AI-generated images by fusing natural-scene statistics
//! (MSCN + GLCM Haralick), multi-scale uniform LBP texture statistics and
//! semantic embeddings, with classical classifiers and the evaluation
//! machinery around them.

pub mod analysis;
pub mod classifiers;
pub mod embedding;
pub mod error;
pub mod fusion;
pub mod harness;
pub mod imaging;
pub mod lbp;
pub mod metrics;
pub mod nss;

pub use error::{Error, Result};
