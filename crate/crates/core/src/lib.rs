//! Cluster-entropy selection of the most diverse group of feature vectors.
//!
//! A target domain is a set of groups (whole slide images), each holding many
//! patch feature vectors. Features are reduced with [`pca`], clustered with
//! k-means++ and Lloyd refinement ([`cluster`]), and every group is scored by
//! the Shannon entropy of its patches' distribution over the global clusters
//! ([`entropy`]). The highest-entropy group is the one whose patches cover the
//! target distribution best and is the one to annotate.
//!
//! [`simbench`] generates synthetic source/target tables with domain and
//! class-prior shift, and [`eval`] retrains a linear classifier with a chosen
//! group and scores it with macro precision/recall/Dice/IoU.
//!
//! The crate is `no_std` and only needs `alloc`; file formats and the CLI live
//! in the `clustent` crate.
#![no_std]

extern crate alloc;

pub mod cluster;
pub mod dataset;
pub mod entropy;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod pca;
pub mod pipeline;
pub mod rng;
pub mod simbench;
pub mod stats;

pub use cluster::{Assignment, KMeansModel, KMeansParams};
pub use dataset::{ClassHistogram, Domain, FeatureTable, PatchRecord};
pub use entropy::{GroupEntropy, RankedSelection, Slice};
pub use error::{Error, Result};
pub use pca::PcaModel;
pub use rng::Rng;
